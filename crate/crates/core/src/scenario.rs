//! Scenario files.
//!
//! A scenario is a TOML document carrying `schema_version`, the electrical
//! network, the communication graph, controller settings, an event timeline
//! and run settings. Node ids in files are 1-based; everything in memory is
//! 0-based.
//!
//! ```toml
//! schema_version = 1
//!
//! [metadata]
//! name = "demo"
//!
//! [network]
//! rated_voltage = 380.0
//! buses = [
//!     { capacity = 30.0, load_resistance = 50.0, filter_inductance = 2e-3, filter_capacitance = 3e-3 },
//!     { capacity = 20.0, load_resistance = 26.0, filter_inductance = 2e-3, filter_capacitance = 3e-3 },
//! ]
//! lines = [{ from = 1, to = 2, resistance = 2.0, inductance = 20e-6 }]
//!
//! [graph]
//! edges = [[1, 2, 20.0]]
//!
//! [controller]
//! mode = "uniform"
//! theta = 1.0
//!
//! [[timeline]]
//! time = 1.0
//! event = "set_theta"
//! value = 0.5
//!
//! [run]
//! duration = 2.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{ControlMode, ControllerConfig, Event};
use crate::error::{Error, Result};
use crate::model::MicrogridModel;
use crate::plant::{DgRatings, ElectricalNetwork, Line};
use crate::sim::{ScenarioSpec, TimedEvent, DEFAULT_DT, DEFAULT_SAMPLE_INTERVAL};
use crate::topology::{CommGraph, NodePartition};

pub const SCHEMA_VERSION: u32 = 1;

pub const CASE1: &str = include_str!("../scenarios/case1.scenario");
pub const CASE2: &str = include_str!("../scenarios/case2.scenario");
pub const CASE3: &str = include_str!("../scenarios/case3.scenario");

/// Bundled scenario text by name (`case1`, `case2`, `case3`).
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "case1" => Some(CASE1),
        "case2" => Some(CASE2),
        "case3" => Some(CASE3),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub metadata: Metadata,
    pub network: NetworkSection,
    pub graph: GraphSection,
    pub controller: ControllerSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timeline: Vec<TimelineEntry>,
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Volt.
    pub rated_voltage: f64,
    pub buses: Vec<BusEntry>,
    pub lines: Vec<LineEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    /// Converter current capacity `I*`, ampere.
    pub capacity: f64,
    /// Ohm; omitted for an unloaded bus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_resistance: Option<f64>,
    /// Henry.
    pub filter_inductance: f64,
    /// Farad.
    pub filter_capacitance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineEntry {
    pub from: usize,
    pub to: usize,
    /// Ohm.
    pub resistance: f64,
    /// Henry.
    pub inductance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// `[i, j, a_ij]` undirected edges.
    pub edges: Vec<(usize, usize, f64)>,
    /// Critical node ids; omitted means every node is critical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub mode: ControlMode,
    pub theta: f64,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default = "one")]
    pub current_gain: f64,
    #[serde(default = "one")]
    pub voltage_gain: f64,
    #[serde(default)]
    pub droop: DroopPolicy,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum DroopPolicy {
    /// `r_i = factor * V_rat / I*_i`.
    RatingInverse { factor: f64 },
    /// Ohm, one per converter.
    Explicit { values: Vec<f64> },
}

impl Default for DroopPolicy {
    fn default() -> Self {
        DroopPolicy::RatingInverse { factor: 0.05 }
    }
}

/// One timed event; `time` is in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimelineEntry {
    SetTheta {
        time: f64,
        value: f64,
    },
    SetOmega {
        time: f64,
        value: f64,
    },
    UnplugDg {
        time: f64,
        node: usize,
        #[serde(default = "yes")]
        relay: bool,
    },
    PlugDg {
        time: f64,
        node: usize,
    },
    SetLoad {
        time: f64,
        node: usize,
        /// Ohm; omit to disconnect the load.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resistance: Option<f64>,
    },
}

impl TimelineEntry {
    pub fn time(&self) -> f64 {
        match *self {
            TimelineEntry::SetTheta { time, .. }
            | TimelineEntry::SetOmega { time, .. }
            | TimelineEntry::UnplugDg { time, .. }
            | TimelineEntry::PlugDg { time, .. }
            | TimelineEntry::SetLoad { time, .. } => time,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_sample_interval() -> f64 {
    DEFAULT_SAMPLE_INTERVAL
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_v: Option<f64>,
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Schema { message: e.to_string() })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema {
                message: format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", file.schema_version),
            });
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Schema { message: e.to_string() })
    }

    /// Validates cross-references and physical parameters and builds the
    /// in-memory scenario.
    pub fn build(&self) -> Result<ScenarioSpec> {
        let n = self.network.buses.len();
        let node = |context: String, id: usize| {
            if (1..=n).contains(&id) {
                Ok(id - 1)
            } else {
                Err(Error::DanglingReference { context, node: id, count: n })
            }
        };
        let lines = self
            .network
            .lines
            .iter()
            .enumerate()
            .map(|(k, l)| {
                Ok(Line {
                    from: node(format!("line {}", k + 1), l.from)?,
                    to: node(format!("line {}", k + 1), l.to)?,
                    resistance: l.resistance,
                    inductance: l.inductance,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let loads = self
            .network
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| match b.load_resistance {
                None => Ok(0.0),
                Some(r) if r > 0.0 && r.is_finite() => Ok(1.0 / r),
                Some(r) => Err(Error::invalid("load_resistance", format!("bus {} has {r}; must be finite and > 0", i + 1))),
            })
            .collect::<Result<Vec<_>>>()?;
        let collect = |f: fn(&BusEntry) -> f64| self.network.buses.iter().map(f).collect::<Vec<_>>();
        let network = ElectricalNetwork::new(
            lines,
            loads,
            collect(|b| b.filter_inductance),
            collect(|b| b.filter_capacitance),
        )?;

        let capacity = collect(|b| b.capacity);
        let v_rat = self.network.rated_voltage;
        let ratings = match &self.controller.droop {
            DroopPolicy::RatingInverse { factor } => DgRatings::with_rating_inverse_droop(capacity, v_rat, *factor)?,
            DroopPolicy::Explicit { values } => DgRatings::new(capacity, values.clone(), v_rat)?,
        };

        let edges = self
            .graph
            .edges
            .iter()
            .map(|&(i, j, w)| Ok((node("graph edge".into(), i)?, node("graph edge".into(), j)?, w)))
            .collect::<Result<Vec<_>>>()?;
        let graph = CommGraph::from_edges(n, &edges)?;
        let partition = match &self.graph.critical {
            None => NodePartition::all_critical(n),
            Some(ids) => {
                let idx = ids.iter().map(|&id| node("critical set".into(), id)).collect::<Result<Vec<_>>>()?;
                NodePartition::new(n, &idx)?
            }
        };
        if self.controller.mode == ControlMode::Uniform && !partition.ordinary().is_empty() {
            return Err(Error::invalid("controller.mode", "uniform mode cannot have ordinary nodes"));
        }
        let model = MicrogridModel::new(network, ratings, graph, partition)?;

        let c = &self.controller;
        let controller = ControllerConfig::new(c.mode, c.theta, c.omega).with_gains(c.current_gain, c.voltage_gain);
        let timeline = self
            .timeline
            .iter()
            .map(|e| {
                let ctx = || format!("event at t = {}", e.time());
                let event = match *e {
                    TimelineEntry::SetTheta { value, .. } => Event::SetTheta(value),
                    TimelineEntry::SetOmega { value, .. } => Event::SetOmega(value),
                    TimelineEntry::UnplugDg { node: id, relay, .. } => Event::UnplugDg {
                        node: node(ctx(), id)?,
                        relay,
                    },
                    TimelineEntry::PlugDg { node: id, .. } => Event::PlugDg { node: node(ctx(), id)? },
                    TimelineEntry::SetLoad { node: id, resistance, .. } => Event::SetLoad {
                        node: node(ctx(), id)?,
                        resistance: resistance.unwrap_or(f64::INFINITY),
                    },
                };
                Ok(TimedEvent { time: e.time(), event })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = ScenarioSpec {
            name: self.metadata.name.clone(),
            description: self.metadata.description.clone(),
            model,
            controller,
            timeline,
            duration: self.run.duration,
            sample_interval: self.run.sample_interval,
            dt: self.run.dt,
            gamma_v: self.analysis.gamma_v,
        };
        spec.validate()?;
        // Surface bad controller settings at load time rather than at t = 0.
        crate::control::Controller::new(&spec.model, spec.controller.clone())?;
        Ok(spec)
    }
}

pub fn parse_scenario_str(text: &str) -> Result<ScenarioSpec> {
    ScenarioFile::from_toml(text)?.build()
}

/// Reads a scenario from disk. `case1`, `case2` and `case3` name the bundled
/// scenarios when no such file exists.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => match path.to_str().and_then(bundled) {
            Some(t) => t.to_string(),
            None => return Err(Error::Io(format!("{}: {e}", path.display()))),
        },
    };
    parse_scenario_str(&text)
}
