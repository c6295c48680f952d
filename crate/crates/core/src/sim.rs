//! Fixed-step closed-loop simulation.
//!
//! The plant and controller states are packed into one flat vector
//! `[I_line | I_conv | V_bus | delta_I | delta_V | v_est]` and advanced with
//! classical RK4. The step grid is cut at every event and sample time, so
//! parameters never change inside a step.

use std::io::Write;

use nalgebra::DVector;
use serde::{Serialize, Serializer};

use crate::analysis::DeviationReport;
use crate::control::{ControlMode, Controller, ControllerConfig, ControllerState, CtrlSlices, CtrlSlicesMut, Event, Scratch};
use crate::error::{Error, Result};
use crate::model::MicrogridModel;
use crate::plant::{plant_derivatives_into, steady_state_oracle, OracleMode, PlantSlices, PlantSlicesMut, PlantState};

pub const DEFAULT_DT: f64 = 1e-6;
pub const DEFAULT_SAMPLE_INTERVAL: f64 = 1e-3;
pub const DEFAULT_SETTLE_HORIZON: f64 = 10.0;
/// Normalized derivative bound (1/s) for declaring a state settled.
pub const SETTLE_TOL: f64 = 1e-6;
/// How long the bound must hold, in seconds.
pub const SETTLE_WINDOW: f64 = 0.2;
pub const BLOWUP_LIMIT: f64 = 1e9;

/// Tolerance used when splitting an interval into whole steps.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent {
    pub time: f64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub description: String,
    pub model: MicrogridModel,
    pub controller: ControllerConfig,
    pub timeline: Vec<TimedEvent>,
    pub duration: f64,
    pub sample_interval: f64,
    pub dt: f64,
    /// Admissible MVDR used by the design helpers.
    pub gamma_v: Option<f64>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidTimeline { reason });
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration {} must be finite and > 0", self.duration));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("{} must be > 0", self.dt)));
        }
        if !(self.sample_interval >= self.dt) {
            return Err(Error::invalid(
                "sample_interval",
                format!("{} is shorter than the step {}", self.sample_interval, self.dt),
            ));
        }
        let mut last = f64::NEG_INFINITY;
        for e in &self.timeline {
            if !(e.time >= 0.0 && e.time < self.duration) {
                return bad(format!("event at t = {} is outside [0, {})", e.time, self.duration));
            }
            if e.time <= last {
                return bad(format!("event times must be strictly increasing (t = {} after {last})", e.time));
            }
            last = e.time;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    m: usize,
    n: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.m + 5 * self.n
    }

    fn split<'a>(&self, x: &'a [f64]) -> (PlantSlices<'a>, CtrlSlices<'a>) {
        let (i_line, rest) = x.split_at(self.m);
        let (i_conv, rest) = rest.split_at(self.n);
        let (v_bus, rest) = rest.split_at(self.n);
        let (delta_i, rest) = rest.split_at(self.n);
        let (delta_v, v_est) = rest.split_at(self.n);
        (PlantSlices { i_line, i_conv, v_bus }, CtrlSlices { delta_i, delta_v, v_est })
    }

    fn split_mut<'a>(&self, x: &'a mut [f64]) -> (PlantSlicesMut<'a>, CtrlSlicesMut<'a>) {
        let (i_line, rest) = x.split_at_mut(self.m);
        let (i_conv, rest) = rest.split_at_mut(self.n);
        let (v_bus, rest) = rest.split_at_mut(self.n);
        let (delta_i, rest) = rest.split_at_mut(self.n);
        let (delta_v, v_est) = rest.split_at_mut(self.n);
        (PlantSlicesMut { i_line, i_conv, v_bus }, CtrlSlicesMut { delta_i, delta_v, v_est })
    }

    fn pack(&self, plant: &PlantState, ctrl: &ControllerState) -> Vec<f64> {
        [&plant.i_line, &plant.i_conv, &plant.v_bus, &ctrl.delta_i, &ctrl.delta_v, &ctrl.v_est]
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }

    fn unpack(&self, x: &[f64]) -> (PlantState, ControllerState) {
        let (p, c) = self.split(x);
        let v = DVector::from_column_slice;
        (
            PlantState {
                i_line: v(p.i_line),
                i_conv: v(p.i_conv),
                v_bus: v(p.v_bus),
            },
            ControllerState {
                delta_i: v(c.delta_i),
                delta_v: v(c.delta_v),
                v_est: v(c.v_est),
            },
        )
    }
}

/// Closed-loop vector field at `x`.
fn field(model: &MicrogridModel, ctrl: &Controller, layout: Layout, x: &[f64], dx: &mut [f64], u: &mut [f64], scratch: &mut Scratch) {
    let (xp, xc) = layout.split(x);
    let (dp, dc) = layout.split_mut(dx);
    ctrl.output_into(xp.i_conv, xc, u);
    let PlantSlicesMut { i_line, i_conv, v_bus } = dp;
    plant_derivatives_into(&model.network, ctrl.plugged(), xp, u, PlantSlicesMut { i_line, i_conv, v_bus: &mut *v_bus });
    ctrl.derivatives_into(xp.i_conv, v_bus, xc, dc, scratch);
}

#[derive(Debug, Clone)]
struct Workspace {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    u: Vec<f64>,
    scratch: Scratch,
}

impl Workspace {
    fn new(layout: Layout) -> Self {
        let z = vec![0.0; layout.len()];
        Self {
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: z,
            u: vec![0.0; layout.n],
            scratch: Scratch::new(layout.n),
        }
    }
}

/// One RK4 step in place. Returns the normalized derivative norm at the
/// start of the step.
fn rk4(model: &MicrogridModel, ctrl: &Controller, layout: Layout, x: &mut [f64], dt: f64, ws: &mut Workspace, inv_scale: &[f64]) -> f64 {
    let Workspace { k, tmp, u, scratch } = ws;
    let [k1, k2, k3, k4] = k;
    field(model, ctrl, layout, x, k1, u, scratch);
    for c in 0..x.len() {
        tmp[c] = x[c] + 0.5 * dt * k1[c];
    }
    field(model, ctrl, layout, tmp, k2, u, scratch);
    for c in 0..x.len() {
        tmp[c] = x[c] + 0.5 * dt * k2[c];
    }
    field(model, ctrl, layout, tmp, k3, u, scratch);
    for c in 0..x.len() {
        tmp[c] = x[c] + dt * k3[c];
    }
    field(model, ctrl, layout, tmp, k4, u, scratch);
    let mut norm = 0.0_f64;
    for c in 0..x.len() {
        x[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        norm = norm.max((k1[c] * inv_scale[c]).abs());
    }
    norm
}

fn check_blowup(x: &[f64]) -> Result<()> {
    let magnitude = x.iter().fold(0.0_f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    if magnitude > BLOWUP_LIMIT {
        Err(Error::NumericalBlowup { magnitude })
    } else {
        Ok(())
    }
}

/// Advances `(plant, ctrl)` by one RK4 step of length `dt`.
pub fn step(model: &MicrogridModel, controller: &Controller, plant: &PlantState, ctrl: &ControllerState, dt: f64) -> Result<(PlantState, ControllerState)> {
    let layout = Layout {
        m: model.network.line_count(),
        n: model.bus_count(),
    };
    let mut x = layout.pack(plant, ctrl);
    let mut ws = Workspace::new(layout);
    let inv_scale = vec![0.0; layout.len()];
    rk4(model, controller, layout, &mut x, dt, &mut ws, &inv_scale);
    check_blowup(&x)?;
    Ok(layout.unpack(&x))
}

/// A closed loop being advanced in time.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: MicrogridModel,
    controller: Controller,
    layout: Layout,
    x: Vec<f64>,
    t: f64,
    dt: f64,
    ws: Workspace,
    inv_scale: Vec<f64>,
    /// Start of the current run of steps below [`SETTLE_TOL`].
    quiet_since: Option<f64>,
}

impl Simulator {
    /// Cold start: rated bus voltages, zero currents and integrators,
    /// observers at the bus voltages.
    pub fn new(model: MicrogridModel, config: ControllerConfig, dt: f64) -> Result<Self> {
        let controller = Controller::new(&model, config)?;
        let mut plant = PlantState::zeros(&model.network);
        plant.v_bus.fill(model.rated_voltage());
        let ctrl = ControllerState::cold(&plant.v_bus);
        Self::from_state(model, controller, &plant, &ctrl, dt)
    }

    pub fn from_state(model: MicrogridModel, controller: Controller, plant: &PlantState, ctrl: &ControllerState, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("{dt} must be finite and > 0")));
        }
        let layout = Layout {
            m: model.network.line_count(),
            n: model.bus_count(),
        };
        let v_rat = model.rated_voltage();
        let i_scale = model.ratings.current_capacity().iter().fold(0.0_f64, |m, &c| m.max(c));
        let inv_scale = (0..layout.len())
            .map(|c| if c < layout.m + layout.n { 1.0 / i_scale } else { 1.0 / v_rat })
            .collect();
        Ok(Self {
            x: layout.pack(plant, ctrl),
            ws: Workspace::new(layout),
            model,
            controller,
            layout,
            t: 0.0,
            dt,
            inv_scale,
            quiet_since: None,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn model(&self) -> &MicrogridModel {
        &self.model
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn state(&self) -> (PlantState, ControllerState) {
        self.layout.unpack(&self.x)
    }

    /// True once the normalized derivative has stayed below [`SETTLE_TOL`]
    /// for [`SETTLE_WINDOW`] seconds.
    pub fn is_settled(&self) -> bool {
        self.quiet_since.is_some_and(|t0| self.t - t0 >= SETTLE_WINDOW - GRID_EPS)
    }

    pub fn settled_since(&self) -> Option<f64> {
        self.quiet_since
    }

    fn advance_segment(&mut self, t_end: f64) -> Result<()> {
        let len = t_end - self.t;
        if len <= 0.0 {
            return Ok(());
        }
        let steps = ((len / self.dt) - GRID_EPS).ceil().max(1.0) as usize;
        let h = len / steps as f64;
        let t0 = self.t;
        for k in 0..steps {
            let t = t0 + k as f64 * h;
            let norm = rk4(&self.model, &self.controller, self.layout, &mut self.x, h, &mut self.ws, &self.inv_scale);
            if norm < SETTLE_TOL {
                self.quiet_since.get_or_insert(t);
            } else {
                self.quiet_since = None;
            }
        }
        self.t = t_end;
        check_blowup(&self.x).map_err(|e| e.at_time(self.t))
    }

    /// Integrates up to `t_end`, landing exactly on it.
    pub fn advance_to(&mut self, t_end: f64) -> Result<()> {
        self.advance_segment(t_end)
    }

    /// Integrates until settled or until `t_max`, checking every
    /// `check_interval` seconds.
    pub fn advance_until_settled(&mut self, t_max: f64, check_interval: f64) -> Result<bool> {
        while self.t < t_max - GRID_EPS {
            let next = (self.t + check_interval).min(t_max);
            self.advance_segment(next)?;
            if self.is_settled() {
                return Ok(true);
            }
        }
        Ok(self.is_settled())
    }

    pub fn apply_event(&mut self, event: &Event) -> Result<()> {
        let (mut plant, mut ctrl) = self.state();
        self.controller
            .apply_event(&mut self.model, &mut plant, &mut ctrl, event)
            .map_err(|e| e.at_time(self.t))?;
        self.x = self.layout.pack(&plant, &ctrl);
        self.quiet_since = None;
        Ok(())
    }

    pub fn sample(&self) -> Sample {
        let (plant, ctrl) = self.state();
        let capacity = self.model.ratings.capacity_vector();
        Sample {
            t: self.t,
            ipu: plant.i_conv.component_div(&capacity).iter().copied().collect(),
            est: self.controller.estimates(ctrl.v_est.as_slice()).iter().copied().collect(),
            v: plant.v_bus.iter().copied().collect(),
            i: plant.i_conv.iter().copied().collect(),
            delta_i: ctrl.delta_i.iter().copied().collect(),
            delta_v: ctrl.delta_v.iter().copied().collect(),
            theta: self.controller.theta(),
            omega: self.controller.omega(),
        }
    }

    /// Steady state the closed loop should converge to under the present
    /// configuration, from the brute-force oracle.
    pub fn predicted_steady_state(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.model.bus_count();
        let plugged = self.controller.plugged();
        let reference = DVector::from_fn(n, |i, _| if plugged[i] { self.controller.reference().i_r[i] } else { 0.0 });
        let balance: Vec<usize> = (0..n).filter(|&i| self.controller.is_regulating(i)).collect();
        let sol = steady_state_oracle(&self.model.network, &self.model.ratings, &reference, OracleMode::Subset(&balance))?;
        Ok((sol.v, sol.i))
    }

    /// Summary of the present state as the end of a phase.
    pub fn summarize(&self, index: usize, start: f64) -> Result<PhaseSummary> {
        let n = self.model.bus_count();
        let (plant, ctrl) = self.state();
        let v_rat = self.model.rated_voltage();
        let capacity = self.model.ratings.current_capacity();
        let plugged = self.controller.plugged().to_vec();
        let plugged_idx: Vec<usize> = (0..n).filter(|&i| plugged[i]).collect();
        let all: Vec<usize> = (0..n).collect();
        let report = DeviationReport::new(&plant.v_bus, &plant.i_conv, capacity, v_rat, &all, &plugged_idx);
        let partition = &self.model.partition;
        let ordinary: Vec<usize> = partition.ordinary().iter().copied().filter(|&k| plugged[k]).collect();
        let critical_report = DeviationReport::new(&plant.v_bus, &plant.i_conv, capacity, v_rat, partition.critical(), &ordinary);
        let regulating: Vec<usize> = (0..n).filter(|&i| self.controller.is_regulating(i)).collect();
        let mean_v = regulating.iter().map(|&i| plant.v_bus[i]).sum::<f64>() / regulating.len() as f64;
        let est = self.controller.estimates(ctrl.v_est.as_slice());
        let observer_error = regulating.iter().map(|&i| (est[i] - mean_v).abs()).fold(0.0, f64::max);
        let (pv, pi) = self.predicted_steady_state()?;
        let cap = DVector::from_column_slice(capacity);
        Ok(PhaseSummary {
            index,
            start,
            end: self.t,
            theta: self.controller.theta(),
            omega: self.controller.omega(),
            mode: self.controller.mode(),
            plugged,
            settled: self.is_settled(),
            settled_since: self.quiet_since,
            critical_mvdr: critical_report.mvdr,
            ordinary_mcdr: if ordinary.is_empty() { None } else { Some(critical_report.mcdr) },
            observer_error,
            report,
            v: plant.v_bus.iter().copied().collect(),
            i: plant.i_conv.iter().copied().collect(),
            ipu: plant.i_conv.component_div(&cap).iter().copied().collect(),
            predicted_v: pv.iter().copied().collect(),
            predicted_i: pi.iter().copied().collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    /// `I / I*`.
    pub ipu: Vec<f64>,
    pub est: Vec<f64>,
    pub delta_i: Vec<f64>,
    pub delta_v: Vec<f64>,
    pub theta: f64,
    pub omega: f64,
}

fn one_based<S: Serializer>(plugged: &[bool], s: S) -> std::result::Result<S::Ok, S::Error> {
    let ids: Vec<usize> = plugged.iter().enumerate().filter(|(_, &p)| p).map(|(i, _)| i + 1).collect();
    ids.serialize(s)
}

/// Terminal state of one phase of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub theta: f64,
    pub omega: f64,
    pub mode: ControlMode,
    /// Connected converters, serialized as 1-based ids.
    #[serde(serialize_with = "one_based")]
    pub plugged: Vec<bool>,
    pub settled: bool,
    pub settled_since: Option<f64>,
    /// MVDR over the critical buses (every bus in uniform mode).
    pub critical_mvdr: f64,
    /// MCDR among connected ordinary converters.
    pub ordinary_mcdr: Option<f64>,
    /// Largest `|est_i - mean V|` over the voltage-regulating nodes.
    pub observer_error: f64,
    /// Deviations over all buses and connected converters.
    pub report: DeviationReport,
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    pub ipu: Vec<f64>,
    pub predicted_v: Vec<f64>,
    pub predicted_i: Vec<f64>,
}

impl PhaseSummary {
    /// Largest relative gap between simulated and predicted steady values.
    pub fn prediction_error(&self) -> f64 {
        let rel = |a: &[f64], b: &[f64], scale: f64| a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max);
        let v_scale = self.predicted_v.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let i_scale = self.predicted_i.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        rel(&self.v, &self.predicted_v, v_scale).max(rel(&self.i, &self.predicted_i, i_scale))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationTrace {
    pub samples: Vec<Sample>,
    pub phases: Vec<PhaseSummary>,
}

impl SimulationTrace {
    pub fn all_settled(&self) -> bool {
        self.phases.iter().all(|p| p.settled)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.samples.first().map_or(0, |s| s.v.len());
        let mut header = vec!["t".to_string()];
        for prefix in ["V", "I", "Ipu", "est"] {
            header.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        }
        header.push("theta".into());
        header.push("omega".into());
        writeln!(w, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![s.t];
            for v in [&s.v, &s.i, &s.ipu, &s.est] {
                row.extend(v.iter().copied());
            }
            row.push(s.theta);
            row.push(s.omega);
            let row: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.phases).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Runs a scenario from cold start through its timeline.
pub fn run(spec: &ScenarioSpec) -> Result<SimulationTrace> {
    spec.validate()?;
    let mut sim = Simulator::new(spec.model.clone(), spec.controller.clone(), spec.dt)?;
    let sample_count = (spec.duration / spec.sample_interval + GRID_EPS).floor() as usize;
    let sample_time = |k: usize| k as f64 * spec.sample_interval;
    let mut samples = Vec::with_capacity(sample_count + 1);
    samples.push(sim.sample());
    let mut next_sample = 1;

    let mut boundaries: Vec<f64> = spec.timeline.iter().map(|e| e.time).filter(|&t| t > 0.0).collect();
    boundaries.push(spec.duration);
    let mut events = spec.timeline.iter().peekable();
    while let Some(e) = events.next_if(|e| e.time <= 0.0) {
        sim.apply_event(&e.event)?;
    }

    let mut phases = Vec::new();
    let mut start = 0.0;
    for (index, &end) in boundaries.iter().enumerate() {
        while next_sample <= sample_count && sample_time(next_sample) <= end + GRID_EPS {
            sim.advance_to(sample_time(next_sample).min(end))?;
            samples.push(sim.sample());
            next_sample += 1;
        }
        sim.advance_to(end)?;
        phases.push(sim.summarize(index + 1, start).map_err(|e| e.at_time(end))?);
        if let Some(e) = events.next() {
            sim.apply_event(&e.event)?;
        }
        start = end;
    }
    Ok(SimulationTrace { samples, phases })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettleOptions {
    pub dt: f64,
    pub horizon: f64,
}

impl Default for SettleOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            horizon: DEFAULT_SETTLE_HORIZON,
        }
    }
}

/// Simulates from cold start until the settling criterion holds and returns
/// the settled summary.
pub fn settle(model: &MicrogridModel, config: &ControllerConfig, opts: &SettleOptions) -> Result<PhaseSummary> {
    let mut sim = Simulator::new(model.clone(), config.clone(), opts.dt)?;
    if !sim.advance_until_settled(opts.horizon, 0.01)? {
        return Err(Error::NotSettled { horizon: opts.horizon });
    }
    sim.summarize(1, 0.0)
}
