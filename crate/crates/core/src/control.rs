//! Distributed secondary control.
//!
//! Each converter runs a droop law corrected by two integrators:
//!
//! ```text
//! u_i = V_rat - r_i I_i + dI_i + dV_i
//! d(dI_i)/dt = k_I sum_j a_ij (I_j / I_r,j - I_i / I_r,i)
//! d(dV_i)/dt = k_V (V_rat - est_i)
//! ```
//!
//! where `est_i` is a dynamic-consensus estimate of the average bus voltage.
//! In the uniform scheme every converter regulates voltage. In the critical
//! scheme only critical converters carry the `dV` term and the observer;
//! ordinary nodes relay estimates algebraically, equivalent to running the
//! observer on the Kron-reduced communication graph.
//!
//! `k_I = k_V = 1` gives the plain unit-gain law.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::analysis::i_b1_with_capacity;
use crate::error::{Error, Result};
use crate::model::MicrogridModel;
use crate::plant::{partitioned_admittance, DgRatings, PlantState};
use crate::topology::{is_connected, laplacian, relay_map, NodePartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    Uniform,
    Critical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    pub theta: f64,
    pub omega: f64,
    /// Multiplier `k_I` on the current-sharing integrator.
    pub current_gain: f64,
    /// Multiplier `k_V` on the voltage integrator.
    pub voltage_gain: f64,
}

impl ControllerConfig {
    pub fn new(mode: ControlMode, theta: f64, omega: f64) -> Self {
        Self {
            mode,
            theta,
            omega,
            current_gain: 1.0,
            voltage_gain: 1.0,
        }
    }

    pub fn with_gains(mut self, current_gain: f64, voltage_gain: f64) -> Self {
        self.current_gain = current_gain;
        self.voltage_gain = voltage_gain;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid("theta", format!("{} is outside [0, 1]", self.theta)));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::invalid("omega", format!("{} must be finite and > 0", self.omega)));
        }
        for (name, g) in [("current_gain", self.current_gain), ("voltage_gain", self.voltage_gain)] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::invalid(name, format!("{g} must be finite and > 0")));
            }
        }
        Ok(())
    }
}

/// Integrator and observer states, one entry per node.
///
/// `delta_v` and `v_est` are only integrated for voltage-regulating nodes;
/// other entries stay frozen and are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub delta_i: DVector<f64>,
    pub delta_v: DVector<f64>,
    pub v_est: DVector<f64>,
}

impl ControllerState {
    /// Zero integrators, observers at the given bus voltages.
    pub fn cold(v_bus: &DVector<f64>) -> Self {
        let n = v_bus.len();
        Self {
            delta_i: DVector::zeros(n),
            delta_v: DVector::zeros(n),
            v_est: v_bus.clone(),
        }
    }
}

/// Per-converter reference currents used to normalize the sharing consensus.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCurrents {
    pub i_r: DVector<f64>,
}

impl ReferenceCurrents {
    pub fn per_unit(&self, i: &DVector<f64>) -> DVector<f64> {
        i.component_div(&self.i_r)
    }
}

/// `I_r = theta I* + (1 - theta) I_b` on critical nodes and `I*` on ordinary
/// ones. `i_b` has one entry per critical node; for the uniform scheme pass
/// an all-critical partition and the load currents `V_rat Y_L 1`.
pub fn reference_currents(ratings: &DgRatings, partition: &NodePartition, i_b: &DVector<f64>, theta: f64) -> Result<ReferenceCurrents> {
    reference_currents_masked(ratings, partition, i_b, theta, &vec![true; ratings.len()])
}

fn reference_currents_masked(
    ratings: &DgRatings,
    partition: &NodePartition,
    i_b: &DVector<f64>,
    theta: f64,
    participating: &[bool],
) -> Result<ReferenceCurrents> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid("theta", format!("{theta} is outside [0, 1]")));
    }
    if i_b.len() != partition.critical().len() {
        return Err(Error::DimensionMismatch {
            context: "reference offset".into(),
            expected: partition.critical().len(),
            actual: i_b.len(),
        });
    }
    let mut i_r = ratings.capacity_vector();
    for (k, &node) in partition.critical().iter().enumerate() {
        i_r[node] = theta * i_r[node] + (1.0 - theta) * i_b[k];
    }
    for (node, &value) in i_r.iter().enumerate() {
        if participating[node] && !(value > 0.0) {
            return Err(Error::NonpositiveReference { node: node + 1, value });
        }
    }
    Ok(ReferenceCurrents { i_r })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    SetTheta(f64),
    SetOmega(f64),
    /// Disconnect the converter at `node`; with `relay` set its communication
    /// node keeps forwarding consensus traffic.
    UnplugDg { node: usize, relay: bool },
    PlugDg { node: usize },
    /// Replace the load at `node`; an infinite resistance removes it.
    SetLoad { node: usize, resistance: f64 },
}

/// An algebraically computed node value: a convex combination of integrated
/// node values.
#[derive(Debug, Clone, PartialEq)]
struct Relay {
    node: usize,
    terms: Vec<(usize, f64)>,
}

/// Scratch buffers for [`Controller::derivatives_into`].
#[derive(Debug, Clone)]
pub struct Scratch {
    pu: Vec<f64>,
    est: Vec<f64>,
}

impl Scratch {
    pub fn new(n: usize) -> Self {
        Self {
            pu: vec![0.0; n],
            est: vec![0.0; n],
        }
    }
}

/// Borrowed controller state for the allocation-free kernels.
#[derive(Debug, Clone, Copy)]
pub struct CtrlSlices<'a> {
    pub delta_i: &'a [f64],
    pub delta_v: &'a [f64],
    pub v_est: &'a [f64],
}

#[derive(Debug)]
pub struct CtrlSlicesMut<'a> {
    pub delta_i: &'a mut [f64],
    pub delta_v: &'a mut [f64],
    pub v_est: &'a mut [f64],
}

/// Runtime controller for one microgrid: the control law plus the
/// connection status of every converter and all quantities derived from it.
#[derive(Debug, Clone)]
pub struct Controller {
    config: ControllerConfig,
    rated_voltage: f64,
    droop: Vec<f64>,
    plugged: Vec<bool>,
    relay: Vec<bool>,
    regulating: Vec<bool>,
    reference: ReferenceCurrents,
    inv_ref: Vec<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
    est_relays: Vec<Relay>,
    pu_relays: Vec<Relay>,
}

impl Controller {
    pub fn new(model: &MicrogridModel, config: ControllerConfig) -> Result<Self> {
        config.validate()?;
        let n = model.bus_count();
        if config.mode == ControlMode::Uniform && !model.partition.ordinary().is_empty() {
            return Err(Error::invalid("mode", "uniform control needs every node critical"));
        }
        let mut c = Self {
            config,
            rated_voltage: model.rated_voltage(),
            droop: model.ratings.droop().to_vec(),
            plugged: vec![true; n],
            relay: vec![true; n],
            regulating: vec![false; n],
            reference: ReferenceCurrents { i_r: DVector::zeros(n) },
            inv_ref: vec![0.0; n],
            neighbors: vec![Vec::new(); n],
            est_relays: Vec::new(),
            pu_relays: Vec::new(),
        };
        c.rebuild(model)?;
        Ok(c)
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn theta(&self) -> f64 {
        self.config.theta
    }

    pub fn omega(&self) -> f64 {
        self.config.omega
    }

    pub fn mode(&self) -> ControlMode {
        self.config.mode
    }

    pub fn plugged(&self) -> &[bool] {
        &self.plugged
    }

    pub fn is_regulating(&self, node: usize) -> bool {
        self.regulating[node]
    }

    pub fn reference(&self) -> &ReferenceCurrents {
        &self.reference
    }

    pub fn node_count(&self) -> usize {
        self.plugged.len()
    }

    /// Recomputes everything that depends on connection status, loads,
    /// `theta` or `omega`.
    fn rebuild(&mut self, model: &MicrogridModel) -> Result<()> {
        let n = self.node_count();
        let active: Vec<bool> = (0..n).map(|i| self.plugged[i] || self.relay[i]).collect();
        let graph = model.graph.with_active(&active);
        if !is_connected(&graph) {
            return Err(Error::DisconnectedGraph);
        }
        let partition = &model.partition;
        self.regulating = (0..n).map(|i| self.plugged[i] && partition.is_critical(i)).collect();
        let regulating: Vec<usize> = (0..n).filter(|&i| self.regulating[i]).collect();
        if regulating.is_empty() {
            return Err(Error::invalid("plug status", "no voltage-regulating converter is connected"));
        }
        let participating: Vec<usize> = (0..n).filter(|&i| self.plugged[i]).collect();

        let lap = laplacian(&graph);
        let est_relay_nodes: Vec<usize> = (0..n).filter(|&i| active[i] && !self.regulating[i]).collect();
        let pu_relay_nodes: Vec<usize> = (0..n).filter(|&i| active[i] && !self.plugged[i]).collect();
        self.est_relays = relays(&lap, &regulating, &est_relay_nodes)?;
        self.pu_relays = relays(&lap, &participating, &pu_relay_nodes)?;
        self.neighbors = (0..n)
            .map(|i| (0..n).filter_map(|j| Some((j, graph.effective_weight(i, j))).filter(|&(_, a)| a > 0.0)).collect())
            .collect();

        let offset = match self.config.mode {
            ControlMode::Uniform => {
                let g = model.network.load_conductance();
                if let Some(bus) = g.iter().position(|&g| g <= 0.0) {
                    return Err(Error::AssumptionViolation { bus: bus + 1 });
                }
                DVector::from_iterator(n, g.iter().map(|g| g * self.rated_voltage))
            }
            ControlMode::Critical => {
                // Disconnected ordinary converters no longer inject current.
                let mut capacity = model.ratings.capacity_vector();
                for &k in partition.ordinary() {
                    if !self.plugged[k] {
                        capacity[k] = 0.0;
                    }
                }
                let pa = partitioned_admittance(&model.network, partition)?;
                i_b1_with_capacity(&pa, &capacity, self.rated_voltage, self.config.omega)?
            }
        };
        self.reference = reference_currents_masked(&model.ratings, partition, &offset, self.config.theta, &self.plugged)?;
        self.inv_ref = self.reference.i_r.iter().map(|r| 1.0 / r).collect();
        Ok(())
    }

    /// Applies a timeline event. Plug status changes zero the converter
    /// current when disconnecting and re-initialize every observer at the
    /// present bus voltage.
    pub fn apply_event(&mut self, model: &mut MicrogridModel, plant: &mut PlantState, state: &mut ControllerState, event: &Event) -> Result<()> {
        let n = self.node_count();
        let check_node = |node: usize| {
            if node < n {
                Ok(())
            } else {
                Err(Error::DanglingReference {
                    context: "event".into(),
                    node: node + 1,
                    count: n,
                })
            }
        };
        let previous = self.clone();
        let previous_model = model.clone();
        let mut reset_observers = false;
        match *event {
            Event::SetTheta(theta) => self.config.theta = theta,
            Event::SetOmega(omega) => self.config.omega = omega,
            Event::UnplugDg { node, relay } => {
                check_node(node)?;
                self.plugged[node] = false;
                self.relay[node] = relay;
                reset_observers = true;
            }
            Event::PlugDg { node } => {
                check_node(node)?;
                self.plugged[node] = true;
                reset_observers = true;
            }
            Event::SetLoad { node, resistance } => {
                check_node(node)?;
                if !(resistance > 0.0) {
                    return Err(Error::invalid("load resistance", format!("{resistance} must be > 0")));
                }
                model.network.set_load_conductance(node, 1.0 / resistance)?;
            }
        }
        let result = self.config.validate().and_then(|_| self.rebuild(model));
        if let Err(e) = result {
            *self = previous;
            *model = previous_model;
            return Err(e);
        }
        if let Event::UnplugDg { node, .. } = *event {
            plant.i_conv[node] = 0.0;
        }
        if reset_observers {
            state.v_est.copy_from(&plant.v_bus);
        }
        Ok(())
    }

    /// Converter voltage commands.
    pub fn output_into(&self, i_conv: &[f64], ctrl: CtrlSlices<'_>, u: &mut [f64]) {
        for i in 0..u.len() {
            let dv = if self.regulating[i] { ctrl.delta_v[i] } else { 0.0 };
            u[i] = self.rated_voltage - self.droop[i] * i_conv[i] + ctrl.delta_i[i] + dv;
        }
    }

    pub fn control_output(&self, state: &ControllerState, i_conv: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.node_count());
        self.output_into(i_conv.as_slice(), slices(state), u.as_mut_slice());
        u
    }

    /// Integrator and observer derivatives. `dv_bus` is the plant's bus
    /// voltage derivative at the same state.
    pub fn derivatives_into(&self, i_conv: &[f64], dv_bus: &[f64], ctrl: CtrlSlices<'_>, d: CtrlSlicesMut<'_>, scratch: &mut Scratch) {
        let n = self.node_count();
        let pu = &mut scratch.pu;
        let est = &mut scratch.est;
        for i in 0..n {
            pu[i] = if self.plugged[i] { i_conv[i] * self.inv_ref[i] } else { 0.0 };
            est[i] = ctrl.v_est[i];
        }
        for r in &self.pu_relays {
            pu[r.node] = r.terms.iter().map(|&(j, c)| c * pu[j]).sum();
        }
        for r in &self.est_relays {
            est[r.node] = r.terms.iter().map(|&(j, c)| c * est[j]).sum();
        }
        let k_i = self.config.current_gain;
        let k_v = self.config.voltage_gain;
        for i in 0..n {
            d.delta_i[i] = if self.plugged[i] {
                k_i * self.neighbors[i].iter().map(|&(j, a)| a * (pu[j] - pu[i])).sum::<f64>()
            } else {
                0.0
            };
            if self.regulating[i] {
                let coupling: f64 = self.neighbors[i].iter().map(|&(j, a)| a * (est[j] - est[i])).sum();
                d.v_est[i] = dv_bus[i] + coupling;
                d.delta_v[i] = k_v * (self.rated_voltage - est[i]);
            } else {
                d.v_est[i] = 0.0;
                d.delta_v[i] = 0.0;
            }
        }
    }

    pub fn controller_derivatives(&self, state: &ControllerState, i_conv: &DVector<f64>, dv_bus: &DVector<f64>) -> ControllerState {
        let n = self.node_count();
        let mut d = ControllerState {
            delta_i: DVector::zeros(n),
            delta_v: DVector::zeros(n),
            v_est: DVector::zeros(n),
        };
        let mut scratch = Scratch::new(n);
        self.derivatives_into(
            i_conv.as_slice(),
            dv_bus.as_slice(),
            slices(state),
            CtrlSlicesMut {
                delta_i: d.delta_i.as_mut_slice(),
                delta_v: d.delta_v.as_mut_slice(),
                v_est: d.v_est.as_mut_slice(),
            },
            &mut scratch,
        );
        d
    }

    /// Estimates at every node, with relayed values filled in. Nodes that
    /// neither observe nor relay keep their frozen state value.
    pub fn estimates(&self, v_est: &[f64]) -> DVector<f64> {
        let mut est = DVector::from_column_slice(v_est);
        for r in &self.est_relays {
            est[r.node] = r.terms.iter().map(|&(j, c)| c * v_est[j]).sum();
        }
        est
    }

    /// `I_i / I_r,i` with the current reference currents.
    pub fn per_unit(&self, i_conv: &DVector<f64>) -> DVector<f64> {
        self.reference.per_unit(i_conv)
    }
}

fn slices(state: &ControllerState) -> CtrlSlices<'_> {
    CtrlSlices {
        delta_i: state.delta_i.as_slice(),
        delta_v: state.delta_v.as_slice(),
        v_est: state.v_est.as_slice(),
    }
}

fn relays(lap: &crate::topology::LaplacianMatrix, retained: &[usize], relay_nodes: &[usize]) -> Result<Vec<Relay>> {
    if relay_nodes.is_empty() {
        return Ok(Vec::new());
    }
    let map = relay_map(lap, retained, relay_nodes)?;
    Ok(relay_nodes
        .iter()
        .enumerate()
        .map(|(r, &node)| Relay {
            node,
            terms: retained.iter().enumerate().map(|(k, &j)| (j, map[(r, k)])).filter(|&(_, c)| c != 0.0).collect(),
        })
        .collect())
}
