//! Electrical model: power lines, LC output filters and constant-impedance
//! loads, plus the load-augmented admittance algebra behind every
//! steady-state formula.
//!
//! Line dynamics are `L_l dI_l/dt = B^T V - R_l I_l`, filter dynamics are
//! `L_t dI/dt = V_t - V` and `C_t dV/dt = I - Y_L V - B I_l`. At steady state
//! the line currents are `R_l^-1 B^T V`, so the bus admittance matrix is
//! `Y = B R_l^-1 B^T`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{submatrix, subvector, Factorized};
use crate::topology::{is_connected, CommGraph, NodePartition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    /// 0-based source bus (+1 in the incidence column).
    pub from: usize,
    /// 0-based sink bus (-1 in the incidence column).
    pub to: usize,
    /// Ohm.
    pub resistance: f64,
    /// Henry.
    pub inductance: f64,
}

/// Static electrical description of the microgrid.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectricalNetwork {
    lines: Vec<Line>,
    load_conductance: Vec<f64>,
    filter_inductance: Vec<f64>,
    filter_capacitance: Vec<f64>,
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(name, format!("entry {} is {v}; must be finite and > 0", i + 1)));
        }
    }
    Ok(())
}

impl ElectricalNetwork {
    pub fn new(
        lines: Vec<Line>,
        load_conductance: Vec<f64>,
        filter_inductance: Vec<f64>,
        filter_capacitance: Vec<f64>,
    ) -> Result<Self> {
        let n = load_conductance.len();
        if n == 0 {
            return Err(Error::invalid("network", "no buses"));
        }
        for (name, v) in [("filter inductance", &filter_inductance), ("filter capacitance", &filter_capacitance)] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    context: name.into(),
                    expected: n,
                    actual: v.len(),
                });
            }
        }
        check_positive("filter inductance", &filter_inductance)?;
        check_positive("filter capacitance", &filter_capacitance)?;
        for (i, &g) in load_conductance.iter().enumerate() {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::invalid("load conductance", format!("bus {} has {g}", i + 1)));
            }
        }
        for (k, line) in lines.iter().enumerate() {
            if line.from >= n || line.to >= n {
                return Err(Error::DanglingReference {
                    context: format!("line {}", k + 1),
                    node: line.from.max(line.to) + 1,
                    count: n,
                });
            }
            if line.from == line.to {
                return Err(Error::invalid("line", format!("line {} connects bus {} to itself", k + 1, line.from + 1)));
            }
        }
        check_positive("line resistance", &lines.iter().map(|l| l.resistance).collect::<Vec<_>>())?;
        check_positive("line inductance", &lines.iter().map(|l| l.inductance).collect::<Vec<_>>())?;
        let net = Self {
            lines,
            load_conductance,
            filter_inductance,
            filter_capacitance,
        };
        let support = CommGraph::from_edges(n, &net.lines.iter().map(|l| (l.from, l.to, 1.0)).collect::<Vec<_>>())?;
        if !is_connected(&support) {
            return Err(Error::DisconnectedNetwork);
        }
        Ok(net)
    }

    pub fn bus_count(&self) -> usize {
        self.load_conductance.len()
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn load_conductance(&self) -> &[f64] {
        &self.load_conductance
    }

    pub fn filter_inductance(&self) -> &[f64] {
        &self.filter_inductance
    }

    pub fn filter_capacitance(&self) -> &[f64] {
        &self.filter_capacitance
    }

    /// Replaces the load at `bus` (siemens, 0 disconnects it).
    pub fn set_load_conductance(&mut self, bus: usize, conductance: f64) -> Result<()> {
        if !(conductance >= 0.0) || !conductance.is_finite() {
            return Err(Error::invalid("load conductance", format!("{conductance}")));
        }
        self.load_conductance[bus] = conductance;
        Ok(())
    }

    /// N x M incidence matrix with +1 at the source and -1 at the sink of each line.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.bus_count(), self.line_count());
        for (k, line) in self.lines.iter().enumerate() {
            b[(line.from, k)] = 1.0;
            b[(line.to, k)] = -1.0;
        }
        b
    }

    pub fn load_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.load_conductance))
    }

    pub fn all_loads_present(&self) -> bool {
        self.load_conductance.iter().all(|&g| g > 0.0)
    }
}

/// Converter ratings and droop gains.
#[derive(Debug, Clone, PartialEq)]
pub struct DgRatings {
    current_capacity: Vec<f64>,
    droop: Vec<f64>,
    rated_voltage: f64,
}

impl DgRatings {
    pub fn new(current_capacity: Vec<f64>, droop: Vec<f64>, rated_voltage: f64) -> Result<Self> {
        if droop.len() != current_capacity.len() {
            return Err(Error::DimensionMismatch {
                context: "droop coefficients".into(),
                expected: current_capacity.len(),
                actual: droop.len(),
            });
        }
        check_positive("current capacity", &current_capacity)?;
        check_positive("droop coefficient", &droop)?;
        check_positive("rated voltage", &[rated_voltage])?;
        Ok(Self {
            current_capacity,
            droop,
            rated_voltage,
        })
    }

    /// Droop `r_i = factor * V_rat / I*_i`, so every converter sags by the same
    /// fraction of rated voltage at full current.
    pub fn with_rating_inverse_droop(current_capacity: Vec<f64>, rated_voltage: f64, factor: f64) -> Result<Self> {
        check_positive("droop factor", &[factor])?;
        let droop = current_capacity.iter().map(|&c| factor * rated_voltage / c).collect();
        Self::new(current_capacity, droop, rated_voltage)
    }

    pub fn current_capacity(&self) -> &[f64] {
        &self.current_capacity
    }

    pub fn capacity_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.current_capacity)
    }

    pub fn droop(&self) -> &[f64] {
        &self.droop
    }

    pub fn rated_voltage(&self) -> f64 {
        self.rated_voltage
    }

    pub fn len(&self) -> usize {
        self.current_capacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current_capacity.is_empty()
    }
}

/// `Y = B R_l^-1 B^T`.
pub fn bus_admittance(net: &ElectricalNetwork) -> DMatrix<f64> {
    let b = net.incidence();
    let conductance = DVector::from_iterator(net.line_count(), net.lines().iter().map(|l| 1.0 / l.resistance));
    &b * DMatrix::from_diagonal(&conductance) * b.transpose()
}

/// `Y_bar = Y + Y_L`.
pub fn load_augmented_admittance(net: &ElectricalNetwork) -> DMatrix<f64> {
    bus_admittance(net) + net.load_matrix()
}

/// Load-augmented admittance split along a critical/ordinary partition.
///
/// Block names follow the critical-first ordering: `y11` is critical x
/// critical, `y22` ordinary x ordinary. The original bus indexing is kept;
/// blocks are gathered with the partition's index lists.
#[derive(Debug, Clone)]
pub struct PartitionedAdmittance {
    pub partition: NodePartition,
    pub y_bus: DMatrix<f64>,
    pub y_bar: DMatrix<f64>,
    pub y11: DMatrix<f64>,
    pub y12: DMatrix<f64>,
    pub y21: DMatrix<f64>,
    pub y22: DMatrix<f64>,
    /// `Y_bar22 | Y_bar = Y11 - Y12 Y22^-1 Y21` (m x m): ordinary buses eliminated.
    pub schur_ord: DMatrix<f64>,
    /// `Y_bar11 | Y_bar = Y22 - Y21 Y11^-1 Y12` ((N-m) x (N-m)): critical buses eliminated.
    pub schur_cri: DMatrix<f64>,
    y11_f: Factorized,
    y22_f: Factorized,
    schur_ord_f: Factorized,
    schur_cri_f: Factorized,
}

impl PartitionedAdmittance {
    pub fn y11_inv(&self) -> &DMatrix<f64> {
        self.y11_f.inverse()
    }

    pub fn y22_inv(&self) -> &DMatrix<f64> {
        self.y22_f.inverse()
    }

    pub fn schur_ord_inv(&self) -> &DMatrix<f64> {
        self.schur_ord_f.inverse()
    }

    pub fn schur_cri_inv(&self) -> &DMatrix<f64> {
        self.schur_cri_f.inverse()
    }

    pub fn m(&self) -> usize {
        self.partition.critical().len()
    }

    pub fn n(&self) -> usize {
        self.partition.node_count()
    }
}

pub fn partitioned_admittance(net: &ElectricalNetwork, part: &NodePartition) -> Result<PartitionedAdmittance> {
    if part.node_count() != net.bus_count() {
        return Err(Error::DimensionMismatch {
            context: "partition".into(),
            expected: net.bus_count(),
            actual: part.node_count(),
        });
    }
    let y_bus = bus_admittance(net);
    let y_bar = &y_bus + net.load_matrix();
    let (c, o) = (part.critical(), part.ordinary());
    let y11 = submatrix(&y_bar, c, c);
    let y12 = submatrix(&y_bar, c, o);
    let y21 = submatrix(&y_bar, o, c);
    let y22 = submatrix(&y_bar, o, o);
    let y11_f = Factorized::new(&y11, "Y11")?;
    let y22_f = Factorized::new(&y22, "Y22")?;
    let schur_ord = &y11 - &y12 * y22_f.solve_mat(&y21);
    let schur_cri = &y22 - &y21 * y11_f.solve_mat(&y12);
    let schur_ord_f = Factorized::new(&schur_ord, "Y22|Y")?;
    let schur_cri_f = Factorized::new(&schur_cri, "Y11|Y")?;
    Ok(PartitionedAdmittance {
        partition: part.clone(),
        y_bus,
        y_bar,
        y11,
        y12,
        y21,
        y22,
        schur_ord,
        schur_cri,
        y11_f,
        y22_f,
        schur_ord_f,
        schur_cri_f,
    })
}

/// Line currents, converter currents and bus voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub i_line: DVector<f64>,
    pub i_conv: DVector<f64>,
    pub v_bus: DVector<f64>,
}

impl PlantState {
    pub fn zeros(net: &ElectricalNetwork) -> Self {
        Self {
            i_line: DVector::zeros(net.line_count()),
            i_conv: DVector::zeros(net.bus_count()),
            v_bus: DVector::zeros(net.bus_count()),
        }
    }

    /// Stored energy `(I_l' L_l I_l + I' L_t I + V' C_t V) / 2`.
    pub fn stored_energy(&self, net: &ElectricalNetwork) -> f64 {
        let lines: f64 = net.lines().iter().zip(self.i_line.iter()).map(|(l, i)| l.inductance * i * i).sum();
        let filters: f64 = net.filter_inductance().iter().zip(self.i_conv.iter()).map(|(l, i)| l * i * i).sum();
        let caps: f64 = net.filter_capacitance().iter().zip(self.v_bus.iter()).map(|(c, v)| c * v * v).sum();
        0.5 * (lines + filters + caps)
    }
}

/// Time derivative of the plant state for converter output voltages `v_t`.
pub fn plant_derivatives(net: &ElectricalNetwork, state: &PlantState, v_t: &DVector<f64>) -> PlantState {
    plant_derivatives_masked(net, state, v_t, &vec![true; net.bus_count()])
}

/// As [`plant_derivatives`], with unplugged converters (`plugged[i] == false`)
/// holding their current constant.
pub fn plant_derivatives_masked(net: &ElectricalNetwork, state: &PlantState, v_t: &DVector<f64>, plugged: &[bool]) -> PlantState {
    let mut d = PlantState::zeros(net);
    plant_derivatives_into(
        net,
        plugged,
        PlantSlices {
            i_line: state.i_line.as_slice(),
            i_conv: state.i_conv.as_slice(),
            v_bus: state.v_bus.as_slice(),
        },
        v_t.as_slice(),
        PlantSlicesMut {
            i_line: d.i_line.as_mut_slice(),
            i_conv: d.i_conv.as_mut_slice(),
            v_bus: d.v_bus.as_mut_slice(),
        },
    );
    d
}

/// Borrowed view of a plant state, used by the allocation-free kernel.
#[derive(Debug, Clone, Copy)]
pub struct PlantSlices<'a> {
    pub i_line: &'a [f64],
    pub i_conv: &'a [f64],
    pub v_bus: &'a [f64],
}

#[derive(Debug)]
pub struct PlantSlicesMut<'a> {
    pub i_line: &'a mut [f64],
    pub i_conv: &'a mut [f64],
    pub v_bus: &'a mut [f64],
}

/// Allocation-free form of [`plant_derivatives_masked`].
pub fn plant_derivatives_into(net: &ElectricalNetwork, plugged: &[bool], x: PlantSlices<'_>, v_t: &[f64], dx: PlantSlicesMut<'_>) {
    let g = net.load_conductance();
    let lt = net.filter_inductance();
    let ct = net.filter_capacitance();
    for i in 0..g.len() {
        dx.i_conv[i] = if plugged[i] { (v_t[i] - x.v_bus[i]) / lt[i] } else { 0.0 };
        dx.v_bus[i] = x.i_conv[i] - g[i] * x.v_bus[i];
    }
    for (k, line) in net.lines().iter().enumerate() {
        let i_l = x.i_line[k];
        dx.i_line[k] = (x.v_bus[line.from] - x.v_bus[line.to] - line.resistance * i_l) / line.inductance;
        dx.v_bus[line.from] -= i_l;
        dx.v_bus[line.to] += i_l;
    }
    for i in 0..g.len() {
        dx.v_bus[i] /= ct[i];
    }
}

/// Which buses the steady-state balancing constraint averages over.
#[derive(Debug, Clone, Copy)]
pub enum OracleMode<'a> {
    /// Mean of every bus voltage equals `V_rat`.
    Uniform,
    /// Mean of the critical bus voltages equals `V_rat`.
    Critical(&'a NodePartition),
    /// Mean over an explicit bus set equals `V_rat`.
    Subset(&'a [usize]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub v: DVector<f64>,
    pub i: DVector<f64>,
    pub alpha: f64,
}

/// Brute-force steady state of the closed loop: solves
/// `{ Y_bar V = alpha I_ref, mean_S V = V_rat }` for `(V, alpha)` as one
/// augmented linear system, with no use of the closed-form expressions.
pub fn steady_state_oracle(
    net: &ElectricalNetwork,
    ratings: &DgRatings,
    reference: &DVector<f64>,
    mode: OracleMode<'_>,
) -> Result<SteadySolution> {
    let n = net.bus_count();
    if reference.len() != n {
        return Err(Error::DimensionMismatch {
            context: "reference currents".into(),
            expected: n,
            actual: reference.len(),
        });
    }
    let all: Vec<usize>;
    let set: &[usize] = match mode {
        OracleMode::Uniform => {
            all = (0..n).collect();
            &all
        }
        OracleMode::Critical(p) => p.critical(),
        OracleMode::Subset(s) => s,
    };
    if set.is_empty() {
        return Err(Error::invalid("balance set", "empty"));
    }
    let y_bar = load_augmented_admittance(net);
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(&y_bar);
    for i in 0..n {
        a[(i, n)] = -reference[i];
    }
    for &s in set {
        a[(n, s)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = set.len() as f64 * ratings.rated_voltage();
    let f = Factorized::new(&a, "augmented").map_err(|e| match e {
        Error::SingularBlock { rcond, .. } => Error::SingularSystem { rcond },
        e => e,
    })?;
    let x = f.solve(&rhs);
    let v = DVector::from_iterator(n, x.iter().take(n).copied());
    let alpha = x[n];
    Ok(SteadySolution {
        i: reference * alpha,
        v,
        alpha,
    })
}

/// Restriction of a full per-bus vector to the partition's critical and
/// ordinary parts.
pub fn split(v: &DVector<f64>, part: &NodePartition) -> (DVector<f64>, DVector<f64>) {
    (subvector(v, part.critical()), subvector(v, part.ordinary()))
}
