//! Closed-form steady state of the compromised controllers.
//!
//! Everything here is computed from the network description alone. Two
//! pipelines are provided:
//!
//! * [`uniform_steady`] for the scheme where every bus runs voltage
//!   regulation and the trade-off factor `theta` blends capacity-proportional
//!   and load-proportional reference currents;
//! * [`critical_steady`] for the split scheme where only critical buses are
//!   voltage-regulated and ordinary buses keep accurate current sharing, with
//!   the extra knob `omega` shifting load between the two classes.
//!
//! With every node critical and `omega = 1` the second pipeline reduces to
//! the first.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, rel_eq, scatter, subvector, Factorized};
use crate::plant::{load_augmented_admittance, DgRatings, ElectricalNetwork, PartitionedAdmittance};

/// Relative tolerance for the equal-ratio test in [`conflict_check`].
pub const RATIO_TOL: f64 = 1e-9;

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::invalid("theta", format!("{theta} is outside [0, 1]")))
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("omega", format!("{omega} must be finite and > 0")))
    }
}

fn check_gamma(gamma_v: f64) -> Result<()> {
    if gamma_v >= 0.0 && gamma_v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("gamma_v", format!("{gamma_v} must be finite and >= 0")))
    }
}

/// Voltage and current deviation ratios of a steady operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    /// Buses the voltage ratios refer to (0-based).
    pub v_set: Vec<usize>,
    /// Converters the current ratios refer to (0-based).
    pub i_set: Vec<usize>,
    /// `(V_i - V_rat) / V_rat` for each bus in `v_set`.
    pub delta_v: Vec<f64>,
    /// `(I_pu_i - mean) / mean` over `i_set`, with `I_pu = I / I*`.
    pub delta_i: Vec<f64>,
    pub mvdr: f64,
    pub mcdr: f64,
}

impl DeviationReport {
    pub fn new(v: &DVector<f64>, i: &DVector<f64>, capacity: &[f64], v_rat: f64, v_set: &[usize], i_set: &[usize]) -> Self {
        let delta_v: Vec<f64> = v_set.iter().map(|&k| (v[k] - v_rat) / v_rat).collect();
        let pu: Vec<f64> = i_set.iter().map(|&k| i[k] / capacity[k]).collect();
        let mean = if pu.is_empty() { 0.0 } else { pu.iter().sum::<f64>() / pu.len() as f64 };
        let delta_i: Vec<f64> = pu.iter().map(|p| (p - mean) / mean).collect();
        let inf = |x: &[f64]| x.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
        Self {
            mvdr: inf(&delta_v),
            mcdr: inf(&delta_i),
            v_set: v_set.to_vec(),
            i_set: i_set.to_vec(),
            delta_v,
            delta_i,
        }
    }

    /// Report over every bus and converter.
    pub fn full(v: &DVector<f64>, i: &DVector<f64>, capacity: &[f64], v_rat: f64) -> Self {
        let all: Vec<usize> = (0..v.len()).collect();
        Self::new(v, i, capacity, v_rat, &all, &all)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictCheck {
    /// True iff accurate current sharing and voltage consensus can coexist.
    pub compatible: bool,
    /// `I*_i / Y_L,i` (ohm * ampere); infinite for unloaded buses.
    pub ratios: Vec<f64>,
}

/// Current sharing and voltage consensus are compatible iff every bus is
/// loaded and `I*_i / Y_L,i` is the same for all buses.
pub fn conflict_check(net: &ElectricalNetwork, ratings: &DgRatings) -> ConflictCheck {
    let ratios: Vec<f64> = net
        .load_conductance()
        .iter()
        .zip(ratings.current_capacity())
        .map(|(&g, &c)| if g > 0.0 { c / g } else { f64::INFINITY })
        .collect();
    let compatible = ratios.iter().all(|r| r.is_finite()) && ratios.iter().all(|&r| rel_eq(r, ratios[0], RATIO_TOL));
    ConflictCheck { compatible, ratios }
}

/// Steady state of the uniform scheme, independent of `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSteadyState {
    pub mu: f64,
    pub psi: DVector<f64>,
    /// Load-proportional reference `I_b = V_rat Y_L 1`.
    pub i_b: DVector<f64>,
    pub i_pu_b: DVector<f64>,
    pub i_pu_b_mean: f64,
    pub delta_i_b: DVector<f64>,
    pub capacity: DVector<f64>,
    pub rated_voltage: f64,
}

pub fn uniform_steady(net: &ElectricalNetwork, ratings: &DgRatings) -> Result<UniformSteadyState> {
    if let Some(bus) = net.load_conductance().iter().position(|&g| g <= 0.0) {
        return Err(Error::AssumptionViolation { bus: bus + 1 });
    }
    let n = net.bus_count();
    if ratings.len() != n {
        return Err(Error::DimensionMismatch {
            context: "ratings".into(),
            expected: n,
            actual: ratings.len(),
        });
    }
    let v_rat = ratings.rated_voltage();
    let capacity = ratings.capacity_vector();
    let y_bar = Factorized::new(&load_augmented_admittance(net), "Y_bar")?;
    let x = y_bar.solve(&capacity) / v_rat;
    let mu = x.mean();
    let psi = x.add_scalar(-mu);
    let i_b = DVector::from_iterator(n, net.load_conductance().iter().map(|g| v_rat * g));
    let i_pu_b = i_b.component_div(&capacity);
    let i_pu_b_mean = i_pu_b.mean();
    if !(i_pu_b_mean > 0.0) {
        return Err(Error::DegenerateLoadProfile { mean: i_pu_b_mean });
    }
    let delta_i_b = i_pu_b.add_scalar(-i_pu_b_mean) / i_pu_b_mean;
    Ok(UniformSteadyState {
        mu,
        psi,
        i_b,
        i_pu_b,
        i_pu_b_mean,
        delta_i_b,
        capacity,
        rated_voltage: v_rat,
    })
}

impl UniformSteadyState {
    pub fn alpha(&self, theta: f64) -> Result<f64> {
        check_theta(theta)?;
        Ok(1.0 / (self.mu * theta + 1.0 - theta))
    }

    pub fn delta_v(&self, theta: f64) -> Result<DVector<f64>> {
        check_theta(theta)?;
        Ok(&self.psi * (theta / ((self.mu - 1.0) * theta + 1.0)))
    }

    pub fn delta_i(&self, theta: f64) -> Result<DVector<f64>> {
        check_theta(theta)?;
        let scale = (1.0 - theta) / (theta * (1.0 / self.i_pu_b_mean - 1.0) + 1.0);
        Ok(&self.delta_i_b * scale)
    }

    /// `I_r = theta I* + (1 - theta) I_b`.
    pub fn reference(&self, theta: f64) -> Result<DVector<f64>> {
        check_theta(theta)?;
        Ok(&self.capacity * theta + &self.i_b * (1.0 - theta))
    }

    pub fn voltages(&self, theta: f64) -> Result<DVector<f64>> {
        Ok(self.delta_v(theta)?.add_scalar(1.0) * self.rated_voltage)
    }

    pub fn currents(&self, theta: f64) -> Result<DVector<f64>> {
        Ok(self.reference(theta)? * self.alpha(theta)?)
    }

    /// `||Delta_V(1)||_inf = ||Psi||_inf / mu`, the worst voltage deviation.
    pub fn max_mvdr(&self) -> f64 {
        norm_inf(&self.psi) / self.mu
    }

    /// Largest `theta` keeping the MVDR at or below `gamma_v`.
    pub fn design_theta(&self, gamma_v: f64) -> Result<f64> {
        check_gamma(gamma_v)?;
        Ok(design_theta_impl(gamma_v, norm_inf(&self.psi), self.mu, 1.0))
    }
}

/// Shared by both schemes; the uniform scheme is `omega = 1`.
///
/// Solving `theta / ((mu - omega) theta + omega) * ||Psi|| = gamma` for theta.
fn design_theta_impl(gamma_v: f64, psi_norm: f64, mu: f64, omega: f64) -> f64 {
    if gamma_v == 0.0 {
        0.0
    } else if psi_norm / mu < gamma_v {
        1.0
    } else {
        omega * gamma_v / (psi_norm - gamma_v * (mu - omega))
    }
}

/// Critical-node reference offset `I_b1 = omega V_rat (Y22|Y) 1 + Y12 Y22^-1 I*_2`.
pub fn i_b1(pa: &PartitionedAdmittance, ratings: &DgRatings, omega: f64) -> Result<DVector<f64>> {
    i_b1_with_capacity(pa, &ratings.capacity_vector(), ratings.rated_voltage(), omega)
}

/// As [`i_b1`], with an explicit per-bus capacity vector. A zero entry for
/// an ordinary bus models a disconnected converter.
pub fn i_b1_with_capacity(pa: &PartitionedAdmittance, capacity: &DVector<f64>, v_rat: f64, omega: f64) -> Result<DVector<f64>> {
    check_omega(omega)?;
    let upsilon = pa.schur_ord.column_sum() * v_rat;
    let coupling = ordinary_coupling(pa, capacity);
    Ok(upsilon * omega + coupling)
}

/// `Y12 Y22^-1 I*_2`: current drawn into the critical buses by the ordinary
/// converters at their capacity.
fn ordinary_coupling(pa: &PartitionedAdmittance, capacity: &DVector<f64>) -> DVector<f64> {
    let i2 = subvector(capacity, pa.partition.ordinary());
    &pa.y12 * (pa.y22_inv() * i2)
}

/// Steady state of the split scheme at a fixed `omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSteadyState {
    pub mu: f64,
    pub psi1: DVector<f64>,
    pub omega: f64,
    pub i_b1: DVector<f64>,
    pub omega1: DVector<f64>,
    pub omega2: DVector<f64>,
    /// `Upsilon_1 = V_rat (Y22|Y) 1_m`.
    pub upsilon1: DVector<f64>,
    /// `Y12 Y22^-1 I*_2`.
    pub coupling: DVector<f64>,
    pub i_pu_b1: DVector<f64>,
    pub i_pu_b1_mean: f64,
    pub delta_i_b1: DVector<f64>,
    pub capacity1: DVector<f64>,
    pub capacity2: DVector<f64>,
    pub critical: Vec<usize>,
    pub ordinary: Vec<usize>,
    pub rated_voltage: f64,
}

pub fn critical_steady(pa: &PartitionedAdmittance, ratings: &DgRatings, omega: f64) -> Result<CriticalSteadyState> {
    critical_steady_with_capacity(pa, &ratings.capacity_vector(), ratings.rated_voltage(), omega)
}

pub fn critical_steady_with_capacity(
    pa: &PartitionedAdmittance,
    capacity: &DVector<f64>,
    v_rat: f64,
    omega: f64,
) -> Result<CriticalSteadyState> {
    check_omega(omega)?;
    let critical = pa.partition.critical().to_vec();
    let ordinary = pa.partition.ordinary().to_vec();
    let m = critical.len();
    let capacity1 = subvector(capacity, &critical);
    let capacity2 = subvector(capacity, &ordinary);
    let coupling = ordinary_coupling(pa, capacity);
    let upsilon1 = pa.schur_ord.column_sum() * v_rat;
    let i_b1 = &upsilon1 * omega + &coupling;

    let x = pa.schur_ord_inv() * (&capacity1 - &coupling) / v_rat;
    let mu = x.sum() / m as f64;
    let psi1 = x.add_scalar(-mu);

    let y21_y11inv = &pa.y21 * pa.y11_inv();
    let omega1 = -(pa.schur_cri_inv() * (&y21_y11inv * (&capacity1 - &i_b1)));
    let omega2 = pa.schur_cri_inv() * (&capacity2 - &y21_y11inv * &i_b1);

    let i_pu_b1 = i_b1.component_div(&capacity1);
    let i_pu_b1_mean = i_pu_b1.mean();
    let delta_i_b1 = i_pu_b1.add_scalar(-i_pu_b1_mean) / i_pu_b1_mean;
    Ok(CriticalSteadyState {
        mu,
        psi1,
        omega,
        i_b1,
        omega1,
        omega2,
        upsilon1,
        coupling,
        i_pu_b1,
        i_pu_b1_mean,
        delta_i_b1,
        capacity1,
        capacity2,
        critical,
        ordinary,
        rated_voltage: v_rat,
    })
}

/// Admissible `omega` interval `[lower, inf)` at a given `theta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaRange {
    pub theta: f64,
    /// `max_i zeta_i / nu_i`; below it some critical converter would have to
    /// absorb current.
    pub lower: f64,
    /// 0-based bus attaining the maximum.
    pub binding_node: usize,
    pub zeta: Vec<f64>,
    pub nu: Vec<f64>,
    /// `theta 1'I*_1 + (1 - theta) 1'Y12 Y22^-1 I*_2`; negative is sufficient
    /// for the total critical current to increase with omega.
    pub monotonicity_value: f64,
}

impl OmegaRange {
    pub fn critical_sum_increasing(&self) -> bool {
        self.monotonicity_value < 0.0
    }
}

impl CriticalSteadyState {
    fn denom(&self, theta: f64) -> Result<f64> {
        check_theta(theta)?;
        let d = self.mu * theta + self.omega * (1.0 - theta);
        if d > 0.0 {
            Ok(d)
        } else {
            Err(Error::invalid("theta", format!("mu theta + omega (1 - theta) = {d} is not positive")))
        }
    }

    /// Common per-unit level `alpha = 1 / (mu theta + omega (1 - theta))`.
    pub fn alpha(&self, theta: f64) -> Result<f64> {
        Ok(1.0 / self.denom(theta)?)
    }

    pub fn delta_v(&self, theta: f64) -> Result<DVector<f64>> {
        let d = self.denom(theta)?;
        Ok(&self.psi1 * (theta / d))
    }

    /// Per-unit currents of the critical converters.
    pub fn ipu1(&self, theta: f64) -> Result<DVector<f64>> {
        let alpha = self.alpha(theta)?;
        Ok(self.i_pu_b1.map(|p| alpha * (theta + (1.0 - theta) * p)))
    }

    pub fn delta_i(&self, theta: f64) -> Result<DVector<f64>> {
        check_theta(theta)?;
        if !(self.i_pu_b1_mean > 0.0) {
            return Err(Error::DegenerateLoadProfile { mean: self.i_pu_b1_mean });
        }
        let scale = (1.0 - theta) / (theta * (1.0 / self.i_pu_b1_mean - 1.0) + 1.0);
        Ok(&self.delta_i_b1 * scale)
    }

    /// Ordinary-bus voltages `(theta Omega_1 + Omega_2) alpha`.
    pub fn ordinary_voltages(&self, theta: f64) -> Result<DVector<f64>> {
        let alpha = self.alpha(theta)?;
        Ok((&self.omega1 * theta + &self.omega2) * alpha)
    }

    /// Critical reference currents `theta I*_1 + (1 - theta) I_b1`.
    pub fn reference1(&self, theta: f64) -> Result<DVector<f64>> {
        check_theta(theta)?;
        Ok(&self.capacity1 * theta + &self.i_b1 * (1.0 - theta))
    }

    /// Full per-bus voltages and converter currents in original bus order.
    pub fn profile(&self, theta: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.critical.len() + self.ordinary.len();
        let alpha = self.alpha(theta)?;
        let v1 = self.delta_v(theta)?.add_scalar(1.0) * self.rated_voltage;
        let v2 = self.ordinary_voltages(theta)?;
        let i1 = self.reference1(theta)? * alpha;
        let i2 = &self.capacity2 * alpha;
        let v = scatter(n, &self.critical, &v1) + scatter(n, &self.ordinary, &v2);
        let i = scatter(n, &self.critical, &i1) + scatter(n, &self.ordinary, &i2);
        Ok((v, i))
    }

    pub fn max_mvdr(&self) -> f64 {
        norm_inf(&self.psi1) / self.mu
    }

    /// Largest `theta` keeping the critical-bus MVDR at or below `gamma_v`.
    pub fn design_theta(&self, gamma_v: f64) -> Result<f64> {
        check_gamma(gamma_v)?;
        Ok(design_theta_impl(gamma_v, norm_inf(&self.psi1), self.mu, self.omega))
    }

    pub fn omega_range(&self, theta: f64) -> Result<OmegaRange> {
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::invalid("theta", format!("{theta} is outside [0, 1)")));
        }
        if let Some(k) = self.upsilon1.iter().position(|&nu| !(nu > 0.0)) {
            return Err(Error::NonpositiveNu {
                node: self.critical[k] + 1,
                value: self.upsilon1[k],
            });
        }
        let zeta = &self.capacity1 * (-theta / (1.0 - theta)) - &self.coupling;
        let (binding, lower) = zeta
            .iter()
            .zip(self.upsilon1.iter())
            .map(|(z, nu)| z / nu)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, r)| if r > best.1 { (k, r) } else { best });
        let monotonicity_value = theta * self.capacity1.sum() + (1.0 - theta) * self.coupling.sum();
        Ok(OmegaRange {
            theta,
            lower,
            binding_node: self.critical[binding],
            zeta: zeta.iter().copied().collect(),
            nu: self.upsilon1.iter().copied().collect(),
            monotonicity_value,
        })
    }
}
