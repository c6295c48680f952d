//! Structured results behind the `analyze`, `design-theta` and
//! `omega-range` commands, with text rendering.

use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::analysis::{conflict_check, critical_steady, uniform_steady, ConflictCheck, CriticalSteadyState, OmegaRange, UniformSteadyState};
use crate::control::ControlMode;
use crate::error::{Error, Result};
use crate::linalg::norm_inf;
use crate::model::MicrogridModel;
use crate::plant::partitioned_admittance;

/// Closed-form steady state at one `(theta, omega)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub theta: f64,
    pub omega: f64,
    pub alpha: f64,
    /// MVDR over the voltage-regulated buses.
    pub mvdr: f64,
    /// MCDR over the converters whose references blend toward the load.
    pub mcdr: f64,
    pub v: Vec<f64>,
    /// `I / I*` per converter.
    pub ipu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub scenario: String,
    pub mode: ControlMode,
    /// 1-based critical bus ids.
    pub critical: Vec<usize>,
    pub conflict: ConflictCheck,
    pub mu: f64,
    pub psi: Vec<f64>,
    pub psi_norm: f64,
    /// Worst voltage deviation, reached at `theta = 1`.
    pub max_mvdr: f64,
    /// Worst current-sharing deviation, reached at `theta = 0`.
    pub max_mcdr: f64,
    pub omega: f64,
    pub gamma_v: Option<f64>,
    pub design_theta: Option<f64>,
    pub omega_range: Option<OmegaRange>,
    pub points: Vec<OperatingPoint>,
}

enum Steady {
    Uniform(UniformSteadyState),
    Critical(CriticalSteadyState),
}

impl Steady {
    fn new(model: &MicrogridModel, mode: ControlMode, omega: f64) -> Result<Self> {
        match mode {
            ControlMode::Uniform => Ok(Steady::Uniform(uniform_steady(&model.network, &model.ratings)?)),
            ControlMode::Critical => {
                let pa = partitioned_admittance(&model.network, &model.partition)?;
                Ok(Steady::Critical(critical_steady(&pa, &model.ratings, omega)?))
            }
        }
    }

    fn mu(&self) -> f64 {
        match self {
            Steady::Uniform(s) => s.mu,
            Steady::Critical(s) => s.mu,
        }
    }

    fn psi(&self) -> Vec<f64> {
        match self {
            Steady::Uniform(s) => s.psi.iter().copied().collect(),
            Steady::Critical(s) => s.psi1.iter().copied().collect(),
        }
    }

    fn max_mvdr(&self) -> f64 {
        match self {
            Steady::Uniform(s) => s.max_mvdr(),
            Steady::Critical(s) => s.max_mvdr(),
        }
    }

    fn design_theta(&self, gamma_v: f64) -> Result<f64> {
        match self {
            Steady::Uniform(s) => s.design_theta(gamma_v),
            Steady::Critical(s) => s.design_theta(gamma_v),
        }
    }

    fn point(&self, model: &MicrogridModel, theta: f64) -> Result<OperatingPoint> {
        let capacity = model.ratings.capacity_vector();
        let (omega, alpha, mvdr, mcdr, (v, i)) = match self {
            Steady::Uniform(s) => (
                1.0,
                s.alpha(theta)?,
                norm_inf(&s.delta_v(theta)?),
                norm_inf(&s.delta_i(theta)?),
                (s.voltages(theta)?, s.currents(theta)?),
            ),
            Steady::Critical(s) => (
                s.omega,
                s.alpha(theta)?,
                norm_inf(&s.delta_v(theta)?),
                norm_inf(&s.delta_i(theta)?),
                s.profile(theta)?,
            ),
        };
        Ok(OperatingPoint {
            theta,
            omega,
            alpha,
            mvdr,
            mcdr,
            v: v.iter().copied().collect(),
            ipu: i.component_div(&capacity).iter().copied().collect(),
        })
    }
}

/// Options for [`analyze`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalyzeOptions {
    pub gamma_v: Option<f64>,
    /// Extra `theta` to tabulate besides 0, 1 and the design value. Also the
    /// `theta` at which the omega range is evaluated (default 0).
    pub theta: Option<f64>,
    /// Overrides the scenario's `omega`.
    pub omega: Option<f64>,
}

pub fn analyze(name: &str, model: &MicrogridModel, mode: ControlMode, scenario_omega: f64, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    let omega = opts.omega.unwrap_or(scenario_omega);
    let steady = Steady::new(model, mode, omega)?;
    let design_theta = opts.gamma_v.map(|g| steady.design_theta(g)).transpose()?;
    let omega_range = match &steady {
        Steady::Critical(s) => Some(s.omega_range(opts.theta.filter(|&t| t < 1.0).unwrap_or(0.0))?),
        Steady::Uniform(_) => None,
    };
    let mut thetas = vec![0.0, 1.0];
    thetas.extend(design_theta);
    thetas.extend(opts.theta);
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let points = thetas.iter().map(|&t| steady.point(model, t)).collect::<Result<Vec<_>>>()?;
    let psi = steady.psi();
    Ok(AnalysisReport {
        scenario: name.to_string(),
        mode,
        critical: model.partition.critical().iter().map(|i| i + 1).collect(),
        conflict: conflict_check(&model.network, &model.ratings),
        mu: steady.mu(),
        psi_norm: psi.iter().fold(0.0_f64, |m, p| m.max(p.abs())),
        psi,
        max_mvdr: steady.max_mvdr(),
        max_mcdr: steady.point(model, 0.0)?.mcdr,
        omega,
        gamma_v: opts.gamma_v,
        design_theta,
        omega_range,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignThetaReport {
    pub mode: ControlMode,
    pub gamma_v: f64,
    pub omega: f64,
    pub mu: f64,
    pub psi_norm: f64,
    pub max_mvdr: f64,
    pub theta_d: f64,
}

pub fn design_theta(model: &MicrogridModel, mode: ControlMode, omega: f64, gamma_v: f64) -> Result<DesignThetaReport> {
    let steady = Steady::new(model, mode, omega)?;
    Ok(DesignThetaReport {
        mode,
        gamma_v,
        omega: if mode == ControlMode::Uniform { 1.0 } else { omega },
        mu: steady.mu(),
        psi_norm: steady.psi().iter().fold(0.0_f64, |m, p| m.max(p.abs())),
        max_mvdr: steady.max_mvdr(),
        theta_d: steady.design_theta(gamma_v)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaRangeReport {
    pub mu: f64,
    pub psi_norm: f64,
    pub range: OmegaRange,
}

pub fn omega_range(model: &MicrogridModel, mode: ControlMode, omega: f64, theta: f64) -> Result<OmegaRangeReport> {
    if mode != ControlMode::Critical {
        return Err(Error::invalid("mode", "the omega range applies to critical-node control only"));
    }
    let pa = partitioned_admittance(&model.network, &model.partition)?;
    let s = critical_steady(&pa, &model.ratings, omega)?;
    Ok(OmegaRangeReport {
        mu: s.mu,
        psi_norm: norm_inf(&s.psi1),
        range: s.omega_range(theta)?,
    })
}

fn row(out: &mut String, label: &str, values: &[f64], digits: usize) {
    let _ = write!(out, "  {label:<8}");
    for v in values {
        let _ = write!(out, " {v:>9.digits$}");
    }
    out.push('\n');
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {}  mode {:?}", self.scenario, self.mode);
        if self.mode == ControlMode::Critical {
            let _ = writeln!(s, "critical buses {:?}  omega {}", self.critical, self.omega);
        }
        let _ = writeln!(
            s,
            "sharing/consensus compatible: {}  (I*/Y_L ratios {:?})",
            self.conflict.compatible,
            self.conflict.ratios.iter().map(|r| format!("{r:.1}")).collect::<Vec<_>>()
        );
        let _ = writeln!(s, "mu {:.6}  ||psi||_inf {:.6}", self.mu, self.psi_norm);
        let _ = writeln!(s, "max MVDR (theta = 1) {:.6}", self.max_mvdr);
        let _ = writeln!(s, "max MCDR (theta = 0) {:.6}", self.max_mcdr);
        if let (Some(g), Some(t)) = (self.gamma_v, self.design_theta) {
            let _ = writeln!(s, "design theta for gamma_v = {g}: {t:.6}");
        }
        if let Some(r) = &self.omega_range {
            let _ = writeln!(
                s,
                "omega range at theta = {}: [{:.6}, inf), binding bus {}; sum condition {:.6} ({})",
                r.theta,
                r.lower.max(0.0),
                r.binding_node + 1,
                r.monotonicity_value,
                if r.critical_sum_increasing() { "critical total current increases with omega" } else { "condition not met" }
            );
        }
        for p in &self.points {
            let _ = writeln!(s, "theta {:.4}  omega {:.4}  alpha {:.6}  MVDR {:.6}  MCDR {:.6}", p.theta, p.omega, p.alpha, p.mvdr, p.mcdr);
            row(&mut s, "V", &p.v, 3);
            row(&mut s, "I_pu", &p.ipu, 4);
        }
        f.write_str(&s)
    }
}

impl fmt::Display for DesignThetaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode {:?}  omega {}  gamma_v {}", self.mode, self.omega, self.gamma_v)?;
        writeln!(f, "mu {:.6}  ||psi||_inf {:.6}  max MVDR {:.6}", self.mu, self.psi_norm, self.max_mvdr)?;
        writeln!(f, "theta_d {:.6}", self.theta_d)
    }
}

impl fmt::Display for OmegaRangeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.range;
        writeln!(f, "theta {}  mu {:.6}  ||psi_1||_inf {:.6}", r.theta, self.mu, self.psi_norm)?;
        writeln!(f, "zeta {:?}", r.zeta)?;
        writeln!(f, "nu   {:?}", r.nu)?;
        writeln!(f, "omega_min {:.6} (binding bus {})", r.lower, r.binding_node + 1)?;
        writeln!(f, "admissible omega: [{:.6}, inf)", r.lower.max(0.0))?;
        writeln!(
            f,
            "sum condition {:.6}: {}",
            r.monotonicity_value,
            if r.critical_sum_increasing() { "critical total current increases with omega" } else { "not met" }
        )
    }
}
