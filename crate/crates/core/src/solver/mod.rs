//! l1 recovery programs.
//!
//! * basis pursuit: `min ||c||_1` subject to `M c = b`;
//! * basis pursuit denoising: `min ||c||_1` subject to `||M c - b||_2 <= tau`.
//!
//! Both are solved by the same first-order splitting scheme ([`admm`]) on the
//! graph form `min ||x||_1 + I_ball(z)` s.t. `z = M x`, where the ball has radius
//! `tau` around `b` (the single point `b` when `tau = 0`). Iterates are
//! periodically polished on their support and certified through [`check_kkt`].
//! [`lp_oracle_bp`] is an exact rational simplex used to cross-check basis pursuit.

mod admm;
mod kkt;
mod oracle;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::moments::{MeasurementEnsemble, MomentVector};

pub use admm::AdmmSettings;
pub use kkt::{check_kkt, estimate_dual, KktReport};
pub use oracle::{lp_oracle_bp, ORACLE_MAX_DIM};

/// Feasibility tolerance of basis pursuit, relative to `1 + ||b||`.
pub const BP_FEAS_TOL: f64 = 1e-8;
/// Relative feasibility slack of denoising: `||Mc - b|| <= tau (1 + BPDN_FEAS_TOL)`.
pub const BPDN_FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RecoveryProblem {
    m: DMatrix<f64>,
    b: DVector<f64>,
    tau: f64,
}

impl RecoveryProblem {
    pub fn new(m: DMatrix<f64>, b: DVector<f64>, tau: f64) -> Result<Self> {
        if m.nrows() != b.len() {
            return invalid(format!("matrix has {} rows but b has length {}", m.nrows(), b.len()));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return invalid(format!("tau must be finite and >= 0, got {tau}"));
        }
        if m.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return invalid("non-finite entry in M or b");
        }
        Ok(Self { m, b, tau })
    }

    /// Problem on an ensemble's matrix; the moments must come from that ensemble.
    pub fn from_ensemble(ensemble: &MeasurementEnsemble, moments: &MomentVector, tau: f64) -> Result<Self> {
        moments.check_against(ensemble)?;
        Self::new(ensemble.phi().clone(), moments.as_dvector(), tau)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Whether `c` satisfies the constraint within the solver tolerances.
    pub fn is_feasible(&self, c: &DVector<f64>) -> bool {
        let r = (&self.m * c - &self.b).norm();
        if self.tau == 0.0 {
            r <= BP_FEAS_TOL * (1.0 + self.b.norm())
        } else {
            r <= self.tau * (1.0 + BPDN_FEAS_TOL)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoverySolution {
    pub status: SolveStatus,
    pub c_star: Vec<f64>,
    pub residual_norm: f64,
    pub l1_value: f64,
    pub iterations: usize,
    /// Dual vector `nu` with `M^T nu` in the subdifferential of `||c*||_1`.
    pub dual: Vec<f64>,
    /// Largest optimality-condition violation reported by [`check_kkt`].
    pub kkt_violation: f64,
    /// Whether `c_star` came from the support-restricted polish step.
    pub polished: bool,
}

impl RecoverySolution {
    pub fn c_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.c_star)
    }
}

/// `min ||c||_1` s.t. `M c = b`.
pub fn solve_bp(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<RecoverySolution> {
    solve(&RecoveryProblem::new(m.clone(), b.clone(), 0.0)?, &AdmmSettings::default())
}

/// `min ||c||_1` s.t. `||M c - b||_2 <= tau`, `tau > 0`.
pub fn solve_bpdn(m: &DMatrix<f64>, b: &DVector<f64>, tau: f64) -> Result<RecoverySolution> {
    if !(tau > 0.0) {
        return invalid(format!("denoising needs tau > 0, got {tau}"));
    }
    solve(&RecoveryProblem::new(m.clone(), b.clone(), tau)?, &AdmmSettings::default())
}

pub fn solve(problem: &RecoveryProblem, settings: &AdmmSettings) -> Result<RecoverySolution> {
    Ok(admm::run(problem, settings))
}

#[cfg(test)]
mod tests;
