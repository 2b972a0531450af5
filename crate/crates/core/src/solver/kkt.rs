use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{lstsq, select_columns};

/// Optimality-condition residuals for `min ||c||_1` s.t. `||Mc - b|| <= tau`
/// at a primal point `c` and dual vector `nu`. All fields are dimensionless
/// and zero at an exact primal-dual optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max(||Mc - b|| - tau, 0) / (1 + ||b||)`.
    pub primal_infeasibility: f64,
    /// `max(||M^T nu||_inf - 1, 0)`.
    pub dual_infeasibility: f64,
    /// `max_{i in supp c} |(M^T nu)_i - sign(c_i)|`.
    pub sign_violation: f64,
    /// `|tau ||nu|| - nu^T (b - Mc)|`, relative to `1 + ||nu|| (||b|| + tau)`.
    pub complementary_slackness: f64,
    /// `|(||c||_1) - (b^T nu - tau ||nu||)| / (1 + ||c||_1)`.
    pub duality_gap: f64,
    pub max_violation: f64,
}

pub(crate) fn support_of(c: &DVector<f64>) -> Vec<usize> {
    let scale = c.amax().max(1.0);
    (0..c.len()).filter(|&i| c[i].abs() > 1e-12 * scale).collect()
}

/// A dual candidate for `c`: the residual direction scaled to fit the support
/// signs when `tau > 0`, otherwise the least-norm solution of `M_S^T nu = sign(c_S)`.
pub fn estimate_dual(m: &DMatrix<f64>, b: &DVector<f64>, tau: f64, c: &DVector<f64>) -> DVector<f64> {
    let support = support_of(c);
    if support.is_empty() {
        return DVector::zeros(m.nrows());
    }
    let ms = select_columns(m, &support);
    let signs = DVector::from_iterator(support.len(), support.iter().map(|&i| c[i].signum()));
    let r = b - m * c;
    if tau > 0.0 && r.norm() > 0.0 {
        let g = ms.transpose() * &r;
        let denom = g.norm_squared();
        if denom > 0.0 {
            return r * (g.dot(&signs) / denom);
        }
    }
    lstsq(&ms.transpose(), &signs, 1e-13).unwrap_or_else(|| DVector::zeros(m.nrows()))
}

/// Evaluates the optimality conditions at `(c, nu)`; `nu = None` uses [`estimate_dual`].
pub fn check_kkt(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    tau: f64,
    c: &DVector<f64>,
    nu: Option<&DVector<f64>>,
) -> KktReport {
    let nu = nu.cloned().unwrap_or_else(|| estimate_dual(m, b, tau, c));
    let r = b - m * c;
    let bnorm = b.norm();
    let primal_infeasibility = (r.norm() - tau).max(0.0) / (1.0 + bnorm);

    let g = m.transpose() * &nu;
    let dual_infeasibility = (g.amax() - 1.0).max(0.0);
    let sign_violation = support_of(c)
        .into_iter()
        .map(|i| (g[i] - c[i].signum()).abs())
        .fold(0.0, f64::max);

    let nu_norm = nu.norm();
    let complementary_slackness = (tau * nu_norm - nu.dot(&r)).abs() / (1.0 + nu_norm * (bnorm + tau));
    let l1 = c.lp_norm(1);
    let duality_gap = (l1 - (b.dot(&nu) - tau * nu_norm)).abs() / (1.0 + l1);

    let max_violation = [primal_infeasibility, dual_infeasibility, sign_violation, complementary_slackness, duality_gap]
        .into_iter()
        .fold(0.0, f64::max);
    KktReport {
        primal_infeasibility,
        dual_infeasibility,
        sign_violation,
        complementary_slackness,
        duality_gap,
        max_violation,
    }
}
