//! Graph-projection ADMM for `min ||x||_1 + I_B(z)` s.t. `z = M x`.
//!
//! Each iteration applies the two proximal maps (soft thresholding and the
//! projection onto the ball `B = {z : ||z - b|| <= tau}`) and then projects back
//! onto the graph `{(x, Mx)}`. The graph projection solves
//! `(I + M^T M) x = v`, factored once, and does not depend on the penalty `rho`,
//! so `rho` can be rebalanced freely. Columns of `M` are equilibrated to unit
//! norm (a diagonal preconditioner), which turns the objective into a weighted l1 norm.
//!
//! Every so often the current iterate's support is polished: on a support `S`
//! with signs `s` the optimum has the closed form
//! `c_S = c_LS - lambda (M_S^T M_S)^{-1} s`, where `lambda = 0` for basis
//! pursuit and `||M_S c_S - b|| = tau` fixes `lambda` for denoising. A polished
//! point is returned as soon as its optimality conditions are certified.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::kkt::{check_kkt, KktReport};
use super::{RecoveryProblem, RecoverySolution, SolveStatus, BP_FEAS_TOL};
use crate::linalg::{lstsq, select_columns, svd};

#[derive(Debug, Clone)]
pub struct AdmmSettings {
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub relaxation: f64,
    pub rho: f64,
    /// Iterations between penalty rebalancing.
    pub adapt_every: usize,
    /// Iterations between polish attempts once past the geometric warm-up schedule.
    pub polish_every: usize,
    /// Largest [`KktReport::max_violation`] accepted as a certificate.
    pub certify_tol: f64,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            max_iter: 200_000,
            eps_abs: 1e-9,
            eps_rel: 1e-9,
            relaxation: 1.6,
            rho: 1.0,
            adapt_every: 50,
            polish_every: 500,
            certify_tol: 1e-9,
        }
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

enum GraphFactor {
    /// `I_n + M^T M`.
    Primal(Cholesky<f64, Dyn>),
    /// `I_m + M M^T`, used through the Woodbury identity when `m < n`.
    Dual(Cholesky<f64, Dyn>),
}

struct Graph {
    m: DMatrix<f64>,
    mt: DMatrix<f64>,
    factor: GraphFactor,
}

impl Graph {
    fn new(m: DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mt = m.transpose();
        let factor = if cols <= rows {
            let k = DMatrix::identity(cols, cols) + &mt * &m;
            GraphFactor::Primal(k.cholesky().expect("I + M^T M is positive definite"))
        } else {
            let k = DMatrix::identity(rows, rows) + &m * &mt;
            GraphFactor::Dual(k.cholesky().expect("I + M M^T is positive definite"))
        };
        Self { m, mt, factor }
    }

    /// Orthogonal projection of `(c, e)` onto `{(x, Mx)}`.
    fn project(&self, c: &DVector<f64>, e: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let v = c + &self.mt * e;
        let x = match &self.factor {
            GraphFactor::Primal(ch) => ch.solve(&v),
            GraphFactor::Dual(ch) => {
                let w = ch.solve(&(&self.m * &v));
                v - &self.mt * w
            }
        };
        let z = &self.m * &x;
        (x, z)
    }
}

fn project_ball(v: &DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let d = v - center;
    let n = d.norm();
    if n <= radius {
        v.clone()
    } else if radius == 0.0 {
        center.clone()
    } else {
        center + d * (radius / n)
    }
}

struct Candidate {
    c: DVector<f64>,
    nu: DVector<f64>,
    kkt: KktReport,
    l1: f64,
}

fn trivial(problem: &RecoveryProblem, iterations: usize) -> RecoverySolution {
    let n = problem.matrix().ncols();
    let c = DVector::zeros(n);
    let nu = DVector::zeros(problem.matrix().nrows());
    let kkt = check_kkt(problem.matrix(), problem.rhs(), problem.tau(), &c, Some(&nu));
    RecoverySolution {
        status: SolveStatus::Optimal,
        c_star: vec![0.0; n],
        residual_norm: problem.rhs().norm(),
        l1_value: 0.0,
        iterations,
        dual: nu.iter().copied().collect(),
        kkt_violation: kkt.max_violation,
        polished: false,
    }
}

fn finish(problem: &RecoveryProblem, cand: Candidate, status: SolveStatus, iterations: usize, polished: bool) -> RecoverySolution {
    let residual_norm = (problem.matrix() * &cand.c - problem.rhs()).norm();
    RecoverySolution {
        status,
        c_star: cand.c.iter().copied().collect(),
        residual_norm,
        l1_value: cand.l1,
        iterations,
        dual: cand.nu.iter().copied().collect(),
        kkt_violation: cand.kkt.max_violation,
        polished,
    }
}

/// Closed-form optimum on a fixed support, or `None` if the support is
/// rank-deficient, infeasible, or inconsistent with its own signs.
fn polish_on(problem: &RecoveryProblem, support: &[usize], signs_hint: &DVector<f64>, nu0: &DVector<f64>) -> Option<Candidate> {
    let (m, b, tau) = (problem.matrix(), problem.rhs(), problem.tau());
    if support.is_empty() || support.len() > m.nrows() {
        return None;
    }
    let ms = select_columns(m, support);
    let svd = svd(&ms, true);
    let sv = &svd.singular_values;
    if sv.min() <= 1e-13 * sv.max() {
        return None;
    }
    let u = svd.u.as_ref()?;
    let vt = svd.v_t.as_ref()?;
    // c_LS = V S^-1 U^T b
    let c_ls = vt.transpose() * (u.transpose() * b).component_div(sv);
    let r0 = b - &ms * &c_ls;

    let (cs, nu) = if tau == 0.0 {
        if r0.norm() > BP_FEAS_TOL * (1.0 + b.norm()) {
            return None;
        }
        let s = c_ls.map(f64::signum);
        // Closest dual to the iterate's with M_S^T nu = s: nu0 + M_S G^-1 (s - M_S^T nu0).
        let gap = &s - ms.transpose() * nu0;
        let corr = u * (vt * gap).component_div(sv);
        (c_ls, nu0 + corr)
    } else {
        let s = signs_hint.clone();
        if r0.norm() >= tau {
            return None;
        }
        let vts = vt * &s;
        let ginv_s = vt.transpose() * vts.component_div(&sv.component_mul(sv));
        let dir = u * vts.component_div(sv); // M_S G^-1 s
        let dn = dir.norm_squared();
        if dn == 0.0 {
            return None;
        }
        let lambda = ((tau * tau - r0.norm_squared()) / dn).sqrt();
        let cs = c_ls - ginv_s * lambda;
        let r = b - &ms * &cs;
        (cs, r / lambda)
    };
    if tau > 0.0 && cs.iter().zip(signs_hint.iter()).any(|(c, s)| c.signum() != *s || *c == 0.0) {
        return None;
    }
    let mut c = DVector::zeros(m.ncols());
    for (k, &i) in support.iter().enumerate() {
        c[i] = cs[k];
    }
    if !problem.is_feasible(&c) {
        return None;
    }
    let kkt = check_kkt(m, b, tau, &c, Some(&nu));
    let l1 = c.lp_norm(1);
    Some(Candidate { c, nu, kkt, l1 })
}

const SUPPORT_LEVELS: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-6, 0.0];
const GAP_CUTS: usize = 3;

fn polish(problem: &RecoveryProblem, x: &DVector<f64>, nu0: &DVector<f64>) -> Vec<Candidate> {
    let top = x.amax();
    if top == 0.0 {
        return Vec::new();
    }
    let mut supports: Vec<Vec<usize>> = SUPPORT_LEVELS
        .iter()
        .map(|&level| (0..x.len()).filter(|&i| x[i].abs() > level * top).collect())
        .collect();
    // Cut the sorted magnitudes at their largest relative drops.
    let mut order: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    order.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()));
    let mut gaps: Vec<(f64, usize)> = order
        .windows(2)
        .enumerate()
        .take(problem.matrix().nrows())
        .map(|(j, w)| (x[w[0]].abs() / x[w[1]].abs(), j + 1))
        .collect();
    gaps.sort_by(|a, b| b.0.total_cmp(&a.0));
    for &(_, cut) in gaps.iter().take(GAP_CUTS) {
        let mut support = order[..cut].to_vec();
        support.sort_unstable();
        supports.push(support);
    }

    let mut tried: Vec<Vec<usize>> = Vec::new();
    let mut out = Vec::new();
    for support in supports {
        if tried.contains(&support) {
            continue;
        }
        let signs = DVector::from_iterator(support.len(), support.iter().map(|&i| x[i].signum()));
        if let Some(c) = polish_on(problem, &support, &signs, nu0) {
            out.push(c);
        }
        tried.push(support);
    }
    out
}

/// Polish at `25 * 2^j` iterations, then every `every` iterations.
fn is_polish_step(k: usize, every: usize) -> bool {
    (k % 25 == 0 && (k / 25).is_power_of_two()) || (every > 0 && k % every == 0)
}

pub(super) fn run(problem: &RecoveryProblem, s: &AdmmSettings) -> RecoverySolution {
    let (m, b, tau) = (problem.matrix(), problem.rhs(), problem.tau());
    let (rows, cols) = m.shape();
    let bnorm = b.norm();
    if bnorm <= tau || bnorm == 0.0 {
        return trivial(problem, 0);
    }
    if cols == 0 {
        let mut sol = trivial(problem, 0);
        sol.status = SolveStatus::Infeasible;
        return sol;
    }
    if tau == 0.0 {
        let ls = lstsq(m, b, f64::EPSILON * rows.max(cols) as f64).unwrap_or_else(|| DVector::zeros(cols));
        let r = (m * &ls - b).norm();
        if r > BP_FEAS_TOL * (1.0 + bnorm) {
            let nu = DVector::zeros(rows);
            let kkt = check_kkt(m, b, tau, &ls, Some(&nu));
            let l1 = ls.lp_norm(1);
            return finish(problem, Candidate { c: ls, nu, kkt, l1 }, SolveStatus::Infeasible, 0, false);
        }
    }

    // Scaled problem: unit-norm columns, ||b|| = 1.
    let col_norms: Vec<f64> = (0..cols).map(|j| m.column(j).norm()).collect();
    let col_scale: Vec<f64> = col_norms.iter().map(|&w| if w > 0.0 { 1.0 / w } else { 1.0 }).collect();
    let mut ms = m.clone();
    for (j, &d) in col_scale.iter().enumerate() {
        ms.column_mut(j).scale_mut(d);
    }
    let bh = b / bnorm;
    let tauh = tau / bnorm;
    let graph = Graph::new(ms);

    let unscale = |y: &DVector<f64>| DVector::from_iterator(cols, (0..cols).map(|j| y[j] * col_scale[j] * bnorm));
    let weights = &col_scale;

    let mut yt = DVector::zeros(cols);
    let mut zt = DVector::zeros(rows);
    let mut uy = DVector::zeros(cols);
    let mut uz = DVector::zeros(rows);
    let mut rho = s.rho;
    let alpha = s.relaxation;
    let scale_tol = ((cols + rows) as f64).sqrt();

    let mut best: Option<Candidate> = None;
    let mut converged = false;
    let mut y = DVector::zeros(cols);
    let mut iterations = 0;

    for k in 1..=s.max_iter {
        iterations = k;
        let vy = &yt - &uy;
        y = DVector::from_iterator(cols, (0..cols).map(|j| soft_threshold(vy[j], weights[j] / rho)));
        let z = project_ball(&(&zt - &uz), &bh, tauh);

        let yr = &y * alpha + &yt * (1.0 - alpha);
        let zr = &z * alpha + &zt * (1.0 - alpha);
        let (yt_new, zt_new) = graph.project(&(&yr + &uy), &(&zr + &uz));
        uy += &yr - &yt_new;
        uz += &zr - &zt_new;

        let r_primal = ((&y - &yt_new).norm_squared() + (&z - &zt_new).norm_squared()).sqrt();
        let r_dual = rho * ((&yt_new - &yt).norm_squared() + (&zt_new - &zt).norm_squared()).sqrt();
        yt = yt_new;
        zt = zt_new;

        let eps_p = s.eps_abs * scale_tol
            + s.eps_rel * (y.norm_squared() + z.norm_squared()).sqrt().max((yt.norm_squared() + zt.norm_squared()).sqrt());
        let eps_d = s.eps_abs * scale_tol + s.eps_rel * rho * (uy.norm_squared() + uz.norm_squared()).sqrt();
        if r_primal <= eps_p && r_dual <= eps_d {
            converged = true;
            break;
        }

        if s.adapt_every > 0 && k % s.adapt_every == 0 {
            let (rp, rd) = (r_primal / eps_p, r_dual / eps_d);
            if rp > 10.0 * rd {
                rho *= 2.0;
                uy /= 2.0;
                uz /= 2.0;
            } else if rd > 10.0 * rp {
                rho /= 2.0;
                uy *= 2.0;
                uz *= 2.0;
            }
        }

        if is_polish_step(k, s.polish_every) {
            let nu = &uz * rho;
            for cand in polish(problem, &unscale(&y), &nu) {
                if cand.kkt.max_violation <= s.certify_tol {
                    return finish(problem, cand, SolveStatus::Optimal, k, true);
                }
                if best.as_ref().is_none_or(|b| cand.l1 < b.l1) {
                    best = Some(cand);
                }
            }
        }
    }

    let nu = &uz * rho;
    let x = unscale(&y);
    for cand in polish(problem, &x, &nu) {
        if cand.kkt.max_violation <= s.certify_tol {
            return finish(problem, cand, SolveStatus::Optimal, iterations, true);
        }
        if best.as_ref().is_none_or(|b| cand.l1 < b.l1) {
            best = Some(cand);
        }
    }
    let status = if converged { SolveStatus::Optimal } else { SolveStatus::MaxIter };
    let kkt = check_kkt(m, b, tau, &x, Some(&nu));
    let raw = Candidate { l1: x.lp_norm(1), c: x, nu, kkt };
    // A feasible polished point with no larger objective beats the raw iterate.
    match best {
        Some(p) if !problem.is_feasible(&raw.c) || p.l1 <= raw.l1 * (1.0 + 1e-12) => finish(problem, p, status, iterations, true),
        _ => finish(problem, raw, status, iterations, false),
    }
}
