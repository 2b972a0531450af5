use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{blank_record, fill_from_solution, format_sparse, solver_settings, threshold_and_normalize, ExperimentConfig, TauRule, TrialRecord, ENSEMBLE_STREAM};
use crate::analysis::{theorem_b_sample_bound, theorem_c_tau};
use crate::codes::{nearest_code_projection, projected_weights, theta_of, CodeSequence, SphericalCode, UnitVector};
use crate::error::{invalid, Error, Result};
use crate::measure::{Atom, DiscreteMeasure};
use crate::moments::{build_kernel_ensemble, moments_of};
use crate::rng::SeedTree;
use crate::solver::{solve, RecoveryProblem};
use crate::transport::{wasserstein, wasserstein_upper_bound_tv, wasserstein_upper_bound_via_l1};

const RIP_DELTA: f64 = std::f64::consts::SQRT_2 - 1.0;
const MAX_DEGREE: u32 = 1 << 30;

/// Degree for level `j` (1-based) of a code sequence: the smallest `d >= 1` with
/// `(k-1)((1+alpha)/2)^d < sqrt2 - 1`, which must also satisfy
/// `((1+cos theta)/2)^d >= 1 - 1/j`.
pub fn select_degree(alpha: f64, theta: f64, k: usize, j: usize) -> Result<u32> {
    if j == 0 {
        return invalid("levels are numbered from 1");
    }
    let level = j - 1;
    let r = (1.0 + alpha) / 2.0;
    let d = if k <= 1 {
        1
    } else {
        if !(r < 1.0) {
            return Err(Error::SelectorInfeasible {
                level,
                reason: format!("alpha = {alpha} leaves (k-1)((1+alpha)/2)^d >= sqrt2 - 1 for every d"),
            });
        }
        let lhs = |d: u32| (k - 1) as f64 * (d as f64 * r.ln()).exp();
        let guess = ((RIP_DELTA / (k - 1) as f64).ln() / r.ln()).floor().clamp(1.0, MAX_DEGREE as f64) as u32;
        let mut d = guess.saturating_sub(2).max(1);
        while lhs(d) >= RIP_DELTA {
            d += 1;
            if d > MAX_DEGREE {
                return Err(Error::SelectorInfeasible { level, reason: format!("no degree below {MAX_DEGREE} separates the code") });
            }
        }
        d
    };
    let closeness = (d as f64 * ((1.0 + theta.cos()) / 2.0).ln()).exp();
    if closeness < 1.0 - 1.0 / j as f64 {
        return Err(Error::SelectorInfeasible {
            level,
            reason: format!(
                "((1+cos theta)/2)^d = {closeness:.6} < 1 - 1/{j} at d = {d}, theta = {theta:.6e}: the support is too far from the code"
            ),
        });
    }
    Ok(d)
}

/// One level of the consistency experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub level: usize,
    pub n_code: usize,
    pub d: u32,
    pub m: usize,
    pub tau: f64,
    pub theta: f64,
    pub status: String,
    /// Atoms of the thresholded measure.
    pub support_size: usize,
    /// `W(mu, mu*_{C_j})`; NaN when thresholding left nothing.
    pub w: f64,
    /// `W(mu, mu_{C_j})`.
    pub w_projection: f64,
    /// `W(mu, mu_{C_j}) + pi ||g - h*/||h*||_1||_1`.
    pub bound_l1: f64,
    /// `W(mu, mu_{C_j}) + pi sqrt(||g - h*/||h*||_1||_1 / 2)`.
    pub bound_tv: f64,
    pub recovered: String,
    #[serde(skip)]
    pub record: Option<TrialRecord>,
}

struct Level {
    code: SphericalCode,
    d: u32,
    m: usize,
    tau: f64,
    theta: f64,
}

/// Recovers a fixed measure on the circle from moments on nested circle codes.
/// Degrees are checked for every level before any solve; an infeasible level
/// aborts the run.
pub fn run_consistency(cfg: &ExperimentConfig) -> Result<Vec<ConsistencyRow>> {
    let Some(cc) = &cfg.consistency else {
        return invalid("consistency runs need a [consistency] section");
    };
    let total: f64 = if cc.weights.is_empty() { cc.angles.len() as f64 } else { cc.weights.iter().sum() };
    let atoms: Vec<Atom> = cc
        .angles
        .iter()
        .enumerate()
        .map(|(i, &t)| Atom {
            point: UnitVector::on_circle(t),
            weight: if cc.weights.is_empty() { 1.0 } else { cc.weights[i] } / total,
        })
        .collect();
    let mu = DiscreteMeasure::new(atoms, false)?;
    let g = mu.weights();
    let k = g.len();
    let seq = CodeSequence::nested_circles(cc.base, cc.levels)?;
    let support = mu.support();
    let levels = seq
        .codes()
        .iter()
        .enumerate()
        .map(|(j, code)| {
            let theta = theta_of(code, &support)?;
            let d = select_degree(code.alpha(), theta, k, j + 1)?;
            let m = if 2 * k <= code.len() {
                (theorem_b_sample_bound(code.len(), k, RIP_DELTA)?.ceil() as usize).min(cc.m_cap)
            } else {
                cc.m_cap
            };
            let tau = if theta > 0.0 { theorem_c_tau(&g, k, theta, d, cfg.epsilon)? } else { 0.0 };
            Ok(Level { code: code.clone(), d, m, tau, theta })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(levels.par_iter().enumerate().map(|(j, lv)| level_row(cfg, cc.tau_rule, &mu, &g, j, lv)).collect())
}

fn level_row(cfg: &ExperimentConfig, tau_rule: TauRule, mu: &DiscreteMeasure, g: &[f64], j: usize, lv: &Level) -> ConsistencyRow {
    let start = Instant::now();
    let code = &lv.code;
    let mut rec = blank_record(cfg, j, 0, g.len(), code.len());
    rec.d = lv.d;
    rec.m = lv.m;
    rec.tau = lv.tau;
    rec.theta = lv.theta;
    let mut row = ConsistencyRow {
        level: j,
        n_code: code.len(),
        d: lv.d,
        m: lv.m,
        tau: lv.tau,
        theta: lv.theta,
        status: String::new(),
        support_size: 0,
        w: f64::NAN,
        w_projection: f64::NAN,
        bound_l1: f64::NAN,
        bound_tv: f64::NAN,
        recovered: String::new(),
        record: None,
    };
    let mut run = || -> Result<()> {
        let truth = projected_weights(code, mu)?;
        rec.truth = format_sparse(&truth);
        let tree = SeedTree::new(cfg.seed).child(ENSEMBLE_STREAM).child(j as u64);
        let extras: Vec<UnitVector> = mu.support().into_iter().filter(|x| code.index_of(x).is_none()).collect();
        let ens = build_kernel_ensemble(code, &extras, lv.d, lv.m, tree, tree.key())?;
        rec.ensemble = ens.id().seed;
        let b = DVector::from_column_slice(&moments_of(&ens, code, mu)?.values);
        let tau = match tau_rule {
            TauRule::Bound => lv.tau,
            TauRule::Oracle => (1.0 + cfg.epsilon) * (&b - ens.phi() * DVector::from_column_slice(&truth)).norm(),
        };
        rec.tau = tau;
        row.tau = tau;
        let problem = RecoveryProblem::new(ens.phi().clone(), b, tau)?;
        let sol = solve(&problem, &solver_settings(cfg))?;
        fill_from_solution(&mut rec, &sol, &truth, cfg.sparsity_threshold);
        row.status = rec.status.clone();
        row.recovered = rec.recovered.clone();
        let (w_projection, _) = wasserstein(mu, &nearest_code_projection(code, mu)?)?;
        row.w_projection = w_projection;
        let t = 0.5 * g.iter().cloned().fold(f64::INFINITY, f64::min);
        match threshold_and_normalize(code, &sol.c_star, t, cfg.threshold_policy) {
            Ok(star) => {
                let h = star.code_coeffs(code)?;
                row.support_size = star.atoms().len();
                row.w = wasserstein(mu, &star)?.0;
                row.bound_l1 = w_projection + wasserstein_upper_bound_via_l1(&truth, &h)?;
                row.bound_tv = w_projection + wasserstein_upper_bound_tv(&truth, &h)?;
            }
            Err(Error::EmptyMeasure(_)) => row.status = "empty".to_owned(),
            Err(e) => return Err(e),
        }
        Ok(())
    };
    if let Err(e) = run() {
        rec.status = format!("error: {e}");
        row.status = rec.status.clone();
    }
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row.record = Some(rec);
    row
}
