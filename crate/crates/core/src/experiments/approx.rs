use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exact::draw_instance;
use super::{
    blank_record, ensemble_tree, fill_from_solution, format_sparse, instance_tree, numerical_sparsity, solver_settings,
    status_label, ExperimentConfig, TrialRecord,
};
use crate::analysis::{binomial, candes_error_constant, rip_constant};
use crate::codes::{projected_weights, SphericalCode, UnitVector};
use crate::error::{invalid, Result};
use crate::measure::{Atom, DiscreteMeasure};
use crate::moments::{build_ensemble_in, moments_of, MeasurementEnsemble};
use crate::rng::SeedTree;
use crate::solver::{solve, AdmmSettings, RecoveryProblem, RecoverySolution};

/// Largest `C(N, 2k)` for which approximate runs compute the exact `delta_2k`.
pub const RIP_CHECK_CAP: f64 = 50_000.0;

/// Moves the atom at code point `i` by angle `theta` in a random direction.
///
/// On the circle the direction is a random sign; elsewhere a uniformly random
/// tangent direction. Fails if a moved atom is no longer nearest to its own
/// code point.
pub fn offset_measure(
    code: &SphericalCode,
    support: &[usize],
    weights: &[f64],
    theta: f64,
    tree: SeedTree,
) -> Result<DiscreteMeasure> {
    if support.len() != weights.len() {
        return invalid("support and weights differ in length");
    }
    let mut rng = tree.rng();
    let mut atoms = Vec::with_capacity(support.len());
    for (&i, &w) in support.iter().zip(weights) {
        let q = code.point(i).coords();
        let u: Vec<f64> = if q.len() == 2 {
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            vec![-s * q[1], s * q[0]]
        } else {
            let z: Vec<f64> = (0..q.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let ip: f64 = z.iter().zip(q).map(|(a, b)| a * b).sum();
            let t: Vec<f64> = z.iter().zip(q).map(|(a, b)| a - ip * b).collect();
            let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
            t.iter().map(|x| x / norm).collect()
        };
        let x = UnitVector::normalize(q.iter().zip(&u).map(|(a, b)| theta.cos() * a + theta.sin() * b).collect())?;
        if theta > 0.0 && code.nearest(&x)? != i {
            return invalid(format!("offset {theta} moves an atom off its nearest code point {i}"));
        }
        atoms.push(Atom { point: x, weight: w });
    }
    DiscreteMeasure::new(atoms, false)
}

/// `k(tau)` over a grid and the plateau-based choice of `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSweepResult {
    pub trial: usize,
    pub theta: f64,
    pub taus: Vec<f64>,
    pub k_of_tau: Vec<usize>,
    pub statuses: Vec<String>,
    /// Stabilized sparsity: value of the longest constant run in the upper half of the grid.
    pub k_star: usize,
    /// Smallest grid value attaining `k_star`.
    pub tau_star: f64,
    /// Fraction of the grid covered by the maximal run of `k_star` containing the plateau.
    pub plateau_fraction: f64,
    /// Set when no constant run of length 3 exists; `k_star` is then the modal value.
    pub warning: bool,
    #[serde(skip)]
    pub record: Option<TrialRecord>,
}

pub(crate) struct Sweep {
    pub k_of_tau: Vec<usize>,
    pub statuses: Vec<String>,
    pub k_star: usize,
    pub chosen: usize,
    pub plateau_fraction: f64,
    pub warning: bool,
    pub solutions: Vec<Option<RecoverySolution>>,
}

/// Maximal runs of equal values as `(start, len)`.
fn runs(k: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=k.len() {
        if i == k.len() || k[i] != k[start] {
            out.push((start, i - start));
            start = i;
        }
    }
    out
}

/// Plateau detection on a `k(tau)` table: `(k_star, chosen index, plateau fraction, warning)`.
pub(crate) fn detect_plateau(k: &[usize]) -> (usize, usize, f64, bool) {
    let n = k.len();
    let half = n / 2;
    let upper = &k[half..];
    let best = runs(upper).into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).unwrap_or((0, 0));
    let (k_star, warning) = if best.1 >= 3 {
        (upper[best.0], false)
    } else {
        let mut counts = std::collections::BTreeMap::new();
        for &v in k {
            *counts.entry(v).or_insert(0usize) += 1;
        }
        let modal = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(v, _)| *v).unwrap_or(0);
        (modal, true)
    };
    let chosen = k.iter().position(|&v| v == k_star).unwrap_or(0);
    let full = runs(k);
    let anchor = if warning { chosen } else { half + best.0 };
    let len = full.iter().find(|(s, l)| *s <= anchor && anchor < s + l).map(|r| r.1).unwrap_or(1);
    (k_star, chosen, len as f64 / n as f64, warning)
}

/// Solves BPDN (BP at `tau = 0`) at every grid value.
pub fn sweep_instance(
    phi: &DMatrix<f64>,
    b: &DVector<f64>,
    taus: &[f64],
    settings: &AdmmSettings,
    sparsity_threshold: f64,
) -> Result<(Vec<usize>, Vec<String>, usize, f64, bool)> {
    let s = sweep(phi, b, taus, settings, sparsity_threshold)?;
    Ok((s.k_of_tau, s.statuses, s.k_star, taus[s.chosen], s.warning))
}

pub(crate) fn sweep(
    phi: &DMatrix<f64>,
    b: &DVector<f64>,
    taus: &[f64],
    settings: &AdmmSettings,
    sparsity_threshold: f64,
) -> Result<Sweep> {
    let mut k_of_tau = Vec::with_capacity(taus.len());
    let mut statuses = Vec::with_capacity(taus.len());
    let mut solutions = Vec::with_capacity(taus.len());
    for &tau in taus {
        let sol = solve(&RecoveryProblem::new(phi.clone(), b.clone(), tau)?, settings)?;
        let top = sol.c_star.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        k_of_tau.push(if top > 0.0 { numerical_sparsity(&sol.c_star, sparsity_threshold * top)? } else { 0 });
        statuses.push(status_label(sol.status));
        solutions.push(Some(sol));
    }
    let (k_star, chosen, plateau_fraction, warning) = detect_plateau(&k_of_tau);
    Ok(Sweep { k_of_tau, statuses, k_star, chosen, plateau_fraction, warning, solutions })
}

struct Instance {
    truth: Vec<f64>,
    b: DVector<f64>,
    /// `||b - Phi c_{mu_C}||`, the smallest radius at which the projection is feasible.
    projection_residual: f64,
}

fn approx_instance(
    cfg: &ExperimentConfig,
    code: &SphericalCode,
    ens: &MeasurementEnsemble,
    theta: f64,
    trial: usize,
) -> Result<Instance> {
    let tree = instance_tree(cfg.seed, 0, trial);
    let (support, weights) = draw_instance(code.len(), cfg.k, &mut tree.child(0).rng());
    let mu = offset_measure(code, &support, &weights, theta, tree.child(1))?;
    let truth = projected_weights(code, &mu)?;
    let b = DVector::from_column_slice(&moments_of(ens, code, &mu)?.values);
    let projection_residual = (&b - ens.phi() * DVector::from_column_slice(&truth)).norm();
    Ok(Instance { truth, b, projection_residual })
}

fn build_ensembles(cfg: &ExperimentConfig, code: &SphericalCode) -> Vec<Result<MeasurementEnsemble>> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let tree = ensemble_tree(cfg.seed, t);
            build_ensemble_in(code, cfg.d, cfg.m, tree, tree.key())
        })
        .collect()
}

fn sweep_trial(
    cfg: &ExperimentConfig,
    code: &SphericalCode,
    ensemble: &Result<MeasurementEnsemble>,
    cell: usize,
    theta: f64,
    trial: usize,
    taus: &[f64],
) -> TauSweepResult {
    let start = Instant::now();
    let mut rec = blank_record(cfg, cell, trial, cfg.k, code.len());
    rec.theta = theta;
    let mut result = TauSweepResult {
        trial,
        theta,
        taus: taus.to_vec(),
        k_of_tau: Vec::new(),
        statuses: Vec::new(),
        k_star: 0,
        tau_star: f64::NAN,
        plateau_fraction: 0.0,
        warning: true,
        record: None,
    };
    let mut run = || -> Result<()> {
        let ens = ensemble.as_ref().map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
        rec.ensemble = ens.id().seed;
        let inst = approx_instance(cfg, code, ens, theta, trial)?;
        rec.truth = format_sparse(&inst.truth);
        let s = sweep(ens.phi(), &inst.b, taus, &solver_settings(cfg), cfg.sparsity_threshold)?;
        let tau = taus[s.chosen];
        let sol = s.solutions[s.chosen].as_ref().expect("every grid point is solved");
        rec.tau = tau;
        fill_from_solution(&mut rec, sol, &inst.truth, cfg.sparsity_threshold);
        if binomial(code.len(), 2 * cfg.k) <= RIP_CHECK_CAP && 2 * cfg.k <= code.len() {
            let delta = rip_constant(ens.phi(), 2 * cfg.k)?.delta_s;
            rec.rip_delta = delta;
            if delta < std::f64::consts::SQRT_2 - 1.0 && inst.projection_residual <= tau {
                rec.bound = candes_error_constant(delta)? * tau;
            }
        }
        result.k_of_tau = s.k_of_tau;
        result.statuses = s.statuses;
        result.k_star = s.k_star;
        result.tau_star = tau;
        result.plateau_fraction = s.plateau_fraction;
        result.warning = s.warning;
        Ok(())
    };
    if let Err(e) = run() {
        rec.status = format!("error: {e}");
    }
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    result.record = Some(rec);
    result
}

/// One sweep per trial at the first configured offset (0 when none is given).
pub fn tau_sweep(cfg: &ExperimentConfig) -> Result<Vec<TauSweepResult>> {
    let code = cfg.code.build()?;
    check_k(cfg, &code)?;
    let taus = cfg.tau.values()?;
    let theta = cfg.offsets.first().copied().unwrap_or(0.0);
    let ensembles = build_ensembles(cfg, &code);
    Ok((0..cfg.trials)
        .into_par_iter()
        .map(|t| sweep_trial(cfg, &code, &ensembles[t], 0, theta, t, &taus))
        .collect())
}

/// Per offset cell and trial: sweep tau, keep the solve at the chosen tau, and
/// record the error against the projected coefficients `c_{mu_C}`. Instances
/// and ensembles are shared across cells so the curve is paired in `theta`.
pub fn run_approx_recovery(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    let code = cfg.code.build()?;
    check_k(cfg, &code)?;
    let taus = cfg.tau.values()?;
    let ensembles = build_ensembles(cfg, &code);
    let jobs: Vec<(usize, usize)> =
        (0..cfg.offsets.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    Ok(jobs
        .par_iter()
        .map(|&(cell, t)| sweep_trial(cfg, &code, &ensembles[t], cell, cfg.offsets[cell], t, &taus).record.expect("record is always set"))
        .collect())
}

fn check_k(cfg: &ExperimentConfig, code: &SphericalCode) -> Result<()> {
    if cfg.k > code.len() {
        return invalid(format!("k = {} exceeds the code size {}", cfg.k, code.len()));
    }
    Ok(())
}
