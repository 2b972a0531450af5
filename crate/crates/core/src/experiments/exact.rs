use std::time::Instant;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use super::{blank_record, ensemble_tree, fill_from_solution, format_sparse, instance_tree, solver_settings, ExperimentConfig, TrialRecord};
use crate::codes::SphericalCode;
use crate::error::{invalid, Result};
use crate::measure::DiscreteMeasure;
use crate::moments::{build_ensemble_in, moments_of, MeasurementEnsemble};
use crate::solver::{solve, RecoveryProblem};

/// Support of size `k` drawn uniformly without replacement, weights i.i.d. `U(0.5, 1.5)`.
pub(crate) fn draw_instance<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> (Vec<usize>, Vec<f64>) {
    let mut support = sample(rng, n, k).into_vec();
    support.sort_unstable();
    let weights = support.iter().map(|_| rng.random_range(0.5..1.5)).collect();
    (support, weights)
}

/// One record per `(k, trial)`; the ensemble of trial `t` is shared by every `k`
/// and instances depend only on `(seed, k, t)`, so runs that differ only in `m`
/// see the same measures.
pub fn run_exact_recovery(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    let code = cfg.code.build()?;
    if cfg.sparsity.max > code.len() {
        return invalid(format!("sparsity {} exceeds the code size {}", cfg.sparsity.max, code.len()));
    }
    let ensembles: Vec<Result<MeasurementEnsemble>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let tree = ensemble_tree(cfg.seed, t);
            build_ensemble_in(&code, cfg.d, cfg.m, tree, tree.key())
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (cfg.sparsity.min..=cfg.sparsity.max)
        .enumerate()
        .flat_map(|(cell, _)| (0..cfg.trials).map(move |t| (cell, t)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(cell, t)| exact_trial(cfg, &code, &ensembles[t], cell, cfg.sparsity.min + cell, t))
        .collect())
}

fn exact_trial(
    cfg: &ExperimentConfig,
    code: &SphericalCode,
    ensemble: &Result<MeasurementEnsemble>,
    cell: usize,
    k: usize,
    trial: usize,
) -> TrialRecord {
    let start = Instant::now();
    let mut rec = blank_record(cfg, cell, trial, k, code.len());
    let mut rng = instance_tree(cfg.seed, k, trial).rng();
    let (support, weights) = draw_instance(code.len(), k, &mut rng);
    let mut truth = vec![0.0; code.len()];
    for (&i, &w) in support.iter().zip(&weights) {
        truth[i] = w;
    }
    rec.truth = format_sparse(&truth);
    let outcome = ensemble.as_ref().map_err(|e| e.to_string()).and_then(|ens| {
        rec.ensemble = ens.id().seed;
        let run = || -> Result<_> {
            let mu = DiscreteMeasure::from_code_coeffs(code, &truth)?;
            let b = moments_of(ens, code, &mu)?;
            let problem = RecoveryProblem::new(ens.phi().clone(), DVector::from_column_slice(&b.values), 0.0)?;
            solve(&problem, &solver_settings(cfg))
        };
        run().map_err(|e| e.to_string())
    });
    match outcome {
        Ok(sol) => fill_from_solution(&mut rec, &sol, &truth, cfg.sparsity_threshold),
        Err(msg) => rec.status = format!("error: {msg}"),
    }
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    rec
}
