//! Reproducible experiment harness: exact-recovery sweeps, tau selection by
//! numerical sparsity, approximate recovery of off-code measures, and the
//! consistency experiment on nested codes.
//!
//! Every random draw is addressed in a [`SeedTree`] below the config seed, so a
//! run is bit-reproducible from `(config, seed)` regardless of thread count.

mod approx;
mod config;
mod consistency;
mod exact;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codes::SphericalCode;
use crate::error::{invalid, Error, Result};
use crate::measure::DiscreteMeasure;
use crate::rng::SeedTree;
use crate::solver::{AdmmSettings, RecoverySolution, SolveStatus};

pub use approx::{offset_measure, run_approx_recovery, sweep_instance, tau_sweep, TauSweepResult};
pub use config::{
    CodeSpec, ConsistencyConfig, ExperimentConfig, ExperimentKind, SolverConfig, Spacing, SparsityRange, TauGrid, TauRule,
    ThresholdPolicy,
};
pub use consistency::{run_consistency, select_degree, ConsistencyRow};
pub use exact::run_exact_recovery;

/// Child indices of the config seed.
pub(crate) const ENSEMBLE_STREAM: u64 = 1;
pub(crate) const INSTANCE_STREAM: u64 = 2;

/// `#{i : |c_i| > threshold}`.
pub fn numerical_sparsity(c: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0) {
        return invalid(format!("threshold = {threshold} must be positive"));
    }
    Ok(c.iter().filter(|x| x.abs() > threshold).count())
}

/// Turns code coefficients into a measure on `code`.
///
/// `Threshold` keeps `c_i > t` and rescales to unit mass; `Clamp` keeps
/// `max(c_i, 0)` without rescaling and ignores `t`.
pub fn threshold_and_normalize(code: &SphericalCode, c: &[f64], t: f64, policy: ThresholdPolicy) -> Result<DiscreteMeasure> {
    if c.len() != code.len() {
        return invalid(format!("{} coefficients for a code of {} points", c.len(), code.len()));
    }
    match policy {
        ThresholdPolicy::Threshold => {
            if !(t > 0.0) {
                return invalid(format!("threshold t = {t} must be positive"));
            }
            let h: Vec<f64> = c.iter().map(|&x| if x > t { x } else { 0.0 }).collect();
            let mass: f64 = h.iter().sum();
            if mass == 0.0 {
                return Err(Error::EmptyMeasure(t));
            }
            DiscreteMeasure::from_code_coeffs(code, &h.iter().map(|x| x / mass).collect::<Vec<_>>())
        }
        ThresholdPolicy::Clamp => {
            let h: Vec<f64> = c.iter().map(|&x| x.max(0.0)).collect();
            if h.iter().all(|&x| x == 0.0) {
                return Err(Error::EmptyMeasure(0.0));
            }
            DiscreteMeasure::from_code_coeffs(code, &h)
        }
    }
}

/// One solve within a sweep. Vector fields are sparse `index:value` lists joined by `;`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub kind: ExperimentKind,
    pub cell: usize,
    pub trial: usize,
    pub k: usize,
    /// Offset of the atoms from the code (0 for exact runs).
    pub theta: f64,
    pub n_code: usize,
    pub d: u32,
    pub m: usize,
    /// Provenance label of the ensemble.
    pub ensemble: u64,
    pub tau: f64,
    pub status: String,
    /// `||c - c*||_2` against the code coefficients of the truth (or of its projection).
    pub error: f64,
    pub numerical_sparsity: usize,
    pub l1: f64,
    pub residual: f64,
    pub kkt: f64,
    pub iterations: usize,
    /// Exact `delta_2k` of `Phi` when enumeration was affordable, else NaN.
    pub rip_delta: f64,
    /// `B1(delta_2k) tau` when the guarantee applies, else NaN.
    pub bound: f64,
    pub truth: String,
    pub recovered: String,
    /// Excluded from `records.csv` so that reruns are byte-identical.
    pub wall_ms: f64,
}

impl TrialRecord {
    pub fn succeeded(&self, tol: f64) -> bool {
        self.error < tol
    }

    pub fn is_optimal(&self) -> bool {
        self.status == status_label(SolveStatus::Optimal)
    }
}

pub(crate) fn status_label(s: SolveStatus) -> String {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::MaxIter => "max-iter",
        SolveStatus::Infeasible => "infeasible",
    }
    .to_owned()
}

pub fn format_sparse(c: &[f64]) -> String {
    c.iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(i, x)| format!("{i}:{x}"))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn parse_sparse(text: &str, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    for item in text.split(';').filter(|s| !s.is_empty()) {
        let (i, v) = item.split_once(':').ok_or_else(|| Error::Parse(format!("bad sparse entry {item:?}")))?;
        let i: usize = i.parse().map_err(|_| Error::Parse(format!("bad index in {item:?}")))?;
        let v: f64 = v.parse().map_err(|_| Error::Parse(format!("bad value in {item:?}")))?;
        if i >= n {
            return Err(Error::Parse(format!("index {i} out of range {n}")));
        }
        out[i] = v;
    }
    Ok(out)
}

pub(crate) fn solver_settings(cfg: &ExperimentConfig) -> AdmmSettings {
    AdmmSettings { max_iter: cfg.solver.max_iter, ..AdmmSettings::default() }
}

/// Fills the solver-derived fields of a record.
pub(crate) fn fill_from_solution(rec: &mut TrialRecord, sol: &RecoverySolution, truth: &[f64], sparsity_threshold: f64) {
    let err: f64 = sol.c_star.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let top = sol.c_star.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    rec.status = status_label(sol.status);
    rec.error = err;
    rec.numerical_sparsity = if top > 0.0 { numerical_sparsity(&sol.c_star, sparsity_threshold * top).unwrap_or(0) } else { 0 };
    rec.l1 = sol.l1_value;
    rec.residual = sol.residual_norm;
    rec.kkt = sol.kkt_violation;
    rec.iterations = sol.iterations;
    rec.recovered = format_sparse(&sol.c_star);
}

pub(crate) fn blank_record(cfg: &ExperimentConfig, cell: usize, trial: usize, k: usize, n_code: usize) -> TrialRecord {
    TrialRecord {
        kind: cfg.kind,
        cell,
        trial,
        k,
        theta: 0.0,
        n_code,
        d: cfg.d,
        m: cfg.m,
        ensemble: 0,
        tau: 0.0,
        status: String::new(),
        error: f64::NAN,
        numerical_sparsity: 0,
        l1: f64::NAN,
        residual: f64::NAN,
        kkt: f64::NAN,
        iterations: 0,
        rip_delta: f64::NAN,
        bound: f64::NAN,
        truth: String::new(),
        recovered: String::new(),
        wall_ms: 0.0,
    }
}

pub(crate) fn ensemble_tree(seed: u64, trial: usize) -> SeedTree {
    SeedTree::new(seed).child(ENSEMBLE_STREAM).child(trial as u64)
}

pub(crate) fn instance_tree(seed: u64, cell: usize, trial: usize) -> SeedTree {
    SeedTree::new(seed).child(INSTANCE_STREAM).child(cell as u64).child(trial as u64)
}

/// Per-cell aggregate of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub k: usize,
    pub theta: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_error: f64,
    pub median_error: f64,
    pub non_optimal: usize,
}

pub fn summarize_cells(records: &[TrialRecord], success_tol: f64) -> Vec<CellSummary> {
    let mut cells: Vec<usize> = records.iter().map(|r| r.cell).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
        .into_iter()
        .map(|cell| {
            let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.cell == cell).collect();
            let mut errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
            errs.sort_by(f64::total_cmp);
            let successes = rows.iter().filter(|r| r.succeeded(success_tol)).count();
            let median_error = if errs.is_empty() {
                f64::NAN
            } else if errs.len() % 2 == 1 {
                errs[errs.len() / 2]
            } else {
                0.5 * (errs[errs.len() / 2 - 1] + errs[errs.len() / 2])
            };
            CellSummary {
                cell,
                k: rows[0].k,
                theta: rows[0].theta,
                trials: rows.len(),
                successes,
                success_rate: successes as f64 / rows.len() as f64,
                mean_error: errs.iter().sum::<f64>() / errs.len() as f64,
                median_error,
                non_optimal: rows.iter().filter(|r| !r.is_optimal()).count(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub rows: usize,
    pub non_optimal_rows: usize,
    pub within_failure_budget: bool,
    pub cells: Vec<CellSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_sweeps: Option<Vec<TauSweepResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency: Option<Vec<ConsistencyRow>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
}

impl ExperimentOutput {
    /// Writes `records.csv`, `timings.csv`, `summary.json` and, for consistency
    /// runs, `consistency.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_records_csv(&self.records, std::fs::File::create(dir.join("records.csv"))?)?;
        let mut t = std::fs::File::create(dir.join("timings.csv"))?;
        writeln!(t, "cell,trial,wall_ms")?;
        for r in &self.records {
            writeln!(t, "{},{},{:.3}", r.cell, r.trial, r.wall_ms)?;
        }
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)?)?;
        if let Some(rows) = &self.summary.consistency {
            let mut w = csv::Writer::from_path(dir.join("consistency.csv"))?;
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    kind: ExperimentKind,
    cell: usize,
    trial: usize,
    k: usize,
    theta: f64,
    n_code: usize,
    d: u32,
    m: usize,
    ensemble: u64,
    tau: f64,
    status: &'a str,
    error: f64,
    numerical_sparsity: usize,
    l1: f64,
    residual: f64,
    kkt: f64,
    iterations: usize,
    rip_delta: f64,
    bound: f64,
    truth: &'a str,
    recovered: &'a str,
}

/// All record fields except the wall time.
pub fn write_records_csv<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            kind: r.kind,
            cell: r.cell,
            trial: r.trial,
            k: r.k,
            theta: r.theta,
            n_code: r.n_code,
            d: r.d,
            m: r.m,
            ensemble: r.ensemble,
            tau: r.tau,
            status: &r.status,
            error: r.error,
            numerical_sparsity: r.numerical_sparsity,
            l1: r.l1,
            residual: r.residual,
            kkt: r.kkt,
            iterations: r.iterations,
            rip_delta: r.rip_delta,
            bound: r.bound,
            truth: &r.truth,
            recovered: &r.recovered,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the experiment described by `cfg`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let (records, tau_sweeps, consistency) = match cfg.kind {
        ExperimentKind::Exact => (run_exact_recovery(cfg)?, None, None),
        ExperimentKind::Approx => (run_approx_recovery(cfg)?, None, None),
        ExperimentKind::TauSweep => {
            let sweeps = tau_sweep(cfg)?;
            let records = sweeps.iter().filter_map(|s| s.record.clone()).collect();
            (records, Some(sweeps), None)
        }
        ExperimentKind::Consistency => {
            let rows = run_consistency(cfg)?;
            (rows.iter().filter_map(|r| r.record.clone()).collect(), None, Some(rows))
        }
    };
    let non_optimal_rows = records.iter().filter(|r| !r.is_optimal()).count();
    let within_failure_budget = (non_optimal_rows as f64) <= cfg.failure_budget * records.len() as f64;
    let summary = Summary {
        config: cfg.clone(),
        rows: records.len(),
        non_optimal_rows,
        within_failure_budget,
        cells: summarize_cells(&records, cfg.success_tol),
        tau_sweeps,
        consistency,
    };
    Ok(ExperimentOutput { records, summary })
}
