use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::codes::{make_circle_code, make_e8_code, SphericalCode};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Exact,
    Approx,
    TauSweep,
    Consistency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CodeSpec {
    Circle { points: usize },
    E8,
    /// A code in the text format of [`SphericalCode::write_text`].
    File { path: PathBuf },
}

impl CodeSpec {
    pub fn build(&self) -> Result<SphericalCode> {
        match self {
            CodeSpec::Circle { points } => make_circle_code(*points),
            CodeSpec::E8 => Ok(make_e8_code()),
            CodeSpec::File { path } => {
                let f = std::fs::File::open(path)?;
                SphericalCode::read_text(std::io::BufReader::new(f))
            }
        }
    }
}

/// How recovered coefficients become a measure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdPolicy {
    /// Keep coefficients above `t`, then rescale to unit mass.
    #[default]
    Threshold,
    /// Keep the positive part, unnormalized.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsityRange {
    pub min: usize,
    pub max: usize,
}

impl Default for SparsityRange {
    fn default() -> Self {
        Self { min: 1, max: 1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Either explicit `values` or `count` points between `min` and `max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauGrid {
    Values { values: Vec<f64> },
    Range {
        #[serde(default)]
        min: f64,
        max: f64,
        count: usize,
        #[serde(default)]
        spacing: Spacing,
    },
}

impl Default for TauGrid {
    fn default() -> Self {
        TauGrid::Range { min: 0.0, max: 0.1, count: 21, spacing: Spacing::Linear }
    }
}

impl TauGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            TauGrid::Values { values } => values.clone(),
            TauGrid::Range { min, max, count, spacing } => {
                if *count < 2 || !(max > min) {
                    return invalid(format!("tau range needs count >= 2 and max > min, got {count}, [{min}, {max}]"));
                }
                let n = (*count - 1) as f64;
                match spacing {
                    Spacing::Linear => (0..*count).map(|i| min + (max - min) * i as f64 / n).collect(),
                    Spacing::Log => {
                        if !(*min > 0.0) {
                            return invalid("log-spaced tau grid needs min > 0");
                        }
                        let (a, b) = (min.ln(), max.ln());
                        (0..*count).map(|i| (a + (b - a) * i as f64 / n).exp()).collect()
                    }
                }
            }
        };
        if v.is_empty() {
            return invalid("empty tau grid");
        }
        if v.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return invalid("tau values must be finite and >= 0");
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("tau grid must be strictly ascending");
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iter: 200_000 }
    }
}

/// Nested circle codes `base * 2^j` and a fixed measure on the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencyConfig {
    pub base: usize,
    pub levels: usize,
    /// Atom angles in radians.
    pub angles: Vec<f64>,
    /// Atom weights; uniform when empty. Normalized to a probability vector.
    #[serde(default)]
    pub weights: Vec<f64>,
    /// Upper limit on the per-level sample size from the RIP sample bound.
    pub m_cap: usize,
    #[serde(default)]
    pub tau_rule: TauRule,
}

/// Constraint radius of each consistency level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauRule {
    /// `(1 + eps) ||g|| sqrt(2k (1 - ((1 + cos theta)/2)^d))`.
    #[default]
    Bound,
    /// `(1 + eps) ||b_mu - Phi c_{mu_C}||`, which needs the true measure.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub code: CodeSpec,
    #[serde(default)]
    pub d: u32,
    #[serde(default)]
    pub m: usize,
    /// Sparsity range of exact-recovery sweeps.
    #[serde(default)]
    pub sparsity: SparsityRange,
    /// Atom count of off-code measures.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Offsets (radians) of the atoms from their nearest code points.
    #[serde(default)]
    pub offsets: Vec<f64>,
    #[serde(default)]
    pub tau: TauGrid,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub threshold_policy: ThresholdPolicy,
    /// Numerical sparsity counts `|c_i| > sparsity_threshold * ||c||_inf`.
    #[serde(default = "default_sparsity_threshold")]
    pub sparsity_threshold: f64,
    /// Trials with `||c - c*|| < success_tol` count as recovered.
    #[serde(default = "default_success_tol")]
    pub success_tol: f64,
    /// Fraction of rows allowed to end in a non-optimal status.
    #[serde(default)]
    pub failure_budget: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub consistency: Option<ConsistencyConfig>,
}

fn default_trials() -> usize {
    1
}

fn default_k() -> usize {
    3
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_sparsity_threshold() -> f64 {
    1e-4
}

fn default_success_tol() -> f64 {
    1e-5
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return invalid("trials must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return invalid(format!("epsilon = {} must lie in (0, 1)", self.epsilon));
        }
        if !(self.sparsity_threshold > 0.0) || !(self.success_tol > 0.0) {
            return invalid("thresholds must be positive");
        }
        if !(0.0..=1.0).contains(&self.failure_budget) {
            return invalid("failure_budget must lie in [0, 1]");
        }
        if self.solver.max_iter == 0 {
            return invalid("solver.max_iter must be positive");
        }
        match self.kind {
            ExperimentKind::Exact => {
                if self.sparsity.min > self.sparsity.max {
                    return invalid("sparsity.min exceeds sparsity.max");
                }
                self.require_ensemble()?;
            }
            ExperimentKind::Approx | ExperimentKind::TauSweep => {
                self.require_ensemble()?;
                if self.k == 0 {
                    return invalid("k must be positive");
                }
                if self.kind == ExperimentKind::Approx && self.offsets.is_empty() {
                    return invalid("approx runs need a nonempty offsets grid");
                }
                if self.offsets.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                    return invalid("offsets must be finite and >= 0");
                }
                self.tau.values()?;
            }
            ExperimentKind::Consistency => {
                let Some(c) = &self.consistency else {
                    return invalid("consistency runs need a [consistency] section");
                };
                if c.levels == 0 || c.base < 2 || c.m_cap == 0 {
                    return invalid("consistency needs levels >= 1, base >= 2, m_cap >= 1");
                }
                if c.angles.is_empty() {
                    return invalid("consistency needs at least one atom angle");
                }
                if !c.weights.is_empty() && (c.weights.len() != c.angles.len() || c.weights.iter().any(|w| !(*w > 0.0))) {
                    return invalid("consistency weights must be positive, one per angle");
                }
            }
        }
        Ok(())
    }

    fn require_ensemble(&self) -> Result<()> {
        if self.m == 0 {
            return invalid("m must be positive");
        }
        Ok(())
    }
}
