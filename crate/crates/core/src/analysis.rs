//! Analytic quantities behind the recovery guarantees: restricted isometry
//! constants, Gershgorin bounds for kernel matrices, the chi-squared
//! concentration rate `c0`, the RIP probability and sample-size bounds for
//! kernel ensembles, the MSE bound for measures off the code, `tau*`, and the
//! stable-recovery constant `B1`.
//!
//! Probability bounds are evaluated in log space; the clamped value and the raw
//! logarithm are both returned.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::SphericalCode;
use crate::error::{invalid, Error, Result};
use crate::linalg::{spd_solve, sym_eigenvalues};
use crate::moments::MseForm;
use crate::rng::SeedTree;

/// Largest number of subsets enumerated by [`rip_constant`] and [`tau_star`].
pub const ENUMERATION_CAP: u64 = 1_000_000;
/// Subsets drawn when [`rip_constant`] falls back to sampling.
pub const RIP_SAMPLES: usize = 10_000;
const RIP_SAMPLE_SEED: u64 = 0x5249_50;

/// `C(n, k)` as a float (exact below 2^53).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Lexicographic `k`-subsets of `0..n`.
#[derive(Debug, Clone)]
pub struct Subsets {
    n: usize,
    next: Option<Vec<usize>>,
}

impl Subsets {
    pub fn new(n: usize, k: usize) -> Self {
        let next = if k <= n { Some((0..k).collect()) } else { None };
        Self { n, next }
    }
}

impl Iterator for Subsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let k = current.len();
        let mut succ = current.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if succ[i] < self.n - k + i {
                succ[i] += 1;
                for j in i + 1..k {
                    succ[j] = succ[j - 1] + 1;
                }
                self.next = Some(succ);
                break;
            }
        }
        Some(current)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RipMethod {
    ExactEnumeration,
    SampledLowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub s: usize,
    pub delta_s: f64,
    pub worst_subset: Vec<usize>,
    pub method: RipMethod,
    pub subsets_checked: u64,
}

fn gram_deviation(gram: &DMatrix<f64>, subset: &[usize]) -> f64 {
    let g = DMatrix::from_fn(subset.len(), subset.len(), |i, j| gram[(subset[i], subset[j])]);
    let ev = sym_eigenvalues(&g);
    (ev[ev.len() - 1] - 1.0).max(1.0 - ev[0])
}

/// Larger deviation wins; ties go to the lexicographically smaller subset.
fn worse(a: (f64, Vec<usize>), b: (f64, Vec<usize>)) -> (f64, Vec<usize>) {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Greater => a,
        std::cmp::Ordering::Less => b,
        std::cmp::Ordering::Equal => {
            if a.1 <= b.1 {
                a
            } else {
                b
            }
        }
    }
}

/// `delta_s(A) = max_{|S| = s} max(lambda_max(A_S^T A_S) - 1, 1 - lambda_min(A_S^T A_S))`.
///
/// Exact when `C(N, s) <= ENUMERATION_CAP`; otherwise the maximum over
/// [`RIP_SAMPLES`] random subsets, which is a lower bound.
pub fn rip_constant(a: &DMatrix<f64>, s: usize) -> Result<RipReport> {
    let n = a.ncols();
    if s == 0 || s > n {
        return invalid(format!("sparsity s = {s} must lie in 1..={n}"));
    }
    let gram = a.transpose() * a;
    let count = binomial(n, s);
    let (method, subsets): (RipMethod, Box<dyn Iterator<Item = Vec<usize>> + Send>) = if count <= ENUMERATION_CAP as f64 {
        (RipMethod::ExactEnumeration, Box::new(Subsets::new(n, s)))
    } else {
        let mut rng = SeedTree::new(RIP_SAMPLE_SEED).rng();
        let drawn: Vec<Vec<usize>> = (0..RIP_SAMPLES)
            .map(|_| {
                let mut v = sample(&mut rng, n, s).into_vec();
                v.sort_unstable();
                v
            })
            .collect();
        (RipMethod::SampledLowerBound, Box::new(drawn.into_iter()))
    };
    let (checked, (delta_s, worst_subset)) = subsets
        .par_bridge()
        .map(|sub| (1u64, (gram_deviation(&gram, &sub), sub)))
        .reduce(|| (0, (f64::NEG_INFINITY, Vec::new())), |x, y| (x.0 + y.0, worse(x.1, y.1)));
    Ok(RipReport { s, delta_s, worst_subset, method, subsets_checked: checked })
}

/// Interval `1 -/+ (k-1) ((1+alpha)/2)^d` containing the spectrum of `V_S`,
/// with `alpha` the largest inner product within `subset` unless overridden.
pub fn gershgorin_bounds(code: &SphericalCode, subset: &[usize], d: u32, alpha_override: Option<f64>) -> Result<(f64, f64)> {
    if subset.is_empty() {
        return invalid("empty subset");
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= code.len()) {
        return invalid(format!("subset index {i} out of range for a code of {}", code.len()));
    }
    let alpha = match alpha_override {
        Some(a) => a,
        None => {
            let mut a = -1.0f64;
            for (x, &i) in subset.iter().enumerate() {
                for &j in &subset[x + 1..] {
                    if i == j {
                        return invalid(format!("index {i} repeated in subset"));
                    }
                    a = a.max(code.point(i).dot(code.point(j)));
                }
            }
            a
        }
    };
    gershgorin_radius(subset.len(), alpha, d).map(|r| (1.0 - r, 1.0 + r))
}

/// `(k-1) ((1+alpha)/2)^d`.
pub fn gershgorin_radius(k: usize, alpha: f64, d: u32) -> Result<f64> {
    if !(alpha < 1.0) || alpha < -1.0 {
        return invalid(format!("alpha = {alpha} must lie in [-1, 1)"));
    }
    Ok((k.saturating_sub(1)) as f64 * ((1.0 + alpha) / 2.0).powi(d as i32))
}

/// `c0(eta) = min(ln(1/(1+eta))/2 + eta/2, ln(1/(1-eta))/2 - eta/2)` for `0 < eta < 1`.
pub fn c0(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return invalid(format!("eta = {eta} must lie in (0, 1)"));
    }
    let upper = 0.5 * (eta - eta.ln_1p());
    let lower = -0.5 * ((-eta).ln_1p() + eta);
    Ok(upper.min(lower))
}

/// `2 exp(-m c0(eta))`.
pub fn concentration_bound(m: usize, eta: f64) -> Result<f64> {
    Ok(2.0 * (-(m as f64) * c0(eta)?).exp())
}

/// A probability bound with its unclamped natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBound {
    pub value: f64,
    pub log_value: f64,
}

impl ProbabilityBound {
    fn from_log(log_value: f64) -> Self {
        Self { value: log_value.exp().clamp(0.0, 1.0), log_value }
    }
}

fn check_rip_inputs(n_code: usize, k: usize, delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 0.5) {
        return invalid(format!("delta = {delta} must lie in (0, 1/2)"));
    }
    if k == 0 || 2 * k > n_code {
        return invalid(format!("need 1 <= k and 2k <= N, got k = {k}, N = {n_code}"));
    }
    Ok(())
}

/// Bound on `P(delta_2k(Phi) > delta)`: `C(N,2k) (30/delta)^{2k} 2 exp(-m c0(delta/6))`.
pub fn theorem_b_probability(n_code: usize, k: usize, m: usize, delta: f64) -> Result<ProbabilityBound> {
    check_rip_inputs(n_code, k, delta)?;
    let log = ln_binomial(n_code, 2 * k) + (2 * k) as f64 * (30.0 / delta).ln() + 2f64.ln() - m as f64 * c0(delta / 6.0)?;
    Ok(ProbabilityBound::from_log(log))
}

/// Number of measurements `(2k ln(30 e N / (2k delta)) + ln 2) / c0(delta/6)`.
pub fn theorem_b_sample_bound(n_code: usize, k: usize, delta: f64) -> Result<f64> {
    check_rip_inputs(n_code, k, delta)?;
    let two_k = (2 * k) as f64;
    let numerator = two_k * (30.0 * std::f64::consts::E * n_code as f64 / (two_k * delta)).ln() + 2f64.ln();
    Ok(numerator / c0(delta / 6.0)?)
}

/// Smallest degree `d` at which the Gershgorin radius `eps = (2k-1)((1+alpha)/2)^d`
/// satisfies both `(1 + delta/6)(1 + eps) <= 1 + delta/5` and
/// `(1 - delta/6)(1 - eps) >= 1 - delta/5`, so that every `2k x 2k` principal
/// submatrix of `V` is close enough to the identity for the RIP bound to apply.
pub fn theorem_b_degree(alpha: f64, k: usize, delta: f64) -> Result<u32> {
    if !(delta > 0.0 && delta < 0.5) {
        return invalid(format!("delta = {delta} must lie in (0, 1/2)"));
    }
    if k == 0 {
        return invalid("k must be positive");
    }
    gershgorin_radius(2, alpha, 0)?;
    let ok = |eps: f64| {
        (1.0 + delta / 6.0) * (1.0 + eps) <= 1.0 + delta / 5.0 && (1.0 - delta / 6.0) * (1.0 - eps) >= 1.0 - delta / 5.0
    };
    for d in 0..=u32::MAX {
        if ok(gershgorin_radius(2 * k, alpha, d)?) {
            return Ok(d);
        }
        if d > 1 && ((1.0 + alpha) / 2.0).powi(d as i32) == 0.0 {
            break;
        }
    }
    Err(Error::InvalidArgument(format!("no degree satisfies the bound for alpha = {alpha}")))
}

/// `||g||^2 2k (1 - ((1 + cos theta)/2)^d)`, an upper bound on `E||b_mu - b_{mu_C}||^2`.
pub fn mse_bound(g: &[f64], k: usize, theta: f64, d: u32) -> Result<f64> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return invalid(format!("theta = {theta} must lie in [0, pi]"));
    }
    if k == 0 {
        return invalid("k must be positive");
    }
    let g2: f64 = g.iter().map(|x| x * x).sum();
    Ok(g2 * 2.0 * k as f64 * (1.0 - ((1.0 + theta.cos()) / 2.0).powi(d as i32)))
}

/// Constraint radius `(1 + eps) sqrt(mse_bound)` for denoising off-code measures.
pub fn theorem_c_tau(g: &[f64], k: usize, theta: f64, d: u32, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return invalid(format!("eps = {eps} must be positive"));
    }
    Ok((1.0 + eps) * mse_bound(g, k, theta, d)?.sqrt())
}

/// `1 - P(delta_2k >= sqrt2 - 1) - 2 exp(-m c0(eps))`, the success probability
/// attached to [`theorem_c_tau`]; the log field holds the log of the failure mass.
pub fn theorem_c_failure(n_code: usize, k: usize, m: usize, eps: f64) -> Result<ProbabilityBound> {
    let rip = theorem_b_probability(n_code, k, m, std::f64::consts::SQRT_2 - 1.0)?;
    let conc = (2f64).ln() - m as f64 * c0(eps)?;
    let hi = rip.log_value.max(conc);
    let log = hi + ((rip.log_value - hi).exp() + (conc - hi).exp()).ln();
    Ok(ProbabilityBound::from_log(log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauStar {
    pub tau_star: f64,
    pub subset: Vec<usize>,
    pub coeffs: Vec<f64>,
}

/// `tau* = sqrt(min_{|S| = k} Psi(c*_S, r))`, by enumeration of all `k`-subsets.
/// Subsets whose `V_S` fails the conditioning guard are skipped.
pub fn tau_star(form: &MseForm, r: &[f64], k: usize) -> Result<TauStar> {
    let n = form.n_code();
    if r.len() != form.k_support() {
        return invalid(format!("r has length {}, support has {}", r.len(), form.k_support()));
    }
    if k == 0 || k > n {
        return invalid(format!("k = {k} must lie in 1..={n}"));
    }
    if binomial(n, k) > ENUMERATION_CAP as f64 {
        return invalid(format!("C({n}, {k}) exceeds the enumeration cap {ENUMERATION_CAP}"));
    }
    let rv = DVector::from_column_slice(r);
    let w = &form.a * &rv;
    let base = rv.dot(&(&form.dmat * &rv));
    let best = Subsets::new(n, k)
        .par_bridge()
        .filter_map(|sub| {
            let vs = DMatrix::from_fn(k, k, |i, j| form.v[(sub[i], sub[j])]);
            let ws = DVector::from_fn(k, |i, _| w[sub[i]]);
            let c = spd_solve(&vs, &ws, &sub).ok()?;
            Some(((base - ws.dot(&c)).max(0.0), sub, c))
        })
        .reduce_with(|x, y| match x.0.total_cmp(&y.0) {
            std::cmp::Ordering::Less => x,
            std::cmp::Ordering::Greater => y,
            std::cmp::Ordering::Equal => {
                if x.1 <= y.1 {
                    x
                } else {
                    y
                }
            }
        });
    let (psi_min, subset, c) = best.ok_or_else(|| Error::SingularSystem { subset: Vec::new(), condition: f64::INFINITY })?;
    Ok(TauStar { tau_star: psi_min.sqrt(), subset, coeffs: c.iter().copied().collect() })
}

/// Stable-recovery constant `B1(delta) = 4 sqrt(1+delta) / (1 - (1+sqrt2) delta)`,
/// the form given in the cited compressed-sensing literature, valid for `delta < sqrt2 - 1`.
pub fn candes_error_constant(delta: f64) -> Result<f64> {
    let limit = std::f64::consts::SQRT_2 - 1.0;
    if !(delta >= 0.0 && delta < limit) {
        return invalid(format!("delta = {delta} must lie in [0, sqrt2 - 1)"));
    }
    Ok(4.0 * (1.0 + delta).sqrt() / (1.0 - (1.0 + std::f64::consts::SQRT_2) * delta))
}

/// A named bound with its inputs echoed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub inputs: BTreeMap<String, f64>,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundReport {
    fn new(name: &str, inputs: &[(&str, f64)], value: f64) -> Self {
        Self {
            name: name.to_owned(),
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value,
            log_value: None,
            note: None,
        }
    }
}

/// RIP probability at `m` (default: the sample bound, rounded up), the sample
/// bound, and `B1(delta)` when defined.
pub fn theorem_b_report(n_code: usize, k: usize, delta: f64, m: Option<usize>) -> Result<Vec<BoundReport>> {
    let bound = theorem_b_sample_bound(n_code, k, delta)?;
    let m = m.unwrap_or(bound.ceil() as usize);
    let p = theorem_b_probability(n_code, k, m, delta)?;
    let (nf, kf) = (n_code as f64, k as f64);
    let mut out = vec![
        BoundReport::new("sample-bound", &[("N", nf), ("k", kf), ("delta", delta)], bound),
        BoundReport {
            log_value: Some(p.log_value),
            ..BoundReport::new("rip-failure-probability", &[("N", nf), ("k", kf), ("m", m as f64), ("delta", delta)], p.value)
        },
        BoundReport::new("concentration-rate", &[("eta", delta / 6.0)], c0(delta / 6.0)?),
    ];
    if let Ok(b1) = candes_error_constant(delta) {
        out.push(BoundReport {
            note: Some("formula taken from the cited compressed-sensing reference".into()),
            ..BoundReport::new("B1", &[("delta", delta)], b1)
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{make_circle_code, make_e8_code, UnitVector};
    use crate::kss::kernel_matrix;
    use crate::moments::{mse_form, optimal_coeffs, psi};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let scale = 1.0 / (rows as f64).sqrt();
        DMatrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
    }

    /// Cyclic Jacobi eigenvalues, independent of the library eigensolver.
    fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        let mut a = a.clone();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    fn rip_by_jacobi(a: &DMatrix<f64>, s: usize) -> f64 {
        Subsets::new(a.ncols(), s)
            .map(|sub| {
                let cols = DMatrix::from_fn(a.nrows(), s, |i, j| a[(i, sub[j])]);
                let ev = jacobi_eigenvalues(&(cols.transpose() * &cols));
                (ev[s - 1] - 1.0).max(1.0 - ev[0])
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(8, 2), 28.0);
        assert_eq!(binomial(200, 2), 19900.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert!((ln_binomial(30, 10) - binomial(30, 10).ln()).abs() < 1e-12);
        assert_eq!(Subsets::new(8, 2).count(), 28);
        assert_eq!(Subsets::new(5, 0).collect::<Vec<_>>(), vec![Vec::<usize>::new()]);
        assert_eq!(Subsets::new(4, 3).collect::<Vec<_>>(), vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 3], vec![1, 2, 3]]);
    }

    #[test]
    fn jacobi_agrees_with_library() {
        let a = gaussian(5, 5, 3);
        let g = a.transpose() * &a;
        let (x, y) = (jacobi_eigenvalues(&g), sym_eigenvalues(&g));
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn rip_of_orthonormal_columns_is_zero() {
        let q = gaussian(6, 4, 1).qr().q();
        for s in 1..=4 {
            assert!(rip_constant(&q, s).unwrap().delta_s < 1e-12);
        }
    }

    #[test]
    fn rip_with_duplicate_columns() {
        let mut a = gaussian(5, 6, 2);
        for j in 0..6 {
            let n = a.column(j).norm();
            a.column_mut(j).scale_mut(1.0 / n);
        }
        let col = a.column(0).clone_owned();
        a.set_column(3, &col);
        let rep = rip_constant(&a, 2).unwrap();
        assert!(rep.delta_s >= 1.0 - 1e-12);
        assert_eq!(rep.worst_subset, vec![0, 3]);
        assert_eq!(rep.method, RipMethod::ExactEnumeration);
        assert_eq!(rep.subsets_checked, 15);
    }

    #[test]
    fn rip_matches_jacobi_enumeration() {
        let a = gaussian(6, 8, 7);
        let rep = rip_constant(&a, 2).unwrap();
        assert_eq!(rep.subsets_checked, 28);
        assert!((rep.delta_s - rip_by_jacobi(&a, 2)).abs() < 1e-10);
        let b = gaussian(7, 12, 8);
        for s in [2, 3] {
            assert!((rip_constant(&b, s).unwrap().delta_s - rip_by_jacobi(&b, s)).abs() < 1e-10);
        }
    }

    #[test]
    fn rip_sampled_fallback_is_a_lower_bound() {
        let a = gaussian(10, 60, 9);
        let sampled = rip_constant(&a, 5).unwrap();
        assert_eq!(sampled.method, RipMethod::SampledLowerBound);
        assert_eq!(sampled.subsets_checked, RIP_SAMPLES as u64);
        let exact4 = rip_constant(&a, 4).unwrap();
        assert_eq!(exact4.method, RipMethod::ExactEnumeration);
        // Every 5-subset contains 4-subsets, but not conversely; compare against exact s = 5 on a slice.
        let small = a.columns(0, 20).clone_owned();
        let exact = rip_constant(&small, 5).unwrap();
        assert_eq!(exact.method, RipMethod::ExactEnumeration);
        let sub_sampled = rip_constant(&small, 5).unwrap();
        assert!(sub_sampled.delta_s <= exact.delta_s + 1e-15);
        assert!(rip_constant(&a, 0).is_err());
        assert!(rip_constant(&a, 61).is_err());
    }

    #[test]
    fn gershgorin_examples() {
        let code = make_circle_code(4).unwrap();
        assert_eq!(gershgorin_bounds(&code, &[2], 5, None).unwrap(), (1.0, 1.0));
        let (lo, hi) = gershgorin_bounds(&code, &[0, 1, 2], 4, Some(0.0)).unwrap();
        assert!((lo - 0.875).abs() < 1e-15 && (hi - 1.125).abs() < 1e-15);
        assert!(gershgorin_bounds(&code, &[0, 1], 4, Some(1.0)).is_err());
        assert!(gershgorin_bounds(&code, &[0, 0], 4, None).is_err());
        assert!(gershgorin_bounds(&code, &[7], 4, None).is_err());
    }

    #[test]
    fn gershgorin_contains_kernel_spectra() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for (code, d) in [(make_circle_code(40).unwrap(), 20), (make_e8_code(), 6)] {
            let v = kernel_matrix(&code, d);
            for _ in 0..30 {
                let k = rng.random_range(1..=6);
                let sub = sample(&mut rng, code.len(), k).into_vec();
                let (lo, hi) = gershgorin_bounds(&code, &sub, d, None).unwrap();
                let ev = sym_eigenvalues(&v.restrict(&sub));
                assert!(ev[0] >= lo - 1e-10 && ev[k - 1] <= hi + 1e-10);
            }
        }
    }

    #[test]
    fn c0_examples() {
        let v = c0(0.1).unwrap();
        assert!((v - 0.002345).abs() < 1e-7, "{v}");
        let other = 0.5 * (1.0f64 / 0.9).ln() - 0.05;
        assert!((other - 0.0026802).abs() < 1e-7);
        assert!(c0(1e-6).unwrap() < 1e-9);
        for i in 1..100 {
            assert!(c0(i as f64 / 100.0).unwrap() > 0.0);
        }
        assert!(c0(0.0).is_err() && c0(1.0).is_err() && c0(f64::NAN).is_err());
    }

    #[test]
    fn concentration_examples() {
        assert_eq!(concentration_bound(0, 0.3).unwrap(), 2.0);
        let v = concentration_bound(10_000, 0.1).unwrap();
        assert!((v / (2.0 * (-10_000.0 * c0(0.1).unwrap()).exp()) - 1.0).abs() < 1e-12);
        assert!(v > 1.2e-10 && v < 1.4e-10, "{v}");
    }

    #[test]
    fn theorem_b_examples() {
        let delta = std::f64::consts::SQRT_2 - 1.0;
        let p = theorem_b_probability(200, 1, 100_000, delta).unwrap();
        assert!(p.value.is_finite() && p.value < 1.0);
        let huge = theorem_b_probability(200, 1, 100_000_000, 0.4999).unwrap();
        assert_eq!(huge.value, 0.0);
        assert!(huge.log_value < -1e3);
        let tiny = theorem_b_probability(200, 3, 10, 0.3).unwrap();
        assert_eq!(tiny.value, 1.0);
        assert!(tiny.log_value > 0.0);
        // The binomial term alone: C(8,2) = 28.
        let with = theorem_b_probability(8, 1, 0, 0.3).unwrap().log_value;
        let without = 2.0 * (30.0f64 / 0.3).ln() + 2f64.ln();
        assert!((with - without - 28f64.ln()).abs() < 1e-12);
        assert!(theorem_b_probability(200, 1, 10, 0.5).is_err());
        assert!(theorem_b_probability(3, 2, 10, 0.3).is_err());
    }

    #[test]
    fn sample_bound_examples() {
        let delta = std::f64::consts::SQRT_2 - 1.0;
        let m = theorem_b_sample_bound(200, 1, delta).unwrap();
        assert!((m - 1.79e4).abs() < 0.01e4, "{m}");
        // C(N, 2k) <= (eN/2k)^{2k}, so the probability bound is at most one at the sample bound.
        assert!(theorem_b_probability(200, 1, m.ceil() as usize, delta).unwrap().log_value <= 0.0);
        let mut last = 0.0;
        for n in [10, 100, 1000, 10_000] {
            let v = theorem_b_sample_bound(n, 2, 0.3).unwrap();
            assert!(v > last);
            last = v;
        }
        for k in 1..10 {
            for delta in [0.1, 0.3, 0.45] {
                let r = theorem_b_sample_bound(10_000, 2 * k, delta).unwrap() / theorem_b_sample_bound(10_000, k, delta).unwrap();
                assert!(r > 1.5 && r < 2.5, "{r}");
            }
        }
    }

    #[test]
    fn degree_selector() {
        let d = theorem_b_degree(0.5, 2, 0.3).unwrap();
        let holds = |d: u32| {
            let eps = gershgorin_radius(4, 0.5, d).unwrap();
            (1.0 + 0.05) * (1.0 + eps) <= 1.06 && (1.0 - 0.05) * (1.0 - eps) >= 0.94
        };
        assert!(holds(d) && !holds(d - 1));
        assert!(theorem_b_degree(1.0, 2, 0.3).is_err());
    }

    #[test]
    fn mse_bound_examples() {
        assert_eq!(mse_bound(&[0.5, 0.5], 2, 0.0, 30).unwrap(), 0.0);
        let (theta, d) = (0.2, 12);
        let k = 4;
        let uniform = vec![1.0 / k as f64; k];
        let v = mse_bound(&uniform, k, theta, d).unwrap();
        assert!((v - 2.0 * (1.0 - ((1.0 + theta.cos()) / 2.0).powi(d as i32))).abs() < 1e-15);
        assert!(mse_bound(&[1.0], 1, 4.0, 3).is_err());
        let tau = theorem_c_tau(&uniform, k, theta, d, 0.1).unwrap();
        assert!((tau - 1.1 * v.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn probability_weights_bound_general(w in proptest::collection::vec(0.01f64..1.0, 1..8), theta in 0.0f64..3.0, d in 0u32..40) {
            let s: f64 = w.iter().sum();
            let g: Vec<f64> = w.iter().map(|x| x / s).collect();
            let k = g.len();
            let general = mse_bound(&g, k, theta, d).unwrap();
            let flat = 2.0 * k as f64 * (1.0 - ((1.0 + theta.cos()) / 2.0).powi(d as i32));
            prop_assert!(general <= flat + 1e-12);
        }

        #[test]
        fn rip_monotone_in_s(seed in any::<u64>()) {
            let a = gaussian(7, 10, seed);
            let mut last = f64::NEG_INFINITY;
            for s in 1..=5 {
                let v = rip_constant(&a, s).unwrap().delta_s;
                prop_assert!(v >= last - 1e-12);
                last = v;
            }
        }

        #[test]
        fn gershgorin_holds_on_random_codes(seed in any::<u64>(), d in 1u32..12) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let pts: Vec<UnitVector> = (0..10)
                .map(|_| UnitVector::normalize((0..3).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap())
                .collect();
            let code = SphericalCode::new(pts).unwrap();
            let v = kernel_matrix(&code, d);
            let k = rng.random_range(1..=6);
            let sub = sample(&mut rng, 10, k).into_vec();
            let (lo, hi) = gershgorin_bounds(&code, &sub, d, None).unwrap();
            let ev = sym_eigenvalues(&v.restrict(&sub));
            prop_assert!(ev[0] >= lo - 1e-10 && ev[k - 1] <= hi + 1e-10);
        }
    }

    #[test]
    fn tau_star_cases() {
        let code = make_circle_code(6).unwrap();
        let on_code = vec![code.point(1).clone(), code.point(4).clone()];
        let form = mse_form(&code, &on_code, 4).unwrap();
        let ts = tau_star(&form, &[0.7, 0.3], 2).unwrap();
        assert!(ts.tau_star < 1e-6, "{}", ts.tau_star);
        assert_eq!(ts.subset, vec![1, 4]);

        let off = vec![UnitVector::on_circle(0.3), UnitVector::on_circle(2.5)];
        let form = mse_form(&code, &off, 4).unwrap();
        let r = [0.6, 0.4];
        let ts = tau_star(&form, &r, 2).unwrap();
        // Brute force with an independent solver (LU) and the quadratic form itself.
        let mut best = f64::INFINITY;
        for sub in Subsets::new(6, 2) {
            let vs = DMatrix::from_fn(2, 2, |i, j| form.v[(sub[i], sub[j])]);
            let rhs = DMatrix::from_fn(2, 2, |i, j| form.a[(sub[i], j)]) * DVector::from_column_slice(&r);
            let c = vs.lu().solve(&rhs).unwrap();
            let full = crate::moments::embed(6, &sub, c.as_slice());
            best = best.min(psi(&form, &r, &full).unwrap());
        }
        assert!((ts.tau_star - best.sqrt()).abs() < 1e-9);
        let direct = optimal_coeffs(&form, &ts.subset, &r).unwrap();
        for (x, y) in direct.iter().zip(&ts.coeffs) {
            assert!((x - y).abs() < 1e-10);
        }
        let mut last = f64::INFINITY;
        for k in 1..=6 {
            let t = tau_star(&form, &r, k).unwrap().tau_star;
            assert!(t <= last + 1e-9);
            last = t;
        }
        assert!(tau_star(&form, &r, 0).is_err());
    }

    #[test]
    fn candes_constant() {
        assert_eq!(candes_error_constant(0.0).unwrap(), 4.0);
        assert!(candes_error_constant(0.414).unwrap() > 1e3);
        assert!(candes_error_constant(std::f64::consts::SQRT_2 - 1.0).is_err());
        assert!(candes_error_constant(-0.1).is_err());
    }

    #[test]
    fn theorem_c_failure_combines_terms() {
        let p = theorem_c_failure(20, 1, 1_000_000, 0.1).unwrap();
        let rip = theorem_b_probability(20, 1, 1_000_000, std::f64::consts::SQRT_2 - 1.0).unwrap().log_value;
        let conc = 2f64.ln() - 1e6 * c0(0.1).unwrap();
        assert!((p.log_value.exp() - (rip.exp() + conc.exp())).abs() <= 1e-12 * p.log_value.exp());
    }

    #[test]
    fn report_preset() {
        let reps = theorem_b_report(200, 3, 0.4142, None).unwrap();
        assert_eq!(reps[0].name, "sample-bound");
        assert!(reps[1].log_value.is_some());
        assert_eq!(reps[0].inputs["N"], 200.0);
        assert!(reps.iter().any(|r| r.name == "B1" && r.note.is_some()));
        let json = serde_json::to_string(&reps).unwrap();
        assert!(json.contains("rip-failure-probability"));
    }
}
