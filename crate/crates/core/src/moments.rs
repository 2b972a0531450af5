//! Measurement ensembles, moment vectors and the mean-squared-error form.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::codes::{parse_row, SphericalCode, UnitVector};
use crate::error::{invalid, Error, Result};
use crate::kss::{cross_kernel, kernel_matrix, monomials, sample_with_basis, KernelSampler, KssBasis, KssPolynomial};
use crate::linalg::{select_columns, spd_solve};
use crate::measure::DiscreteMeasure;
use crate::rng::SeedTree;

/// How the evaluations `P_i(q_j)` were drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerRoute {
    /// Independent Gaussian coefficients, then exact evaluation.
    Coefficients,
    /// Evaluation vectors drawn from `N(0, V)` on the code and any extra points.
    Kernel,
}

/// Everything needed to regenerate an ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnsembleId {
    pub code_id: String,
    pub d: u32,
    pub m: usize,
    pub seed: u64,
    pub route: SamplerRoute,
}

#[derive(Debug, Clone)]
enum Evaluator {
    Polynomials(Vec<KssPolynomial>),
    /// Joint draws at points off the code; columns of `values` follow `points`.
    Points { points: Vec<UnitVector>, values: DMatrix<f64> },
}

/// The normalized measurement matrix `Phi = X / sqrt(m)`, `X_ij = P_i(q_j)`.
#[derive(Debug, Clone)]
pub struct MeasurementEnsemble {
    phi: DMatrix<f64>,
    id: EnsembleId,
    evaluator: Evaluator,
}

/// Label for a code, stable across runs.
pub fn code_id(code: &SphericalCode) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in code.points() {
        for x in p.coords() {
            h ^= x.to_bits();
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("S{}-N{}-{h:016x}", code.dim() - 1, code.len())
}

fn measure_id(mu: &DiscreteMeasure) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for a in mu.atoms() {
        for x in a.point.coords().iter().chain(std::iter::once(&a.weight)) {
            h ^= x.to_bits();
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("mu-{}-{h:016x}", mu.atoms().len())
}

/// Coefficient-route ensemble: polynomial `i` uses stream `(seed, i)`.
pub fn build_ensemble(code: &SphericalCode, d: u32, m: usize, seed: u64) -> Result<MeasurementEnsemble> {
    build_ensemble_in(code, d, m, SeedTree::new(seed), seed)
}

/// As [`build_ensemble`] but drawing from an arbitrary node of the stream tree.
pub fn build_ensemble_in(
    code: &SphericalCode,
    d: u32,
    m: usize,
    tree: SeedTree,
    seed: u64,
) -> Result<MeasurementEnsemble> {
    if m == 0 {
        return invalid("an ensemble needs m >= 1 measurements");
    }
    let basis = KssBasis::new(code.dim(), d)?;
    let polys = sample_with_basis(&basis, m, tree);
    let mono = basis.monomial_matrix(code)?;
    let coeffs = DMatrix::from_fn(m, basis.len(), |i, j| polys[i].coeffs()[j]);
    let phi = (coeffs * mono) / (m as f64).sqrt();
    let id = EnsembleId { code_id: code_id(code), d, m, seed, route: SamplerRoute::Coefficients };
    Ok(MeasurementEnsemble { phi, id, evaluator: Evaluator::Polynomials(polys) })
}

/// Kernel-route ensemble on `code`, jointly sampled with `extras` so that
/// measures supported on `code ∪ extras` have exact moments. Cost depends on
/// `N + extras.len()` only, not on `d`.
pub fn build_kernel_ensemble(
    code: &SphericalCode,
    extras: &[UnitVector],
    d: u32,
    m: usize,
    tree: SeedTree,
    seed: u64,
) -> Result<MeasurementEnsemble> {
    if m == 0 {
        return invalid("an ensemble needs m >= 1 measurements");
    }
    if let Some(x) = extras.iter().find(|x| x.dim() != code.dim()) {
        return invalid(format!("extra point of dimension {} for a code in dimension {}", x.dim(), code.dim()));
    }
    let mut points = code.points().to_vec();
    points.extend_from_slice(extras);
    let sampler = KernelSampler::from_points(&points, d)?;
    let x = sampler.sample_evaluations(m, tree) / (m as f64).sqrt();
    let n = code.len();
    let phi = x.columns(0, n).into_owned();
    let values = x.columns(n, extras.len()).into_owned();
    let id = EnsembleId { code_id: code_id(code), d, m, seed, route: SamplerRoute::Kernel };
    Ok(MeasurementEnsemble { phi, id, evaluator: Evaluator::Points { points: extras.to_vec(), values } })
}

impl MeasurementEnsemble {
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn id(&self) -> &EnsembleId {
        &self.id
    }

    pub fn m(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_code(&self) -> usize {
        self.phi.ncols()
    }

    pub fn polynomials(&self) -> Option<&[KssPolynomial]> {
        match &self.evaluator {
            Evaluator::Polynomials(p) => Some(p),
            Evaluator::Points { .. } => None,
        }
    }

    /// Column `f_i(x) = P_i(x) / sqrt(m)` at a point. Code points are served from
    /// `Phi`; other points need the polynomials or a jointly sampled extra.
    fn column_at(&self, code: &SphericalCode, x: &UnitVector) -> Result<DVector<f64>> {
        if let Some(j) = code.index_of(x) {
            return Ok(self.phi.column(j).into_owned());
        }
        match &self.evaluator {
            Evaluator::Polynomials(polys) => {
                let mono = monomials(x.coords(), self.id.d);
                let scale = 1.0 / (self.m() as f64).sqrt();
                Ok(DVector::from_iterator(
                    polys.len(),
                    polys.iter().map(|p| scale * p.coeffs().iter().zip(&mono).map(|(a, b)| a * b).sum::<f64>()),
                ))
            }
            Evaluator::Points { points, values } => points
                .iter()
                .position(|p| p.dot(x) >= 1.0 - crate::codes::DISTINCT_TOL)
                .map(|k| values.column(k).into_owned())
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "point {:?} was not sampled with this kernel-route ensemble",
                        x.coords()
                    ))
                }),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(&self.phi, out)
    }
}

/// A moment vector tagged with the ensemble and measure it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub values: Vec<f64>,
    pub ensemble: Option<EnsembleId>,
    pub measure: String,
}

impl MomentVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    /// Fails unless this vector was computed against `ensemble`.
    pub fn check_against(&self, ensemble: &MeasurementEnsemble) -> Result<()> {
        match &self.ensemble {
            Some(id) if id == ensemble.id() && self.values.len() == ensemble.m() => Ok(()),
            Some(id) => Err(Error::ProvenanceMismatch(format!(
                "moments from {id:?} used with ensemble {:?}",
                ensemble.id()
            ))),
            None => Err(Error::ProvenanceMismatch("moments carry no ensemble provenance".into())),
        }
    }
}

/// `(b_mu)_i = sum_k w_k f_i(x_k)` with `f_i = P_i / sqrt(m)`.
pub fn moments_of(ensemble: &MeasurementEnsemble, code: &SphericalCode, mu: &DiscreteMeasure) -> Result<MomentVector> {
    if code_id(code) != ensemble.id().code_id {
        return Err(Error::ProvenanceMismatch("code differs from the ensemble's code".into()));
    }
    if let Some(n) = mu.dim() {
        if n != code.dim() {
            return invalid(format!("measure dimension {n} vs code dimension {}", code.dim()));
        }
    }
    let mut b = DVector::zeros(ensemble.m());
    for atom in mu.atoms() {
        b.axpy(atom.weight, &ensemble.column_at(code, &atom.point)?, 1.0);
    }
    Ok(MomentVector { values: b.iter().copied().collect(), ensemble: Some(ensemble.id().clone()), measure: measure_id(mu) })
}

/// Moments against an explicit list of functions, `(b_mu)_i = sum_k w_k P_i(x_k)`,
/// with no `1/sqrt(m)` normalization.
pub fn moments_of_polynomials(polys: &[KssPolynomial], mu: &DiscreteMeasure) -> Result<MomentVector> {
    let mut values = vec![0.0; polys.len()];
    for atom in mu.atoms() {
        for (v, p) in values.iter_mut().zip(polys) {
            *v += atom.weight * crate::kss::evaluate(p, &atom.point)?;
        }
    }
    Ok(MomentVector { values, ensemble: None, measure: measure_id(mu) })
}

/// Matrices of `Psi(r, c) = c^T V c - 2 c^T A r + r^T D r`, the expected squared
/// distance between the moments of `sum c_t delta_{q_t}` and `sum r_s delta_{y_s}`.
///
/// `V` is `N x N` over the code, `A` is `N x k` with `A[t, s] = K(q_t, y_s)`,
/// `D` is `k x k` over the support; all with exponent `d`.
#[derive(Debug, Clone)]
pub struct MseForm {
    pub v: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub dmat: DMatrix<f64>,
    pub d: u32,
}

pub fn mse_form(code: &SphericalCode, support: &[UnitVector], d: u32) -> Result<MseForm> {
    if support.is_empty() {
        return invalid("the MSE form needs a nonempty support");
    }
    if let Some(y) = support.iter().find(|y| y.dim() != code.dim()) {
        return invalid(format!("support point of dimension {} for code dimension {}", y.dim(), code.dim()));
    }
    Ok(MseForm {
        v: kernel_matrix(code, d).into_inner(),
        a: cross_kernel(code.points(), support, d)?,
        dmat: cross_kernel(support, support, d)?,
        d,
    })
}

impl MseForm {
    pub fn n_code(&self) -> usize {
        self.v.nrows()
    }

    pub fn k_support(&self) -> usize {
        self.dmat.nrows()
    }
}

pub fn psi(form: &MseForm, r: &[f64], c: &[f64]) -> Result<f64> {
    if r.len() != form.k_support() || c.len() != form.n_code() {
        return invalid(format!(
            "psi expects r of length {} and c of length {}, got {} and {}",
            form.k_support(),
            form.n_code(),
            r.len(),
            c.len()
        ));
    }
    let r = DVector::from_column_slice(r);
    let c = DVector::from_column_slice(c);
    Ok(c.dot(&(&form.v * &c)) - 2.0 * c.dot(&(&form.a * &r)) + r.dot(&(&form.dmat * &r)))
}

/// Minimizer `c*_S = V_S^{-1} A^S r` of `Psi(r, .)` over vectors supported on `subset`.
pub fn optimal_coeffs(form: &MseForm, subset: &[usize], r: &[f64]) -> Result<Vec<f64>> {
    if r.len() != form.k_support() {
        return invalid(format!("r has length {}, support has {}", r.len(), form.k_support()));
    }
    if subset.is_empty() {
        return invalid("empty subset");
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= form.n_code()) {
        return invalid(format!("subset index {i} out of range"));
    }
    let vs = DMatrix::from_fn(subset.len(), subset.len(), |i, j| form.v[(subset[i], subset[j])]);
    let a_rows = DMatrix::from_fn(subset.len(), form.k_support(), |i, j| form.a[(subset[i], j)]);
    let rhs = a_rows * DVector::from_column_slice(r);
    Ok(spd_solve(&vs, &rhs, subset)?.iter().copied().collect())
}

/// Scatter `values` on `subset` into a length-`n` vector.
pub fn embed(n: usize, subset: &[usize], values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (&i, &v) in subset.iter().zip(values) {
        out[i] = v;
    }
    out
}

/// Columns of `Phi` on `subset`.
pub fn restrict_columns(phi: &DMatrix<f64>, subset: &[usize]) -> DMatrix<f64> {
    select_columns(phi, subset)
}

/// Row-major CSV, 17 significant digits.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    for i in 0..m.nrows() {
        let mut line = String::new();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(',');
            }
            write!(line, "{:.16e}", m[(i, j)]).expect("write to string");
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_matrix_csv<R: BufRead>(input: R) -> Result<DMatrix<f64>> {
    let mut rows = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(parse_row(&line)?);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("ragged CSV: row of {} fields, expected {ncols}", r.len())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// A vector as one value per line.
pub fn write_vector_csv<W: Write>(v: &[f64], mut out: W) -> Result<()> {
    for x in v {
        writeln!(out, "{x:.16e}")?;
    }
    Ok(())
}

/// Reads a vector written one value per line or as a single CSV row.
pub fn read_vector_csv<R: BufRead>(input: R) -> Result<Vec<f64>> {
    let m = read_matrix_csv(input)?;
    if m.ncols() == 1 || m.nrows() == 1 {
        Ok(m.iter().copied().collect())
    } else {
        Err(Error::Parse(format!("expected a vector, got a {}x{} matrix", m.nrows(), m.ncols())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::make_circle_code;
    use crate::measure::Atom;
    use rayon::prelude::*;

    fn on_code(code: &SphericalCode, weights: &[(usize, f64)]) -> DiscreteMeasure {
        let atoms = weights.iter().map(|&(j, w)| Atom { point: code.point(j).clone(), weight: w }).collect();
        DiscreteMeasure::new(atoms, true).unwrap()
    }

    #[test]
    fn ensemble_is_deterministic() {
        let code = make_circle_code(7).unwrap();
        let a = build_ensemble(&code, 4, 9, 21).unwrap();
        let b = build_ensemble(&code, 4, 9, 21).unwrap();
        assert_eq!(a.phi(), b.phi());
        assert_eq!(a.phi().shape(), (9, 7));
        let c = build_ensemble(&code, 4, 9, 22).unwrap();
        assert_ne!(a.phi(), c.phi());
        assert!(build_ensemble(&code, 4, 0, 1).is_err());
    }

    #[test]
    fn phi_matches_direct_evaluation() {
        let code = make_circle_code(5).unwrap();
        let ens = build_ensemble(&code, 6, 4, 3).unwrap();
        let polys = ens.polynomials().unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let direct = crate::kss::evaluate(&polys[i], code.point(j)).unwrap() / 2.0;
                assert!((direct - ens.phi()[(i, j)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn moments_examples() {
        let code = make_circle_code(6).unwrap();
        let ens = build_ensemble(&code, 5, 8, 4).unwrap();
        let zero = moments_of(&ens, &code, &DiscreteMeasure::zero()).unwrap();
        assert!(zero.values.iter().all(|&x| x == 0.0));

        let single = moments_of(&ens, &code, &on_code(&code, &[(2, 1.0)])).unwrap();
        assert_eq!(single.values, ens.phi().column(2).iter().copied().collect::<Vec<_>>());

        let combo = moments_of(&ens, &code, &on_code(&code, &[(1, 2.0), (2, 3.0)])).unwrap();
        let polys = ens.polynomials().unwrap();
        for (i, b) in combo.values.iter().enumerate() {
            let direct = (2.0 * crate::kss::evaluate(&polys[i], code.point(1)).unwrap()
                + 3.0 * crate::kss::evaluate(&polys[i], code.point(2)).unwrap())
                / 8f64.sqrt();
            assert!((b - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn moments_off_code_use_polynomials() {
        let code = make_circle_code(6).unwrap();
        let ens = build_ensemble(&code, 5, 8, 4).unwrap();
        let x = UnitVector::on_circle(0.123);
        let mu = DiscreteMeasure::new(vec![Atom { point: x.clone(), weight: 1.5 }], false).unwrap();
        let b = moments_of(&ens, &code, &mu).unwrap();
        let polys = ens.polynomials().unwrap();
        let direct = moments_of_polynomials(polys, &mu).unwrap();
        for (u, v) in b.values.iter().zip(&direct.values) {
            assert!((u - v / 8f64.sqrt()).abs() < 1e-13);
        }
        assert!(direct.ensemble.is_none());
    }

    #[test]
    fn kernel_route_serves_extras() {
        let code = make_circle_code(6).unwrap();
        let x = UnitVector::on_circle(0.05);
        let ens = build_kernel_ensemble(&code, &[x.clone()], 40, 5, SeedTree::new(1), 1).unwrap();
        let mu = DiscreteMeasure::new(vec![Atom { point: x, weight: 1.0 }], false).unwrap();
        assert!(moments_of(&ens, &code, &mu).is_ok());
        let y = UnitVector::on_circle(0.5);
        let nu = DiscreteMeasure::new(vec![Atom { point: y, weight: 1.0 }], false).unwrap();
        assert!(moments_of(&ens, &code, &nu).is_err());
    }

    #[test]
    fn provenance_is_checked() {
        let code = make_circle_code(6).unwrap();
        let a = build_ensemble(&code, 3, 4, 1).unwrap();
        let b = build_ensemble(&code, 3, 4, 2).unwrap();
        let mom = moments_of(&a, &code, &on_code(&code, &[(0, 1.0)])).unwrap();
        assert!(mom.check_against(&a).is_ok());
        assert!(matches!(mom.check_against(&b), Err(Error::ProvenanceMismatch(_))));
        let other = make_circle_code(7).unwrap();
        assert!(moments_of(&a, &other, &DiscreteMeasure::zero()).is_err());
    }

    #[test]
    fn unit_column_second_moment() {
        // m = 1, single-point code: E[Phi^2] = 1.
        let code = SphericalCode::new(vec![UnitVector::on_circle(0.7)]).unwrap();
        let n = 20_000u64;
        let sq: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|s| build_ensemble_in(&code, 4, 1, SeedTree::new(s), s).unwrap().phi()[(0, 0)].powi(2))
            .collect();
        let mean = sq.iter().sum::<f64>() / n as f64;
        let sd = (sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn gram_expectation_matches_kernel() {
        // E[Phi^T Phi] = V over 10^4 ensembles.
        let code = make_circle_code(4).unwrap();
        let (d, m, trials) = (3u32, 5usize, 10_000u64);
        let grams: Vec<DMatrix<f64>> = (0..trials)
            .into_par_iter()
            .map(|s| {
                let e = build_ensemble_in(&code, d, m, SeedTree::new(77).child(s), s).unwrap();
                e.phi().transpose() * e.phi()
            })
            .collect();
        let v = kernel_matrix(&code, d).into_inner();
        for s in 0..4 {
            for t in 0..4 {
                let xs: Vec<f64> = grams.iter().map(|g| g[(s, t)]).collect();
                let mean = xs.iter().sum::<f64>() / trials as f64;
                let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
                assert!((mean - v[(s, t)]).abs() < 3.0 * sd / (trials as f64).sqrt(), "({s},{t})");
            }
        }
    }

    #[test]
    fn psi_examples() {
        let code = make_circle_code(5).unwrap();
        let support = code.points()[1..3].to_vec();
        let form = mse_form(&code, &support, 4).unwrap();
        assert_eq!(psi(&form, &[0.0, 0.0], &[0.0; 5]).unwrap(), 0.0);
        let r = [0.7, -1.3];
        let c = embed(5, &[1, 2], &r);
        assert!(psi(&form, &r, &c).unwrap().abs() < 1e-12);
        let rdr = psi(&form, &r, &[0.0; 5]).unwrap();
        assert!(rdr >= 0.0);
        assert!(psi(&form, &[1.0], &[0.0; 5]).is_err());

        let y = UnitVector::on_circle(0.2);
        let one = SphericalCode::new(vec![y.clone()]).unwrap();
        let f1 = mse_form(&one, &[y], 9).unwrap();
        for (r, c) in [(1.0, 0.3), (-2.0, 0.5), (0.0, 1.0)] {
            assert!((psi(&f1, &[r], &[c]).unwrap() - (c - r) * (c - r)).abs() < 1e-14);
        }
        assert!(mse_form(&code, &[], 3).is_err());
    }

    #[test]
    fn psi_matches_monte_carlo() {
        // E||b_mu - b_nu||^2 = Psi(r, c) over 10^4 ensembles.
        let code = make_circle_code(5).unwrap();
        let support = vec![UnitVector::on_circle(0.3), UnitVector::on_circle(2.0)];
        let r = [1.0, 0.6];
        let c = [0.9, 0.2, 0.0, 0.4, 0.0];
        let d = 4;
        let form = mse_form(&code, &support, d).unwrap();
        let expect = psi(&form, &r, &c).unwrap();
        let mu = DiscreteMeasure::new(
            support.iter().zip(r).map(|(p, w)| Atom { point: p.clone(), weight: w }).collect(),
            false,
        )
        .unwrap();
        let trials = 10_000u64;
        let vals: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|s| {
                let e = build_ensemble_in(&code, d, 6, SeedTree::new(5).child(s), s).unwrap();
                let b = moments_of(&e, &code, &mu).unwrap().as_dvector();
                let bc = e.phi() * DVector::from_column_slice(&c);
                (b - bc).norm_squared()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / trials as f64;
        let sd = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * sd / (trials as f64).sqrt(), "{mean} vs {expect}");
    }

    #[test]
    fn optimal_coeffs_examples() {
        let code = make_circle_code(8).unwrap();
        let support = vec![code.point(2).clone(), code.point(5).clone()];
        let form = mse_form(&code, &support, 6).unwrap();
        let c = optimal_coeffs(&form, &[2, 5], &[0.4, 1.1]).unwrap();
        assert!((c[0] - 0.4).abs() < 1e-12 && (c[1] - 1.1).abs() < 1e-12);

        let y = UnitVector::on_circle(0.1);
        let f = mse_form(&code, &[y.clone()], 6).unwrap();
        let c = optimal_coeffs(&f, &[0], &[2.0]).unwrap();
        let expect = 2.0 * crate::kss::kernel_value(&y, code.point(0), 6).unwrap();
        assert!((c[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn optimal_coeffs_first_order_condition() {
        let code = make_circle_code(10).unwrap();
        let support = vec![UnitVector::on_circle(0.2), UnitVector::on_circle(1.9), UnitVector::on_circle(4.0)];
        let form = mse_form(&code, &support, 5).unwrap();
        let r = [0.5, 1.2, 0.8];
        for subset in [vec![0, 3, 6], vec![1, 2], vec![9]] {
            let cs = optimal_coeffs(&form, &subset, &r).unwrap();
            let c = DVector::from_vec(embed(10, &subset, &cs));
            let grad = 2.0 * (&form.v * &c) - 2.0 * (&form.a * DVector::from_column_slice(&r));
            for &i in &subset {
                assert!(grad[i].abs() < 1e-8);
            }
            // Any other vector on the subset does no better.
            let base = psi(&form, &r, c.as_slice()).unwrap();
            let mut bumped = c.clone();
            bumped[subset[0]] += 1e-3;
            assert!(psi(&form, &r, bumped.as_slice()).unwrap() >= base - 1e-9);
        }
    }

    #[test]
    fn singular_subset_is_reported() {
        // d = 0: every kernel entry is 1, V_S is singular for |S| >= 2.
        let code = make_circle_code(4).unwrap();
        let form = mse_form(&code, &[code.point(0).clone()], 0).unwrap();
        match optimal_coeffs(&form, &[0, 1], &[1.0]) {
            Err(Error::SingularSystem { subset, .. }) => assert_eq!(subset, vec![0, 1]),
            other => panic!("expected singular system, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let code = make_circle_code(5).unwrap();
        let ens = build_ensemble(&code, 3, 4, 9).unwrap();
        let mut buf = Vec::new();
        ens.write_csv(&mut buf).unwrap();
        let back = read_matrix_csv(&buf[..]).unwrap();
        assert_eq!(&back, ens.phi());
        let mut vb = Vec::new();
        write_vector_csv(&[1.0, -2.5e-17], &mut vb).unwrap();
        assert_eq!(read_vector_csv(&vb[..]).unwrap(), vec![1.0, -2.5e-17]);
    }

    proptest::proptest! {
        #[test]
        fn moments_are_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..50) {
            let code = make_circle_code(9).unwrap();
            let ens = build_ensemble(&code, 4, 5, seed).unwrap();
            let mu = on_code(&code, &[(0, 1.0), (4, -0.5)]);
            let nu = on_code(&code, &[(4, 2.0), (7, 0.3)]);
            let combo = on_code(&code, &[(0, a), (4, -0.5 * a + 2.0 * b), (7, 0.3 * b)]);
            let lhs = moments_of(&ens, &code, &combo).unwrap();
            let bm = moments_of(&ens, &code, &mu).unwrap();
            let bn = moments_of(&ens, &code, &nu).unwrap();
            for i in 0..5 {
                let rhs = a * bm.values[i] + b * bn.values[i];
                proptest::prop_assert!((lhs.values[i] - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
            }
        }
    }
}
