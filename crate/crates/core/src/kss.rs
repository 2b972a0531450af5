//! Kostlan–Shub–Smale random polynomials.
//!
//! A KSS polynomial of degree at most `d` in `n` variables is
//! `P(x) = sum_{|a| <= d} A_a x^a` with independent `A_a ~ N(0, binom(d; a) / 2^d)`,
//! where `binom(d; a) = d! / ((d - |a|)! prod a_i!)`. Its law is invariant under
//! the orthogonal group, and on the sphere `E[P(x) P(y)] = ((1 + <x, y>) / 2)^d`.
//!
//! Two samplers are provided. [`sample_kss`] draws coefficients, which is the
//! faithful construction but scales with `C(n + d, n)`. [`KernelSampler`] draws
//! the evaluation vector on a fixed code directly from its covariance, which
//! scales with the code size only and is the only option for large `d`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::codes::{parse_row, SphericalCode, UnitVector};
use crate::error::{invalid, Error, Result};
use crate::rng::SeedTree;

/// Exponent vector of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }
}

/// `C(n + d, n)`, the number of monomials of degree at most `d` in `n` variables.
pub fn monomial_count(n: usize, d: u32) -> usize {
    let (n, d) = (n as u128, d as u128);
    let mut c: u128 = 1;
    for i in 1..=n.min(d) {
        c = c * (n + d + 1 - i) / i;
    }
    c as usize
}

/// All multi-indices with `|a| <= d`, in lexicographic order of exponent vectors.
pub fn enumerate_multiindices(n: usize, d: u32) -> Vec<MultiIndex> {
    fn rec(prefix: &mut Vec<u32>, n: usize, left: u32, out: &mut Vec<MultiIndex>) {
        if prefix.len() == n {
            out.push(MultiIndex(prefix.clone()));
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            rec(prefix, n, left - e, out);
            prefix.pop();
        }
    }
    let mut out = Vec::with_capacity(monomial_count(n, d));
    if n == 0 {
        return out;
    }
    rec(&mut Vec::with_capacity(n), n, d, &mut out);
    out
}

fn ln_factorial_table(d: u32) -> Vec<f64> {
    let mut t = Vec::with_capacity(d as usize + 1);
    t.push(0.0);
    let mut acc = 0.0;
    for i in 1..=d {
        acc += (i as f64).ln();
        t.push(acc);
    }
    t
}

fn ln_multinomial(alpha: &MultiIndex, d: u32, lnf: &[f64]) -> f64 {
    let k = alpha.degree();
    lnf[d as usize] - lnf[(d - k) as usize] - alpha.0.iter().map(|&a| lnf[a as usize]).sum::<f64>()
}

/// Variance `binom(d; a) / 2^d` of the coefficient `A_a`.
pub fn kss_variance(alpha: &MultiIndex, d: u32) -> Result<f64> {
    if alpha.degree() > d {
        return invalid(format!("|alpha| = {} exceeds d = {d}", alpha.degree()));
    }
    let lnf = ln_factorial_table(d);
    Ok((ln_multinomial(alpha, d, &lnf) - d as f64 * std::f64::consts::LN_2).exp())
}

/// Monomials `x^a` for all `|a| <= d`, in the order of [`enumerate_multiindices`].
///
/// Shared prefixes are multiplied once: the value for `(a_1, .., a_n)` is
/// `x_1^{a_1}` times the value of the suffix monomial.
pub fn monomials(x: &[f64], d: u32) -> Vec<f64> {
    fn rec(x: &[f64], left: u32, prefix: f64, out: &mut Vec<f64>) {
        let Some((&head, tail)) = x.split_first() else {
            out.push(prefix);
            return;
        };
        let mut p = prefix;
        for e in 0..=left {
            rec(tail, left - e, p, out);
            p *= head;
        }
    }
    let mut out = Vec::with_capacity(monomial_count(x.len(), d));
    if !x.is_empty() {
        rec(x, d, 1.0, &mut out);
    }
    out
}

/// Coefficient layout for degree-`d` polynomials in `n` variables, with the
/// KSS standard deviation of each coefficient.
#[derive(Debug, Clone)]
pub struct KssBasis {
    n: usize,
    d: u32,
    indices: Vec<MultiIndex>,
    std_devs: Vec<f64>,
}

impl KssBasis {
    pub fn new(n: usize, d: u32) -> Result<Self> {
        if n == 0 {
            return invalid("polynomials need n >= 1 variables");
        }
        let indices = enumerate_multiindices(n, d);
        let lnf = ln_factorial_table(d);
        let std_devs = indices
            .iter()
            .map(|a| (0.5 * (ln_multinomial(a, d, &lnf) - d as f64 * std::f64::consts::LN_2)).exp())
            .collect();
        Ok(Self { n, d, indices, std_devs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn std_devs(&self) -> &[f64] {
        &self.std_devs
    }

    /// One polynomial drawn from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> KssPolynomial {
        let coeffs = self
            .std_devs
            .iter()
            .map(|s| s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        KssPolynomial { n: self.n, d: self.d, coeffs }
    }

    /// `monomials(q, d)` for every code point, one column per point.
    pub fn monomial_matrix(&self, code: &SphericalCode) -> Result<DMatrix<f64>> {
        if code.dim() != self.n {
            return invalid(format!("code dimension {} vs polynomial dimension {}", code.dim(), self.n));
        }
        let mut m = DMatrix::zeros(self.len(), code.len());
        for (j, q) in code.points().iter().enumerate() {
            m.set_column(j, &nalgebra::DVector::from_vec(monomials(q.coords(), self.d)));
        }
        Ok(m)
    }
}

/// A polynomial with one coefficient per multi-index of [`KssBasis`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct KssPolynomial {
    n: usize,
    d: u32,
    coeffs: Vec<f64>,
}

impl KssPolynomial {
    /// `coeffs` in the order of [`enumerate_multiindices`]`(n, d)`.
    pub fn from_coeffs(n: usize, d: u32, coeffs: Vec<f64>) -> Result<Self> {
        let expect = monomial_count(n, d);
        if coeffs.len() != expect {
            return invalid(format!("expected {expect} coefficients, got {}", coeffs.len()));
        }
        Ok(Self { n, d, coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> Option<f64> {
        if alpha.n() != self.n || alpha.degree() > self.d {
            return None;
        }
        let pos = enumerate_multiindices(self.n, self.d).binary_search(alpha).ok()?;
        Some(self.coeffs[pos])
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &KssPolynomial, b: f64) -> Result<Self> {
        if self.n != other.n || self.d != other.d {
            return invalid("combining polynomials of different shapes");
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| a * x + b * y).collect();
        Ok(Self { n: self.n, d: self.d, coeffs })
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.n, self.d)?;
        for (alpha, c) in enumerate_multiindices(self.n, self.d).iter().zip(&self.coeffs) {
            let mut line = String::new();
            for e in alpha.exponents() {
                write!(line, "{e} ").expect("write to string");
            }
            write!(line, "{c:.16e}").expect("write to string");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads consecutive `n d` blocks until end of input.
    pub fn read_all<R: BufRead>(input: R) -> Result<Vec<Self>> {
        let mut lines = input.lines();
        let mut polys = Vec::new();
        while let Some(header) = lines.next() {
            let header = header?;
            if header.trim().is_empty() {
                continue;
            }
            let head = parse_row(&header)?;
            let [n, d] = head[..] else {
                return Err(Error::Parse(format!("polynomial header must be \"n d\", got {header:?}")));
            };
            let (n, d) = (n as usize, d as u32);
            let layout = enumerate_multiindices(n, d);
            let mut coeffs = Vec::with_capacity(layout.len());
            for alpha in &layout {
                let line = lines.next().ok_or_else(|| Error::Parse("truncated polynomial".into()))??;
                let row = parse_row(&line)?;
                if row.len() != n + 1 {
                    return Err(Error::Parse(format!("term line {line:?} must have {} fields", n + 1)));
                }
                let exps: Vec<u32> = row[..n].iter().map(|&e| e as u32).collect();
                if exps != alpha.exponents() {
                    return Err(Error::Parse(format!("term {exps:?} out of lexicographic order")));
                }
                coeffs.push(row[n]);
            }
            polys.push(Self { n, d, coeffs });
        }
        Ok(polys)
    }
}

/// `m` independent KSS polynomials; polynomial `i` uses stream `(seed, i)`.
pub fn sample_kss(n: usize, d: u32, m: usize, seed: u64) -> Result<Vec<KssPolynomial>> {
    let basis = KssBasis::new(n, d)?;
    Ok(sample_with_basis(&basis, m, SeedTree::new(seed)))
}

pub(crate) fn sample_with_basis(basis: &KssBasis, m: usize, tree: SeedTree) -> Vec<KssPolynomial> {
    (0..m)
        .into_par_iter()
        .map(|i| basis.sample(&mut tree.child(i as u64).rng()))
        .collect()
}

pub fn evaluate(p: &KssPolynomial, x: &UnitVector) -> Result<f64> {
    evaluate_raw(p, x.coords())
}

/// Evaluation at an arbitrary point of `R^n`.
pub fn evaluate_raw(p: &KssPolynomial, x: &[f64]) -> Result<f64> {
    if x.len() != p.n {
        return invalid(format!("point dimension {} vs polynomial dimension {}", x.len(), p.n));
    }
    Ok(monomials(x, p.d).iter().zip(&p.coeffs).map(|(m, c)| m * c).sum())
}

const LOG_SPACE_BASE: f64 = 1e-3;

fn kernel_from_inner(ip: f64, d: u32) -> f64 {
    let base = ((1.0 + ip.clamp(-1.0, 1.0)) / 2.0).max(0.0);
    if d == 0 {
        1.0
    } else if base == 0.0 {
        0.0
    } else if base < LOG_SPACE_BASE {
        // Underflows to 0 for large d, which is the correct limit.
        (d as f64 * base.ln()).exp()
    } else {
        base.powi(d as i32)
    }
}

/// `((1 + <x, y>) / 2)^d`, the covariance of `P(x)` and `P(y)`.
pub fn kernel_value(x: &UnitVector, y: &UnitVector, d: u32) -> Result<f64> {
    if x.dim() != y.dim() {
        return invalid(format!("dimension mismatch: {} vs {}", x.dim(), y.dim()));
    }
    Ok(kernel_from_inner(x.dot(y), d))
}

/// Kernel matrix between two point lists (rows from `left`).
pub fn cross_kernel(left: &[UnitVector], right: &[UnitVector], d: u32) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(left.len(), right.len());
    for (i, x) in left.iter().enumerate() {
        for (j, y) in right.iter().enumerate() {
            out[(i, j)] = kernel_value(x, y, d)?;
        }
    }
    Ok(out)
}

/// Covariance matrix of the evaluations of a KSS polynomial on a code.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    d: u32,
}

impl KernelMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    /// Principal submatrix on `subset`.
    pub fn restrict(&self, subset: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(subset.len(), subset.len(), |i, j| self.entries[(subset[i], subset[j])])
    }
}

pub fn kernel_matrix(code: &SphericalCode, d: u32) -> KernelMatrix {
    let n = code.len();
    let mut v = DMatrix::identity(n, n);
    for s in 0..n {
        for t in (s + 1)..n {
            let k = kernel_from_inner(code.point(s).dot(code.point(t)), d);
            v[(s, t)] = k;
            v[(t, s)] = k;
        }
    }
    KernelMatrix { entries: v, d }
}

/// Exact sampler of `(P(q_1), .., P(q_N))` as `N(0, V)`.
///
/// Uses `V = Q diag(max(lambda, 0)) Q^T`, so the factor exists even when `V`
/// is numerically singular.
#[derive(Debug, Clone)]
pub struct KernelSampler {
    factor: DMatrix<f64>,
    d: u32,
}

impl KernelSampler {
    pub fn new(code: &SphericalCode, d: u32) -> Self {
        Self::from_matrix(kernel_matrix(code, d).into_inner(), d)
    }

    /// Joint sampler over an arbitrary point list; repeated points are allowed.
    pub fn from_points(points: &[UnitVector], d: u32) -> Result<Self> {
        Ok(Self::from_matrix(cross_kernel(points, points, d)?, d))
    }

    fn from_matrix(v: DMatrix<f64>, d: u32) -> Self {
        let eig = SymmetricEigen::new(v);
        let mut factor = eig.eigenvectors;
        for (j, lambda) in eig.eigenvalues.iter().enumerate() {
            let s = lambda.max(0.0).sqrt();
            factor.column_mut(j).scale_mut(s);
        }
        Self { factor, d }
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn code_len(&self) -> usize {
        self.factor.nrows()
    }

    /// One evaluation vector (a row of `X`) from `rng`.
    pub fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.factor.ncols();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let z = nalgebra::DVector::from_vec(z);
        (&self.factor * z).iter().copied().collect()
    }

    /// `m x N` matrix of evaluations; row `i` uses stream `(tree, i)`.
    pub fn sample_evaluations(&self, m: usize, tree: SeedTree) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| self.sample_row(&mut tree.child(i as u64).rng()))
            .collect();
        let n = self.code_len();
        DMatrix::from_fn(m, n, |i, j| rows[i][j])
    }
}
