//! Spherical codes: finite point sets on the unit sphere and the geometric
//! quantities (coherence `alpha`, covering angle `theta`) derived from them.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measure::{Atom, DiscreteMeasure};

/// Norm tolerance for [`UnitVector`].
pub const UNIT_TOL: f64 = 1e-12;
/// Two points whose inner product exceeds `1 - DISTINCT_TOL` are the same point.
pub const DISTINCT_TOL: f64 = 1e-12;
/// Inner-product slack under which two code points count as equidistant.
pub const TIE_TOL: f64 = 1e-12;

/// A point of `S^{n-1}`, `n >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps `coords`, which must already have unit norm to `1e-12`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return invalid(format!("unit vectors need n >= 2, got n = {}", coords.len()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return invalid("non-finite coordinate");
        }
        let norm = l2(&coords);
        if (norm - 1.0).abs() > UNIT_TOL {
            return invalid(format!("vector norm {norm} is not 1 within {UNIT_TOL:e}"));
        }
        Ok(Self(coords))
    }

    /// Scales `coords` onto the sphere.
    pub fn normalize(mut coords: Vec<f64>) -> Result<Self> {
        let norm = l2(&coords);
        if !(norm.is_finite() && norm > 0.0) {
            return invalid("cannot normalize a zero or non-finite vector");
        }
        coords.iter_mut().for_each(|x| *x /= norm);
        Self::new(coords)
    }

    /// The point at angle `t` on the unit circle.
    pub fn on_circle(t: f64) -> Self {
        Self(vec![t.cos(), t.sin()])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn antipode(&self) -> Self {
        Self(self.0.iter().map(|x| -x).collect())
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(v: UnitVector) -> Self {
        v.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Geodesic distance on the sphere, in radians.
pub fn angular_distance(x: &UnitVector, y: &UnitVector) -> Result<f64> {
    if x.dim() != y.dim() {
        return invalid(format!("dimension mismatch: {} vs {}", x.dim(), y.dim()));
    }
    let diff: f64 = x.coords().iter().zip(y.coords()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let sum: f64 = x.coords().iter().zip(y.coords()).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt();
    Ok(2.0 * diff.atan2(sum))
}

/// An ordered set of distinct unit vectors. Column `j` of every matrix built
/// from a code refers to `points()[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalCode {
    points: Vec<UnitVector>,
    alpha: f64,
}

impl SphericalCode {
    pub fn new(points: Vec<UnitVector>) -> Result<Self> {
        let Some(first) = points.first() else {
            return invalid("a code needs at least one point");
        };
        let n = first.dim();
        if let Some(p) = points.iter().find(|p| p.dim() != n) {
            return invalid(format!("mixed dimensions in code: {} and {}", n, p.dim()));
        }
        let mut alpha = -1.0f64;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let ip = points[i].dot(&points[j]);
                if ip >= 1.0 - DISTINCT_TOL {
                    return invalid(format!("code points {i} and {j} coincide"));
                }
                alpha = alpha.max(ip);
            }
        }
        Ok(Self { points, alpha })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[UnitVector] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &UnitVector {
        &self.points[i]
    }

    /// Largest inner product between distinct points (`-1` for a one-point code).
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Index of a closest code point; ties within [`TIE_TOL`] go to the lowest index.
    pub fn nearest(&self, x: &UnitVector) -> Result<usize> {
        if x.dim() != self.dim() {
            return invalid(format!("dimension mismatch: code {} vs point {}", self.dim(), x.dim()));
        }
        let mut best = 0;
        let mut best_ip = f64::NEG_INFINITY;
        for (i, q) in self.points.iter().enumerate() {
            let ip = q.dot(x);
            if ip > best_ip + TIE_TOL {
                best = i;
                best_ip = ip;
            }
        }
        Ok(best)
    }

    /// Index of a code point within `1e-12` of `x`, if any.
    pub fn index_of(&self, x: &UnitVector) -> Option<usize> {
        self.points.iter().position(|q| q.dot(x) >= 1.0 - DISTINCT_TOL)
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.dim(), self.len())?;
        for p in &self.points {
            let mut line = String::new();
            for (i, x) in p.coords().iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                write!(line, "{x:.16e}").expect("write to string");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Parses the `n N` + coordinate-lines format. Rows are renormalized
    /// so that files rounded to 17 digits still satisfy the unit-norm invariant.
    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().filter(|l| match l {
            Ok(s) => !s.trim().is_empty(),
            Err(_) => true,
        });
        let header = lines.next().ok_or_else(|| Error::Parse("empty code file".into()))??;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad header token {t:?}"))))
            .collect::<Result<_>>()?;
        let [n, count] = head[..] else {
            return Err(Error::Parse(format!("header must be \"n N\", got {header:?}")));
        };
        let mut points = Vec::with_capacity(count);
        for row in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("expected {count} points, found {row}")))??;
            let coords = parse_row(&line)?;
            if coords.len() != n {
                return Err(Error::Parse(format!("row {row} has {} coordinates, expected {n}", coords.len())));
            }
            let norm = l2(&coords);
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Parse(format!("row {row} has norm {norm}, not a unit vector")));
            }
            points.push(UnitVector::normalize(coords)?);
        }
        Self::new(points)
    }
}

pub(crate) fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t:?}"))))
        .collect()
}

/// `N` equally spaced points on `S^1`, starting at `(1, 0)`.
pub fn make_circle_code(n_points: usize) -> Result<SphericalCode> {
    if n_points < 2 {
        return invalid(format!("circle code needs N >= 2, got {n_points}"));
    }
    let points = (0..n_points)
        .map(|i| UnitVector::on_circle(2.0 * PI * i as f64 / n_points as f64))
        .collect();
    SphericalCode::new(points)
}

/// The 240 roots of `E8`, scaled onto `S^7`.
///
/// Order: the 112 roots `(±e_i ± e_j)/√2` (i < j, sign pairs `++, +-, -+, --`),
/// then the 128 half-integer roots with an even number of minus signs, in
/// increasing order of their sign bitmask.
pub fn make_e8_code() -> SphericalCode {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut points = Vec::with_capacity(240);
    for i in 0..8 {
        for j in (i + 1)..8 {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut v = vec![0.0; 8];
                v[i] = si * s;
                v[j] = sj * s;
                points.push(UnitVector(v));
            }
        }
    }
    let h = 1.0 / (2.0 * std::f64::consts::SQRT_2);
    for mask in 0u32..256 {
        if mask.count_ones() % 2 == 0 {
            let v = (0..8).map(|b| if mask >> b & 1 == 1 { -h } else { h }).collect();
            points.push(UnitVector(v));
        }
    }
    SphericalCode::new(points).expect("E8 roots are distinct unit vectors")
}

/// Covering angle of `support` by `code`: the largest distance from a support
/// point to its nearest code point.
pub fn theta_of(code: &SphericalCode, support: &[UnitVector]) -> Result<f64> {
    if support.is_empty() {
        return invalid("theta needs a nonempty support");
    }
    let mut theta = 0.0f64;
    for x in support {
        let j = code.nearest(x)?;
        theta = theta.max(angular_distance(x, code.point(j))?);
    }
    Ok(theta)
}

/// Weights of `mu` moved to their nearest code points, as a coefficient
/// vector in code order.
pub fn projected_weights(code: &SphericalCode, mu: &DiscreteMeasure) -> Result<Vec<f64>> {
    let mut w = vec![0.0; code.len()];
    for atom in mu.atoms() {
        w[code.nearest(&atom.point)?] += atom.weight;
    }
    Ok(w)
}

/// `mu_C`: each atom's weight carried to a nearest code point, merged per code point.
pub fn nearest_code_projection(code: &SphericalCode, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    let mut slots: Vec<Option<f64>> = vec![None; code.len()];
    for atom in mu.atoms() {
        let j = code.nearest(&atom.point)?;
        *slots[j].get_or_insert(0.0) += atom.weight;
    }
    let atoms = slots
        .into_iter()
        .enumerate()
        .filter_map(|(j, w)| w.map(|weight| Atom { point: code.point(j).clone(), weight }))
        .collect();
    DiscreteMeasure::new(atoms, mu.is_signed())
}

/// Nested codes of common dimension with nondecreasing size.
#[derive(Debug, Clone)]
pub struct CodeSequence {
    codes: Vec<SphericalCode>,
}

impl CodeSequence {
    pub fn new(codes: Vec<SphericalCode>) -> Result<Self> {
        if codes.is_empty() {
            return invalid("empty code sequence");
        }
        for w in codes.windows(2) {
            let (coarse, fine) = (&w[0], &w[1]);
            if coarse.dim() != fine.dim() {
                return invalid("codes in a sequence must share a dimension");
            }
            if fine.len() < coarse.len() {
                return invalid("code sizes must be nondecreasing");
            }
            if let Some(p) = coarse.points().iter().find(|p| fine.index_of(p).is_none()) {
                return invalid(format!("code sequence not nested: {:?} missing from refinement", p.coords()));
            }
        }
        Ok(Self { codes })
    }

    /// Circle codes with `base * 2^j` points, `j = 0..levels`.
    pub fn nested_circles(base: usize, levels: usize) -> Result<Self> {
        let codes = (0..levels)
            .map(|j| make_circle_code(base << j))
            .collect::<Result<Vec<_>>>()?;
        Self::new(codes)
    }

    pub fn codes(&self) -> &[SphericalCode] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn circle_point(t: f64) -> UnitVector {
        UnitVector::on_circle(t)
    }

    #[test]
    fn square_code() {
        let code = make_circle_code(4).unwrap();
        let expect = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (p, (x, y)) in code.points().iter().zip(expect) {
            assert!((p.coords()[0] - x).abs() < 1e-15 && (p.coords()[1] - y).abs() < 1e-15);
        }
        assert!(code.alpha().abs() < 1e-15);
    }

    #[test]
    fn hexagon_alpha() {
        let code = make_circle_code(6).unwrap();
        assert!((code.alpha() - 0.5).abs() < 1e-12);
        assert_eq!(make_circle_code(200).unwrap().len(), 200);
    }

    #[test]
    fn circle_alpha_matches_closed_form() {
        for n in 2..=1000 {
            let code = make_circle_code(n).unwrap();
            let expect = (2.0 * PI / n as f64).cos();
            assert!((code.alpha() - expect).abs() < 1e-12, "N = {n}");
        }
    }

    #[test]
    fn circle_rejects_small_n() {
        assert!(matches!(make_circle_code(1), Err(Error::InvalidArgument(_))));
        assert!(make_circle_code(0).is_err());
    }

    #[test]
    fn e8_structure() {
        let code = make_e8_code();
        assert_eq!(code.len(), 240);
        assert_eq!(code.dim(), 8);
        for p in code.points() {
            assert!((l2(p.coords()) - 1.0).abs() < 1e-15);
        }
        assert!((code.alpha() - 0.5).abs() < 1e-15);

        // Pairwise inner products of distinct roots, by full enumeration.
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for i in 0..240 {
            for j in 0..240 {
                if i != j {
                    let ip = code.point(i).dot(code.point(j));
                    let twice = (2.0 * ip).round();
                    assert!((2.0 * ip - twice).abs() < 1e-12);
                    *counts.entry(twice as i64).or_default() += 1;
                }
            }
        }
        // Each root has 56 neighbours at 1/2, 126 orthogonal, 56 at -1/2, one antipode.
        let expect: BTreeMap<i64, usize> =
            [(-2, 240), (-1, 240 * 56), (0, 240 * 126), (1, 240 * 56)].into_iter().collect();
        assert_eq!(counts, expect);
    }

    #[test]
    fn angular_distance_basics() {
        let x = circle_point(0.0);
        let y = circle_point(PI / 2.0);
        assert_eq!(angular_distance(&x, &x).unwrap(), 0.0);
        assert!((angular_distance(&x, &x.antipode()).unwrap() - PI).abs() < 1e-15);
        assert!((angular_distance(&x, &y).unwrap() - PI / 2.0).abs() < 1e-15);
        let z = UnitVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(angular_distance(&x, &z).is_err());
    }

    #[test]
    fn unit_vector_validation() {
        assert!(UnitVector::new(vec![1.0]).is_err());
        assert!(UnitVector::new(vec![1.0, 1.0]).is_err());
        assert!(UnitVector::new(vec![0.6, 0.8]).is_ok());
        assert!(UnitVector::normalize(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn duplicate_points_rejected() {
        let p = circle_point(0.3);
        assert!(SphericalCode::new(vec![p.clone(), p]).is_err());
    }

    #[test]
    fn theta_cases() {
        let code = make_circle_code(200).unwrap();
        assert_eq!(theta_of(&code, &code.points()[..5]).unwrap(), 0.0);

        let off = 2.0 * PI / 400.0 * 0.5;
        let x = circle_point(2.0 * PI * 17.0 / 200.0 + off);
        assert!((theta_of(&code, &[x]).unwrap() - off).abs() < 1e-12);

        let single = SphericalCode::new(vec![circle_point(1.0)]).unwrap();
        let anti = circle_point(1.0).antipode();
        assert!((theta_of(&single, &[anti]).unwrap() - PI).abs() < 1e-12);
        assert!(theta_of(&code, &[]).is_err());
    }

    #[test]
    fn theta_zero_iff_on_code() {
        let code = make_circle_code(12).unwrap();
        for t in [0.0, 1e-7, 0.01, 0.2] {
            let x = circle_point(2.0 * PI * 5.0 / 12.0 + t);
            let theta = theta_of(&code, &[x]).unwrap();
            assert_eq!(theta <= 1e-12, t == 0.0, "t = {t}");
        }
    }

    #[test]
    fn projection_fixes_code_points() {
        let code = make_circle_code(8).unwrap();
        let mu = DiscreteMeasure::new(
            vec![
                Atom { point: code.point(1).clone(), weight: 0.25 },
                Atom { point: code.point(6).clone(), weight: 0.75 },
            ],
            false,
        )
        .unwrap();
        let proj = nearest_code_projection(&code, &mu).unwrap();
        assert_eq!(proj, mu);
    }

    #[test]
    fn projection_tie_goes_to_lowest_index() {
        let code = make_circle_code(10).unwrap();
        // Midpoint of q_3 and q_7 on the circle is not the nearest to either,
        // so build a code where a point is exactly equidistant from two members.
        let q3 = circle_point(0.3);
        let q7 = circle_point(-0.3);
        let mut pts: Vec<UnitVector> = (0..10).map(|i| circle_point(2.0 + 0.1 * i as f64)).collect();
        pts[3] = q3;
        pts[7] = q7;
        let tied = SphericalCode::new(pts).unwrap();
        let x = circle_point(0.0);
        let mu = DiscreteMeasure::new(vec![Atom { point: x, weight: 1.0 }], false).unwrap();
        let proj = projected_weights(&tied, &mu).unwrap();
        assert_eq!(proj[3], 1.0);
        assert_eq!(proj[7], 0.0);
        assert_eq!(code.len(), 10);
    }

    #[test]
    fn projection_merges_weights() {
        let code = make_circle_code(8).unwrap();
        let mu = DiscreteMeasure::new(
            vec![
                Atom { point: circle_point(2.0 * PI / 8.0 + 0.01), weight: 0.5 },
                Atom { point: circle_point(2.0 * PI / 8.0 - 0.02), weight: 0.5 },
            ],
            false,
        )
        .unwrap();
        let proj = nearest_code_projection(&code, &mu).unwrap();
        assert_eq!(proj.atoms().len(), 1);
        assert_eq!(&proj.atoms()[0].point, code.point(1));
        assert!((proj.atoms()[0].weight - 1.0).abs() < 1e-15);
    }

    #[test]
    fn text_round_trip() {
        let code = make_e8_code();
        let mut buf = Vec::new();
        code.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("8 240\n"));
        let back = SphericalCode::read_text(&buf[..]).unwrap();
        assert_eq!(back.len(), 240);
        for (a, b) in code.points().iter().zip(back.points()) {
            for (x, y) in a.coords().iter().zip(b.coords()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn read_rejects_short_file() {
        assert!(SphericalCode::read_text("2 3\n1 0\n0 1\n".as_bytes()).is_err());
        assert!(SphericalCode::read_text("2 1\n1 1\n".as_bytes()).is_err());
    }

    #[test]
    fn nested_circles() {
        let seq = CodeSequence::nested_circles(25, 5).unwrap();
        let sizes: Vec<usize> = seq.codes().iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![25, 50, 100, 200, 400]);
        let bad = CodeSequence::new(vec![make_circle_code(6).unwrap(), make_circle_code(8).unwrap()]);
        assert!(bad.is_err());
    }
}
