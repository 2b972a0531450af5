//! Finite weighted sums of Dirac masses on the sphere.

use serde::{Deserialize, Serialize};

use crate::codes::{SphericalCode, UnitVector, DISTINCT_TOL};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: UnitVector,
    pub weight: f64,
}

/// A point measure. Unsigned measures carry nonnegative weights only.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
    signed: bool,
}

#[derive(Serialize, Deserialize)]
struct MeasureDoc {
    atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    signed: bool,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Atom>, signed: bool) -> Result<Self> {
        if let Some(first) = atoms.first() {
            let n = first.point.dim();
            if atoms.iter().any(|a| a.point.dim() != n) {
                return invalid("atoms of a measure must share a dimension");
            }
        }
        if let Some(a) = atoms.iter().find(|a| !a.weight.is_finite()) {
            return invalid(format!("non-finite weight {}", a.weight));
        }
        if !signed {
            if let Some(a) = atoms.iter().find(|a| a.weight < 0.0) {
                return invalid(format!("negative weight {} in an unsigned measure", a.weight));
            }
        }
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                if atoms[i].point.dot(&atoms[j].point) >= 1.0 - DISTINCT_TOL {
                    return invalid(format!("atoms {i} and {j} share a point"));
                }
            }
        }
        Ok(Self { atoms, signed })
    }

    pub fn zero() -> Self {
        Self { atoms: Vec::new(), signed: false }
    }

    /// `sum_i c_i delta_{q_i}`, skipping exact zeros.
    pub fn from_code_coeffs(code: &SphericalCode, coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() != code.len() {
            return invalid(format!("{} coefficients for a code of {} points", coeffs.len(), code.len()));
        }
        let atoms = code
            .points()
            .iter()
            .zip(coeffs)
            .filter(|(_, &w)| w != 0.0)
            .map(|(p, &weight)| Atom { point: p.clone(), weight })
            .collect();
        let signed = coeffs.iter().any(|&w| w < 0.0);
        Self::new(atoms, signed)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.atoms.first().map(|a| a.point.dim())
    }

    pub fn support(&self) -> Vec<UnitVector> {
        self.atoms.iter().map(|a| a.point.clone()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        self.atoms.iter().all(|a| a.weight >= 0.0) && (self.total_mass() - 1.0).abs() <= tol
    }

    /// Coefficient vector in code order; fails if an atom is off the code.
    pub fn code_coeffs(&self, code: &SphericalCode) -> Result<Vec<f64>> {
        let mut c = vec![0.0; code.len()];
        for a in &self.atoms {
            match code.index_of(&a.point) {
                Some(j) => c[j] += a.weight,
                None => return invalid(format!("atom {:?} is not a code point", a.point.coords())),
            }
        }
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = MeasureDoc { atoms: self.atoms.clone(), signed: self.signed };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses `{"atoms": [{"point": [...], "weight": w}, ...]}`. A document
    /// with a negative weight and no `"signed": true` is rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MeasureDoc = serde_json::from_str(text)?;
        Self::new(doc.atoms, doc.signed)
    }
}
