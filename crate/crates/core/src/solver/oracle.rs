//! Exact basis-pursuit oracle: the split linear program
//! `min sum(c+ + c-)` s.t. `M (c+ - c-) = b`, `c+, c- >= 0`, solved by a
//! two-phase tableau simplex in exact rational arithmetic with Bland's rule.
//! Every `f64` input converts to a rational without rounding, so the optimum is
//! exact for the given data; only the final conversion back to `f64` rounds.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use super::{check_kkt, RecoverySolution, SolveStatus};
use crate::error::{invalid, Result};

/// Size guard for both dimensions of `M`.
pub const ORACLE_MAX_DIM: usize = 40;

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

struct Tableau {
    rows: Vec<Vec<BigRational>>,
    /// Reduced costs; the last entry is minus the objective value.
    obj: Vec<BigRational>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn width(&self) -> usize {
        self.obj.len() - 1
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col].clone();
        for x in self.rows[r].iter_mut() {
            if !x.is_zero() {
                *x /= &p;
            }
        }
        let pivot_row = self.rows[r].clone();
        let eliminate = |row: &mut Vec<BigRational>| {
            let f = row[col].clone();
            if f.is_zero() {
                return;
            }
            for (x, y) in row.iter_mut().zip(&pivot_row) {
                if !y.is_zero() {
                    *x -= &f * y;
                }
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.obj);
        self.basis[r] = col;
        self.pivots += 1;
    }

    /// Runs simplex iterations on columns `< allowed`. Returns false if unbounded.
    fn optimize(&mut self, allowed: usize) -> bool {
        let rhs = self.width();
        loop {
            // Bland: lowest-index improving column, lowest-index basic variable on ratio ties.
            let Some(col) = (0..allowed).find(|&j| self.obj[j].is_negative()) else {
                return true;
            };
            let mut leave: Option<(usize, BigRational)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[col].is_positive() {
                    let ratio = &row[rhs] / &row[col];
                    let better = match &leave {
                        None => true,
                        Some((li, lr)) => ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, col),
                None => return false,
            }
        }
    }
}

/// Exact basis pursuit for `N, m <= 40`; used to cross-check the first-order solver.
pub fn lp_oracle_bp(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<RecoverySolution> {
    let (rows, cols) = m.shape();
    if rows > ORACLE_MAX_DIM || cols > ORACLE_MAX_DIM {
        return invalid(format!("oracle limited to {ORACLE_MAX_DIM}x{ORACLE_MAX_DIM}, got {rows}x{cols}"));
    }
    if b.len() != rows {
        return invalid(format!("matrix has {rows} rows but b has length {}", b.len()));
    }
    if m.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return invalid("non-finite entry in M or b");
    }

    // Columns: c+ (0..cols), c- (cols..2cols), artificials (2cols..2cols+rows), rhs.
    let n_struct = 2 * cols;
    let width = n_struct + rows;
    let mut flip = vec![false; rows];
    let mut table = Vec::with_capacity(rows);
    for i in 0..rows {
        flip[i] = b[i] < 0.0;
        let sgn = if flip[i] { -1.0 } else { 1.0 };
        let mut row = vec![BigRational::zero(); width + 1];
        for j in 0..cols {
            let v = rat(sgn * m[(i, j)]);
            row[cols + j] = -v.clone();
            row[j] = v;
        }
        row[n_struct + i] = BigRational::from_integer(BigInt::from(1));
        row[width] = rat(sgn * b[i]);
        table.push(row);
    }
    // Phase 1 objective sum(a), expressed in reduced form against the artificial basis.
    let mut obj = vec![BigRational::zero(); width + 1];
    for row in &table {
        for j in 0..n_struct {
            obj[j] -= &row[j];
        }
        obj[width] -= &row[width];
    }
    let mut t = Tableau { rows: table, obj, basis: (n_struct..width).collect(), pivots: 0 };
    t.optimize(n_struct);

    let zero_col = vec![0.0; cols];
    if !t.obj[width].is_zero() {
        let c = DVector::from_vec(zero_col.clone());
        let kkt = check_kkt(m, b, 0.0, &c, None);
        return Ok(RecoverySolution {
            status: SolveStatus::Infeasible,
            c_star: zero_col,
            residual_norm: b.norm(),
            l1_value: 0.0,
            iterations: t.pivots,
            dual: vec![0.0; rows],
            kkt_violation: kkt.max_violation,
            polished: false,
        });
    }

    // Drive degenerate artificials out of the basis; rows where that fails are redundant.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n_struct {
            if let Some(col) = (0..n_struct).find(|&j| !t.rows[r][j].is_zero()) {
                t.pivot(r, col);
            } else {
                t.rows.remove(r);
                t.basis.remove(r);
                continue;
            }
        }
        r += 1;
    }

    // Phase 2: unit costs on the structural columns.
    let mut obj = vec![BigRational::zero(); width + 1];
    for x in obj.iter_mut().take(n_struct) {
        *x = BigRational::from_integer(BigInt::from(1));
    }
    for (i, row) in t.rows.iter().enumerate() {
        let cb = if t.basis[i] < n_struct { BigRational::from_integer(BigInt::from(1)) } else { BigRational::zero() };
        if cb.is_zero() {
            continue;
        }
        for (o, x) in obj.iter_mut().zip(row) {
            *o -= &cb * x;
        }
    }
    t.obj = obj;
    let bounded = t.optimize(n_struct);
    debug_assert!(bounded, "l1 objective is bounded below by zero");

    let mut plus_minus = vec![BigRational::zero(); n_struct];
    for (i, &bv) in t.basis.iter().enumerate() {
        if bv < n_struct {
            plus_minus[bv] = t.rows[i][width].clone();
        }
    }
    let c_exact: Vec<BigRational> = (0..cols).map(|j| &plus_minus[j] - &plus_minus[cols + j]).collect();
    let l1_exact: BigRational = c_exact.iter().map(|x| x.abs()).fold(BigRational::zero(), |a, x| a + x);
    let c_star: Vec<f64> = c_exact.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect();

    // Simplex multipliers: the reduced cost of artificial i is -y_i.
    let dual: Vec<f64> = (0..rows)
        .map(|i| {
            let y = -t.obj[n_struct + i].to_f64().unwrap_or(f64::NAN);
            if flip[i] {
                -y
            } else {
                y
            }
        })
        .collect();
    let c = DVector::from_column_slice(&c_star);
    let nu = DVector::from_column_slice(&dual);
    let kkt = check_kkt(m, b, 0.0, &c, Some(&nu));
    Ok(RecoverySolution {
        status: SolveStatus::Optimal,
        residual_norm: (m * &c - b).norm(),
        l1_value: l1_exact.to_f64().unwrap_or(f64::NAN),
        c_star,
        iterations: t.pivots,
        dual,
        kkt_violation: kkt.max_violation,
        polished: false,
    })
}
