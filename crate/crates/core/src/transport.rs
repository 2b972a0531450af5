//! Quadratic Wasserstein distance between discrete probability measures on the
//! sphere, with squared geodesic cost, solved exactly as a transportation
//! problem by the transportation simplex (northwest-corner start, MODI pricing).

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::codes::angular_distance;
use crate::error::{invalid, Result};
use crate::measure::{Atom, DiscreteMeasure};

/// Largest atom count accepted on either side.
pub const MAX_ATOMS: usize = 500;
/// Tolerance on the total mass of a probability measure.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    /// Atoms of the first measure with positive weight.
    pub sources: Vec<Atom>,
    /// Atoms of the second measure with positive weight.
    pub targets: Vec<Atom>,
    /// `plan[i][j]` is the mass moved from `sources[i]` to `targets[j]`.
    pub plan: Vec<Vec<f64>>,
    /// `sum plan[i][j] d(x_i, y_j)^2`.
    pub cost: f64,
}

impl TransportPlan {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in &self.plan {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

fn positive_atoms(mu: &DiscreteMeasure, side: &str) -> Result<Vec<Atom>> {
    if mu.is_signed() && mu.atoms().iter().any(|a| a.weight < 0.0) {
        return invalid(format!("{side} measure has negative weights"));
    }
    if !mu.is_probability(MASS_TOL) {
        return invalid(format!("{side} measure has total mass {}, not 1", mu.total_mass()));
    }
    let atoms: Vec<Atom> = mu.atoms().iter().filter(|a| a.weight > 0.0).cloned().collect();
    if atoms.len() > MAX_ATOMS {
        return invalid(format!("{side} measure has {} atoms, limit {MAX_ATOMS}", atoms.len()));
    }
    Ok(atoms)
}

/// Optimal plan of the balanced transportation problem `min <C, P>` with row
/// sums `supply` and column sums `demand` (equal totals).
pub(crate) fn transportation_simplex(cost: &[Vec<f64>], supply: &[f64], demand: &[f64]) -> Vec<Vec<f64>> {
    let (n, k) = (supply.len(), demand.len());
    let mut flow = vec![vec![0.0; k]; n];
    let mut basic = vec![vec![false; k]; n];
    // Northwest corner; ties advance one index only so the basis keeps n + k - 1 cells.
    let (mut s, mut d) = (supply.to_vec(), demand.to_vec());
    let (mut i, mut j) = (0, 0);
    while i < n && j < k {
        let q = s[i].min(d[j]);
        flow[i][j] = q;
        basic[i][j] = true;
        s[i] -= q;
        d[j] -= q;
        if i == n - 1 {
            j += 1;
        } else if j == k - 1 || s[i] <= d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }

    let scale = cost.iter().flatten().fold(0.0f64, |a, &c| a.max(c.abs())).max(1.0);
    let enter_tol = 1e-12 * scale;
    let max_pivots = 50 * (n + k) * (n + k) + 1000;
    for _ in 0..max_pivots {
        let (u, v) = potentials(cost, &basic);
        let mut entering = None;
        let mut most = -enter_tol;
        for a in 0..n {
            for b in 0..k {
                if !basic[a][b] {
                    let r = cost[a][b] - u[a] - v[b];
                    if r < most {
                        most = r;
                        entering = Some((a, b));
                    }
                }
            }
        }
        let Some((ei, ej)) = entering else { break };
        let path = tree_path(&basic, ei, ej);
        // path alternates row/column nodes from row ei to column ej; cells on it alternate -, +.
        let cells: Vec<(usize, usize)> = path
            .windows(2)
            .map(|w| match (w[0], w[1]) {
                (Node::Row(r), Node::Col(c)) | (Node::Col(c), Node::Row(r)) => (r, c),
                _ => unreachable!("tree edges join a row and a column"),
            })
            .collect();
        let mut theta = f64::INFINITY;
        let mut leave = 0;
        for (idx, &(r, c)) in cells.iter().enumerate().step_by(2) {
            if flow[r][c] < theta {
                theta = flow[r][c];
                leave = idx;
            }
        }
        for (idx, &(r, c)) in cells.iter().enumerate() {
            if idx % 2 == 0 {
                flow[r][c] -= theta;
            } else {
                flow[r][c] += theta;
            }
        }
        flow[ei][ej] += theta;
        basic[ei][ej] = true;
        let (lr, lc) = cells[leave];
        basic[lr][lc] = false;
        flow[lr][lc] = 0.0;
    }
    for row in flow.iter_mut() {
        for x in row.iter_mut() {
            *x = x.max(0.0);
        }
    }
    flow
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Row(usize),
    Col(usize),
}

fn potentials(cost: &[Vec<f64>], basic: &[Vec<bool>]) -> (Vec<f64>, Vec<f64>) {
    let (n, k) = (basic.len(), basic[0].len());
    let mut u = vec![f64::NAN; n];
    let mut v = vec![f64::NAN; k];
    // The basis spans all nodes; start at row 0 with u = 0.
    u[0] = 0.0;
    let mut queue = VecDeque::from([Node::Row(0)]);
    while let Some(node) = queue.pop_front() {
        match node {
            Node::Row(r) => {
                for c in 0..k {
                    if basic[r][c] && v[c].is_nan() {
                        v[c] = cost[r][c] - u[r];
                        queue.push_back(Node::Col(c));
                    }
                }
            }
            Node::Col(c) => {
                for r in 0..n {
                    if basic[r][c] && u[r].is_nan() {
                        u[r] = cost[r][c] - v[c];
                        queue.push_back(Node::Row(r));
                    }
                }
            }
        }
    }
    (u, v)
}

/// Path in the basis tree from row `from` to column `to`.
fn tree_path(basic: &[Vec<bool>], from: usize, to: usize) -> Vec<Node> {
    let (n, k) = (basic.len(), basic[0].len());
    let mut prev_row: Vec<Option<Node>> = vec![None; n];
    let mut prev_col: Vec<Option<Node>> = vec![None; k];
    let mut seen_row = vec![false; n];
    let mut seen_col = vec![false; k];
    seen_row[from] = true;
    let mut queue = VecDeque::from([Node::Row(from)]);
    while let Some(node) = queue.pop_front() {
        match node {
            Node::Row(r) => {
                for c in 0..k {
                    if basic[r][c] && !seen_col[c] {
                        seen_col[c] = true;
                        prev_col[c] = Some(node);
                        queue.push_back(Node::Col(c));
                    }
                }
            }
            Node::Col(c) => {
                if c == to {
                    break;
                }
                for r in 0..n {
                    if basic[r][c] && !seen_row[r] {
                        seen_row[r] = true;
                        prev_row[r] = Some(node);
                        queue.push_back(Node::Row(r));
                    }
                }
            }
        }
    }
    let mut path = vec![Node::Col(to)];
    let mut cur = Node::Col(to);
    while cur != Node::Row(from) {
        cur = match cur {
            Node::Row(r) => prev_row[r],
            Node::Col(c) => prev_col[c],
        }
        .expect("basis tree is connected");
        path.push(cur);
    }
    path.reverse();
    path
}

/// `W(mu, nu) = sqrt(min_P sum P_ij d(x_i, y_j)^2)` with `d` the geodesic distance.
/// Zero-weight atoms are dropped before solving.
pub fn wasserstein(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, TransportPlan)> {
    let sources = positive_atoms(mu, "first")?;
    let targets = positive_atoms(nu, "second")?;
    if sources.is_empty() || targets.is_empty() {
        return invalid("cannot transport an empty measure");
    }
    if sources[0].point.dim() != targets[0].point.dim() {
        return invalid("measures live on spheres of different dimension");
    }
    let mut cost = vec![vec![0.0; targets.len()]; sources.len()];
    for (i, a) in sources.iter().enumerate() {
        for (j, b) in targets.iter().enumerate() {
            cost[i][j] = angular_distance(&a.point, &b.point)?.powi(2);
        }
    }
    // Rescale the (within-tolerance) masses to exactly balanced totals.
    let sa: f64 = sources.iter().map(|a| a.weight).sum();
    let sb: f64 = targets.iter().map(|a| a.weight).sum();
    let supply: Vec<f64> = sources.iter().map(|a| a.weight / sa).collect();
    let demand: Vec<f64> = targets.iter().map(|a| a.weight / sb).collect();
    let plan = transportation_simplex(&cost, &supply, &demand);
    let total: f64 = plan.iter().zip(&cost).map(|(p, c)| p.iter().zip(c).map(|(x, y)| x * y).sum::<f64>()).sum();
    let total = total.max(0.0);
    Ok((total.sqrt(), TransportPlan { sources, targets, plan, cost: total }))
}

fn check_weights(g: &[f64], h: &[f64]) -> Result<()> {
    if g.len() != h.len() {
        return invalid(format!("weight vectors of lengths {} and {}", g.len(), h.len()));
    }
    for (name, w) in [("g", g), ("h", h)] {
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > MASS_TOL || w.iter().any(|&x| x < 0.0) {
            return invalid(format!("{name} is not a probability vector (sum {s})"));
        }
    }
    Ok(())
}

/// `pi ||g - h||_1` for two probability vectors on the same code. This is the
/// bound used in the consistency argument; it dominates `W` only once
/// `||g - h||_1` is not too small (see [`wasserstein_upper_bound_tv`]).
pub fn wasserstein_upper_bound_via_l1(g: &[f64], h: &[f64]) -> Result<f64> {
    check_weights(g, h)?;
    Ok(PI * g.iter().zip(h).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `pi sqrt(||g - h||_1 / 2)`: leaving the common mass `min(g_i, h_i)` in place
/// and moving the rest at most `pi` gives `W^2 <= pi^2 TV(g, h)`.
pub fn wasserstein_upper_bound_tv(g: &[f64], h: &[f64]) -> Result<f64> {
    check_weights(g, h)?;
    Ok(PI * (0.5 * g.iter().zip(h).map(|(a, b)| (a - b).abs()).sum::<f64>()).sqrt())
}
