use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

fn sparse_rhs(m: &DMatrix<f64>, entries: &[(usize, f64)]) -> DVector<f64> {
    let mut c = DVector::zeros(m.ncols());
    for &(i, v) in entries {
        c[i] = v;
    }
    m * c
}

fn assert_vec_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn identity_returns_rhs() {
    let m = DMatrix::identity(4, 4);
    let b = DVector::from_vec(vec![1.0, -2.0, 0.0, 0.5]);
    let sol = solve_bp(&m, &b).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert_vec_close(&sol.c_star, b.as_slice(), 1e-10);
    assert!((sol.l1_value - 3.5).abs() < 1e-10);
}

#[test]
fn zero_rhs_gives_zero() {
    let m = gaussian(3, 6, 1);
    let sol = solve_bp(&m, &DVector::zeros(3)).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(sol.c_star.iter().all(|&c| c == 0.0));
    assert_eq!(sol.l1_value, 0.0);
}

#[test]
fn picks_the_sparse_representation() {
    // (1,1,0) and (0,0,1) both solve the system; the second has half the l1 norm.
    let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
    let b = DVector::from_vec(vec![1.0, 1.0]);
    let sol = solve_bp(&m, &b).unwrap();
    assert_vec_close(&sol.c_star, &[0.0, 0.0, 1.0], 1e-9);
    let exact = lp_oracle_bp(&m, &b).unwrap();
    assert_vec_close(&exact.c_star, &[0.0, 0.0, 1.0], 0.0);
}

#[test]
fn bpdn_with_large_tau_is_zero() {
    let m = gaussian(4, 8, 2);
    let b = DVector::from_vec(vec![0.3, -0.4, 0.0, 0.0]);
    let sol = solve_bpdn(&m, &b, 0.5).unwrap();
    assert!(sol.c_star.iter().all(|&c| c == 0.0));
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(solve_bpdn(&m, &b, 0.0).is_err());
}

#[test]
fn bpdn_on_identity_matches_closed_form() {
    // For M = I the optimum shrinks every entry by lambda with ||c - b|| = tau.
    let m = DMatrix::identity(2, 2);
    let b = DVector::from_vec(vec![3.0, 1.0]);
    let tau = 0.5;
    let lambda = tau / 2f64.sqrt();
    let sol = solve_bpdn(&m, &b, tau).unwrap();
    assert_vec_close(&sol.c_star, &[3.0 - lambda, 1.0 - lambda], 1e-9);
    assert!((sol.residual_norm - tau).abs() < 1e-9);
    assert!(sol.kkt_violation < 1e-9);
}

#[test]
fn bpdn_tends_to_bp() {
    let m = gaussian(5, 10, 3);
    let b = sparse_rhs(&m, &[(2, 1.0), (7, -0.5)]);
    let bp = solve_bp(&m, &b).unwrap();
    let small = solve_bpdn(&m, &b, 1e-10).unwrap();
    assert_vec_close(&small.c_star, &bp.c_star, 1e-7);
}

#[test]
fn three_by_five_matches_oracle() {
    let m = gaussian(3, 5, 4);
    let b = DVector::from_vec(vec![1.0, -0.5, 0.25]);
    let exact = lp_oracle_bp(&m, &b).unwrap();
    let sol = solve_bp(&m, &b).unwrap();
    assert_eq!(exact.status, SolveStatus::Optimal);
    assert!(exact.kkt_violation < 1e-12, "{}", exact.kkt_violation);
    assert!((sol.l1_value - exact.l1_value).abs() <= 1e-7 * exact.l1_value.max(1.0));
    assert_vec_close(&sol.c_star, &exact.c_star, 1e-7);
}

#[test]
fn oracle_detects_infeasibility() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let b = DVector::from_vec(vec![1.0, 0.0]);
    assert_eq!(lp_oracle_bp(&m, &b).unwrap().status, SolveStatus::Infeasible);
    assert_eq!(solve_bp(&m, &b).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn oracle_handles_redundant_rows() {
    let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0]);
    let b = DVector::from_vec(vec![1.0, 1.0, 2.0]);
    let exact = lp_oracle_bp(&m, &b).unwrap();
    assert_eq!(exact.status, SolveStatus::Optimal);
    assert_vec_close(&exact.c_star, &[0.0, 0.0, 1.0], 0.0);
}

#[test]
fn oracle_size_guard() {
    let m = DMatrix::zeros(2, ORACLE_MAX_DIM + 1);
    assert!(lp_oracle_bp(&m, &DVector::zeros(2)).is_err());
}

#[test]
fn problem_validation() {
    let m = DMatrix::identity(2, 2);
    assert!(RecoveryProblem::new(m.clone(), DVector::zeros(3), 0.0).is_err());
    assert!(RecoveryProblem::new(m.clone(), DVector::zeros(2), -1.0).is_err());
    assert!(RecoveryProblem::new(m.clone(), DVector::from_vec(vec![f64::NAN, 0.0]), 0.0).is_err());
    let p = RecoveryProblem::new(m, DVector::from_vec(vec![1.0, 0.0]), 0.0).unwrap();
    assert!(p.is_feasible(&DVector::from_vec(vec![1.0, 0.0])));
    assert!(!p.is_feasible(&DVector::from_vec(vec![1.0, 1e-3])));
}

#[test]
fn kkt_certifies_optimum_and_flags_perturbations() {
    let m = gaussian(6, 12, 5);
    let b = sparse_rhs(&m, &[(0, 1.0), (5, -2.0)]);
    let exact = lp_oracle_bp(&m, &b).unwrap();
    let c = exact.c_vector();
    let nu = DVector::from_column_slice(&exact.dual);
    let at_opt = check_kkt(&m, &b, 0.0, &c, Some(&nu)).max_violation;
    assert!(at_opt < 1e-10, "{at_opt}");
    let on_support = (0..c.len()).find(|&i| c[i] != 0.0).unwrap();
    let mut last = at_opt;
    for eps in [1e-6, 1e-4, 1e-2] {
        let mut pert = c.clone();
        pert[on_support] += eps;
        let v = check_kkt(&m, &b, 0.0, &pert, Some(&nu)).max_violation;
        assert!(v > last, "{v} <= {last}");
        last = v;
    }
}

#[test]
fn l1_decreases_with_tau() {
    let m = gaussian(8, 16, 6);
    let b = sparse_rhs(&m, &[(1, 1.0), (4, 0.7), (9, -1.2)]);
    let mut last = f64::INFINITY;
    for tau in [1e-6, 1e-3, 0.1, 0.5, 1.0] {
        let sol = solve_bpdn(&m, &b, tau).unwrap();
        assert!(sol.residual_norm <= tau * (1.0 + BPDN_FEAS_TOL));
        assert!(sol.l1_value <= last + 1e-9, "tau {tau}: {} > {last}", sol.l1_value);
        last = sol.l1_value;
    }
}

#[test]
fn dual_estimate_matches_support_signs() {
    let m = gaussian(6, 12, 7);
    let b = sparse_rhs(&m, &[(3, 1.0), (8, -1.0)]);
    let sol = solve_bp(&m, &b).unwrap();
    let nu = estimate_dual(&m, &b, 0.0, &sol.c_vector());
    let g = m.transpose() * nu;
    for i in 0..12 {
        if sol.c_star[i] != 0.0 {
            assert!((g[i] - sol.c_star[i].signum()).abs() < 1e-8);
        }
    }
    // The solver's own dual certifies optimality.
    let own = m.transpose() * DVector::from_column_slice(&sol.dual);
    assert!(own.amax() <= 1.0 + 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn admm_agrees_with_exact_oracle(rows in 2usize..8, extra in 1usize..8, seed in any::<u64>()) {
        let cols = rows + extra;
        let m = gaussian(rows, cols, seed);
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e37);
        let b = DVector::from_fn(rows, |_, _| StandardNormal.sample(&mut rng));
        let exact = lp_oracle_bp(&m, &b).unwrap();
        let sol = solve_bp(&m, &b).unwrap();
        prop_assert!((sol.l1_value - exact.l1_value).abs() <= 1e-7 * exact.l1_value.max(1.0),
            "admm {} oracle {}", sol.l1_value, exact.l1_value);
        prop_assert!(sol.residual_norm <= BP_FEAS_TOL * (1.0 + b.norm()));
    }

    #[test]
    fn solution_scales_with_rhs(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let m = gaussian(5, 9, seed);
        let b = sparse_rhs(&m, &[(1, 1.0), (6, -0.5)]);
        let base = solve_bp(&m, &b).unwrap();
        let scaled = solve_bp(&m, &(&b * scale)).unwrap();
        prop_assert!((scaled.l1_value - scale * base.l1_value).abs() <= 1e-7 * scale * base.l1_value);
    }

    #[test]
    fn bpdn_stays_feasible(seed in any::<u64>(), tau in 1e-4f64..0.5) {
        let m = gaussian(6, 10, seed);
        let b = sparse_rhs(&m, &[(0, 1.0), (3, 1.0)]);
        let sol = solve_bpdn(&m, &b, tau).unwrap();
        prop_assert!(sol.residual_norm <= tau * (1.0 + BPDN_FEAS_TOL));
        prop_assert!(sol.l1_value >= 0.0);
    }
}
