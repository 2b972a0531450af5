//! Recovery of point measures on the sphere from their moments against random
//! Kostlan–Shub–Smale polynomials, with the analytic bounds that govern it.
//!
//! Pipeline: pick a [`SphericalCode`] `C`, sample a [`MeasurementEnsemble`]
//! `Phi = X / sqrt(m)` with `X_ij = P_i(q_j)`, form the moment vector `b_mu`, and
//! solve `min ||c||_1` subject to `||Phi c - b_mu||_2 <= tau` with
//! [`solver::solve_bpdn`] (or [`solver::solve_bp`] when `tau = 0`). The result,
//! clamped or thresholded, is a measure supported on `C`.

pub mod analysis;
pub mod codes;
pub mod error;
pub mod experiments;
pub mod kss;
mod linalg;
pub mod measure;
pub mod moments;
pub mod rng;
pub mod solver;
pub mod transport;

pub use codes::{
    angular_distance, make_circle_code, make_e8_code, nearest_code_projection, theta_of, CodeSequence,
    SphericalCode, UnitVector,
};
pub use error::{Error, Result};
pub use kss::{kernel_matrix, kernel_value, KernelMatrix, KernelSampler, KssPolynomial, MultiIndex};
pub use measure::{Atom, DiscreteMeasure};
pub use moments::{build_ensemble, moments_of, MeasurementEnsemble, MomentVector, MseForm};
pub use rng::SeedTree;
pub use solver::{RecoveryProblem, RecoverySolution, SolveStatus};
