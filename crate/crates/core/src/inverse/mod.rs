//! Statistical MAP reconstruction of the modulus field.
//!
//! The joint observation model treats the mass-corrected force balance at
//! the free DOFs as `f = D(u_m) E + w~` with `w~ ~ N(0, Gamma)` and
//! `Gamma = Sigma_w + A(E) Sigma_n A(E)^T`. The estimate minimizes
//!
//! ```text
//! 1/2 ||f - D(u_m) E||^2_{Gamma^-1} + N/2 log|Gamma| + lambda ||grad E||_1,  E > 0
//! ```
//!
//! by a fixed-point loop that freezes `Gamma`, runs proximal-gradient steps
//! on `E`, then rebuilds `Gamma` from the new `E`.

mod gamma;
mod problem;
mod prox;
mod solver;

pub use gamma::{build_gamma, GammaCovariance, GammaOperator, NoiseCovariance};
pub use problem::InverseProblem;
pub use prox::{nonneg_prox, tv_prox, TvProxOptions};
pub use solver::{
    fixed_point_solve, grad_g, objective, pg_inner_solve, InnerOutcome, ObjectiveTerms,
    ReconstructionResult, Regularizer, SolverConfig,
};
