//! Elasticity reconstruction for synthetic MR elastography.
//!
//! The crate covers the whole pipeline: phantom meshing ([`mesh`]), P1
//! finite-element assembly of the harmonic equilibrium operator ([`fem`]),
//! synthetic measurement generation ([`forward`]), the statistical MAP solver
//! with signal-dependent noise covariance ([`inverse`]), reference methods
//! ([`baselines`]) and evaluation ([`metrics`]). [`scenario`] ties these
//! together for experiments and [`io`] handles CSV field files.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod fem;
pub mod field;
pub mod forward;
pub mod inverse;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod metrics;
pub mod scenario;

pub use error::{Error, Result};
pub use fem::{FemModel, MassSign, MaterialParams};
pub use field::{DisplacementField, ElasticityField};
pub use inverse::{ReconstructionResult, Regularizer, SolverConfig};
pub use mesh::{AdjacencyGraph, BoundaryTag, PhantomSpec, TriMesh};
pub use metrics::RegionMasks;
pub use scenario::Method;
