//! Reference methods: local nodal inversion of the Navier equation and the
//! identity-weighted regularized least-squares reconstruction.

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::MaterialParams;
use crate::field::DisplacementField;
use crate::inverse::{
    fixed_point_solve, InverseProblem, ReconstructionResult, Regularizer, SolverConfig,
};
use crate::mesh::{AdjacencyGraph, BoundaryTag, TriMesh};

/// Local 2x2 system at one node, in the unknowns `(lambda + mu, mu)`:
///
/// ```text
/// [ d/dx div q   lap q_x ] [lambda + mu]   = sign * rho w^2 [q_x]
/// [ d/dy div q   lap q_y ] [    mu     ]                    [q_y]
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodalSystem {
    pub a: Matrix2<f64>,
    pub rhs: Vector2<f64>,
}

impl NodalSystem {
    /// Ratio of singular values; infinite for a rank-deficient matrix.
    pub fn condition(&self) -> f64 {
        let sv = self.a.singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodalStatus {
    /// Both Lame combinations recovered from the 2x2 solve.
    Full,
    /// Locally divergence-free motion: only `mu` is identifiable, from the
    /// Helmholtz part of the system.
    ShearOnly,
    /// Boundary node, too few neighbours, or no usable signal.
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodalEstimate {
    /// `lambda + mu` in Pa; NaN unless `status` is `Full`.
    pub lambda_plus_mu: f64,
    /// Shear modulus in Pa; NaN when `status` is `Invalid`.
    pub mu: f64,
    pub condition: f64,
    pub status: NodalStatus,
}

impl NodalEstimate {
    fn invalid(condition: f64) -> Self {
        Self {
            lambda_plus_mu: f64::NAN,
            mu: f64::NAN,
            condition,
            status: NodalStatus::Invalid,
        }
    }

    /// Young's modulus `2 mu (1 + nu)` in units of `modulus_scale` Pa.
    pub fn modulus(&self, params: &MaterialParams) -> f64 {
        2.0 * self.mu * (1.0 + params.nu) / params.modulus_scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodalOptions {
    /// Neighbourhood depth in mesh edges.
    pub rings: usize,
    /// Systems above this condition number are not solved as 2x2.
    pub max_condition: f64,
    /// Divergence column below this fraction of the Laplacian column counts
    /// as shear-only motion.
    pub shear_ratio: f64,
}

impl Default for NodalOptions {
    fn default() -> Self {
        Self {
            rings: 2,
            max_condition: 1e6,
            shear_ratio: 1e-3,
        }
    }
}

fn rings(neighbors: &[Vec<usize>], node: usize, depth: usize) -> Vec<usize> {
    let mut seen = vec![node];
    let mut frontier = vec![node];
    for _ in 0..depth {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in &neighbors[v] {
                if !seen.contains(&w) {
                    seen.push(w);
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    seen
}

/// Quadratic least-squares fit around `node`. Returns `(value, [uxx, uxy, uyy])`
/// per displacement component.
fn fit_second_derivatives(
    mesh: &TriMesh,
    u: &DisplacementField,
    node: usize,
    patch: &[usize],
) -> Option<[(f64, [f64; 3]); 2]> {
    let nodes = mesh.nodes();
    let [x0, y0] = nodes[node];
    // Local length scale keeps the design matrix well conditioned.
    let h = patch
        .iter()
        .map(|&p| ((nodes[p][0] - x0).powi(2) + (nodes[p][1] - y0).powi(2)).sqrt())
        .fold(0.0f64, f64::max);
    if h == 0.0 {
        return None;
    }
    let v = DMatrix::from_fn(patch.len(), 6, |r, c| {
        let dx = (nodes[patch[r]][0] - x0) / h;
        let dy = (nodes[patch[r]][1] - y0) / h;
        [1.0, dx, dy, dx * dx, dx * dy, dy * dy][c]
    });
    let b = DMatrix::from_fn(patch.len(), 2, |r, c| u.as_slice()[2 * patch[r] + c]);
    let svd = v.svd(true, true);
    let sv = &svd.singular_values;
    if sv.min() <= 1e-10 * sv.max() {
        return None;
    }
    let coef = svd.solve(&b, 0.0).ok()?;
    let h2 = h * h;
    let comp = |c: usize| {
        (
            coef[(0, c)],
            [
                2.0 * coef[(3, c)] / h2,
                coef[(4, c)] / h2,
                2.0 * coef[(5, c)] / h2,
            ],
        )
    };
    Some([comp(0), comp(1)])
}

/// Builds the local system at `node`, or `None` without a full stencil.
pub fn nodal_system(
    mesh: &TriMesh,
    u: &DisplacementField,
    params: &MaterialParams,
    node: usize,
    opts: &NodalOptions,
) -> Option<NodalSystem> {
    if mesh.boundary_tags()[node] != BoundaryTag::Interior {
        return None;
    }
    let neighbors = mesh.node_neighbors();
    nodal_system_with(mesh, u, params, node, opts, &neighbors)
}

fn nodal_system_with(
    mesh: &TriMesh,
    u: &DisplacementField,
    params: &MaterialParams,
    node: usize,
    opts: &NodalOptions,
    neighbors: &[Vec<usize>],
) -> Option<NodalSystem> {
    let depth = opts.rings.max(1);
    // A truncated patch biases the fit, so every ring must be complete.
    let inner = rings(neighbors, node, depth - 1);
    if inner
        .iter()
        .any(|&v| mesh.boundary_tags()[v] != BoundaryTag::Interior)
    {
        return None;
    }
    let patch = rings(neighbors, node, depth);
    if patch.len() < 10 {
        return None;
    }
    let [(qx, [xxx, xxy, xyy]), (qy, [yxx, yxy, yyy])] =
        fit_second_derivatives(mesh, u, node, &patch)?;
    let a = Matrix2::new(xxx + yxy, xxx + xyy, xxy + yyy, yxx + yyy);
    let s = params.mass_sign.factor() * params.rho_omega2();
    Some(NodalSystem {
        a,
        rhs: Vector2::new(s * qx, s * qy),
    })
}

/// Pointwise inversion of the homogeneous Navier equation at every node.
/// Unreliable nodes are flagged rather than failing the whole map.
pub fn nodal_direct_inversion(
    mesh: &TriMesh,
    u: &DisplacementField,
    params: &MaterialParams,
    opts: &NodalOptions,
) -> Result<Vec<NodalEstimate>> {
    params.validate()?;
    if u.node_count() != mesh.node_count() {
        return Err(Error::DimensionMismatch {
            what: "displacement field",
            expected: mesh.dof_count(),
            actual: u.len(),
        });
    }
    let neighbors = mesh.node_neighbors();
    Ok((0..mesh.node_count())
        .map(|node| {
            if mesh.boundary_tags()[node] != BoundaryTag::Interior {
                return NodalEstimate::invalid(f64::INFINITY);
            }
            match nodal_system_with(mesh, u, params, node, opts, &neighbors) {
                Some(sys) => solve_nodal(&sys, opts),
                None => NodalEstimate::invalid(f64::INFINITY),
            }
        })
        .collect())
}

fn solve_nodal(sys: &NodalSystem, opts: &NodalOptions) -> NodalEstimate {
    let condition = sys.condition();
    if condition <= opts.max_condition {
        if let Some(x) = sys.a.lu().solve(&sys.rhs) {
            return NodalEstimate {
                lambda_plus_mu: x[0],
                mu: x[1],
                condition,
                status: NodalStatus::Full,
            };
        }
    }
    let div = sys.a.column(0).norm();
    let lap = sys.a.column(1);
    let lap_norm = lap.norm();
    if lap_norm > 0.0 && div <= opts.shear_ratio * lap_norm {
        return NodalEstimate {
            lambda_plus_mu: f64::NAN,
            mu: lap.dot(&sys.rhs) / (lap_norm * lap_norm),
            condition,
            status: NodalStatus::ShearOnly,
        };
    }
    NodalEstimate::invalid(condition)
}

/// Regularized least squares with identity covariance:
/// `1/2 ||f - D(u_m) E||^2 + lambda R(E)`, `E >= eps`.
pub fn deterministic_reconstruct(
    problem: &InverseProblem<'_>,
    graph: &AdjacencyGraph,
    reg: Regularizer,
    config: &SolverConfig,
) -> Result<ReconstructionResult> {
    fixed_point_solve(problem, graph, None, reg, config)
}
