//! Element operators and global assembly of the harmonic equilibrium system.
//!
//! Linear (P1) triangles with plane-strain material law. Because the modulus
//! is constant per element and enters the material matrix linearly, the
//! element stiffness factors as `k_e(E) = E * psi_e`, which is what allows the
//! global force balance to be rewritten as a linear map of the modulus
//! vector, `D(u) E = K(E) u`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SMatrix, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::field::{DisplacementField, ElasticityField};
use crate::linalg::{csr_from_triplets, csr_mul, Csr};
use crate::mesh::TriMesh;

pub type Matrix3x6 = SMatrix<f64, 3, 6>;
pub type Matrix6 = SMatrix<f64, 6, 6>;

/// Sign of the mass contribution in `A(E) = K(E) + sign * M_w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MassSign {
    /// `K - w^2 M`, the Galerkin weak form of the harmonic Navier equation.
    #[default]
    Standard,
    /// `K + w^2 M`: stiffness and mass integrals added, as in an element
    /// equation written `(k_e + k'_e) u = f`.
    Plus,
}

impl MassSign {
    pub fn factor(self) -> f64 {
        match self {
            MassSign::Standard => -1.0,
            MassSign::Plus => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    /// Poisson's ratio.
    pub nu: f64,
    /// Density, kg/m^3.
    pub rho: f64,
    /// Stimulus frequency in Hz; the angular frequency is `2 pi` times this.
    pub frequency_hz: f64,
    /// Pascals per unit of the modulus field (100 kPa by default).
    pub modulus_scale: f64,
    pub mass_sign: MassSign,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            nu: 0.495,
            rho: 1000.0,
            frequency_hz: 90.0,
            modulus_scale: 1e5,
            mass_sign: MassSign::Standard,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        check_nu(self.nu)?;
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "density must be positive, got {}",
                self.rho
            )));
        }
        if !(self.frequency_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "frequency must be positive, got {}",
                self.frequency_hz
            )));
        }
        if !(self.modulus_scale > 0.0) {
            return Err(Error::InvalidParameter(
                "modulus scale must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Angular frequency in rad/s.
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency_hz
    }

    pub fn rho_omega2(&self) -> f64 {
        self.rho * self.omega().powi(2)
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if (0.0..0.5).contains(&nu) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "Poisson's ratio must be in [0, 0.5), got {nu}"
        )))
    }
}

/// Plane-strain Lame parameters `(lambda, mu)` for modulus `e`.
pub fn lame_from_modulus(e: f64, nu: f64) -> Result<(f64, f64)> {
    check_nu(nu)?;
    if !(e > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "modulus must be positive, got {e}"
        )));
    }
    let lambda = nu * e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    Ok((lambda, mu))
}

/// Modulus-free plane-strain material matrix, `C = E * C~`.
pub fn material_matrix(nu: f64) -> Result<Matrix3<f64>> {
    let (l, m) = lame_from_modulus(1.0, nu)?;
    Ok(Matrix3::new(
        l + 2.0 * m,
        l,
        0.0,
        l,
        l + 2.0 * m,
        0.0,
        0.0,
        0.0,
        m,
    ))
}

fn checked_area(mesh: &TriMesh, elem: usize) -> Result<f64> {
    if elem >= mesh.element_count() {
        return Err(Error::InvalidParameter(format!(
            "element index {elem} out of range ({} elements)",
            mesh.element_count()
        )));
    }
    let area = mesh.signed_area(elem);
    if !(area > 0.0) {
        return Err(Error::DegenerateElement {
            element: elem,
            area,
        });
    }
    Ok(area)
}

/// Strain-displacement matrix of a P1 triangle, columns ordered
/// `(u1, v1, u2, v2, u3, v3)` and rows `(e_xx, e_yy, gamma_xy)`.
pub fn strain_displacement(mesh: &TriMesh, elem: usize) -> Result<Matrix3x6> {
    let area = checked_area(mesh, elem)?;
    let [p1, p2, p3] = mesh.element_coords(elem);
    let b = [p2[1] - p3[1], p3[1] - p1[1], p1[1] - p2[1]];
    let c = [p3[0] - p2[0], p1[0] - p3[0], p2[0] - p1[0]];
    let inv = 1.0 / (2.0 * area);
    let mut m = Matrix3x6::zeros();
    for k in 0..3 {
        m[(0, 2 * k)] = b[k] * inv;
        m[(1, 2 * k + 1)] = c[k] * inv;
        m[(2, 2 * k)] = c[k] * inv;
        m[(2, 2 * k + 1)] = b[k] * inv;
    }
    Ok(m)
}

/// Stiffness per unit modulus, `psi_e = area * B^T C~ B` (unit thickness).
pub fn element_stiffness_basis(mesh: &TriMesh, elem: usize, nu: f64) -> Result<Matrix6> {
    let area = checked_area(mesh, elem)?;
    let b = strain_displacement(mesh, elem)?;
    let c = material_matrix(nu)?;
    Ok(b.transpose() * c * b * area)
}

/// Consistent P1 mass matrix scaled by `rho w^2`; lateral and axial
/// components are uncoupled.
pub fn element_mass(mesh: &TriMesh, elem: usize, params: &MaterialParams) -> Result<Matrix6> {
    let area = checked_area(mesh, elem)?;
    let s = params.rho_omega2() * area / 12.0;
    let mut m = Matrix6::zeros();
    for a in 0..3 {
        for b in 0..3 {
            let v = if a == b { 2.0 * s } else { s };
            m[(2 * a, 2 * b)] = v;
            m[(2 * a + 1, 2 * b + 1)] = v;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct ElementOperators {
    pub b: Matrix3x6,
    pub psi: Matrix6,
    pub mass: Matrix6,
}

impl ElementOperators {
    pub fn compute(mesh: &TriMesh, elem: usize, params: &MaterialParams) -> Result<Self> {
        Ok(Self {
            b: strain_displacement(mesh, elem)?,
            psi: element_stiffness_basis(mesh, elem, params.nu)?,
            mass: element_mass(mesh, elem, params)?,
        })
    }
}

pub(crate) fn element_dofs(nodes: [usize; 3]) -> [usize; 6] {
    [
        2 * nodes[0],
        2 * nodes[0] + 1,
        2 * nodes[1],
        2 * nodes[1] + 1,
        2 * nodes[2],
        2 * nodes[2] + 1,
    ]
}

/// Assembled stiffness and mass for one modulus field.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    /// `K(E)`, N/m.
    pub stiffness: Csr,
    /// `rho w^2 M`.
    pub mass: Csr,
    pub mass_sign: MassSign,
}

impl GlobalSystem {
    /// Full harmonic operator `A(E) = K(E) + sign * M_w`.
    pub fn operator(&self) -> Csr {
        crate::linalg::csr_axpby(1.0, &self.stiffness, self.mass_sign.factor(), &self.mass)
    }
}

/// Precomputed element operators for a mesh and material; the reusable
/// entry point for repeated assembly during inversion.
#[derive(Debug, Clone)]
pub struct FemModel {
    mesh: TriMesh,
    params: MaterialParams,
    elements: Vec<ElementOperators>,
    mass: Csr,
}

impl FemModel {
    pub fn new(mesh: TriMesh, params: MaterialParams) -> Result<Self> {
        params.validate()?;
        let elements = (0..mesh.element_count())
            .map(|e| ElementOperators::compute(&mesh, e, &params))
            .collect::<Result<Vec<_>>>()?;
        let n = mesh.dof_count();
        let mass = csr_from_triplets(
            n,
            n,
            mesh.elements()
                .iter()
                .zip(&elements)
                .flat_map(|(&tri, ops)| {
                    let dofs = element_dofs(tri);
                    let m = ops.mass;
                    (0..36).map(move |k| (dofs[k / 6], dofs[k % 6], m[(k / 6, k % 6)]))
                }),
        );
        Ok(Self {
            mesh,
            params,
            elements,
            mass,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    pub fn element_operators(&self) -> &[ElementOperators] {
        &self.elements
    }

    pub fn dof_count(&self) -> usize {
        self.mesh.dof_count()
    }

    /// `rho w^2 M`.
    pub fn mass(&self) -> &Csr {
        &self.mass
    }

    fn check_field(&self, e: &ElasticityField) -> Result<()> {
        check_len("elasticity field", self.mesh.element_count(), e.len())?;
        if e.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("elasticity field"));
        }
        Ok(())
    }

    /// `K(E) = scale * sum_e E_e psi_e`, scattered into global DOFs.
    pub fn stiffness(&self, e: &ElasticityField) -> Result<Csr> {
        self.check_field(e)?;
        let n = self.dof_count();
        let scale = self.params.modulus_scale;
        Ok(csr_from_triplets(
            n,
            n,
            self.mesh
                .elements()
                .iter()
                .zip(&self.elements)
                .zip(e.as_slice())
                .flat_map(|((&tri, ops), &ee)| {
                    let dofs = element_dofs(tri);
                    let k = ops.psi * (scale * ee);
                    (0..36).map(move |q| (dofs[q / 6], dofs[q % 6], k[(q / 6, q % 6)]))
                }),
        ))
    }

    pub fn assemble_system(&self, e: &ElasticityField) -> Result<GlobalSystem> {
        Ok(GlobalSystem {
            stiffness: self.stiffness(e)?,
            mass: self.mass.clone(),
            mass_sign: self.params.mass_sign,
        })
    }

    /// Full harmonic operator `A(E)`.
    pub fn operator(&self, e: &ElasticityField) -> Result<Csr> {
        Ok(self.assemble_system(e)?.operator())
    }

    /// `M_w u` signed as it enters `A(E) u`, i.e. `sign * rho w^2 M u`.
    pub fn signed_mass_apply(&self, u: &[f64]) -> Vec<f64> {
        let s = self.params.mass_sign.factor();
        csr_mul(&self.mass, u).into_iter().map(|v| s * v).collect()
    }

    /// Modulus-linear force operator for a fixed displacement field.
    pub fn d_operator(&self, u: &DisplacementField) -> Result<DOperator> {
        check_len("displacement field", self.dof_count(), u.len())?;
        let scale = self.params.modulus_scale;
        let columns = self
            .mesh
            .elements()
            .iter()
            .zip(&self.elements)
            .map(|(&tri, ops)| {
                let dofs = element_dofs(tri);
                let ue = Vector6::from_column_slice(&u.element_values(tri));
                let v = ops.psi * ue * scale;
                std::array::from_fn(|k| (dofs[k], v[k]))
            })
            .collect();
        Ok(DOperator {
            rows: self.dof_count(),
            columns,
        })
    }
}

/// Convenience wrapper: assembles `K(E)` and `rho w^2 M` from scratch.
pub fn assemble_system(
    mesh: &TriMesh,
    e: &ElasticityField,
    params: &MaterialParams,
) -> Result<GlobalSystem> {
    FemModel::new(mesh.clone(), params.clone())?.assemble_system(e)
}

/// Convenience wrapper for [`FemModel::d_operator`].
pub fn assemble_d(
    mesh: &TriMesh,
    u: &DisplacementField,
    params: &MaterialParams,
) -> Result<DOperator> {
    FemModel::new(mesh.clone(), params.clone())?.d_operator(u)
}

/// Column-sparse `2N x P` operator with `D(u) E = K(E) u`. Column `e` holds
/// `scale * psi_e u_e` scattered to the six DOFs of element `e`.
#[derive(Debug, Clone)]
pub struct DOperator {
    rows: usize,
    columns: Vec<[(usize, f64); 6]>,
}

impl DOperator {
    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, e: usize) -> &[(usize, f64); 6] {
        &self.columns[e]
    }

    pub fn apply(&self, e: &[f64]) -> Vec<f64> {
        debug_assert_eq!(e.len(), self.columns.len());
        let mut out = vec![0.0; self.rows];
        for (col, &ee) in self.columns.iter().zip(e) {
            for &(r, v) in col {
                out[r] += v * ee;
            }
        }
        out
    }

    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        debug_assert_eq!(r.len(), self.rows);
        self.columns
            .iter()
            .map(|col| col.iter().map(|&(i, v)| v * r[i]).sum())
            .collect()
    }

    pub fn to_csr(&self) -> Csr {
        csr_from_triplets(
            self.rows,
            self.columns.len(),
            self.columns
                .iter()
                .enumerate()
                .flat_map(|(e, col)| col.iter().map(move |&(r, v)| (r, e, v))),
        )
    }
}

/// Prescribed displacement values at a set of DOFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletBc {
    dofs: Vec<usize>,
    values: Vec<f64>,
}

impl DirichletBc {
    /// Sorts by DOF; duplicates are rejected.
    pub fn new(pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut pairs: Vec<(usize, f64)> = pairs.into_iter().collect();
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::BoundaryCondition("duplicate constrained DOF".into()));
        }
        Ok(Self {
            dofs: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn zeros(dofs: impl IntoIterator<Item = usize>) -> Result<Self> {
        Self::new(dofs.into_iter().map(|d| (d, 0.0)))
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    /// DOFs in `0..n` not constrained, ascending.
    pub fn free_dofs(&self, n: usize) -> Vec<usize> {
        let mut mask = vec![true; n];
        for &d in &self.dofs {
            if d < n {
                mask[d] = false;
            }
        }
        (0..n).filter(|&i| mask[i]).collect()
    }
}

/// System restricted to free DOFs after symmetric elimination of the
/// constrained rows and columns.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: Csr,
    pub rhs: Vec<f64>,
    pub free: Vec<usize>,
    pub bc: DirichletBc,
    pub full_size: usize,
}

impl ReducedSystem {
    /// Re-inserts prescribed values to recover a full-length vector.
    pub fn expand(&self, x_free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full_size];
        for (&i, &v) in self.free.iter().zip(x_free) {
            out[i] = v;
        }
        for (&i, &v) in self.bc.dofs().iter().zip(self.bc.values()) {
            out[i] = v;
        }
        out
    }
}

pub fn apply_dirichlet(a: &Csr, rhs: &[f64], bc: &DirichletBc) -> Result<ReducedSystem> {
    let n = a.nrows();
    check_len("right-hand side", n, rhs.len())?;
    if let Some(&bad) = bc.dofs().iter().find(|&&d| d >= n) {
        return Err(Error::BoundaryCondition(format!(
            "constrained DOF {bad} out of range ({n} DOFs)"
        )));
    }
    let free = bc.free_dofs(n);
    if free.is_empty() {
        return Err(Error::BoundaryCondition("every DOF is constrained".into()));
    }
    let mut map = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        map[i] = k;
    }
    let mut prescribed = vec![0.0; n];
    for (&d, &v) in bc.dofs().iter().zip(bc.values()) {
        prescribed[d] = v;
    }
    let lifted = csr_mul(a, &prescribed);
    let reduced_rhs = free.iter().map(|&i| rhs[i] - lifted[i]).collect();
    let matrix = csr_from_triplets(
        free.len(),
        free.len(),
        a.triplet_iter().filter_map(|(i, j, &v)| {
            let (ri, rj) = (map[i], map[j]);
            (ri != usize::MAX && rj != usize::MAX).then_some((ri, rj, v))
        }),
    );
    Ok(ReducedSystem {
        matrix,
        rhs: reduced_rhs,
        free,
        bc: bc.clone(),
        full_size: n,
    })
}

/// Writes a sparse matrix in Matrix Market coordinate format.
pub fn to_matrix_market(a: &Csr) -> String {
    nalgebra_sparse::io::save_to_matrix_market_str(a)
}
