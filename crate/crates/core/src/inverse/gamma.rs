use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemModel;
use crate::field::ElasticityField;
use crate::linalg::{csr_axpby, csr_from_triplets, BandedCholesky, Csr};

/// Gaussian noise levels entering the covariance: `Sigma_w = sigma_w^2 I`
/// on the observed force rows and `Sigma_n = diag(sigma_lat^2, sigma_ax^2)`
/// repeated over nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCovariance {
    pub sigma_w: f64,
    /// `(lateral, axial)` displacement noise std.
    pub sigma_n: [f64; 2],
}

/// Operator through which displacement noise propagates into `Gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GammaOperator {
    /// `A(E) = K(E) + sign * M_w`.
    #[default]
    Full,
    /// `K(E)` alone.
    StiffnessOnly,
}

/// Factorized covariance of the composite noise `w~ = -A(E) n + w`.
#[derive(Debug, Clone)]
pub struct GammaCovariance {
    matrix: Csr,
    factor: BandedCholesky,
    log_det: f64,
}

impl GammaCovariance {
    pub fn from_matrix(matrix: Csr) -> Result<Self> {
        let factor = BandedCholesky::factor(&matrix)?;
        let log_det = factor.log_det();
        if !log_det.is_finite() {
            return Err(Error::NonFinite("log-determinant of Gamma"));
        }
        Ok(Self {
            matrix,
            factor,
            log_det,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(csr_from_triplets(dim, dim, (0..dim).map(|i| (i, i, 1.0))))
            .expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    /// `Gamma^-1 r`.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        self.factor.solve(r)
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `||r||^2_{Gamma^-1}`.
    pub fn weighted_norm2(&self, r: &[f64]) -> f64 {
        crate::field::dot(r, &self.solve(r))
    }
}

/// Builds `Gamma = Sigma_w + A_o Sigma_n A_o^T`, where `A_o` keeps the
/// observed rows of the chosen operator, and factorizes it.
pub fn build_gamma(
    model: &FemModel,
    e: &ElasticityField,
    observed: &[usize],
    cov: &NoiseCovariance,
    op: GammaOperator,
) -> Result<GammaCovariance> {
    if e.as_slice().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter(
            "covariance requires a strictly positive modulus field".into(),
        ));
    }
    if !(cov.sigma_w >= 0.0 && cov.sigma_n[0] >= 0.0 && cov.sigma_n[1] >= 0.0) {
        return Err(Error::InvalidParameter(
            "noise std must be non-negative".into(),
        ));
    }
    let n = model.dof_count();
    let m = observed.len();
    let a = match op {
        GammaOperator::Full => model.operator(e)?,
        GammaOperator::StiffnessOnly => model.stiffness(e)?,
    };
    let mut row_map = vec![usize::MAX; n];
    for (k, &i) in observed.iter().enumerate() {
        if i >= n {
            return Err(Error::DimensionMismatch {
                what: "observed row index",
                expected: n,
                actual: i,
            });
        }
        row_map[i] = k;
    }
    // A_o Sigma_n^{1/2}
    let scaled = csr_from_triplets(
        m,
        n,
        a.triplet_iter().filter_map(|(i, j, &v)| {
            let r = row_map[i];
            (r != usize::MAX).then(|| (r, j, v * cov.sigma_n[j % 2]))
        }),
    );
    let propagated = &scaled * &scaled.transpose();
    let sw2 = cov.sigma_w * cov.sigma_w;
    let diag = csr_from_triplets(m, m, (0..m).map(|i| (i, i, sw2)));
    GammaCovariance::from_matrix(csr_axpby(1.0, &propagated, 1.0, &diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::MaterialParams;
    use crate::forward::default_dirichlet;
    use crate::linalg::csr_to_dense;
    use crate::mesh::{build_mesh, PhantomSpec};
    use nalgebra::DMatrix;

    fn model(n: usize) -> FemModel {
        let spec = PhantomSpec {
            nx: n,
            ny: n,
            ..PhantomSpec::default()
        };
        FemModel::new(build_mesh(&spec).unwrap(), MaterialParams::default()).unwrap()
    }

    #[test]
    fn zero_displacement_noise_gives_sigma_w() {
        let m = model(3);
        let e = ElasticityField::uniform(18, 0.2);
        let obs: Vec<usize> = (0..m.dof_count()).collect();
        let cov = NoiseCovariance {
            sigma_w: 0.5,
            sigma_n: [0.0, 0.0],
        };
        let g = build_gamma(&m, &e, &obs, &cov, GammaOperator::Full).unwrap();
        let d = csr_to_dense(g.matrix());
        assert!((d - DMatrix::identity(32, 32) * 0.25).abs().max() < 1e-15);
        let expected = 32.0 * (0.25f64).ln();
        assert!((g.log_det() - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_triple_product() {
        let m = model(3);
        let e = ElasticityField::new((0..18).map(|i| 0.1 + 0.03 * i as f64).collect());
        let obs = default_dirichlet(m.mesh()).free_dofs(m.dof_count());
        let cov = NoiseCovariance {
            sigma_w: 1e-2,
            sigma_n: [2e-6, 3e-6],
        };
        for op in [GammaOperator::Full, GammaOperator::StiffnessOnly] {
            let g = build_gamma(&m, &e, &obs, &cov, op).unwrap();
            let a = csr_to_dense(&match op {
                GammaOperator::Full => m.operator(&e).unwrap(),
                GammaOperator::StiffnessOnly => m.stiffness(&e).unwrap(),
            });
            let ao = a.select_rows(&obs);
            let sn = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m.dof_count(), |j, _| {
                cov.sigma_n[j % 2].powi(2)
            }));
            let oracle = DMatrix::identity(obs.len(), obs.len()) * cov.sigma_w.powi(2)
                + &ao * sn * ao.transpose();
            let diff = (csr_to_dense(g.matrix()) - &oracle).abs().max();
            let scale = oracle.abs().max();
            assert!(diff <= 1e-12 * scale, "{diff} vs {scale}");
            let chol = oracle.clone().cholesky().unwrap();
            let ld: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
            assert!((g.log_det() - ld).abs() < 1e-8 * ld.abs().max(1.0));
            let r: Vec<f64> = (0..obs.len()).map(|i| (i as f64).cos()).collect();
            let x = g.solve(&r);
            let back = &oracle * nalgebra::DVector::from_vec(x);
            for (p, q) in back.iter().zip(&r) {
                assert!((p - q).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_field_and_reports_pivot() {
        let m = model(2);
        let obs: Vec<usize> = (0..m.dof_count()).collect();
        let cov = NoiseCovariance {
            sigma_w: 0.0,
            sigma_n: [0.0, 0.0],
        };
        let e = ElasticityField::uniform(8, 0.2);
        assert!(matches!(
            build_gamma(&m, &e, &obs, &cov, GammaOperator::Full),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let bad = ElasticityField::uniform(8, -1.0);
        assert!(build_gamma(&m, &bad, &obs, &cov, GammaOperator::Full).is_err());
    }
}
