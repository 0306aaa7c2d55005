use crate::error::{check_len, Result};
use crate::fem::{DOperator, DirichletBc, FemModel};
use crate::field::DisplacementField;

/// Measurements bound to a model: `D(u_m)` and the mass-corrected force
/// target, both restricted to the observed (free) DOFs.
///
/// Reaction forces at Dirichlet DOFs are not measured, so those rows are
/// dropped. The inertial term is moved to the data side,
/// `f_obs - sign * M_w u_m`, so that `target = D(u_m) E` holds exactly for
/// noiseless data.
#[derive(Debug, Clone)]
pub struct InverseProblem<'a> {
    model: &'a FemModel,
    u_meas: DisplacementField,
    d: DOperator,
    observed: Vec<usize>,
    target: Vec<f64>,
}

impl<'a> InverseProblem<'a> {
    pub fn new(
        model: &'a FemModel,
        u_meas: DisplacementField,
        f_meas: &[f64],
        bc: &DirichletBc,
    ) -> Result<Self> {
        let n = model.dof_count();
        check_len("force vector", n, f_meas.len())?;
        let observed = bc.free_dofs(n);
        Self::with_rows(model, u_meas, f_meas, observed)
    }

    /// Uses an explicit set of observed rows.
    pub fn with_rows(
        model: &'a FemModel,
        u_meas: DisplacementField,
        f_meas: &[f64],
        observed: Vec<usize>,
    ) -> Result<Self> {
        let n = model.dof_count();
        check_len("force vector", n, f_meas.len())?;
        let d = model.d_operator(&u_meas)?;
        let inertial = model.signed_mass_apply(u_meas.as_slice());
        let target = observed.iter().map(|&i| f_meas[i] - inertial[i]).collect();
        Ok(Self {
            model,
            u_meas,
            d,
            observed,
            target,
        })
    }

    pub fn model(&self) -> &'a FemModel {
        self.model
    }

    pub fn u_meas(&self) -> &DisplacementField {
        &self.u_meas
    }

    pub fn d_operator(&self) -> &DOperator {
        &self.d
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn unknowns(&self) -> usize {
        self.d.ncols()
    }

    /// `(D E)` at observed rows.
    pub fn d_apply(&self, e: &[f64]) -> Vec<f64> {
        let full = self.d.apply(e);
        self.observed.iter().map(|&i| full[i]).collect()
    }

    /// `D^T r` for `r` given at observed rows.
    pub fn d_apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.d.nrows()];
        for (&i, &v) in self.observed.iter().zip(r) {
            full[i] = v;
        }
        self.d.apply_transpose(&full)
    }

    /// `target - D E`.
    pub fn residual(&self, e: &[f64]) -> Vec<f64> {
        self.d_apply(e)
            .into_iter()
            .zip(&self.target)
            .map(|(de, t)| t - de)
            .collect()
    }
}
