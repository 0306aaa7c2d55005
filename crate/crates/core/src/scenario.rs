//! End-to-end experiment plumbing: build a phantom, simulate noisy
//! measurements and run one of the reconstruction methods on them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    deterministic_reconstruct, nodal_direct_inversion, NodalEstimate, NodalOptions,
};
use crate::error::{Error, Result};
use crate::fem::{DirichletBc, FemModel, MaterialParams};
use crate::field::{DisplacementField, ElasticityField};
use crate::forward::{
    corrupt_displacements, corrupt_forces, default_dirichlet, default_sigma_w,
    realized_noise_level, solve_forward, top_axial_load, DisplacementNoise, ForceNoiseMask,
};
use crate::inverse::{
    fixed_point_solve, InverseProblem, NoiseCovariance, ReconstructionResult, Regularizer,
    SolverConfig,
};
use crate::mesh::{
    assign_phantom, build_mesh, element_adjacency, AdjacencyGraph, PhantomSpec, TriMesh,
};
use crate::metrics::{cnr, rms_error, RegionMasks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Statistical MAP estimate with signal-dependent covariance and TV.
    Proposed,
    BaselineTv,
    BaselineWs,
    Nodal,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Proposed,
        Method::BaselineTv,
        Method::BaselineWs,
        Method::Nodal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::BaselineTv => "baseline-tv",
            Method::BaselineWs => "baseline-ws",
            Method::Nodal => "nodal",
        }
    }

    pub fn regularizer(self) -> Option<Regularizer> {
        match self {
            Method::Proposed | Method::BaselineTv => Some(Regularizer::Tv),
            Method::BaselineWs => Some(Regularizer::WeightedSmoothness),
            Method::Nodal => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown method '{s}' (expected proposed, baseline-tv, baseline-ws or nodal)"
                ))
            })
    }
}

/// Measurement noise settings for one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSettings {
    pub displacement: DisplacementNoise,
    /// `None` uses `1e-3 ||f||_inf`.
    #[serde(default)]
    pub sigma_w: Option<f64>,
    #[serde(default)]
    pub force_mask: ForceNoiseMask,
}

impl NoiseSettings {
    pub fn level(delta: f64) -> Self {
        Self {
            displacement: DisplacementNoise::Level(delta),
            sigma_w: None,
            force_mask: ForceNoiseMask::default(),
        }
    }
}

/// A phantom with its discretization, ready for simulation.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub model: FemModel,
    pub graph: AdjacencyGraph,
    pub e_true: ElasticityField,
    pub masks: Option<RegionMasks>,
    pub force: Vec<f64>,
    pub bc: DirichletBc,
}

impl Phantom {
    pub fn new(spec: &PhantomSpec, params: &MaterialParams, load: f64) -> Result<Self> {
        let mesh = build_mesh(spec)?;
        let e_true = assign_phantom(&mesh, spec);
        Self::from_mesh(spec, mesh, e_true, params, load)
    }

    /// Wraps an existing mesh and ground truth, e.g. ones read back from disk.
    /// Region masks still come from the inclusion geometry in `spec`.
    pub fn from_mesh(
        spec: &PhantomSpec,
        mesh: TriMesh,
        e_true: ElasticityField,
        params: &MaterialParams,
        load: f64,
    ) -> Result<Self> {
        if e_true.len() != mesh.element_count() {
            return Err(Error::DimensionMismatch {
                what: "ground-truth field",
                expected: mesh.element_count(),
                actual: e_true.len(),
            });
        }
        let graph = element_adjacency(&mesh);
        let masks = RegionMasks::from_phantom(&mesh, spec).ok();
        let force = top_axial_load(&mesh, load);
        let bc = default_dirichlet(&mesh);
        let model = FemModel::new(mesh, params.clone())?;
        Ok(Self {
            spec: spec.clone(),
            model,
            graph,
            e_true,
            masks,
            force,
            bc,
        })
    }

    pub fn clean_displacement(&self) -> Result<DisplacementField> {
        solve_forward(&self.model, &self.e_true, &self.force, &self.bc)
    }

    /// Corrupts a clean field and the applied load with seeded noise.
    pub fn measure(
        &self,
        u_clean: &DisplacementField,
        noise: &NoiseSettings,
        seed: u64,
    ) -> Result<Measurement> {
        let (u_meas, sigma_n) = corrupt_displacements(u_clean, &noise.displacement, seed)?;
        let sigma_w = noise
            .sigma_w
            .unwrap_or_else(|| default_sigma_w(&self.force));
        let f_meas = corrupt_forces(&self.force, sigma_w, noise.force_mask, seed)?;
        let realized_delta = realized_noise_level(u_clean, &u_meas);
        Ok(Measurement {
            u_meas,
            f_meas,
            covariance: NoiseCovariance { sigma_w, sigma_n },
            realized_delta,
            seed,
        })
    }

    pub fn problem<'a>(&'a self, m: &Measurement) -> Result<InverseProblem<'a>> {
        InverseProblem::new(&self.model, m.u_meas.clone(), &m.f_meas, &self.bc)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Measurement {
    pub u_meas: DisplacementField,
    pub f_meas: Vec<f64>,
    pub covariance: NoiseCovariance,
    pub realized_delta: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodOutput {
    Element(Box<ReconstructionResult>),
    Nodal { estimates: Vec<NodalEstimate> },
}

/// Output of one method on one measurement, with quality metrics when a
/// per-element estimate is available.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: Method,
    pub output: MethodOutput,
    pub rms: Option<f64>,
    pub cnr: Option<f64>,
}

impl MethodRun {
    pub fn reconstruction(&self) -> Option<&ReconstructionResult> {
        match &self.output {
            MethodOutput::Element(r) => Some(r),
            MethodOutput::Nodal { .. } => None,
        }
    }
}

pub fn run_method(
    phantom: &Phantom,
    measurement: &Measurement,
    method: Method,
    config: &SolverConfig,
    nodal: &NodalOptions,
) -> Result<MethodRun> {
    let output = match method {
        Method::Nodal => MethodOutput::Nodal {
            estimates: nodal_direct_inversion(
                phantom.model.mesh(),
                &measurement.u_meas,
                phantom.model.params(),
                nodal,
            )?,
        },
        Method::Proposed => {
            let problem = phantom.problem(measurement)?;
            MethodOutput::Element(Box::new(fixed_point_solve(
                &problem,
                &phantom.graph,
                Some(&measurement.covariance),
                Regularizer::Tv,
                config,
            )?))
        }
        Method::BaselineTv | Method::BaselineWs => {
            let problem = phantom.problem(measurement)?;
            let reg = method.regularizer().expect("element method");
            MethodOutput::Element(Box::new(deterministic_reconstruct(
                &problem,
                &phantom.graph,
                reg,
                config,
            )?))
        }
    };
    let (rms, cnr_value) = match &output {
        MethodOutput::Element(r) => {
            let rms = rms_error(r.e_hat.as_slice(), phantom.e_true.as_slice())?;
            let c = match &phantom.masks {
                Some(m) => Some(cnr(r.e_hat.as_slice(), m)?),
                None => None,
            };
            (Some(rms), c)
        }
        MethodOutput::Nodal { .. } => (None, None),
    };
    Ok(MethodRun {
        method,
        output,
        rms,
        cnr: cnr_value,
    })
}
