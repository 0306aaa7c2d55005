//! TOML run configuration.
//!
//! Every section is optional and falls back to the library defaults;
//! unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mre_core::baselines::NodalOptions;
use mre_core::forward::{DisplacementNoise, ForceNoiseMask};
use mre_core::io::Provenance;
use mre_core::scenario::NoiseSettings;
use mre_core::{MaterialParams, Method, PhantomSpec, SolverConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Amplitude of the axial load on each top-boundary node (N).
    pub load_amplitude: f64,
    pub method: Method,
    pub phantom: PhantomSpec,
    pub material: MaterialParams,
    pub noise: NoiseConfig,
    pub solver: SolverConfig,
    pub nodal: NodalOptions,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            load_amplitude: 1.0,
            method: Method::Proposed,
            phantom: PhantomSpec::default(),
            material: MaterialParams::default(),
            noise: NoiseConfig::default(),
            solver: SolverConfig::default(),
            nodal: NodalOptions::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Displacement noise is given by at most one of `delta`, `snr_db` or the
/// pair `lateral`/`axial`; with none of them the data are noiseless.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub delta: Option<f64>,
    pub snr_db: Option<f64>,
    pub lateral: Option<f64>,
    pub axial: Option<f64>,
    /// Force noise std; defaults to `1e-3 ||f||_inf`.
    pub sigma_w: Option<f64>,
    pub force_mask: ForceNoiseMask,
}

impl NoiseConfig {
    pub fn settings(&self) -> Result<NoiseSettings> {
        let displacement = match (self.delta, self.snr_db, self.lateral, self.axial) {
            (None, None, None, None) => DisplacementNoise::Level(0.0),
            (Some(d), None, None, None) => DisplacementNoise::Level(d),
            (None, Some(db), None, None) => {
                DisplacementNoise::Level(mre_core::forward::snr_to_delta(db)?)
            }
            (None, None, Some(lateral), Some(axial)) => {
                DisplacementNoise::PerAxis { lateral, axial }
            }
            (None, None, _, _) => {
                return Err(CliError::Config(
                    "noise.lateral and noise.axial must be given together".into(),
                ))
            }
            _ => {
                return Err(CliError::Config(
                    "give only one of noise.delta, noise.snr_db or noise.lateral/axial".into(),
                ))
            }
        };
        displacement
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(s) = self.sigma_w {
            if !(s >= 0.0) {
                return Err(CliError::Config(format!(
                    "noise.sigma_w must be >= 0, got {s}"
                )));
            }
        }
        Ok(NoiseSettings {
            displacement,
            sigma_w: self.sigma_w,
            force_mask: self.force_mask,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub deltas: Vec<f64>,
    /// Offsets added to the run seed; one noise realization per entry.
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Regularization weights tried per method; the summary keeps the one
    /// with the lowest seed-averaged RMS.
    pub lambda_grid: BTreeMap<Method, Vec<f64>>,
    /// Outer-iteration cap for sweep runs, overriding `solver.max_outer`.
    pub max_outer: Option<usize>,
    /// Fill the `wall_time_s` column. Off by default so that repeated sweeps
    /// produce identical files.
    pub record_wall_time: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            deltas: vec![0.001, 0.01, 0.02, 0.056, 0.1, 0.2],
            seeds: vec![0, 1, 2],
            methods: vec![Method::Proposed, Method::BaselineTv, Method::BaselineWs],
            lambda_grid: BTreeMap::from([
                (Method::Proposed, vec![10.0, 30.0, 100.0, 300.0]),
                (Method::BaselineTv, vec![1e-4, 1e-3, 1e-2, 1e-1]),
                (Method::BaselineWs, vec![1e-5, 1e-3, 1e-1]),
            ]),
            max_outer: Some(20),
            record_wall_time: false,
        }
    }
}

impl SweepConfig {
    /// Weights for one method; falls back to the solver's `lambda_reg`.
    pub fn lambdas(&self, method: Method, fallback: f64) -> Vec<f64> {
        match self.lambda_grid.get(&method) {
            Some(v) if !v.is_empty() => v.clone(),
            _ => vec![fallback],
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.deltas.is_empty() || self.seeds.is_empty() || self.methods.is_empty() {
            return bad("sweep.deltas, sweep.seeds and sweep.methods must be nonempty".into());
        }
        if let Some(d) = self.deltas.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return bad(format!("sweep delta {d} outside [0, 1]"));
        }
        if self.methods.contains(&Method::Nodal) {
            return bad("the nodal method yields per-node maps and cannot be swept".into());
        }
        for (m, grid) in &self.lambda_grid {
            if let Some(l) = grid.iter().find(|l| !(**l >= 0.0)) {
                return bad(format!("sweep.lambda_grid.{m} has invalid weight {l}"));
            }
        }
        if self.max_outer == Some(0) {
            return bad("sweep.max_outer must be >= 1".into());
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: mre_core::Error| CliError::Config(e.to_string());
        self.phantom.validate().map_err(cfg)?;
        self.material.validate().map_err(cfg)?;
        self.solver.validate().map_err(cfg)?;
        if !(self.load_amplitude.is_finite() && self.load_amplitude != 0.0) {
            return Err(CliError::Config(
                "load_amplitude must be finite and nonzero".into(),
            ));
        }
        self.noise.settings()?;
        self.sweep.validate()
    }

    /// Short SHA-256 digest of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash(),
            seed: self.seed,
        }
    }
}
