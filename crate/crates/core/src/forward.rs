//! Synthetic measurement generation: forward harmonic solve and Gaussian
//! corruption of displacements and forces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fem::{apply_dirichlet, DirichletBc, FemModel};
use crate::field::{diff_norm, norm, DisplacementField, ElasticityField};
use crate::linalg::{csr_mul, BandedLu};
use crate::mesh::{BoundaryTag, TriMesh};

/// Relative residual every accepted forward solve must meet.
pub const FORWARD_RESIDUAL_TOL: f64 = 1e-10;
/// Pivot-ratio threshold above which a reduced system is rejected.
pub const MAX_CONDITION_ESTIMATE: f64 = 1e14;

/// Both displacement components fixed to zero on bottom-boundary nodes.
pub fn default_dirichlet(mesh: &TriMesh) -> DirichletBc {
    DirichletBc::zeros(
        mesh.nodes_with_tag(BoundaryTag::Bottom)
            .into_iter()
            .flat_map(|n| [2 * n, 2 * n + 1]),
    )
    .expect("bottom nodes are distinct")
}

/// Axial nodal forces of the given amplitude on every top-boundary node.
pub fn top_axial_load(mesh: &TriMesh, amplitude: f64) -> Vec<f64> {
    let mut f = vec![0.0; mesh.dof_count()];
    for n in mesh.nodes_with_tag(BoundaryTag::Top) {
        f[2 * n + 1] = amplitude;
    }
    f
}

/// Solves `A(E) u = f` at the free DOFs, with prescribed values elsewhere.
pub fn solve_forward(
    model: &FemModel,
    e: &ElasticityField,
    force: &[f64],
    bc: &DirichletBc,
) -> Result<DisplacementField> {
    check_len("force vector", model.dof_count(), force.len())?;
    let a = model.operator(e)?;
    let reduced = apply_dirichlet(&a, force, bc)?;
    let lu = BandedLu::factor(&reduced.matrix)?;
    if lu.condition_estimate() > MAX_CONDITION_ESTIMATE {
        return Err(Error::Singular {
            condition_estimate: lu.condition_estimate(),
        });
    }
    let x = lu.solve(&reduced.rhs);
    let rhs_norm = norm(&reduced.rhs);
    if rhs_norm > 0.0 {
        let r = csr_mul(&reduced.matrix, &x);
        let residual = diff_norm(&r, &reduced.rhs) / rhs_norm;
        if !(residual < FORWARD_RESIDUAL_TOL) {
            return Err(Error::Residual {
                residual,
                tolerance: FORWARD_RESIDUAL_TOL,
            });
        }
    }
    DisplacementField::new(reduced.expand(&x))
}

/// How displacement noise is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisplacementNoise {
    /// Target noise level `||u_m - u|| / ||u||`; isotropic per-DOF standard
    /// deviation `delta ||u|| / sqrt(2N)`.
    Level(f64),
    /// Explicit lateral and axial standard deviations (meters).
    PerAxis { lateral: f64, axial: f64 },
}

impl DisplacementNoise {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DisplacementNoise::Level(d) if !(0.0..=1.0).contains(&d) => Err(
                Error::InvalidParameter(format!("noise level must be in [0, 1], got {d}")),
            ),
            DisplacementNoise::PerAxis { lateral, axial } if !(lateral >= 0.0 && axial >= 0.0) => {
                Err(Error::InvalidParameter(
                    "noise standard deviations must be >= 0".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// `(lateral, axial)` standard deviations for a given clean field.
    pub fn sigmas(&self, u: &DisplacementField) -> [f64; 2] {
        match *self {
            DisplacementNoise::Level(delta) => {
                let s = if u.is_empty() {
                    0.0
                } else {
                    delta * norm(u.as_slice()) / (u.len() as f64).sqrt()
                };
                [s, s]
            }
            DisplacementNoise::PerAxis { lateral, axial } => [lateral, axial],
        }
    }
}

/// Which force DOFs receive measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ForceNoiseMask {
    All,
    /// Only DOFs carrying a nonzero applied load.
    #[default]
    Loaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub displacement: DisplacementNoise,
    /// Force-noise standard deviation (N).
    pub sigma_w: f64,
    pub force_mask: ForceNoiseMask,
    pub seed: u64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        self.displacement.validate()?;
        if !(self.sigma_w >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "force noise std must be >= 0, got {}",
                self.sigma_w
            )));
        }
        Ok(())
    }
}

/// Default force-noise std when none is configured: `1e-3 ||f||_inf`.
pub fn default_sigma_w(force: &[f64]) -> f64 {
    1e-3 * force.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

const DISPLACEMENT_STREAM: u64 = 0;
const FORCE_STREAM: u64 = 1;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Adds zero-mean Gaussian noise to every DOF. Returns the noisy field and
/// the `(lateral, axial)` standard deviations used.
pub fn corrupt_displacements(
    u: &DisplacementField,
    noise: &DisplacementNoise,
    seed: u64,
) -> Result<(DisplacementField, [f64; 2])> {
    noise.validate()?;
    let sigmas = noise.sigmas(u);
    let mut rng = rng_for(seed, DISPLACEMENT_STREAM);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let values = u
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let s = sigmas[i % 2];
            // Draw even for zero std so streams stay aligned across levels.
            let z: f64 = std_normal.sample(&mut rng);
            if s > 0.0 {
                v + s * z
            } else {
                v
            }
        })
        .collect();
    Ok((DisplacementField::new(values)?, sigmas))
}

pub fn corrupt_forces(
    force: &[f64],
    sigma_w: f64,
    mask: ForceNoiseMask,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(sigma_w >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "force noise std must be >= 0, got {sigma_w}"
        )));
    }
    let mut rng = rng_for(seed, FORCE_STREAM);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(force
        .iter()
        .map(|&f| {
            let z: f64 = std_normal.sample(&mut rng);
            let active = match mask {
                ForceNoiseMask::All => true,
                ForceNoiseMask::Loaded => f != 0.0,
            };
            if active && sigma_w > 0.0 {
                f + sigma_w * z
            } else {
                f
            }
        })
        .collect())
}

/// Noise level `||u_m - u|| / ||u_m||`.
pub fn realized_noise_level(u: &DisplacementField, u_meas: &DisplacementField) -> f64 {
    let d = norm(u_meas.as_slice());
    if d == 0.0 {
        0.0
    } else {
        diff_norm(u.as_slice(), u_meas.as_slice()) / d
    }
}

/// `SNR_dB = -20 log10(delta)`.
pub fn delta_to_snr(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "noise level must be in (0, 1], got {delta}"
        )));
    }
    Ok(-20.0 * delta.log10())
}

pub fn snr_to_delta(snr_db: f64) -> Result<f64> {
    if !(snr_db >= 0.0 && snr_db.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "SNR must be a finite non-negative dB value, got {snr_db}"
        )));
    }
    Ok(10f64.powf(-snr_db / 20.0))
}
