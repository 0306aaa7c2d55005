//! Reconstruction quality measures.
//!
//! * RMS error: `||E_hat - E_true||_2 / ||E_true||_2`.
//! * CNR: `|mean_incl - mean_bg| / sqrt((var_incl + var_bg) / 2)` with
//!   population variances.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::field::{diff_norm, norm};
use crate::mesh::{PhantomSpec, TriMesh};

/// Formula strings written into report headers.
pub const RMS_FORMULA: &str = "rms = ||E_hat - E_true||_2 / ||E_true||_2";
pub const CNR_FORMULA: &str = "cnr = |mean_incl - mean_bg| / sqrt((var_incl + var_bg) / 2)";

/// Element sets for the inclusion and the background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMasks {
    inclusion: Vec<usize>,
    background: Vec<usize>,
}

impl RegionMasks {
    pub fn new(inclusion: Vec<usize>, background: Vec<usize>) -> Result<Self> {
        if inclusion.is_empty() || background.is_empty() {
            return Err(Error::InvalidParameter(
                "region masks must both be nonempty".into(),
            ));
        }
        if inclusion.iter().any(|i| background.contains(i)) {
            return Err(Error::InvalidParameter("region masks overlap".into()));
        }
        Ok(Self {
            inclusion,
            background,
        })
    }

    /// Splits elements by whether their centroid lies inside the inclusion.
    pub fn from_phantom(mesh: &TriMesh, spec: &PhantomSpec) -> Result<Self> {
        let (inclusion, background): (Vec<usize>, Vec<usize>) =
            (0..mesh.element_count()).partition(|&e| spec.in_inclusion(mesh.centroid(e)));
        Self::new(inclusion, background)
    }

    pub fn inclusion(&self) -> &[usize] {
        &self.inclusion
    }

    pub fn background(&self) -> &[usize] {
        &self.background
    }
}

pub fn rms_error(e_hat: &[f64], e_true: &[f64]) -> Result<f64> {
    check_len("estimate", e_true.len(), e_hat.len())?;
    let denom = norm(e_true);
    if denom == 0.0 {
        return Err(Error::InvalidParameter(
            "rms error undefined for a zero reference field".into(),
        ));
    }
    Ok(diff_norm(e_hat, e_true) / denom)
}

fn mean_var(values: &[f64], idx: &[usize]) -> (f64, f64) {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| values[i]).sum::<f64>() / n;
    let var = idx.iter().map(|&i| (values[i] - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Contrast-to-noise ratio. Returns `f64::INFINITY` when both regions are
/// flat but differ, and 0 when the means coincide.
pub fn cnr(e_hat: &[f64], masks: &RegionMasks) -> Result<f64> {
    let max_idx = masks
        .inclusion
        .iter()
        .chain(&masks.background)
        .copied()
        .max()
        .unwrap_or(0);
    if max_idx >= e_hat.len() {
        return Err(Error::DimensionMismatch {
            what: "region mask index",
            expected: e_hat.len(),
            actual: max_idx,
        });
    }
    let (mi, vi) = mean_var(e_hat, &masks.inclusion);
    let (mb, vb) = mean_var(e_hat, &masks.background);
    let contrast = (mi - mb).abs();
    // Relative cutoff so round-off in the means does not masquerade as contrast.
    if contrast <= 1e-14 * mi.abs().max(mb.abs()) {
        return Ok(0.0);
    }
    let pooled = (0.5 * (vi + vb)).sqrt();
    if pooled == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(contrast / pooled)
}
