//! Per-element modulus and per-node displacement vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant elasticity modulus, one value per element, in units
/// of 100 kPa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElasticityField(Vec<f64>);

impl ElasticityField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn uniform(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for ElasticityField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Fourier-domain displacement amplitudes, interleaved `(lateral, axial)`
/// per node, so DOF `2i` is the lateral and `2i + 1` the axial component of
/// node `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DisplacementField(Vec<f64>);

impl DisplacementField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !values.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "displacement vector length {} is not even",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("displacement field"));
        }
        Ok(Self(values))
    }

    pub fn zeros(node_count: usize) -> Self {
        Self(vec![0.0; 2 * node_count])
    }

    pub fn node_count(&self) -> usize {
        self.0.len() / 2
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn lateral(&self, node: usize) -> f64 {
        self.0[2 * node]
    }

    pub fn axial(&self, node: usize) -> f64 {
        self.0[2 * node + 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Gathers the six element-local DOF values for the given node triple.
    pub fn element_values(&self, nodes: [usize; 3]) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (k, &n) in nodes.iter().enumerate() {
            out[2 * k] = self.0[2 * n];
            out[2 * k + 1] = self.0[2 * n + 1];
        }
        out
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
