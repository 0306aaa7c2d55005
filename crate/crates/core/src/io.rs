//! CSV serialization of per-element fields and per-DOF vectors.
//!
//! Files may start with `#` comment lines; writers emit one carrying the
//! configuration hash and RNG seed when provenance is supplied.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ElasticityField;

/// Identifies the configuration and seed that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config={} seed={}", self.config_hash, self.seed)
    }
}

#[derive(Serialize, Deserialize)]
struct ElementRow {
    element: usize,
    value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Axis {
    Lateral,
    Axial,
}

#[derive(Serialize, Deserialize)]
struct DofRow {
    node_id: usize,
    axis: Axis,
    value: f64,
}

fn comment<W: Write>(w: &mut W, prov: Option<&Provenance>) -> Result<()> {
    if let Some(p) = prov {
        writeln!(w, "# {p}")?;
    }
    Ok(())
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Writes `element,value` rows.
pub fn write_element_field<W: Write>(
    mut w: W,
    values: &[f64],
    prov: Option<&Provenance>,
) -> Result<()> {
    comment(&mut w, prov)?;
    let mut out = csv::Writer::from_writer(w);
    for (element, &value) in values.iter().enumerate() {
        out.serialize(ElementRow { element, value })?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `element,value` rows; every index in `0..n` must appear once.
pub fn read_element_field<R: Read>(r: R) -> Result<ElasticityField> {
    let mut slots: Vec<Option<f64>> = Vec::new();
    for row in reader(r).deserialize() {
        let ElementRow { element, value } = row?;
        if element >= slots.len() {
            slots.resize(element + 1, None);
        }
        if slots[element].replace(value).is_some() {
            return Err(Error::InvalidParameter(format!(
                "element {element} listed twice"
            )));
        }
    }
    let values = slots
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::InvalidParameter(format!("element {i} missing"))))
        .collect::<Result<Vec<f64>>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("element field"));
    }
    Ok(ElasticityField::new(values))
}

/// Writes an interleaved `(lateral, axial)` vector as `node_id,axis,value`.
pub fn write_dof_vector<W: Write>(
    mut w: W,
    values: &[f64],
    prov: Option<&Provenance>,
) -> Result<()> {
    if !values.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter(
            "DOF vector length must be even".into(),
        ));
    }
    comment(&mut w, prov)?;
    let mut out = csv::Writer::from_writer(w);
    for (i, &value) in values.iter().enumerate() {
        let axis = if i % 2 == 0 {
            Axis::Lateral
        } else {
            Axis::Axial
        };
        out.serialize(DofRow {
            node_id: i / 2,
            axis,
            value,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dof_vector<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut slots: Vec<Option<f64>> = Vec::new();
    for row in reader(r).deserialize() {
        let DofRow {
            node_id,
            axis,
            value,
        } = row?;
        let i = 2 * node_id + usize::from(axis == Axis::Axial);
        if i >= slots.len() {
            slots.resize((i / 2 + 1) * 2, None);
        }
        if slots[i].replace(value).is_some() {
            return Err(Error::InvalidParameter(format!(
                "node {node_id} {axis:?} listed twice"
            )));
        }
    }
    let values = slots
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| Error::InvalidParameter(format!("DOF {i} of node {} missing", i / 2)))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("DOF vector"));
    }
    Ok(values)
}
