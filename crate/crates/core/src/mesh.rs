//! Triangulated rectangular phantoms with a circular inclusion.
//!
//! Meshes are structured right-triangle tilings of a `width x height`
//! rectangle. Each grid cell is split along its rising diagonal into two
//! counter-clockwise triangles. Interior nodes may be jittered with a seeded
//! RNG to obtain an irregular mesh with the same connectivity.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ElasticityField;

/// Boundary label carried by every node. Corner nodes take the
/// top/bottom label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Top,
    Bottom,
    Left,
    Right,
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMesh", into = "RawMesh")]
pub struct TriMesh {
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    boundary_tags: Vec<BoundaryTag>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    boundary_tags: Vec<BoundaryTag>,
}

impl TryFrom<RawMesh> for TriMesh {
    type Error = Error;
    fn try_from(raw: RawMesh) -> Result<Self> {
        TriMesh::new(raw.nodes, raw.elements, raw.boundary_tags)
    }
}

impl From<TriMesh> for RawMesh {
    fn from(m: TriMesh) -> Self {
        RawMesh {
            nodes: m.nodes,
            elements: m.elements,
            boundary_tags: m.boundary_tags,
        }
    }
}

impl TriMesh {
    /// Builds a mesh after checking index bounds, orientation and tag count.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        elements: Vec<[usize; 3]>,
        boundary_tags: Vec<BoundaryTag>,
    ) -> Result<Self> {
        if boundary_tags.len() != nodes.len() {
            return Err(Error::InvalidMesh(format!(
                "{} boundary tags for {} nodes",
                boundary_tags.len(),
                nodes.len()
            )));
        }
        if nodes.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("node coordinates"));
        }
        for (e, tri) in elements.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&n| n >= nodes.len()) {
                return Err(Error::InvalidMesh(format!(
                    "element {e} references node {bad} but mesh has {} nodes",
                    nodes.len()
                )));
            }
        }
        let mesh = Self {
            nodes,
            elements,
            boundary_tags,
        };
        for e in 0..mesh.element_count() {
            let area = mesh.signed_area(e);
            if area <= 0.0 || !area.is_finite() {
                return Err(Error::DegenerateElement { element: e, area });
            }
        }
        Ok(mesh)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn dof_count(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn boundary_tags(&self) -> &[BoundaryTag] {
        &self.boundary_tags
    }

    pub fn element(&self, e: usize) -> [usize; 3] {
        self.elements[e]
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.elements[e];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Signed area, positive for counter-clockwise node order.
    pub fn signed_area(&self, e: usize) -> f64 {
        let [p1, p2, p3] = self.element_coords(e);
        0.5 * ((p2[0] - p1[0]) * (p3[1] - p1[1]) - (p3[0] - p1[0]) * (p2[1] - p1[1]))
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let [p1, p2, p3] = self.element_coords(e);
        [(p1[0] + p2[0] + p3[0]) / 3.0, (p1[1] + p2[1] + p3[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.element_count()).map(|e| self.signed_area(e)).sum()
    }

    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        self.boundary_tags
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == tag)
            .map(|(i, _)| i)
            .collect()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Node-to-node adjacency through shared elements, sorted and deduplicated.
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.node_count()];
        for tri in &self.elements {
            for &a in tri {
                for &b in tri {
                    if a != b {
                        nb[a].push(b);
                    }
                }
            }
        }
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Geometry and ground-truth modulus of a two-material phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    /// Meters.
    pub width: f64,
    /// Meters.
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub inclusion_center: [f64; 2],
    pub inclusion_radius: f64,
    /// 100 kPa.
    pub e_background: f64,
    /// 100 kPa.
    pub e_inclusion: f64,
    /// Interior node perturbation as a fraction of the cell size, in `[0, 0.3]`.
    pub jitter: f64,
    pub jitter_seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 0.05,
            height: 0.05,
            nx: 16,
            ny: 16,
            inclusion_center: [0.025, 0.025],
            inclusion_radius: 0.0125,
            e_background: 0.145,
            e_inclusion: 0.46,
            jitter: 0.0,
            jitter_seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad(format!(
                "phantom dimensions must be positive, got {} x {}",
                self.width, self.height
            ));
        }
        if self.nx == 0 || self.ny == 0 {
            return bad(format!(
                "grid resolution must be positive, got {} x {}",
                self.nx, self.ny
            ));
        }
        if !(self.e_background > 0.0 && self.e_inclusion > 0.0) {
            return bad("modulus values must be strictly positive".into());
        }
        if !(self.inclusion_radius >= 0.0) {
            return bad("inclusion radius must be non-negative".into());
        }
        let [cx, cy] = self.inclusion_center;
        let r = self.inclusion_radius;
        if cx - r < 0.0 || cx + r > self.width || cy - r < 0.0 || cy + r > self.height {
            return bad("inclusion disk must lie inside the rectangle".into());
        }
        if !(0.0..=0.3).contains(&self.jitter) {
            return bad(format!("jitter must be in [0, 0.3], got {}", self.jitter));
        }
        Ok(())
    }

    pub fn in_inclusion(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.inclusion_center[0];
        let dy = p[1] - self.inclusion_center[1];
        (dx * dx + dy * dy).sqrt() < self.inclusion_radius
    }
}

/// Builds the `(nx+1)(ny+1)`-node, `2 nx ny`-element tiling of the phantom
/// rectangle. Nodes are numbered row by row from the bottom-left corner.
pub fn build_mesh(spec: &PhantomSpec) -> Result<TriMesh> {
    spec.validate()?;
    let (nx, ny) = (spec.nx, spec.ny);
    let hx = spec.width / nx as f64;
    let hy = spec.height / ny as f64;
    let idx = |i: usize, j: usize| j * (nx + 1) + i;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.jitter_seed);
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut tags = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let mut x = i as f64 * hx;
            let mut y = j as f64 * hy;
            // Snap the far edges exactly so boundary tests are reliable.
            if i == nx {
                x = spec.width;
            }
            if j == ny {
                y = spec.height;
            }
            let tag = if j == 0 {
                BoundaryTag::Bottom
            } else if j == ny {
                BoundaryTag::Top
            } else if i == 0 {
                BoundaryTag::Left
            } else if i == nx {
                BoundaryTag::Right
            } else {
                BoundaryTag::Interior
            };
            if tag == BoundaryTag::Interior && spec.jitter > 0.0 {
                x += spec.jitter * hx * rng.random_range(-0.5..0.5);
                y += spec.jitter * hy * rng.random_range(-0.5..0.5);
            }
            nodes.push([x, y]);
            tags.push(tag);
        }
    }

    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    TriMesh::new(nodes, elements, tags)
}

/// Assigns `e_inclusion` to elements whose centroid lies strictly inside the
/// inclusion disk and `e_background` elsewhere.
pub fn assign_phantom(mesh: &TriMesh, spec: &PhantomSpec) -> ElasticityField {
    ElasticityField::new(
        (0..mesh.element_count())
            .map(|e| {
                if spec.in_inclusion(mesh.centroid(e)) {
                    spec.e_inclusion
                } else {
                    spec.e_background
                }
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    /// Shared-edge length over centroid distance.
    pub weight: f64,
}

/// Face adjacency between elements, used for the discrete gradient in TV and
/// smoothness regularizers. Each undirected pair appears once with `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyGraph {
    vertex_count: usize,
    edges: Vec<GraphEdge>,
}

impl AdjacencyGraph {
    pub fn new(vertex_count: usize, edges: Vec<GraphEdge>) -> Result<Self> {
        for e in &edges {
            if e.a >= vertex_count || e.b >= vertex_count || e.a == e.b {
                return Err(Error::InvalidParameter(format!(
                    "invalid graph edge ({}, {}) for {} vertices",
                    e.a, e.b, vertex_count
                )));
            }
            if !(e.weight > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "graph edge weight must be positive, got {}",
                    e.weight
                )));
            }
        }
        Ok(Self {
            vertex_count,
            edges,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.vertex_count];
        for e in &self.edges {
            deg[e.a] += 1;
            deg[e.b] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    /// Weighted anisotropic total variation `sum w_ab |x_a - x_b|`.
    pub fn total_variation(&self, x: &[f64]) -> f64 {
        self.edges
            .iter()
            .map(|e| e.weight * (x[e.a] - x[e.b]).abs())
            .sum()
    }

    /// Weighted graph Laplacian applied to `x`.
    pub fn laplacian_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.vertex_count];
        for e in &self.edges {
            let d = e.weight * (x[e.a] - x[e.b]);
            out[e.a] += d;
            out[e.b] -= d;
        }
        out
    }
}

pub fn element_adjacency(mesh: &TriMesh) -> AdjacencyGraph {
    let mut first_owner: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    for (e, tri) in mesh.elements().iter().enumerate() {
        for k in 0..3 {
            let (p, q) = (tri[k], tri[(k + 1) % 3]);
            let key = (p.min(q), p.max(q));
            match first_owner.get(&key) {
                Some(&other) => {
                    let [x1, y1] = mesh.nodes()[key.0];
                    let [x2, y2] = mesh.nodes()[key.1];
                    let length = (x2 - x1).hypot(y2 - y1);
                    let ca = mesh.centroid(other);
                    let cb = mesh.centroid(e);
                    let dist = (cb[0] - ca[0]).hypot(cb[1] - ca[1]);
                    edges.push(GraphEdge {
                        a: other.min(e),
                        b: other.max(e),
                        weight: length / dist,
                    });
                }
                None => {
                    first_owner.insert(key, e);
                }
            }
        }
    }
    AdjacencyGraph {
        vertex_count: mesh.element_count(),
        edges,
    }
}
