//! Triangulations of a disk inside an enclosing ball, patch adjacency and
//! element-pair classification.
//!
//! A mesh covers the ball of radius `ball_radius`: domain triangles (the
//! disk) are listed first, auxiliary annulus triangles last. Nodes on the
//! domain boundary and in the annulus are Dirichlet nodes; only `free_nodes`
//! carry unknowns.

use thiserror::Error;

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("triangle {index} is degenerate (area {area:.3e})")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("node {index} at ({x}, {y}) lies outside the ball of radius {radius}")]
    NodeOutsideBall { index: usize, x: f64, y: f64, radius: f64 },
    #[error("edge ({a}, {b}) is shared by more than two triangles")]
    InadmissibleEdge { a: usize, b: usize },
    #[error("node {0} listed as both free and boundary")]
    OverlappingNodeSets(usize),
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("mesh generation: {0}")]
    Generate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Affine map from the reference triangle (0,0),(1,0),(1,1) onto an element.
///
/// The matrix columns are v2 - v1 and v3 - v2 so that the reference vertices
/// land on the element vertices in local order.
#[derive(Debug, Clone, Copy)]
pub struct ElementMap {
    /// Row-major 2x2 matrix.
    pub b: [[f64; 2]; 2],
    pub offset: Point,
    pub area: f64,
}

impl ElementMap {
    pub fn new(v1: Point, v2: Point, v3: Point) -> Self {
        let c0 = sub(v2, v1);
        let c1 = sub(v3, v2);
        let b = [[c0[0], c1[0]], [c0[1], c1[1]]];
        let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
        ElementMap {
            b,
            offset: v1,
            area: 0.5 * det.abs(),
        }
    }

    #[inline]
    pub fn apply(&self, x: Point) -> Point {
        [
            self.b[0][0] * x[0] + self.b[0][1] * x[1] + self.offset[0],
            self.b[1][0] * x[0] + self.b[1][1] * x[1] + self.offset[1],
        ]
    }

    /// B * x without the offset.
    #[inline]
    pub fn apply_linear(&self, x: Point) -> Point {
        [
            self.b[0][0] * x[0] + self.b[0][1] * x[1],
            self.b[1][0] * x[0] + self.b[1][1] * x[1],
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    /// All triangles, domain first then `n_aux` auxiliary ones.
    pub triangles: Vec<[usize; 3]>,
    pub n_aux: usize,
    pub boundary_nodes: Vec<usize>,
    pub free_nodes: Vec<usize>,
    pub ball_radius: f64,
}

impl Mesh {
    /// Number of domain (non-auxiliary) triangles.
    pub fn n_domain(&self) -> usize {
        self.triangles.len() - self.n_aux
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_map(&self, l: usize) -> ElementMap {
        let t = self.triangles[l];
        ElementMap::new(self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]])
    }

    pub fn element_vertices(&self, l: usize) -> [Point; 3] {
        let t = self.triangles[l];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]
    }

    /// Longest edge length of element `l`.
    pub fn element_diameter(&self, l: usize) -> f64 {
        let [a, b, c] = self.element_vertices(l);
        dist2(a, b).max(dist2(b, c)).max(dist2(a, c)).sqrt()
    }

    /// Check the structural invariants; returns the first violation found.
    pub fn validate(&self) -> Result<(), MeshError> {
        let nn = self.nodes.len();
        if self.n_aux > self.triangles.len() {
            return Err(MeshError::Invalid(format!(
                "n_aux = {} exceeds triangle count {}",
                self.n_aux,
                self.triangles.len()
            )));
        }
        let scale = self
            .nodes
            .iter()
            .map(|p| p[0].abs().max(p[1].abs()))
            .fold(0.0f64, f64::max)
            .max(1e-30);
        let r_tol = self.ball_radius * (1.0 + 1e-9);
        for (i, p) in self.nodes.iter().enumerate() {
            if (p[0] * p[0] + p[1] * p[1]).sqrt() > r_tol {
                return Err(MeshError::NodeOutsideBall {
                    index: i,
                    x: p[0],
                    y: p[1],
                    radius: self.ball_radius,
                });
            }
        }
        let mut edge_use = std::collections::HashMap::new();
        for (l, t) in self.triangles.iter().enumerate() {
            for &v in t {
                if v >= nn {
                    return Err(MeshError::Invalid(format!(
                        "triangle {l} references node {v} out of range"
                    )));
                }
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(MeshError::DegenerateTriangle { index: l, area: 0.0 });
            }
            let m = self.element_map(l);
            if m.area <= 1e-14 * scale * scale {
                return Err(MeshError::DegenerateTriangle { index: l, area: m.area });
            }
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[0], t[2])] {
                let key = (a.min(b), a.max(b));
                let count = edge_use.entry(key).or_insert(0u8);
                *count += 1;
                if *count > 2 {
                    return Err(MeshError::InadmissibleEdge { a: key.0, b: key.1 });
                }
            }
        }
        let mut kind = vec![0u8; nn]; // 1 free, 2 boundary
        for &nf in &self.free_nodes {
            if nf >= nn {
                return Err(MeshError::Invalid(format!("free node {nf} out of range")));
            }
            kind[nf] = 1;
        }
        for &nb in &self.boundary_nodes {
            if nb >= nn {
                return Err(MeshError::Invalid(format!("boundary node {nb} out of range")));
            }
            if kind[nb] == 1 {
                return Err(MeshError::OverlappingNodeSets(nb));
            }
            kind[nb] = 2;
        }
        Ok(())
    }
}

/// Per-node lists of incident triangles (CSR layout).
#[derive(Debug, Clone)]
pub struct PatchIndex {
    offsets: Vec<usize>,
    tris: Vec<usize>,
}

impl PatchIndex {
    #[inline]
    pub fn patch(&self, node: usize) -> &[usize] {
        &self.tris[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn total_entries(&self) -> usize {
        self.tris.len()
    }
}

/// Build the node-to-triangle adjacency in O(N_T) operations.
pub fn build_patches(mesh: &Mesh) -> PatchIndex {
    let nn = mesh.nodes.len();
    let mut deg = vec![0usize; nn];
    for t in &mesh.triangles {
        for &v in t {
            deg[v] += 1;
        }
    }
    let mut offsets = vec![0usize; nn + 1];
    for i in 0..nn {
        offsets[i + 1] = offsets[i] + deg[i];
    }
    let mut fill = offsets.clone();
    let mut tris = vec![0usize; offsets[nn]];
    for (l, t) in mesh.triangles.iter().enumerate() {
        for &v in t {
            tris[fill[v]] = l;
            fill[v] += 1;
        }
    }
    PatchIndex { offsets, tris }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairTag {
    Identical,
    Edge,
    Vertex,
    Disjoint,
}

/// Classification of an element pair with its local node numbering:
/// shared nodes first, then the remaining nodes of T_l, then those of T_m.
#[derive(Debug, Clone)]
pub struct PairClass {
    pub tag: PairTag,
    pub ordered_nodes: Vec<usize>,
}

/// Classify the pair (l, m) by the number of shared vertices.
pub fn classify_pair(mesh: &Mesh, l: usize, m: usize) -> PairClass {
    let tl = mesh.triangles[l];
    if l == m {
        return PairClass {
            tag: PairTag::Identical,
            ordered_nodes: tl.to_vec(),
        };
    }
    let tm = mesh.triangles[m];
    let mut shared = Vec::with_capacity(2);
    for &a in &tl {
        if tm.contains(&a) {
            shared.push(a);
        }
    }
    match shared.len() {
        0 => {
            let mut nodes = tl.to_vec();
            nodes.extend_from_slice(&tm);
            PairClass {
                tag: PairTag::Disjoint,
                ordered_nodes: nodes,
            }
        }
        1 => {
            let s = shared[0];
            let mut nodes = vec![s];
            nodes.extend(tl.iter().copied().filter(|&v| v != s));
            nodes.extend(tm.iter().copied().filter(|&v| v != s));
            PairClass {
                tag: PairTag::Vertex,
                ordered_nodes: nodes,
            }
        }
        2 => {
            // Shared edge endpoints keep their order within T_l's vertex list.
            let mut nodes: Vec<usize> = tl.iter().copied().filter(|v| shared.contains(v)).collect();
            nodes.extend(tl.iter().copied().filter(|v| !shared.contains(v)));
            nodes.extend(tm.iter().copied().filter(|v| !shared.contains(v)));
            PairClass {
                tag: PairTag::Edge,
                ordered_nodes: nodes,
            }
        }
        _ => PairClass {
            tag: PairTag::Identical,
            ordered_nodes: tl.to_vec(),
        },
    }
}

/// Reusable buffers for [`classify_all_against`].
#[derive(Debug, Default)]
pub struct ClassifyScratch {
    counts: Vec<u8>,
    touched: Vec<usize>,
    pub disjoint: Vec<usize>,
    pub vertex: Vec<usize>,
    pub edge: Vec<usize>,
}

/// Partition the indices m in (l, N_T) into disjoint / vertex / edge lists
/// relative to T_l, using the patch structure in O(deg + N_T) operations.
///
/// Indices <= l are excluded: those pairs were handled in earlier outer
/// iterations, and the identical pair is handled separately.
pub fn classify_all_against(
    mesh: &Mesh,
    patches: &PatchIndex,
    l: usize,
    scratch: &mut ClassifyScratch,
) {
    let nt = mesh.triangles.len();
    if scratch.counts.len() < nt {
        scratch.counts.resize(nt, 0);
    }
    for &t in &scratch.touched {
        scratch.counts[t] = 0;
    }
    scratch.touched.clear();
    scratch.disjoint.clear();
    scratch.vertex.clear();
    scratch.edge.clear();

    for &v in &mesh.triangles[l] {
        for &t in patches.patch(v) {
            if scratch.counts[t] == 0 {
                scratch.touched.push(t);
            }
            scratch.counts[t] += 1;
        }
    }
    for &t in &scratch.touched {
        if t <= l {
            continue;
        }
        match scratch.counts[t] {
            1 => scratch.vertex.push(t),
            2 => scratch.edge.push(t),
            _ => {}
        }
    }
    scratch.vertex.sort_unstable();
    scratch.edge.sort_unstable();
    for m in (l + 1)..nt {
        if scratch.counts[m] == 0 {
            scratch.disjoint.push(m);
        }
    }
}

pub mod gen;
pub mod io;
