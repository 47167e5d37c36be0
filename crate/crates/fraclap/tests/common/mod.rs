//! Shared test infrastructure: the hierarchical-subdivision oracle for
//! element-pair integrals, a brute-force reference assembler, and random
//! pair generators.
//!
//! The oracle is independent of the Duffy tables it validates: it only
//! uses triangle subdivision, exact scaling identities for self-similar
//! touching sub-pairs, and a tensor Gauss rule built from the 1D rule.

#![allow(dead_code)]

use fraclap::assembly::{load_element, normalization_constant};
use fraclap::kernels::{
    complement_block, edge_block, identical_block, nontouching_block, vertex_block, EdgePair,
    FractionalOrder, VertexPair,
};
use fraclap::mesh::{classify_pair, Mesh, PairTag, Point};
use fraclap::quadtables::{gauss_legendre_01, QuadTables};
use rand::Rng;

// ---------------------------------------------------------------------
// geometry helpers
// ---------------------------------------------------------------------

pub fn tri_area(v: &[Point; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1])
        - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
        .abs()
}

fn diam(v: &[Point; 3]) -> f64 {
    let d = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    d(v[0], v[1]).max(d(v[1], v[2])).max(d(v[0], v[2]))
}

fn seg_dist(p1: Point, p2: Point, q1: Point, q2: Point) -> f64 {
    // Minimum distance between two segments via clamped projections.
    fn point_seg(p: Point, a: Point, b: Point) -> f64 {
        let ab = [b[0] - a[0], b[1] - a[1]];
        let ap = [p[0] - a[0], p[1] - a[1]];
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        let t = if len2 > 0.0 {
            ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let dx = p[0] - (a[0] + t * ab[0]);
        let dy = p[1] - (a[1] + t * ab[1]);
        (dx * dx + dy * dy).sqrt()
    }
    fn segs_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
        let orient = |a: Point, b: Point, c: Point| {
            (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        };
        let d1 = orient(q1, q2, p1);
        let d2 = orient(q1, q2, p2);
        let d3 = orient(p1, p2, q1);
        let d4 = orient(p1, p2, q2);
        ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
            && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    }
    if segs_intersect(p1, p2, q1, q2) {
        return 0.0;
    }
    point_seg(p1, q1, q2)
        .min(point_seg(p2, q1, q2))
        .min(point_seg(q1, p1, p2))
        .min(point_seg(q2, p1, p2))
}

pub fn tri_dist(a: &[Point; 3], b: &[Point; 3]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..3 {
        for j in 0..3 {
            best = best.min(seg_dist(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3]));
        }
    }
    best
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Standard 4-way split; children inherit exact midpoint coordinates so
/// shared vertices stay bitwise identical across both sides of a pair.
fn split(v: &[Point; 3]) -> [[Point; 3]; 4] {
    let m01 = midpoint(v[0], v[1]);
    let m02 = midpoint(v[0], v[2]);
    let m12 = midpoint(v[1], v[2]);
    [
        [v[0], m01, m02],
        [v[1], m12, m01],
        [v[2], m02, m12],
        [m01, m12, m02],
    ]
}

fn shared_vertex_count(a: &[Point; 3], b: &[Point; 3]) -> usize {
    let mut n = 0;
    for p in a {
        if b.iter().any(|q| q[0] == p[0] && q[1] == p[1]) {
            n += 1;
        }
    }
    n
}

// ---------------------------------------------------------------------
// affine local basis
// ---------------------------------------------------------------------

/// Affine form c + g . x; the local basis of a pair on one side.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub c: f64,
    pub g: [f64; 2],
}

impl Affine {
    pub const ZERO: Affine = Affine { c: 0.0, g: [0.0, 0.0] };

    #[inline]
    pub fn eval(&self, p: Point) -> f64 {
        self.c + self.g[0] * p[0] + self.g[1] * p[1]
    }
}

/// The P1 hat on triangle `v` that is 1 at vertex `i` and 0 at the others.
pub fn hat(v: &[Point; 3], i: usize) -> Affine {
    let j = (i + 1) % 3;
    let k = (i + 2) % 3;
    // gradient is normal to the opposite edge, scaled to reach 1 at v_i
    let ex = v[k][0] - v[j][0];
    let ey = v[k][1] - v[j][1];
    let det = (v[i][0] - v[j][0]) * ey - (v[i][1] - v[j][1]) * ex;
    let g = [-ey / det, ex / det];
    Affine {
        c: -(g[0] * v[j][0] + g[1] * v[j][1]),
        g,
    }
}

// ---------------------------------------------------------------------
// the oracle
// ---------------------------------------------------------------------

pub struct Oracle {
    s: f64,
    /// 1D Gauss rule used for the collapsed-square triangle rule.
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Separation threshold (distance / larger diameter) for direct Gauss.
    theta: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleBlock {
    pub n: usize,
    pub m: [[f64; 6]; 6],
}

impl Oracle {
    pub fn new(s: f64) -> Self {
        let (nodes, weights) = gauss_legendre_01(6).unwrap();
        Oracle {
            s,
            nodes,
            weights,
            theta: 1.0,
        }
    }

    pub fn with_resolution(s: f64, points_1d: usize, theta: f64) -> Self {
        let (nodes, weights) = gauss_legendre_01(points_1d).unwrap();
        Oracle {
            s,
            nodes,
            weights,
            theta,
        }
    }

    /// Tensor Gauss on T x T' through the collapsed-square map
    /// (u, v) -> (u, u v), |J| = u, applied on both sides.
    fn gauss_pair(
        &self,
        a: &[Point; 3],
        b: &[Point; 3],
        fa: &[Affine; 6],
        fb: &[Affine; 6],
        n: usize,
        out: &mut [[f64; 6]; 6],
    ) {
        let map_pt = |v: &[Point; 3], u: f64, w: f64| -> Point {
            // reference triangle (0,0),(1,0),(1,1): x = u, y = u w
            let x = u;
            let y = u * w;
            [
                v[0][0] + (v[1][0] - v[0][0]) * x + (v[2][0] - v[1][0]) * y,
                v[0][1] + (v[1][1] - v[0][1]) * x + (v[2][1] - v[1][1]) * y,
            ]
        };
        let scale = 4.0 * tri_area(a) * tri_area(b);
        let e = -(1.0 + self.s);
        let nq = self.nodes.len();
        let mut pts_a = Vec::with_capacity(nq * nq);
        let mut pts_b = Vec::with_capacity(nq * nq);
        for i in 0..nq {
            for j in 0..nq {
                let w = self.weights[i] * self.weights[j] * self.nodes[i];
                pts_a.push((map_pt(a, self.nodes[i], self.nodes[j]), w));
                pts_b.push((map_pt(b, self.nodes[i], self.nodes[j]), w));
            }
        }
        let mut va = [0.0f64; 6];
        let mut vb = [0.0f64; 6];
        for (xa, wa) in &pts_a {
            for k in 0..n {
                va[k] = fa[k].eval(*xa);
            }
            for (xb, wb) in &pts_b {
                let dx = xa[0] - xb[0];
                let dy = xa[1] - xb[1];
                let kernel = (dx * dx + dy * dy).powf(e) * wa * wb * scale;
                for k in 0..n {
                    vb[k] = va[k] - fb[k].eval(*xb);
                }
                for i in 0..n {
                    let vi = vb[i] * kernel;
                    for j in i..n {
                        out[i][j] += vi * vb[j];
                    }
                }
            }
        }
    }

    /// Raw pair integral of (fa_i(x) - fb_i(y))(fa_j(x) - fb_j(y)) |x-y|^-(2+2s).
    ///
    /// Touching pairs split into 16 children; the self-similar children
    /// (those sharing the same simplex as the parent) are removed and
    /// accounted for exactly through the scaling identity
    /// raw(lambda-copy) = lambda^(4-2s) raw, which turns the recursion tail
    /// into a geometric series summed in closed form.
    fn raw(
        &self,
        a: &[Point; 3],
        b: &[Point; 3],
        fa: &[Affine; 6],
        fb: &[Affine; 6],
        n: usize,
        depth: usize,
        out: &mut [[f64; 6]; 6],
    ) {
        assert!(depth > 0, "oracle recursion depth exhausted");
        let shared = shared_vertex_count(a, b);
        if shared == 0 {
            let d = tri_dist(a, b);
            if d >= self.theta * diam(a).max(diam(b)) {
                self.gauss_pair(a, b, fa, fb, n, out);
                return;
            }
            for ca in split(a) {
                for cb in split(b) {
                    self.raw(&ca, &cb, fa, fb, n, depth - 1, out);
                }
            }
            return;
        }
        // touching: renormalized subdivision
        let lam = 0.5f64.powf(4.0 - 2.0 * self.s);
        let q = match shared {
            3 => 4.0 * lam,
            2 => 2.0 * lam,
            _ => lam,
        };
        let mut partial = [[0.0f64; 6]; 6];
        for ca in split(a) {
            for cb in split(b) {
                if shared_vertex_count(&ca, &cb) == shared {
                    continue; // exact half-scale copy of the parent pair
                }
                self.raw(&ca, &cb, fa, fb, n, depth - 1, &mut partial);
            }
        }
        let f = 1.0 / (1.0 - q);
        for i in 0..n {
            for j in i..n {
                out[i][j] += f * partial[i][j];
            }
        }
    }

    fn finish(&self, n: usize, mut m: [[f64; 6]; 6]) -> OracleBlock {
        for i in 0..n {
            for j in 0..i {
                m[i][j] = m[j][i];
            }
        }
        OracleBlock { n, m }
    }

    pub fn identical(&self, v: &[Point; 3]) -> OracleBlock {
        let mut fa = [Affine::ZERO; 6];
        for i in 0..3 {
            fa[i] = hat(v, i);
        }
        let mut out = [[0.0; 6]; 6];
        self.raw(v, v, &fa, &fa, 3, 48, &mut out);
        self.finish(3, out)
    }

    pub fn vertex(&self, p: &VertexPair) -> OracleBlock {
        let a = [p.shared, p.l_others[0], p.l_others[1]];
        let b = [p.shared, p.m_others[0], p.m_others[1]];
        let mut fa = [Affine::ZERO; 6];
        let mut fb = [Affine::ZERO; 6];
        fa[0] = hat(&a, 0);
        fa[1] = hat(&a, 1);
        fa[2] = hat(&a, 2);
        fb[0] = hat(&b, 0);
        fb[3] = hat(&b, 1);
        fb[4] = hat(&b, 2);
        let mut out = [[0.0; 6]; 6];
        self.raw(&a, &b, &fa, &fb, 5, 48, &mut out);
        self.finish(5, out)
    }

    pub fn edge(&self, p: &EdgePair) -> OracleBlock {
        let a = [p.shared[0], p.shared[1], p.l_apex];
        let b = [p.shared[0], p.shared[1], p.m_apex];
        let mut fa = [Affine::ZERO; 6];
        let mut fb = [Affine::ZERO; 6];
        fa[0] = hat(&a, 0);
        fa[1] = hat(&a, 1);
        fa[2] = hat(&a, 2);
        fb[0] = hat(&b, 0);
        fb[1] = hat(&b, 1);
        fb[3] = hat(&b, 2);
        let mut out = [[0.0; 6]; 6];
        self.raw(&a, &b, &fa, &fb, 4, 48, &mut out);
        self.finish(4, out)
    }

    pub fn disjoint(&self, a: &[Point; 3], b: &[Point; 3]) -> OracleBlock {
        let mut fa = [Affine::ZERO; 6];
        let mut fb = [Affine::ZERO; 6];
        for i in 0..3 {
            fa[i] = hat(a, i);
            fb[3 + i] = hat(b, i);
        }
        let mut out = [[0.0; 6]; 6];
        self.raw(a, b, &fa, &fb, 6, 48, &mut out);
        self.finish(6, out)
    }
}

/// Frobenius-relative distance between two blocks.
pub fn rel_diff(n: usize, a: &[[f64; 6]; 6], b: &[[f64; 6]; 6]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for j in 0..n {
            num += (a[i][j] - b[i][j]) * (a[i][j] - b[i][j]);
            den += b[i][j] * b[i][j];
        }
    }
    (num / den).sqrt()
}

// ---------------------------------------------------------------------
// random pair generation
// ---------------------------------------------------------------------

fn min_angle(v: &[Point; 3]) -> f64 {
    let mut worst = f64::INFINITY;
    for i in 0..3 {
        let a = v[i];
        let b = v[(i + 1) % 3];
        let c = v[(i + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let w = [c[0] - a[0], c[1] - a[1]];
        let dot = u[0] * w[0] + u[1] * w[1];
        let nu = (u[0] * u[0] + u[1] * u[1]).sqrt();
        let nw = (w[0] * w[0] + w[1] * w[1]).sqrt();
        worst = worst.min((dot / (nu * nw)).clamp(-1.0, 1.0).acos());
    }
    worst
}

const MIN_ANGLE: f64 = 0.38; // ~22 degrees, matches shape-regular meshes

pub fn random_triangle<R: Rng>(rng: &mut R) -> [Point; 3] {
    loop {
        let v: [Point; 3] = [
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        ];
        if tri_area(&v) > 0.1 && min_angle(&v) > MIN_ANGLE {
            return v;
        }
    }
}

/// Vertex-touching pair: two triangles in disjoint angular sectors around
/// a shared point.
pub fn random_vertex_pair<R: Rng>(rng: &mut R) -> VertexPair {
    loop {
        let shared: Point = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        let base = rng.gen_range(0.0..std::f64::consts::TAU);
        let span_l = rng.gen_range(0.45..1.3);
        let gap1 = rng.gen_range(0.25..0.8);
        let span_m = rng.gen_range(0.45..1.3);
        let ray = |phi: f64, r: f64| -> Point {
            [shared[0] + r * phi.cos(), shared[1] + r * phi.sin()]
        };
        let l1 = ray(base, rng.gen_range(0.5..1.2));
        let l2 = ray(base + span_l, rng.gen_range(0.5..1.2));
        let m1 = ray(base + span_l + gap1, rng.gen_range(0.5..1.2));
        let m2 = ray(base + span_l + gap1 + span_m, rng.gen_range(0.5..1.2));
        let tl = [shared, l1, l2];
        let tm = [shared, m1, m2];
        if min_angle(&tl) > MIN_ANGLE && min_angle(&tm) > MIN_ANGLE {
            return VertexPair {
                shared,
                l_others: [l1, l2],
                m_others: [m1, m2],
                area_l: tri_area(&tl),
                area_m: tri_area(&tm),
            };
        }
    }
}

/// Edge-touching pair: apexes on opposite sides of a random shared edge.
pub fn random_edge_pair<R: Rng>(rng: &mut R) -> EdgePair {
    loop {
        let e0: Point = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        let ang = rng.gen_range(0.0..std::f64::consts::TAU);
        let len = rng.gen_range(0.6..1.4);
        let e1: Point = [e0[0] + len * ang.cos(), e0[1] + len * ang.sin()];
        let nrm = [-(e1[1] - e0[1]) / len, (e1[0] - e0[0]) / len];
        let mk_apex = |rng: &mut R, side: f64| -> Point {
            let t = rng.gen_range(0.15..0.85);
            let h = rng.gen_range(0.35..1.1) * side;
            [
                e0[0] + t * (e1[0] - e0[0]) + h * nrm[0],
                e0[1] + t * (e1[1] - e0[1]) + h * nrm[1],
            ]
        };
        let la = mk_apex(rng, 1.0);
        let ma = mk_apex(rng, -1.0);
        let tl = [e0, e1, la];
        let tm = [e0, e1, ma];
        if min_angle(&tl) > MIN_ANGLE && min_angle(&tm) > MIN_ANGLE {
            return EdgePair {
                shared: [e0, e1],
                l_apex: la,
                m_apex: ma,
                area_l: tri_area(&tl),
                area_m: tri_area(&tm),
            };
        }
    }
}

/// Disjoint pair at a mesh-realistic gap: distance between 0.5 and 1.5
/// diameters, the closest a shape-regular triangulation places two
/// non-touching elements.
pub fn random_near_disjoint_pair<R: Rng>(rng: &mut R) -> ([Point; 3], [Point; 3]) {
    loop {
        let a = random_triangle(rng);
        let b0 = random_triangle(rng);
        let d = diam(&a).max(diam(&b0));
        let ang = rng.gen_range(0.0..std::f64::consts::TAU);
        let shift = rng.gen_range(1.5..4.0) * d;
        let b: [Point; 3] = std::array::from_fn(|i| {
            [b0[i][0] + shift * ang.cos(), b0[i][1] + shift * ang.sin()]
        });
        let gap = tri_dist(&a, &b);
        if gap > 0.5 * d && gap < 1.5 * d {
            return (a, b);
        }
    }
}

// ---------------------------------------------------------------------
// brute-force reference assembler
// ---------------------------------------------------------------------

/// All-ordered-pairs assembler with no symmetry tricks: the outer index
/// runs over every element (auxiliary included) and each ordered pair
/// contributes once. Only rows/columns of free nodes are meaningful.
pub fn brute_force_assemble<F: Fn(f64, f64) -> f64>(
    mesh: &Mesh,
    s: FractionalOrder,
    f: &F,
    tables: &QuadTables,
) -> (Vec<f64>, Vec<f64>) {
    let nn = mesh.n_nodes();
    let nt = mesh.triangles.len();
    let mut k = vec![0.0f64; nn * nn];
    let mut b = vec![0.0f64; nn];

    let mut add = |k: &mut Vec<f64>, nodes: &[usize], block: &[f64], dim: usize| {
        for (i, &gi) in nodes.iter().enumerate() {
            for (j, &gj) in nodes.iter().enumerate() {
                k[gi * nn + gj] += block[i * dim + j];
            }
        }
    };

    for l in 0..mesh.n_domain() {
        let verts = mesh.element_vertices(l);
        let area = tri_area(&verts);
        let vl = load_element(&verts, area, f);
        for (ni, v) in mesh.triangles[l].iter().zip(vl.iter()) {
            b[*ni] += v;
        }
    }

    for l in 0..nt {
        let map_l = mesh.element_map(l);
        // identical pair and the doubled complement term, once per element
        let ident = identical_block(&map_l, s, tables).unwrap();
        add(&mut k, &mesh.triangles[l], ident.as_flattened(), 3);
        let comp = complement_block(&map_l, mesh.ball_radius, s, tables).unwrap();
        add(&mut k, &mesh.triangles[l], comp.as_flattened(), 3);

        for m in 0..nt {
            if m == l {
                continue;
            }
            let pc = classify_pair(mesh, l, m);
            let on = &pc.ordered_nodes;
            match pc.tag {
                PairTag::Disjoint => {
                    let map_m = mesh.element_map(m);
                    let block = nontouching_block(&map_l, &map_m, s, tables).unwrap();
                    add(&mut k, on, block.as_flattened(), 6);
                }
                PairTag::Vertex => {
                    let pair = VertexPair {
                        shared: mesh.nodes[on[0]],
                        l_others: [mesh.nodes[on[1]], mesh.nodes[on[2]]],
                        m_others: [mesh.nodes[on[3]], mesh.nodes[on[4]]],
                        area_l: map_l.area,
                        area_m: mesh.element_map(m).area,
                    };
                    let block = vertex_block(&pair, s, tables).unwrap();
                    add(&mut k, on, block.as_flattened(), 5);
                }
                PairTag::Edge => {
                    let pair = EdgePair {
                        shared: [mesh.nodes[on[0]], mesh.nodes[on[1]]],
                        l_apex: mesh.nodes[on[2]],
                        m_apex: mesh.nodes[on[3]],
                        area_l: map_l.area,
                        area_m: mesh.element_map(m).area,
                    };
                    let block = edge_block(&pair, s, tables).unwrap();
                    add(&mut k, on, block.as_flattened(), 4);
                }
                PairTag::Identical => unreachable!(),
            }
        }
    }

    let cns = normalization_constant(s);
    for v in k.iter_mut() {
        *v *= cns;
    }
    (k, b)
}
