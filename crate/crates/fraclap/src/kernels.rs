//! Element-pair interaction blocks for the kernel |x-y|^-(2+2s).
//!
//! Each geometric case (disjoint, vertex-touching, edge-touching, identical)
//! reduces to regular integrals on a cube or interval after Duffy-type
//! substitutions; the singular radial factors are integrated analytically
//! into rational prefactors. The generator matrices come from
//! [`crate::quadtables::QuadTables`].

use crate::mesh::{dist2, sub, ElementMap, Point};
use crate::quadtables::QuadTables;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("fractional order must lie strictly in (0,1), got {0}")]
    InvalidOrder(f64),
    #[error("element pair touches or nearly touches (min distance {0:.3e})")]
    TouchingPair(f64),
    #[error("degenerate element map (|det B| = {0:.3e})")]
    DegenerateElement(f64),
    #[error("point at radius {r} is not inside the ball of radius {radius}")]
    OutsideBall { r: f64, radius: f64 },
}

/// Fractional order s with 0 < s < 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalOrder(f64);

impl FractionalOrder {
    pub fn new(s: f64) -> Result<Self, KernelError> {
        if s > 0.0 && s < 1.0 && s.is_finite() {
            Ok(FractionalOrder(s))
        } else {
            Err(KernelError::InvalidOrder(s))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Geometry of a vertex-touching pair in local numbering: the shared node
/// first, then the remaining nodes of T_l and of T_m in element order.
#[derive(Debug, Clone, Copy)]
pub struct VertexPair {
    pub shared: Point,
    pub l_others: [Point; 2],
    pub m_others: [Point; 2],
    pub area_l: f64,
    pub area_m: f64,
}

/// Geometry of an edge-touching pair: the shared edge endpoints in T_l's
/// element order, then the apex of each triangle.
#[derive(Debug, Clone, Copy)]
pub struct EdgePair {
    pub shared: [Point; 2],
    pub l_apex: Point,
    pub m_apex: Point,
    pub area_l: f64,
    pub area_m: f64,
}

#[inline]
fn mat_from_cols(c0: Point, c1: Point) -> [[f64; 2]; 2] {
    [[c0[0], c1[0]], [c0[1], c1[1]]]
}

#[inline]
fn mat_apply(b: &[[f64; 2]; 2], x: Point) -> Point {
    [
        b[0][0] * x[0] + b[0][1] * x[1],
        b[1][0] * x[0] + b[1][1] * x[1],
    ]
}

#[inline]
fn det2(b: &[[f64; 2]; 2]) -> f64 {
    b[0][0] * b[1][1] - b[0][1] * b[1][0]
}

fn check_nondegenerate(b: &[[f64; 2]; 2]) -> Result<(), KernelError> {
    let d = det2(b).abs();
    let scale = b[0][0]
        .abs()
        .max(b[0][1].abs())
        .max(b[1][0].abs())
        .max(b[1][1].abs());
    if d <= 1e-14 * scale * scale {
        return Err(KernelError::DegenerateElement(d));
    }
    Ok(())
}

/// Images of the 6-point triangle rule under an element map.
pub fn quad_points_6(map: &ElementMap, tables: &QuadTables) -> [Point; 6] {
    let mut out = [[0.0; 2]; 6];
    for (o, p) in out.iter_mut().zip(tables.p_t6.iter()) {
        *o = map.apply(*p);
    }
    out
}

/// Non-touching interaction from precomputed quadrature point images.
///
/// Writes the 6x6 block (row-major) scaled by `scale` into `out` and
/// returns the minimum squared distance between the two point sets.
pub fn nontouching_ml(
    pts_l: &[Point; 6],
    pts_m: &[Point; 6],
    s: f64,
    tables: &QuadTables,
    scale: f64,
    out: &mut [f64; 36],
) -> f64 {
    let e = -(1.0 + s);
    let mut d = [0.0f64; 36];
    let mut min_d2 = f64::INFINITY;
    for (k, pm) in pts_m.iter().enumerate() {
        for (q, pl) in pts_l.iter().enumerate() {
            let r2 = dist2(*pl, *pm);
            if r2 < min_d2 {
                min_d2 = r2;
            }
            d[q + 6 * k] = r2.powf(e);
        }
    }
    let mut a9 = [0.0f64; 9];
    let mut b9 = [0.0f64; 9];
    let mut d9 = [0.0f64; 9];
    tables.phi_a.matvec(&d, &mut a9);
    tables.phi_b.matvec(&d, &mut b9);
    tables.phi_d.matvec(&d, &mut d9);
    for a in 0..3 {
        for b in 0..3 {
            let r = a + 3 * b;
            out[a * 6 + b] = scale * a9[r];
            out[a * 6 + (3 + b)] = scale * b9[r];
            out[(3 + a) * 6 + (3 + b)] = scale * d9[r];
        }
    }
    // C block is the transpose of B.
    for a in 0..3 {
        for b in 0..3 {
            out[(3 + a) * 6 + b] = out[b * 6 + (3 + a)];
        }
    }
    min_d2
}

/// I_{l,m} for a pair of disjoint elements under the 6-node local numbering.
pub fn nontouching_block(
    map_l: &ElementMap,
    map_m: &ElementMap,
    s: FractionalOrder,
    tables: &QuadTables,
) -> Result<[[f64; 6]; 6], KernelError> {
    let pts_l = quad_points_6(map_l, tables);
    let pts_m = quad_points_6(map_m, tables);
    let mut flat = [0.0; 36];
    let min_d2 = nontouching_ml(
        &pts_l,
        &pts_m,
        s.value(),
        tables,
        4.0 * map_l.area * map_m.area,
        &mut flat,
    );
    if min_d2 < 1e-28 {
        return Err(KernelError::TouchingPair(min_d2.sqrt()));
    }
    let mut out = [[0.0; 6]; 6];
    for i in 0..6 {
        out[i].copy_from_slice(&flat[i * 6..(i + 1) * 6]);
    }
    Ok(out)
}

/// I_{l,l} for an element paired with itself.
pub fn identical_block(
    map_l: &ElementMap,
    s: FractionalOrder,
    tables: &QuadTables,
) -> Result<[[f64; 3]; 3], KernelError> {
    check_nondegenerate(&map_l.b)?;
    let s = s.value();
    let e = -(1.0 + s);
    let n = tables.p_i.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let mut d3 = vec![0.0; n];
    for (k, &x) in tables.p_i.iter().enumerate() {
        let v1 = map_l.apply_linear([x, 1.0]);
        let v2 = map_l.apply_linear([1.0, x]);
        let v3 = map_l.apply_linear([x, x - 1.0]);
        d1[k] = (v1[0] * v1[0] + v1[1] * v1[1]).powf(e);
        d2[k] = (v2[0] * v2[0] + v2[1] * v2[1]).powf(e);
        d3[k] = (v3[0] * v3[0] + v3[1] * v3[1]).powf(e);
    }
    let mut ihat = [0.0f64; 9];
    tables.tpsi[0].matvec(&d1, &mut ihat);
    tables.tpsi[1].matvec_add(&d2, &mut ihat);
    tables.tpsi[2].matvec_add(&d3, &mut ihat);
    let a = map_l.area;
    let pref = 8.0 * a * a / ((4.0 - 2.0 * s) * (3.0 - 2.0 * s) * (2.0 - 2.0 * s));
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = pref * ihat[i + 3 * j];
        }
    }
    Ok(out)
}

/// I_{l,m} for a vertex-touching pair under the 5-node local numbering.
///
/// Both affine maps send the reference origin to the shared vertex; the
/// matrix columns are consecutive differences of the ordered vertices.
pub fn vertex_block(
    pair: &VertexPair,
    s: FractionalOrder,
    tables: &QuadTables,
) -> Result<[[f64; 5]; 5], KernelError> {
    let bl = mat_from_cols(
        sub(pair.l_others[0], pair.shared),
        sub(pair.l_others[1], pair.l_others[0]),
    );
    let bm = mat_from_cols(
        sub(pair.m_others[0], pair.shared),
        sub(pair.m_others[1], pair.m_others[0]),
    );
    check_nondegenerate(&bl)?;
    check_nondegenerate(&bm)?;
    let s = s.value();
    let e = -(1.0 + s);
    let n = tables.p_cube.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for (k, p) in tables.p_cube.iter().enumerate() {
        let [x, y, z] = *p;
        let u = mat_apply(&bl, [1.0, x]);
        let v = mat_apply(&bm, [y, y * z]);
        let dx = u[0] - v[0];
        let dy = u[1] - v[1];
        d1[k] = (dx * dx + dy * dy).powf(e);
        let u = mat_apply(&bm, [1.0, x]);
        let v = mat_apply(&bl, [y, y * z]);
        let dx = u[0] - v[0];
        let dy = u[1] - v[1];
        d2[k] = (dx * dx + dy * dy).powf(e);
    }
    let mut ihat = [0.0f64; 25];
    tables.vpsi[0].matvec(&d1, &mut ihat);
    tables.vpsi[1].matvec_add(&d2, &mut ihat);
    let pref = 4.0 * pair.area_l * pair.area_m / (4.0 - 2.0 * s);
    let mut out = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..5 {
            out[i][j] = pref * ihat[i + 5 * j];
        }
    }
    Ok(out)
}

/// I_{l,m} for an edge-touching pair under the 4-node local numbering.
///
/// Both affine maps send the segment [0,1]x{0} of the reference triangle
/// onto the shared edge.
pub fn edge_block(
    pair: &EdgePair,
    s: FractionalOrder,
    tables: &QuadTables,
) -> Result<[[f64; 4]; 4], KernelError> {
    let e01 = sub(pair.shared[1], pair.shared[0]);
    let bl = mat_from_cols(e01, sub(pair.l_apex, pair.shared[1]));
    let bm = mat_from_cols(e01, sub(pair.m_apex, pair.shared[1]));
    check_nondegenerate(&bl)?;
    check_nondegenerate(&bm)?;
    let s = s.value();
    let e = -(1.0 + s);
    let n = tables.p_cube.len();
    let mut d = vec![0.0; 5 * n];
    for (k, p) in tables.p_cube.iter().enumerate() {
        let [x, y, z] = *p;
        let args: [(Point, Point); 5] = [
            ([1.0, x * z], [1.0 - x * y, x * (1.0 - y)]),
            ([1.0, x], [1.0 - x * y * z, x * y * (1.0 - z)]),
            ([1.0 - x * y, x * (1.0 - y)], [1.0, x * y * z]),
            ([1.0 - x * y * z, x * y * (1.0 - z)], [1.0, x]),
            ([1.0 - x * y * z, x * (1.0 - y * z)], [1.0, x * y]),
        ];
        for (h, (al, am)) in args.iter().enumerate() {
            let u = mat_apply(&bl, *al);
            let v = mat_apply(&bm, *am);
            let dx = u[0] - v[0];
            let dy = u[1] - v[1];
            d[h * n + k] = (dx * dx + dy * dy).powf(e);
        }
    }
    let mut ihat = [0.0f64; 16];
    tables.epsi[0].matvec(&d[0..n], &mut ihat);
    for h in 1..5 {
        tables.epsi[h].matvec_add(&d[h * n..(h + 1) * n], &mut ihat);
    }
    let pref = 4.0 * pair.area_l * pair.area_m / (4.0 - 2.0 * s);
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = pref * ihat[i + 4 * j];
        }
    }
    Ok(out)
}

/// Distance from an interior point at radius `r` to the sphere of radius
/// `radius` along the ray with direction cosine `cos_theta`.
#[inline]
fn rho0(r: f64, cos_theta: f64, radius: f64) -> f64 {
    let a = r * cos_theta;
    -a + (a * a + radius * radius - r * r).sqrt()
}

/// Integral of |x-y|^-(2+2s) over the complement of the ball of radius
/// `radius`, evaluated by the radial closed form; depends on x only
/// through |x|.
pub fn psi_complement(
    x: Point,
    radius: f64,
    s: FractionalOrder,
    tables: &QuadTables,
) -> Result<f64, KernelError> {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    if r >= radius {
        return Err(KernelError::OutsideBall { r, radius });
    }
    let s = s.value();
    let mut acc = 0.0;
    for (p, w) in tables.p_i.iter().zip(tables.w_i.iter()) {
        let theta = 2.0 * std::f64::consts::PI * p;
        acc += w * rho0(r, theta.cos(), radius).powf(-2.0 * s);
    }
    Ok(std::f64::consts::PI / s * acc)
}

/// Doubled complement block 2*J_l for an element inside the ball.
pub fn complement_block(
    map_l: &ElementMap,
    radius: f64,
    s: FractionalOrder,
    tables: &QuadTables,
) -> Result<[[f64; 3]; 3], KernelError> {
    let sv = s.value();
    let r_tol = radius * (1.0 + 1e-12);
    let mut rho = [0.0f64; 12];
    for (k, p) in tables.p_t12.iter().enumerate() {
        let x = map_l.apply(*p);
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if r > r_tol {
            return Err(KernelError::OutsideBall { r, radius });
        }
        let r = r.min(radius);
        let mut acc = 0.0;
        for (pq, wq) in tables.p_i.iter().zip(tables.w_i.iter()) {
            let theta = 2.0 * std::f64::consts::PI * pq;
            acc += wq * rho0(r, theta.cos(), radius).powf(-2.0 * sv);
        }
        rho[k] = acc;
    }
    let mut jhat = [0.0f64; 9];
    tables.cphi.matvec(&rho, &mut jhat);
    let pref = 2.0 * std::f64::consts::PI * map_l.area / sv;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = pref * jhat[i + 3 * j];
        }
    }
    Ok(out)
}
