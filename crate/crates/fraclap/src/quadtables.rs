//! Quadrature rules and precomputed interaction tables.
//!
//! All Gauss node/weight sets and the dense generator matrices used by the
//! element-pair kernels are built here at startup, in full precision. The
//! published 4-decimal listings of the same data serve as regression
//! fixtures in the test suite, not as the source of the values.

use thiserror::Error;

/// Nodal basis on the reference triangle with vertices (0,0), (1,0), (1,1).
pub fn reference_basis(i: usize, x: f64, y: f64) -> f64 {
    match i {
        0 => 1.0 - x,
        1 => x - y,
        2 => y,
        _ => panic!("reference basis index out of range: {i}"),
    }
}

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("gauss-legendre rule needs at least one point")]
    EmptyRule,
}

/// Gauss-Legendre rule on [0,1], nodes ascending.
///
/// Nodes are the roots of the Legendre polynomial mapped from [-1,1],
/// obtained by Newton iteration; exact for polynomials of degree <= 2n-1.
pub fn gauss_legendre_01(n: usize) -> Result<(Vec<f64>, Vec<f64>), QuadError> {
    if n == 0 {
        return Err(QuadError::EmptyRule);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-based initial guess for the i-th root of P_n on [-1,1].
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = 0.5 * (x + 1.0);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    Ok((nodes, weights))
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Symmetric 6-point (degree 4) and 12-point (degree 6) rules on the
/// reference triangle. Both weight sets returned here sum to |T^| = 1/2.
pub fn triangle_rules() -> ([[f64; 2]; 6], [f64; 6], [[f64; 2]; 12], [f64; 12]) {
    // Degree-4 rule, two symmetric orbits.
    let a1 = 0.445948490915965;
    let a2 = 0.091576213509771;
    let w1 = 0.223381589678011 * 0.5;
    let w2 = 0.109951743655322 * 0.5;
    let orbit3 = |a: f64| {
        let b = 1.0 - 2.0 * a;
        [[a, b, a], [a, a, b], [b, a, a]]
    };
    let mut p6 = [[0.0; 2]; 6];
    let mut w6 = [0.0; 6];
    for (k, bary) in orbit3(a1).iter().chain(orbit3(a2).iter()).enumerate() {
        p6[k] = bary_to_ref(*bary);
        w6[k] = if k < 3 { w1 } else { w2 };
    }

    // Degree-6 rule, two 3-point orbits plus one 6-point orbit.
    let b1 = 0.249286745170910;
    let b2 = 0.063089014491502;
    let v1 = 0.116786275726379 * 0.5;
    let v2 = 0.050844906370207 * 0.5;
    let (ga, gb, gc) = (0.053145049844816, 0.310352451033785, 0.636502499121399);
    let v3 = 0.082851075618374 * 0.5;
    let orbit6 = [
        [gb, ga, gc],
        [gc, gb, ga],
        [ga, gc, gb],
        [gc, ga, gb],
        [gb, gc, ga],
        [ga, gb, gc],
    ];
    let mut p12 = [[0.0; 2]; 12];
    let mut w12 = [0.0; 12];
    for (k, bary) in orbit3(b1)
        .iter()
        .chain(orbit3(b2).iter())
        .chain(orbit6.iter())
        .enumerate()
    {
        p12[k] = bary_to_ref(*bary);
        w12[k] = if k < 3 {
            v1
        } else if k < 6 {
            v2
        } else {
            v3
        };
    }
    (p6, w6, p12, w12)
}

/// Map barycentric coordinates to the reference triangle (0,0),(1,0),(1,1).
fn bary_to_ref(l: [f64; 3]) -> [f64; 2] {
    [l[1] + l[2], l[2]]
}

/// Dense row-major matrix used for the generator tables.
#[derive(Debug, Clone)]
pub struct Table {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Table {
    fn zeros(rows: usize, cols: usize) -> Self {
        Table {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// out[r] = sum_c table[r][c] * v[c]
    #[inline]
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v.iter()) {
                acc += a * b;
            }
            *o = acc;
        }
    }

    /// out[r] += sum_c table[r][c] * v[c]
    #[inline]
    pub fn matvec_add(&self, v: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v.iter()) {
                acc += a * b;
            }
            *o += acc;
        }
    }
}

/// Quadrature orders. The defaults replicate the reference data layout
/// (3-point rule per cube axis, 9-point interval rule); both can be raised
/// uniformly for convergence checks. The triangle rules are fixed.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub interval_points: usize,
    pub cube_points_per_axis: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            interval_points: 9,
            cube_points_per_axis: 3,
        }
    }
}

/// All node/weight sets and generator matrices used by the kernels.
///
/// Conventions frozen to the reference data layout:
/// - `w_t6` sums to 1/2 (absolute weights on the reference triangle);
/// - `w_t12` sums to 1 (weights relative to the triangle area);
/// - the default 9-point interval rule is stored center-first in symmetric
///   pairs, matching the published dataset ordering.
#[derive(Debug, Clone)]
pub struct QuadTables {
    pub p_i: Vec<f64>,
    pub w_i: Vec<f64>,
    pub p_cube: Vec<[f64; 3]>,
    pub w_cube: Vec<f64>,
    pub p_t6: [[f64; 2]; 6],
    pub w_t6: [f64; 6],
    pub p_t12: [[f64; 2]; 12],
    pub w_t12: [f64; 12],
    pub phi_a: Table,
    pub phi_b: Table,
    pub phi_d: Table,
    pub vpsi: [Table; 2],
    pub epsi: [Table; 5],
    pub tpsi: [Table; 3],
    pub cphi: Table,
}

/// Layout of the published 9-point interval rule relative to ascending order.
const P_I_STORED_ORDER: [usize; 9] = [4, 1, 7, 0, 8, 3, 5, 6, 2];

/// Vertex-case integrand factors on the unit cube, first Duffy component.
fn vertex_psi_1(k: usize, x: f64, y: f64, z: f64) -> f64 {
    match k {
        0 => y - 1.0,
        1 => 1.0 - x,
        2 => x,
        3 => -y * (1.0 - z),
        4 => -y * z,
        _ => unreachable!(),
    }
}

/// Vertex-case integrand factors, second Duffy component.
fn vertex_psi_2(k: usize, x: f64, y: f64, z: f64) -> f64 {
    match k {
        0 => 1.0 - y,
        1 => y * (1.0 - z),
        2 => y * z,
        3 => x - 1.0,
        4 => -x,
        _ => unreachable!(),
    }
}

/// Edge-case integrand factors for the five Duffy components.
fn edge_psi(h: usize, k: usize, x: f64, y: f64, z: f64) -> f64 {
    match (h, k) {
        (0, 0) => -x * y,
        (0, 1) => x * (1.0 - z),
        (0, 2) => x * z,
        (0, 3) => -x * (1.0 - y),
        (1, 0) => -x * y * z,
        (1, 1) => -x * (1.0 - y),
        (1, 2) => x,
        (1, 3) => -x * y * (1.0 - z),
        (2, 0) => x * y,
        (2, 1) => -x * (1.0 - y * z),
        (2, 2) => x * (1.0 - y),
        (2, 3) => -x * y * z,
        (3, 0) => x * y * z,
        (3, 1) => x * (1.0 - y),
        (3, 2) => x * y * (1.0 - z),
        (3, 3) => -x,
        (4, 0) => x * y * z,
        (4, 1) => -x * (1.0 - y),
        (4, 2) => x * (1.0 - y * z),
        (4, 3) => -x * y,
        _ => unreachable!(),
    }
}

/// Identical-case integrand factors on the unit interval.
fn identical_psi(h: usize, k: usize, z: f64) -> f64 {
    match (h, k) {
        (0, 0) => -z,
        (0, 1) => -(1.0 - z),
        (0, 2) => 1.0,
        (1, 0) => -1.0,
        (1, 1) => 1.0 - z,
        (1, 2) => z,
        (2, 0) => z,
        (2, 1) => -1.0,
        (2, 2) => 1.0 - z,
        _ => unreachable!(),
    }
}

impl QuadTables {
    pub fn build() -> Self {
        Self::with_config(QuadConfig::default())
    }

    pub fn with_config(cfg: QuadConfig) -> Self {
        let (mut p_i, mut w_i) =
            gauss_legendre_01(cfg.interval_points).expect("interval rule order >= 1");
        if cfg.interval_points == 9 {
            let p = p_i.clone();
            let w = w_i.clone();
            for (s, &src) in P_I_STORED_ORDER.iter().enumerate() {
                p_i[s] = p[src];
                w_i[s] = w[src];
            }
        }

        let (ax, wx) =
            gauss_legendre_01(cfg.cube_points_per_axis).expect("cube rule order >= 1");
        let n = cfg.cube_points_per_axis;
        let mut p_cube = Vec::with_capacity(n * n * n);
        let mut w_cube = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    p_cube.push([ax[i], ax[j], ax[k]]);
                    w_cube.push(wx[i] * wx[j] * wx[k]);
                }
            }
        }

        let (p_t6, w_t6, p_t12, w_t12_half) = triangle_rules();
        // Stored 12-point weights are relative to the triangle area (sum 1).
        let mut w_t12 = [0.0; 12];
        for (o, w) in w_t12.iter_mut().zip(w_t12_half.iter()) {
            *o = 2.0 * w;
        }

        // Non-touching tables: 9 x 36, column index q + 6k pairs the q-th
        // quadrature node of T_l with the k-th node of T_m.
        // Products are taken in canonical index order so that the rows for
        // (a,b) and (b,a) are bitwise equal and assembled blocks come out
        // exactly symmetric.
        let mut phi_a = Table::zeros(9, 36);
        let mut phi_b = Table::zeros(9, 36);
        let mut phi_d = Table::zeros(9, 36);
        for a in 0..3 {
            for b in 0..3 {
                let r = a + 3 * b;
                let (lo, hi) = (a.min(b), a.max(b));
                for q in 0..6 {
                    for k in 0..6 {
                        let c = q + 6 * k;
                        let ww = w_t6[q] * w_t6[k];
                        let flo_q = reference_basis(lo, p_t6[q][0], p_t6[q][1]);
                        let fhi_q = reference_basis(hi, p_t6[q][0], p_t6[q][1]);
                        let fa_q = reference_basis(a, p_t6[q][0], p_t6[q][1]);
                        let fb_k = reference_basis(b, p_t6[k][0], p_t6[k][1]);
                        let flo_k = reference_basis(lo, p_t6[k][0], p_t6[k][1]);
                        let fhi_k = reference_basis(hi, p_t6[k][0], p_t6[k][1]);
                        phi_a.set(r, c, ww * flo_q * fhi_q);
                        phi_b.set(r, c, ww * fa_q * (-fb_k));
                        phi_d.set(r, c, ww * flo_k * fhi_k);
                    }
                }
            }
        }

        let ncube = p_cube.len();
        let mut vpsi = [Table::zeros(25, ncube), Table::zeros(25, ncube)];
        for i in 0..5 {
            for j in 0..5 {
                let r = i + 5 * j;
                let (lo, hi) = (i.min(j), i.max(j));
                for (c, (p, w)) in p_cube.iter().zip(w_cube.iter()).enumerate() {
                    let [x, y, z] = *p;
                    vpsi[0].set(r, c, w * vertex_psi_1(lo, x, y, z) * vertex_psi_1(hi, x, y, z) * y);
                    vpsi[1].set(r, c, w * vertex_psi_2(lo, x, y, z) * vertex_psi_2(hi, x, y, z) * y);
                }
            }
        }

        let mut epsi = [
            Table::zeros(16, ncube),
            Table::zeros(16, ncube),
            Table::zeros(16, ncube),
            Table::zeros(16, ncube),
            Table::zeros(16, ncube),
        ];
        for h in 0..5 {
            for i in 0..4 {
                for j in 0..4 {
                    let r = i + 4 * j;
                    let (lo, hi) = (i.min(j), i.max(j));
                    for (c, (p, w)) in p_cube.iter().zip(w_cube.iter()).enumerate() {
                        let [x, y, z] = *p;
                        let jac = if h == 0 { x * x } else { x * x * y };
                        let v = w * edge_psi(h, lo, x, y, z) * edge_psi(h, hi, x, y, z) * jac;
                        epsi[h].set(r, c, v);
                    }
                }
            }
        }

        let ni = p_i.len();
        let mut tpsi = [
            Table::zeros(9, ni),
            Table::zeros(9, ni),
            Table::zeros(9, ni),
        ];
        for h in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let r = i + 3 * j;
                    let (lo, hi) = (i.min(j), i.max(j));
                    for (c, (z, w)) in p_i.iter().zip(w_i.iter()).enumerate() {
                        tpsi[h].set(r, c, w * identical_psi(h, lo, *z) * identical_psi(h, hi, *z));
                    }
                }
            }
        }

        let mut cphi = Table::zeros(9, 12);
        for i in 0..3 {
            for j in 0..3 {
                let r = i + 3 * j;
                let (lo, hi) = (i.min(j), i.max(j));
                for (c, (p, w)) in p_t12.iter().zip(w_t12.iter()).enumerate() {
                    cphi.set(r, c, w * reference_basis(lo, p[0], p[1]) * reference_basis(hi, p[0], p[1]));
                }
            }
        }

        QuadTables {
            p_i,
            w_i,
            p_cube,
            w_cube,
            p_t6,
            w_t6,
            p_t12,
            w_t12,
            phi_a,
            phi_b,
            phi_d,
            vpsi,
            epsi,
            tpsi,
            cphi,
        }
    }

    /// Write every table as CSV files under `dir` for inspection.
    pub fn dump_csv(&self, dir: &std::path::Path) -> std::io::Result<()> {
        use std::io::Write;
        std::fs::create_dir_all(dir)?;
        let write_vec = |name: &str, v: &[f64]| -> std::io::Result<()> {
            let mut f = std::fs::File::create(dir.join(name))?;
            for x in v {
                writeln!(f, "{x}")?;
            }
            Ok(())
        };
        let write_pts = |name: &str, v: &[Vec<f64>]| -> std::io::Result<()> {
            let mut f = std::fs::File::create(dir.join(name))?;
            for row in v {
                let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                writeln!(f, "{}", cells.join(","))?;
            }
            Ok(())
        };
        let write_table = |name: &str, t: &Table| -> std::io::Result<()> {
            let mut f = std::fs::File::create(dir.join(name))?;
            for r in 0..t.rows {
                let cells: Vec<String> = t.row(r).iter().map(|x| x.to_string()).collect();
                writeln!(f, "{}", cells.join(","))?;
            }
            Ok(())
        };
        write_vec("p_I.csv", &self.p_i)?;
        write_vec("w_I.csv", &self.w_i)?;
        write_pts(
            "p_cube.csv",
            &self.p_cube.iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
        )?;
        write_vec("w_cube.csv", &self.w_cube)?;
        write_pts(
            "p_T_6.csv",
            &self.p_t6.iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
        )?;
        write_vec("w_T_6.csv", &self.w_t6)?;
        write_pts(
            "p_T_12.csv",
            &self.p_t12.iter().map(|p| p.to_vec()).collect::<Vec<_>>(),
        )?;
        write_vec("w_T_12.csv", &self.w_t12)?;
        write_table("phiA.csv", &self.phi_a)?;
        write_table("phiB.csv", &self.phi_b)?;
        write_table("phiD.csv", &self.phi_d)?;
        write_table("vpsi1.csv", &self.vpsi[0])?;
        write_table("vpsi2.csv", &self.vpsi[1])?;
        for (h, t) in self.epsi.iter().enumerate() {
            write_table(&format!("epsi{}.csv", h + 1), t)?;
        }
        for (h, t) in self.tpsi.iter().enumerate() {
            write_table(&format!("tpsi{}.csv", h + 1), t)?;
        }
        write_table("cphi.csv", &self.cphi)?;
        Ok(())
    }
}
