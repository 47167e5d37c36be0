//! Exact solutions on the unit disk and error measurement.
//!
//! For the unit disk the eigen-pairs of the operator are explicit: with
//! omega(x) = (1 - |x|^2)_+ and the Jacobi profile p_k(x) =
//! P_k^{(s,0)}(2|x|^2 - 1), the function omega^s p_k solves the Dirichlet
//! problem with right-hand side lambda_{k,s} p_k. These pairs drive the
//! L2/energy error computations and the convergence studies.

use crate::assembly::{assemble, AssemblyError, AssemblyOptions, StiffnessSystem};
use crate::kernels::{FractionalOrder, KernelError};
use crate::mesh::gen::generate_disk_mesh;
use crate::mesh::{ElementMap, Mesh, MeshError, Point};
use crate::quadtables::QuadTables;
use crate::solver::{solve, Solution, SolveError, SolverMethod};
use statrs::function::gamma::gamma;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("energy radicand {0:.3e} is negative beyond tolerance; inputs are inconsistent")]
    NegativeRadicand(f64),
    #[error("convergence study needs at least 3 mesh sizes, got {0}")]
    TooFewSizes(usize),
    #[error("cannot fit a rate: {0}")]
    DegenerateRates(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Jacobi polynomial P_k^{(alpha,beta)}(z) by the explicit sum formula.
pub fn jacobi(k: usize, alpha: f64, beta: f64, z: f64) -> Result<f64, AnalyticError> {
    if alpha <= -1.0 || beta <= -1.0 {
        return Err(AnalyticError::InvalidParameter(format!(
            "jacobi parameters must exceed -1, got alpha={alpha}, beta={beta}"
        )));
    }
    // The gamma ratios inside the sum telescope into rational products,
    // Gamma(a+b+k+m+1)/Gamma(a+m+1) = [Gamma(a+b+k+1)/Gamma(a+1)] *
    // prod_{i<=m} (a+b+k+i)/(a+i), so gamma only enters a global prefactor.
    // The alternating terms can exceed the result by 6+ orders of magnitude
    // near k = 10; double-double accumulation keeps the returned value at
    // f64 accuracy.
    let pref = gamma(alpha + k as f64 + 1.0) / (factorial(k) * gamma(alpha + 1.0));
    let half = Dd::from(0.5 * (z - 1.0));
    let a_plus_b = Dd::two_sum(alpha, beta);
    let mut ratio = Dd::from(1.0);
    let mut power = Dd::from(1.0);
    let mut sum = Dd::from(0.0);
    for m in 0..=k {
        if m > 0 {
            let mf = m as f64;
            let num = a_plus_b.add_f64(k as f64 + mf);
            let den = Dd::two_sum(alpha, mf);
            ratio = ratio.mul(num).div(den);
            power = power.mul(half);
        }
        sum = sum.add(ratio.mul(power).scale(binomial(k, m)));
    }
    Ok(pref * sum.hi())
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Unevaluated double-double value hi + lo, used only for the Jacobi sum.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn hi(self) -> f64 {
        self.hi + self.lo
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Dd {
            hi: s,
            lo: (hi - s) + lo,
        }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn two_prod(a: f64, b: f64) -> Self {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn add(self, other: Dd) -> Self {
        let s = Dd::two_sum(self.hi, other.hi);
        Dd::renorm(s.hi, s.lo + self.lo + other.lo)
    }

    fn add_f64(self, x: f64) -> Self {
        let s = Dd::two_sum(self.hi, x);
        Dd::renorm(s.hi, s.lo + self.lo)
    }

    fn mul(self, other: Dd) -> Self {
        let p = Dd::two_prod(self.hi, other.hi);
        Dd::renorm(p.hi, p.lo + self.hi * other.lo + self.lo * other.hi)
    }

    fn scale(self, x: f64) -> Self {
        let p = Dd::two_prod(self.hi, x);
        Dd::renorm(p.hi, p.lo + self.lo * x)
    }

    fn div(self, other: Dd) -> Self {
        let q1 = self.hi / other.hi;
        let r = self.add(other.scale(-q1));
        let q2 = r.hi() / other.hi;
        Dd::renorm(q1, q2)
    }
}

fn binomial(k: usize, m: usize) -> f64 {
    factorial(k) / (factorial(m) * factorial(k - m))
}

/// Eigenvalue lambda_{k,s} = 2^(2s) Gamma(1+s+k) Gamma(n/2+s+k) / (k! Gamma(n/2+k)).
pub fn eigenvalue_lambda(k: usize, s: FractionalOrder, n: usize) -> f64 {
    let s = s.value();
    let half_n = n as f64 / 2.0;
    2.0f64.powf(2.0 * s) * gamma(1.0 + s + k as f64) * gamma(half_n + s + k as f64)
        / (factorial(k) * gamma(half_n + k as f64))
}

/// Exact pair (u, f) on the unit disk:
/// u = scale * omega^s P_k^{(s,0)}(2 r^2 - 1), f = scale * lambda P_k^{(s,0)}(2 r^2 - 1).
#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub k: usize,
    pub s: f64,
    pub lambda: f64,
    pub scale: f64,
    /// Coefficients of P_k^{(s,0)}(2t - 1) in powers of (t - 1), t = r^2.
    coeffs: Vec<f64>,
}

impl ExactSolution {
    /// The eigenpair normalization: f = lambda_{k,s} p_k.
    pub fn jacobi_pair(k: usize, s: FractionalOrder) -> Self {
        let lambda = eigenvalue_lambda(k, s, 2);
        Self::with_scale(k, s, lambda, 1.0)
    }

    /// k = 0 rescaled so that f is identically 1.
    pub fn unit_rhs(s: FractionalOrder) -> Self {
        let lambda = eigenvalue_lambda(0, s, 2);
        Self::with_scale(0, s, lambda, 1.0 / lambda)
    }

    fn with_scale(k: usize, s: FractionalOrder, lambda: f64, scale: f64) -> Self {
        let sv = s.value();
        let kf = factorial(k);
        let coeffs = (0..=k)
            .map(|m| binomial(k, m) * gamma(sv + (k + m) as f64 + 1.0) / (kf * gamma(sv + m as f64 + 1.0)))
            .collect();
        ExactSolution {
            k,
            s: sv,
            lambda,
            scale,
            coeffs,
        }
    }

    /// P_k^{(s,0)}(2t - 1) evaluated from the shifted-monomial coefficients.
    fn profile(&self, t: f64) -> f64 {
        let u = t - 1.0;
        let mut acc = 0.0;
        let mut pw = 1.0;
        for c in &self.coeffs {
            acc += c * pw;
            pw *= u;
        }
        acc
    }

    pub fn u(&self, p: Point) -> f64 {
        let t = p[0] * p[0] + p[1] * p[1];
        if t >= 1.0 {
            return 0.0;
        }
        self.scale * (1.0 - t).powf(self.s) * self.profile(t)
    }

    pub fn f(&self, x: f64, y: f64) -> f64 {
        let t = x * x + y * y;
        self.scale * self.lambda * self.profile(t)
    }

    /// int_disk f u dx in closed form via int_0^1 (1-t)^(s+q) dt = 1/(s+q+1).
    pub fn integral_f_u(&self) -> f64 {
        let mut acc = 0.0;
        for (m, cm) in self.coeffs.iter().enumerate() {
            for (mp, cmp) in self.coeffs.iter().enumerate() {
                let q = (m + mp) as f64;
                let sign = if (m + mp) % 2 == 0 { 1.0 } else { -1.0 };
                acc += cm * cmp * sign / (self.s + q + 1.0);
            }
        }
        self.scale * self.scale * self.lambda * std::f64::consts::PI * acc
    }
}

/// Piecewise-linear evaluation of nodal values on one element.
struct LinearPatch {
    v0: Point,
    col0: Point,
    col1: Point,
    inv_det: f64,
    u: [f64; 3],
}

impl LinearPatch {
    fn new(verts: &[Point; 3], u: [f64; 3]) -> Self {
        let col0 = [verts[1][0] - verts[0][0], verts[1][1] - verts[0][1]];
        let col1 = [verts[2][0] - verts[0][0], verts[2][1] - verts[0][1]];
        let det = col0[0] * col1[1] - col1[0] * col0[1];
        LinearPatch {
            v0: verts[0],
            col0,
            col1,
            inv_det: 1.0 / det,
            u,
        }
    }

    fn eval(&self, p: Point) -> f64 {
        let rx = p[0] - self.v0[0];
        let ry = p[1] - self.v0[1];
        let l1 = (rx * self.col1[1] - ry * self.col1[0]) * self.inv_det;
        let l2 = (ry * self.col0[0] - rx * self.col0[1]) * self.inv_det;
        self.u[0] * (1.0 - l1 - l2) + self.u[1] * l1 + self.u[2] * l2
    }
}

fn integrate_tri_12pt<G: FnMut(Point) -> f64>(
    verts: &[Point; 3],
    tables: &QuadTables,
    g: &mut G,
) -> f64 {
    let map = ElementMap::new(verts[0], verts[1], verts[2]);
    let mut acc = 0.0;
    for (p, w) in tables.p_t12.iter().zip(tables.w_t12.iter()) {
        acc += w * g(map.apply(*p));
    }
    map.area * acc
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn children(verts: &[Point; 3]) -> [[Point; 3]; 4] {
    let m01 = midpoint(verts[0], verts[1]);
    let m02 = midpoint(verts[0], verts[2]);
    let m12 = midpoint(verts[1], verts[2]);
    [
        [verts[0], m01, m02],
        [m01, verts[1], m12],
        [m02, m12, verts[2]],
        [m01, m12, m02],
    ]
}

/// ||u - u_h||_{L2} over the domain triangles, 12-point rule per element,
/// with one 4-way subdivision on elements touching the domain boundary.
pub fn l2_error(
    mesh: &Mesh,
    values: &[f64],
    exact: &ExactSolution,
    tables: &QuadTables,
) -> f64 {
    let mut is_boundary = vec![false; mesh.n_nodes()];
    for &b in &mesh.boundary_nodes {
        is_boundary[b] = true;
    }
    let mut acc = 0.0;
    for l in 0..mesh.n_domain() {
        let t = mesh.triangles[l];
        let verts = mesh.element_vertices(l);
        let patch = LinearPatch::new(&verts, [values[t[0]], values[t[1]], values[t[2]]]);
        let mut g = |p: Point| {
            let d = exact.u(p) - patch.eval(p);
            d * d
        };
        if t.iter().any(|&v| is_boundary[v]) {
            for child in children(&verts) {
                acc += integrate_tri_12pt(&child, tables, &mut g);
            }
        } else {
            acc += integrate_tri_12pt(&verts, tables, &mut g);
        }
    }
    acc.sqrt()
}

/// Energy-norm error via the Galerkin identity:
/// a(u - u_h, u - u_h) = int f u - u_f^T K_ff u_f,
/// with int f u taken from the exact closed form on the disk.
pub fn energy_error(
    system: &StiffnessSystem,
    solution: &Solution,
    exact: &ExactSolution,
) -> Result<f64, AnalyticError> {
    let fu = exact.integral_f_u();
    let uku = quadratic_form(system, &solution.values);
    let radicand = fu - uku;
    if radicand < -1e-10 {
        return Err(AnalyticError::NegativeRadicand(radicand));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// v^T K v over the full node vector (zero entries mask non-free nodes).
pub fn quadratic_form(system: &StiffnessSystem, v: &[f64]) -> f64 {
    let n = system.n;
    let mut acc = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let row = &system.k[i * n..(i + 1) * n];
        let mut dot = 0.0;
        for (kij, vj) in row.iter().zip(v.iter()) {
            dot += kij * vj;
        }
        acc += vi * dot;
    }
    acc
}

#[derive(Debug, Clone)]
pub struct StudyParams {
    pub s: f64,
    pub k: usize,
    /// Use the f = 1 normalization (only meaningful for k = 0).
    pub unit_rhs: bool,
    pub domain_radius: f64,
    pub ball_radius: f64,
    /// Target mesh sizes, decreasing.
    pub sizes: Vec<f64>,
    /// Levels to drop from the slope fit when the coarsest are pre-asymptotic.
    pub drop_coarsest: usize,
    pub method: SolverMethod,
    pub threads: Option<usize>,
}

impl StudyParams {
    pub fn new(s: f64, k: usize, sizes: Vec<f64>) -> Self {
        StudyParams {
            s,
            k,
            unit_rhs: k == 0,
            domain_radius: 1.0,
            ball_radius: 1.1,
            sizes,
            drop_coarsest: 0,
            method: SolverMethod::Cholesky,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RateRow {
    pub h: f64,
    pub dofs: usize,
    pub l2: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub dropped: usize,
    pub slope_h_l2: f64,
    pub slope_h_energy: f64,
    pub slope_dofs_l2: f64,
    pub slope_dofs_energy: f64,
}

/// Run the full pipeline on a ladder of meshes and fit log-log slopes.
pub fn convergence_study(params: &StudyParams) -> Result<RateTable, AnalyticError> {
    if params.sizes.len() < 3 {
        return Err(AnalyticError::TooFewSizes(params.sizes.len()));
    }
    let s = FractionalOrder::new(params.s)?;
    let exact = if params.unit_rhs {
        ExactSolution::unit_rhs(s)
    } else {
        ExactSolution::jacobi_pair(params.k, s)
    };
    let tables = QuadTables::build();
    let mut rows = Vec::with_capacity(params.sizes.len());
    for &h in &params.sizes {
        let mesh = Arc::new(generate_disk_mesh(
            params.domain_radius,
            h,
            params.ball_radius,
        )?);
        let f = |x: f64, y: f64| exact.f(x, y);
        let system = assemble(
            mesh.clone(),
            s,
            &f,
            &tables,
            AssemblyOptions {
                threads: params.threads,
                ..Default::default()
            },
        )?;
        let solution = solve(&system, params.method)?;
        let l2 = l2_error(&mesh, &solution.values, &exact, &tables);
        let energy = energy_error(&system, &solution, &exact)?;
        rows.push(RateRow {
            h,
            dofs: mesh.free_nodes.len(),
            l2,
            energy,
        });
    }
    fit_rates(rows, params.drop_coarsest)
}

pub fn fit_rates(rows: Vec<RateRow>, drop_coarsest: usize) -> Result<RateTable, AnalyticError> {
    if rows.len().saturating_sub(drop_coarsest) < 2 {
        return Err(AnalyticError::DegenerateRates(
            "fewer than 2 levels left after dropping".into(),
        ));
    }
    let fit = &rows[drop_coarsest..];
    for r in fit {
        if !(r.l2 > 0.0) || !(r.energy > 0.0) {
            return Err(AnalyticError::DegenerateRates(format!(
                "non-positive error at h = {} (l2 {}, energy {})",
                r.h, r.l2, r.energy
            )));
        }
    }
    let ln_h: Vec<f64> = fit.iter().map(|r| r.h.ln()).collect();
    let ln_dofs: Vec<f64> = fit.iter().map(|r| (r.dofs as f64).ln()).collect();
    let ln_l2: Vec<f64> = fit.iter().map(|r| r.l2.ln()).collect();
    let ln_en: Vec<f64> = fit.iter().map(|r| r.energy.ln()).collect();
    Ok(RateTable {
        slope_h_l2: ls_slope(&ln_h, &ln_l2),
        slope_h_energy: ls_slope(&ln_h, &ln_en),
        slope_dofs_l2: ls_slope(&ln_dofs, &ln_l2),
        slope_dofs_energy: ls_slope(&ln_dofs, &ln_en),
        dropped: drop_coarsest,
        rows,
    })
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, yi) in x.iter().zip(y.iter()) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

/// Rate table CSV: data rows plus a footer with the fitted slopes.
pub fn write_rates_csv(table: &RateTable, path: &std::path::Path) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "h,dofs,l2_error,energy_error")?;
    for r in &table.rows {
        writeln!(f, "{},{},{},{}", r.h, r.dofs, r.l2, r.energy)?;
    }
    writeln!(f, "slope_h,,{},{}", table.slope_h_l2, table.slope_h_energy)?;
    writeln!(
        f,
        "slope_dofs,,{},{}",
        table.slope_dofs_l2, table.slope_dofs_energy
    )?;
    Ok(())
}
