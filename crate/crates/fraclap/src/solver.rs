//! Direct and iterative solvers for the free-node system K_ff u = b_f.
//!
//! The default is a blocked dense Cholesky factorization with one step of
//! iterative refinement; a diagonally preconditioned conjugate gradient
//! path is available as an alternative. Non-SPD pivots are treated as an
//! assembly bug, not worked around.

use crate::assembly::StiffnessSystem;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("matrix is not positive definite at pivot {index} (value {value:.3e})")]
    NotSpd { index: usize, value: f64 },
    #[error("cg did not converge within {iterations} iterations (residual {residual:.3e})")]
    CgDidNotConverge { iterations: usize, residual: f64 },
    #[error("direct solve residual {residual:.3e} exceeds the tolerance {tol:.1e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverMethod {
    Cholesky,
    Cg { tol: f64, max_iter: usize },
}

impl Default for SolverMethod {
    fn default() -> Self {
        SolverMethod::Cholesky
    }
}

/// Full solution vector: zero on boundary and auxiliary nodes.
#[derive(Debug, Clone)]
pub struct Solution {
    pub values: Vec<f64>,
    pub s: f64,
    pub residual: f64,
    pub iterations: Option<usize>,
}

const DIRECT_RESIDUAL_TOL: f64 = 1e-10;

pub fn solve(system: &StiffnessSystem, method: SolverMethod) -> Result<Solution, SolveError> {
    let free = &system.mesh.free_nodes;
    let nf = free.len();
    let (kff, bf) = system.free_system();
    let norm_b = norm2(&bf).max(f64::MIN_POSITIVE);

    let (uf, iterations) = match method {
        SolverMethod::Cholesky => {
            let mut factor = kff.clone();
            cholesky_in_place(&mut factor, nf)?;
            let mut uf = bf.clone();
            cholesky_solve_in_place(&factor, nf, &mut uf);
            // One round of iterative refinement tightens the residual to
            // machine level regardless of conditioning.
            let mut r = residual_vec(&kff, nf, &uf, &bf);
            cholesky_solve_in_place(&factor, nf, &mut r);
            for (u, d) in uf.iter_mut().zip(r.iter()) {
                *u += d;
            }
            (uf, None)
        }
        SolverMethod::Cg { tol, max_iter } => {
            let (uf, its) = cg_diag_preconditioned(&kff, nf, &bf, tol, max_iter)?;
            (uf, Some(its))
        }
    };

    let residual = norm2(&residual_vec(&kff, nf, &uf, &bf)) / norm_b;
    if method == SolverMethod::Cholesky && residual > DIRECT_RESIDUAL_TOL {
        return Err(SolveError::ResidualTooLarge {
            residual,
            tol: DIRECT_RESIDUAL_TOL,
        });
    }

    let mut values = vec![0.0; system.n];
    for (i, &g) in free.iter().enumerate() {
        values[g] = uf[i];
    }
    Ok(Solution {
        values,
        s: system.s.value(),
        residual,
        iterations,
    })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual_vec(a: &[f64], n: usize, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; n];
    r.par_iter_mut().enumerate().for_each(|(i, ri)| {
        let row = &a[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for (aij, xj) in row.iter().zip(x.iter()) {
            acc += aij * xj;
        }
        *ri = b[i] - acc;
    });
    r
}

const BLOCK: usize = 64;

/// In-place blocked Cholesky factorization (lower triangle).
///
/// Deterministic for any thread count: every entry receives its panel
/// updates in a fixed order; parallelism only distributes rows.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<(), SolveError> {
    assert_eq!(a.len(), n * n);
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + BLOCK).min(n);
        // Unblocked factorization of the diagonal block.
        for j in k0..k1 {
            let mut d = a[j * n + j];
            for p in k0..j {
                d -= a[j * n + p] * a[j * n + p];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(SolveError::NotSpd { index: j, value: d });
            }
            let ljj = d.sqrt();
            a[j * n + j] = ljj;
            let (head, tail) = a.split_at_mut((j + 1) * n);
            let row_j = &head[j * n..j * n + j + 1];
            tail.par_chunks_mut(n).enumerate().for_each(|(off, row_i)| {
                let i = j + 1 + off;
                if i < k1 {
                    let mut v = row_i[j];
                    for p in k0..j {
                        v -= row_i[p] * row_j[p];
                    }
                    row_i[j] = v / ljj;
                }
            });
        }
        // Panel: rows below the block against the factored diagonal block.
        {
            let (head, tail) = a.split_at_mut(k1 * n);
            let diag = &head[..];
            tail.par_chunks_mut(n).for_each(|row_i| {
                for j in k0..k1 {
                    let mut v = row_i[j];
                    let row_j = &diag[j * n..j * n + j];
                    for p in k0..j {
                        v -= row_i[p] * row_j[p];
                    }
                    row_i[j] = v / diag[j * n + j];
                }
            });
        }
        // Trailing update: A[i][j] -= <L[i][k0..k1], L[j][k0..k1]> for
        // k1 <= j <= i.
        {
            let (_, tail) = a.split_at_mut(k1 * n);
            let panel_start = k1;
            let a_ptr = SyncPtr(tail.as_mut_ptr());
            let nn = n;
            (0..n - k1).into_par_iter().with_min_len(4).for_each(move |ri| {
                let i = panel_start + ri;
                // Row i of the trailing matrix lives in tail at offset ri*nn.
                let row_i = unsafe {
                    std::slice::from_raw_parts_mut(a_ptr.get().add(ri * nn), nn)
                };
                let li = row_i[k0..k1].to_vec();
                for j in panel_start..=i {
                    let row_j = unsafe {
                        std::slice::from_raw_parts(a_ptr.get().add((j - panel_start) * nn), nn)
                    };
                    let lj = &row_j[k0..k1];
                    let mut acc = 0.0;
                    for (x, y) in li.iter().zip(lj.iter()) {
                        acc += x * y;
                    }
                    row_i[j] -= acc;
                }
            });
        }
        k0 = k1;
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct SyncPtr(*mut f64);
unsafe impl Send for SyncPtr {}
unsafe impl Sync for SyncPtr {}

impl SyncPtr {
    #[inline]
    fn get(self) -> *mut f64 {
        self.0
    }
}

/// Solve L L^T x = b given the factor from [`cholesky_in_place`].
pub fn cholesky_solve_in_place(l: &[f64], n: usize, x: &mut [f64]) {
    // forward: L y = b
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let mut v = x[i];
        for (lij, yj) in row.iter().zip(x.iter()) {
            v -= lij * yj;
        }
        x[i] = v / l[i * n + i];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        let mut v = x[i];
        for j in i + 1..n {
            v -= l[j * n + i] * x[j];
        }
        x[i] = v / l[i * n + i];
    }
}

/// Diagonally preconditioned conjugate gradients.
fn cg_diag_preconditioned(
    a: &[f64],
    n: usize,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), SolveError> {
    let norm_b = norm2(b).max(f64::MIN_POSITIVE);
    let minv: Vec<f64> = (0..n)
        .map(|i| {
            let d = a[i * n + i];
            if d <= 0.0 {
                1.0
            } else {
                1.0 / d
            }
        })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(minv.iter()).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let res = norm2(&r) / norm_b;
        if res <= tol {
            return Ok((x, it));
        }
        matvec(a, n, &p, &mut ap);
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(SolveError::NotSpd {
                index: it,
                value: pap,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        let rz_new: f64 = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm2(&r) / norm_b;
    if res <= tol {
        Ok((x, max_iter))
    } else {
        Err(SolveError::CgDidNotConverge {
            iterations: max_iter,
            residual: res,
        })
    }
}

fn matvec(a: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let row = &a[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for (aij, xj) in row.iter().zip(x.iter()) {
            acc += aij * xj;
        }
        *o = acc;
    });
}

/// Rough 2-norm condition estimate of the free block: power iteration for
/// the largest eigenvalue, inverse iteration with the factor for the
/// smallest. Reported for diagnostics only.
pub fn condition_estimate(system: &StiffnessSystem) -> Option<f64> {
    let free = &system.mesh.free_nodes;
    let nf = free.len();
    if nf == 0 {
        return None;
    }
    let (kff, _) = system.free_system();
    let mut factor = kff.clone();
    cholesky_in_place(&mut factor, nf).ok()?;
    let mut v = vec![1.0; nf];
    let mut lam_max = 0.0;
    let mut tmp = vec![0.0; nf];
    for _ in 0..30 {
        matvec(&kff, nf, &v, &mut tmp);
        lam_max = norm2(&tmp);
        if lam_max == 0.0 {
            return None;
        }
        for (a, b) in v.iter_mut().zip(tmp.iter()) {
            *a = b / lam_max;
        }
    }
    let mut w = vec![1.0; nf];
    let mut inv_norm = 0.0;
    for _ in 0..30 {
        cholesky_solve_in_place(&factor, nf, &mut w);
        inv_norm = norm2(&w);
        for a in w.iter_mut() {
            *a /= inv_norm;
        }
    }
    Some(lam_max * inv_norm)
}

/// Write the solution as `node_index,x,y,u` CSV.
pub fn write_solution_csv(
    mesh: &crate::mesh::Mesh,
    solution: &Solution,
    path: &std::path::Path,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "node_index,x,y,u")?;
    for (i, p) in mesh.nodes.iter().enumerate() {
        writeln!(f, "{},{},{},{}", i, p[0], p[1], solution.values[i])?;
    }
    Ok(())
}

/// Sample the piecewise linear solution on an n x n grid covering the
/// domain's bounding square; points outside the domain mesh report u = 0.
pub fn sample_grid(
    mesh: &crate::mesh::Mesh,
    values: &[f64],
    n: usize,
) -> Vec<(f64, f64, f64)> {
    let r = mesh
        .boundary_nodes
        .iter()
        .map(|&b| {
            let p = mesh.nodes[b];
            (p[0] * p[0] + p[1] * p[1]).sqrt()
        })
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let mut out = Vec::with_capacity(n * n);
    let nd = mesh.n_domain();
    for iy in 0..n {
        for ix in 0..n {
            let x = -r + 2.0 * r * ix as f64 / (n - 1).max(1) as f64;
            let y = -r + 2.0 * r * iy as f64 / (n - 1).max(1) as f64;
            let mut u = 0.0;
            for l in 0..nd {
                let [a, b, c] = mesh.element_vertices(l);
                if let Some(bary) = barycentric([x, y], a, b, c) {
                    let t = mesh.triangles[l];
                    u = bary[0] * values[t[0]] + bary[1] * values[t[1]] + bary[2] * values[t[2]];
                    break;
                }
            }
            out.push((x, y, u));
        }
    }
    out
}

fn barycentric(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<[f64; 3]> {
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    if det.abs() < 1e-30 {
        return None;
    }
    let l1 = ((b[0] - p[0]) * (c[1] - p[1]) - (c[0] - p[0]) * (b[1] - p[1])) / det;
    let l2 = ((c[0] - p[0]) * (a[1] - p[1]) - (a[0] - p[0]) * (c[1] - p[1])) / det;
    let l3 = 1.0 - l1 - l2;
    let eps = -1e-12;
    if l1 >= eps && l2 >= eps && l3 >= eps {
        Some([l1, l2, l3])
    } else {
        None
    }
}
