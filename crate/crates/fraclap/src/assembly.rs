//! Dense stiffness assembly for the nonlocal bilinear form.
//!
//! The outer loop visits domain elements only; auxiliary annulus elements
//! appear solely as partners. Symmetry I_{l,m} = I_{m,l} is exploited by
//! visiting each unordered pair once and doubling its contribution. The
//! returned matrix includes the normalization constant C(2,s)/2, so it is
//! exactly the system matrix of the discrete problem.
//!
//! Determinism: the heavy per-partner blocks are computed in parallel into
//! disjoint slots and scattered serially in index order, so the result is
//! bit-identical for any thread count.

use crate::kernels::{
    complement_block, edge_block, identical_block, nontouching_ml, quad_points_6, vertex_block,
    EdgePair, FractionalOrder, KernelError, VertexPair,
};
use crate::mesh::{
    build_patches, classify_all_against, classify_pair, ClassifyScratch, ElementMap, Mesh, Point,
};
use crate::quadtables::QuadTables;
use rayon::prelude::*;
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("stiffness matrix needs {required} bytes, above the cap of {cap}")]
    MemoryCap { required: usize, cap: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("matrix dump refused: {n} nodes exceed the limit {limit}")]
    DumpTooLarge { n: usize, limit: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Half normalization constant C(2,s)/2 = s 2^(2s-1) Gamma(1+s) / (pi Gamma(1-s)).
pub fn normalization_constant(s: FractionalOrder) -> f64 {
    use statrs::function::gamma::gamma;
    let s = s.value();
    s * 2.0f64.powf(2.0 * s - 1.0) * gamma(1.0 + s) / (std::f64::consts::PI * gamma(1.0 - s))
}

/// Load contributions int_T f phi_i by the edge-midpoint rule.
pub fn load_element<F: Fn(f64, f64) -> f64>(vertices: &[Point; 3], area: f64, f: &F) -> [f64; 3] {
    let mids = [
        [
            0.5 * (vertices[1][0] + vertices[2][0]),
            0.5 * (vertices[1][1] + vertices[2][1]),
        ],
        [
            0.5 * (vertices[0][0] + vertices[2][0]),
            0.5 * (vertices[0][1] + vertices[2][1]),
        ],
        [
            0.5 * (vertices[0][0] + vertices[1][0]),
            0.5 * (vertices[0][1] + vertices[1][1]),
        ],
    ];
    let fm = [
        f(mids[0][0], mids[0][1]),
        f(mids[1][0], mids[1][1]),
        f(mids[2][0], mids[2][1]),
    ];
    let w = area / 6.0;
    [w * (fm[1] + fm[2]), w * (fm[0] + fm[2]), w * (fm[0] + fm[1])]
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AssemblyStats {
    pub n_disjoint_pairs: u64,
    pub n_vertex_pairs: u64,
    pub n_edge_pairs: u64,
    /// Minimum distance between quadrature point sets over all disjoint
    /// pairs; diagnoses near-touching pairs under the fixed rule.
    pub min_pair_distance: f64,
    pub time_disjoint: Duration,
    pub time_vertex: Duration,
    pub time_edge: Duration,
    pub time_identical: Duration,
    pub time_complement: Duration,
    pub time_classify: Duration,
}

#[derive(Debug, Clone, Copy)]
pub struct AssemblyOptions {
    pub threads: Option<usize>,
    pub memory_cap_bytes: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            threads: None,
            memory_cap_bytes: 2 << 30,
        }
    }
}

/// Dense symmetric stiffness system K U = b over all mesh nodes.
///
/// Rows and columns of boundary and auxiliary nodes are present but unused
/// by the solve. `k` includes the factor C(2,s)/2.
#[derive(Debug)]
pub struct StiffnessSystem {
    pub mesh: Arc<Mesh>,
    pub n: usize,
    pub k: Vec<f64>,
    pub b: Vec<f64>,
    pub s: FractionalOrder,
    pub cns: f64,
    pub stats: AssemblyStats,
}

impl StiffnessSystem {
    #[inline]
    pub fn k_at(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    /// Extract the free-node block and load vector.
    pub fn free_system(&self) -> (Vec<f64>, Vec<f64>) {
        let free = &self.mesh.free_nodes;
        let nf = free.len();
        let mut kff = vec![0.0; nf * nf];
        let mut bf = vec![0.0; nf];
        for (i, &gi) in free.iter().enumerate() {
            let row = &self.k[gi * self.n..(gi + 1) * self.n];
            for (j, &gj) in free.iter().enumerate() {
                kff[i * nf + j] = row[gj];
            }
            bf[i] = self.b[gi];
        }
        (kff, bf)
    }

    /// Write K and b as CSV; refuses systems above 2000 nodes.
    pub fn dump_csv(&self, path: &std::path::Path) -> Result<(), AssemblyError> {
        use std::io::Write;
        const LIMIT: usize = 2000;
        if self.n > LIMIT {
            return Err(AssemblyError::DumpTooLarge { n: self.n, limit: LIMIT });
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| self.k_at(i, j).to_string()).collect();
            writeln!(f, "{}", row.join(","))?;
        }
        let mut bpath = path.to_path_buf();
        let ext = bpath
            .extension()
            .map(|e| format!("b.{}", e.to_string_lossy()))
            .unwrap_or_else(|| "b.csv".into());
        bpath.set_extension(ext);
        let mut fb = std::io::BufWriter::new(std::fs::File::create(&bpath)?);
        for i in 0..self.n {
            writeln!(fb, "{}", self.b[i])?;
        }
        Ok(())
    }
}

/// Assemble the stiffness matrix and load vector.
pub fn assemble<F>(
    mesh: Arc<Mesh>,
    s: FractionalOrder,
    f: &F,
    tables: &QuadTables,
    opts: AssemblyOptions,
) -> Result<StiffnessSystem, AssemblyError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let required = mesh.n_nodes() * mesh.n_nodes() * std::mem::size_of::<f64>();
    if required > opts.memory_cap_bytes {
        return Err(AssemblyError::MemoryCap {
            required,
            cap: opts.memory_cap_bytes,
        });
    }
    match opts.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .expect("thread pool");
            pool.install(|| assemble_inner(mesh, s, f, tables))
        }
        None => assemble_inner(mesh, s, f, tables),
    }
}

fn assemble_inner<F>(
    mesh: Arc<Mesh>,
    s: FractionalOrder,
    f: &F,
    tables: &QuadTables,
) -> Result<StiffnessSystem, AssemblyError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let nn = mesh.n_nodes();
    let nt = mesh.triangles.len();
    let nd = mesh.n_domain();
    let sv = s.value();

    let maps: Vec<ElementMap> = (0..nt).map(|l| mesh.element_map(l)).collect();
    let pts6: Vec<[Point; 6]> = maps.iter().map(|m| quad_points_6(m, tables)).collect();
    let patches = build_patches(&mesh);

    let mut k = vec![0.0f64; nn * nn];
    let mut b = vec![0.0f64; nn];
    let mut stats = AssemblyStats {
        min_pair_distance: f64::INFINITY,
        ..Default::default()
    };
    let mut scratch = ClassifyScratch::default();
    let mut blocks: Vec<[f64; 36]> = vec![[0.0; 36]; nt];

    for l in 0..nd {
        let t0 = Instant::now();
        classify_all_against(&mesh, &patches, l, &mut scratch);
        stats.time_classify += t0.elapsed();

        let nodl = mesh.triangles[l];
        let verts = mesh.element_vertices(l);
        let area_l = maps[l].area;

        let vl = load_element(&verts, area_l, f);
        for (ni, v) in nodl.iter().zip(vl.iter()) {
            b[*ni] += v;
        }

        let t0 = Instant::now();
        let ident = identical_block(&maps[l], s, tables)?;
        scatter(&mut k, nn, &nodl, &ident);
        stats.time_identical += t0.elapsed();

        let t0 = Instant::now();
        let comp = complement_block(&maps[l], mesh.ball_radius, s, tables)?;
        scatter(&mut k, nn, &nodl, &comp);
        stats.time_complement += t0.elapsed();

        let t0 = Instant::now();
        for &m in &scratch.vertex {
            let pc = classify_pair(&mesh, l, m);
            let on = &pc.ordered_nodes;
            let pair = VertexPair {
                shared: mesh.nodes[on[0]],
                l_others: [mesh.nodes[on[1]], mesh.nodes[on[2]]],
                m_others: [mesh.nodes[on[3]], mesh.nodes[on[4]]],
                area_l,
                area_m: maps[m].area,
            };
            let mut block = vertex_block(&pair, s, tables)?;
            for row in block.iter_mut() {
                for v in row.iter_mut() {
                    *v *= 2.0;
                }
            }
            scatter_idx(&mut k, nn, on, &block.iter().flatten().copied().collect::<Vec<_>>(), 5);
            stats.n_vertex_pairs += 1;
        }
        stats.time_vertex += t0.elapsed();

        let t0 = Instant::now();
        for &m in &scratch.edge {
            let pc = classify_pair(&mesh, l, m);
            let on = &pc.ordered_nodes;
            let pair = EdgePair {
                shared: [mesh.nodes[on[0]], mesh.nodes[on[1]]],
                l_apex: mesh.nodes[on[2]],
                m_apex: mesh.nodes[on[3]],
                area_l,
                area_m: maps[m].area,
            };
            let mut block = edge_block(&pair, s, tables)?;
            for row in block.iter_mut() {
                for v in row.iter_mut() {
                    *v *= 2.0;
                }
            }
            scatter_idx(&mut k, nn, on, &block.iter().flatten().copied().collect::<Vec<_>>(), 4);
            stats.n_edge_pairs += 1;
        }
        stats.time_edge += t0.elapsed();

        let t0 = Instant::now();
        let n_disj = scratch.disjoint.len();
        let pts_l = &pts6[l];
        let min_d2 = blocks[..n_disj]
            .par_iter_mut()
            .with_min_len(32)
            .zip(scratch.disjoint.par_iter().with_min_len(32))
            .map(|(slot, &m)| {
                nontouching_ml(
                    pts_l,
                    &pts6[m],
                    sv,
                    tables,
                    8.0 * area_l * maps[m].area,
                    slot,
                )
            })
            .reduce(|| f64::INFINITY, f64::min);
        if min_d2 < stats.min_pair_distance * stats.min_pair_distance {
            stats.min_pair_distance = min_d2.sqrt();
        }
        for (slot, &m) in blocks[..n_disj].iter().zip(scratch.disjoint.iter()) {
            let nodm = mesh.triangles[m];
            let order = [nodl[0], nodl[1], nodl[2], nodm[0], nodm[1], nodm[2]];
            for (i, &gi) in order.iter().enumerate() {
                let row = &mut k[gi * nn..(gi + 1) * nn];
                for (j, &gj) in order.iter().enumerate() {
                    row[gj] += slot[i * 6 + j];
                }
            }
        }
        stats.n_disjoint_pairs += n_disj as u64;
        stats.time_disjoint += t0.elapsed();
    }

    let cns = normalization_constant(s);
    for v in k.iter_mut() {
        *v *= cns;
    }

    Ok(StiffnessSystem {
        mesh,
        n: nn,
        k,
        b,
        s,
        cns,
        stats,
    })
}

#[inline]
fn scatter<const N: usize>(k: &mut [f64], nn: usize, nodes: &[usize; N], block: &[[f64; N]; N]) {
    for (i, &gi) in nodes.iter().enumerate() {
        let row = &mut k[gi * nn..(gi + 1) * nn];
        for (j, &gj) in nodes.iter().enumerate() {
            row[gj] += block[i][j];
        }
    }
}

#[inline]
fn scatter_idx(k: &mut [f64], nn: usize, nodes: &[usize], block: &[f64], dim: usize) {
    for (i, &gi) in nodes.iter().enumerate() {
        let row = &mut k[gi * nn..(gi + 1) * nn];
        for (j, &gj) in nodes.iter().enumerate() {
            row[gj] += block[i * dim + j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::gen::generate_disk_mesh;

    fn s(v: f64) -> FractionalOrder {
        FractionalOrder::new(v).unwrap()
    }

    #[test]
    fn normalization_constant_at_half() {
        let c = normalization_constant(s(0.5));
        assert!((c - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-14);
    }

    #[test]
    fn normalization_constant_positive_on_range() {
        for sv in [0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95] {
            assert!(normalization_constant(s(sv)) > 0.0);
        }
    }

    /// Cross-check against the reflection identity
    /// Gamma(1-s) = pi s / (sin(pi s) Gamma(1+s)).
    #[test]
    fn normalization_constant_reflection_route() {
        use statrs::function::gamma::gamma;
        for sv in [0.25, 0.75] {
            let g = gamma(1.0 + sv);
            let alt = 2.0f64.powf(2.0 * sv - 1.0) * g * g * (std::f64::consts::PI * sv).sin()
                / (std::f64::consts::PI * std::f64::consts::PI);
            let c = normalization_constant(s(sv));
            assert!((c - alt).abs() <= 1e-12 * alt, "{c} vs {alt}");
        }
    }

    #[test]
    fn load_element_constant_f() {
        let verts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        let vl = load_element(&verts, 0.5, &|_, _| 1.0);
        for v in vl {
            assert!((v - 0.5 / 3.0).abs() < 1e-15);
        }
        assert!((vl.iter().sum::<f64>() - 0.5).abs() < 1e-15);
    }

    /// The rule is exact for linear f: int_T f phi_i has the closed form
    /// |T| (2 f(v_i) + f(v_j) + f(v_k)) / 12.
    #[test]
    fn load_element_linear_f_exact() {
        let verts: [[f64; 2]; 3] = [[0.2, -0.3], [1.4, 0.1], [0.7, 1.2]];
        let area: f64 = 0.5
            * ((verts[1][0] - verts[0][0]) * (verts[2][1] - verts[0][1])
                - (verts[2][0] - verts[0][0]) * (verts[1][1] - verts[0][1]))
                .abs();
        let f = |x: f64, y: f64| 0.7 * x - 1.3 * y + 0.4;
        let vl = load_element(&verts, area, &f);
        let fv: Vec<f64> = verts.iter().map(|v| f(v[0], v[1])).collect();
        for i in 0..3 {
            let exact = area * (2.0 * fv[i] + fv[(i + 1) % 3] + fv[(i + 2) % 3]) / 12.0;
            assert!((vl[i] - exact).abs() <= 1e-13, "{} vs {exact}", vl[i]);
        }
    }

    /// For quadratic f the per-entry rule is no longer exact, but the sum
    /// over the three entries is the plain midpoint rule, exact through
    /// degree 2: sum_i int f phi_i = int f.
    #[test]
    fn load_element_sum_is_exact_for_quadratic_f() {
        let verts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        let vl = load_element(&verts, 0.5, &|x, _| x * x);
        // int over the reference triangle of x^2 is 1/4
        assert!((vl.iter().sum::<f64>() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn assembled_matrix_is_exactly_symmetric() {
        let mesh = Arc::new(generate_disk_mesh(1.0, 0.45, 1.3).unwrap());
        let tables = QuadTables::build();
        let sys = assemble(
            mesh,
            s(0.5),
            &|_, _| 1.0,
            &tables,
            AssemblyOptions::default(),
        )
        .unwrap();
        for i in 0..sys.n {
            for j in 0..i {
                assert_eq!(sys.k_at(i, j), sys.k_at(j, i));
            }
        }
    }

    #[test]
    fn load_vector_sums_to_domain_area() {
        let mesh = Arc::new(generate_disk_mesh(1.0, 0.3, 1.2).unwrap());
        let area: f64 = (0..mesh.n_domain()).map(|l| mesh.element_map(l).area).sum();
        let tables = QuadTables::build();
        let sys = assemble(
            mesh,
            s(0.4),
            &|_, _| 1.0,
            &tables,
            AssemblyOptions::default(),
        )
        .unwrap();
        let total: f64 = sys.b.iter().sum();
        assert!((total - area).abs() <= 1e-12 * area);
    }

    #[test]
    fn memory_cap_is_respected() {
        let mesh = Arc::new(generate_disk_mesh(1.0, 0.3, 1.0).unwrap());
        let tables = QuadTables::build();
        let err = assemble(
            mesh,
            s(0.5),
            &|_, _| 1.0,
            &tables,
            AssemblyOptions {
                threads: None,
                memory_cap_bytes: 64,
            },
        )
        .unwrap_err();
        assert!(matches!(err, AssemblyError::MemoryCap { .. }));
    }

    #[test]
    fn assembly_is_bitwise_deterministic_across_thread_counts() {
        let mesh = Arc::new(generate_disk_mesh(1.0, 0.35, 1.2).unwrap());
        let tables = QuadTables::build();
        let f = |x: f64, y: f64| 1.0 + 0.3 * x - 0.2 * y;
        let run = |threads: usize| {
            assemble(
                mesh.clone(),
                s(0.6),
                &f,
                &tables,
                AssemblyOptions {
                    threads: Some(threads),
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let a = run(1);
        let b2 = run(2);
        let c = run(4);
        assert_eq!(a.k, b2.k);
        assert_eq!(a.k, c.k);
        assert_eq!(a.b, b2.b);
        assert_eq!(a.b, c.b);
    }

    #[test]
    fn node_renumbering_permutes_system_exactly() {
        let mesh = generate_disk_mesh(1.0, 0.4, 1.25).unwrap();
        let nn = mesh.n_nodes();
        // deterministic permutation: reverse order
        let perm: Vec<usize> = (0..nn).rev().collect();
        let mut inv = vec![0usize; nn];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let mut nodes = vec![[0.0; 2]; nn];
        for (i, &p) in perm.iter().enumerate() {
            nodes[p] = mesh.nodes[i];
        }
        let permuted = Mesh {
            nodes,
            triangles: mesh
                .triangles
                .iter()
                .map(|t| [perm[t[0]], perm[t[1]], perm[t[2]]])
                .collect(),
            n_aux: mesh.n_aux,
            boundary_nodes: mesh.boundary_nodes.iter().map(|&v| perm[v]).collect(),
            free_nodes: mesh.free_nodes.iter().map(|&v| perm[v]).collect(),
            ball_radius: mesh.ball_radius,
        };
        let tables = QuadTables::build();
        let f = |x: f64, y: f64| 1.0 + x * y;
        let sys_a = assemble(
            Arc::new(mesh),
            s(0.5),
            &f,
            &tables,
            AssemblyOptions::default(),
        )
        .unwrap();
        let sys_b = assemble(
            Arc::new(permuted),
            s(0.5),
            &f,
            &tables,
            AssemblyOptions::default(),
        )
        .unwrap();
        for i in 0..nn {
            assert_eq!(sys_a.b[i], sys_b.b[perm[i]]);
            for j in 0..nn {
                assert_eq!(sys_a.k_at(i, j), sys_b.k_at(perm[i], perm[j]));
            }
        }
    }
}
