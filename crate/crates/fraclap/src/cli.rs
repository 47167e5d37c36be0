//! Command-line front end: mesh generation, solving, convergence studies.

use crate::analytic::{
    convergence_study, energy_error, l2_error, write_rates_csv, AnalyticError, ExactSolution,
    StudyParams,
};
use crate::assembly::{assemble, AssemblyError, AssemblyOptions};
use crate::kernels::{FractionalOrder, KernelError};
use crate::mesh::gen::generate_disk_mesh;
use crate::mesh::io::{load_mesh, write_mesh};
use crate::mesh::{Mesh, MeshError};
use crate::quadtables::QuadTables;
use crate::solver::{
    condition_estimate, sample_grid, solve, write_solution_csv, SolveError, SolverMethod,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Parser, Debug)]
#[command(name = "fraclap", version, about = "FE solver for the fractional Laplacian on a disk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a disk mesh with an auxiliary annulus and write it to a file.
    Meshgen(MeshgenArgs),
    /// Assemble and solve one problem, writing the solution as CSV.
    Solve(SolveArgs),
    /// Run a refinement ladder and report convergence rates.
    Converge(ConvergeArgs),
    /// Write all quadrature tables as CSV files.
    DumpTables(DumpTablesArgs),
}

#[derive(Args, Debug)]
pub struct MeshgenArgs {
    /// Domain radius.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Target mesh size.
    #[arg(long = "h")]
    pub target_h: f64,
    /// Enclosing ball radius.
    #[arg(long, default_value_t = 1.1)]
    pub ball: f64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum RhsKind {
    /// f identically 1.
    One,
    /// f = lambda_{k,s} P_k^{(s,0)}(2 r^2 - 1).
    Jacobi,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum SolverKind {
    Cholesky,
    Cg,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Fractional order in (0,1).
    #[arg(long)]
    pub s: f64,
    /// Mesh file (FRACMESH format); mutually exclusive with the generator.
    #[arg(long, conflicts_with_all = ["radius", "target_h", "ball"])]
    pub mesh: Option<PathBuf>,
    #[arg(long, requires = "target_h", default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long = "h")]
    pub target_h: Option<f64>,
    #[arg(long, default_value_t = 1.1)]
    pub ball: f64,
    #[arg(long, value_enum, default_value_t = RhsKind::One)]
    pub f: RhsKind,
    /// Jacobi profile index for --f jacobi.
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = SolverKind::Cholesky)]
    pub solver: SolverKind,
    /// CG relative residual tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Deterministic parallel reduction (on by default; assembly is
    /// bit-reproducible for any thread count either way).
    #[arg(long, default_value_t = true)]
    pub deterministic: bool,
    /// Write K and b as CSV (refused above 2000 nodes).
    #[arg(long)]
    pub dump_matrix: Option<PathBuf>,
    /// Write all quadrature tables as CSV into this directory.
    #[arg(long)]
    pub dump_tables: Option<PathBuf>,
    /// Report a condition-number estimate of the free block.
    #[arg(long, default_value_t = false)]
    pub condition: bool,
    /// Solution CSV output path.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also sample the solution on an n x n grid (written next to --output).
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ConvergeArgs {
    #[arg(long)]
    pub s: f64,
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    /// Comma-separated mesh sizes, decreasing.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.025])]
    pub sizes: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 1.1)]
    pub ball: f64,
    /// Drop this many coarsest levels from the slope fit.
    #[arg(long, default_value_t = 0)]
    pub drop_coarsest: usize,
    #[arg(long, value_enum, default_value_t = SolverKind::Cholesky)]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Expected L2 slope in h; exits nonzero when outside the band.
    #[arg(long)]
    pub expect_l2: Option<f64>,
    #[arg(long, default_value_t = 0.10)]
    pub band_l2: f64,
    /// Expected energy slope in h; exits nonzero when outside the band.
    #[arg(long)]
    pub expect_energy: Option<f64>,
    #[arg(long, default_value_t = 0.07)]
    pub band_energy: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DumpTablesArgs {
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("slope {slope:.3} outside band {expect:.3} +/- {band:.3} ({which})")]
    SlopeOutOfBand {
        which: &'static str,
        slope: f64,
        expect: f64,
        band: f64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 usage, 2 validation, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Mesh(_) | CliError::Io(_) => 2,
            CliError::Kernel(KernelError::InvalidOrder(_)) => 2,
            CliError::Kernel(_) => 3,
            CliError::Assembly(AssemblyError::MemoryCap { .. }) => 2,
            CliError::Assembly(AssemblyError::DumpTooLarge { .. }) => 2,
            CliError::Assembly(_) => 3,
            CliError::Solve(_) => 3,
            CliError::Analytic(AnalyticError::InvalidParameter(_)) => 2,
            CliError::Analytic(AnalyticError::TooFewSizes(_)) => 1,
            CliError::Analytic(_) => 3,
            CliError::SlopeOutOfBand { .. } => 3,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Meshgen(args) => cmd_meshgen(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Converge(args) => cmd_converge(args),
        Command::DumpTables(args) => {
            QuadTables::build().dump_csv(&args.output)?;
            println!("tables written to {}", args.output.display());
            Ok(())
        }
    }
}

fn cmd_meshgen(args: MeshgenArgs) -> Result<(), CliError> {
    let mesh = generate_disk_mesh(args.radius, args.target_h, args.ball)?;
    write_mesh(&mesh, &args.output)?;
    println!(
        "mesh written to {}: {} nodes, {} domain triangles, {} auxiliary",
        args.output.display(),
        mesh.n_nodes(),
        mesh.n_domain(),
        mesh.n_aux
    );
    Ok(())
}

/// Boundary nodes all on the unit circle means the exact disk solutions apply.
fn is_unit_disk(mesh: &Mesh) -> bool {
    !mesh.boundary_nodes.is_empty()
        && mesh.boundary_nodes.iter().all(|&b| {
            let p = mesh.nodes[b];
            ((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() < 1e-9
        })
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let tables = QuadTables::build();
    if let Some(dir) = &args.dump_tables {
        tables.dump_csv(dir)?;
        println!("tables written to {}", dir.display());
    }

    let mesh = match (&args.mesh, args.target_h) {
        (Some(path), None) => load_mesh(path)?,
        (None, Some(h)) => generate_disk_mesh(args.radius, h, args.ball)?,
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "give either --mesh or --h, not both".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Usage(
                "a mesh source is required: --mesh <file> or --h <size>".into(),
            ))
        }
    };
    let mesh = Arc::new(mesh);
    let s = FractionalOrder::new(args.s)?;

    let exact = match args.f {
        RhsKind::One => Some(ExactSolution::unit_rhs(s)),
        RhsKind::Jacobi => Some(ExactSolution::jacobi_pair(args.k, s)),
    }
    .filter(|_| is_unit_disk(&mesh));
    let rhs: Box<dyn Fn(f64, f64) -> f64 + Sync> = match args.f {
        RhsKind::One => Box::new(|_, _| 1.0),
        RhsKind::Jacobi => {
            let e = ExactSolution::jacobi_pair(args.k, s);
            Box::new(move |x, y| e.f(x, y))
        }
    };

    println!(
        "mesh: {} nodes, {} domain triangles, {} auxiliary, R = {}",
        mesh.n_nodes(),
        mesh.n_domain(),
        mesh.n_aux,
        mesh.ball_radius
    );
    let t0 = std::time::Instant::now();
    let system = assemble(
        mesh.clone(),
        s,
        &rhs,
        &tables,
        AssemblyOptions {
            threads: args.threads,
            ..Default::default()
        },
    )?;
    let st = &system.stats;
    println!(
        "assembly: {:.2}s total (disjoint {:.2}s / {} pairs, edge {:.2}s / {}, vertex {:.2}s / {}, identical {:.2}s, complement {:.2}s)",
        t0.elapsed().as_secs_f64(),
        st.time_disjoint.as_secs_f64(),
        st.n_disjoint_pairs,
        st.time_edge.as_secs_f64(),
        st.n_edge_pairs,
        st.time_vertex.as_secs_f64(),
        st.n_vertex_pairs,
        st.time_identical.as_secs_f64(),
        st.time_complement.as_secs_f64(),
    );
    println!("min disjoint-pair distance: {:.3e}", st.min_pair_distance);

    if let Some(path) = &args.dump_matrix {
        system.dump_csv(path)?;
        println!("matrix written to {}", path.display());
    }

    let method = match args.solver {
        SolverKind::Cholesky => SolverMethod::Cholesky,
        SolverKind::Cg => SolverMethod::Cg {
            tol: args.tol,
            max_iter: 50_000,
        },
    };
    let solution = solve(&system, method)?;
    match solution.iterations {
        Some(it) => println!(
            "solve: cg converged in {it} iterations, residual {:.3e}",
            solution.residual
        ),
        None => println!("solve: cholesky residual {:.3e}", solution.residual),
    }

    if args.condition {
        if let Some(c) = condition_estimate(&system) {
            println!("condition estimate of K_ff: {c:.3e}");
        }
    }

    if let Some(exact) = &exact {
        let l2 = l2_error(&mesh, &solution.values, exact, &tables);
        let en = energy_error(&system, &solution, exact)?;
        println!("errors vs exact solution: L2 {l2:.6e}, energy {en:.6e}");
    }

    if let Some(out) = &args.output {
        write_solution_csv(&mesh, &solution, out)?;
        println!("solution written to {}", out.display());
        if let Some(n) = args.grid {
            use std::io::Write;
            let mut gpath = out.clone();
            let ext = gpath
                .extension()
                .map(|e| format!("grid.{}", e.to_string_lossy()))
                .unwrap_or_else(|| "grid.csv".into());
            gpath.set_extension(ext);
            let mut f = std::io::BufWriter::new(std::fs::File::create(&gpath)?);
            writeln!(f, "x,y,u")?;
            for (x, y, u) in sample_grid(&mesh, &solution.values, n) {
                writeln!(f, "{x},{y},{u}")?;
            }
            println!("grid written to {}", gpath.display());
        }
    }
    Ok(())
}

fn cmd_converge(args: ConvergeArgs) -> Result<(), CliError> {
    if args.sizes.len() < 3 {
        return Err(CliError::Usage(format!(
            "need at least 3 mesh sizes, got {}",
            args.sizes.len()
        )));
    }
    let mut params = StudyParams::new(args.s, args.k, args.sizes.clone());
    params.domain_radius = args.radius;
    params.ball_radius = args.ball;
    params.drop_coarsest = args.drop_coarsest;
    params.threads = args.threads;
    params.method = match args.solver {
        SolverKind::Cholesky => SolverMethod::Cholesky,
        SolverKind::Cg => SolverMethod::Cg {
            tol: args.tol,
            max_iter: 50_000,
        },
    };
    let table = convergence_study(&params)?;
    println!("h,dofs,l2_error,energy_error");
    for r in &table.rows {
        println!("{},{},{:.6e},{:.6e}", r.h, r.dofs, r.l2, r.energy);
    }
    println!(
        "slopes vs h:    L2 {:.3}, energy {:.3}",
        table.slope_h_l2, table.slope_h_energy
    );
    println!(
        "slopes vs dofs: L2 {:.3}, energy {:.3}",
        table.slope_dofs_l2, table.slope_dofs_energy
    );
    if let Some(out) = &args.output {
        write_rates_csv(&table, out)?;
        println!("rates written to {}", out.display());
    }
    if let Some(expect) = args.expect_l2 {
        if (table.slope_h_l2 - expect).abs() > args.band_l2 {
            return Err(CliError::SlopeOutOfBand {
                which: "l2",
                slope: table.slope_h_l2,
                expect,
                band: args.band_l2,
            });
        }
    }
    if let Some(expect) = args.expect_energy {
        if (table.slope_h_energy - expect).abs() > args.band_energy {
            return Err(CliError::SlopeOutOfBand {
                which: "energy",
                slope: table.slope_h_energy,
                expect,
                band: args.band_energy,
            });
        }
    }
    Ok(())
}
