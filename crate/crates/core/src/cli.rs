//! The `entropic` command-line front end.
//!
//! Exit status: 0 success, 1 validation failure, 2 numerical non-convergence,
//! 3 unparseable input or inconsistent dimensions.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use crate::curvature::{curvature_report, integrated_kappa, CurvatureConfig, CurvatureReport};
use crate::entropy::{decay_and_mlsi_check, entropy_curve, equilibration_horizon, heat_flow, uniform_grid, DEFAULT_FD_STEP, DEFAULT_GRID_POINTS, EQUILIBRIUM_TOL};
use crate::error::{Error, Result};
use crate::graph::{Direction, GeneratorPair, GraphFile};
use crate::interpolation::{EntropicInterpolation, DEFAULT_WINDOW};
use crate::schroedinger::{fg_transform, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::semigroup::bridge_marginal;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "entropic", version, about = "Entropic interpolations of Markov chains on finite graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arrow {
    Forward,
    Backward,
}

impl From<Arrow> for Direction {
    fn from(a: Arrow) -> Self {
        match a {
            Arrow::Forward => Direction::Forward,
            Arrow::Backward => Direction::Backward,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Graph JSON file.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output file (standard output when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for grid and multi-start loops.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Endpoints {
    /// Initial marginal (JSON array).
    #[arg(long, requires = "mu1", conflicts_with_all = ["f0", "g1"])]
    pub mu0: Option<PathBuf>,
    /// Final marginal (JSON array).
    #[arg(long, requires = "mu0")]
    pub mu1: Option<PathBuf>,
    /// Endpoint function f_0 (JSON array).
    #[arg(long, requires = "g1")]
    pub f0: Option<PathBuf>,
    /// Endpoint function g_1 (JSON array).
    #[arg(long, requires = "f0")]
    pub g1: Option<PathBuf>,
    /// Marginal residual for the Schrödinger solve.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct Optimizer {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
    /// Objective evaluations per restart.
    #[arg(long, default_value_t = 20_000)]
    pub max_evals: usize,
    #[arg(long, value_enum, default_value = "backward")]
    pub direction: Arrow,
}

impl Optimizer {
    fn config(&self) -> CurvatureConfig {
        CurvatureConfig { restarts: self.restarts, max_evals: self.max_evals, seed: self.seed, ..Default::default() }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a graph file; `--format json` re-emits it in normalized explicit form.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the Schrödinger system and emit ρ_t on a time grid.
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ends: Endpoints,
        /// Point count N or comma-separated times.
        #[arg(long)]
        t_grid: Option<String>,
    },
    /// Emit the entropy curve with analytic and finite-difference columns.
    Entropy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ends: Endpoints,
        #[arg(long)]
        t_grid: Option<String>,
        #[arg(long, default_value_t = DEFAULT_FD_STEP)]
        step: f64,
    },
    /// Heat flow from μ_0: entropy decay and entropy production.
    Heatflow {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mu0: PathBuf,
        /// Horizon T (spectral-gap sized when absent).
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        t_grid: Option<String>,
        #[arg(long, default_value_t = DEFAULT_FD_STEP)]
        step: f64,
    },
    /// Pointwise and integrated curvature estimates.
    Curvature {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        opt: Optimizer,
    },
    /// Decay and modified log-Sobolev checks along the heat flow from μ_0.
    Lsi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mu0: PathBuf,
        /// Curvature constant; estimated with the integrated search when absent.
        #[arg(long, conflicts_with = "kappa_file")]
        kappa: Option<f64>,
        /// Curvature report JSON whose `global_kappa` is used.
        #[arg(long)]
        kappa_file: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        t_grid: Option<String>,
        #[command(flatten)]
        opt: Optimizer,
    },
    /// Bridge marginals R^{xy}_t.
    Bridge {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x: usize,
        #[arg(long)]
        y: usize,
        #[arg(long)]
        t_grid: Option<String>,
    },
}

/// Parses `args` and runs; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = common(&cli.command).threads;
    let outcome = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli.command)),
            Err(e) => Err(Error::InvalidInput(format!("thread pool: {e}"))),
        },
        None => run(&cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        Error::InvalidInput(_) | Error::Dimension { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::TimeOutOfRange { .. } => EXIT_INPUT,
        _ => EXIT_VALIDATION,
    }
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Validate { common }
        | Command::Interpolate { common, .. }
        | Command::Entropy { common, .. }
        | Command::Heatflow { common, .. }
        | Command::Curvature { common, .. }
        | Command::Lsi { common, .. }
        | Command::Bridge { common, .. } => common,
    }
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Json(j) => Error::InvalidInput(format!("{}: {j}", path.display())),
        Error::Io(io) => Error::InvalidInput(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn read_text(path: &Path) -> Result<String> {
    with_path(path, fs::read_to_string(path).map_err(Error::from))
}

fn load_graph(path: &Path) -> Result<(GraphFile, GeneratorPair)> {
    let file = with_path(path, GraphFile::from_json(&read_text(path)?))?;
    let gen = file.build()?;
    Ok((file, gen))
}

fn load_vector(path: &Path, n: usize) -> Result<DVector<f64>> {
    let v: Vec<f64> = with_path(path, serde_json::from_str(&read_text(path)?).map_err(Error::from))?;
    if v.len() != n {
        return Err(Error::Dimension { expected: n, got: v.len() });
    }
    Ok(DVector::from_vec(v))
}

/// `N` (uniform points on `[lo, hi]`) or a comma-separated list.
pub fn parse_grid(spec: Option<&str>, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let spec = match spec {
        None => return Ok(uniform_grid(lo, hi, DEFAULT_GRID_POINTS)),
        Some(s) => s.trim(),
    };
    if let Ok(n) = spec.parse::<usize>() {
        if n == 0 {
            return Err(Error::InvalidInput("--t-grid needs at least one point".into()));
        }
        return Ok(uniform_grid(lo, hi, n));
    }
    let times = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("--t-grid: cannot parse `{s}` as a time"))))
        .collect::<Result<Vec<_>>>()?;
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("--t-grid must be strictly increasing".into()));
    }
    Ok(times)
}

fn interior_grid(spec: Option<&str>) -> Result<Vec<f64>> {
    let grid = parse_grid(spec, DEFAULT_WINDOW, 1.0 - DEFAULT_WINDOW)?;
    if let Some(&t) = grid.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: 1.0 });
    }
    Ok(grid)
}

fn build_interpolation(gen: GeneratorPair, ends: &Endpoints) -> Result<EntropicInterpolation> {
    let n = gen.len();
    match (&ends.mu0, &ends.mu1, &ends.f0, &ends.g1) {
        (Some(p0), Some(p1), _, _) => {
            let mu0 = load_vector(p0, n)?;
            let mu1 = load_vector(p1, n)?;
            let (interp, report) = EntropicInterpolation::between(gen, &mu0, &mu1, ends.tol, ends.max_iter)?;
            eprintln!("schroedinger system: {} iterations, residual {:e}", report.iterations, report.residual);
            Ok(interp)
        }
        (_, _, Some(pf), Some(pg)) => {
            let f0 = load_vector(pf, n)?;
            let g1 = load_vector(pg, n)?;
            let endpoint = fg_transform(&gen, &f0, &g1, true)?;
            EntropicInterpolation::new(gen, endpoint)
        }
        _ => Err(Error::InvalidInput("give either --mu0/--mu1 or --f0/--g1".into())),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn emit_table(out: Option<&Path>, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(open_out(out)?);
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Samples<'a> {
    grid: &'a [f64],
    values: &'a [Vec<f64>],
}

fn emit_samples(common: &Common, label: &str, grid: &[f64], values: &[Vec<f64>]) -> Result<()> {
    match common.format {
        Format::Json => emit_json(common.out.as_deref(), &Samples { grid, values }),
        Format::Csv => {
            let n = values.first().map_or(0, Vec::len);
            let mut header = vec!["t".to_string()];
            header.extend((0..n).map(|k| format!("{label}_{k}")));
            let rows = grid
                .iter()
                .zip(values)
                .map(|(&t, v)| std::iter::once(fmt(t)).chain(v.iter().map(|&x| fmt(x))).collect())
                .collect();
            emit_table(common.out.as_deref(), header, rows)
        }
    }
}

fn run(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Validate { common } => {
            let (_, gen) = load_graph(&common.graph)?;
            let report = gen.validate();
            match common.format {
                Format::Json => {
                    if report.passed {
                        emit_json(common.out.as_deref(), &GraphFile::from_generator(&gen))?;
                    }
                    for c in &report.checks {
                        eprintln!("{:<22} {:>5} residual {:e} (tol {:e})", c.name, if c.passed { "ok" } else { "FAIL" }, c.residual, c.tolerance);
                    }
                }
                Format::Csv => {
                    let header = ["check", "passed", "residual", "tolerance", "required"].map(String::from).to_vec();
                    let rows = report
                        .checks
                        .iter()
                        .map(|c| vec![c.name.clone(), c.passed.to_string(), fmt(c.residual), fmt(c.tolerance), c.required.to_string()])
                        .collect();
                    emit_table(common.out.as_deref(), header, rows)?;
                }
            }
            Ok(if report.passed { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::Interpolate { common, ends, t_grid } => {
            let (_, gen) = load_graph(&common.graph)?;
            let grid = interior_grid(t_grid.as_deref())?;
            let interp = build_interpolation(gen, ends)?;
            let values = grid.iter().map(|&t| Ok(interp.density_at(t)?.iter().copied().collect())).collect::<Result<Vec<Vec<f64>>>>()?;
            emit_samples(common, "rho", &grid, &values)?;
            Ok(EXIT_OK)
        }
        Command::Entropy { common, ends, t_grid, step } => {
            let (_, gen) = load_graph(&common.graph)?;
            let grid = interior_grid(t_grid.as_deref())?;
            let interp = build_interpolation(gen, ends)?;
            let curve = entropy_curve(&interp, Some(&grid), *step)?;
            match common.format {
                Format::Csv => {
                    let mut w = open_out(common.out.as_deref())?;
                    curve.write_csv(&mut w)?;
                    w.flush()?;
                }
                Format::Json => emit_json(common.out.as_deref(), &curve)?,
            }
            Ok(EXIT_OK)
        }
        Command::Heatflow { common, mu0, horizon, t_grid, step } => {
            let (_, gen) = load_graph(&common.graph)?;
            let mu0 = load_vector(mu0, gen.len())?;
            let horizon = match horizon {
                Some(t) => *t,
                None => equilibration_horizon(&gen, &mu0, EQUILIBRIUM_TOL)?.0.max(1.0),
            };
            let grid = parse_grid(t_grid.as_deref(), horizon / DEFAULT_GRID_POINTS as f64, horizon)?;
            let flow = heat_flow(&gen, &mu0, horizon, Some(&grid), *step)?;
            match common.format {
                Format::Csv => {
                    let mut w = open_out(common.out.as_deref())?;
                    flow.curve.write_csv(&mut w)?;
                    w.flush()?;
                }
                Format::Json => emit_json(common.out.as_deref(), &flow)?,
            }
            Ok(EXIT_OK)
        }
        Command::Curvature { common, opt } => {
            let (_, gen) = load_graph(&common.graph)?;
            let report = curvature_report(&gen, opt.direction.into(), &opt.config())?;
            match common.format {
                Format::Json => emit_json(common.out.as_deref(), &report)?,
                Format::Csv => {
                    let header = ["x", "kappa", "converged", "dispersion"].map(String::from).to_vec();
                    let rows = report
                        .per_vertex
                        .iter()
                        .map(|v| vec![v.x.to_string(), fmt(v.kappa), v.converged.to_string(), fmt(v.dispersion)])
                        .collect();
                    emit_table(common.out.as_deref(), header, rows)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Lsi { common, mu0, kappa, kappa_file, horizon, t_grid, opt } => {
            let (_, gen) = load_graph(&common.graph)?;
            let mu0 = load_vector(mu0, gen.len())?;
            let kappa = match (kappa, kappa_file) {
                (Some(k), _) => *k,
                (None, Some(path)) => {
                    let report: CurvatureReport = with_path(path, serde_json::from_str(&read_text(path)?).map_err(Error::from))?;
                    report.global_kappa
                }
                (None, None) => integrated_kappa(&gen, opt.direction.into(), &opt.config())?.kappa,
            };
            let horizon = match horizon {
                Some(t) => *t,
                None => equilibration_horizon(&gen, &mu0, EQUILIBRIUM_TOL)?.0.max(1.0),
            };
            let grid = parse_grid(t_grid.as_deref(), 0.0, horizon)?;
            let report = decay_and_mlsi_check(&gen, &mu0, kappa, horizon, Some(&grid))?;
            match common.format {
                Format::Json => emit_json(common.out.as_deref(), &report)?,
                Format::Csv => {
                    let header = ["check", "holds", "worst_slack", "worst_time", "violation_time"].map(String::from).to_vec();
                    let rows = report
                        .checks
                        .iter()
                        .map(|c| {
                            vec![c.name.clone(), c.holds.to_string(), fmt(c.worst_slack), fmt(c.worst_time), c.violation_time.map(fmt).unwrap_or_default()]
                        })
                        .collect();
                    emit_table(common.out.as_deref(), header, rows)?;
                }
            }
            Ok(if report.passed { EXIT_OK } else { EXIT_VALIDATION })
        }
        Command::Bridge { common, x, y, t_grid } => {
            let (_, gen) = load_graph(&common.graph)?;
            let grid = interior_grid(t_grid.as_deref())?;
            let values = grid.iter().map(|&t| Ok(bridge_marginal(&gen, *x, *y, t)?.iter().copied().collect())).collect::<Result<Vec<Vec<f64>>>>()?;
            emit_samples(common, "p", &grid, &values)?;
            Ok(EXIT_OK)
        }
    }
}
