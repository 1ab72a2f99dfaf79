//! The curvature condition `Θ₂ ≥ κΘ` and numerical estimates of the pointwise
//! functional `inf_u Θ₂u(x)/Θu(x)` and of its integrated counterpart.
//!
//! Estimates come from a multi-start Nelder–Mead search followed by a
//! coordinate-wise golden-section polish; they are upper bounds on the true
//! infimum, witnessed by the returned test vector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Direction, GeneratorPair, JumpKernel};
use crate::theta::{theta2_at, theta2_op, theta_at, theta_op};

/// Denominators below this are treated as the degenerate set `Θu = 0`.
const DEGENERATE: f64 = 1e-300;

/// Optimizer settings shared by the pointwise and integrated searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureConfig {
    pub restarts: usize,
    /// Start amplitudes cycled over restarts; starts are uniform in `[-a, a]^d`.
    pub start_amplitudes: Vec<f64>,
    /// Hard box `‖u‖_∞ ≤ amplitude_box` on the search variables.
    pub amplitude_box: f64,
    /// Objective evaluations per restart.
    pub max_evals: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub polish_sweeps: usize,
    pub seed: u64,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        CurvatureConfig {
            restarts: 32,
            start_amplitudes: vec![0.1, 1.0, 3.0],
            amplitude_box: 10.0,
            max_evals: 20_000,
            ftol: 1e-12,
            xtol: 1e-10,
            polish_sweeps: 4,
            seed: 0,
        }
    }
}

impl CurvatureConfig {
    fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidInput("at least one restart is required".into()));
        }
        if self.start_amplitudes.is_empty() || self.start_amplitudes.iter().any(|&a| !(a > 0.0 && a <= self.amplitude_box)) {
            return Err(Error::InvalidInput("start amplitudes must lie in (0, amplitude_box]".into()));
        }
        if !(self.amplitude_box > 0.0 && self.amplitude_box.is_finite()) {
            return Err(Error::InvalidInput("amplitude box must be positive".into()));
        }
        Ok(())
    }
}

/// `Θ₂u(x) − κΘu(x)` at every vertex.
pub fn check_pointwise_inequality(gen: &GeneratorPair, dir: Direction, u: &DVector<f64>, kappa: f64) -> Result<DVector<f64>> {
    let kernel = gen.kernel(dir);
    Ok(theta2_op(kernel, u)? - theta_op(kernel, u)? * kappa)
}

/// Outcome of one minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub kappa: f64,
    pub converged: bool,
    /// Minimizing test vector over all states.
    pub witness_u: Vec<f64>,
    /// Best ratio after each restart (nonincreasing).
    pub trace: Vec<f64>,
    /// Spread `max − min` of the finite per-restart optima.
    pub dispersion: f64,
    pub evaluations: usize,
}

/// Ratio `Θ₂u(x)/Θu(x)`; `+∞` on the degenerate set.
pub fn pointwise_ratio(kernel: &JumpKernel, u: &DVector<f64>, x: usize) -> f64 {
    let den = theta_at(kernel, u, x);
    if !(den > DEGENERATE) {
        return f64::INFINITY;
    }
    theta2_at(kernel, u, x) / den
}

/// `ΣΘ₂(u) e^u m / ΣΘ(u) e^u m`, the integrated ratio weighted by `μ = e^u m`.
pub fn integrated_ratio(kernel: &JumpKernel, m: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let shift = u.max();
    let mut num = 0.0;
    let mut den = 0.0;
    for x in 0..kernel.len() {
        let w = m[x] * (u[x] - shift).exp();
        num += theta2_at(kernel, u, x) * w;
        den += theta_at(kernel, u, x) * w;
    }
    if !(den > DEGENERATE) {
        return f64::INFINITY;
    }
    num / den
}

/// Estimates `curv(x) = inf_u Θ₂u(x)/Θu(x)` over `u` supported on the closed
/// 2-ball of `x`, gauge `u(x) = 0`.
pub fn pointwise_curvature(gen: &GeneratorPair, dir: Direction, x: usize, config: &CurvatureConfig) -> Result<CurvatureEstimate> {
    config.validate()?;
    let n = gen.len();
    if x >= n {
        return Err(Error::InvalidInput(format!("vertex {x} out of range (n = {n})")));
    }
    let kernel = gen.kernel(dir);
    let support: Vec<usize> = gen.space().ball(x, 2).into_iter().filter(|&y| y != x).collect();
    let embed = |v: &[f64]| {
        let mut u = DVector::zeros(n);
        for (&y, &val) in support.iter().zip(v) {
            u[y] = val;
        }
        u
    };
    let objective = |v: &[f64]| pointwise_ratio(kernel, &embed(v), x);
    let est = multistart(&objective, support.len(), config, x as u64, &[])?;
    Ok(finish(est, |v| embed(v)))
}

/// Estimates the integrated constant `inf_u ΣΘ₂(u)μ / ΣΘ(u)μ` with `μ = e^u m`.
/// The witness is reported in the mean-zero gauge.
pub fn integrated_kappa(gen: &GeneratorPair, dir: Direction, config: &CurvatureConfig) -> Result<CurvatureEstimate> {
    config.validate()?;
    let n = gen.len();
    let kernel = gen.kernel(dir);
    let m = gen.measure().normalized().weights().clone();
    let embed = |v: &[f64]| {
        let mut u = DVector::zeros(n);
        for (k, &val) in v.iter().enumerate() {
            u[k + 1] = val;
        }
        let mean = u.mean();
        u.add_scalar(-mean)
    };
    let objective = |v: &[f64]| integrated_ratio(kernel, &m, &embed(v));
    let shapes: Vec<Vec<f64>> = low_modes(gen, &m, 2).iter().map(|v| (1..n).map(|k| v[k] - v[0]).collect()).collect();
    let est = multistart(&objective, n - 1, config, u64::MAX, &shapes)?;
    Ok(finish(est, |v| embed(v)))
}

/// Lowest nonconstant eigenmodes of `(L→ + L←)/2` in `L²(m)`; smooth starts
/// for the integrated search on long graphs.
fn low_modes(gen: &GeneratorPair, m: &DVector<f64>, count: usize) -> Vec<DVector<f64>> {
    let n = gen.len();
    let sym = (gen.generator(Direction::Forward) + gen.generator(Direction::Backward)) * 0.5;
    let sq = m.map(f64::sqrt);
    let s = DMatrix::from_fn(n, n, |i, j| sq[i] * sym[(i, j)] / sq[j]);
    let eig = SymmetricEigen::new((&s + s.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order.iter().skip(1).take(count).map(|&k| eig.eigenvectors.column(k).component_div(&sq)).collect()
}

struct RawEstimate {
    best: f64,
    best_x: Vec<f64>,
    converged: bool,
    trace: Vec<f64>,
    dispersion: f64,
    evaluations: usize,
}

fn finish(raw: RawEstimate, embed: impl Fn(&[f64]) -> DVector<f64>) -> CurvatureEstimate {
    CurvatureEstimate {
        kappa: raw.best,
        converged: raw.converged,
        witness_u: embed(&raw.best_x).iter().copied().collect(),
        trace: raw.trace,
        dispersion: raw.dispersion,
        evaluations: raw.evaluations,
    }
}

fn stream_seed(seed: u64, tag: u64, restart: usize) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (restart as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct RunResult {
    f: f64,
    x: Vec<f64>,
    converged: bool,
    evals: usize,
}

/// Restart `r < shapes.len()` starts from `shapes[r]` rescaled to the restart
/// amplitude; the others start uniformly at random.
fn multistart<F>(objective: &F, dim: usize, config: &CurvatureConfig, tag: u64, shapes: &[Vec<f64>]) -> Result<RawEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if dim == 0 {
        return Err(Error::InvalidInput("no free coordinates to optimize over".into()));
    }
    let bound = config.amplitude_box;
    let boxed = |v: &[f64]| if v.iter().all(|c| c.abs() <= bound) { objective(v) } else { f64::INFINITY };
    let runs: Vec<RunResult> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, tag, r));
            let amp = config.start_amplitudes[r % config.start_amplitudes.len()];
            let mut x0: Vec<f64> = match shapes.get(r) {
                Some(shape) => {
                    let top = norm_inf(shape).max(f64::MIN_POSITIVE);
                    shape.iter().map(|v| amp * v / top).collect()
                }
                None => (0..dim).map(|_| rng.random_range(-amp..=amp)).collect(),
            };
            // A start on the degenerate set is nudged until it is evaluable.
            let mut tries = 0;
            while !boxed(&x0).is_finite() && tries < 100 {
                x0 = (0..dim).map(|_| rng.random_range(-amp..=amp)).collect();
                tries += 1;
            }
            let nm = nelder_mead(&boxed, x0, amp, config);
            let (x, f, polish_evals) = polish(&boxed, nm.x, nm.f, config);
            RunResult { f, x, converged: nm.converged, evals: nm.evals + polish_evals }
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut best_idx = 0;
    let mut trace = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        if run.f < best {
            best = run.f;
            best_idx = i;
        }
        trace.push(best);
    }
    if !best.is_finite() {
        return Err(Error::NonConvergence { iterations: config.max_evals, residual: f64::INFINITY });
    }
    let finite: Vec<f64> = runs.iter().map(|r| r.f).filter(|f| f.is_finite()).collect();
    let dispersion = finite.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - best;
    Ok(RawEstimate {
        best,
        best_x: runs[best_idx].x.clone(),
        converged: runs[best_idx].converged,
        trace,
        dispersion,
        evaluations: runs.iter().map(|r| r.evals).sum(),
    })
}

struct NmResult {
    x: Vec<f64>,
    f: f64,
    converged: bool,
    evals: usize,
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: Vec<f64>, scale: f64, config: &CurvatureConfig) -> NmResult {
    let dim = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        f(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let f0 = eval(&x0);
    simplex.push((x0.clone(), f0));
    for i in 0..dim {
        let mut x = x0.clone();
        let step = 0.25 * scale.max(x0[i].abs());
        x[i] += step;
        let mut fx = eval(&x);
        if !fx.is_finite() {
            x[i] = x0[i] - step;
            fx = eval(&x);
        }
        simplex.push((x, fx));
    }
    let mut converged = false;
    let mut stable = 0;
    while evals.get() < config.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (fbest, fworst) = (simplex[0].1, simplex[dim].1);
        let size = simplex[1..].iter().flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        let flat = fbest.is_finite() && (fworst - fbest).abs() <= config.ftol * fbest.abs().max(1.0);
        stable = if flat { stable + 1 } else { 0 };
        // A value that stays flat while the simplex drifts along a valley counts as stabilized.
        if flat && (size <= config.xtol * (1.0 + norm_inf(&simplex[0].0)) || stable > 10 * (dim + 1)) {
            converged = true;
            break;
        }
        if size == 0.0 {
            converged = fbest.is_finite();
            break;
        }
        let centroid: Vec<f64> = (0..dim).map(|k| simplex[..dim].iter().map(|(x, _)| x[k]).sum::<f64>() / dim as f64).collect();
        let towards = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[dim].0).map(|(c, w)| c + t * (w - c)).collect() };
        let xr = towards(-1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = towards(-2.0);
            let fe = eval(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[dim].1 {
            let xc = towards(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = towards(0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < simplex[dim].1.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&entry.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let fx = eval(&x);
            *entry = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NmResult { x, f, converged, evals: evals.get() }
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

/// Coordinate-wise golden-section refinement around `x`.
fn polish<F: Fn(&[f64]) -> f64>(f: &F, mut x: Vec<f64>, mut fx: f64, config: &CurvatureConfig) -> (Vec<f64>, f64, usize) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut evals = 0;
    for _ in 0..config.polish_sweeps {
        let before = fx;
        for k in 0..x.len() {
            let radius = 1e-2 * (1.0 + x[k].abs());
            let mut probe = x.clone();
            let mut at = |t: f64| {
                probe[k] = t;
                evals += 1;
                f(&probe)
            };
            let (mut a, mut b) = (x[k] - radius, x[k] + radius);
            let mut c = b - INV_PHI * (b - a);
            let mut d = a + INV_PHI * (b - a);
            let (mut fc, mut fd) = (at(c), at(d));
            for _ in 0..60 {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - INV_PHI * (b - a);
                    fc = at(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + INV_PHI * (b - a);
                    fd = at(d);
                }
            }
            let (t, ft) = if fc < fd { (c, fc) } else { (d, fd) };
            if ft < fx {
                x[k] = t;
                fx = ft;
            }
        }
        if !(fx < before) {
            break;
        }
    }
    (x, fx, evals)
}

/// Per-vertex record of a [`CurvatureReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexCurvature {
    pub x: usize,
    pub kappa: f64,
    pub converged: bool,
    pub witness_u: Vec<f64>,
    pub dispersion: f64,
    pub trace: Vec<f64>,
}

/// Pointwise estimates at every vertex plus the integrated constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub direction: String,
    pub per_vertex: Vec<VertexCurvature>,
    pub min_kappa: f64,
    pub global_kappa: f64,
    pub global_converged: bool,
    pub global_witness_u: Vec<f64>,
    pub config: CurvatureConfig,
    pub evaluations: usize,
}

/// Runs [`pointwise_curvature`] at every vertex and [`integrated_kappa`].
pub fn curvature_report(gen: &GeneratorPair, dir: Direction, config: &CurvatureConfig) -> Result<CurvatureReport> {
    let per_vertex = (0..gen.len())
        .into_par_iter()
        .map(|x| {
            let e = pointwise_curvature(gen, dir, x, config)?;
            Ok((
                VertexCurvature { x, kappa: e.kappa, converged: e.converged, witness_u: e.witness_u, dispersion: e.dispersion, trace: e.trace },
                e.evaluations,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let global = integrated_kappa(gen, dir, config)?;
    let evaluations = per_vertex.iter().map(|(_, e)| e).sum::<usize>() + global.evaluations;
    let per_vertex: Vec<VertexCurvature> = per_vertex.into_iter().map(|(v, _)| v).collect();
    Ok(CurvatureReport {
        direction: match dir {
            Direction::Forward => "forward".into(),
            Direction::Backward => "backward".into(),
        },
        min_kappa: per_vertex.iter().map(|v| v.kappa).fold(f64::INFINITY, f64::min),
        per_vertex,
        global_kappa: global.kappa,
        global_converged: global.converged,
        global_witness_u: global.witness_u,
        config: config.clone(),
        evaluations,
    })
}
