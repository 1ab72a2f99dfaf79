//! Relative entropy along interpolations and heat flows: analytic first and
//! second derivatives, entropy productions, Fisher information, decay checks
//! and a finite-difference oracle.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Direction, GeneratorPair};
use crate::interpolation::EntropicInterpolation;
use crate::schroedinger::check_probability;
use crate::semigroup::Semigroup;
use crate::theta::{h, theta2_op, theta_op};

/// Step of the central-difference oracle.
pub const DEFAULT_FD_STEP: f64 = 1e-4;
/// Number of points of the default derivative grid.
pub const DEFAULT_GRID_POINTS: usize = 101;
/// Entropy level targeted by [`equilibration_horizon`].
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
/// Relative slack tolerated by [`decay_and_mlsi_check`] before flagging a violation.
pub const DECAY_SLACK_TOL: f64 = 1e-12;
/// Absolute round-off floor for the same comparison.
pub const DECAY_ABS_TOL: f64 = 1e-14;

/// `H(μ|m) = Σ μ log(μ/m)` with `0 log 0 = 0`; `+∞` if μ charges an `m`-null state.
pub fn relative_entropy(mu: &DVector<f64>, m: &DVector<f64>) -> f64 {
    mu.iter()
        .zip(m.iter())
        .map(|(&p, &r)| {
            if p == 0.0 {
                0.0
            } else if r <= 0.0 {
                f64::INFINITY
            } else {
                p * (p / r).ln()
            }
        })
        .sum()
}

/// `H(t) = H(μ_t|m)`.
pub fn entropy_at(interp: &EntropicInterpolation, t: f64) -> Result<f64> {
    let rho = interp.density_at(t)?;
    let m = interp.generator().m();
    Ok(density_entropy(&rho, m))
}

fn density_entropy(rho: &DVector<f64>, m: &DVector<f64>) -> f64 {
    rho.iter().zip(m.iter()).map(|(&r, &w)| if r > 0.0 { w * r * r.ln() } else { 0.0 }).sum()
}

/// `Σ m (ρ log ρ - ρ + 1)` for a probability `m`: equal to [`density_entropy`]
/// when `Σ mρ = 1`, but with nonnegative terms and no first-order sensitivity
/// to round-off in the total mass, which matters close to equilibrium.
fn bregman_entropy(rho: &DVector<f64>, m: &DVector<f64>) -> f64 {
    rho.iter()
        .zip(m.iter())
        .map(|(&r, &w)| w * if r > 0.0 { r * r.ln() - r + 1.0 } else { 1.0 })
        .sum()
}

/// Analytic entropy derivatives and productions at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyDerivatives {
    pub d_h: f64,
    pub d2_h: f64,
    pub i_fwd: f64,
    pub i_bwd: f64,
}

/// `H′ = Σ(Θ→ψ − Θ←φ)μ`, `H″ = Σ(Θ₂→ψ + Θ₂←φ)μ`, `I→ = ΣΘ→ψ μ`, `I← = ΣΘ←φ μ`.
pub fn entropy_derivatives(interp: &EntropicInterpolation, t: f64) -> Result<EntropyDerivatives> {
    interp.check_interior(t)?;
    let gen = interp.generator();
    let (phi, psi) = interp.potentials_at(t)?;
    let mu = interp.measure_at(t)?;
    let fwd = gen.kernel(Direction::Forward);
    let bwd = gen.kernel(Direction::Backward);
    let i_fwd = theta_op(fwd, &psi)?.dot(&mu);
    let i_bwd = theta_op(bwd, &phi)?.dot(&mu);
    let d2_h = (theta2_op(fwd, &psi)? + theta2_op(bwd, &phi)?).dot(&mu);
    Ok(EntropyDerivatives { d_h: i_fwd - i_bwd, d2_h, i_fwd, i_bwd })
}

/// Central differences of `f` at `t`: `(f′, f″)`. With `richardson`, one
/// extrapolation level combines steps `δ` and `2δ`.
pub fn finite_difference_oracle<F>(f: F, t: f64, step: f64, richardson: bool) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("finite-difference step {step} must be positive")));
    }
    let central = |d: f64| -> Result<(f64, f64)> {
        let fp = f(t + d)?;
        let fm = f(t - d)?;
        let f0 = f(t)?;
        Ok(((fp - fm) / (2.0 * d), (fp - 2.0 * f0 + fm) / (d * d)))
    };
    let (d1, d2) = central(step)?;
    if !richardson {
        return Ok((d1, d2));
    }
    let (e1, e2) = central(2.0 * step)?;
    Ok(((4.0 * d1 - e1) / 3.0, (4.0 * d2 - e2) / 3.0))
}

/// Oracle derivatives of `H` along an interpolation; the stencil must stay in `(0,1)`.
pub fn entropy_fd(interp: &EntropicInterpolation, t: f64, step: f64) -> Result<(f64, f64)> {
    let reach = 2.0 * step;
    if !(t - reach > 0.0 && t + reach < 1.0) {
        return Err(Error::InvalidInput(format!(
            "finite-difference stencil [{}, {}] leaves (0, 1)",
            t - reach,
            t + reach
        )));
    }
    finite_difference_oracle(|s| entropy_at(interp, s), t, step, true)
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        // The last point is pinned: `lo + (hi - lo)` can round past `hi`.
        _ => (0..n).map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect(),
    }
}

/// Sampled entropy curve with analytic and oracle derivative columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EntropyCurve {
    pub grid: Vec<f64>,
    pub h: Vec<f64>,
    pub d_h: Vec<f64>,
    pub d2_h: Vec<f64>,
    pub d_h_fd: Vec<f64>,
    pub d2_h_fd: Vec<f64>,
    pub i_fwd: Vec<f64>,
    pub i_bwd: Vec<f64>,
}

#[derive(Serialize)]
struct CurveRow {
    t: String,
    #[serde(rename = "H")]
    h: String,
    #[serde(rename = "dH")]
    d_h: String,
    #[serde(rename = "d2H")]
    d2_h: String,
    #[serde(rename = "dH_fd")]
    d_h_fd: String,
    #[serde(rename = "d2H_fd")]
    d2_h_fd: String,
    #[serde(rename = "I_fwd")]
    i_fwd: String,
    #[serde(rename = "I_bwd")]
    i_bwd: String,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

struct Sample {
    h: f64,
    der: EntropyDerivatives,
    fd: (f64, f64),
}

impl EntropyCurve {
    fn from_samples(grid: Vec<f64>, samples: Vec<Sample>) -> Self {
        let mut c = EntropyCurve { grid, ..Default::default() };
        for s in samples {
            c.h.push(s.h);
            c.d_h.push(s.der.d_h);
            c.d2_h.push(s.der.d2_h);
            c.d_h_fd.push(s.fd.0);
            c.d2_h_fd.push(s.fd.1);
            c.i_fwd.push(s.der.i_fwd);
            c.i_bwd.push(s.der.i_bwd);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Largest `|dH − dH_fd| / max(1, |dH|)` over the grid.
    pub fn max_first_derivative_error(&self) -> f64 {
        rel_gap(&self.d_h, &self.d_h_fd)
    }

    /// Largest `|d2H − d2H_fd| / max(1, |d2H|)` over the grid.
    pub fn max_second_derivative_error(&self) -> f64 {
        rel_gap(&self.d2_h, &self.d2_h_fd)
    }

    /// Writes the curve as CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for k in 0..self.len() {
            w.serialize(CurveRow {
                t: fmt17(self.grid[k]),
                h: fmt17(self.h[k]),
                d_h: fmt17(self.d_h[k]),
                d2_h: fmt17(self.d2_h[k]),
                d_h_fd: fmt17(self.d_h_fd[k]),
                d2_h_fd: fmt17(self.d2_h_fd[k]),
                i_fwd: fmt17(self.i_fwd[k]),
                i_bwd: fmt17(self.i_bwd[k]),
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs() / x.abs().max(1.0)).fold(0.0, f64::max)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Entropy curve along an interpolation; `None` uses 101 points on `[δ, 1−δ]`.
pub fn entropy_curve(interp: &EntropicInterpolation, grid: Option<&[f64]>, step: f64) -> Result<EntropyCurve> {
    let delta = interp.window();
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => uniform_grid(delta, 1.0 - delta, DEFAULT_GRID_POINTS),
    };
    check_grid(&grid)?;
    for &t in &grid {
        interp.check_interior(t)?;
    }
    // Near the window edge the stencil is shrunk to fit.
    let samples = grid
        .par_iter()
        .map(|&t| {
            let s = step.min(t.min(1.0 - t) / 4.0);
            Ok(Sample { h: entropy_at(interp, t)?, der: entropy_derivatives(interp, t)?, fd: entropy_fd(interp, t, s)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EntropyCurve::from_samples(grid, samples))
}

/// `I(μ|m) = ½ Σ (ρ_y − ρ_x)(log ρ_y − log ρ_x) m_x J_x(y)` and the
/// non-reversible functional `𝓘(μ|m) = Σ Θ←(log ρ) μ`, with `ρ = μ/m`.
///
/// `I` does not depend on the arrow: by duality both kernels give the same sum.
pub fn fisher_information(gen: &GeneratorPair, mu: &DVector<f64>) -> Result<(f64, f64)> {
    if mu.len() != gen.len() {
        return Err(Error::Dimension { expected: gen.len(), got: mu.len() });
    }
    let m = gen.m();
    let rho = mu.component_div(m);
    Ok((fisher_reversible(gen, &rho), fisher_production(gen, &rho)))
}

fn fisher_reversible(gen: &GeneratorPair, rho: &DVector<f64>) -> f64 {
    let m = gen.m();
    let kernel = gen.kernel(Direction::Forward);
    let mut total = 0.0;
    for x in 0..gen.len() {
        for &(y, j) in kernel.neighbors(x) {
            let (a, b) = (rho[x], rho[y]);
            let term = if a == b {
                0.0
            } else if a == 0.0 || b == 0.0 {
                f64::INFINITY
            } else {
                (b - a) * (b.ln() - a.ln())
            };
            total += term * m[x] * j;
        }
    }
    0.5 * total
}

/// `Σ_x m_x Σ_y J←_x(y) ρ_x h(log ρ_y − log ρ_x)`; `ρ_x = 0 < ρ_y` gives `+∞`,
/// `ρ_y = 0 < ρ_x` contributes `ρ_x J←_x(y) m_x`.
fn fisher_production(gen: &GeneratorPair, rho: &DVector<f64>) -> f64 {
    let m = gen.m();
    let kernel = gen.kernel(Direction::Backward);
    let mut total = 0.0;
    for x in 0..gen.len() {
        let a = rho[x];
        for &(y, j) in kernel.neighbors(x) {
            let b = rho[y];
            let term = if a == 0.0 {
                if b == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else if b == 0.0 {
                a
            } else {
                a * h(b.ln() - a.ln())
            };
            total += term * m[x] * j;
        }
    }
    total
}

/// Spectral gap of the additive symmetrization `(L→ + L←)/2` in `L²(m)`.
pub fn spectral_gap(gen: &GeneratorPair) -> f64 {
    let n = gen.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let sym = (gen.generator(Direction::Forward) + gen.generator(Direction::Backward)) * 0.5;
    let sq = gen.m().map(f64::sqrt);
    let s = DMatrix::from_fn(n, n, |i, j| sq[i] * sym[(i, j)] / sq[j]);
    let s = (&s + s.transpose()) * 0.5;
    let mut rates: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().map(|&e| -e).collect();
    rates.sort_by(f64::total_cmp);
    rates[1]
}

/// Time after which `H(μ_t|m) ≤ tol` is guaranteed by `H ≤ χ² ≤ e^{−2λt}χ²(μ_0|m)`.
/// Returns `(T, λ)`; `m` is normalized internally.
pub fn equilibration_horizon(gen: &GeneratorPair, mu0: &DVector<f64>, tol: f64) -> Result<(f64, f64)> {
    let gen = gen.with_normalized_measure();
    check_probability("mu0", mu0, gen.len())?;
    let gap = spectral_gap(&gen);
    let m = gen.m();
    let chi2: f64 = mu0.iter().zip(m.iter()).map(|(&p, &w)| (p / w - 1.0).powi(2) * w).sum();
    let t = if chi2 <= tol { 0.0 } else { (chi2 / tol).ln() / (2.0 * gap) };
    Ok((t, gap))
}

/// Heat flow `μ_t = (e^{tL←}ρ_0) m` sampled on a grid in `(0, T]`.
#[derive(Debug, Clone, Serialize)]
pub struct HeatFlow {
    pub curve: EntropyCurve,
    /// `𝓘(μ_t|m)` at each grid time (equals `I_bwd`).
    pub production: Vec<f64>,
    pub spectral_gap: f64,
    /// Total mass of the input `m`, divided out before the flow is run.
    pub normalization: f64,
}

impl HeatFlow {
    /// `H(t_{k+1}) ≤ H(t_k) + tol·max(1, H(t_k))` at every step.
    pub fn is_nonincreasing(&self, tol: f64) -> bool {
        self.curve.h.windows(2).all(|w| w[1] <= w[0] + tol * w[0].abs().max(1.0))
    }
}

fn heat_density(sg: &Semigroup, rho0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    Ok(sg.apply(t, rho0)?.map(|v| v.max(0.0)))
}

/// Runs the heat flow from `mu0` (a probability vector). `None` uses
/// 101 points on `[T/101, T]`.
pub fn heat_flow(gen: &GeneratorPair, mu0: &DVector<f64>, horizon: f64, grid: Option<&[f64]>, step: f64) -> Result<HeatFlow> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("heat-flow horizon {horizon} must be positive")));
    }
    let normalization = gen.measure().total();
    let gen = gen.with_normalized_measure();
    check_probability("mu0", mu0, gen.len())?;
    let grid = match grid {
        Some(g) => g.to_vec(),
        None => uniform_grid(horizon / DEFAULT_GRID_POINTS as f64, horizon, DEFAULT_GRID_POINTS),
    };
    check_grid(&grid)?;
    if let Some(&t) = grid.iter().find(|&&t| t <= 0.0 || t > horizon) {
        return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: horizon });
    }
    let m = gen.m().clone();
    let rho0 = mu0.component_div(&m);
    let sg = Semigroup::for_pair(&gen, Direction::Backward)?;
    let bwd = gen.kernel(Direction::Backward);
    let entropy = |t: f64| -> Result<f64> { Ok(bregman_entropy(&heat_density(&sg, &rho0, t)?, &m)) };
    let samples = grid
        .par_iter()
        .map(|&t| {
            let rho = heat_density(&sg, &rho0, t)?;
            let h_t = bregman_entropy(&rho, &m);
            let mu = rho.component_mul(&m);
            let production = fisher_production(&gen, &rho);
            let d2_h = if rho.iter().all(|&r| r > 0.0) {
                theta2_op(bwd, &rho.map(f64::ln))?.dot(&mu)
            } else {
                f64::INFINITY
            };
            let der = EntropyDerivatives { d_h: -production, d2_h, i_fwd: 0.0, i_bwd: production };
            let s = step.min(t / 4.0);
            let fd = finite_difference_oracle(entropy, t, s, true)?;
            Ok(Sample { h: h_t, der, fd })
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = EntropyCurve::from_samples(grid, samples);
    Ok(HeatFlow { production: curve.i_bwd.clone(), curve, spectral_gap: spectral_gap(&gen), normalization })
}

/// Outcome of one inequality along the flow.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub holds: bool,
    /// Smallest `rhs − lhs` over the sampled times.
    pub worst_slack: f64,
    pub worst_time: f64,
    /// First sampled time at which the inequality fails.
    pub violation_time: Option<f64>,
}

/// Report of [`decay_and_mlsi_check`].
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub kappa: f64,
    pub passed: bool,
    pub checks: Vec<InequalityCheck>,
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub production: Vec<f64>,
    pub fisher: Vec<f64>,
    pub normalization: f64,
}

impl DecayReport {
    pub fn check(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    check: InequalityCheck,
}

impl Tracker {
    fn new(name: &str) -> Self {
        Tracker {
            check: InequalityCheck {
                name: name.into(),
                holds: true,
                worst_slack: f64::INFINITY,
                worst_time: 0.0,
                violation_time: None,
            },
        }
    }

    fn record(&mut self, t: f64, lhs: f64, rhs: f64) {
        let slack = if lhs == rhs { 0.0 } else { rhs - lhs };
        if slack < self.check.worst_slack || slack.is_nan() {
            self.check.worst_slack = slack;
            self.check.worst_time = t;
        }
        let allowance = DECAY_SLACK_TOL * lhs.abs().max(rhs.abs()) + DECAY_ABS_TOL;
        if !(slack >= -allowance) && self.check.violation_time.is_none() {
            self.check.holds = false;
            self.check.violation_time = Some(t);
        }
    }
}

/// Checks along the heat flow from `mu0`:
/// `𝓘(t) ≤ 𝓘(0)e^{−κt}` (`production_decay`), `H(t) ≤ H(0)e^{−κt}` (`entropy_decay`),
/// `H ≤ 𝓘/κ` (`mlsi`) and, for reversible generators, `H ≤ I/κ` (`mlsi_fisher`).
/// `None` samples 101 points on `[0, horizon]`.
pub fn decay_and_mlsi_check(gen: &GeneratorPair, mu0: &DVector<f64>, kappa: f64, horizon: f64, grid: Option<&[f64]>) -> Result<DecayReport> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput(format!("curvature constant {kappa} must be positive")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon {horizon} must be nonnegative")));
    }
    let normalization = gen.measure().total();
    let gen = gen.with_normalized_measure();
    check_probability("mu0", mu0, gen.len())?;
    let mut times = match grid {
        Some(g) => g.to_vec(),
        None => uniform_grid(0.0, horizon, DEFAULT_GRID_POINTS),
    };
    if times.first() != Some(&0.0) {
        times.insert(0, 0.0);
    }
    check_grid(&times)?;
    if times.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidInput("decay grid must be nonnegative".into()));
    }
    let m = gen.m().clone();
    let rho0 = mu0.component_div(&m);
    let sg = Semigroup::for_pair(&gen, Direction::Backward)?;
    let rows = times
        .par_iter()
        .map(|&t| {
            let rho = if t == 0.0 { rho0.clone() } else { heat_density(&sg, &rho0, t)? };
            Ok((bregman_entropy(&rho, &m), fisher_production(&gen, &rho), fisher_reversible(&gen, &rho)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (h0, p0) = (rows[0].0, rows[0].1);
    let mut decay_prod = Tracker::new("production_decay");
    let mut decay_ent = Tracker::new("entropy_decay");
    let mut mlsi = Tracker::new("mlsi");
    let mut mlsi_fisher = Tracker::new("mlsi_fisher");
    for (&t, &(h_t, p_t, i_t)) in times.iter().zip(&rows) {
        let damp = (-kappa * t).exp();
        decay_prod.record(t, p_t, p0 * damp);
        decay_ent.record(t, h_t, h0 * damp);
        mlsi.record(t, h_t, p_t / kappa);
        mlsi_fisher.record(t, h_t, i_t / kappa);
    }
    let mut checks = vec![decay_prod.check, decay_ent.check, mlsi.check];
    if gen.is_reversible() {
        checks.push(mlsi_fisher.check);
    }
    Ok(DecayReport {
        kappa,
        passed: checks.iter().all(|c| c.holds),
        checks,
        entropy: rows.iter().map(|r| r.0).collect(),
        production: rows.iter().map(|r| r.1).collect(),
        fisher: rows.iter().map(|r| r.2).collect(),
        times,
        normalization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{PositiveMeasure, StateSpace};
    use crate::schroedinger::fg_transform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(rng: &mut ChaCha8Rng, n: usize, reversible: bool) -> GeneratorPair {
        let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        for _ in 0..n {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                edges.push((a, b));
            }
        }
        let space = StateSpace::new(n, &edges).unwrap();
        if reversible {
            let m = PositiveMeasure::new((0..n).map(|_| rng.random_range(0.2..2.0)).collect()).unwrap();
            let s = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.2..1.5));
            let s = (&s + s.transpose()) * 0.5;
            GeneratorPair::reversible_walk(space, m, &s).unwrap()
        } else {
            let mut r = DMatrix::zeros(n, n);
            for (a, b) in space.edges() {
                r[(a, b)] = rng.random_range(0.1..2.0);
                if rng.random_bool(0.5) {
                    r[(b, a)] = rng.random_range(0.1..2.0);
                }
            }
            for i in 0..n {
                r[(i, (i + 1) % n)] += 0.5;
            }
            GeneratorPair::from_forward_rates(r, None).unwrap()
        }
    }

    fn random_interp(rng: &mut ChaCha8Rng, n: usize, reversible: bool) -> EntropicInterpolation {
        let gen = random_pair(rng, n, reversible);
        let f0 = DVector::from_fn(n, |_, _| rng.random_range(-3.0f64..3.0).exp());
        let g1 = DVector::from_fn(n, |_, _| rng.random_range(-3.0f64..3.0).exp());
        let e = fg_transform(&gen, &f0, &g1, true).unwrap();
        EntropicInterpolation::new(gen, e).unwrap()
    }

    #[test]
    fn relative_entropy_values() {
        let m = DVector::from_vec(vec![0.5, 0.5]);
        let mu = DVector::from_vec(vec![0.75, 0.25]);
        let expect = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((relative_entropy(&mu, &m) - expect).abs() < 1e-15);
        assert_eq!(relative_entropy(&m, &m), 0.0);
        let n = 7;
        let mut delta = DVector::zeros(n);
        delta[3] = 1.0;
        let uni = DVector::from_element(n, 1.0 / n as f64);
        assert!((relative_entropy(&delta, &uni) - (n as f64).ln()).abs() < 1e-14);
        assert_eq!(relative_entropy(&delta, &DVector::from_vec(vec![1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0])), f64::INFINITY);
    }

    #[test]
    fn oracle_exact_on_quadratics() {
        let (d1, d2) = finite_difference_oracle(|t| Ok(3.0 * t * t - 2.0 * t + 1.0), 0.4, 1e-3, true).unwrap();
        assert!((d1 - 0.4).abs() < 1e-10);
        assert!((d2 - 6.0).abs() < 1e-6);
        assert_eq!(finite_difference_oracle(|_| Ok(2.5), 0.5, 1e-4, false).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn flat_interpolation_has_zero_derivatives() {
        let gen = GeneratorPair::counting_walk(StateSpace::cycle(5).unwrap()).unwrap();
        let e = fg_transform(&gen, &DVector::from_element(5, 1.0), &DVector::from_element(5, 1.0), true).unwrap();
        let it = EntropicInterpolation::new(gen, e).unwrap();
        let d = entropy_derivatives(&it, 0.3).unwrap();
        assert!(d.d_h.abs() < 1e-15 && d.d2_h.abs() < 1e-15);
        assert!(entropy_derivatives(&it, 0.0).is_err());
    }

    #[test]
    fn analytic_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 0..6 {
            let it = random_interp(&mut rng, 6, k % 2 == 0);
            let curve = entropy_curve(&it, Some(&uniform_grid(0.05, 0.95, 11)), DEFAULT_FD_STEP).unwrap();
            assert!(curve.max_first_derivative_error() < 1e-6, "dH {}", curve.max_first_derivative_error());
            assert!(curve.max_second_derivative_error() < 1e-5, "d2H {}", curve.max_second_derivative_error());
            assert!(curve.i_fwd.iter().chain(&curve.i_bwd).all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn heat_flow_interpolation_has_no_forward_production() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gen = random_pair(&mut rng, 5, false);
        let rho0 = DVector::from_vec(vec![2.0, 0.5, 1.0, 0.3, 1.2]);
        let e = fg_transform(&gen, &rho0, &DVector::from_element(5, 1.0), true).unwrap();
        let it = EntropicInterpolation::new(gen, e).unwrap();
        let d = entropy_derivatives(&it, 0.4).unwrap();
        assert!(d.i_fwd.abs() < 1e-15);
        assert!((d.d_h + d.i_bwd).abs() < 1e-15);
    }

    #[test]
    fn two_state_heat_flow_closed_form() {
        let gen = GeneratorPair::counting_walk(StateSpace::path(2).unwrap()).unwrap();
        let mu0 = DVector::from_vec(vec![1.0, 0.0]);
        let flow = heat_flow(&gen, &mu0, 3.0, None, DEFAULT_FD_STEP).unwrap();
        assert_eq!(flow.normalization, 2.0);
        assert!((flow.spectral_gap - 2.0).abs() < 1e-12);
        for (k, &t) in flow.curve.grid.iter().enumerate() {
            let e = (-2.0 * t).exp();
            let (a, b) = (1.0 + e, 1.0 - e);
            let expect = 0.5 * (a * a.ln() + b * b.ln());
            assert!((flow.curve.h[k] - expect).abs() < 1e-13);
        }
        assert!(flow.is_nonincreasing(0.0));
    }

    #[test]
    fn heat_flow_dissipation_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gen = random_pair(&mut rng, 3, false);
        let mu0 = DVector::from_vec(vec![0.7, 0.2, 0.1]);
        let (t, _) = equilibration_horizon(&gen, &mu0, EQUILIBRIUM_TOL).unwrap();
        let flow = heat_flow(&gen, &mu0, t, None, DEFAULT_FD_STEP).unwrap();
        assert!(flow.is_nonincreasing(1e-14));
        assert!(flow.curve.max_first_derivative_error() < 1e-6);
        assert!(*flow.curve.h.last().unwrap() <= EQUILIBRIUM_TOL);
        assert!(flow.curve.i_fwd.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equilibrium_start_is_flat() {
        let gen = GeneratorPair::counting_walk(StateSpace::complete(4).unwrap()).unwrap();
        let mu0 = DVector::from_element(4, 0.25);
        let flow = heat_flow(&gen, &mu0, 1.0, None, DEFAULT_FD_STEP).unwrap();
        assert!(flow.curve.h.iter().all(|&v| v.abs() < 1e-15));
        let report = decay_and_mlsi_check(&gen, &mu0, 1.0, 1.0, None).unwrap();
        assert!(report.passed);
    }

    #[test]
    fn fisher_information_values() {
        let gen = GeneratorPair::counting_walk(StateSpace::path(2).unwrap()).unwrap().with_normalized_measure();
        let (i, prod) = fisher_information(&gen, &DVector::from_vec(vec![0.75, 0.25])).unwrap();
        assert!((i - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!((i - prod).abs() < 1e-15);
        let (i, prod) = fisher_information(&gen, &DVector::from_vec(vec![0.5, 0.5])).unwrap();
        assert_eq!((i, prod), (0.0, 0.0));
        let (i, prod) = fisher_information(&gen, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(i, f64::INFINITY);
        assert_eq!(prod, f64::INFINITY);
    }

    #[test]
    fn fisher_functionals_agree_when_reversible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gen = random_pair(&mut rng, 7, true);
        let gen = gen.with_normalized_measure();
        let mut mu = DVector::from_fn(7, |_, _| rng.random_range(0.1..1.0));
        mu /= mu.sum();
        let (i, prod) = fisher_information(&gen, &mu).unwrap();
        assert!((i - prod).abs() < 1e-13 * i.max(1.0));
    }

    #[test]
    fn decay_negative_control() {
        let gen = GeneratorPair::counting_walk(StateSpace::path(2).unwrap()).unwrap();
        let mu0 = DVector::from_vec(vec![0.9, 0.1]);
        let ok = decay_and_mlsi_check(&gen, &mu0, 2.0, 3.0, None).unwrap();
        assert!(ok.passed, "{:?}", ok.checks);
        let bad = decay_and_mlsi_check(&gen, &mu0, 40.0, 3.0, None).unwrap();
        assert!(!bad.passed);
        assert!(bad.check("mlsi").unwrap().violation_time.is_some());
        assert_eq!(bad.checks.len(), 4);
    }
}
