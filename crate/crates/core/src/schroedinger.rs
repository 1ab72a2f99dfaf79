//! (f,g)-transforms of the reference walk and the Schrödinger system.
//!
//! The path measure `P = f_0(X_0) g_1(X_1) R` has time marginals
//! `ρ_t = f_t g_t` with `f_t = e^{tL←} f_0` and `g_t = e^{(1-t)L→} g_1`.
//! Given endpoint marginals the pair `(f_0, g_1)` is found by iterative
//! proportional fitting on `ρ_0 = f_0 g_0`, `ρ_1 = f_1 g_1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::GeneratorPair;
use crate::semigroup::SemigroupPair;

/// Allowed deviation of the pairing from 1 when normalisation is not automatic.
pub const PAIRING_TOL: f64 = 1e-6;
/// Default marginal tolerance of the solver.
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Probability vectors must sum to one within this tolerance.
const MASS_TOL: f64 = 1e-10;

/// Endpoint functions of an (f,g)-transform.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointData {
    pub f0: DVector<f64>,
    pub g1: DVector<f64>,
    /// `Σ_{x,y} f_0(x) m(x) p_1(x,y) g_1(y)`.
    pub pairing: f64,
}

impl EndpointData {
    /// Same transform under the gauge `(c f_0, g_1 / c)`.
    pub fn regauged(&self, c: f64) -> Self {
        EndpointData { f0: &self.f0 * c, g1: &self.g1 / c, pairing: self.pairing }
    }
}

/// Joint endpoint law `π(x, y)` of the transformed walk.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub pi: DMatrix<f64>,
}

impl Coupling {
    /// `Σ_y π(x, y)`, the law of `X_0`.
    pub fn first_marginal(&self) -> DVector<f64> {
        DVector::from_fn(self.pi.nrows(), |x, _| self.pi.row(x).sum())
    }

    /// `Σ_x π(x, y)`, the law of `X_1`.
    pub fn second_marginal(&self) -> DVector<f64> {
        DVector::from_fn(self.pi.ncols(), |y, _| self.pi.column(y).sum())
    }
}

/// Convergence record of the proportional-fitting loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IpfReport {
    pub iterations: usize,
    pub residual: f64,
    /// Residual after each completed sweep, starting with the initial guess.
    pub residuals: Vec<f64>,
    /// Geometric mean of successive residual ratios over the last sweeps.
    pub convergence_ratio: f64,
    pub monotone: bool,
}

/// Builds the (f,g)-transform with endpoint functions `f0`, `g1`.
///
/// With `auto_normalize` the function `g1` is rescaled so the pairing is one;
/// otherwise a pairing further than [`PAIRING_TOL`] from one is an error.
pub fn fg_transform(gen: &GeneratorPair, f0: &DVector<f64>, g1: &DVector<f64>, auto_normalize: bool) -> Result<EndpointData> {
    let sg = SemigroupPair::new(gen)?;
    fg_transform_with(gen, &sg, f0, g1, auto_normalize)
}

pub fn fg_transform_with(gen: &GeneratorPair, sg: &SemigroupPair, f0: &DVector<f64>, g1: &DVector<f64>, auto_normalize: bool) -> Result<EndpointData> {
    check_endpoint("f0", f0, gen.len())?;
    check_endpoint("g1", g1, gen.len())?;
    let pairing = pairing_value(gen, sg, f0, g1)?;
    if !(pairing > 0.0) {
        return Err(Error::InvalidInput("pairing of f0 and g1 vanishes: supports are disjoint under p_1".into()));
    }
    let g1 = if auto_normalize {
        g1 / pairing
    } else if (pairing - 1.0).abs() > PAIRING_TOL {
        return Err(Error::InvalidInput(format!("pairing Σ f0 m p_1 g1 = {pairing} is not 1 (pass auto_normalize to rescale g1)")));
    } else {
        g1.clone()
    };
    let pairing_after = pairing_value(gen, sg, f0, &g1)?;
    let data = EndpointData { f0: f0.clone(), g1, pairing: pairing_after };
    check_finite_entropy(gen, sg, &data)?;
    Ok(data)
}

fn pairing_value(gen: &GeneratorPair, sg: &SemigroupPair, f0: &DVector<f64>, g1: &DVector<f64>) -> Result<f64> {
    let g0 = sg.forward.apply(1.0, g1)?;
    Ok(f0.component_mul(gen.m()).dot(&g0))
}

/// `Σ f_0(x) g_1(y) log_+(f_0(x) g_1(y)) R_01(x,y)` must be finite.
fn check_finite_entropy(gen: &GeneratorPair, sg: &SemigroupPair, data: &EndpointData) -> Result<()> {
    let p1 = sg.forward.matrix(1.0)?;
    let m = gen.m();
    let mut total = 0.0;
    for x in 0..gen.len() {
        for y in 0..gen.len() {
            let w = data.f0[x] * data.g1[y];
            if w > 1.0 {
                total += w * w.ln() * m[x] * p1[(x, y)];
            }
        }
    }
    if total.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput("endpoint data has infinite entropy".into()))
    }
}

fn check_endpoint(name: &str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension { expected: n, got: v.len() });
    }
    if let Some((x, val)) = v.iter().enumerate().find(|(_, val)| !val.is_finite() || **val < 0.0) {
        return Err(Error::InvalidInput(format!("{name}({x}) = {val} must be finite and nonnegative")));
    }
    if v.iter().all(|&val| val == 0.0) {
        return Err(Error::InvalidInput(format!("{name} vanishes identically")));
    }
    Ok(())
}

pub(crate) fn check_probability(name: &str, mu: &DVector<f64>, n: usize) -> Result<()> {
    if mu.len() != n {
        return Err(Error::Dimension { expected: n, got: mu.len() });
    }
    if let Some((x, v)) = mu.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidInput(format!("{name}({x}) = {v} is not a finite nonnegative number")));
    }
    let total = mu.sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidInput(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// `num / den` with `0/0 = 0`; a positive numerator over a nonpositive
/// denominator means the target support cannot be reached.
fn ratio(num: &DVector<f64>, den: &DVector<f64>) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(num.len());
    for x in 0..num.len() {
        out[x] = if num[x] == 0.0 {
            0.0
        } else if den[x] > 0.0 {
            num[x] / den[x]
        } else {
            return Err(Error::UnreachableSupport { state: x });
        };
    }
    Ok(out)
}

/// Solves `ρ_0 = f_0 g_0`, `ρ_1 = f_1 g_1` for probability marginals `mu0`, `mu1`.
///
/// Starts from `f_0 = g_1 = 1` and alternates `f_0 ← ρ_0 / g_0`, then
/// `g_1 ← ρ_1 / f_1` until both density residuals are at most `tol`.
pub fn solve_schroedinger_system(gen: &GeneratorPair, mu0: &DVector<f64>, mu1: &DVector<f64>, tol: f64, max_iter: usize) -> Result<(EndpointData, IpfReport)> {
    let sg = SemigroupPair::new(gen)?;
    solve_with(gen, &sg, mu0, mu1, tol, max_iter)
}

pub fn solve_with(gen: &GeneratorPair, sg: &SemigroupPair, mu0: &DVector<f64>, mu1: &DVector<f64>, tol: f64, max_iter: usize) -> Result<(EndpointData, IpfReport)> {
    let n = gen.len();
    check_probability("mu0", mu0, n)?;
    check_probability("mu1", mu1, n)?;
    let rho0 = mu0.component_div(gen.m());
    let rho1 = mu1.component_div(gen.m());
    let mut f0 = DVector::from_element(n, 1.0);
    let mut g1 = DVector::from_element(n, 1.0);
    let mut residuals = Vec::new();
    let mut iterations = 0;
    loop {
        let g0 = sg.forward.apply(1.0, &g1)?;
        let f1 = sg.backward.apply(1.0, &f0)?;
        let r0 = (f0.component_mul(&g0) - &rho0).amax();
        let r1 = (f1.component_mul(&g1) - &rho1).amax();
        let residual = r0.max(r1);
        residuals.push(residual);
        if residual <= tol {
            break;
        }
        if iterations == max_iter {
            return Err(Error::NonConvergence { iterations, residual });
        }
        f0 = ratio(&rho0, &g0)?;
        let f1 = sg.backward.apply(1.0, &f0)?;
        g1 = ratio(&rho1, &f1)?;
        iterations += 1;
    }
    let residual = *residuals.last().expect("at least one residual");
    let tail: Vec<f64> = residuals.iter().rev().take(6).cloned().filter(|r| *r > 0.0).collect();
    let convergence_ratio = if tail.len() >= 2 {
        (tail[0] / tail[tail.len() - 1]).powf(1.0 / (tail.len() - 1) as f64)
    } else {
        0.0
    };
    let monotone = residuals.windows(2).all(|w| w[1] <= w[0]);
    let endpoint = fg_transform_with(gen, sg, &f0, &g1, true)?;
    Ok((endpoint, IpfReport { iterations, residual, residuals, convergence_ratio, monotone }))
}

/// `π(x,y) = f_0(x) m(x) p_1(x,y) g_1(y)`.
pub fn endpoint_coupling(gen: &GeneratorPair, endpoint: &EndpointData) -> Result<Coupling> {
    let sg = SemigroupPair::new(gen)?;
    endpoint_coupling_with(gen, &sg, endpoint)
}

pub fn endpoint_coupling_with(gen: &GeneratorPair, sg: &SemigroupPair, endpoint: &EndpointData) -> Result<Coupling> {
    let n = gen.len();
    if endpoint.f0.len() != n || endpoint.g1.len() != n {
        return Err(Error::Dimension { expected: n, got: endpoint.f0.len() });
    }
    let p1 = sg.forward.transition(1.0)?;
    let m = gen.m();
    Ok(Coupling { pi: DMatrix::from_fn(n, n, |x, y| endpoint.f0[x] * m[x] * p1.get(x, y) * endpoint.g1[y]) })
}
