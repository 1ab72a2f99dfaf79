//! Scalar kernels θ, θ*, h and the jump-kernel operator calculus
//! Γ, B, C, Θ, Θ₂.
//!
//! All operators act on a single [`JumpKernel`]; pass `gen.kernel(dir)` to
//! select the forward or backward arrow. Every function depends on `u` only
//! through edge differences `Du(x,y) = u(y) - u(x)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::JumpKernel;

/// Largest edge difference fed to `exp` before reporting a range error.
pub const EXP_LIMIT: f64 = 700.0;

/// Below this magnitude θ and h are evaluated by their Taylor series.
const SERIES_CUTOFF: f64 = 0.5;

/// `θ(a) = e^a - a - 1`.
pub fn theta(a: f64) -> f64 {
    if a.abs() < SERIES_CUTOFF {
        // Σ_{k≥2} a^k / k!
        let mut term = a * a / 2.0;
        let mut sum = 0.0;
        for k in 3..=22 {
            sum += term;
            term *= a / k as f64;
        }
        sum
    } else {
        a.exp_m1() - a
    }
}

/// Convex conjugate of θ: `(b+1)log(b+1) - b` for `b > -1`, `1` at `b = -1`,
/// `+∞` below.
pub fn theta_star(b: f64) -> f64 {
    if b.is_nan() {
        return f64::NAN;
    }
    if b < -1.0 {
        return f64::INFINITY;
    }
    if b == -1.0 {
        return 1.0;
    }
    if b.abs() < 0.1 {
        // Σ_{k≥2} (-b)^k / (k(k-1))
        let mut pow = b * b;
        let mut sum = 0.0;
        for k in 2..=24 {
            let kf = k as f64;
            sum += if k % 2 == 0 { pow } else { -pow } / (kf * (kf - 1.0));
            pow *= b;
        }
        sum
    } else {
        (1.0 + b) * b.ln_1p() - b
    }
}

/// `h(a) = θ*(e^a - 1) = a e^a - e^a + 1`.
pub fn h(a: f64) -> f64 {
    if a.abs() < SERIES_CUTOFF {
        // Σ_{k≥2} (k-1) a^k / k!
        let mut pow_over_fact = a * a / 2.0;
        let mut sum = 0.0;
        for k in 2..=22 {
            sum += (k - 1) as f64 * pow_over_fact;
            pow_over_fact *= a / (k + 1) as f64;
        }
        sum
    } else {
        (a - 1.0) * a.exp() + 1.0
    }
}

fn check_len(kernel: &JumpKernel, u: &DVector<f64>) -> Result<()> {
    if u.len() != kernel.len() {
        return Err(Error::Dimension { expected: kernel.len(), got: u.len() });
    }
    Ok(())
}

fn check_range(kernel: &JumpKernel, u: &DVector<f64>, two_hop: bool) -> Result<()> {
    check_len(kernel, u)?;
    for x in 0..kernel.len() {
        for &(y, _) in kernel.neighbors(x) {
            let d = u[y] - u[x];
            if !(d.abs() <= EXP_LIMIT) {
                return Err(Error::Range { value: d, limit: EXP_LIMIT });
            }
            if two_hop {
                for &(z, _) in kernel.neighbors(y) {
                    let c = u[z] - u[x];
                    if !(c.abs() <= EXP_LIMIT) {
                        return Err(Error::Range { value: c, limit: EXP_LIMIT });
                    }
                }
            }
        }
    }
    Ok(())
}

fn edge_sum(kernel: &JumpKernel, u: &DVector<f64>, f: impl Fn(f64) -> f64) -> DVector<f64> {
    DVector::from_fn(kernel.len(), |x, _| kernel.neighbors(x).iter().map(|&(y, j)| f(u[y] - u[x]) * j).sum())
}

/// `Lu(x) = Σ_y (u(y) - u(x)) J_x(y)`.
pub fn generator_apply(kernel: &JumpKernel, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(kernel, u)?;
    Ok(edge_sum(kernel, u, |d| d))
}

/// Carré du champ `Γ(u,v)(x) = Σ_y Du(x,y) Dv(x,y) J_x(y)`.
pub fn carre_du_champ(kernel: &JumpKernel, u: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(kernel, u)?;
    check_len(kernel, v)?;
    Ok(DVector::from_fn(kernel.len(), |x, _| {
        kernel.neighbors(x).iter().map(|&(y, j)| (u[y] - u[x]) * (v[y] - v[x]) * j).sum()
    }))
}

/// Hamilton–Jacobi operator `Bu(x) = Σ_y (e^{Du(x,y)} - 1) J_x(y) = e^{-u} L e^u`.
pub fn hamilton_jacobi_b(kernel: &JumpKernel, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_range(kernel, u, false)?;
    Ok(edge_sum(kernel, u, f64::exp_m1))
}

/// `Cu = Bu - Lu = Σ_y θ(Du(x,y)) J_x(y)`.
pub fn c_op(kernel: &JumpKernel, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_range(kernel, u, false)?;
    Ok(edge_sum(kernel, u, theta))
}

/// `Θu(x) = Σ_y h(Du(x,y)) J_x(y)`.
pub fn theta_op(kernel: &JumpKernel, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_range(kernel, u, false)?;
    Ok(edge_sum(kernel, u, h))
}

/// Density-ratio form of Θ: with `u = log g`,
/// `Θu(x) = Σ_y θ*((g(y) - g(x)) / g(x)) J_x(y)`. Requires `g > 0`.
pub fn theta_op_density(kernel: &JumpKernel, g: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(kernel, g)?;
    if let Some((x, v)) = g.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::InvalidInput(format!("density ratio form needs g > 0, got g({x}) = {v}")));
    }
    Ok(DVector::from_fn(kernel.len(), |x, _| {
        kernel.neighbors(x).iter().map(|&(y, j)| theta_star((g[y] - g[x]) / g[x]) * j).sum()
    }))
}

/// `Θu = e^{-u} Γ(e^u, u) - Cu`, assembled from Γ and C.
pub fn theta_op_abstract(kernel: &JumpKernel, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_range(kernel, u, false)?;
    let (eu, emu) = shifted_exponentials(u);
    let gamma = carre_du_champ(kernel, &eu, u)?;
    let c = c_op(kernel, u)?;
    Ok(gamma.component_mul(&emu) - c)
}

/// Closed form of Θ₂ on a jump kernel:
///
/// ```text
/// Θ₂u(x) = (Σ_y (e^a - 1) J_x(y))²
///        + Σ_y [J_y(𝒳) - J_x(𝒳)] h(a) J_x(y)
///        + Σ_{y,z} [2 e^a h(b) - h(c)] J_x(y) J_y(z)
/// ```
/// with `a = Du(x,y)`, `b = Du(y,z)`, `c = Du(x,z)`. The two-hop sum walks
/// neighbour lists and includes `z = x`.
pub fn theta2_op(kernel: &JumpKernel, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_range(kernel, u, true)?;
    Ok(DVector::from_fn(kernel.len(), |x, _| theta2_at(kernel, u, x)))
}

/// Θ₂u at a single vertex (no range check).
pub(crate) fn theta2_at(kernel: &JumpKernel, u: &DVector<f64>, x: usize) -> f64 {
    let jx = kernel.total_rate(x);
    let mut drift = 0.0;
    let mut spread = 0.0;
    let mut two_hop = 0.0;
    for &(y, jxy) in kernel.neighbors(x) {
        let a = u[y] - u[x];
        drift += a.exp_m1() * jxy;
        spread += (kernel.total_rate(y) - jx) * h(a) * jxy;
        let ea2 = 2.0 * a.exp();
        let inner: f64 = kernel.neighbors(y).iter().map(|&(z, jyz)| (ea2 * h(u[z] - u[y]) - h(u[z] - u[x])) * jyz).sum();
        two_hop += inner * jxy;
    }
    drift * drift + spread + two_hop
}

/// Θu at a single vertex (no range check).
pub(crate) fn theta_at(kernel: &JumpKernel, u: &DVector<f64>, x: usize) -> f64 {
    kernel.neighbors(x).iter().map(|&(y, j)| h(u[y] - u[x]) * j).sum()
}

/// Abstract form of Θ₂:
/// `LΘu + e^{-u}Γ(e^u, Θu) + e^{-u}Γ(e^u, u)·Bu - e^{-u}Γ(e^u Bu, u)`.
pub fn theta2_op_abstract(kernel: &JumpKernel, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_range(kernel, u, true)?;
    let (eu, emu) = shifted_exponentials(u);
    let th = theta_op(kernel, u)?;
    let b = hamilton_jacobi_b(kernel, u)?;
    let l_th = generator_apply(kernel, &th)?;
    let g1 = carre_du_champ(kernel, &eu, &th)?.component_mul(&emu);
    let g2 = carre_du_champ(kernel, &eu, u)?.component_mul(&emu).component_mul(&b);
    let g3 = carre_du_champ(kernel, &eu.component_mul(&b), u)?.component_mul(&emu);
    Ok(l_th + g1 + g2 - g3)
}

/// Θ₂ written with the current kernel `A_x(y) = (g(y)/g(x)) J_x(y)` and
/// θ*-terms of the density ratios, for `u = log g`.
pub fn theta2_op_density(kernel: &JumpKernel, g: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(kernel, g)?;
    if let Some((x, v)) = g.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::InvalidInput(format!("density ratio form needs g > 0, got g({x}) = {v}")));
    }
    let ratio = |x: usize, y: usize| (g[y] - g[x]) / g[x];
    Ok(DVector::from_fn(kernel.len(), |x, _| {
        let jx = kernel.total_rate(x);
        let mut drift = 0.0;
        let mut spread = 0.0;
        let mut two_hop = 0.0;
        for &(y, jxy) in kernel.neighbors(x) {
            let r = ratio(x, y);
            drift += r * jxy;
            spread += (kernel.total_rate(y) - jx) * theta_star(r) * jxy;
            let axy = g[y] / g[x] * jxy;
            for &(z, jyz) in kernel.neighbors(y) {
                two_hop += 2.0 * theta_star(ratio(y, z)) * axy * jyz - theta_star(ratio(x, z)) * jxy * jyz;
            }
        }
        drift * drift + spread + two_hop
    }))
}

/// `e^{u - max u}` and `e^{-(u - max u)}`; the common shift cancels in every
/// `e^{-u} Γ(e^u, ·)` product.
fn shifted_exponentials(u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let shift = u.max();
    (u.map(|v| (v - shift).exp()), u.map(|v| (shift - v).exp()))
}

/// Continuum `Γ(u)/2 = u'²/2` from periodic samples (central differences).
pub fn gamma_continuum_reference(u: &[f64], spacing: f64) -> Result<DVector<f64>> {
    let n = check_periodic(u, u, spacing)?;
    Ok(DVector::from_fn(n, |k, _| {
        let du = (u[(k + 1) % n] - u[(k + n - 1) % n]) / (2.0 * spacing);
        du * du / 2.0
    }))
}

/// Flat one-dimensional `Γ₂(u)/2 = (u''² + V''u'²)/2` from periodic samples of
/// `u` and `V`, with central-difference derivatives.
pub fn gamma2_continuum_reference(u: &[f64], potential: &[f64], spacing: f64) -> Result<DVector<f64>> {
    let n = check_periodic(u, potential, spacing)?;
    let second = |f: &[f64], k: usize| (f[(k + 1) % n] - 2.0 * f[k] + f[(k + n - 1) % n]) / (spacing * spacing);
    Ok(DVector::from_fn(n, |k, _| {
        let du = (u[(k + 1) % n] - u[(k + n - 1) % n]) / (2.0 * spacing);
        let d2u = second(u, k);
        (d2u * d2u + second(potential, k) * du * du) / 2.0
    }))
}

fn check_periodic(u: &[f64], v: &[f64], spacing: f64) -> Result<usize> {
    let n = u.len();
    if v.len() != n {
        return Err(Error::Dimension { expected: n, got: v.len() });
    }
    if n < 3 {
        return Err(Error::InvalidInput("periodic samples need at least 3 points".into()));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidInput(format!("grid spacing {spacing} must be positive")));
    }
    Ok(n)
}
