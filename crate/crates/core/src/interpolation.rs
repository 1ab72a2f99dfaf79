//! Entropic interpolations: time marginals of an (f,g)-transform.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{GeneratorPair, JumpKernel};
use crate::schroedinger::{endpoint_coupling_with, solve_with, Coupling, EndpointData, IpfReport};
use crate::semigroup::SemigroupPair;

/// Default half-width of the excluded boundary layer for log/derivative quantities.
pub const DEFAULT_WINDOW: f64 = 1e-3;

/// The flow `t ↦ μ_t = f_t g_t m` of an (f,g)-transform.
#[derive(Debug, Clone)]
pub struct EntropicInterpolation {
    gen: GeneratorPair,
    endpoint: EndpointData,
    semigroups: SemigroupPair,
    window: f64,
}

impl EntropicInterpolation {
    pub fn new(gen: GeneratorPair, endpoint: EndpointData) -> Result<Self> {
        if endpoint.f0.len() != gen.len() || endpoint.g1.len() != gen.len() {
            return Err(Error::Dimension { expected: gen.len(), got: endpoint.f0.len() });
        }
        let semigroups = SemigroupPair::new(&gen)?;
        Ok(EntropicInterpolation { gen, endpoint, semigroups, window: DEFAULT_WINDOW })
    }

    /// Solves the Schrödinger system for `mu0`, `mu1` and wraps the result.
    pub fn between(gen: GeneratorPair, mu0: &DVector<f64>, mu1: &DVector<f64>, tol: f64, max_iter: usize) -> Result<(Self, IpfReport)> {
        let semigroups = SemigroupPair::new(&gen)?;
        let (endpoint, report) = solve_with(&gen, &semigroups, mu0, mu1, tol, max_iter)?;
        Ok((EntropicInterpolation { gen, endpoint, semigroups, window: DEFAULT_WINDOW }, report))
    }

    /// Sets the interior window `[δ, 1-δ]` used by derivative evaluations.
    pub fn with_window(mut self, window: f64) -> Result<Self> {
        if !(window > 0.0 && window < 0.5) {
            return Err(Error::InvalidInput(format!("interior window {window} must lie in (0, 1/2)")));
        }
        self.window = window;
        Ok(self)
    }

    pub fn generator(&self) -> &GeneratorPair {
        &self.gen
    }

    pub fn endpoint(&self) -> &EndpointData {
        &self.endpoint
    }

    pub fn semigroups(&self) -> &SemigroupPair {
        &self.semigroups
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    /// Errors unless `t ∈ [δ, 1-δ]`.
    pub fn check_interior(&self, t: f64) -> Result<()> {
        if t < self.window || t > 1.0 - self.window || t.is_nan() {
            return Err(Error::TimeOutOfRange { t, lo: self.window, hi: 1.0 - self.window });
        }
        Ok(())
    }

    /// `f_t = e^{tL←} f_0`.
    pub fn f_at(&self, t: f64) -> Result<DVector<f64>> {
        crate::semigroup::propagate_f(&self.semigroups, &self.endpoint.f0, t)
    }

    /// `g_t = e^{(1-t)L→} g_1`.
    pub fn g_at(&self, t: f64) -> Result<DVector<f64>> {
        crate::semigroup::propagate_g(&self.semigroups, &self.endpoint.g1, t)
    }

    /// Density `ρ_t = f_t g_t` with respect to `m`.
    pub fn density_at(&self, t: f64) -> Result<DVector<f64>> {
        Ok(self.f_at(t)?.component_mul(&self.g_at(t)?))
    }

    /// The measure `μ_t = ρ_t m`.
    pub fn measure_at(&self, t: f64) -> Result<DVector<f64>> {
        Ok(self.density_at(t)?.component_mul(self.gen.m()))
    }

    /// Schrödinger potentials `(φ_t, ψ_t) = (log f_t, log g_t)`.
    pub fn potentials_at(&self, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let f = self.f_at(t)?;
        let g = self.g_at(t)?;
        if f.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::EndpointSingular("φ_t = log f_t"));
        }
        if g.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::EndpointSingular("ψ_t = log g_t"));
        }
        Ok((f.map(f64::ln), g.map(f64::ln)))
    }

    /// Forward and backward jump kernels of the transformed walk at time `t`:
    /// `A→_x(y) = g_t(y)/g_t(x) J→_x(y)` and `A←_x(y) = f_t(y)/f_t(x) J←_x(y)`.
    pub fn current_kernels_at(&self, t: f64) -> Result<(JumpKernel, JumpKernel)> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: 1.0 });
        }
        let f = self.f_at(t)?;
        let g = self.g_at(t)?;
        let fwd = tilt(self.gen.kernel(crate::graph::Direction::Forward), &g)?;
        let bwd = tilt(self.gen.kernel(crate::graph::Direction::Backward), &f)?;
        Ok((fwd, bwd))
    }

    pub fn coupling(&self) -> Result<Coupling> {
        endpoint_coupling_with(&self.gen, &self.semigroups, &self.endpoint)
    }

    /// `max_z |Σ_{x,y} π(x,y) R^{xy}_t(z) - μ_t(z)|`; errors when above `tol`.
    pub fn verify_bridge_mixture(&self, t: f64, tol: f64) -> Result<f64> {
        let residual = self.bridge_mixture_residual(t)?;
        if residual > tol {
            return Err(Error::MixtureResidual { residual, tol });
        }
        Ok(residual)
    }

    pub fn bridge_mixture_residual(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: 1.0 });
        }
        let n = self.gen.len();
        let pi = self.coupling()?.pi;
        let p1 = self.semigroups.forward.transition(1.0)?;
        let pt = self.semigroups.forward.transition(t)?;
        let ps = self.semigroups.forward.transition(1.0 - t)?;
        let mut mixture = DVector::zeros(n);
        for x in 0..n {
            for y in 0..n {
                let w = pi[(x, y)];
                if w == 0.0 {
                    continue;
                }
                let norm = p1.get(x, y);
                if !(norm > 0.0) {
                    return Err(Error::UndefinedBridge { x, y });
                }
                for z in 0..n {
                    mixture[z] += w * pt.get(x, z) * ps.get(z, y) / norm;
                }
            }
        }
        Ok((mixture - self.measure_at(t)?).amax())
    }
}

fn tilt(kernel: &JumpKernel, weight: &DVector<f64>) -> Result<JumpKernel> {
    let n = kernel.len();
    let mut rates = DMatrix::zeros(n, n);
    for x in 0..n {
        for &(y, j) in kernel.neighbors(x) {
            if !(weight[x] > 0.0) {
                return Err(Error::EndpointSingular("current kernel"));
            }
            rates[(x, y)] = weight[y] / weight[x] * j;
        }
    }
    JumpKernel::from_matrix(rates)
}
