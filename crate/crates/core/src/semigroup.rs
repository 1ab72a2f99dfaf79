//! Markov semigroups `e^{tL}` on finite state spaces.
//!
//! Reversible generators are symmetrised by the diagonal conjugation
//! `S = D^{1/2} L D^{-1/2}` (`D = diag(m)`) and diagonalised once; the
//! exponential is then `D^{-1/2} Q e^{tΛ} Qᵀ D^{1/2}` for every `t`.
//! Everything else goes through scaling-and-squaring around a degree-13
//! diagonal Padé approximant.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::{stationary_measure, Direction, GeneratorPair};

/// Negative transition probabilities above this magnitude are an error.
pub const CLAMP_TOL: f64 = 1e-12;

/// Target for `‖tL‖_∞ / 2^k` in scaling-and-squaring.
const SQUARING_THETA: f64 = 0.5;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

#[derive(Debug, Clone)]
enum Kind {
    Spectral { sqrt_m: DVector<f64>, eigenvalues: DVector<f64>, eigenvectors: DMatrix<f64> },
    Dense { generator: DMatrix<f64> },
}

/// Immutable handle computing `e^{tL}` for a fixed generator.
#[derive(Debug, Clone)]
pub struct Semigroup {
    n: usize,
    kind: Kind,
}

impl Semigroup {
    /// Uses the spectral path when `m` is given and `L` satisfies detailed
    /// balance with respect to it; otherwise falls back to Padé.
    pub fn new(generator: &DMatrix<f64>, m: Option<&DVector<f64>>) -> Result<Self> {
        check_generator(generator)?;
        let n = generator.nrows();
        if let Some(m) = m {
            if m.len() != n {
                return Err(Error::Dimension { expected: n, got: m.len() });
            }
            if is_reversible(generator, m) {
                return Ok(Self::spectral(generator, m));
            }
        }
        Ok(Semigroup { n, kind: Kind::Dense { generator: generator.clone() } })
    }

    /// Semigroup of `L→` or `L←` of a generator pair.
    pub fn for_pair(gen: &GeneratorPair, dir: Direction) -> Result<Self> {
        Self::new(gen.generator(dir), Some(gen.m()))
    }

    /// Generic entry point: finds the stationary measure itself when the
    /// generator is irreducible so the spectral path can be used.
    pub fn from_generator(generator: &DMatrix<f64>) -> Result<Self> {
        check_generator(generator)?;
        let kernel = crate::graph::JumpKernel::from_matrix(DMatrix::from_fn(generator.nrows(), generator.ncols(), |i, j| {
            if i == j {
                0.0
            } else {
                generator[(i, j)].max(0.0)
            }
        }))?;
        match stationary_measure(&kernel) {
            Ok(m) => Self::new(generator, Some(m.weights())),
            Err(_) => Self::new(generator, None),
        }
    }

    fn spectral(generator: &DMatrix<f64>, m: &DVector<f64>) -> Self {
        let n = generator.nrows();
        let sqrt_m = m.map(f64::sqrt);
        let s = DMatrix::from_fn(n, n, |i, j| sqrt_m[i] * generator[(i, j)] / sqrt_m[j]);
        let s = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::new(s);
        let eigenvalues = eig.eigenvalues.map(|l| l.min(0.0));
        Semigroup { n, kind: Kind::Spectral { sqrt_m, eigenvalues, eigenvectors: eig.eigenvectors } }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self.kind, Kind::Spectral { .. })
    }

    /// Sorted eigenvalues of the symmetrised generator (spectral path only).
    pub fn eigenvalues(&self) -> Option<&DVector<f64>> {
        match &self.kind {
            Kind::Spectral { eigenvalues, .. } => Some(eigenvalues),
            Kind::Dense { .. } => None,
        }
    }

    /// `e^{tL} v`.
    pub fn apply(&self, t: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_time(t)?;
        if v.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("vector has non-finite entries".into()));
        }
        if t == 0.0 {
            return Ok(v.clone());
        }
        match &self.kind {
            Kind::Spectral { sqrt_m, eigenvalues, eigenvectors } => {
                let w = v.component_mul(sqrt_m);
                let mut c = eigenvectors.tr_mul(&w);
                for (ci, l) in c.iter_mut().zip(eigenvalues.iter()) {
                    *ci *= (t * l).exp();
                }
                Ok((eigenvectors * c).component_div(sqrt_m))
            }
            Kind::Dense { generator } => Ok(expm(&(generator * t)) * v),
        }
    }

    /// The full matrix `e^{tL}`.
    pub fn matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(DMatrix::identity(self.n, self.n));
        }
        match &self.kind {
            Kind::Spectral { sqrt_m, eigenvalues, eigenvectors } => {
                let mut scaled = eigenvectors.clone();
                for (j, l) in eigenvalues.iter().enumerate() {
                    scaled.column_mut(j).scale_mut((t * l).exp());
                }
                let core = scaled * eigenvectors.transpose();
                Ok(DMatrix::from_fn(self.n, self.n, |i, j| core[(i, j)] * sqrt_m[j] / sqrt_m[i]))
            }
            Kind::Dense { generator } => Ok(expm(&(generator * t))),
        }
    }

    /// Transition probabilities `p_t(x, y)` with tiny negative entries clamped.
    pub fn transition(&self, t: f64) -> Result<TransitionMatrix> {
        TransitionMatrix::new(t, self.matrix(t)?)
    }
}

/// `p_t(x, y)`: probability to be at `y` at horizon `t` when starting at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    horizon: f64,
    entries: DMatrix<f64>,
}

impl TransitionMatrix {
    /// Clamps entries in `[-CLAMP_TOL, 0)` to zero; anything more negative is rejected.
    pub fn new(horizon: f64, mut entries: DMatrix<f64>) -> Result<Self> {
        for v in entries.iter_mut() {
            if *v < 0.0 {
                if *v < -CLAMP_TOL {
                    return Err(Error::NegativeProbability { value: *v });
                }
                *v = 0.0;
            }
        }
        Ok(TransitionMatrix { horizon, entries })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[(x, y)]
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }
}

/// `e^{tL} v` for a bare generator matrix.
pub fn semigroup_apply(generator: &DMatrix<f64>, t: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    Semigroup::from_generator(generator)?.apply(t, v)
}

/// Forward and backward semigroups of one pair, built once.
#[derive(Debug, Clone)]
pub struct SemigroupPair {
    pub forward: Semigroup,
    pub backward: Semigroup,
}

impl SemigroupPair {
    pub fn new(gen: &GeneratorPair) -> Result<Self> {
        Ok(SemigroupPair { forward: Semigroup::for_pair(gen, Direction::Forward)?, backward: Semigroup::for_pair(gen, Direction::Backward)? })
    }

    pub fn get(&self, dir: Direction) -> &Semigroup {
        match dir {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }
}

/// `f_t = e^{t L←} f_0`.
pub fn propagate_f(semigroups: &SemigroupPair, f0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    check_unit_time(t)?;
    semigroups.backward.apply(t, f0)
}

/// `g_t = e^{(1-t) L→} g_1`.
pub fn propagate_g(semigroups: &SemigroupPair, g1: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    check_unit_time(t)?;
    semigroups.forward.apply(1.0 - t, g1)
}

/// Density `r(s,x;t,y) = p_{t-s}(x,y) / m(y)` of the stationary walk.
pub fn transition_density(gen: &GeneratorPair, s: f64, t: f64) -> Result<DMatrix<f64>> {
    if !(s < t) {
        return Err(Error::InvalidInput(format!("transition density needs s < t, got s = {s}, t = {t}")));
    }
    check_unit_time(s)?;
    check_unit_time(t)?;
    let p = Semigroup::for_pair(gen, Direction::Forward)?.transition(t - s)?;
    let m = gen.m();
    let n = gen.len();
    Ok(DMatrix::from_fn(n, n, |x, y| p.get(x, y) / m[y]))
}

/// Time-`t` marginal of the bridge from `x` (time 0) to `y` (time 1):
/// `z ↦ p_t(x,z) p_{1-t}(z,y) / p_1(x,y)`.
pub fn bridge_marginal(gen: &GeneratorPair, x: usize, y: usize, t: f64) -> Result<DVector<f64>> {
    let sg = Semigroup::for_pair(gen, Direction::Forward)?;
    bridge_marginal_with(&sg, x, y, t)
}

pub fn bridge_marginal_with(forward: &Semigroup, x: usize, y: usize, t: f64) -> Result<DVector<f64>> {
    let n = forward.len();
    if x >= n || y >= n {
        return Err(Error::InvalidInput(format!("bridge endpoints ({x}, {y}) out of range for {n} states")));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: 1.0 });
    }
    let p1 = forward.transition(1.0)?;
    let norm = p1.get(x, y);
    if !(norm > 0.0) {
        return Err(Error::UndefinedBridge { x, y });
    }
    let pt = forward.transition(t)?;
    let ps = forward.transition(1.0 - t)?;
    Ok(DVector::from_fn(n, |z, _| pt.get(x, z) * ps.get(z, y) / norm))
}

/// Matrix exponential by scaling-and-squaring with a [13/13] Padé core.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = inf_norm(a);
    let k = if norm > SQUARING_THETA { (norm / SQUARING_THETA).log2().ceil() as i32 } else { 0 };
    let a = a / 2f64.powi(k);
    let id = DMatrix::<f64>::identity(n, n);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular for ‖A‖ ≤ 0.5");
    for _ in 0..k {
        r = &r * &r;
    }
    r
}

fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn is_reversible(l: &DMatrix<f64>, m: &DVector<f64>) -> bool {
    let n = l.nrows();
    let scale = inf_norm(l).max(1.0) * m.amax().max(f64::MIN_POSITIVE);
    if m.iter().any(|&w| !(w > 0.0)) {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if (m[i] * l[(i, j)] - m[j] * l[(j, i)]).abs() > 1e-12 * scale {
                return false;
            }
        }
    }
    true
}

fn check_generator(l: &DMatrix<f64>) -> Result<()> {
    if !l.is_square() {
        return Err(Error::InvalidInput("generator must be square".into()));
    }
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("generator has non-finite entries".into()));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: f64::INFINITY });
    }
    Ok(())
}

fn check_unit_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange { t, lo: 0.0, hi: 1.0 });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{PositiveMeasure, StateSpace};

    fn two_state() -> GeneratorPair {
        GeneratorPair::counting_walk(StateSpace::path(2).unwrap()).unwrap().with_normalized_measure()
    }

    fn biased_three() -> GeneratorPair {
        let r = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.5, 1.0, 0.0, 3.0, 0.7, 0.2, 0.0]);
        GeneratorPair::from_forward_rates(r, None).unwrap()
    }

    #[test]
    fn two_state_closed_form() {
        let gen = two_state();
        let sg = Semigroup::for_pair(&gen, Direction::Forward).unwrap();
        assert!(sg.is_spectral());
        let v = sg.apply(1.0, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let e = (-2.0f64).exp();
        assert!((v[0] - (1.0 + e) / 2.0).abs() < 1e-15);
        assert!((v[1] - (1.0 - e) / 2.0).abs() < 1e-15);
        let dense = expm(gen.generator(Direction::Forward));
        assert!((dense[(0, 0)] - (1.0 + e) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_time_and_constants() {
        let gen = biased_three();
        let sg = Semigroup::for_pair(&gen, Direction::Forward).unwrap();
        assert!(!sg.is_spectral());
        let v = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        assert_eq!(sg.apply(0.0, &v).unwrap(), v);
        let ones = DVector::from_element(3, 1.0);
        for t in [0.1, 1.0, 7.5] {
            assert!((sg.apply(t, &ones).unwrap() - &ones).amax() < 1e-13);
        }
        assert!(sg.apply(-0.1, &v).is_err());
    }

    #[test]
    fn spectral_and_pade_agree() {
        let space = StateSpace::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 3)]).unwrap();
        let m = PositiveMeasure::new(vec![0.1, 0.3, 0.2, 0.25, 0.15]).unwrap();
        let s = DMatrix::from_fn(5, 5, |i, j| 0.5 + 0.1 * (i + j) as f64);
        let gen = GeneratorPair::reversible_walk(space, m, &s).unwrap();
        let spectral = Semigroup::for_pair(&gen, Direction::Forward).unwrap();
        let dense = Semigroup::new(gen.generator(Direction::Forward), None).unwrap();
        for t in [0.01, 0.5, 1.0, 3.0] {
            let diff = (spectral.matrix(t).unwrap() - dense.matrix(t).unwrap()).amax();
            assert!(diff < 1e-13, "t = {t}: {diff}");
        }
    }

    #[test]
    fn semigroup_law_and_invariance() {
        let gen = biased_three();
        let sg = Semigroup::for_pair(&gen, Direction::Forward).unwrap();
        let (s, t) = (0.37, 0.81);
        let lhs = sg.matrix(s + t).unwrap();
        let rhs = sg.matrix(s).unwrap() * sg.matrix(t).unwrap();
        assert!((lhs - rhs).amax() < 1e-12);
        let p = sg.transition(0.6).unwrap();
        let mp = gen.m().transpose() * p.entries();
        assert!((mp - gen.m().transpose()).amax() < 1e-12);
    }

    #[test]
    fn heat_equation_residual() {
        let gen = biased_three();
        let sgs = SemigroupPair::new(&gen).unwrap();
        let g1 = DVector::from_vec(vec![1.0, 3.0, 0.2]);
        let d = 1e-4;
        let t = 0.4;
        let gp = propagate_g(&sgs, &g1, t + d).unwrap();
        let gm = propagate_g(&sgs, &g1, t - d).unwrap();
        let g = propagate_g(&sgs, &g1, t).unwrap();
        let res = (gp - gm) / (2.0 * d) + gen.generator(Direction::Forward) * &g;
        assert!(res.amax() < 1e-7, "{}", res.amax());
        let f0 = DVector::from_vec(vec![2.0, 0.0, 0.5]);
        let fp = propagate_f(&sgs, &f0, t + d).unwrap();
        let fm = propagate_f(&sgs, &f0, t - d).unwrap();
        let f = propagate_f(&sgs, &f0, t).unwrap();
        let res = (fp - fm) / (2.0 * d) - gen.generator(Direction::Backward) * &f;
        assert!(res.amax() < 1e-7);
        assert!(propagate_f(&sgs, &f0, 1.2).is_err());
    }

    #[test]
    fn harmonic_constant_and_positivity() {
        let gen = two_state();
        let sgs = SemigroupPair::new(&gen).unwrap();
        let ones = DVector::from_element(2, 1.0);
        for t in [0.0, 0.3, 1.0] {
            assert!((propagate_g(&sgs, &ones, t).unwrap() - &ones).amax() < 1e-15);
        }
        let f0 = DVector::from_vec(vec![2.0, 0.0]);
        for t in [1e-3, 0.1, 0.5, 1.0] {
            let f = propagate_f(&sgs, &f0, t).unwrap();
            assert!(f.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn density_symmetry_and_scaling() {
        let gen = two_state();
        let r = transition_density(&gen, 0.0, 1.0).unwrap();
        let p = Semigroup::for_pair(&gen, Direction::Forward).unwrap().transition(1.0).unwrap();
        assert!((&r - p.entries() * 2.0).amax() < 1e-14);
        let space = StateSpace::complete(4).unwrap();
        let gen = GeneratorPair::reversible_walk(space, PositiveMeasure::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap(), &DMatrix::from_element(4, 4, 0.7)).unwrap();
        let r = transition_density(&gen, 0.2, 0.9).unwrap();
        assert!((&r - r.transpose()).amax() < 1e-10);
        let r = transition_density(&gen, 0.5, 0.5 + 1e-9).unwrap();
        for x in 0..4 {
            assert!((r[(x, x)] * gen.m()[x] - 1.0).abs() < 1e-7);
        }
        assert!(transition_density(&gen, 0.5, 0.5).is_err());
    }

    #[test]
    fn bridge_two_state_midpoint() {
        let gen = two_state();
        let b = bridge_marginal(&gen, 0, 0, 0.5).unwrap();
        // p_{1/2}(0,·) = ((1+e^{-1})/2, (1-e^{-1})/2), p_1(0,0) = (1+e^{-2})/2
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        let expect0 = ((1.0 + e1) / 2.0).powi(2) / ((1.0 + e2) / 2.0);
        let expect1 = ((1.0 - e1) / 2.0).powi(2) / ((1.0 + e2) / 2.0);
        assert!((b[0] - expect0).abs() < 1e-14);
        assert!((b[1] - expect1).abs() < 1e-14);
        assert!((b.sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bridge_pins_endpoints() {
        let gen = biased_three();
        let early = bridge_marginal(&gen, 0, 2, 1e-6).unwrap();
        let late = bridge_marginal(&gen, 0, 2, 1.0 - 1e-6).unwrap();
        assert!(early[0] > 1.0 - 1e-4);
        assert!(late[2] > 1.0 - 1e-4);
        assert!(bridge_marginal(&gen, 0, 2, 1.0).is_err());
    }

    #[test]
    fn bridge_undefined_when_unreachable() {
        // Two disconnected blocks can only be built as a bare generator.
        let l = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let sg = Semigroup::new(&l, None).unwrap();
        assert!(matches!(bridge_marginal_with(&sg, 0, 1, 0.5), Err(Error::UndefinedBridge { .. })));
    }

    #[test]
    fn clamping_rules() {
        let m = DMatrix::from_row_slice(1, 2, &[-1e-13, 1.0]);
        assert_eq!(TransitionMatrix::new(1.0, m).unwrap().get(0, 0), 0.0);
        let m = DMatrix::from_row_slice(1, 2, &[-1e-9, 1.0]);
        assert!(TransitionMatrix::new(1.0, m).is_err());
    }

    #[test]
    fn bare_generator_entry_point() {
        let gen = biased_three();
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = semigroup_apply(gen.generator(Direction::Forward), 0.7, &v).unwrap();
        let b = expm(&(gen.generator(Direction::Forward) * 0.7)) * &v;
        assert!((a - b).amax() < 1e-13);
    }
}
