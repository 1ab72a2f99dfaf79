//! Finite graphs, jump kernels and the forward/backward generator pair.
//!
//! Rates are stored as dense row-major matrices: `rates[(x, y)] = J_x(y)`.
//! A zero entry means "no jump from x to y". The generator acting on column
//! vectors is `L = J - diag(J_x(𝒳))`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the stationarity precondition of
/// [`GeneratorPair::stationary_pair_from_forward`].
pub const STATIONARITY_TOL: f64 = 1e-10;

/// Tolerance used by [`GeneratorPair::validate`] for exact-by-construction invariants.
pub const VALIDATION_TOL: f64 = 1e-12;

/// Selects the forward (`J→`, `L→`) or backward (`J←`, `L←`) objects of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

/// A finite connected graph: `n` states with a symmetric edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    n: usize,
    labels: Option<Vec<String>>,
    adjacency: Vec<Vec<usize>>,
}

impl StateSpace {
    /// Builds a connected graph from an undirected edge list.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("state space must have at least one state".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidInput(format!("edge ({u}, {v}) references a state >= {n}")));
            }
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop at state {u}")));
            }
            if !adjacency[u].contains(&v) {
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
        }
        for nb in adjacency.iter_mut() {
            nb.sort_unstable();
        }
        let space = StateSpace { n, labels: None, adjacency };
        space.ensure_connected()?;
        Ok(space)
    }

    /// Complete graph on `n` states.
    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self::new(n, &edges)
    }

    /// Cycle `Z_n` with edges `k ~ k+1 mod n`.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidInput("a cycle needs at least 3 states".into()));
        }
        let edges: Vec<_> = (0..n).map(|k| (k, (k + 1) % n)).collect();
        Self::new(n, &edges)
    }

    /// Path `0 - 1 - ... - n-1`.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|k| (k - 1, k)).collect();
        Self::new(n, &edges)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn neighbors(&self, x: usize) -> &[usize] {
        &self.adjacency[x]
    }

    /// `n_x = #{y : x ~ y}`.
    pub fn degree(&self, x: usize) -> usize {
        self.adjacency[x].len()
    }

    pub fn are_adjacent(&self, x: usize, y: usize) -> bool {
        self.adjacency[x].binary_search(&y).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(x, nb)| nb.iter().filter(move |&&y| y > x).map(move |&y| (x, y)))
    }

    /// Graph distance from `x` (`usize::MAX` when unreachable).
    pub fn distances_from(&self, x: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n];
        let mut queue = VecDeque::new();
        dist[x] = 0;
        queue.push_back(x);
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Closed ball of radius `r` around `x`, sorted by (distance, index).
    pub fn ball(&self, x: usize, r: usize) -> Vec<usize> {
        let dist = self.distances_from(x);
        let mut ball: Vec<usize> = (0..self.n).filter(|&v| dist[v] <= r).collect();
        ball.sort_by_key(|&v| (dist[v], v));
        ball
    }

    fn ensure_connected(&self) -> Result<()> {
        let reached = self.distances_from(0).iter().filter(|&&d| d != usize::MAX).count();
        if reached == self.n {
            Ok(())
        } else {
            Err(Error::Disconnected { reached, n: self.n })
        }
    }
}

/// A measure on the states; stationary measures are strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveMeasure {
    weights: DVector<f64>,
}

impl PositiveMeasure {
    /// Nonnegative finite weights.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("measure must have at least one weight".into()));
        }
        if let Some((x, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidInput(format!("measure weight {w} at state {x} is not a finite nonnegative number")));
        }
        Ok(PositiveMeasure { weights: DVector::from_vec(weights) })
    }

    /// Strictly positive finite weights (stationary/reversing measures).
    pub fn strictly_positive(weights: Vec<f64>) -> Result<Self> {
        let m = Self::new(weights)?;
        if let Some((x, _)) = m.weights.iter().enumerate().find(|(_, w)| **w <= 0.0) {
            return Err(Error::InvalidInput(format!("measure vanishes at state {x}; a stationary measure must charge every state")));
        }
        Ok(m)
    }

    pub fn uniform(n: usize) -> Self {
        PositiveMeasure { weights: DVector::from_element(n, 1.0 / n as f64) }
    }

    pub fn counting(n: usize) -> Self {
        PositiveMeasure { weights: DVector::from_element(n, 1.0) }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.sum()
    }

    pub fn normalized(&self) -> Self {
        PositiveMeasure { weights: &self.weights / self.total() }
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        (self.total() - 1.0).abs() <= tol
    }
}

/// Jump rates `J_x(y)`, zero on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpKernel {
    rates: DMatrix<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
    totals: Vec<f64>,
}

impl JumpKernel {
    pub fn from_matrix(rates: DMatrix<f64>) -> Result<Self> {
        if !rates.is_square() {
            return Err(Error::InvalidInput(format!("rate matrix is {}x{}, not square", rates.nrows(), rates.ncols())));
        }
        let n = rates.nrows();
        for x in 0..n {
            for y in 0..n {
                let r = rates[(x, y)];
                if !r.is_finite() || r < 0.0 {
                    return Err(Error::InvalidInput(format!("rate J_{x}({y}) = {r} is not finite and nonnegative")));
                }
                if x == y && r != 0.0 {
                    return Err(Error::InvalidInput(format!("diagonal rate J_{x}({x}) = {r} must be zero")));
                }
            }
        }
        let neighbors: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|x| (0..n).filter(|&y| rates[(x, y)] > 0.0).map(|y| (y, rates[(x, y)])).collect())
            .collect();
        let totals = neighbors.iter().map(|nb| nb.iter().map(|&(_, r)| r).sum()).collect();
        Ok(JumpKernel { rates, neighbors, totals })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(row) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension { expected: n, got: row.len() });
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.rates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.nrows() == 0
    }

    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.rates[(x, y)]
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// Out-neighbors `y` with `J_x(y) > 0`, paired with the rate.
    pub fn neighbors(&self, x: usize) -> &[(usize, f64)] {
        &self.neighbors[x]
    }

    /// Total jump frequency `J_x(𝒳)`.
    pub fn total_rate(&self, x: usize) -> f64 {
        self.totals[x]
    }

    pub fn max_total_rate(&self) -> f64 {
        self.totals.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(0.0, f64::max)
    }

    /// Rate matrix of the generator: off-diagonal `J_x(y)`, diagonal `-J_x(𝒳)`.
    pub fn generator(&self) -> DMatrix<f64> {
        let mut l = self.rates.clone();
        for x in 0..self.len() {
            l[(x, x)] = -self.totals[x];
        }
        l
    }
}

/// Forward and backward kernels of an `m`-stationary random walk.
#[derive(Debug, Clone)]
pub struct GeneratorPair {
    space: StateSpace,
    forward: JumpKernel,
    backward: JumpKernel,
    m: PositiveMeasure,
    l_forward: DMatrix<f64>,
    l_backward: DMatrix<f64>,
    reversible: bool,
}

impl GeneratorPair {
    /// Reversible walk `J_x(y) = s(x,y) √(m_y/m_x)` on the edges of `space`.
    ///
    /// `s` is a symmetric matrix that is strictly positive on every edge;
    /// entries off the edge set are ignored.
    pub fn reversible_walk(space: StateSpace, m: PositiveMeasure, s: &DMatrix<f64>) -> Result<Self> {
        let n = space.len();
        check_measure(&m, n)?;
        if s.nrows() != n || s.ncols() != n {
            return Err(Error::Dimension { expected: n, got: s.nrows() });
        }
        let w = m.weights();
        let mut rates = DMatrix::zeros(n, n);
        for (x, y) in space.edges() {
            let (sxy, syx) = (s[(x, y)], s[(y, x)]);
            if sxy != syx {
                return Err(Error::InvalidInput(format!("edge weights are not symmetric: s({x},{y}) = {sxy}, s({y},{x}) = {syx}")));
            }
            if !(sxy > 0.0) || !sxy.is_finite() {
                return Err(Error::InvalidInput(format!("edge weight s({x},{y}) = {sxy} must be finite and positive")));
            }
            rates[(x, y)] = sxy * (w[y] / w[x]).sqrt();
            rates[(y, x)] = sxy * (w[x] / w[y]).sqrt();
        }
        let kernel = JumpKernel::from_matrix(rates)?;
        Ok(Self::assemble(space, kernel.clone(), kernel, m, true))
    }

    /// Counting walk: `m_x = 1`, `J_x = Σ_{y~x} δ_y`.
    pub fn counting_walk(space: StateSpace) -> Result<Self> {
        let n = space.len();
        Self::reversible_walk(space, PositiveMeasure::counting(n), &DMatrix::from_element(n, n, 1.0))
    }

    /// Simple walk: `m_x = n_x`, `J_x(y) = 1/n_x`.
    pub fn simple_walk(space: StateSpace) -> Result<Self> {
        let n = space.len();
        let deg: Vec<f64> = (0..n).map(|x| space.degree(x) as f64).collect();
        let s = DMatrix::from_fn(n, n, |x, y| 1.0 / (deg[x] * deg[y]).sqrt());
        Self::reversible_walk(space, PositiveMeasure::strictly_positive(deg)?, &s)
    }

    /// Completes a forward kernel with its time reversal `J←_y(x) = m(x) J→_x(y) / m(y)`.
    ///
    /// The adjacency of the result is the symmetrized support of `forward`,
    /// so directed (non-reversible) walks are accepted.
    pub fn stationary_pair_from_forward(forward: JumpKernel, m: PositiveMeasure) -> Result<Self> {
        let n = forward.len();
        check_measure(&m, n)?;
        let w = m.weights().clone();
        let l = forward.generator();
        let residual = (w.transpose() * &l).amax();
        let scale = forward.max_rate().max(f64::MIN_POSITIVE) * w.amax().max(1.0);
        if residual > STATIONARITY_TOL * scale {
            return Err(Error::NotStationary { residual });
        }
        let mut back = DMatrix::zeros(n, n);
        for x in 0..n {
            for &(y, r) in forward.neighbors(x) {
                back[(y, x)] = w[x] * r / w[y];
            }
        }
        let backward = JumpKernel::from_matrix(back)?;
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|x| forward.neighbors(x).iter().map(move |&(y, _)| (x, y))).collect();
        let space = StateSpace::new(n, &edges)?;
        let reversible = detailed_balance_residual(&forward, &m) <= VALIDATION_TOL * scale;
        let backward = if reversible { forward.clone() } else { backward };
        Ok(Self::assemble(space, forward, backward, m, reversible))
    }

    /// Forward kernel given by a full rate matrix; when `m` is absent the
    /// stationary probability is computed from `m·L = 0`, `Σ m = 1`.
    pub fn from_forward_rates(rates: DMatrix<f64>, m: Option<PositiveMeasure>) -> Result<Self> {
        let forward = JumpKernel::from_matrix(rates)?;
        let m = match m {
            Some(m) => m,
            None => stationary_measure(&forward)?,
        };
        Self::stationary_pair_from_forward(forward, m)
    }

    /// Nearest-neighbour discretisation of `L = (-V'∂ + ∂²)/2` on a periodic grid.
    ///
    /// `J_x(x±1) = exp((V(x) - V(x±1))/2) / (2h²)` with `h = length / n`. Detailed
    /// balance holds exactly for `m ∝ e^{-V}`, normalised to a probability.
    pub fn diffusion_grid(potential: &[f64], length: f64) -> Result<Self> {
        let n = potential.len();
        if n < 8 {
            return Err(Error::InvalidInput(format!("diffusion grid needs at least 8 points, got {n}")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidInput(format!("grid length {length} must be finite and positive")));
        }
        if let Some(v) = potential.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("potential value {v} is not finite")));
        }
        let h = length / n as f64;
        let c = 0.5 / (h * h);
        let mut rates = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in [(x + 1) % n, (x + n - 1) % n] {
                rates[(x, y)] = c * ((potential[x] - potential[y]) / 2.0).exp();
            }
        }
        let vmin = potential.iter().cloned().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = potential.iter().map(|v| (vmin - v).exp()).collect();
        let m = PositiveMeasure::strictly_positive(w)?.normalized();
        let space = StateSpace::cycle(n)?;
        let kernel = JumpKernel::from_matrix(rates)?;
        Ok(Self::assemble(space, kernel.clone(), kernel, m, true))
    }

    fn assemble(space: StateSpace, forward: JumpKernel, backward: JumpKernel, m: PositiveMeasure, reversible: bool) -> Self {
        let l_forward = forward.generator();
        let l_backward = backward.generator();
        GeneratorPair { space, forward, backward, m, l_forward, l_backward, reversible }
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn measure(&self) -> &PositiveMeasure {
        &self.m
    }

    pub fn m(&self) -> &DVector<f64> {
        self.m.weights()
    }

    /// True when `J→ = J←` (detailed balance holds).
    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    pub fn kernel(&self, dir: Direction) -> &JumpKernel {
        match dir {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    pub fn generator(&self, dir: Direction) -> &DMatrix<f64> {
        match dir {
            Direction::Forward => &self.l_forward,
            Direction::Backward => &self.l_backward,
        }
    }

    /// Same kernels with `m` replaced by `m / Σm`.
    pub fn with_normalized_measure(&self) -> Self {
        let mut out = self.clone();
        out.m = self.m.normalized();
        out
    }

    /// Checks every structural invariant and reports residuals.
    pub fn validate(&self) -> ValidationReport {
        let n = self.len();
        let w = self.m();
        let rate_scale = self.forward.max_rate().max(self.backward.max_rate()).max(1.0);
        let tol = VALIDATION_TOL * rate_scale;
        let mut checks = Vec::new();

        let connected = self.space.ensure_connected().is_ok();
        checks.push(Check::new("connectivity", connected, if connected { 0.0 } else { 1.0 }, 0.0, true));

        let positive = w.iter().all(|&x| x > 0.0 && x.is_finite());
        let min_w = w.iter().cloned().fold(f64::INFINITY, f64::min);
        checks.push(Check::new("measure_positive", positive, min_w, 0.0, true));

        for (name, l) in [("row_sums_forward", &self.l_forward), ("row_sums_backward", &self.l_backward)] {
            let r = (0..n).map(|x| l.row(x).sum().abs()).fold(0.0, f64::max);
            checks.push(Check::residual(name, r, tol, true));
        }

        let m_scale = w.amax().max(f64::MIN_POSITIVE);
        for (name, l) in [("stationarity_forward", &self.l_forward), ("stationarity_backward", &self.l_backward)] {
            let r = (w.transpose() * l).amax();
            checks.push(Check::residual(name, r, tol * m_scale, true));
        }

        let mut duality = 0.0f64;
        for x in 0..n {
            for y in 0..n {
                duality = duality.max((w[x] * self.forward.rate(x, y) - w[y] * self.backward.rate(y, x)).abs());
            }
        }
        checks.push(Check::residual("duality", duality, tol * m_scale, true));

        let mut support = true;
        for x in 0..n {
            for &(y, _) in self.forward.neighbors(x).iter().chain(self.backward.neighbors(x)) {
                support &= self.space.are_adjacent(x, y);
            }
        }
        checks.push(Check::new("support_on_edges", support, if support { 0.0 } else { 1.0 }, 0.0, true));

        let bound = (0..n).map(|x| self.forward.total_rate(x) + self.backward.total_rate(x)).fold(0.0, f64::max);
        checks.push(Check::new("bounded_total_rates", bound.is_finite(), bound, f64::INFINITY, true));

        let db = detailed_balance_residual(&self.forward, &self.m);
        checks.push(Check::residual("detailed_balance", db, tol * m_scale, false));

        let passed = checks.iter().filter(|c| c.required).all(|c| c.passed);
        ValidationReport { passed, reversible: db <= tol * m_scale, checks, regularity: self.regularity_constants() }
    }

    /// Tightest `c`, `σ` with `m_y/n_y ≤ c m_x/n_x` and `s(x,y)√(n_x n_y) ≤ σ` on all edges,
    /// where `s(x,y) = J_x(y) √(m_x/m_y)` recovers the symmetric edge weight.
    pub fn regularity_constants(&self) -> Option<RegularityConstants> {
        if !self.reversible {
            return None;
        }
        let w = self.m();
        let deg = |x: usize| self.space.degree(x) as f64;
        let mut c = 0.0f64;
        let mut sigma = 0.0f64;
        for x in 0..self.len() {
            for &y in self.space.neighbors(x) {
                c = c.max((w[y] / deg(y)) / (w[x] / deg(x)));
                let s = self.forward.rate(x, y) * (w[x] / w[y]).sqrt();
                sigma = sigma.max(s * (deg(x) * deg(y)).sqrt());
            }
        }
        Some(RegularityConstants { c, sigma })
    }
}

fn check_measure(m: &PositiveMeasure, n: usize) -> Result<()> {
    if m.len() != n {
        return Err(Error::Dimension { expected: n, got: m.len() });
    }
    if let Some((x, _)) = m.weights().iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
        return Err(Error::InvalidInput(format!("measure vanishes at state {x}; a stationary measure must charge every state")));
    }
    Ok(())
}

fn detailed_balance_residual(kernel: &JumpKernel, m: &PositiveMeasure) -> f64 {
    let w = m.weights();
    let n = kernel.len();
    let mut r = 0.0f64;
    for x in 0..n {
        for y in 0..n {
            r = r.max((w[x] * kernel.rate(x, y) - w[y] * kernel.rate(y, x)).abs());
        }
    }
    r
}

/// Stationary probability of an irreducible kernel, from `Lᵀ mᵀ = 0` with one
/// equation replaced by `Σ m = 1`.
pub fn stationary_measure(kernel: &JumpKernel) -> Result<PositiveMeasure> {
    let n = kernel.len();
    let mut a = kernel.generator().transpose();
    let mut b = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let m = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidInput("forward kernel is reducible: no unique stationary measure".into()))?;
    PositiveMeasure::strictly_positive(m.iter().map(|&v| if v.abs() < 1e-15 { 0.0 } else { v }).collect())
}

/// One line of a [`ValidationReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    /// Diagnostic checks (detailed balance) do not affect the overall verdict.
    pub required: bool,
}

impl Check {
    fn new(name: &str, passed: bool, residual: f64, tolerance: f64, required: bool) -> Self {
        Check { name: name.to_string(), passed, residual, tolerance, required }
    }

    fn residual(name: &str, residual: f64, tolerance: f64, required: bool) -> Self {
        Self::new(name, residual <= tolerance, residual, tolerance, required)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    pub c: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub reversible: bool,
    pub checks: Vec<Check>,
    pub regularity: Option<RegularityConstants>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

// ---------------------------------------------------------------------------
// Graph JSON

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StatesSpec {
    Count(usize),
    Labels(Vec<String>),
}

impl StatesSpec {
    fn len(&self) -> usize {
        match self {
            StatesSpec::Count(n) => *n,
            StatesSpec::Labels(l) => l.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Reversible,
    Counting,
    Simple,
    Explicit,
    DiffusionGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub u: usize,
    pub v: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

/// On-disk graph description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<StatesSpec>,
    pub kind: GraphKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<EdgeSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

impl GraphFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Explicit form of an existing pair (forward rates plus measure).
    pub fn from_generator(gen: &GeneratorPair) -> Self {
        let n = gen.len();
        let rates = (0..n).map(|x| (0..n).map(|y| gen.kernel(Direction::Forward).rate(x, y)).collect()).collect();
        let states = match gen.space().labels() {
            Some(l) => StatesSpec::Labels(l.to_vec()),
            None => StatesSpec::Count(n),
        };
        GraphFile {
            states: Some(states),
            kind: GraphKind::Explicit,
            edges: None,
            measure: Some(gen.m().iter().cloned().collect()),
            rates: Some(rates),
            potential: None,
            length: None,
        }
    }

    pub fn build(&self) -> Result<GeneratorPair> {
        let gen = match self.kind {
            GraphKind::DiffusionGrid => {
                let v = self.potential.as_ref().ok_or_else(|| missing("potential"))?;
                let length = self.length.ok_or_else(|| missing("length"))?;
                if let Some(s) = &self.states {
                    if s.len() != v.len() {
                        return Err(Error::Dimension { expected: s.len(), got: v.len() });
                    }
                }
                GeneratorPair::diffusion_grid(v, length)?
            }
            GraphKind::Explicit => {
                let rows = self.rates.as_ref().ok_or_else(|| missing("rates"))?;
                let kernel = JumpKernel::from_rows(rows)?;
                let n = self.state_count()?;
                if kernel.len() != n {
                    return Err(Error::Dimension { expected: n, got: kernel.len() });
                }
                let m = self.measure_for(n)?;
                GeneratorPair::from_forward_rates(kernel.rates().clone(), m)?
            }
            GraphKind::Reversible | GraphKind::Counting | GraphKind::Simple => {
                let n = self.state_count()?;
                let edges = self.edges.as_ref().ok_or_else(|| missing("edges"))?;
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.u, e.v)).collect();
                let space = StateSpace::new(n, &pairs)?;
                match self.kind {
                    GraphKind::Counting => GeneratorPair::counting_walk(space)?,
                    GraphKind::Simple => GeneratorPair::simple_walk(space)?,
                    _ => {
                        let m = self.measure_for(n)?.ok_or_else(|| missing("measure"))?;
                        let mut s = DMatrix::zeros(n, n);
                        for e in edges {
                            let w = e.s.ok_or_else(|| Error::InvalidInput(format!("edge ({}, {}) lacks the weight field `s`", e.u, e.v)))?;
                            if s[(e.u, e.v)] != 0.0 && s[(e.u, e.v)] != w {
                                return Err(Error::InvalidInput(format!("edge ({}, {}) listed twice with different weights", e.u, e.v)));
                            }
                            s[(e.u, e.v)] = w;
                            s[(e.v, e.u)] = w;
                        }
                        GeneratorPair::reversible_walk(space, m, &s)?
                    }
                }
            }
        };
        match &self.states {
            Some(StatesSpec::Labels(l)) => {
                let mut gen = gen;
                gen.space = gen.space.with_labels(l.clone())?;
                Ok(gen)
            }
            _ => Ok(gen),
        }
    }

    fn state_count(&self) -> Result<usize> {
        self.states.as_ref().map(StatesSpec::len).ok_or_else(|| missing("states"))
    }

    fn measure_for(&self, n: usize) -> Result<Option<PositiveMeasure>> {
        match &self.measure {
            None => Ok(None),
            Some(w) if w.len() != n => Err(Error::Dimension { expected: n, got: w.len() }),
            Some(w) => Ok(Some(PositiveMeasure::strictly_positive(w.clone())?)),
        }
    }
}

fn missing(field: &str) -> Error {
    Error::InvalidInput(format!("graph file is missing the `{field}` field"))
}
