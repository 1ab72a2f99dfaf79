#![allow(dead_code)]

use entropic_core::graph::{GeneratorPair, PositiveMeasure, StateSpace};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus about `n/2` chords.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|k| (rng.random_range(0..k), k)).collect();
    for _ in 0..n / 2 {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            edges.push((a, b));
        }
    }
    edges
}

pub fn random_reversible(rng: &mut ChaCha8Rng, n: usize) -> GeneratorPair {
    let space = StateSpace::new(n, &random_edges(rng, n)).unwrap();
    let m = PositiveMeasure::new((0..n).map(|_| rng.random_range(0.2..2.0)).collect()).unwrap();
    let s = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.3..1.5));
    GeneratorPair::reversible_walk(space, m, &((&s + s.transpose()) * 0.5)).unwrap()
}

/// Stationary non-reversible pair: a directed Hamiltonian cycle plus random
/// one- and two-way edges; `m` is the stationary law.
pub fn random_nonreversible(rng: &mut ChaCha8Rng, n: usize) -> GeneratorPair {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut r = DMatrix::zeros(n, n);
    for k in 0..n {
        r[(perm[k], perm[(k + 1) % n])] = rng.random_range(0.5..2.0);
    }
    for (a, b) in random_edges(rng, n) {
        r[(a, b)] += rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            r[(b, a)] += rng.random_range(0.1..1.0);
        }
    }
    GeneratorPair::from_forward_rates(r, None).unwrap()
}

pub fn random_pair(rng: &mut ChaCha8Rng, n: usize, reversible: bool) -> GeneratorPair {
    if reversible {
        random_reversible(rng, n)
    } else {
        random_nonreversible(rng, n)
    }
}

/// `exp(U(-a, a))` entrywise.
pub fn log_uniform(rng: &mut ChaCha8Rng, n: usize, a: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-a..a).exp())
}

pub fn random_probability(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let v = log_uniform(rng, n, 1.5);
    let s = v.sum();
    v / s
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn max_rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| rel(x, y)).fold(0.0, f64::max)
}

/// `e^{tL}` by uniformization: `Σ_k Poisson(qt; k) (I + L/q)^k`.
pub fn uniformized_exp(l: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = l.nrows();
    let q = (0..n).map(|i| -l[(i, i)]).fold(0.0, f64::max).max(1e-300);
    let p = DMatrix::identity(n, n) + l / q;
    let lambda = q * t;
    let mut weight = (-lambda).exp();
    let mut power = DMatrix::identity(n, n);
    let mut out = &power * weight;
    let mut k = 0usize;
    let mut cum = weight;
    while 1.0 - cum > 1e-17 && k < 100_000 {
        k += 1;
        power = &power * &p;
        weight *= lambda / k as f64;
        cum += weight;
        out += &power * weight;
    }
    out
}
