//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails, including on an exceeded wall-clock
//! budget. The workspace builds tests optimized; budgets assume that.

mod common;

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use common::*;
use entropic_core::curvature::{curvature_report, integrated_kappa, CurvatureConfig};
use entropic_core::entropy::{
    decay_and_mlsi_check, entropy_at, entropy_derivatives, equilibration_horizon, fisher_information, heat_flow, relative_entropy,
    DEFAULT_FD_STEP, EQUILIBRIUM_TOL,
};
use entropic_core::graph::{Direction, GeneratorPair, StateSpace};
use entropic_core::interpolation::EntropicInterpolation;
use entropic_core::schroedinger::{fg_transform, solve_schroedinger_system};
use entropic_core::theta::{carre_du_champ, hamilton_jacobi_b, theta2_op, theta2_op_abstract, theta_op, theta_op_density};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

const DIRS: [Direction; 2] = [Direction::Forward, Direction::Backward];

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: entropic_core::Error) -> String {
    e.to_string()
}

/// Five-point first and second differences of `f` at `t`.
fn five_point(f: impl Fn(f64) -> f64, t: f64, d: f64) -> (f64, f64) {
    let (m2, m1, z, p1, p2) = (f(t - 2.0 * d), f(t - d), f(t), f(t + d), f(t + 2.0 * d));
    let first = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * d);
    let second = (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2) / (12.0 * d * d);
    (first, second)
}

/// The randomized instances shared by the derivative and Schrödinger criteria.
fn instances() -> Vec<GeneratorPair> {
    let mut r = rng(20_240);
    (0..50)
        .map(|k| {
            let n = r.random_range(4..=30);
            random_pair(&mut r, n, k % 2 == 0)
        })
        .collect()
}

fn derivative_formulas() -> Outcome {
    let mut r = rng(1);
    let times: Vec<f64> = (1..=11).map(|k| k as f64 / 12.0).collect();
    let (mut worst1, mut worst2) = (0.0f64, 0.0f64);
    for (k, gen) in instances().into_iter().enumerate() {
        let n = gen.len();
        let f0 = log_uniform(&mut r, n, 3.0);
        let g1 = log_uniform(&mut r, n, 3.0);
        let e = fg_transform(&gen, &f0, &g1, true).map_err(err)?;
        let it = EntropicInterpolation::new(gen.clone(), e).map_err(err)?;
        let m = gen.measure().normalized().weights().clone();
        let h = |t: f64| relative_entropy(&it.measure_at(t).unwrap(), &m);
        for &t in &times {
            let d = entropy_derivatives(&it, t).map_err(err)?;
            let (fd1, fd2) = five_point(h, t, 2e-3);
            let e1 = (d.d_h - fd1).abs() / d.d_h.abs().max(1.0);
            let e2 = (d.d2_h - fd2).abs() / d.d2_h.abs().max(1.0);
            worst1 = worst1.max(e1);
            worst2 = worst2.max(e2);
            ensure(e1 <= 1e-6, || format!("instance {k} (n={n}) t={t:.3}: H' error {e1:.2e}"))?;
            ensure(e2 <= 1e-5, || format!("instance {k} (n={n}) t={t:.3}: H'' error {e2:.2e}"))?;
        }
    }
    Ok(format!("50 instances x 11 times, worst H' {worst1:.1e}, H'' {worst2:.1e}"))
}

fn operator_cross_forms() -> Outcome {
    let mut r = rng(2);
    let (mut worst1, mut worst2) = (0.0f64, 0.0f64);
    for k in 0..100 {
        let n = r.random_range(3..=20);
        let gen = random_pair(&mut r, n, k % 2 == 0);
        let u = log_uniform(&mut r, n, 2.0).map(f64::ln);
        for dir in DIRS {
            let kern = gen.kernel(dir);
            let e1 = max_rel(&theta_op_density(kern, &u.map(f64::exp)).map_err(err)?, &theta_op(kern, &u).map_err(err)?);
            let e2 = max_rel(&theta2_op_abstract(kern, &u).map_err(err)?, &theta2_op(kern, &u).map_err(err)?);
            worst1 = worst1.max(e1);
            worst2 = worst2.max(e2);
            ensure(e1 <= 1e-11, || format!("pair {k}: density-ratio Θ differs by {e1:.2e}"))?;
            ensure(e2 <= 1e-10, || format!("pair {k}: abstract Θ₂ differs by {e2:.2e}"))?;
        }
    }
    Ok(format!("100 pairs, worst Θ {worst1:.1e}, Θ₂ {worst2:.1e}"))
}

fn schroedinger_solve() -> Outcome {
    let mut r = rng(3);
    let (mut iters, mut marg, mut mix) = (0usize, 0.0f64, 0.0f64);
    for (k, gen) in instances().into_iter().enumerate() {
        let n = gen.len();
        let mu0 = random_probability(&mut r, n);
        let mu1 = random_probability(&mut r, n);
        let (endpoint, report) = solve_schroedinger_system(&gen, &mu0, &mu1, 1e-12, 10_000).map_err(err)?;
        ensure(report.residual <= 1e-12 && report.iterations <= 10_000, || {
            format!("instance {k}: residual {:.2e} after {} sweeps", report.residual, report.iterations)
        })?;
        iters = iters.max(report.iterations);
        let it = EntropicInterpolation::new(gen, endpoint).map_err(err)?;
        let c = it.coupling().map_err(err)?;
        let e = (c.first_marginal() - &mu0).amax().max((c.second_marginal() - &mu1).amax());
        marg = marg.max(e);
        ensure(e <= 1e-10, || format!("instance {k}: coupling marginal error {e:.2e}"))?;
        for t in [0.25, 0.5, 0.75] {
            let res = it.bridge_mixture_residual(t).map_err(err)?;
            mix = mix.max(res);
            ensure(res <= 1e-9, || format!("instance {k} t={t}: bridge mixture residual {res:.2e}"))?;
        }
    }
    Ok(format!("50 instances, max {iters} sweeps, marginals {marg:.1e}, mixture {mix:.1e}"))
}

/// `μ0ᵀ P` for a row vector `μ0`.
fn push(mu: &DVector<f64>, p: &DMatrix<f64>) -> DVector<f64> {
    (mu.transpose() * p).transpose()
}

fn heat_flow_laws() -> Outcome {
    let mut r = rng(4);
    let d = 1e-3;
    let mut worst = 0.0f64;
    for k in 0..20 {
        let n = r.random_range(4..=16);
        let gen = random_pair(&mut r, n, k % 2 == 0);
        let mu0 = random_probability(&mut r, n);
        let (horizon, _) = equilibration_horizon(&gen, &mu0, EQUILIBRIUM_TOL).map_err(err)?;
        let flow = heat_flow(&gen, &mu0, horizon, None, DEFAULT_FD_STEP).map_err(err)?;
        ensure(flow.is_nonincreasing(1e-14), || {
            let (i, w) = flow.curve.h.windows(2).enumerate().max_by(|a, b| (a.1[1] - a.1[0]).total_cmp(&(b.1[1] - b.1[0]))).unwrap();
            format!("flow {k}: H rises by {:.2e} from {:.3e} at step {i}", w[1] - w[0], w[0])
        })?;
        let end = *flow.curve.h.last().unwrap();
        ensure(end <= 1e-8, || format!("flow {k}: H(T) = {end:.2e} at T = {horizon:.3}"))?;

        // Oracle: the law evolves as μ_t = μ0ᵀ e^{tL→}, computed by uniformization
        // and stepped along the times `jT/11` with a five-point stencil at each.
        let l = gen.generator(Direction::Forward);
        let m = gen.measure().normalized().weights().clone();
        let dt = horizon / 11.0;
        let (to_stencil, step, between) = (uniformized_exp(l, dt - 2.0 * d), uniformized_exp(l, d), uniformized_exp(l, dt));
        let mut base = mu0.clone();
        for j in 1..=11 {
            let t = dt * j as f64;
            let mut nu = push(&base, &to_stencil);
            base = push(&base, &between);
            let mut h = [0.0; 5];
            let mut mu_t = nu.clone();
            for (i, slot) in h.iter_mut().enumerate() {
                *slot = relative_entropy(&nu, &m);
                if i == 2 {
                    mu_t = nu.clone();
                }
                nu = push(&nu, &step);
            }
            let fd = (h[0] - 8.0 * h[1] + 8.0 * h[3] - h[4]) / (12.0 * d);
            let (_, production) = fisher_information(&gen, &mu_t).map_err(err)?;
            let e = (fd + production).abs() / production.abs().max(1.0);
            worst = worst.max(e);
            ensure(e <= 1e-6, || format!("flow {k} t={t:.3}: dH/dt + 𝓘 = {e:.2e}"))?;
        }
    }
    Ok(format!("20 flows, worst dH/dt + 𝓘 {worst:.1e}"))
}

fn decay_and_mlsi() -> Outcome {
    let cases = [
        (
            "two-point",
            GeneratorPair::counting_walk(StateSpace::complete(2).unwrap()).unwrap(),
            vec![vec![0.9, 0.1], vec![0.99, 0.01], vec![0.3, 0.7]],
        ),
        (
            "K4",
            GeneratorPair::counting_walk(StateSpace::complete(4).unwrap()).unwrap(),
            vec![vec![0.7, 0.1, 0.15, 0.05], vec![0.97, 0.01, 0.01, 0.01], vec![0.25, 0.25, 0.3, 0.2]],
        ),
    ];
    let mut summary = Vec::new();
    for (name, gen, starts) in cases {
        let kappa = integrated_kappa(&gen, Direction::Backward, &CurvatureConfig::default()).map_err(err)?.kappa;
        for mu0 in starts {
            let mu0 = DVector::from_vec(mu0);
            let horizon = equilibration_horizon(&gen, &mu0, EQUILIBRIUM_TOL).map_err(err)?.0.max(1.0);
            let ok = decay_and_mlsi_check(&gen, &mu0, kappa, horizon, None).map_err(err)?;
            ensure(ok.checks.len() == 4 && ok.passed && ok.checks.iter().all(|c| c.holds), || {
                format!("{name} μ0={:?}: decay checks fail at κ={kappa:.4}", mu0.as_slice())
            })?;
            let bad = decay_and_mlsi_check(&gen, &mu0, 10.0 * kappa, horizon, None).map_err(err)?;
            ensure(!bad.passed && bad.checks.iter().any(|c| c.violation_time.is_some()), || {
                format!("{name} μ0={:?}: 10κ not flagged", mu0.as_slice())
            })?;
        }
        summary.push(format!("{name} κ={kappa:.4}"));
    }
    Ok(summary.join(", "))
}

fn cycle_flatness() -> Outcome {
    let gen = GeneratorPair::simple_walk(StateSpace::cycle(32).unwrap()).map_err(err)?;
    let report = curvature_report(&gen, Direction::Backward, &CurvatureConfig::default()).map_err(err)?;
    let worst = report.per_vertex.iter().map(|v| v.kappa.abs()).fold(0.0, f64::max);
    ensure(report.per_vertex.len() == 32 && worst <= 1e-3, || format!("max |κ(x)| = {worst:.2e}"))?;
    Ok(format!("32 vertices, max |κ(x)| {worst:.1e}"))
}

/// Sup-norm relative error of the discrete operators against the analytic
/// `u'²/2` and `(u''² + V''u'²)/2` for `V = cos`, `u = sin`.
fn continuum_errors(n: usize) -> Result<(f64, f64), String> {
    let h = TAU / n as f64;
    let xs: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    let v: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
    let gen = GeneratorPair::diffusion_grid(&v, TAU).map_err(err)?;
    let u = DVector::from_iterator(n, xs.iter().map(|x| x.sin()));
    let kern = gen.kernel(Direction::Forward);
    let th = theta_op(kern, &u).map_err(err)?;
    let th2 = theta2_op(kern, &u).map_err(err)?;
    let gamma = DVector::from_iterator(n, xs.iter().map(|x| x.cos().powi(2) / 2.0));
    let gamma2 = DVector::from_iterator(n, xs.iter().map(|x| (x.sin().powi(2) - x.cos() * x.cos().powi(2)) / 2.0));
    Ok(((&th - &gamma).amax() / gamma.amax(), (&th2 - &gamma2).amax() / gamma2.amax()))
}

fn continuum_limits() -> Outcome {
    let errs = [100, 200, 400].into_iter().map(continuum_errors).collect::<Result<Vec<_>, _>>()?;
    for w in errs.windows(2) {
        let (r1, r2) = (w[0].0 / w[1].0, w[0].1 / w[1].1);
        ensure(r1 >= 1.5 && r2 >= 1.5, || format!("error ratios per doubling Θ {r1:.2}, Θ₂ {r2:.2}"))?;
    }
    let fmt = |i: usize| errs.iter().map(|e| format!("{:.1e}", if i == 0 { e.0 } else { e.1 })).collect::<Vec<_>>().join(" → ");
    Ok(format!("Θ {}, Θ₂ {}", fmt(0), fmt(1)))
}

fn symmetry_and_convexity() -> Outcome {
    let mut r = rng(8);
    let times: Vec<f64> = (1..=19).map(|k| k as f64 / 20.0).collect();
    let mut asym = 0.0f64;
    for k in 0..20 {
        let n = r.random_range(4..=20);
        let gen = random_reversible(&mut r, n);
        let mu = random_probability(&mut r, n);
        let (it, _) = EntropicInterpolation::between(gen, &mu, &mu, 1e-13, 10_000).map_err(err)?;
        for &t in &times {
            let gap = (entropy_at(&it, t).map_err(err)? - entropy_at(&it, 1.0 - t).map_err(err)?).abs();
            asym = asym.max(gap);
            ensure(gap <= 1e-9, || format!("instance {k} t={t}: |H(t) - H(1-t)| = {gap:.2e}"))?;
        }
    }

    let n = 64;
    let xs: Vec<f64> = (0..n).map(|k| k as f64 * TAU / n as f64).collect();
    let gen = GeneratorPair::diffusion_grid(&vec![0.0; n], TAU).map_err(err)?;
    let bump = |f: &dyn Fn(f64) -> f64| {
        let v = DVector::from_iterator(n, xs.iter().map(|&x| f(x).exp()));
        let s = v.sum();
        v / s
    };
    let mu0 = bump(&|x| 2.0 * x.cos());
    let mu1 = bump(&|x| 1.5 * (2.0 * x).sin());
    let (it, _) = EntropicInterpolation::between(gen, &mu0, &mu1, 1e-13, 10_000).map_err(err)?;
    let mut lowest = f64::INFINITY;
    for &t in &times {
        let d2 = entropy_derivatives(&it, t).map_err(err)?.d2_h;
        lowest = lowest.min(d2);
        ensure(d2 >= -1e-8, || format!("flat grid t={t}: H'' = {d2:.2e}"))?;
    }
    Ok(format!("max asymmetry {asym:.1e}, min H'' on flat grid {lowest:.2e}"))
}

fn invariance_suite() -> Outcome {
    let mut r = rng(9);
    let mut worst = 0.0f64;
    let mut track = |e: f64, what: &str, k: usize| {
        worst = worst.max(e);
        ensure(e <= 1e-11, || format!("case {k}: {what} off by {e:.2e}"))
    };
    for k in 0..60 {
        let n = r.random_range(4..=12);
        let gen = random_pair(&mut r, n, k % 2 == 0);
        let u = log_uniform(&mut r, n, 2.0).map(f64::ln);
        let v = u.add_scalar(r.random_range(-20.0..20.0));
        for dir in DIRS {
            let kern = gen.kernel(dir);
            let th = theta_op(kern, &u).map_err(err)?;
            track(max_rel(&th, &theta_op(kern, &v).map_err(err)?), "Θ translation", k)?;
            track(max_rel(&theta2_op(kern, &u).map_err(err)?, &theta2_op(kern, &v).map_err(err)?), "Θ₂ translation", k)?;
            track(max_rel(&hamilton_jacobi_b(kern, &u).map_err(err)?, &hamilton_jacobi_b(kern, &v).map_err(err)?), "B translation", k)?;
            let gamma = |w: &DVector<f64>| carre_du_champ(kern, w, w).map_err(err);
            track(max_rel(&gamma(&u)?, &gamma(&v)?), "Γ translation", k)?;
            ensure(th.iter().all(|&x| x >= 0.0), || format!("case {k}: Θ negative"))?;
        }
        if gen.is_reversible() {
            let (f, b) = (gen.kernel(Direction::Forward), gen.kernel(Direction::Backward));
            track(max_rel(&theta_op(f, &u).map_err(err)?, &theta_op(b, &u).map_err(err)?), "Θ direction collapse", k)?;
            track(max_rel(&theta2_op(f, &u).map_err(err)?, &theta2_op(b, &u).map_err(err)?), "Θ₂ direction collapse", k)?;
        }
        let f0 = log_uniform(&mut r, n, 2.0);
        let g1 = log_uniform(&mut r, n, 2.0);
        let e = fg_transform(&gen, &f0, &g1, true).map_err(err)?;
        let c = r.random_range(-4.0f64..4.0).exp();
        let a = EntropicInterpolation::new(gen.clone(), e.clone()).map_err(err)?;
        let b = EntropicInterpolation::new(gen, e.regauged(c)).map_err(err)?;
        for t in [0.2, 0.5, 0.8] {
            track(max_rel(&a.measure_at(t).map_err(err)?, &b.measure_at(t).map_err(err)?), "gauge μ_t", k)?;
            let (da, db) = (entropy_derivatives(&a, t).map_err(err)?, entropy_derivatives(&b, t).map_err(err)?);
            track(rel(da.d_h, db.d_h).max(rel(da.d2_h, db.d2_h)), "gauge H', H''", k)?;
        }
    }
    Ok(format!("60 cases, worst {worst:.1e}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("derivative formulas", 30, derivative_formulas),
        ("operator cross-forms", 5, operator_cross_forms),
        ("Schrödinger system", 10, schroedinger_solve),
        ("heat-flow laws", 10, heat_flow_laws),
        ("decay and mLSI", 10, decay_and_mlsi),
        ("cycle flatness", 60, cycle_flatness),
        ("continuum limits", 10, continuum_limits),
        ("symmetry and convexity", 10, symmetry_and_convexity),
        ("invariance suite", 5, invariance_suite),
    ];
    let mut failures = 0;
    for (k, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(budget);
        let outcome = match outcome {
            Ok(detail) if over => Err(format!("{detail}; over the {budget} s budget")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if outcome.is_err() {
            failures += 1;
        }
        println!("{tag} {}. {name:<24} {:>7.2} s / {budget} s  {detail}", k + 1, elapsed.as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
