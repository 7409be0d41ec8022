//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use cjsrcert::numerics::Matrix;
use cjsrcert::{Automaton, ObservationSet, SystemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `P[Bin(trials, x) >= at_least]` by direct summation with exact binomials.
pub fn binomial_upper_tail(trials: u64, x: f64, at_least: u64) -> f64 {
    let mut total = 0.0;
    for k in at_least..=trials {
        let mut c = 1.0_f64;
        for i in 0..k {
            c = c * (trials - i) as f64 / (i + 1) as f64;
        }
        total += c * x.powi(k as i32) * (1.0 - x).powi((trials - k) as i32);
    }
    total
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
}

fn spectral_norm(a: &Matrix) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

/// `m` random `n x n` modes scaled so the largest spectral norm is `top`.
pub fn random_modes(n: usize, m: usize, top: f64, rng: &mut ChaCha8Rng) -> Vec<Matrix> {
    let modes: Vec<Matrix> = (0..m).map(|_| random_matrix(n, rng)).collect();
    let largest = modes.iter().map(spectral_norm).fold(0.0, f64::max);
    modes.into_iter().map(|a| a * (top / largest)).collect()
}

pub fn rotation(theta: f64) -> Matrix {
    Matrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
}

/// Small strongly connected automata used across the tests.
pub fn corpus() -> Vec<(&'static str, Automaton)> {
    vec![
        ("single-loop", Automaton::full_shift(1)),
        ("full-2-shift", Automaton::full_shift(2)),
        ("full-3-shift", Automaton::full_shift(3)),
        ("golden-mean", Automaton::golden_mean()),
        (
            // 1 may repeat, 2 must come in even runs
            "even-shift",
            Automaton::from_triples(2, &[[0, 0, 1], [0, 1, 2], [1, 0, 2]], 2).unwrap(),
        ),
        (
            "three-cycle",
            Automaton::from_triples(3, &[[0, 1, 1], [1, 2, 2], [2, 0, 1], [2, 2, 2], [1, 0, 1]], 2).unwrap(),
        ),
        (
            // parallel edges with distinct labels
            "multi-edge",
            Automaton::from_triples(2, &[[0, 1, 1], [0, 1, 2], [1, 0, 1], [1, 1, 3]], 3).unwrap(),
        ),
    ]
}

/// A random strongly connected automaton: a Hamiltonian cycle plus extra edges.
pub fn random_automaton(nodes: usize, alphabet: usize, extra: usize, rng: &mut ChaCha8Rng) -> Automaton {
    let mut triples: Vec<[usize; 3]> = Vec::new();
    for v in 0..nodes {
        triples.push([v, (v + 1) % nodes, rng.random_range(1..=alphabet)]);
    }
    for _ in 0..extra {
        let t = [rng.random_range(0..nodes), rng.random_range(0..nodes), rng.random_range(1..=alphabet)];
        if !triples.contains(&t) {
            triples.push(t);
        }
    }
    // every label must be usable for a well-formed system; force label 1..=alphabet to appear
    for label in 1..=alphabet {
        if !triples.iter().any(|t| t[2] == label) {
            let t = [0, 0, label];
            if !triples.contains(&t) {
                triples.push(t);
            }
        }
    }
    Automaton::from_triples(nodes, &triples, alphabet).unwrap()
}

pub fn system(modes: Vec<Matrix>, automaton: Automaton) -> SystemSpec {
    SystemSpec::new(modes, automaton).unwrap()
}

/// Worst ratio `max_i (xl^T P xl / x0^T P x0)^(1/(2l))` for
/// `P = R(theta) diag(1, t) R(theta)^T`.
fn worst_ratio(obs: &[(Vec<f64>, Vec<f64>)], l: usize, theta: f64, t: f64) -> f64 {
    let (c, s) = (theta.cos(), theta.sin());
    let q = |x: &[f64]| {
        let u = c * x[0] + s * x[1];
        let v = -s * x[0] + c * x[1];
        u * u + t * v * v
    };
    let worst = obs.iter().map(|(x0, xl)| q(xl) / q(x0)).fold(0.0, f64::max);
    worst.powf(0.5 / l as f64)
}

/// Golden-section minimum of a quasiconvex function on `[lo, hi]`.
fn golden_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..90 {
        if f1 <= f2 {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    f1.min(f2).min(f(lo)).min(f(hi))
}

/// Brute-force optimum of the sampled program for `n = 2`.
///
/// The constraints are invariant under `P -> cP`, so the box `I <= P <= C I`
/// reduces to `cond(P) <= C`. Two independent searches are run and the better
/// value kept; both only evaluate admissible `P`, so both are upper bounds:
///
/// - a grid in `(theta, ln t)` for `P = R(theta) diag(1, t) R(theta)^T`;
/// - with `tr P = 1`, `P = [[a, b], [b, 1 - a]]` and the condition bound is the
///   disk `(a - 1/2)^2 + b^2 <= rho^2`. Each ratio is linear-fractional in
///   `(a, b)`, so the worst ratio is quasiconvex and nested golden-section
///   search over `a` and `b` converges to the minimum.
pub fn brute_force_gamma(data: &ObservationSet, l: usize, c_upper: f64) -> f64 {
    let obs: Vec<(Vec<f64>, Vec<f64>)> = data.iter().map(|o| (o.x0.clone(), o.xl.clone())).collect();
    let pi = std::f64::consts::PI;
    let s_max = c_upper.ln();
    let (nt, ns) = (360, 160);
    let mut grid = f64::INFINITY;
    for i in 0..nt {
        let theta = pi * i as f64 / nt as f64;
        for j in 0..=ns {
            let s = s_max * j as f64 / ns as f64;
            grid = grid.min(worst_ratio(&obs, l, theta, s.exp()));
        }
    }
    let rho = 0.5 * (c_upper - 1.0) / (c_upper + 1.0);
    let ratio = |a: f64, b: f64| {
        let q = |x: &[f64]| a * x[0] * x[0] + 2.0 * b * x[0] * x[1] + (1.0 - a) * x[1] * x[1];
        obs.iter().map(|(x0, xl)| q(xl) / q(x0)).fold(0.0, f64::max).powf(0.5 / l as f64)
    };
    let slice = |a: f64| {
        let w = (rho * rho - (a - 0.5).powi(2)).max(0.0).sqrt();
        golden_min(-w, w, |b| ratio(a, b))
    };
    grid.min(golden_min(0.5 - rho, 0.5 + rho, slice))
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}
