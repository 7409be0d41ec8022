//! Sampled quadratic-Lyapunov program.
//!
//! Finds the smallest `gamma` such that some `P` with `I <= P <= C I` satisfies
//! `(x_l)^T P x_l <= gamma^(2l) x_0^T P x_0` for every observation, and among
//! the optimal `P` the one of least Frobenius norm. For fixed `gamma` the
//! constraints are linear in `P`, so `gamma` is found by bisection over
//! certified feasibility checks.

use serde::Serialize;

use crate::ellipsoid::{bisect_and_tie_break, find_feasible, Cut, EllipsoidParams, Feasibility, OracleStats, Separation};
use crate::error::{Error, Result};
use crate::numerics::SymMatrix;
use crate::sampling::{l2, ObservationSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioConfig {
    /// Upper end `C` of the spectral box `I <= P <= C I`.
    pub c_upper: f64,
    pub gamma_tol: f64,
    pub feas_tol: f64,
    pub max_oracle_iters: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self { c_upper: 1e6, gamma_tol: 1e-6, feas_tol: 1e-8, max_oracle_iters: 500_000 }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_upper > 1.0 && self.c_upper.is_finite()) {
            return Err(Error::Domain(format!("box constant C = {} must exceed 1", self.c_upper)));
        }
        if !(self.gamma_tol > 0.0 && self.feas_tol > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        if self.max_oracle_iters == 0 {
            return Err(Error::Domain("max_oracle_iters must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn params(&self) -> EllipsoidParams {
        EllipsoidParams { lo: 1.0, hi: self.c_upper, feas_tol: self.feas_tol, max_iters: self.max_oracle_iters }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSolution {
    pub gamma_star: f64,
    #[serde(serialize_with = "crate::bounds::serialize_sym")]
    pub p_star: SymMatrix,
    /// Smallest normalized slack `gamma^(2l) x0^T P x0 - xl^T P xl` over the
    /// observations (negative values are rounding-level violations).
    pub active_margin: f64,
    pub oracle_stats: OracleStats,
}

/// Per-observation data, with `xl` stored as a unit direction plus its log
/// squared norm so that large `l` cannot underflow `gamma^(2l)`.
#[derive(Debug, Clone)]
struct Constraint {
    x0: Vec<f64>,
    dir: Vec<f64>,
    log_sq_norm: f64,
    /// `(dir . x0)^2`, for the Frobenius norm of the cut matrix.
    overlap_sq: f64,
}

/// Separation oracle for the observation constraints at a fixed `gamma`.
pub(crate) struct ObservationOracle {
    constraints: Vec<Constraint>,
    length: usize,
    log_gamma: f64,
    scales: Vec<f64>,
    /// Recently violated constraints, checked before a full scan.
    recent: Vec<usize>,
}

const RECENT_CAPACITY: usize = 32;
const RELATIVE_SLACK: f64 = 1e-12;

impl ObservationOracle {
    pub fn new(observations: &ObservationSet, length: usize) -> Self {
        let constraints = observations
            .iter()
            .filter_map(|o| {
                let norm = l2(&o.xl);
                // xl = 0 satisfies every constraint
                (norm > 0.0).then(|| {
                    let dir: Vec<f64> = o.xl.iter().map(|v| v / norm).collect();
                    let dot: f64 = dir.iter().zip(&o.x0).map(|(a, b)| a * b).sum();
                    let x0_norm = l2(&o.x0);
                    Constraint {
                        x0: o.x0.iter().map(|v| v / x0_norm).collect(),
                        dir,
                        log_sq_norm: 2.0 * (norm / x0_norm).ln(),
                        overlap_sq: dot * dot,
                    }
                })
            })
            .collect::<Vec<_>>();
        let scales = vec![0.0; constraints.len()];
        Self { constraints, length, log_gamma: f64::NEG_INFINITY, scales, recent: Vec::new() }
    }

    /// Normalized violation and cut for constraint `k`, if violated.
    fn check(&self, k: usize, dense: &nalgebra::DMatrix<f64>) -> Option<(f64, f64)> {
        let c = &self.constraints[k];
        let t = self.scales[k];
        let a = quad(dense, &c.dir);
        let b = quad(dense, &c.x0);
        let raw = a - t * b;
        if raw <= RELATIVE_SLACK * (a + t * b) {
            return None;
        }
        let norm = (1.0 - 2.0 * t * c.overlap_sq + t * t).max(0.0).sqrt();
        if norm <= 0.0 {
            return None;
        }
        Some((raw / norm, t))
    }

    fn cut_for(&self, k: usize, t: f64) -> Option<Cut> {
        let c = &self.constraints[k];
        let m = SymMatrix::outer(&c.dir).add_scaled(&SymMatrix::outer(&c.x0), -t);
        Cut::from_matrix(&m, 0.0)
    }

    /// Smallest normalized slack at `(gamma, p)`.
    pub fn margin(&mut self, gamma: f64, p: &SymMatrix) -> f64 {
        self.set_gamma(gamma);
        let dense = p.to_dense();
        self.constraints
            .iter()
            .zip(&self.scales)
            .map(|(c, &t)| {
                let a = quad(&dense, &c.dir);
                let b = quad(&dense, &c.x0);
                (t * b - a) / (t * b + a)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn quad(m: &nalgebra::DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * x[j];
        }
        acc += x[i] * row;
    }
    acc
}

impl Separation for ObservationOracle {
    fn set_gamma(&mut self, gamma: f64) {
        self.log_gamma = gamma.ln();
        let two_l = 2.0 * self.length as f64;
        for (s, c) in self.scales.iter_mut().zip(&self.constraints) {
            *s = (two_l * self.log_gamma - c.log_sq_norm).exp();
        }
    }

    fn separate(&mut self, p: &SymMatrix) -> Result<Option<Cut>> {
        let dense = p.to_dense();
        let best_of = |ids: &mut dyn Iterator<Item = usize>| {
            let mut best: Option<(usize, f64, f64)> = None;
            for k in ids {
                if let Some((depth, t)) = self.check(k, &dense) {
                    if best.is_none_or(|b| depth > b.1) {
                        best = Some((k, depth, t));
                    }
                }
            }
            best
        };
        let mut found = best_of(&mut self.recent.iter().copied());
        if found.is_none() {
            found = best_of(&mut (0..self.constraints.len()));
        }
        let Some((k, _, t)) = found else {
            return Ok(None);
        };
        if !self.recent.contains(&k) {
            if self.recent.len() == RECENT_CAPACITY {
                self.recent.remove(0);
            }
            self.recent.push(k);
        }
        Ok(self.cut_for(k, t))
    }
}

fn check_inputs(observations: &ObservationSet, l: usize, config: &ScenarioConfig) -> Result<()> {
    config.validate()?;
    if observations.is_empty() {
        return Err(Error::EmptyObservations);
    }
    if l == 0 {
        return Err(Error::Domain("trajectory length must be at least 1".into()));
    }
    Ok(())
}

/// A `P` in the box satisfying every observation constraint at level `gamma`,
/// or `None` when no point with slack `feas_tol` exists.
pub fn feasible(gamma: f64, observations: &ObservationSet, l: usize, config: &ScenarioConfig) -> Result<Option<SymMatrix>> {
    check_inputs(observations, l, config)?;
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::Domain(format!("gamma = {gamma} must be nonnegative")));
    }
    let mut oracle = ObservationOracle::new(observations, l);
    oracle.set_gamma(gamma);
    let mut stats = OracleStats::default();
    Ok(match find_feasible(&mut oracle, observations.dim(), &config.params(), &mut stats)? {
        Feasibility::Feasible(p) => Some(p),
        Feasibility::Infeasible => None,
    })
}

/// Solves the sampled program with the minimum-Frobenius-norm tie-break.
pub fn solve(observations: &ObservationSet, l: usize, config: &ScenarioConfig) -> Result<ScenarioSolution> {
    check_inputs(observations, l, config)?;
    let n = observations.dim();
    // P = I is feasible at the largest observed growth ratio
    let gamma_ub = observations
        .iter()
        .map(|o| (l2(&o.xl) / l2(&o.x0)).powf(1.0 / l as f64))
        .fold(0.0, f64::max);
    let mut oracle = ObservationOracle::new(observations, l);
    if gamma_ub == 0.0 {
        return Ok(ScenarioSolution {
            gamma_star: 0.0,
            p_star: SymMatrix::identity(n),
            active_margin: f64::INFINITY,
            oracle_stats: OracleStats::default(),
        });
    }
    let (gamma_star, p_star, oracle_stats) =
        bisect_and_tie_break(&mut oracle, gamma_ub, SymMatrix::identity(n), &config.params(), config.gamma_tol)?;
    let active_margin = oracle.margin(gamma_star, &p_star);
    Ok(ScenarioSolution { gamma_star, p_star, active_margin, oracle_stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::Automaton;
    use crate::numerics::{kappa, Matrix};
    use crate::sampling::{synthesize, SamplingConfig};
    use crate::system::SystemSpec;

    fn system(ms: Vec<Matrix>, a: Automaton) -> SystemSpec {
        SystemSpec::new(ms, a).unwrap()
    }

    fn data(sys: &SystemSpec, samples: usize, length: usize, seed: u64) -> ObservationSet {
        synthesize(sys, &SamplingConfig { samples, length, seed }).unwrap().stripped()
    }

    #[test]
    fn contraction_feasibility() {
        let half = system(vec![Matrix::identity(2, 2) * 0.5], Automaton::full_shift(1));
        let obs = data(&half, 10, 1, 1);
        let cfg = ScenarioConfig::default();
        let p = feasible(0.9, &obs, 1, &cfg).unwrap().expect("feasible at 0.9");
        assert!(crate::numerics::sym_eig(&p).unwrap().values[0] >= 1.0 - 1e-9);
        assert!(feasible(0.4, &obs, 1, &cfg).unwrap().is_none());
    }

    #[test]
    fn anisotropic_feasibility() {
        // A = diag(2, 0.1), gamma = 0.9. With P = diag(1, p) a sample x needs
        // 4 x1^2 + 0.01 p x2^2 <= 0.81 (x1^2 + p x2^2), i.e. p >= 3.19 x1^2 / (0.8 x2^2).
        // A grid over p in [1, C] finds the region nonempty for the sampled x.
        let sys = system(vec![Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.1])], Automaton::full_shift(1));
        let obs = data(&sys, 5, 1, 3);
        let cfg = ScenarioConfig::default();
        let grid_ok = (0..=600).map(|k| 10f64.powf(k as f64 / 100.0)).any(|p| {
            obs.iter().all(|o| {
                let (x1, x2) = (o.x0[0], o.x0[1]);
                4.0 * x1 * x1 + 0.01 * p * x2 * x2 <= 0.81 * (x1 * x1 + p * x2 * x2)
            })
        });
        assert!(grid_ok);
        let p = feasible(0.9, &obs, 1, &cfg).unwrap().expect("feasible");
        let e = crate::numerics::sym_eig(&p).unwrap();
        assert!(e.values[1] / e.values[0] > 10.0, "expected a strongly anisotropic P");
    }

    #[test]
    fn scaled_identity_optimum() {
        let half = system(vec![Matrix::identity(2, 2) * 0.5], Automaton::full_shift(1));
        let obs = data(&half, 7, 1, 2);
        let sol = solve(&obs, 1, &ScenarioConfig::default()).unwrap();
        assert!((sol.gamma_star - 0.5).abs() < 1e-6);
        assert!(sol.p_star.add_scaled(&SymMatrix::identity(2), -1.0).frobenius() < 1e-5);
        assert!((kappa(&sol.p_star).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn scaled_rotation_optimum() {
        let (s, c) = (0.7f64.sin(), 0.7f64.cos());
        let rot = Matrix::from_row_slice(2, 2, &[c, -s, s, c]) * 0.8;
        let sys = system(vec![rot], Automaton::full_shift(1));
        let obs = data(&sys, 40, 1, 5);
        let sol = solve(&obs, 1, &ScenarioConfig::default()).unwrap();
        assert!((sol.gamma_star - 0.8).abs() < 1e-6, "{}", sol.gamma_star);
        assert!(sol.p_star.add_scaled(&SymMatrix::identity(2), -1.0).frobenius() < 1e-3);
    }

    #[test]
    fn single_observation_uses_eccentric_p() {
        // x0 = e1, xl = 0.8 e2: P = diag(C, 1) gives gamma = 0.8 / sqrt(C)
        let obs = ObservationSet::from_raw(&[(vec![1.0, 0.0], vec![0.0, 0.8])]).unwrap();
        let cfg = ScenarioConfig::default();
        let sol = solve(&obs, 1, &cfg).unwrap();
        let expected = 0.8 / cfg.c_upper.sqrt();
        assert!((sol.gamma_star - expected).abs() <= 2.0 * cfg.gamma_tol, "{}", sol.gamma_star);
    }

    #[test]
    fn solution_satisfies_constraints() {
        let sys = system(
            vec![
                Matrix::from_row_slice(2, 2, &[0.6, 0.4, -0.3, 0.5]),
                Matrix::from_row_slice(2, 2, &[0.2, -0.7, 0.5, 0.1]),
            ],
            Automaton::golden_mean(),
        );
        let obs = data(&sys, 60, 2, 11);
        let cfg = ScenarioConfig::default();
        let sol = solve(&obs, 2, &cfg).unwrap();
        let e = crate::numerics::sym_eig(&sol.p_star).unwrap();
        assert!(e.values[0] >= 1.0 - cfg.feas_tol && e.values[1] <= cfg.c_upper + cfg.feas_tol);
        let g = (sol.gamma_star + cfg.gamma_tol).powi(4);
        for o in obs.iter() {
            assert!(sol.p_star.quad_form(&o.xl) <= g * sol.p_star.quad_form(&o.x0));
        }
    }

    #[test]
    fn rejects_empty_and_bad_config() {
        let empty = ObservationSet::new(2, vec![]).unwrap();
        assert!(matches!(solve(&empty, 1, &ScenarioConfig::default()), Err(Error::EmptyObservations)));
        let obs = ObservationSet::from_raw(&[(vec![1.0], vec![0.5])]).unwrap();
        let bad = ScenarioConfig { c_upper: 0.5, ..Default::default() };
        assert!(matches!(solve(&obs, 1, &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn one_dimensional_data() {
        let obs = ObservationSet::from_raw(&[(vec![1.0], vec![-0.3]), (vec![-1.0], vec![0.7])]).unwrap();
        let sol = solve(&obs, 1, &ScenarioConfig::default()).unwrap();
        assert!((sol.gamma_star - 0.7).abs() < 1e-6);
        assert!((sol.p_star.get(0, 0) - 1.0).abs() < 1e-6);
    }
}
