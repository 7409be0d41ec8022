//! Ellipsoid method over symmetric matrices.
//!
//! Decision variables are symmetric `n x n` matrices `P` in isometric
//! coordinates (`svec`), so a cut `<a, p> <= b` with unit `a` measures violation
//! as Euclidean distance. Every problem here shares the spectral box
//! `lo I <= P <= hi I`; problem-specific constraints come from a [`Separation`]
//! oracle.

use crate::error::{Error, Result};
use crate::numerics::{project_spectral_box, sym_dim, sym_eig, SymMatrix};

/// Half-space `normal . p <= offset` with a unit normal.
#[derive(Debug, Clone)]
pub(crate) struct Cut {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Cut {
    /// Cut from a symmetric matrix `M`: `<M, P> <= offset * |M|_F` after normalization.
    pub fn from_matrix(m: &SymMatrix, offset: f64) -> Option<Cut> {
        let mut normal = m.to_svec();
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        normal.iter_mut().for_each(|v| *v /= norm);
        Some(Cut { normal, offset: offset / norm })
    }
}

/// Problem constraints for a fixed level `gamma`.
pub(crate) trait Separation {
    /// Moves the family to level `gamma`.
    fn set_gamma(&mut self, gamma: f64);
    /// A constraint violated by `p`, preferably the most violated one, or `None`
    /// when `p` satisfies every constraint.
    fn separate(&mut self, p: &SymMatrix) -> Result<Option<Cut>>;
}

/// Cut for the spectral box, from the eigenvector of the worst violated bound.
pub(crate) fn box_cut(p: &SymMatrix, lo: f64, hi: f64) -> Result<Option<Cut>> {
    let eig = sym_eig(p)?;
    let n = p.dim();
    let lmin = eig.values[0];
    let lmax = eig.values[n - 1];
    let low_violation = lo - lmin;
    let high_violation = lmax - hi;
    let slack = 1e-12 * hi.abs().max(1.0);
    if low_violation <= slack && high_violation <= slack {
        return Ok(None);
    }
    if low_violation >= high_violation {
        // v^T P v >= lo
        let vv = SymMatrix::outer(&eig.vector(0));
        Ok(Cut::from_matrix(&vv.scaled(-1.0), -lo))
    } else {
        let vv = SymMatrix::outer(&eig.vector(n - 1));
        Ok(Cut::from_matrix(&vv, hi))
    }
}

#[derive(Debug, PartialEq, Eq)]
pub(crate) enum CutResult {
    Shrunk,
    /// The half-space misses the ellipsoid.
    Empty,
    /// The shape matrix lost positive definiteness.
    Degenerate,
}

/// `{ p : (p - c)^T Q^{-1} (p - c) <= 1 }`.
#[derive(Debug, Clone)]
pub(crate) struct Ellipsoid {
    dim: usize,
    center: Vec<f64>,
    shape: Vec<f64>,
    log_det: f64,
}

impl Ellipsoid {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        let dim = center.len();
        let mut shape = vec![0.0; dim * dim];
        for i in 0..dim {
            shape[i * dim + i] = radius * radius;
        }
        Self { dim, center, shape, log_det: 2.0 * dim as f64 * radius.ln() }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Log of the geometric-mean semi-axis.
    pub fn log_mean_radius(&self) -> f64 {
        0.5 * self.log_det / self.dim as f64
    }

    /// Upper bound on the longest semi-axis.
    pub fn max_radius_bound(&self) -> f64 {
        (0..self.dim).map(|i| self.shape[i * self.dim + i]).sum::<f64>().sqrt()
    }

    pub fn cut(&mut self, cut: &Cut) -> CutResult {
        let d = self.dim;
        let qa: Vec<f64> = (0..d)
            .map(|i| (0..d).map(|j| self.shape[i * d + j] * cut.normal[j]).sum())
            .collect();
        let s2: f64 = qa.iter().zip(&cut.normal).map(|(x, y)| x * y).sum();
        if !(s2 > 0.0 && s2.is_finite()) {
            return CutResult::Degenerate;
        }
        let s = s2.sqrt();
        let value: f64 = self.center.iter().zip(&cut.normal).map(|(x, y)| x * y).sum();
        let alpha = ((value - cut.offset) / s).max(0.0);
        if alpha >= 1.0 {
            return CutResult::Empty;
        }
        if d == 1 {
            // interval: intersect [c - r, c + r] with the half-line
            let r = s;
            let (mut lo, mut hi) = (self.center[0] - r, self.center[0] + r);
            let bound = cut.offset / cut.normal[0];
            if cut.normal[0] > 0.0 {
                hi = hi.min(bound);
            } else {
                lo = lo.max(bound);
            }
            let r = 0.5 * (hi - lo);
            if r <= 0.0 {
                return CutResult::Empty;
            }
            self.center[0] = 0.5 * (hi + lo);
            self.shape[0] = r * r;
            self.log_det = 2.0 * r.ln();
            return CutResult::Shrunk;
        }
        let df = d as f64;
        let tau = (1.0 + df * alpha) / (df + 1.0);
        let sigma = 2.0 * (1.0 + df * alpha) / ((df + 1.0) * (1.0 + alpha));
        let delta = df * df * (1.0 - alpha * alpha) / (df * df - 1.0);
        for (c, q) in self.center.iter_mut().zip(&qa) {
            *c -= tau * q / s;
        }
        for i in 0..d {
            for j in i..d {
                let v = delta * (self.shape[i * d + j] - sigma * qa[i] * qa[j] / s2);
                self.shape[i * d + j] = v;
                self.shape[j * d + i] = v;
            }
        }
        self.log_det += df * delta.ln() + (1.0 - sigma).ln();
        CutResult::Shrunk
    }
}

/// Tolerances and limits shared by all ellipsoid runs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EllipsoidParams {
    pub lo: f64,
    pub hi: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
}

/// Counters reported alongside solutions.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct OracleStats {
    pub bisection_steps: usize,
    pub feasibility_iterations: usize,
    pub tie_break_iterations: usize,
}

/// Outcome of a feasibility run.
pub(crate) enum Feasibility {
    Feasible(SymMatrix),
    /// No point with slack `feas_tol` exists.
    Infeasible,
}

/// Searches the box for a point accepted by `oracle`.
pub(crate) fn find_feasible<S: Separation>(
    oracle: &mut S,
    n: usize,
    params: &EllipsoidParams,
    stats: &mut OracleStats,
) -> Result<Feasibility> {
    let mid = 0.5 * (params.lo + params.hi);
    let center = SymMatrix::scaled_identity(n, mid).to_svec();
    let radius = (n as f64).sqrt() * 0.5 * (params.hi - params.lo) * (1.0 + 1e-9) + params.feas_tol;
    let mut ell = Ellipsoid::ball(center, radius);
    let d = sym_dim(n) as f64;
    let floor = params.feas_tol.ln();
    for _ in 0..params.max_iters {
        stats.feasibility_iterations += 1;
        let p = SymMatrix::from_svec(n, ell.center());
        let cut = match box_cut(&p, params.lo, params.hi)? {
            Some(c) => c,
            None => match oracle.separate(&p)? {
                Some(c) => c,
                None => return Ok(Feasibility::Feasible(p)),
            },
        };
        match ell.cut(&cut) {
            CutResult::Shrunk => {}
            CutResult::Empty | CutResult::Degenerate => return Ok(Feasibility::Infeasible),
        }
        // a feasible ball of radius feas_tol would still fit otherwise
        if ell.log_mean_radius() < floor - 1e-12 * d {
            return Ok(Feasibility::Infeasible);
        }
    }
    Err(Error::IterationLimit(params.max_iters))
}

/// Minimum-Frobenius-norm point of the feasible set, starting from a known
/// feasible `start`. Uses objective cuts at feasible centres and returns the
/// best feasible centre once the ellipsoid is smaller than `tol`.
pub(crate) fn minimize_norm<S: Separation>(
    oracle: &mut S,
    start: &SymMatrix,
    params: &EllipsoidParams,
    tol: f64,
    stats: &mut OracleStats,
) -> Result<SymMatrix> {
    let n = start.dim();
    let mut best = start.clone();
    let mut best_value = best.frobenius().powi(2);
    // the sublevel set {|P| <= |start|} holds the minimizer
    let mut ell = Ellipsoid::ball(vec![0.0; sym_dim(n)], best_value.sqrt() * (1.0 + 1e-9) + tol);
    for _ in 0..params.max_iters {
        if ell.max_radius_bound() <= tol {
            break;
        }
        stats.tie_break_iterations += 1;
        let p = SymMatrix::from_svec(n, ell.center());
        let cut = match box_cut(&p, params.lo, params.hi)? {
            Some(c) => c,
            None => match oracle.separate(&p)? {
                Some(c) => c,
                None => {
                    let c = ell.center().to_vec();
                    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let value = norm * norm;
                    if value < best_value {
                        best_value = value;
                        best = p;
                    }
                    // convexity: |P|^2 >= |c|^2 + 2<c, P - c>, so the sublevel set
                    // {|P|^2 <= best} lies in <c, P> <= (best + |c|^2) / 2
                    Cut {
                        normal: c.iter().map(|v| v / norm).collect(),
                        offset: (best_value + value) / (2.0 * norm),
                    }
                }
            },
        };
        if ell.cut(&cut) != CutResult::Shrunk {
            break;
        }
    }
    // clear rounding-level box violations
    project_spectral_box(&best, params.lo, params.hi)
}

/// Bisection on `gamma` over `[0, gamma_hi]`, where `p_hi` is feasible at
/// `gamma_hi`, followed by the minimum-norm tie-break at the final upper level.
pub(crate) fn bisect_and_tie_break<S: Separation>(
    oracle: &mut S,
    gamma_hi: f64,
    p_hi: SymMatrix,
    params: &EllipsoidParams,
    gamma_tol: f64,
) -> Result<(f64, SymMatrix, OracleStats)> {
    let n = p_hi.dim();
    let mut stats = OracleStats::default();
    let (mut lo, mut hi) = (0.0_f64, gamma_hi);
    let mut p_best = p_hi;
    while hi - lo > gamma_tol {
        stats.bisection_steps += 1;
        let mid = 0.5 * (lo + hi);
        oracle.set_gamma(mid);
        match find_feasible(oracle, n, params, &mut stats)? {
            Feasibility::Feasible(p) => {
                hi = mid;
                p_best = p;
            }
            Feasibility::Infeasible => lo = mid,
        }
    }
    oracle.set_gamma(hi);
    let tie_tol = params.feas_tol * p_best.frobenius().max(1.0);
    let p = minimize_norm(oracle, &p_best, params, tie_tol, &mut stats)?;
    Ok((hi, p, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Half-spaces `<M_k, P> <= 0` independent of gamma.
    struct Fixed(Vec<SymMatrix>);

    impl Separation for Fixed {
        fn set_gamma(&mut self, _gamma: f64) {}
        fn separate(&mut self, p: &SymMatrix) -> Result<Option<Cut>> {
            let pv = p.to_svec();
            Ok(self
                .0
                .iter()
                .find(|m| m.to_svec().iter().zip(&pv).map(|(a, b)| a * b).sum::<f64>() > 1e-12)
                .and_then(|m| Cut::from_matrix(m, 0.0)))
        }
    }

    fn params() -> EllipsoidParams {
        EllipsoidParams { lo: 1.0, hi: 100.0, feas_tol: 1e-8, max_iters: 100_000 }
    }

    #[test]
    fn unconstrained_minimum_is_identity() {
        let mut oracle = Fixed(vec![]);
        let start = SymMatrix::diag(&[3.0, 50.0]);
        let mut stats = OracleStats::default();
        let p = minimize_norm(&mut oracle, &start, &params(), 1e-9, &mut stats).unwrap();
        assert!(p.add_scaled(&SymMatrix::identity(2), -1.0).frobenius() < 1e-6);
    }

    #[test]
    fn constrained_minimum_matches_hand_solution() {
        // p11 >= 4 p22 (i.e. <diag(-1, 4), P> <= 0): minimum-norm point is diag(4, 1)
        let mut oracle = Fixed(vec![SymMatrix::diag(&[-1.0, 4.0])]);
        let mut stats = OracleStats::default();
        let start = match find_feasible(&mut oracle, 2, &params(), &mut stats).unwrap() {
            Feasibility::Feasible(p) => p,
            Feasibility::Infeasible => panic!("feasible problem declared infeasible"),
        };
        let p = minimize_norm(&mut oracle, &start, &params(), 1e-10, &mut stats).unwrap();
        let expected = SymMatrix::diag(&[4.0, 1.0]);
        assert!(p.add_scaled(&expected, -1.0).frobenius() < 1e-5, "{p:?}");
    }

    #[test]
    fn infeasibility_is_certified() {
        // p11 >= 200 p22 contradicts the box [1, 100]
        let mut oracle = Fixed(vec![SymMatrix::diag(&[-1.0, 200.0])]);
        let mut stats = OracleStats::default();
        assert!(matches!(
            find_feasible(&mut oracle, 2, &params(), &mut stats).unwrap(),
            Feasibility::Infeasible
        ));
    }

    #[test]
    fn one_dimensional_problems() {
        let mut oracle = Fixed(vec![]);
        let mut stats = OracleStats::default();
        assert!(matches!(
            find_feasible(&mut oracle, 1, &params(), &mut stats).unwrap(),
            Feasibility::Feasible(_)
        ));
        let p = minimize_norm(&mut oracle, &SymMatrix::diag(&[40.0]), &params(), 1e-9, &mut stats).unwrap();
        assert!((p.get(0, 0) - 1.0).abs() < 1e-6);
        let mut impossible = Fixed(vec![SymMatrix::diag(&[1.0])]);
        assert!(matches!(
            find_feasible(&mut impossible, 1, &params(), &mut stats).unwrap(),
            Feasibility::Infeasible
        ));
    }
}
