//! Model-based ground truth: the quadratic-Lyapunov level over all admissible
//! products, and lower bounds from cycles of the automaton.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::automaton::Word;
use crate::ellipsoid::{bisect_and_tie_break, Cut, Separation};
use crate::error::{Error, Result};
use crate::numerics::{spectral_radius, sym_eig, Matrix, SymMatrix};
use crate::products::{enumerate_products, MAX_ENUMERATED_WORDS};
use crate::scenario::ScenarioConfig;
use crate::system::SystemSpec;

/// Default longest cycle searched by [`cjsr_bracket`].
pub const DEFAULT_CYCLE_LEN: usize = 8;

const RELATIVE_SLACK: f64 = 1e-12;
/// Below this many products the oracle stays on the calling thread.
const PARALLEL_THRESHOLD: usize = 64;

/// Product scaled to unit spectral norm, with the log of the scale.
struct ScaledProduct {
    matrix: Matrix,
    log_norm: f64,
}

/// Separation for `A^T P A <= gamma^(2l) P` over a finite set of products.
struct LmiOracle {
    products: Vec<ScaledProduct>,
    length: usize,
    scales: Vec<f64>,
}

impl LmiOracle {
    fn new(products: &[Matrix], length: usize) -> Self {
        let products: Vec<ScaledProduct> = products
            .iter()
            .filter_map(|a| {
                let s = a.clone().svd(false, false).singular_values.max();
                (s > 0.0).then(|| ScaledProduct { matrix: a / s, log_norm: s.ln() })
            })
            .collect();
        let scales = vec![0.0; products.len()];
        Self { products, length, scales }
    }

    /// Most violating direction of `B^T P B - t P` and its normalized depth.
    fn violation(&self, k: usize, p: &Matrix) -> Result<Option<(f64, Vec<f64>)>> {
        let b = &self.products[k].matrix;
        let t = self.scales[k];
        let m = b.transpose() * p * b - p * t;
        let eig = sym_eig(&SymMatrix::from_dense(&m))?;
        let last = eig.values.len() - 1;
        let v = eig.vector(last);
        let vx = nalgebra::DVector::from_column_slice(&v);
        let bv = b * &vx;
        let a = (bv.transpose() * p * &bv)[(0, 0)];
        let c = (vx.transpose() * p * &vx)[(0, 0)];
        if eig.values[last] <= RELATIVE_SLACK * (a + t * c) {
            return Ok(None);
        }
        Ok(Some((eig.values[last] / (a + t * c), v)))
    }

    fn cut_for(&self, k: usize, v: &[f64]) -> Option<Cut> {
        let vx = nalgebra::DVector::from_column_slice(v);
        let bv: Vec<f64> = (&self.products[k].matrix * vx).iter().copied().collect();
        let m = SymMatrix::outer(&bv).add_scaled(&SymMatrix::outer(v), -self.scales[k]);
        Cut::from_matrix(&m, 0.0)
    }
}

impl Separation for LmiOracle {
    fn set_gamma(&mut self, gamma: f64) {
        let two_l = 2.0 * self.length as f64;
        for (s, prod) in self.scales.iter_mut().zip(&self.products) {
            *s = (two_l * gamma.ln() - 2.0 * prod.log_norm).exp();
        }
    }

    fn separate(&mut self, p: &SymMatrix) -> Result<Option<Cut>> {
        let dense = p.to_dense();
        let found: Vec<Option<(f64, usize, Vec<f64>)>> = if self.products.len() >= PARALLEL_THRESHOLD {
            (0..self.products.len())
                .into_par_iter()
                .map(|k| self.violation(k, &dense).map(|o| o.map(|(d, v)| (d, k, v))))
                .collect::<Result<_>>()?
        } else {
            (0..self.products.len())
                .map(|k| self.violation(k, &dense).map(|o| o.map(|(d, v)| (d, k, v))))
                .collect::<Result<_>>()?
        };
        let worst = found.into_iter().flatten().max_by(|a, b| a.0.total_cmp(&b.0));
        Ok(worst.and_then(|(_, k, v)| self.cut_for(k, &v)))
    }
}

/// Smallest `gamma` with a `P` in the box satisfying `A^T P A <= gamma^(2l) P`
/// for every admissible product of length `l`, with the minimum-norm `P`.
pub fn gamma_model(system: &SystemSpec, l: usize, config: &ScenarioConfig) -> Result<(f64, SymMatrix)> {
    config.validate()?;
    if l == 0 {
        return Err(Error::Domain("lifting length must be at least 1".into()));
    }
    let products = enumerate_products(system, l)?;
    let matrices: Vec<Matrix> = products.entries.iter().map(|e| e.matrix.clone()).collect();
    gamma_for_products(&matrices, l, system.dim(), config)
}

fn gamma_for_products(matrices: &[Matrix], l: usize, n: usize, config: &ScenarioConfig) -> Result<(f64, SymMatrix)> {
    let mut oracle = LmiOracle::new(matrices, l);
    // P = I works at the largest spectral norm
    let gamma_ub = oracle.products.iter().map(|p| p.log_norm).fold(f64::NEG_INFINITY, f64::max);
    if oracle.products.is_empty() {
        return Ok((0.0, SymMatrix::identity(n)));
    }
    let gamma_ub = (gamma_ub / l as f64).exp();
    let (gamma, p, _) = bisect_and_tie_break(&mut oracle, gamma_ub, SymMatrix::identity(n), &config.params(), config.gamma_tol)?;
    Ok((gamma, p))
}

fn canonical_rotation(word: &[usize]) -> Word {
    (0..word.len())
        .map(|r| word[r..].iter().chain(&word[..r]).copied().collect::<Word>())
        .min()
        .unwrap_or_default()
}

/// Number of walks of length `1..=max_len` from any node, as an `f64` estimate.
fn walk_count(system: &SystemSpec, max_len: usize) -> f64 {
    let adj = system.automaton().adjacency();
    let mut power = adj.clone();
    let mut total = 0.0;
    for _ in 0..max_len {
        total += power.sum();
        power = &power * &adj;
    }
    total
}

/// Largest `rho(A_w)^(1/|w|)` over label words of closed walks of length at
/// most `max_cycle_len`, with the (rotation-canonical) witness word.
pub fn cjsr_lower(system: &SystemSpec, max_cycle_len: usize) -> Result<(f64, Word)> {
    if max_cycle_len == 0 {
        return Err(Error::Domain("max_cycle_len must be at least 1".into()));
    }
    let walks = walk_count(system, max_cycle_len);
    if walks > MAX_ENUMERATED_WORDS as f64 {
        return Err(Error::TooManyWords {
            length: max_cycle_len,
            count: walks.min(u128::MAX as f64) as u128,
            limit: MAX_ENUMERATED_WORDS,
        });
    }
    let automaton = system.automaton();
    let n = system.dim();
    let mut seen: HashSet<Word> = HashSet::new();
    let mut best = (0.0_f64, Word::new());
    // depth-first over (node, word, product) from every start node
    for start in 0..automaton.node_count() {
        let mut stack: Vec<(usize, Word, Matrix)> = vec![(start, Word::new(), Matrix::identity(n, n))];
        while let Some((node, word, product)) = stack.pop() {
            if !word.is_empty() && node == start {
                let canon = canonical_rotation(&word);
                if seen.insert(canon.clone()) {
                    let value = spectral_radius(&product).powf(1.0 / word.len() as f64);
                    let better = value > best.0
                        || (value == best.0 && (best.1.is_empty() || (canon.len(), &canon) < (best.1.len(), &best.1)));
                    if better {
                        best = (value, canon);
                    }
                }
            }
            if word.len() == max_cycle_len {
                continue;
            }
            for edge in automaton.outgoing(node) {
                let mut w = word.clone();
                w.push(edge.label);
                stack.push((edge.target, w, system.matrix(edge.label) * &product));
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CjsrBracket {
    pub lower: f64,
    pub upper: f64,
    pub lower_witness: Word,
    /// Lifting length behind `upper`.
    pub upper_l: usize,
    /// Longest cycle searched for `lower`.
    pub cycle_len: usize,
}

impl CjsrBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Cycle lower bound and lifted quadratic-Lyapunov upper bound at length `l`.
/// Cycles up to `max(l, DEFAULT_CYCLE_LEN)` are searched, shortened when
/// there are too many.
pub fn cjsr_bracket(system: &SystemSpec, l: usize, config: &ScenarioConfig) -> Result<CjsrBracket> {
    let (upper, _) = gamma_model(system, l, config)?;
    let mut cycle_len = l.max(DEFAULT_CYCLE_LEN);
    let (lower, lower_witness) = loop {
        match cjsr_lower(system, cycle_len) {
            Ok(found) => break found,
            Err(Error::TooManyWords { .. }) if cycle_len > 1 => cycle_len -= 1,
            Err(e) => return Err(e),
        }
    };
    Ok(CjsrBracket { lower, upper, lower_witness, upper_l: l, cycle_len })
}
