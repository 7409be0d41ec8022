//! Labelled digraphs constraining the switching signal.
//!
//! Nodes are `0..nodes`, labels are the 1-based mode indices `1..=m`. A word
//! is accepted when some path carries it as its sequence of edge labels.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{eigenvalues, eigenvector_condition, Matrix};

/// 1-based labels along a path.
pub type Word = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub label: usize,
}

/// A validated, strongly connected labelled digraph.
#[derive(Debug, Clone, PartialEq)]
pub struct Automaton {
    nodes: usize,
    edges: Vec<Edge>,
    alphabet_size: usize,
    outgoing: Vec<Vec<usize>>,
}

/// On-disk form: `{"nodes": 2, "edges": [[0, 0, 1], [0, 1, 2], [1, 0, 1]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutomatonFile {
    pub nodes: usize,
    pub edges: Vec<[usize; 3]>,
}

/// Spectral and combinatorial summary of an automaton.
#[derive(Debug, Clone, Serialize)]
pub struct AutomatonStats {
    pub node_count: usize,
    /// Bits per symbol, `log2` of the adjacency Perron eigenvalue.
    pub entropy: f64,
    pub perron_eigenvalue: f64,
    /// Moduli of the adjacency eigenvalues, ascending.
    pub adjacency_eigenvalues: Vec<f64>,
    pub diagonalizable: bool,
    pub eigenvector_condition: Option<f64>,
    /// No node has two outgoing edges with the same label. Only then does the
    /// adjacency entropy coincide with the growth rate of the language; otherwise
    /// it is an upper bound.
    pub right_resolving: bool,
}

/// Threshold on the eigenvector-matrix condition number for the
/// diagonalizability flag.
pub const DIAGONALIZABLE_CONDITION_LIMIT: f64 = 1e8;

const POWER_ITERATION_MAX: usize = 1_000_000;
const DENSE_SPECTRUM_MAX_NODES: usize = 32;

impl Automaton {
    /// Validates and builds an automaton over the alphabet `1..=alphabet_size`.
    pub fn new(nodes: usize, edges: Vec<Edge>, alphabet_size: usize) -> Result<Self> {
        validate(nodes, &edges, alphabet_size)?;
        let mut outgoing = vec![Vec::new(); nodes];
        for (k, e) in edges.iter().enumerate() {
            outgoing[e.source].push(k);
        }
        Ok(Self { nodes, edges, alphabet_size, outgoing })
    }

    /// Builds from `(source, target, label)` triples.
    pub fn from_triples(nodes: usize, triples: &[[usize; 3]], alphabet_size: usize) -> Result<Self> {
        let edges = triples
            .iter()
            .map(|&[source, target, label]| Edge { source, target, label })
            .collect();
        Self::new(nodes, edges, alphabet_size)
    }

    /// Parses the JSON form; the alphabet is the largest label used.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: AutomatonFile = serde_json::from_str(text)?;
        let m = file.edges.iter().map(|e| e[2]).max().unwrap_or(0);
        Self::from_triples(file.nodes, &file.edges, m)
    }

    pub fn to_file(&self) -> AutomatonFile {
        AutomatonFile {
            nodes: self.nodes,
            edges: self.edges.iter().map(|e| [e.source, e.target, e.label]).collect(),
        }
    }

    /// One node with a self-loop for every label in `1..=m`.
    pub fn full_shift(m: usize) -> Self {
        let edges = (1..=m).map(|label| Edge { source: 0, target: 0, label }).collect();
        Self::new(1, edges, m).expect("full shift is valid")
    }

    /// Two nodes forbidding the factor `22`: `a->a:1, a->b:2, b->a:1`.
    pub fn golden_mean() -> Self {
        Self::from_triples(2, &[[0, 0, 1], [0, 1, 2], [1, 0, 1]], 2).expect("golden mean is valid")
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.outgoing[node].len()
    }

    /// Outgoing edges of `node`, in input order.
    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.outgoing[node].iter().map(move |&k| &self.edges[k])
    }

    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.nodes, self.nodes);
        for e in &self.edges {
            a[(e.source, e.target)] += 1.0;
        }
        a
    }

    pub fn is_right_resolving(&self) -> bool {
        (0..self.nodes).all(|v| {
            let mut labels: Vec<usize> = self.outgoing(v).map(|e| e.label).collect();
            labels.sort_unstable();
            labels.windows(2).all(|w| w[0] != w[1])
        })
    }

    /// Whether some path carries `word`.
    pub fn accepts(&self, word: &[usize]) -> bool {
        let mut current = vec![true; self.nodes];
        for &label in word {
            current = self.step_set(&current, label);
            if !current.iter().any(|&b| b) {
                return false;
            }
        }
        true
    }

    fn step_set(&self, set: &[bool], label: usize) -> Vec<bool> {
        let mut next = vec![false; self.nodes];
        for (v, _) in set.iter().enumerate().filter(|(_, &b)| b) {
            for e in self.outgoing(v).filter(|e| e.label == label) {
                next[e.target] = true;
            }
        }
        next
    }

    /// Forward step of the sampling walk: from node masses to the masses after
    /// emitting `label`.
    pub(crate) fn step_mass(&self, mass: &[f64], label: usize) -> Vec<f64> {
        let mut next = vec![0.0; self.nodes];
        for (v, &w) in mass.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let share = w / self.out_degree(v) as f64;
            for e in self.outgoing(v).filter(|e| e.label == label) {
                next[e.target] += share;
            }
        }
        next
    }

    /// Number of distinct words of length `l`.
    ///
    /// Words are tracked through the subset construction: two words reaching the
    /// same node set have the same extensions, and extending distinct words keeps
    /// them distinct, so per-subset counts can be aggregated exactly.
    pub fn count_words(&self, l: usize) -> Result<u128> {
        if l == 0 {
            return Err(Error::Domain("word length must be at least 1".into()));
        }
        let mut layer: HashMap<Vec<bool>, (u128, f64)> = HashMap::new();
        layer.insert(vec![true; self.nodes], (1, 1.0));
        let mut overflowed = false;
        for _ in 0..l {
            let mut next: HashMap<Vec<bool>, (u128, f64)> = HashMap::new();
            for (set, &(count, approx)) in &layer {
                for label in 1..=self.alphabet_size {
                    let target = self.step_set(set, label);
                    if !target.iter().any(|&b| b) {
                        continue;
                    }
                    let slot = next.entry(target).or_insert((0, 0.0));
                    match slot.0.checked_add(count) {
                        Some(c) => slot.0 = c,
                        None => overflowed = true,
                    }
                    slot.1 += approx;
                }
            }
            layer = next;
        }
        let approx: f64 = layer.values().map(|v| v.1).sum();
        if overflowed {
            return Err(Error::Overflow { length: l, log2_estimate: approx.log2() });
        }
        let mut total: u128 = 0;
        for (count, _) in layer.values() {
            total = total
                .checked_add(*count)
                .ok_or(Error::Overflow { length: l, log2_estimate: approx.log2() })?;
        }
        Ok(total)
    }

    /// Perron eigenvalue, entropy and spectral flags of the adjacency matrix.
    pub fn entropy(&self) -> Result<AutomatonStats> {
        let adj = self.adjacency();
        let mut moduli: Vec<f64> = eigenvalues(&adj).iter().map(|z| z.norm()).collect();
        moduli.sort_by(f64::total_cmp);
        let perron = if self.nodes <= DENSE_SPECTRUM_MAX_NODES {
            *moduli.last().expect("nonempty automaton")
        } else {
            perron_by_power_iteration(&self.edges, self.nodes)?
        };
        let condition = eigenvector_condition(&adj);
        Ok(AutomatonStats {
            node_count: self.nodes,
            entropy: perron.log2().max(0.0),
            perron_eigenvalue: perron,
            adjacency_eigenvalues: moduli,
            diagonalizable: condition.is_some_and(|c| c < DIAGONALIZABLE_CONDITION_LIMIT),
            eigenvector_condition: condition,
            right_resolving: self.is_right_resolving(),
        })
    }

    /// Probability that the sampling walk emits exactly `word`: uniform start
    /// node, then a uniformly chosen outgoing edge at every step.
    pub fn walk_probability(&self, word: &[usize]) -> f64 {
        let mut mass = vec![1.0 / self.nodes as f64; self.nodes];
        for &label in word {
            mass = self.step_mass(&mass, label);
        }
        mass.iter().sum()
    }

    /// All accepted words of length `l` in lexicographic order, with their walk
    /// probabilities. Fails when more than `limit` words exist.
    pub fn enumerate_words(&self, l: usize, limit: u128) -> Result<Vec<(Word, f64)>> {
        let count = self.count_words(l).map_err(|e| match e {
            Error::Overflow { length, .. } => Error::TooManyWords { length, count: u128::MAX, limit },
            other => other,
        })?;
        if count > limit {
            return Err(Error::TooManyWords { length: l, count, limit });
        }
        let mut out = Vec::with_capacity(count as usize);
        let start = vec![1.0 / self.nodes as f64; self.nodes];
        let mut word = Vec::with_capacity(l);
        self.enumerate_rec(&start, l, &mut word, &mut out);
        Ok(out)
    }

    fn enumerate_rec(&self, mass: &[f64], remaining: usize, word: &mut Word, out: &mut Vec<(Word, f64)>) {
        if remaining == 0 {
            out.push((word.clone(), mass.iter().sum()));
            return;
        }
        for label in 1..=self.alphabet_size {
            let next = self.step_mass(mass, label);
            if next.iter().all(|&w| w == 0.0) {
                continue;
            }
            word.push(label);
            self.enumerate_rec(&next, remaining - 1, word, out);
            word.pop();
        }
    }
}

/// Checks node references, labels, duplicates, out-degrees and strong
/// connectivity (forward and reverse reachability from node 0).
pub fn validate(nodes: usize, edges: &[Edge], alphabet_size: usize) -> Result<()> {
    if nodes == 0 {
        return Err(Error::EmptyAutomaton);
    }
    let mut seen = BTreeMap::new();
    for (k, e) in edges.iter().enumerate() {
        for node in [e.source, e.target] {
            if node >= nodes {
                return Err(Error::BadNode { edge: k, node, nodes });
            }
        }
        if e.label == 0 || e.label > alphabet_size {
            return Err(Error::BadLabel { edge: k, label: e.label, alphabet: alphabet_size });
        }
        if seen.insert((e.source, e.target, e.label), k).is_some() {
            return Err(Error::DuplicateEdge { edge: k });
        }
    }
    let forward = reachable(nodes, edges.iter().map(|e| (e.source, e.target)));
    if let Some(t) = forward.iter().position(|&r| !r) {
        return Err(Error::NotStronglyConnected { node: 0, target: t });
    }
    let backward = reachable(nodes, edges.iter().map(|e| (e.target, e.source)));
    if let Some(t) = backward.iter().position(|&r| !r) {
        return Err(Error::NotStronglyConnected { node: t, target: 0 });
    }
    // only reachable for a lone node without a self-loop
    let mut out_degree = vec![0usize; nodes];
    for e in edges {
        out_degree[e.source] += 1;
    }
    if let Some(v) = out_degree.iter().position(|&d| d == 0) {
        return Err(Error::DanglingNode(v));
    }
    Ok(())
}

fn reachable(nodes: usize, arcs: impl Iterator<Item = (usize, usize)>) -> Vec<bool> {
    let mut adj = vec![Vec::new(); nodes];
    for (s, t) in arcs {
        adj[s].push(t);
    }
    let mut seen = vec![false; nodes];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Power iteration on `A + I`, which is primitive for strongly connected `A`.
/// Perron eigenvalue of a strongly connected automaton by power iteration on
/// `A + I` (primitive, so the iterate stays positive). Stops once the
/// Collatz-Wielandt bounds `min (Bx)_i / x_i <= rho(B) <= max (Bx)_i / x_i`
/// agree.
fn perron_by_power_iteration(edges: &[Edge], n: usize) -> Result<f64> {
    let mut x = vec![1.0; n];
    for _ in 0..POWER_ITERATION_MAX {
        let mut y = x.clone();
        for e in edges {
            y[e.source] += x[e.target];
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for (yi, xi) in y.iter().zip(&x) {
            let r = yi / xi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if hi - lo <= 1e-13 * hi {
            return Ok(0.5 * (lo + hi) - 1.0);
        }
        let scale = y.iter().copied().fold(0.0, f64::max);
        x = y.into_iter().map(|v| v / scale).collect();
    }
    Err(Error::ConvergenceFailure { what: "Perron power iteration", iterations: POWER_ITERATION_MAX })
}
