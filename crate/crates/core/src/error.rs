use thiserror::Error;

/// Errors raised across the certification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("automaton is not strongly connected (node {node} cannot reach node {target})")]
    NotStronglyConnected { node: usize, target: usize },

    #[error("node {0} has no outgoing edge")]
    DanglingNode(usize),

    #[error("edge {edge} has label {label}, expected a label in 1..={alphabet}")]
    BadLabel { edge: usize, label: usize, alphabet: usize },

    #[error("edge {edge} references node {node} but the automaton has {nodes} nodes")]
    BadNode { edge: usize, node: usize, nodes: usize },

    #[error("edge {edge} duplicates an earlier edge with the same endpoints and label")]
    DuplicateEdge { edge: usize },

    #[error("automaton has no nodes")]
    EmptyAutomaton,

    #[error("word count overflows u128 at length {length} (log2 estimate {log2_estimate:.3})")]
    Overflow { length: usize, log2_estimate: f64 },

    #[error("{count} words of length {length} exceed the enumeration limit {limit}")]
    TooManyWords { length: usize, count: u128, limit: u128 },

    #[error("{what} did not converge after {iterations} iterations")]
    ConvergenceFailure { what: &'static str, iterations: usize },

    #[error("matrix is not positive definite (smallest eigenvalue {0})")]
    NotPositiveDefinite(f64),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("row {row}: initial state has norm {norm}, expected a unit vector")]
    Norm { row: usize, norm: f64 },

    #[error("observation set is empty")]
    EmptyObservations,

    #[error("ellipsoid method hit the iteration limit ({0}) without a verdict")]
    IterationLimit(usize),

    #[error("too few samples: N = {n_samples} but N >= d + 1 = {} is required (N >= d := n(n+1)/2 with a positive second beta parameter)", .d + 1)]
    TooFewSamples { n_samples: usize, d: usize },

    #[error("bound variant is unavailable: {0}")]
    MissingContext(String),

    #[error("adjacency matrix is not diagonalizable; the eigenvalue bound does not apply")]
    NotDiagonalizable,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
