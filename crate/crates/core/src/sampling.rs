//! Observation sets: synthesized from a model or ingested from trajectory files.
//!
//! Synthesis is reproducible per observation: observation `i` draws everything
//! from `ChaCha8Rng::seed_from_u64(seed)` switched to stream `i`, so the set does
//! not depend on how the work is scheduled.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::automaton::{Automaton, Word};
use crate::error::{Error, Result};
use crate::system::SystemSpec;

/// Tolerance on `|x0|` when ingesting recorded trajectories.
pub const INGEST_NORM_TOLERANCE: f64 = 1e-6;

/// Endpoint pair `(x0, xl)` of one trajectory, `xl = A x0` for an unobserved
/// admissible product `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x0: Vec<f64>,
    pub xl: Vec<f64>,
    /// Generating word, known only for synthesized data. Certification ignores it.
    pub word: Option<Word>,
    /// Intermediate states `x_1 .. x_{l-1}`, when recorded.
    pub states: Option<Vec<Vec<f64>>>,
}

/// The data set `omega_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    n: usize,
    observations: Vec<Observation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingConfig {
    pub samples: usize,
    pub length: usize,
    pub seed: u64,
}

impl ObservationSet {
    pub fn new(n: usize, observations: Vec<Observation>) -> Result<Self> {
        for (i, o) in observations.iter().enumerate() {
            if o.x0.len() != n || o.xl.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "observation {i} has dimensions ({}, {}), expected {n}",
                    o.x0.len(),
                    o.xl.len()
                )));
            }
        }
        Ok(Self { n, observations })
    }

    /// Builds from raw endpoint pairs, rescaling each pair so that `x0` is a unit
    /// vector (`xl` is linear in `x0`). Pairs with `x0 = 0` are rejected.
    pub fn from_raw(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let n = pairs.first().map(|p| p.0.len()).ok_or(Error::EmptyObservations)?;
        let observations = pairs
            .iter()
            .enumerate()
            .map(|(i, (x0, xl))| {
                let norm = l2(x0);
                if norm == 0.0 || !norm.is_finite() {
                    return Err(Error::Norm { row: i, norm });
                }
                Ok(Observation {
                    x0: x0.iter().map(|v| v / norm).collect(),
                    xl: xl.iter().map(|v| v / norm).collect(),
                    word: None,
                    states: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, observations)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.observations.iter()
    }

    /// First `k` observations.
    pub fn prefix(&self, k: usize) -> Self {
        Self { n: self.n, observations: self.observations[..k.min(self.len())].to_vec() }
    }

    /// Copy without generating words or intermediate states.
    pub fn stripped(&self) -> Self {
        Self {
            n: self.n,
            observations: self
                .observations
                .iter()
                .map(|o| Observation { x0: o.x0.clone(), xl: o.xl.clone(), word: None, states: None })
                .collect(),
        }
    }

    /// Writes the trajectory CSV: `id,x0_1..x0_n,xl_1..xl_n`, followed by
    /// `x{t}_{k}` columns for recorded intermediate states when every row has them.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.n;
        let inner = self
            .observations
            .iter()
            .map(|o| o.states.as_ref().map(Vec::len))
            .reduce(|a, b| if a == b { a } else { None })
            .flatten()
            .unwrap_or(0);
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend((1..=n).map(|k| format!("x0_{k}")));
        header.extend((1..=n).map(|k| format!("xl_{k}")));
        for t in 1..=inner {
            header.extend((1..=n).map(|k| format!("x{t}_{k}")));
        }
        w.write_record(&header)?;
        for (i, o) in self.observations.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(o.x0.iter().map(|v| v.to_string()));
            row.extend(o.xl.iter().map(|v| v.to_string()));
            if inner > 0 {
                for s in o.states.as_ref().expect("checked above") {
                    row.extend(s.iter().map(|v| v.to_string()));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the trajectory CSV. Columns other than `id`, `x0_*` and `xl_*` are
    /// ignored; `x0` must be a unit vector to within [`INGEST_NORM_TOLERANCE`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
        let header = r.headers()?.clone();
        let column = |prefix: &str| -> Vec<(usize, usize)> {
            let mut cols: Vec<(usize, usize)> = header
                .iter()
                .enumerate()
                .filter_map(|(c, name)| name.strip_prefix(prefix).and_then(|k| k.parse::<usize>().ok()).map(|k| (k, c)))
                .collect();
            cols.sort_unstable();
            cols
        };
        let x0_cols = column("x0_");
        let xl_cols = column("xl_");
        let n = x0_cols.len();
        if n == 0 {
            return Err(Error::Parse { line: 1, message: "header has no x0_* columns".into() });
        }
        if xl_cols.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "header has {n} x0_* columns but {} xl_* columns",
                xl_cols.len()
            )));
        }
        for (expected, &(k, _)) in x0_cols.iter().chain(xl_cols.iter()).enumerate() {
            if k != expected % n + 1 {
                return Err(Error::Parse { line: 1, message: format!("columns must be numbered 1..{n}") });
            }
        }
        let width = header.len();
        let mut observations = Vec::new();
        for (row, record) in r.records().enumerate() {
            let record = record?;
            let line = record.position().map_or(row + 2, |p| p.line() as usize);
            if record.len() != width {
                return Err(Error::DimensionMismatch(format!(
                    "line {line} has {} fields, header has {width}",
                    record.len()
                )));
            }
            let parse = |c: usize| -> Result<f64> {
                let field = &record[c];
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line, message: format!("invalid number {field:?}") })
            };
            let mut x0 = x0_cols.iter().map(|&(_, c)| parse(c)).collect::<Result<Vec<_>>>()?;
            let mut xl = xl_cols.iter().map(|&(_, c)| parse(c)).collect::<Result<Vec<_>>>()?;
            let norm = l2(&x0);
            if (norm - 1.0).abs() > INGEST_NORM_TOLERANCE {
                return Err(Error::Norm { row: line, norm });
            }
            x0.iter_mut().for_each(|v| *v /= norm);
            xl.iter_mut().for_each(|v| *v /= norm);
            observations.push(Observation { x0, xl, word: None, states: None });
        }
        Self::new(n, observations)
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Alias for [`ObservationSet::read_csv_file`].
pub fn ingest(path: &Path) -> Result<ObservationSet> {
    ObservationSet::read_csv_file(path)
}

pub(crate) fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One standard normal pair by the Box-Muller transform.
fn box_muller<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    // u1 in (0, 1] keeps the logarithm finite
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Uniform draw from the unit sphere in `R^n`.
pub fn sample_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    assert!(n >= 1, "sphere dimension must be positive");
    loop {
        let mut v = Vec::with_capacity(n + 1);
        while v.len() < n {
            let (a, b) = box_muller(rng);
            v.push(a);
            v.push(b);
        }
        v.truncate(n);
        let norm = l2(&v);
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Random walk of `l` steps: uniform start node, then a uniformly chosen
/// outgoing edge at every step. Returns the labels in order.
pub fn sample_walk<R: Rng + ?Sized>(automaton: &Automaton, l: usize, rng: &mut R) -> Word {
    let mut node = rng.random_range(0..automaton.node_count());
    let mut word = Vec::with_capacity(l);
    for _ in 0..l {
        let k = rng.random_range(0..automaton.out_degree(node));
        let edge = automaton.outgoing(node).nth(k).expect("index within out-degree");
        word.push(edge.label);
        node = edge.target;
    }
    word
}

/// Generator for observation `index` under `seed`.
pub fn observation_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws one trajectory, optionally keeping the intermediate states.
pub fn synthesize_one(system: &SystemSpec, l: usize, seed: u64, index: u64, record_states: bool) -> Observation {
    let mut rng = observation_rng(seed, index);
    let x0 = sample_sphere(system.dim(), &mut rng);
    let word = sample_walk(system.automaton(), l, &mut rng);
    let mut x = nalgebra::DVector::from_column_slice(&x0);
    let mut states = Vec::new();
    for (t, &label) in word.iter().enumerate() {
        x = system.matrix(label) * x;
        if record_states && t + 1 < l {
            states.push(x.iter().copied().collect());
        }
    }
    Observation {
        x0,
        xl: x.iter().copied().collect(),
        word: Some(word),
        states: record_states.then_some(states),
    }
}

/// Draws `config.samples` observations of trajectories of length `config.length`.
pub fn synthesize(system: &SystemSpec, config: &SamplingConfig) -> Result<ObservationSet> {
    synthesize_with_states(system, config, false)
}

pub fn synthesize_with_states(system: &SystemSpec, config: &SamplingConfig, record_states: bool) -> Result<ObservationSet> {
    if config.samples == 0 || config.length == 0 {
        return Err(Error::Domain("sampling needs N >= 1 and l >= 1".into()));
    }
    let observations = (0..config.samples as u64)
        .into_par_iter()
        .map(|i| synthesize_one(system, config.length, config.seed, i, record_states))
        .collect();
    ObservationSet::new(system.dim(), observations)
}
