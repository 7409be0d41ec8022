//! The model of a constrained switching linear system: modes plus automaton.

use serde::{Deserialize, Serialize};

use crate::automaton::{Automaton, AutomatonFile};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A constrained switching linear system `x_{t+1} = A_{sigma(t)} x_t` whose
/// admissible switching sequences are the words of `automaton`.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    n: usize,
    matrices: Vec<Matrix>,
    automaton: Automaton,
}

/// A matrix in the system file: either one flat row-major list or a list of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixEntry {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    pub matrices: Vec<MatrixEntry>,
    pub automaton: AutomatonFile,
}

impl SystemSpec {
    pub fn new(matrices: Vec<Matrix>, automaton: Automaton) -> Result<Self> {
        let n = matrices.first().map(|m| m.nrows()).ok_or_else(|| Error::Domain("no matrices".into()))?;
        if n == 0 {
            return Err(Error::Domain("state dimension must be positive".into()));
        }
        for (k, m) in matrices.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "matrix {} is {}x{}, expected {n}x{n}",
                    k + 1,
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("matrix {} has a non-finite entry", k + 1)));
            }
        }
        if automaton.alphabet_size() != matrices.len() {
            return Err(Error::DimensionMismatch(format!(
                "automaton alphabet has {} labels but {} matrices were given",
                automaton.alphabet_size(),
                matrices.len()
            )));
        }
        Ok(Self { n, matrices, automaton })
    }

    pub fn from_file(file: &SystemFile) -> Result<Self> {
        let n = file.n;
        let matrices = file
            .matrices
            .iter()
            .enumerate()
            .map(|(k, entry)| {
                let flat: Vec<f64> = match entry {
                    MatrixEntry::Flat(v) => v.clone(),
                    MatrixEntry::Rows(rows) => {
                        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                            return Err(Error::DimensionMismatch(format!("matrix {} is not {n}x{n}", k + 1)));
                        }
                        rows.concat()
                    }
                };
                if flat.len() != n * n {
                    return Err(Error::DimensionMismatch(format!(
                        "matrix {} has {} entries, expected {}",
                        k + 1,
                        flat.len(),
                        n * n
                    )));
                }
                Ok(Matrix::from_row_slice(n, n, &flat))
            })
            .collect::<Result<Vec<_>>>()?;
        let automaton = Automaton::from_triples(file.automaton.nodes, &file.automaton.edges, matrices.len())?;
        Self::new(matrices, automaton)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SystemFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> SystemFile {
        SystemFile {
            n: self.n,
            matrices: self
                .matrices
                .iter()
                .map(|m| MatrixEntry::Flat(m.transpose().iter().copied().collect()))
                .collect(),
            automaton: self.automaton.to_file(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    /// Mode matrix for a 1-based label.
    pub fn matrix(&self, label: usize) -> &Matrix {
        &self.matrices[label - 1]
    }

    pub fn automaton(&self) -> &Automaton {
        &self.automaton
    }

    /// Product `A_{w[l-1]} ... A_{w[0]}`: later labels act on the left.
    pub fn product(&self, word: &[usize]) -> Matrix {
        word.iter()
            .fold(Matrix::identity(self.n, self.n), |acc, &label| self.matrix(label) * acc)
    }

    /// Same system with every mode scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            matrices: self.matrices.iter().map(|m| m * c).collect(),
            automaton: self.automaton.clone(),
        }
    }
}
