//! Admissible products of length `l` and their sampling probabilities.

use serde::Serialize;

use crate::automaton::Word;
use crate::error::Result;
use crate::numerics::{compensated_sum, eigenvalues, eigenvector_condition, Matrix};
use crate::system::SystemSpec;

/// Enumeration guard on the number of words of length `l`.
pub const MAX_ENUMERATED_WORDS: u128 = 1_000_000;

/// Relative Frobenius tolerance under which two products are merged.
pub const MERGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct ProductEntry {
    #[serde(serialize_with = "serialize_matrix")]
    pub matrix: Matrix,
    /// Lexicographically smallest word producing this matrix.
    pub word: Word,
    /// Total walk probability of all words producing this matrix.
    pub probability: f64,
    /// Number of distinct words merged into this entry.
    pub multiplicity: usize,
}

fn serialize_matrix<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

/// The set of admissible products of a fixed length.
#[derive(Debug, Clone, Serialize)]
pub struct ProductSet {
    pub length: usize,
    pub entries: Vec<ProductEntry>,
    /// Number of accepted words (before merging equal products).
    pub word_count: usize,
    /// Smallest walk probability of a single word.
    pub word_p_min: f64,
}

impl ProductSet {
    /// Number of distinct products.
    pub fn distinct_count(&self) -> usize {
        self.entries.len()
    }

    /// Minimal probability over distinct products.
    pub fn p_min(&self) -> f64 {
        self.entries.iter().map(|e| e.probability).fold(f64::INFINITY, f64::min)
    }

    /// Matrix-level and word-level minima. The word-level value never exceeds
    /// the matrix-level one.
    pub fn p_min_pair(&self) -> (f64, f64) {
        (self.p_min(), self.word_p_min)
    }

    pub fn total_probability(&self) -> f64 {
        compensated_sum(self.entries.iter().map(|e| e.probability))
    }

    /// Whether the induced measure on products is uniform to `rel_tol`.
    pub fn is_uniform(&self, rel_tol: f64) -> bool {
        let max = self.entries.iter().map(|e| e.probability).fold(0.0, f64::max);
        (max - self.p_min()) <= rel_tol * max
    }
}

/// Expands every accepted word of length `l` into its product and merges
/// numerically equal products, summing their probabilities.
pub fn enumerate_products(system: &SystemSpec, l: usize) -> Result<ProductSet> {
    let words = system.automaton().enumerate_words(l, MAX_ENUMERATED_WORDS)?;
    let word_p_min = words.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    let word_count = words.len();

    let products: Vec<(Matrix, f64)> = words
        .iter()
        .map(|(w, _)| {
            let m = system.product(w);
            let norm = m.norm();
            (m, norm)
        })
        .collect();

    // Equal products have equal norms, so candidates for merging are contiguous
    // once sorted by norm.
    let mut order: Vec<usize> = (0..words.len()).collect();
    order.sort_by(|&i, &j| products[i].1.total_cmp(&products[j].1).then(i.cmp(&j)));

    // cluster id per word, in word (= lexicographic) order
    let mut cluster_of = vec![usize::MAX; words.len()];
    let mut reps: Vec<usize> = Vec::new();
    let mut window_start = 0;
    for (pos, &i) in order.iter().enumerate() {
        let (ref mi, ni) = products[i];
        while window_start < pos {
            let nj = products[order[window_start]].1;
            if ni - nj > MERGE_TOLERANCE * ni.max(nj) {
                window_start += 1;
            } else {
                break;
            }
        }
        let found = order[window_start..pos].iter().find_map(|&j| {
            let c = cluster_of[j];
            let rep = &products[reps[c]].0;
            let scale = mi.norm().max(rep.norm());
            ((mi - rep).norm() <= MERGE_TOLERANCE * scale).then_some(c)
        });
        cluster_of[i] = match found {
            Some(c) => c,
            None => {
                reps.push(i);
                reps.len() - 1
            }
        };
    }

    let mut entries: Vec<Option<ProductEntry>> = vec![None; reps.len()];
    for (i, (word, prob)) in words.into_iter().enumerate() {
        let c = cluster_of[i];
        match &mut entries[c] {
            Some(e) => {
                e.probability += prob;
                e.multiplicity += 1;
            }
            // words arrive in lexicographic order, so the first one is the smallest
            slot @ None => {
                *slot = Some(ProductEntry {
                    matrix: products[i].0.clone(),
                    word,
                    probability: prob,
                    multiplicity: 1,
                })
            }
        }
    }
    let mut entries: Vec<ProductEntry> = entries.into_iter().map(|e| e.expect("nonempty cluster")).collect();
    entries.sort_by(|a, b| a.word.cmp(&b.word));

    Ok(ProductSet { length: l, entries, word_count, word_p_min })
}

/// Relative tolerance for "all eigenvalue moduli equal".
pub const BARABANOV_MODULUS_TOLERANCE: f64 = 1e-6;
/// Eigenvector condition number above which a basis counts as ill-conditioned.
pub const BARABANOV_CONDITION_LIMIT: f64 = 1e8;

/// Whether `a` looks similar to a scaled orthogonal matrix, i.e. admits
/// `A^T P A = gamma^2 P` for some `P > 0`.
pub fn is_barabanov_suspect(a: &Matrix) -> bool {
    let moduli: Vec<f64> = eigenvalues(a).iter().map(|z| z.norm()).collect();
    let max = moduli.iter().copied().fold(0.0, f64::max);
    let min = moduli.iter().copied().fold(f64::INFINITY, f64::min);
    if max - min > BARABANOV_MODULUS_TOLERANCE * max {
        return false;
    }
    eigenvector_condition(a).is_some_and(|c| c < BARABANOV_CONDITION_LIMIT)
}

/// Entries of the product set flagged by [`is_barabanov_suspect`].
pub fn barabanov_flag(products: &ProductSet) -> Vec<&ProductEntry> {
    products.entries.iter().filter(|e| is_barabanov_suspect(&e.matrix)).collect()
}
