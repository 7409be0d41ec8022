//! From a sampled optimum to a probabilistic bound on the constrained joint
//! spectral radius.
//!
//! With `d = n(n+1)/2` and `Phi(x; a, b) = I_x(a, b)`:
//!
//! ```text
//! eps   = 1 - Phi(1 - beta; d + 1, N - d)
//! q     = eps * kappa(P*) * mass
//! delta = sqrt(1 - Phi^-1(q; (n - 1)/2, 1/2))      (q < 1)
//! bound = gamma* / delta^(1/l)
//! ```
//!
//! where `mass` is `1 / p_min` (exact), `|Pi_l|` (uniform), `2^(l h)` (entropy)
//! or `|V| lambda_max^l` (eigen). When `q >= 1` the certificate is
//! non-informative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{kappa, reg_inc_beta_inv, reg_inc_beta_upper, sym_dim, SymMatrix};
use crate::products::{barabanov_flag, enumerate_products, ProductSet};
use crate::scenario::{ScenarioConfig, ScenarioSolution};
use crate::system::SystemSpec;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundVariant {
    /// Minimal product probability `p_min`.
    Exact,
    /// Uniform product measure, `|Pi_l|`.
    #[default]
    Uniform,
    /// Finite-`l` entropy approximation `2^(l h(G))`.
    Entropy,
    /// Adjacency spectrum, `|V| lambda_max^l`.
    Eigen,
}

impl std::str::FromStr for BoundVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Self::Exact),
            "uniform" => Ok(Self::Uniform),
            "entropy" => Ok(Self::Entropy),
            "eigen" => Ok(Self::Eigen),
            other => Err(Error::Domain(format!("unknown bound variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for BoundVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Uniform => "uniform",
            Self::Entropy => "entropy",
            Self::Eigen => "eigen",
        })
    }
}

/// Variant-specific knowledge about the switching constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum BoundContext {
    Exact { p_min: f64 },
    Uniform { product_count: f64 },
    Entropy { entropy: f64 },
    Eigen { nodes: usize, lambda_max: f64, diagonalizable: Option<bool> },
}

impl BoundContext {
    pub fn variant(&self) -> BoundVariant {
        match self {
            Self::Exact { .. } => BoundVariant::Exact,
            Self::Uniform { .. } => BoundVariant::Uniform,
            Self::Entropy { .. } => BoundVariant::Entropy,
            Self::Eigen { .. } => BoundVariant::Eigen,
        }
    }

    /// `log2` of the mass term at length `l`.
    pub fn log2_mass(&self, l: usize) -> Result<f64> {
        let l = l as f64;
        match *self {
            Self::Exact { p_min } if p_min > 0.0 && p_min <= 1.0 => Ok(-p_min.log2()),
            Self::Exact { p_min } => Err(Error::Domain(format!("p_min = {p_min} must lie in (0, 1]"))),
            Self::Uniform { product_count } if product_count >= 1.0 => Ok(product_count.log2()),
            Self::Uniform { product_count } => {
                Err(Error::Domain(format!("product count {product_count} must be at least 1")))
            }
            Self::Entropy { entropy } if entropy >= 0.0 && entropy.is_finite() => Ok(l * entropy),
            Self::Entropy { entropy } => Err(Error::Domain(format!("entropy {entropy} must be nonnegative"))),
            Self::Eigen { diagonalizable: Some(false), .. } => Err(Error::NotDiagonalizable),
            Self::Eigen { nodes, lambda_max, .. } if nodes >= 1 && lambda_max >= 1.0 => {
                Ok((nodes as f64).log2() + l * lambda_max.log2())
            }
            Self::Eigen { nodes, lambda_max, .. } => Err(Error::Domain(format!(
                "need |V| >= 1 and lambda_max >= 1, got {nodes} and {lambda_max}"
            ))),
        }
    }

    /// Context computed from the model for `variant` at length `l`.
    pub fn from_model(variant: BoundVariant, system: &SystemSpec, l: usize) -> Result<(Self, Option<ProductSet>)> {
        Ok(match variant {
            BoundVariant::Exact => {
                let ps = enumerate_products(system, l)?;
                (Self::Exact { p_min: ps.p_min() }, Some(ps))
            }
            BoundVariant::Uniform => {
                let ps = enumerate_products(system, l)?;
                (Self::Uniform { product_count: ps.distinct_count() as f64 }, Some(ps))
            }
            BoundVariant::Entropy => (Self::Entropy { entropy: system.automaton().entropy()?.entropy }, None),
            BoundVariant::Eigen => {
                let stats = system.automaton().entropy()?;
                (
                    Self::Eigen {
                        nodes: stats.node_count,
                        lambda_max: stats.perron_eigenvalue,
                        diagonalizable: Some(stats.diagonalizable),
                    },
                    None,
                )
            }
        })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("confidence beta = {beta} must lie in the open interval (0, 1)")));
    }
    Ok(())
}

/// Violation level `1 - Phi(1 - beta; d + 1, N - d)`, computed as an upper
/// tail so that tiny values keep their precision.
pub fn epsilon(beta: f64, samples: usize, d: usize) -> Result<f64> {
    check_beta(beta)?;
    if samples <= d {
        return Err(Error::TooFewSamples { n_samples: samples, d });
    }
    reg_inc_beta_upper(1.0 - beta, (d + 1) as f64, (samples - d) as f64)
}

/// Correction factor for one certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaValue {
    pub epsilon: f64,
    /// Argument of the inverse beta function (may be `+inf` when huge).
    pub q: f64,
    pub log_q: f64,
    /// `0` when non-informative.
    pub delta: f64,
    /// `ln(1 / delta^(1/l))`, `+inf` when non-informative.
    pub log_factor: f64,
    pub informative: bool,
}

/// Computes `delta` for the given context and sampled eccentricity `kappa`.
pub fn delta(context: &BoundContext, beta: f64, kappa: f64, samples: usize, l: usize, n: usize) -> Result<DeltaValue> {
    if l == 0 || n == 0 {
        return Err(Error::Domain("l and n must be positive".into()));
    }
    if !(kappa >= 1.0 - 1e-12 && kappa.is_finite()) {
        return Err(Error::Domain(format!("kappa = {kappa} must be at least 1")));
    }
    let eps = epsilon(beta, samples, sym_dim(n))?;
    let log_q = eps.ln() + kappa.ln() + std::f64::consts::LN_2 * context.log2_mass(l)?;
    let q = log_q.exp();
    if log_q >= 0.0 {
        return Ok(DeltaValue {
            epsilon: eps,
            q,
            log_q,
            delta: 0.0,
            log_factor: f64::INFINITY,
            informative: false,
        });
    }
    // On the circle and above, Phi^-1(q; (n-1)/2, 1/2); for n = 1 the sphere is
    // {-1, 1} and the quantile is 0.
    let x = if n == 1 { 0.0 } else { reg_inc_beta_inv(q, 0.5 * (n as f64 - 1.0), 0.5)? };
    let log_one_minus_x = (-x).ln_1p();
    let delta = (0.5 * log_one_minus_x).exp();
    let log_factor = -0.5 * log_one_minus_x / l as f64;
    Ok(DeltaValue { epsilon: eps, q, log_q, delta, log_factor, informative: delta > 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    #[serde(rename = "C")]
    pub c_upper: f64,
    pub gamma_tol: f64,
    pub feas_tol: f64,
}

impl From<&ScenarioConfig> for Tolerances {
    fn from(c: &ScenarioConfig) -> Self {
        Self { c_upper: c.c_upper, gamma_tol: c.gamma_tol, feas_tol: c.feas_tol }
    }
}

/// The probabilistic CJSR upper bound with everything needed to audit it.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub beta: f64,
    #[serde(rename = "N")]
    pub samples: usize,
    pub l: usize,
    pub n: usize,
    pub d: usize,
    pub gamma_star: f64,
    #[serde(rename = "P_star", serialize_with = "serialize_sym")]
    pub p_star: SymMatrix,
    pub epsilon: f64,
    pub kappa: f64,
    /// Variant mass term; `null` in JSON when it overflows `f64`.
    pub mass_term: f64,
    pub log2_mass_term: f64,
    pub variant: BoundVariant,
    pub context: BoundContext,
    pub q: f64,
    pub delta: f64,
    /// `1 / delta^(1/l)`; `null` when non-informative.
    pub factor: Option<f64>,
    /// `gamma* / delta^(1/l)`; `null` when non-informative.
    pub bound: Option<f64>,
    pub informative: bool,
    /// The entropy variant substitutes `2^(l h)` for `|Pi_l|` at finite `l`.
    pub approximate: bool,
    pub warnings: Vec<String>,
    /// Where the variant context came from: `model` (system file), `flags` or
    /// `caller`.
    pub context_source: String,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

pub(crate) fn serialize_sym<S: serde::Serializer>(m: &SymMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect()).collect();
    rows.serialize(s)
}

/// What is known about the products when certifying.
#[derive(Debug, Clone, Copy)]
pub enum ModelKnowledge<'a> {
    /// Pure data-driven path: the assumptions on the products cannot be checked.
    None,
    /// Enumerated products from the model, used for post-hoc checks only.
    Products(&'a ProductSet),
}

/// Assembles the certificate. A non-informative outcome is not an error.
pub fn certify(
    solution: &ScenarioSolution,
    context: &BoundContext,
    beta: f64,
    samples: usize,
    l: usize,
    config: &ScenarioConfig,
    knowledge: ModelKnowledge<'_>,
) -> Result<Certificate> {
    let n = solution.p_star.dim();
    let d = sym_dim(n);
    let kappa = kappa(&solution.p_star)?;
    let dv = delta(context, beta, kappa, samples, l, n)?;
    let log2_mass = context.log2_mass(l)?;
    let mut warnings = Vec::new();
    match knowledge {
        ModelKnowledge::None => {
            warnings.push("no-Barabanov assumption unverified: products unavailable".to_string());
        }
        ModelKnowledge::Products(ps) => {
            let flagged = barabanov_flag(ps);
            for entry in &flagged {
                warnings.push(format!(
                    "product of word {:?} looks similar to a scaled orthogonal matrix (Barabanov)",
                    entry.word
                ));
            }
            if context.variant() == BoundVariant::Uniform && !ps.is_uniform(1e-9) {
                warnings.push(format!(
                    "uniform variant used but product probabilities are not uniform (p_min = {})",
                    ps.p_min()
                ));
            }
        }
    }
    if context.variant() == BoundVariant::Uniform && matches!(knowledge, ModelKnowledge::None) {
        warnings.push("uniformity of the product measure is unverified".to_string());
    }
    if let BoundContext::Eigen { diagonalizable: None, .. } = context {
        warnings.push("adjacency diagonalizability assumed, not checked".to_string());
    }
    let approximate = context.variant() == BoundVariant::Entropy;
    if approximate {
        warnings.push("entropy variant: finite-length approximation of an asymptotic statement".to_string());
    }
    if !dv.informative {
        warnings.push(format!("non-informative: q = {} >= 1", dv.q));
    }
    let factor = dv.informative.then(|| dv.log_factor.exp());
    let bound = dv.informative.then(|| solution.gamma_star * dv.log_factor.exp());
    Ok(Certificate {
        beta,
        samples,
        l,
        n,
        d,
        gamma_star: solution.gamma_star,
        p_star: solution.p_star.clone(),
        epsilon: dv.epsilon,
        kappa,
        mass_term: 2f64.powf(log2_mass),
        log2_mass_term: log2_mass,
        variant: context.variant(),
        context: context.clone(),
        q: dv.q,
        delta: dv.delta,
        factor,
        bound,
        informative: dv.informative,
        approximate,
        warnings,
        context_source: "caller".to_string(),
        tolerances: config.into(),
        manifest: None,
    })
}
