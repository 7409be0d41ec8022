//! Command-line front end: `generate`, `certify`, `inspect` and `sweep`.
//!
//! Exit codes: 0 success, 2 usage or invalid input, 3 non-informative
//! certificate, 4 too few samples, 5 solver failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::baseline::{cjsr_bracket, CjsrBracket};
use crate::bounds::{certify, BoundContext, BoundVariant, Certificate, ModelKnowledge};
use crate::error::{Error, Result};
use crate::numerics::sym_dim;
use crate::products::{barabanov_flag, enumerate_products, ProductSet};
use crate::sampling::{synthesize_with_states, SamplingConfig};
use crate::scenario::{solve, ScenarioConfig};
use crate::system::SystemSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NON_INFORMATIVE: i32 = 3;
pub const EXIT_TOO_FEW_SAMPLES: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "cjsrcert", version, about = "Probabilistic CJSR certificates from sampled trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample trajectories from a system file and write them as CSV.
    Generate(GenerateArgs),
    /// Solve the sampled program on a trajectory CSV and emit a certificate.
    Certify(CertifyArgs),
    /// Report word counts, products, entropy and the model bracket.
    Inspect(InspectArgs),
    /// Certify over a grid of sample sizes and seeds; emits plot-ready CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// System JSON file.
    pub system: PathBuf,
    #[arg(short = 'N', long)]
    pub samples: usize,
    #[arg(short = 'l', long)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also record intermediate states.
    #[arg(long)]
    pub states: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    /// Upper end of the spectral box `I <= P <= C I`.
    #[arg(long = "C", default_value_t = ScenarioConfig::default().c_upper)]
    pub c_upper: f64,
    #[arg(long, default_value_t = ScenarioConfig::default().gamma_tol)]
    pub gamma_tol: f64,
    #[arg(long, default_value_t = ScenarioConfig::default().feas_tol)]
    pub feas_tol: f64,
}

impl SolverArgs {
    fn config(&self) -> ScenarioConfig {
        ScenarioConfig {
            c_upper: self.c_upper,
            gamma_tol: self.gamma_tol,
            feas_tol: self.feas_tol,
            ..ScenarioConfig::default()
        }
    }
}

/// Variant context given directly instead of through a system file.
#[derive(Debug, Args, Clone, Default)]
pub struct ContextArgs {
    #[arg(long, value_parser = parse_variant, default_value = "uniform")]
    pub variant: BoundVariant,
    /// System JSON, used only for variant context and post-hoc checks.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Minimal product probability (exact variant).
    #[arg(long)]
    pub p_min: Option<f64>,
    /// Number of distinct products (uniform variant).
    #[arg(long)]
    pub products: Option<f64>,
    /// Automaton entropy in bits (entropy variant).
    #[arg(long)]
    pub entropy: Option<f64>,
    /// Adjacency Perron eigenvalue (eigen variant, with --nodes).
    #[arg(long)]
    pub eig: Option<f64>,
    #[arg(long)]
    pub nodes: Option<usize>,
}

fn parse_variant(s: &str) -> std::result::Result<BoundVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Trajectory CSV.
    pub data: PathBuf,
    #[arg(long)]
    pub beta: f64,
    #[arg(short = 'l', long)]
    pub length: usize,
    #[command(flatten)]
    pub context: ContextArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub system: PathBuf,
    #[arg(short = 'l', long)]
    pub length: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// System used to synthesize the data.
    pub system: PathBuf,
    #[arg(long)]
    pub beta: f64,
    #[arg(short = 'l', long)]
    pub length: usize,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<usize>,
    /// Number of seeds per grid point.
    #[arg(long, default_value_t = 30)]
    pub seeds: u64,
    /// First seed; seeds are `seed .. seed + seeds`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_variant, default_value = "entropy")]
    pub variant: BoundVariant,
    #[arg(long)]
    pub entropy: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Resolved parameters and input digests, embedded in every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub parameters: BTreeMap<String, Value>,
    /// Input path and SHA-256 of its contents.
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            parameters: BTreeMap::new(),
            inputs: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    fn solver(&mut self, config: &ScenarioConfig) -> &mut Self {
        self.param("C", config.c_upper).param("gamma_tol", config.gamma_tol).param("feas_tol", config.feas_tol)
    }

    fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: sha256_hex(bytes) });
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Maps an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::TooFewSamples { .. } => EXIT_TOO_FEW_SAMPLES,
        Error::ConvergenceFailure { .. } | Error::IterationLimit(_) | Error::NotPositiveDefinite(_) => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

fn read_system(path: &Path, manifest: &mut RunManifest) -> Result<SystemSpec> {
    let text = fs::read_to_string(path)?;
    manifest.input(path, text.as_bytes());
    SystemSpec::from_json(&text)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_sidecar(out: Option<&Path>, manifest: &RunManifest) -> Result<()> {
    if let Some(out) = out {
        fs::write(sidecar_path(out), serde_json::to_string_pretty(manifest)? + "\n")?;
    }
    Ok(())
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<i32> {
    if args.samples == 0 || args.length == 0 {
        return Err(Error::Domain("generate needs --samples >= 1 and --length >= 1".into()));
    }
    let mut manifest = RunManifest::new("generate");
    let system = read_system(&args.system, &mut manifest)?;
    manifest
        .param("N", args.samples)
        .param("l", args.length)
        .param("seed", args.seed)
        .param("states", args.states);
    let config = SamplingConfig { samples: args.samples, length: args.length, seed: args.seed };
    let data = synthesize_with_states(&system, &config, args.states)?;
    // labels stay out of the CSV: certification must work from states alone
    let data = if args.states { data } else { data.stripped() };
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    write_output(args.out.as_deref(), &String::from_utf8_lossy(&buf))?;
    write_sidecar(args.out.as_deref(), &manifest)?;
    Ok(EXIT_OK)
}

/// Context resolved from flags or the system file, with the products when
/// they could be enumerated.
struct ResolvedContext {
    context: BoundContext,
    source: &'static str,
    products: Option<ProductSet>,
    notes: Vec<String>,
}

fn resolve_context(args: &ContextArgs, system: Option<&SystemSpec>, l: usize) -> Result<ResolvedContext> {
    let from_flags = match args.variant {
        BoundVariant::Exact => args.p_min.map(|p_min| BoundContext::Exact { p_min }),
        BoundVariant::Uniform => args.products.map(|product_count| BoundContext::Uniform { product_count }),
        BoundVariant::Entropy => args.entropy.map(|entropy| BoundContext::Entropy { entropy }),
        BoundVariant::Eigen => match (args.eig, args.nodes) {
            (Some(lambda_max), Some(nodes)) => Some(BoundContext::Eigen { nodes, lambda_max, diagonalizable: None }),
            (None, None) => None,
            _ => return Err(Error::MissingContext("--eig and --nodes must be given together".into())),
        },
    };
    let mut notes = Vec::new();
    let products = match system {
        Some(sys) => match enumerate_products(sys, l) {
            Ok(ps) => Some(ps),
            Err(Error::TooManyWords { count, .. }) => {
                notes.push(format!("{count} words of length {l}: products not enumerated"));
                None
            }
            Err(e) => return Err(e),
        },
        None => None,
    };
    if let Some(context) = from_flags {
        return Ok(ResolvedContext { context, source: "flags", products, notes });
    }
    let Some(sys) = system else {
        let needed = match args.variant {
            BoundVariant::Exact => "--p-min",
            BoundVariant::Uniform => "--products",
            BoundVariant::Entropy => "--entropy",
            BoundVariant::Eigen => "--eig and --nodes",
        };
        return Err(Error::MissingContext(format!("the {} variant needs --system or {needed}", args.variant)));
    };
    let context = match (args.variant, &products) {
        (BoundVariant::Exact, Some(ps)) => BoundContext::Exact { p_min: ps.p_min() },
        (BoundVariant::Uniform, Some(ps)) => BoundContext::Uniform { product_count: ps.distinct_count() as f64 },
        (BoundVariant::Exact | BoundVariant::Uniform, None) => {
            return Err(Error::MissingContext(format!(
                "the {} variant needs the product set, which is too large at l = {l}",
                args.variant
            )))
        }
        (variant, _) => BoundContext::from_model(variant, sys, l)?.0,
    };
    Ok(ResolvedContext { context, source: "model", products, notes })
}

/// Solve and certify one data set with an already resolved context.
fn certify_data(
    data: &crate::sampling::ObservationSet,
    resolved: &ResolvedContext,
    beta: f64,
    l: usize,
    config: &ScenarioConfig,
) -> Result<Certificate> {
    let d = sym_dim(data.dim());
    if data.len() <= d {
        return Err(Error::TooFewSamples { n_samples: data.len(), d });
    }
    // validate cheap inputs before solving
    crate::bounds::epsilon(beta, data.len(), d)?;
    resolved.context.log2_mass(l)?;
    let solution = solve(data, l, config)?;
    let knowledge = match &resolved.products {
        Some(ps) => ModelKnowledge::Products(ps),
        None => ModelKnowledge::None,
    };
    let mut cert = certify(&solution, &resolved.context, beta, data.len(), l, config, knowledge)?;
    cert.context_source = resolved.source.to_string();
    cert.warnings.extend(resolved.notes.iter().cloned());
    Ok(cert)
}

pub fn cmd_certify(args: &CertifyArgs) -> Result<i32> {
    let config = args.solver.config();
    config.validate()?;
    let mut manifest = RunManifest::new("certify");
    let bytes = fs::read(&args.data)?;
    manifest.input(&args.data, &bytes);
    let data = crate::sampling::ObservationSet::read_csv(bytes.as_slice())?.stripped();
    let system = match &args.context.system {
        Some(path) => Some(read_system(path, &mut manifest)?),
        None => None,
    };
    if let Some(sys) = &system {
        if sys.dim() != data.dim() {
            return Err(Error::DimensionMismatch(format!(
                "system has n = {} but the data has n = {}",
                sys.dim(),
                data.dim()
            )));
        }
    }
    manifest
        .param("beta", args.beta)
        .param("N", data.len())
        .param("l", args.length)
        .param("variant", args.context.variant)
        .param("p_min", args.context.p_min)
        .param("products", args.context.products)
        .param("entropy", args.context.entropy)
        .param("eig", args.context.eig)
        .param("nodes", args.context.nodes)
        .solver(&config);
    let resolved = resolve_context(&args.context, system.as_ref(), args.length)?;
    let mut cert = certify_data(&data, &resolved, args.beta, args.length, &config)?;
    cert.manifest = Some(serde_json::to_value(&manifest)?);
    write_output(args.out.as_deref(), &(serde_json::to_string_pretty(&cert)? + "\n"))?;
    Ok(if cert.informative { EXIT_OK } else { EXIT_NON_INFORMATIVE })
}

/// Model summary printed by `inspect`.
#[derive(Debug, Serialize)]
pub struct InspectReport {
    pub n: usize,
    pub l: usize,
    pub node_count: usize,
    pub alphabet_size: usize,
    /// Words of length `l` (`null` when beyond `u128`).
    pub word_count: Option<u128>,
    pub product_count: Option<usize>,
    pub p_min: Option<f64>,
    pub word_p_min: Option<f64>,
    pub entropy: f64,
    pub lambda_max: f64,
    pub right_resolving: bool,
    /// `|V| lambda_max^l`.
    pub eigen_mass: f64,
    /// `|Pi_l| <= |V| lambda_max^l`, when `|Pi_l|` is known.
    pub eigen_mass_dominates: Option<bool>,
    pub diagonalizable: bool,
    pub eigenvector_condition: Option<f64>,
    pub barabanov_flags: Option<Vec<Vec<usize>>>,
    pub bracket: Option<CjsrBracket>,
    pub notes: Vec<String>,
    pub manifest: RunManifest,
}

pub fn inspect(system: &SystemSpec, l: usize, config: &ScenarioConfig, manifest: RunManifest) -> Result<InspectReport> {
    if l == 0 {
        return Err(Error::Domain("inspect needs --length >= 1".into()));
    }
    let automaton = system.automaton();
    let stats = automaton.entropy()?;
    let mut notes = Vec::new();
    let word_count = match automaton.count_words(l) {
        Ok(c) => Some(c),
        Err(Error::Overflow { log2_estimate, .. }) => {
            notes.push(format!("word count overflows u128 (about 2^{log2_estimate:.1})"));
            None
        }
        Err(e) => return Err(e),
    };
    let products = match enumerate_products(system, l) {
        Ok(ps) => Some(ps),
        Err(Error::TooManyWords { count, limit, .. }) => {
            notes.push(format!("{count} words exceed the enumeration limit {limit}: product fields omitted"));
            None
        }
        Err(e) => return Err(e),
    };
    let eigen_mass = stats.node_count as f64 * stats.perron_eigenvalue.powi(l as i32);
    let bracket = match &products {
        Some(_) => Some(cjsr_bracket(system, l, config)?),
        None => None,
    };
    Ok(InspectReport {
        n: system.dim(),
        l,
        node_count: stats.node_count,
        alphabet_size: automaton.alphabet_size(),
        word_count,
        product_count: products.as_ref().map(ProductSet::distinct_count),
        p_min: products.as_ref().map(ProductSet::p_min),
        word_p_min: products.as_ref().map(|p| p.word_p_min),
        entropy: stats.entropy,
        lambda_max: stats.perron_eigenvalue,
        right_resolving: stats.right_resolving,
        eigen_mass,
        eigen_mass_dominates: products.as_ref().map(|p| p.distinct_count() as f64 <= eigen_mass * (1.0 + 1e-12)),
        diagonalizable: stats.diagonalizable,
        eigenvector_condition: stats.eigenvector_condition,
        barabanov_flags: products.as_ref().map(|p| barabanov_flag(p).into_iter().map(|e| e.word.clone()).collect()),
        bracket,
        notes,
        manifest,
    })
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<i32> {
    let config = args.solver.config();
    config.validate()?;
    let mut manifest = RunManifest::new("inspect");
    let system = read_system(&args.system, &mut manifest)?;
    manifest.param("l", args.length).solver(&config);
    let report = inspect(&system, args.length, &config, manifest)?;
    write_output(args.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(EXIT_OK)
}

/// One `(N, seed)` cell of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub samples: usize,
    pub seed: u64,
    pub gamma_star: f64,
    pub kappa: f64,
    pub delta: f64,
    /// `1 / delta^(1/l)`, infinite when non-informative.
    pub factor: f64,
    pub bound: f64,
    pub informative: bool,
}

/// Runs the sweep, handing each completed grid point to `sink` in order.
#[allow(clippy::too_many_arguments)]
pub fn sweep<F>(
    system: &SystemSpec,
    context: &ContextArgs,
    beta: f64,
    l: usize,
    grid: &[usize],
    seeds: std::ops::Range<u64>,
    config: &ScenarioConfig,
    mut sink: F,
) -> Result<()>
where
    F: FnMut(&[SweepRow]) -> Result<()>,
{
    if grid.is_empty() || seeds.is_empty() {
        return Err(Error::Domain("sweep needs a nonempty N grid and at least one seed".into()));
    }
    if l == 0 {
        return Err(Error::Domain("sweep needs --length >= 1".into()));
    }
    config.validate()?;
    let resolved = resolve_context(context, Some(system), l)?;
    for &samples in grid {
        let rows: Vec<SweepRow> = seeds
            .clone()
            .into_par_iter()
            .map(|seed| {
                let data = synthesize_with_states(system, &SamplingConfig { samples, length: l, seed }, false)?.stripped();
                let cert = certify_data(&data, &resolved, beta, l, config)?;
                Ok(SweepRow {
                    samples,
                    seed,
                    gamma_star: cert.gamma_star,
                    kappa: cert.kappa,
                    delta: cert.delta,
                    factor: cert.factor.unwrap_or(f64::INFINITY),
                    bound: cert.bound.unwrap_or(f64::INFINITY),
                    informative: cert.informative,
                })
            })
            .collect::<Result<_>>()?;
        sink(&rows)?;
    }
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let config = args.solver.config();
    let mut manifest = RunManifest::new("sweep");
    let system = read_system(&args.system, &mut manifest)?;
    manifest
        .param("beta", args.beta)
        .param("l", args.length)
        .param("grid", &args.grid)
        .param("seeds", args.seeds)
        .param("seed", args.seed)
        .param("variant", args.variant)
        .param("entropy", args.entropy)
        .solver(&config);
    let context = ContextArgs { variant: args.variant, entropy: args.entropy, ..ContextArgs::default() };
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    };
    let mut writer = csv::Writer::from_writer(sink);
    sweep(
        &system,
        &context,
        args.beta,
        args.length,
        &args.grid,
        args.seed..args.seed + args.seeds,
        &config,
        |rows| {
            for row in rows {
                writer.serialize(row)?;
            }
            // partial results survive an interrupt
            writer.flush()?;
            Ok(())
        },
    )?;
    write_sidecar(args.out.as_deref(), &manifest)?;
    Ok(EXIT_OK)
}

pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Parses `args`, runs the command and returns the exit code. Errors go to
/// stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
