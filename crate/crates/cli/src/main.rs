use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use hoeffding_core::detector::{
    detect_ordinary_with, detect_robust, DayInterval, LawSchedule, RobustThresholds,
    ScheduledLaw, ThresholdSource, WindowConfig,
};
use hoeffding_core::eval::{
    accuracy_table, default_roc_betas, model_thresholds, random_transition, roc_experiment,
    ExperimentGrid, RocConfig, RocMethod, ACCURACY_COLUMNS, DEFAULT_MIN_ENTRY, ETA_COLUMNS,
    ROC_COLUMNS,
};
use hoeffding_core::io;
use hoeffding_core::quantizer::{encode, fit_codebook, perturb_duplicate_timestamps, Codebook, Euclidean};
use hoeffding_core::threshold::PreparedReference;
use hoeffding_core::{
    estimate_threshold_ordinary, estimate_threshold_robust, sanov_threshold, simulate_states,
    Alphabet, Branch, Error, Reference, Result, ThresholdOptions, ThresholdReport, DEFAULT_EPS,
};

#[derive(Parser)]
#[command(name = "hoeffding", version, about = "Hoeffding-test anomaly detection for Markov streams")]
#[command(after_help = "Set HOEFFDING_LOG (error, warn, info, debug, trace) to control log output.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a symbol stream from a model.
    Simulate(SimulateArgs),
    /// Estimate a detection threshold.
    Threshold(ThresholdArgs),
    /// Run sliding-window detection over a stream.
    Detect(DetectArgs),
    /// Quantize feature records into symbols.
    Quantize(QuantizeArgs),
    /// ROC points of the three tests on a null/alternative model pair.
    Roc(RocArgs),
    /// Accuracy of the threshold estimators against the simulation oracle.
    Accuracy(AccuracyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Sv,
    Wc,
    #[value(name = "wc-chi2")]
    WcChi2,
    #[value(name = "wc-robust")]
    WcRobust,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BranchArg {
    Gaussian,
    Chi2,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of symbols to write.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Simulation {
    /// Monte-Carlo draws.
    #[arg(long = "T", default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Floor for empirical and reference laws.
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
}

impl Simulation {
    fn options(&self) -> ThresholdOptions {
        ThresholdOptions {
            samples: self.samples,
            seed: self.seed,
            eps: self.eps,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct ThresholdArgs {
    /// Model JSON or symbol CSV; repeat for wc-robust.
    #[arg(long)]
    reference: Vec<PathBuf>,
    /// Alphabet size of CSV references (inferred from the data by default).
    #[arg(long)]
    states: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long)]
    beta: f64,
    #[arg(long, value_enum, default_value = "wc")]
    method: Method,
    /// Limit distribution for method wc.
    #[arg(long, value_enum)]
    branch: Option<BranchArg>,
    #[command(flatten)]
    sim: Simulation,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    stream: PathBuf,
    /// Model JSON or symbol CSV; repeat for wc-robust.
    #[arg(long)]
    reference: Vec<PathBuf>,
    /// Time-of-day validity START-END in seconds, one per reference (wc-robust only).
    #[arg(long)]
    validity: Vec<String>,
    #[arg(long)]
    states: Option<usize>,
    /// Window length in seconds.
    #[arg(long)]
    ws: f64,
    /// Stride between windows in seconds.
    #[arg(long)]
    wd: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long, value_enum, default_value = "wc")]
    method: Method,
    #[arg(long, value_enum)]
    branch: Option<BranchArg>,
    /// Skip windows with fewer pair samples (default max(2, N²/4)).
    #[arg(long)]
    min_samples: Option<usize>,
    #[command(flatten)]
    sim: Simulation,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QuantizeArgs {
    /// Feature CSV with a `timestamp` column.
    #[arg(long)]
    records: PathBuf,
    /// Schema JSON naming the quantized columns.
    #[arg(long)]
    schema: PathBuf,
    /// Records to fit the codebook on (default: the records themselves).
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Reuse a fitted codebook instead of fitting one.
    #[arg(long, conflicts_with = "reference")]
    codebook_in: Option<PathBuf>,
    /// Where to write the codebook.
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Shift repeated timestamps apart by this many seconds.
    #[arg(long)]
    perturb_duplicates: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RocArgs {
    /// Null model JSON (random when omitted).
    #[arg(long)]
    null: Option<PathBuf>,
    /// Alternative model JSON (random when omitted).
    #[arg(long)]
    alt: Option<PathBuf>,
    /// Alphabet size for random models.
    #[arg(long = "N", default_value_t = 4)]
    n_states: usize,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Comma-separated target rates (default 0.001 and 0.01 to 0.19).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long = "T", default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AccuracyArgs {
    /// Comma-separated alphabet sizes.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    grid: Vec<usize>,
    /// Comma-separated sample sizes (default: the standard grid per N).
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.001)]
    beta: f64,
    /// Random models per N.
    #[arg(long = "K", default_value_t = 50)]
    repetitions: usize,
    #[arg(long = "T", default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MIN_ENTRY)]
    min_entry: f64,
    /// Also write the per-model thresholds of the first repetition.
    #[arg(long)]
    eta_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HOEFFDING_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Threshold(a) => threshold(a),
        Command::Detect(a) => detect(a),
        Command::Quantize(a) => quantize(a),
        Command::Roc(a) => roc(a),
        Command::Accuracy(a) => accuracy(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn branch_of(method: Method, branch: Option<BranchArg>) -> Result<Branch> {
    match (method, branch) {
        (Method::WcChi2, Some(BranchArg::Gaussian)) => {
            Err(Error::Config("--method wc-chi2 conflicts with --branch gaussian".into()))
        }
        (Method::WcChi2, _) | (_, Some(BranchArg::Chi2)) => Ok(Branch::Chi2),
        _ => Ok(Branch::Gaussian),
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("--beta must lie in (0, 1), got {beta}")))
    }
}

fn load_references(paths: &[PathBuf], states: Option<usize>) -> Result<Vec<Reference>> {
    paths.iter().map(|p| io::read_reference(p, states)).collect()
}

fn single_reference(refs: &[Reference]) -> Result<&Reference> {
    match refs {
        [r] => Ok(r),
        [] => Err(Error::Config("--reference is required".into())),
        _ => Err(Error::Config(format!(
            "{} references given; only wc-robust accepts several",
            refs.len()
        ))),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let model = io::read_model(&a.model)?;
    let n = a.n as usize;
    let mut states = simulate_states(&model, n, a.seed)?;
    states.truncate(n);
    io::write_symbols(&a.out, &states, None)?;
    info!("wrote {n} symbols to {}", a.out.display());
    Ok(())
}

fn threshold(a: ThresholdArgs) -> Result<()> {
    check_beta(a.beta)?;
    let n = a.n as usize;
    let opts = a.sim.options();
    let report = match a.method {
        Method::Sv => ThresholdReport::sanov(sanov_threshold(n, a.beta)?),
        Method::Wc | Method::WcChi2 => {
            let refs = load_references(&a.reference, a.states)?;
            let r = single_reference(&refs)?;
            estimate_threshold_ordinary(r, n, a.beta, branch_of(a.method, a.branch)?, &opts)?
        }
        Method::WcRobust => {
            let refs = load_references(&a.reference, a.states)?;
            if refs.is_empty() {
                return Err(Error::Config("--reference is required".into()));
            }
            estimate_threshold_robust(&refs, n, a.beta, &opts)?
        }
    };
    io::write_json(&a.out, &report)?;
    info!("eta = {}", report.eta);
    Ok(())
}

fn parse_validity(s: &str) -> Result<DayInterval> {
    let bad = || Error::Config(format!("--validity expects START-END in seconds, got `{s}`"));
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    Ok(DayInterval {
        start: a.trim().parse().map_err(|_| bad())?,
        end: b.trim().parse().map_err(|_| bad())?,
    })
}

fn detect(a: DetectArgs) -> Result<()> {
    check_beta(a.beta)?;
    let opts = a.sim.options();
    let refs = load_references(&a.reference, a.states)?;
    if refs.is_empty() {
        return Err(Error::Config("--reference is required".into()));
    }
    if !a.validity.is_empty() && (a.method != Method::WcRobust || a.validity.len() != refs.len()) {
        return Err(Error::Config(
            "--validity needs --method wc-robust and one interval per reference".into(),
        ));
    }
    let prepared = refs
        .iter()
        .map(|r| PreparedReference::prepare(r, &opts))
        .collect::<Result<Vec<_>>>()?;
    let n_states = prepared[0].model().alphabet().n_states();
    if prepared.iter().any(|p| p.model().alphabet().n_states() != n_states) {
        return Err(Error::Config("references have different alphabets".into()));
    }
    let alphabet = Alphabet::new(n_states)?;
    let mut config = WindowConfig::new(a.ws, a.wd, a.beta, alphabet)?;
    config.eps = a.sim.eps;
    if let Some(m) = a.min_samples {
        config.min_samples = m;
    }
    config.validate()?;
    let stream = io::read_symbols(&a.stream)?;
    if stream.min_states() > n_states {
        return Err(Error::Input(format!(
            "stream uses symbol {} but the reference has {n_states} states",
            stream.min_states()
        )));
    }
    let stream = stream.into_stream(alphabet)?;

    let reports = match a.method {
        Method::WcRobust => {
            let validity: Vec<Option<DayInterval>> = if a.validity.is_empty() {
                vec![None; prepared.len()]
            } else {
                a.validity.iter().map(|v| parse_validity(v).map(Some)).collect::<Result<_>>()?
            };
            let schedule = LawSchedule::new(
                prepared
                    .iter()
                    .zip(validity)
                    .map(|(p, v)| ScheduledLaw { law: p.law().to_vec(), validity: v })
                    .collect(),
            )?;
            let thresholds = RobustThresholds::build(&schedule, &opts)?;
            detect_robust(&stream, &schedule, &config, &thresholds)?
        }
        method => {
            let [p] = prepared.as_slice() else {
                return Err(Error::Config(format!(
                    "{} references given; only wc-robust accepts several",
                    prepared.len()
                )));
            };
            let ws = p.workspace()?;
            if method == Method::Sv {
                detect_ordinary_with(&stream, &ws, &config, ThresholdSource::Sanov)?
            } else {
                let cache = p.build_cache(branch_of(method, a.branch)?, opts.samples, opts.seed)?;
                detect_ordinary_with(&stream, &ws, &config, ThresholdSource::Cache(&cache))?
            }
        }
    };
    io::write_report(&a.out, &reports)?;
    info!(
        "{} windows, {} flagged",
        reports.len(),
        reports.iter().filter(|r| r.flagged).count()
    );
    Ok(())
}

fn quantize(a: QuantizeArgs) -> Result<()> {
    let schema = io::read_schema(&a.schema)?;
    let mut records = io::read_records(&a.records, &schema)?;
    if let Some(delta) = a.perturb_duplicates {
        perturb_duplicate_timestamps(&mut records, delta);
    }
    let codebook: Codebook = match (&a.codebook_in, &a.reference) {
        (Some(p), _) => io::read_json(p)?,
        (None, Some(p)) => fit_codebook(&io::read_records(p, &schema)?, &schema, &Euclidean, a.seed)?,
        (None, None) => fit_codebook(&records, &schema, &Euclidean, a.seed)?,
    };
    if codebook.bin_edges.len() != schema.scalars.len()
        || schema.cluster.as_ref().is_some_and(|c| c.k != codebook.centers.len())
    {
        return Err(Error::Config("codebook does not match the schema".into()));
    }
    let states: Vec<usize> = records.iter().map(|r| encode(r, &codebook, &schema)).collect();
    let timestamps: Vec<f64> = records.iter().map(|r| r.timestamp).collect();
    if let Some(p) = &a.codebook {
        io::write_json(p, &codebook)?;
    }
    io::write_symbols(&a.out, &states, Some(&timestamps))?;
    info!("{} records quantized into {} states", states.len(), schema.n_states());
    Ok(())
}

fn model_or_random(path: Option<&Path>, n_states: usize, seed: u64) -> Result<hoeffding_core::TransitionModel> {
    match path {
        Some(p) => io::read_model(p),
        None => random_transition(n_states, seed, DEFAULT_MIN_ENTRY),
    }
}

fn roc(a: RocArgs) -> Result<()> {
    let betas = a.grid.unwrap_or_else(default_roc_betas);
    for &b in &betas {
        check_beta(b)?;
    }
    let null = model_or_random(a.null.as_deref(), a.n_states, hoeffding_core::rng::derive_seed(a.seed, 10))?;
    let alt = model_or_random(a.alt.as_deref(), a.n_states, hoeffding_core::rng::derive_seed(a.seed, 11))?;
    let config = RocConfig {
        n: a.n as usize,
        paths: a.samples,
        samples: a.samples,
        betas,
        seed: a.seed,
    };
    let points = roc_experiment(&null, &alt, &config, &RocMethod::ALL)?;
    io::write_table(&a.out, &ROC_COLUMNS, &points)
}

fn accuracy(a: AccuracyArgs) -> Result<()> {
    let mut grid = ExperimentGrid::new(a.grid, a.beta, a.repetitions, a.samples, a.seed);
    grid.n_values = a.n;
    grid.min_entry = a.min_entry;
    grid.validate()?;
    let rows = accuracy_table(&grid)?;
    let etas = match &a.eta_out {
        Some(_) => {
            let mut all = Vec::new();
            for &n_states in &grid.n_states {
                all.extend(model_thresholds(&grid, n_states, 0)?);
            }
            Some(all)
        }
        None => None,
    };
    io::write_table(&a.out, &ACCURACY_COLUMNS, &rows)?;
    if let (Some(p), Some(etas)) = (&a.eta_out, etas) {
        io::write_table(p, &ETA_COLUMNS, &etas)?;
    }
    Ok(())
}
