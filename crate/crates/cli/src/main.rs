//! `rapmf`: file-based pipelines for generating synthetic data, training,
//! evaluating and tuning the models.
//!
//! Exit codes: 0 success, 1 usage, 2 data or configuration error,
//! 3 numerical failure (divergence, gradient check above threshold).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use rapmf::bundle::{read_meta, read_split, write_bundle, BundleMeta};
use rapmf::eval::gradcheck::GradInstance;
use rapmf::eval::{
    compare, comparison_tsv, cross_validate, evaluate_split, train_variant, tune_lambda, tune_two_stage,
    ExperimentResult, Grids, Protocol, Provenance, ResultsFile, TrainedModel,
};
use rapmf::modelfile::{load_model, save_model, DataSource};
use rapmf::synth::split_protocols;
use rapmf::{Dataset, Execution, Hyperparams, SyntheticConfig, TruthBundle, Variant};

#[derive(Parser)]
#[command(name = "rapmf", version, about = "Response-aware matrix factorization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic bundles (ratings, response masks, protocol splits).
    Generate(GenerateArgs),
    /// Train one model and write a model file.
    Train(TrainArgs),
    /// Score a model file on a bundle's test sets.
    Eval(EvalArgs),
    /// Tune hyperparameters on a bundle's validation set.
    Sweep(SweepArgs),
    /// Compare analytic gradients with central differences on a random instance.
    Gradcheck(GradcheckArgs),
    /// Aggregate results files into a comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator settings (JSON); 1000 x 1000 defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundle directory; with --trials > 1, parent of trial-NNN directories.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of independent bundles; trial t uses seed + t.
    #[arg(long, default_value_t = 1)]
    trials: u64,
}

/// Hyperparameters: an optional JSON file, then per-field overrides.
#[derive(Args)]
struct HyperArgs {
    /// Hyperparameters (JSON); library defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training seed; defaults to the bundle seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Latent dimension.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Sets both user and item regularization.
    #[arg(long)]
    lambda_uv: Option<f64>,
    #[arg(long)]
    lambda_mu: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    sigma_r: Option<f64>,
    /// Use the deterministic block-parallel reduction.
    #[arg(long)]
    parallel: bool,
}

impl HyperArgs {
    fn resolve(&self, default_seed: u64) -> Result<Hyperparams, Failure> {
        let mut h = match &self.config {
            Some(path) => read_json::<Hyperparams>(path)?,
            None => Hyperparams {
                seed: default_seed,
                ..Hyperparams::default()
            },
        };
        if let Some(v) = self.seed {
            h.seed = v;
        }
        if let Some(v) = self.k {
            h.k = v;
        }
        if let Some(v) = self.iters {
            h.iterations = v;
        }
        if let Some(v) = self.beta {
            h.beta = v;
        }
        if let Some(v) = self.lambda_uv {
            h = h.with_lambda_uv(v);
        }
        if let Some(v) = self.lambda_mu {
            h.lambda_mu = v;
        }
        if let Some(v) = self.eta {
            h.eta = v;
        }
        if let Some(v) = self.sigma_r {
            h.sigma_r = v;
        }
        if self.parallel {
            h.execution = Execution::Parallel;
        }
        h.validate()?;
        Ok(h)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Bundle directory; trains on its train.tsv.
    #[arg(long, conflicts_with = "train")]
    bundle: Option<PathBuf>,
    /// Triplet file to train on instead of a bundle; dimensions are inferred.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Rating levels of --train data.
    #[arg(long, default_value_t = 5)]
    d_levels: u32,
    #[arg(long, default_value = "pmf")]
    variant: Variant,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    /// Also run k-fold cross-validation over the training ratings.
    #[arg(long)]
    folds: Option<usize>,
    /// Results file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, default_value = "rapmf-r")]
    variant: Variant,
    /// Grids (JSON with lambda_uv, beta, lambda_mu); the standard coarse grids when omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Refine around each coarse winner.
    #[arg(long)]
    fine_tune: bool,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Results file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value = "rapmf-c")]
    variant: Variant,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    m: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    d_levels: u32,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest acceptable relative error; 1e-6 for pmf, 1e-4 otherwise.
    #[arg(long)]
    threshold: Option<f64>,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results files from `eval` or `sweep`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "pmf")]
    baseline: Variant,
    /// Table to write; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Core(rapmf::Error),
    Numerical(String),
}

impl From<rapmf::Error> for Failure {
    fn from(e: rapmf::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_numerical() => 3,
            Failure::Core(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rapmf: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| rapmf::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Core(rapmf::Error::InvalidArgument(format!("{}: {e}", path.display()))))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| {
        Failure::Core(rapmf::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn require_dir(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Core(rapmf::Error::InvalidArgument(format!(
            "{} is not a bundle directory",
            path.display()
        ))))
    }
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    if args.trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    if args.seed.checked_add(args.trials - 1).is_none() {
        return Err(Failure::Usage("--seed + --trials overflows".into()));
    }
    let config = match &args.config {
        Some(path) => read_json::<SyntheticConfig>(path)?,
        None => SyntheticConfig::default(),
    };
    config.validate()?;
    if args.out.is_file() {
        return Err(Failure::Usage(format!("{} is a file", args.out.display())));
    }
    for t in 0..args.trials {
        let seed = args.seed + t;
        let dir = if args.trials == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("trial-{t:03}"))
        };
        let bundle = TruthBundle::generate(&config, seed)?;
        let split = split_protocols(&bundle, seed)?;
        let meta = write_bundle(&dir, &bundle, &split)?;
        println!(
            "{}: seed {seed}, observed {:.4}, train {}, traditional {}, realistic {}, adversarial {}, validation {}",
            dir.display(),
            meta.fractions.observed,
            meta.counts.train,
            meta.counts.test_traditional,
            meta.counts.test_realistic,
            meta.counts.test_adversarial,
            meta.counts.validation
        );
    }
    Ok(())
}

fn source(meta: &BundleMeta) -> DataSource {
    DataSource {
        bundle_seed: meta.seed,
        generator: meta.config.clone(),
    }
}

fn train(args: TrainArgs) -> Result<(), Failure> {
    let (data, src, default_seed) = match (&args.bundle, &args.train) {
        (Some(dir), None) => {
            require_dir(dir)?;
            let meta = read_meta(dir)?;
            let data = Dataset::read_triplets(&dir.join("train.tsv"), meta.n_users, meta.n_items, meta.d_levels)?;
            (data, Some(source(&meta)), meta.seed)
        }
        (None, Some(file)) => (Dataset::read_triplets_inferred(file, args.d_levels)?, None, 0),
        _ => return Err(Failure::Usage("give exactly one of --bundle or --train".into())),
    };
    let hyper = args.hyper.resolve(default_seed)?;
    let model = train_variant(args.variant, &data, &hyper)?;
    save_model(&model, src, &args.out)?;
    let trace = model.trace();
    println!(
        "{}: {} on {} ratings, {} iterations, final {} {}",
        args.out.display(),
        args.variant,
        data.len(),
        trace.len(),
        if args.variant == Variant::Pmf {
            "objective"
        } else {
            "log-likelihood"
        },
        trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn check_fits(model: &TrainedModel, meta: &BundleMeta) -> Result<(), Failure> {
    use rapmf::Predict;
    let f = model.factors();
    if f.n_users() != meta.n_users || f.n_items() != meta.n_items || model.d_levels() != meta.d_levels {
        return Err(Failure::Core(rapmf::Error::InvalidArgument(format!(
            "model is {}x{} with {} levels, bundle is {}x{} with {}",
            f.n_users(),
            f.n_items(),
            model.d_levels(),
            meta.n_users,
            meta.n_items,
            meta.d_levels
        ))));
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    require_dir(&args.bundle)?;
    if args.folds.is_some_and(|f| f < 2) {
        return Err(Failure::Usage("--folds must be at least 2".into()));
    }
    let model = load_model(&args.model)?;
    let meta = read_meta(&args.bundle)?;
    check_fits(&model, &meta)?;
    let split = read_split(&args.bundle, &meta)?;
    let mut records = evaluate_split(&model, &split)?;
    if let Some(folds) = args.folds {
        let hyper = model.hyper().clone();
        let scores = cross_validate(&split.train, model.variant(), &hyper, folds, hyper.seed)?;
        // one record per run: the mean fold RMSE
        records.push(ExperimentResult {
            variant: model.variant(),
            protocol: Protocol::CrossValidation,
            rmse: scores.iter().sum::<f64>() / scores.len() as f64,
            n_test: split.train.len(),
            seed: hyper.seed,
            hyper,
        });
    }
    for r in &records {
        println!("{}\t{}\t{}\t{}", r.variant, r.protocol.as_str(), r.n_test, r.rmse);
    }
    let results = ResultsFile {
        provenance: Provenance::new(Some(meta.seed), Some(meta.config.clone())),
        records,
        sweeps: Vec::new(),
    };
    results.write(&args.out)?;
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    require_dir(&args.bundle)?;
    let meta = read_meta(&args.bundle)?;
    let base = args.hyper.resolve(meta.seed)?;
    let grids = match &args.grid {
        Some(path) => read_json::<Grids>(path)?,
        None => Grids::coarse(base.lambda_mu),
    };
    if grids.is_empty() {
        return Err(Failure::Usage("every grid must be non-empty".into()));
    }
    let split = read_split(&args.bundle, &meta)?;
    let sweeps = if args.variant == Variant::Pmf {
        vec![tune_lambda(&split, &base, &grids, args.fine_tune)?]
    } else {
        let two = tune_two_stage(&split, args.variant, &base, &grids, args.fine_tune)?;
        vec![two.pmf, two.response]
    };
    let mut records = Vec::new();
    for outcome in &sweeps {
        let model = outcome.model.as_ref().expect("grid search keeps its winner");
        records.extend(evaluate_split(model, &split)?);
        println!(
            "{}: lambda_uv {} beta {} lambda_mu {} validation {}",
            outcome.variant, outcome.best.lambda_u, outcome.best.beta, outcome.best.lambda_mu, outcome.best_rmse
        );
    }
    let results = ResultsFile {
        provenance: Provenance::new(Some(meta.seed), Some(meta.config.clone())),
        records,
        sweeps,
    };
    results.write(&args.out)?;
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<(), Failure> {
    if !(args.eps > 0.0) {
        return Err(Failure::Usage("--eps must be positive".into()));
    }
    let threshold = args
        .threshold
        .unwrap_or(if args.variant == Variant::Pmf { 1e-6 } else { 1e-4 });
    let instance = GradInstance::random(args.variant, args.n, args.m, args.k, args.d_levels, args.seed)?;
    let blocks = instance.check(args.eps)?;
    println!("block\tparams\tmax_rel_error\tworst_index\tanalytic\tnumeric");
    let mut worst = 0.0f64;
    for (name, r) in &blocks {
        println!(
            "{name}\t{}\t{:e}\t{}\t{}\t{}",
            r.n_params, r.max_rel_error, r.worst_index, r.analytic, r.numeric
        );
        worst = worst.max(r.max_rel_error);
    }
    println!("max\t{:e}\tthreshold\t{:e}", worst, threshold);
    if let Some(path) = &args.out {
        let doc = serde_json::json!({
            "code_version": rapmf::CODE_VERSION,
            "variant": args.variant,
            "n": args.n, "m": args.m, "k": args.k, "d_levels": args.d_levels,
            "eps": args.eps, "seed": args.seed, "threshold": threshold,
            "blocks": blocks.iter().map(|(name, r)| serde_json::json!({"block": name, "report": r})).collect::<Vec<_>>(),
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Core(rapmf::Error::Json(e)))?;
        write_text(path, &(text + "\n"))?;
    }
    if !(worst <= threshold) {
        return Err(Failure::Numerical(format!(
            "max relative error {worst:e} exceeds {threshold:e}"
        )));
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let mut records = Vec::new();
    for path in &args.inputs {
        records.extend(ResultsFile::read(path)?.records);
    }
    let rows = compare(&records, args.baseline)?;
    let table = comparison_tsv(&rows);
    match &args.out {
        Some(path) => write_text(path, &table)?,
        None => print!("{table}"),
    }
    Ok(())
}
