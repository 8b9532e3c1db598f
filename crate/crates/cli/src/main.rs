//! `dpmcpm` command-line interface.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use dpmcpm::inference::{impute_with_draws, pairwise_independence, ImputeRule};
use dpmcpm::metrics::{run_replications, Protocol, ReplicationConfig};
use dpmcpm::synth::{
    mask, parse_ratings_csv, preprocess_ratings, sample_mixture_dataset, sample_xor_dataset,
    stage_seed, Mechanism, MechanismSpec, MixtureSpec, PreprocessOptions, RatingCoding,
};
use dpmcpm::{parse_dataset, run_gibbs, serialize_model, CollapsedModel, GibbsConfig, Priors};

#[derive(Parser)]
#[command(name = "dpmcpm", version, about = "Bayesian imputation for incomplete categorical data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the mixture to a CSV and write the retained draws.
    Fit(FitArgs),
    /// Fill the missing cells of a CSV from a fitted model.
    Impute(ImputeArgs),
    /// Generate a synthetic dataset and mask it.
    Simulate(SimulateArgs),
    /// Run a replicated simulation study.
    Benchmark(BenchmarkArgs),
    /// Pairwise Fisher exact tests of independence from a fitted model.
    TestIndependence(IndependenceArgs),
    /// Turn a ratings file into a categorical matrix.
    PreprocessRatings(RatingsArgs),
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn unit_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must lie in [0, 1], got {v}"))
    }
}

#[derive(Args, Clone)]
struct GibbsArgs {
    #[arg(long, default_value_t = 200)]
    burnin: usize,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    thin: u64,
    /// DP concentration.
    #[arg(long, default_value_t = 0.25, value_parser = positive_f64)]
    alpha: f64,
}

impl GibbsArgs {
    fn config(&self, seed: u64) -> GibbsConfig {
        GibbsConfig {
            burnin: self.burnin,
            samples: self.samples as usize,
            thin: self.thin as usize,
            seed,
            alpha_override: Some(self.alpha),
            beta_override: None,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with `NA` for missing cells.
    #[arg(long)]
    input: PathBuf,
    /// Model JSON output.
    #[arg(long)]
    output: PathBuf,
    /// k-histogram CSV; defaults to the output path with `.k_histogram.csv`.
    #[arg(long)]
    k_histogram: Option<PathBuf>,
    /// Write the pooled predictive model instead of every draw.
    #[arg(long)]
    summary: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    gibbs: GibbsArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Argmax,
    Sample,
}

#[derive(Args)]
struct ImputeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Model JSON from `fit` (draws or summary).
    #[arg(long)]
    model: PathBuf,
    /// Completed CSV output.
    #[arg(long)]
    output: PathBuf,
    /// Cell-posterior CSV; defaults to the output path with `.posteriors.csv`.
    #[arg(long)]
    posteriors: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RuleArg::Argmax)]
    rule: RuleArg,
    /// Use only the final retained draw.
    #[arg(long)]
    last_draw: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Mixture,
    Xor,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Mixture => Protocol::Mixture,
            ProtocolArg::Xor => Protocol::Xor,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    Mcar,
    Mar,
    Mnar,
}

#[derive(Args, Clone)]
struct MechanismArgs {
    #[arg(long, value_enum, default_value_t = MechanismArg::Mcar)]
    mechanism: MechanismArg,
    #[arg(long, default_value_t = 0.2, value_parser = unit_f64)]
    mcar_rate: f64,
    /// Rates for columns 2.. given `x_1 = 1` and `x_1 = 2`.
    #[arg(long, num_args = 2, value_parser = unit_f64, default_values_t = [0.1, 0.3])]
    mar_rates: Vec<f64>,
    /// Rates given a true value of 1 and 2.
    #[arg(long, num_args = 2, value_parser = unit_f64, default_values_t = [0.1, 0.3])]
    mnar_rates: Vec<f64>,
}

impl MechanismArgs {
    fn spec(&self) -> MechanismSpec {
        let kind = match self.mechanism {
            MechanismArg::Mcar => Mechanism::Mcar,
            MechanismArg::Mar => Mechanism::Mar,
            MechanismArg::Mnar => Mechanism::Mnar,
        };
        MechanismSpec {
            kind,
            mcar_rate: self.mcar_rate,
            mar_rates: (self.mar_rates[0], self.mar_rates[1]),
            mnar_rates: (self.mnar_rates[0], self.mnar_rates[1]),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ProtocolArg::Mixture)]
    protocol: ProtocolArg,
    #[command(flatten)]
    mechanism: MechanismArgs,
    /// Rows for the mixture protocol.
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Variables for the mixture protocol.
    #[arg(long, default_value_t = 20)]
    p: usize,
    /// Components for the mixture protocol.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Rows for the xor protocol.
    #[arg(long, default_value_t = 300)]
    xor_n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving complete.csv, masked.csv, mask.csv and truth.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_enum, default_value_t = ProtocolArg::Mixture)]
    protocol: ProtocolArg,
    #[command(flatten)]
    mechanism: MechanismArgs,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    #[command(flatten)]
    gibbs: GibbsArgs,
    /// Directory receiving report.csv, summary.json and k_histogram.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct IndependenceArgs {
    /// Model JSON from `fit` (draws or summary).
    #[arg(long)]
    model: PathBuf,
    /// Sample size for the count tables.
    #[arg(long, required_unless_present = "data")]
    n: Option<u64>,
    /// Dataset whose row count sets the sample size.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodingArg {
    Binary,
    Five,
}

#[derive(Args)]
struct RatingsArgs {
    /// Ratings CSV with `userId,movieId,rating` columns.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Optional list of the retained user ids, one per line.
    #[arg(long)]
    users: Option<PathBuf>,
    #[arg(long, default_value_t = 0.25, value_parser = unit_f64)]
    item_threshold: f64,
    #[arg(long, default_value_t = 0.95, value_parser = unit_f64)]
    user_threshold: f64,
    #[arg(long, value_enum, default_value_t = CodingArg::Binary)]
    coding: CodingArg,
    /// Ratings at or above this become code 2 under binary coding.
    #[arg(long, default_value_t = 4.0)]
    cutoff: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Reads either `{"draws": [...]}` or a single model document.
fn load_draws(path: &Path) -> Result<Vec<CollapsedModel>> {
    let text = read(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    let draws = match value.get("draws") {
        Some(d) => serde_json::from_value::<Vec<CollapsedModel>>(d.clone()),
        None => serde_json::from_value::<CollapsedModel>(value).map(|m| vec![m]),
    }
    .with_context(|| format!("invalid model file {}", path.display()))?;
    if draws.is_empty() {
        bail!("model file {} holds no draws", path.display());
    }
    Ok(draws)
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let data = parse_dataset(&read(&a.input)?, None)?;
    info!("fitting {} rows x {} variables", data.n(), data.p());
    let priors = Priors::default_for(data.schema());
    let posterior = run_gibbs(&data, &priors, &a.gibbs.config(a.seed))?;
    let model_text = if a.summary {
        serialize_model(&posterior.pooled_model()?)
    } else {
        serde_json::to_string_pretty(&serde_json::json!({ "draws": posterior.draws }))?
    };
    let mut hist = String::from("k,draws\n");
    for (k, c) in &posterior.k_histogram {
        hist.push_str(&format!("{k},{c}\n"));
    }
    write_atomic(&a.output, &model_text)?;
    let hist_path = a.k_histogram.unwrap_or_else(|| sibling(&a.output, ".k_histogram.csv"));
    write_atomic(&hist_path, &hist)?;
    info!("estimated k = {}", posterior.estimated_k());
    Ok(())
}

fn cmd_impute(a: ImputeArgs) -> Result<()> {
    let mut draws = load_draws(&a.model)?;
    if a.last_draw {
        draws = draws.split_off(draws.len() - 1);
    }
    let schema = draws[0].schema().clone();
    let data = parse_dataset(&read(&a.input)?, Some(&schema))
        .context("data do not match the model schema")?;
    let rule = match a.rule {
        RuleArg::Argmax => ImputeRule::Argmax,
        RuleArg::Sample => ImputeRule::Sample { seed: a.seed },
    };
    let result = impute_with_draws(&data, &draws, rule)?;
    let mut post = String::from("row,column,category,probability\n");
    for cp in &result.cell_posteriors {
        for (c, p) in cp.probs.iter().enumerate() {
            post.push_str(&format!("{},{},{},{}\n", cp.row + 1, cp.col + 1, c + 1, p));
        }
    }
    write_atomic(&a.output, &result.completed.to_csv())?;
    let post_path = a.posteriors.unwrap_or_else(|| sibling(&a.output, ".posteriors.csv"));
    write_atomic(&post_path, &post)?;
    info!("imputed {} cells", result.cell_posteriors.len());
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let spec = a.mechanism.spec();
    spec.validate()?;
    let (complete, truth) = match a.protocol {
        ProtocolArg::Mixture => {
            let mix = MixtureSpec {
                n: a.n,
                p: a.p,
                k: a.k,
                ..MixtureSpec::default()
            };
            let (d, m) = sample_mixture_dataset(&mix, stage_seed(a.seed, 0, 0))?;
            (d, serialize_model(&m))
        }
        ProtocolArg::Xor => {
            let (d, joint) = sample_xor_dataset(a.xor_n, stage_seed(a.seed, 0, 0))?;
            let doc = serde_json::json!({
                "cardinalities": joint.schema().cardinalities(),
                "table": joint.table(),
            });
            (d, serde_json::to_string_pretty(&doc)?)
        }
    };
    let masked = mask(&complete, &spec, stage_seed(a.seed, 0, 1))?;
    let mut cells = String::from("row,column,original\n");
    for c in &masked.cells {
        cells.push_str(&format!("{},{},{}\n", c.row + 1, c.col + 1, c.original));
    }
    fs::create_dir_all(&a.out_dir)?;
    write_atomic(&a.out_dir.join("complete.csv"), &complete.to_csv())?;
    write_atomic(&a.out_dir.join("masked.csv"), &masked.data.to_csv())?;
    write_atomic(&a.out_dir.join("mask.csv"), &cells)?;
    write_atomic(&a.out_dir.join("truth.json"), &truth)?;
    info!("masked {} cells", masked.cells.len());
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut cfg = ReplicationConfig::new(a.protocol.into(), a.mechanism.spec(), a.reps as usize, a.seed);
    cfg.gibbs = a.gibbs.config(0);
    cfg.jobs = a.jobs.map(|j| j as usize);
    let report = run_replications(&cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    write_atomic(&a.out_dir.join("report.csv"), &report.to_csv())?;
    write_atomic(&a.out_dir.join("summary.json"), &report.summary_json())?;
    write_atomic(&a.out_dir.join("k_histogram.csv"), &report.k_histogram_csv())?;
    if let Some(acc) = &report.summary.accuracy {
        info!("mean accuracy {:.4}", acc.mean);
    }
    if !report.failures.is_empty() {
        bail!(
            "{} of {} replications failed; partial results written to {}",
            report.failures.len(),
            cfg.reps,
            a.out_dir.display()
        );
    }
    Ok(())
}

fn cmd_test_independence(a: IndependenceArgs) -> Result<()> {
    let draws = load_draws(&a.model)?;
    let model = CollapsedModel::pooled(&draws)?;
    let n = match (a.n, &a.data) {
        (Some(n), _) => n,
        (None, Some(path)) => parse_dataset(&read(path)?, Some(model.schema()))?.n() as u64,
        (None, None) => unreachable!("clap requires --n or --data"),
    };
    let tests = pairwise_independence(&model, n)?;
    let mut out = String::from("j1,j2,n11,n12,n21,n22,p_value\n");
    for t in &tests {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t.j1 + 1,
            t.j2 + 1,
            t.counts[0][0],
            t.counts[0][1],
            t.counts[1][0],
            t.counts[1][1],
            t.p_value
        ));
    }
    write_atomic(&a.output, &out)?;
    info!("tested {} pairs at n = {n}", tests.len());
    Ok(())
}

fn cmd_preprocess_ratings(a: RatingsArgs) -> Result<()> {
    let ratings = parse_ratings_csv(&read(&a.input)?)?;
    let opts = PreprocessOptions {
        item_threshold: a.item_threshold,
        user_threshold: a.user_threshold,
        coding: match a.coding {
            CodingArg::Binary => RatingCoding::Binary { cutoff: a.cutoff },
            CodingArg::Five => RatingCoding::FiveCategory,
        },
    };
    let matrix = preprocess_ratings(&ratings, &opts)?;
    write_atomic(&a.output, &matrix.data.to_csv())?;
    if let Some(path) = &a.users {
        let mut ids = String::from("user\n");
        for u in &matrix.users {
            ids.push_str(&format!("{u}\n"));
        }
        write_atomic(path, &ids)?;
    }
    info!(
        "kept {} users x {} items, {} missing cells",
        matrix.users.len(),
        matrix.items.len(),
        matrix.data.missing_count()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Impute(a) => cmd_impute(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::TestIndependence(a) => cmd_test_independence(a),
        Command::PreprocessRatings(a) => cmd_preprocess_ratings(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
