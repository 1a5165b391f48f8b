//! Command-line entry point. Every command writes its outputs and a
//! `manifest.json` under `--out`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::belief::AlternativeSet;
use crate::error::{Error, Result};
use crate::estimation::{estimator_table, write_estimator_csv, Measure, RunPool};
use crate::ingest::{self, PromptTemplate};
use crate::mnl::{predict_metrics, FitResult, PredictionMetrics, Scenario};
use crate::scripted::ScriptedLmSpec;
use crate::study::report::{
    write_figure1, write_figure3, write_figure4, write_table2, FullSampleRow,
};
use crate::study::{
    accuracy_curves, bootstrap_estimates, build_scenarios, calibrated_oracle, collect_runs,
    default_templates, full_sample_fit, reference_params, split_train_test, study_from_pool,
    temperature_sweep, AccuracyOptions, RunSource, ScenarioGrid, SplitSpec, StudyData,
    DEFAULT_RUN_GRID,
};
use crate::token::SamplingConfig;

#[derive(Debug, Parser)]
#[command(
    name = "modelbelief",
    version,
    about = "Demand estimation from language-model choices and token-level beliefs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the scripted oracle over the price grid and extract a run pool.
    Simulate(SimulateArgs),
    /// Extract choices and beliefs from recorded runs.
    Extract(ExtractArgs),
    /// Fit the logit model on the full training pool under each measure.
    Estimate(EstimateArgs),
    /// Paired bootstrap of the fit at given runs per scenario (table2.csv).
    Bootstrap(BootstrapArgs),
    /// Probability of the price coefficient landing within tolerance (figure3.csv).
    AccuracyCurve(AccuracyArgs),
    /// Focal share under both measures across temperatures (figure4.csv).
    TempSweep(SweepArgs),
    /// Collect runs from the live completion endpoint.
    Fetch(FetchArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, default_value_t = 25.0)]
    price_min: f64,
    #[arg(long, default_value_t = 40.0)]
    price_max: f64,
    #[arg(long, default_value_t = 1.0)]
    price_step: f64,
    #[arg(long, default_value_t = 30.0)]
    competitor_price: f64,
    /// Scripted oracle JSON to use instead of the calibrated default. Its
    /// alternatives must be ordered focal, competitor, outside.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SamplingArgs {
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Pool JSONL to estimate from; without it the oracle is sampled.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Oracle runs per scenario when no pool is given.
    #[arg(long, default_value_t = 1000)]
    pool_runs: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [28.0, 31.0, 37.0])]
    test_prices: Vec<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeasureArg {
    Choice,
    Belief,
    Both,
}

impl MeasureArg {
    fn measures(self) -> Vec<Measure> {
        match self {
            Self::Choice => vec![Measure::Choice],
            Self::Belief => vec![Measure::Belief],
            Self::Both => Measure::BOTH.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Runs per scenario.
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    /// Also write every generated run to runs.jsonl.
    #[arg(long)]
    save_runs: bool,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Runs JSONL as written by `fetch` or `simulate --save-runs`.
    #[arg(long)]
    runs_file: PathBuf,
    /// Alternative-set JSON; defaults to Pampers / Huggies / neither.
    #[arg(long)]
    alternatives: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = MeasureArg::Both)]
    measure: MeasureArg,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Runs per scenario drawn in each bootstrap draw; one table block each.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 1000])]
    runs: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long, value_enum, default_value_t = MeasureArg::Both)]
    measure: MeasureArg,
}

#[derive(Debug, Args)]
struct AccuracyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    /// Tolerances as fractions of |beta|.
    #[arg(long, value_delimiter = ',', default_values_t = [0.10, 0.05])]
    tolerance: Vec<f64>,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Runs-per-scenario grid.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RUN_GRID)]
    grid: Vec<usize>,
    /// Reference price coefficient; defaults to the full-pool choice fit.
    #[arg(long, allow_negative_numbers = true)]
    truth_beta: Option<f64>,
    #[arg(long, value_enum, default_value_t = MeasureArg::Both)]
    measure: MeasureArg,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8])]
    temperatures: Vec<f64>,
    /// Runs per temperature.
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    /// Focal price of the swept scenario.
    #[arg(long, default_value_t = 31.0)]
    price: f64,
    #[arg(long, default_value = "Pampers")]
    alternative: String,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
}

#[derive(Debug, Args)]
struct FetchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 25.0)]
    price_min: f64,
    #[arg(long, default_value_t = 40.0)]
    price_max: f64,
    #[arg(long, default_value_t = 1.0)]
    price_step: f64,
    /// Runs per price.
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long, default_value = crate::ingest::wire::DEFAULT_MODEL)]
    model: String,
    /// Concurrent requests.
    #[arg(long, default_value_t = 4)]
    in_flight: usize,
    /// Forbid network access.
    #[arg(long)]
    offline: bool,
}

/// Failure kinds mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

/// Parse and run. Returns the process exit code: 0 success, 1 runtime
/// error, 2 usage error.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let mut full = vec![std::ffi::OsString::from("modelbelief")];
    full.extend(argv.iter().cloned());
    let cli = match Cli::try_parse_from(&full) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    print!("{e}");
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        2
                    } else {
                        0
                    }
                }
                _ => {
                    let msg = e.to_string();
                    let line = msg.lines().next().unwrap_or("invalid arguments");
                    eprintln!("{line}");
                    2
                }
            };
        }
    };
    let argv: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match dispatch(cli.command, &argv) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command, argv: &[String]) -> std::result::Result<(), Failure> {
    let common = match &command {
        Command::Simulate(a) => &a.common,
        Command::Extract(a) => &a.common,
        Command::Estimate(a) => &a.common,
        Command::Bootstrap(a) => &a.common,
        Command::AccuracyCurve(a) => &a.common,
        Command::TempSweep(a) => &a.common,
        Command::Fetch(a) => &a.common,
    };
    if let Command::Fetch(f) = &command {
        if f.offline {
            return Err(Failure::Usage(
                "fetch needs the network but --offline was given".into(),
            ));
        }
    }
    if common.workers == Some(0) {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Failure::Runtime(Error::Validation(format!("thread pool: {e}"))))?;
    let mut out = Outputs::new(&common.out, common.seed, argv)?;
    pool.install(|| match command {
        Command::Simulate(a) => simulate(a, &mut out),
        Command::Extract(a) => extract(a, &mut out),
        Command::Estimate(a) => estimate(a, &mut out),
        Command::Bootstrap(a) => bootstrap(a, &mut out),
        Command::AccuracyCurve(a) => accuracy(a, &mut out),
        Command::TempSweep(a) => sweep(a, &mut out),
        Command::Fetch(a) => fetch(a, &mut out),
    })?;
    out.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    argv: &'a [String],
    seed: u64,
    versions: BTreeMap<&'static str, String>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

/// Output directory plus what the manifest needs to know.
struct Outputs {
    dir: PathBuf,
    seed: u64,
    argv: Vec<String>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path, seed: u64, argv: &[String]) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_owned(),
            seed,
            argv: argv.to_vec(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        let hex: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        self.inputs.insert(path.display().to_string(), hex);
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_owned());
        self.dir.join(name)
    }

    fn create(&mut self, name: &str) -> Result<fs::File> {
        Ok(fs::File::create(self.path(name))?)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        fs::write(self.path(name), bytes)?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.outputs.sort();
        let mut versions = BTreeMap::new();
        versions.insert("modelbelief", env!("CARGO_PKG_VERSION").to_owned());
        versions.insert("jsonl_schema", ingest::SCHEMA_VERSION.to_string());
        let manifest = Manifest {
            command: self.argv.first().map_or("", String::as_str),
            argv: &self.argv,
            seed: self.seed,
            versions,
            inputs: std::mem::take(&mut self.inputs),
            outputs: std::mem::take(&mut self.outputs),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes)?;
        Ok(())
    }
}

fn price_range(min: f64, max: f64, step: f64) -> std::result::Result<Vec<f64>, Failure> {
    if !(min.is_finite() && max.is_finite() && step.is_finite() && step > 0.0 && min <= max) {
        return Err(Failure::Usage(format!(
            "invalid price range {min}..{max} step {step}"
        )));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| min + step * i as f64).collect())
}

fn sampling_config(s: &SamplingArgs, seed: u64) -> SamplingConfig {
    SamplingConfig {
        temperature: s.temperature,
        top_k_recorded: s.top_k,
        seed,
    }
}

/// Grid and oracle (calibrated default or loaded from file).
fn oracle(
    args: &GridArgs,
    out: &mut Outputs,
) -> std::result::Result<(ScenarioGrid, Vec<Scenario>, ScriptedLmSpec), Failure> {
    let mut grid = ScenarioGrid {
        focal_prices: price_range(args.price_min, args.price_max, args.price_step)?,
        competitor_price: args.competitor_price,
        ..ScenarioGrid::default()
    };
    let lm = match &args.oracle {
        Some(path) => {
            out.input(path)?;
            let lm = ScriptedLmSpec::from_path(path)?;
            grid.alternatives = lm.alternative_set();
            lm
        }
        None => {
            let scenarios = build_scenarios(&grid)?;
            calibrated_oracle(
                &grid.model(),
                &reference_params(),
                &scenarios,
                &default_templates(),
            )?
        }
    };
    let scenarios = build_scenarios(&grid)?;
    Ok((grid, scenarios, lm))
}

fn write_estimates(pool: &RunPool, out: &mut Outputs) -> Result<()> {
    let rows = estimator_table(pool)?;
    write_estimator_csv(&rows, out.create("estimates.csv")?)
}

fn simulate(a: SimulateArgs, out: &mut Outputs) -> std::result::Result<(), Failure> {
    let (grid, scenarios, lm) = oracle(&a.grid, out)?;
    let config = sampling_config(&a.sampling, a.common.seed);
    let ids: Vec<_> = scenarios.iter().map(|s| s.id.clone()).collect();
    let pool = collect_runs(
        RunSource::Oracle(&lm),
        &ids,
        a.runs,
        &config,
        &grid.alternatives,
    )?;
    if a.save_runs {
        let mut runs = Vec::with_capacity(pool.len());
        for s in &ids {
            let sampler = lm.sampler(s, &config)?;
            runs.extend(
                pool.records(s)?
                    .iter()
                    .map(|r| sampler.generate(r.run_index)),
            );
        }
        ingest::write_runs(&runs, out.create("runs.jsonl")?)?;
    }
    out.json("oracle.json", lm.document())?;
    ingest::write_pool(&pool, out.create("pool.jsonl")?)?;
    write_estimates(&pool, out)?;
    write_figure1(&pool, &scenarios, out.create("figure1.csv")?)?;
    Ok(())
}

fn extract(a: ExtractArgs, out: &mut Outputs) -> std::result::Result<(), Failure> {
    let alts = match &a.alternatives {
        Some(p) => {
            out.input(p)?;
            AlternativeSet::from_path(p)?
        }
        None => crate::study::default_alternatives(),
    };
    out.input(&a.runs_file)?;
    let runs = ingest::load_runs(&a.runs_file)?;
    let pool = crate::study::collect::pool_from_runs(&runs, &alts)?;
    ingest::write_pool(&pool, out.create("pool.jsonl")?)?;
    out.json("diagnostics.json", &pool.diagnostics)?;
    write_estimates(&pool, out)?;
    Ok(())
}

/// Study data from a pool file or a fresh oracle sample.
fn study_data(
    d: &DataArgs,
    seed: u64,
    out: &mut Outputs,
) -> std::result::Result<StudyData, Failure> {
    let split = SplitSpec {
        test_prices: d.test_prices.clone(),
    };
    match &d.pool {
        Some(path) => {
            out.input(path)?;
            Ok(study_from_pool(
                ingest::load_pool(path)?,
                d.grid.competitor_price,
                &split,
            )?)
        }
        None => {
            let (grid, scenarios, lm) = oracle(&d.grid, out)?;
            let config = sampling_config(&d.sampling, seed);
            let ids: Vec<_> = scenarios.iter().map(|s| s.id.clone()).collect();
            let pool = collect_runs(
                RunSource::Oracle(&lm),
                &ids,
                d.pool_runs,
                &config,
                &grid.alternatives,
            )?;
            let (train, test) = split_train_test(&scenarios, &split)?;
            Ok(StudyData::new(grid.model(), train, test, pool)?)
        }
    }
}

#[derive(Serialize)]
struct FitReport {
    measure: Measure,
    fit: FitResult,
    test_metrics: Option<PredictionMetrics>,
}

fn estimate(a: EstimateArgs, out: &mut Outputs) -> std::result::Result<(), Failure> {
    let data = study_data(&a.data, a.common.seed, out)?;
    let mut reports = Vec::new();
    for m in a.measure.measures() {
        let fit = full_sample_fit(&data, m, a.common.seed)?;
        let test_metrics = if data.test.is_empty() {
            None
        } else {
            Some(predict_metrics(
                &data.model,
                &fit.params(),
                &data.test,
                &data.pool,
            )?)
        };
        reports.push(FitReport {
            measure: m,
            fit,
            test_metrics,
        });
    }
    out.json("fits.json", &reports)?;
    write_estimates(&data.pool, out)?;
    write_figure1(&data.pool, &data.scenarios(), out.create("figure1.csv")?)?;
    Ok(())
}

fn bootstrap(a: BootstrapArgs, out: &mut Outputs) -> std::result::Result<(), Failure> {
    if a.runs.is_empty() || a.runs.contains(&0) {
        return Err(Failure::Usage(
            "--runs needs positive runs-per-scenario values".into(),
        ));
    }
    let data = study_data(&a.data, a.common.seed, out)?;
    let measures = a.measure.measures();
    let outcomes = a
        .runs
        .iter()
        .map(|&k| bootstrap_estimates(&data, k, a.draws, &measures, a.common.seed))
        .collect::<Result<Vec<_>>>()?;
    let per_scenario = data
        .train
        .first()
        .map_or(Ok(0), |s| data.pool.records(&s.id).map(<[_]>::len))?;
    let mut full = Vec::new();
    for &m in &measures {
        let fit = full_sample_fit(&data, m, a.common.seed)?;
        let metrics = predict_metrics(&data.model, &fit.params(), &data.test, &data.pool)?;
        full.push(FullSampleRow {
            measure: m,
            runs_per_scenario: per_scenario,
            fit,
            metrics,
        });
    }
    let benchmark = outcomes.first().map(|o| o.benchmark);
    write_table2(
        &data.model.parameter_names(),
        &outcomes,
        &full,
        benchmark.as_ref(),
        out.create("table2.csv")?,
    )?;
    Ok(())
}

fn accuracy(a: AccuracyArgs, out: &mut Outputs) -> std::result::Result<(), Failure> {
    let data = study_data(&a.data, a.common.seed, out)?;
    let truth_beta = match a.truth_beta {
        Some(b) => b,
        None => {
            full_sample_fit(&data, Measure::Choice, a.common.seed)?
                .beta()
                .estimate
        }
    };
    let opts = AccuracyOptions {
        truth_beta,
        tolerance_fractions: a.tolerance,
        confidence: a.confidence,
        run_grid: a.grid,
        n_draws: a.draws,
        seed: a.common.seed,
        measures: a.measure.measures(),
    };
    let curves = accuracy_curves(&data, &opts)?;
    write_figure3(&curves, out.create("figure3.csv")?)?;
    Ok(())
}

fn sweep(a: SweepArgs, out: &mut Outputs) -> std::result::Result<(), Failure> {
    let (_, scenarios, lm) = oracle(&a.grid, out)?;
    let s = scenarios
        .iter()
        .find(|s| s.prices[0] == a.price)
        .ok_or_else(|| Failure::Usage(format!("--price {} is not on the price grid", a.price)))?;
    let rows = temperature_sweep(
        &lm,
        &s.id,
        &a.alternative,
        &a.temperatures,
        a.runs,
        a.top_k,
        a.common.seed,
    )?;
    write_figure4(&rows, out.create("figure4.csv")?)?;
    Ok(())
}

#[cfg(feature = "live")]
fn fetch(a: FetchArgs, out: &mut Outputs) -> std::result::Result<(), Failure> {
    use crate::ingest::live::{fetch_runs, LiveClient};
    use crate::ingest::{build_request, RunContext};

    let prices = price_range(a.price_min, a.price_max, a.price_step)?;
    let config = sampling_config(&a.sampling, a.common.seed);
    let template = PromptTemplate::default();
    let mut jobs = Vec::with_capacity(prices.len() * a.runs);
    for &p in &prices {
        let mut req = build_request(&template, p, &config)?;
        req.model = a.model.clone();
        for r in 0..a.runs as u64 {
            let ctx = RunContext {
                scenario: crate::study::scenario_id(p),
                run_index: r,
                seed: a.common.seed,
                temperature: config.temperature,
                top_k: config.top_k_recorded,
            };
            jobs.push((ctx, req.clone()));
        }
    }
    let client = LiveClient::from_env()?;
    let mut file = std::io::BufWriter::new(out.create("runs.jsonl")?);
    let warnings = fetch_runs(&client, &jobs, a.in_flight, &mut file)?;
    out.json("warnings.json", &warnings)?;
    Ok(())
}

#[cfg(not(feature = "live"))]
fn fetch(_: FetchArgs, _: &mut Outputs) -> std::result::Result<(), Failure> {
    let _ = PromptTemplate::default();
    Err(Failure::Usage(
        "this build has no network client (feature `live` disabled)".into(),
    ))
}
