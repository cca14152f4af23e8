//! `ttmerge` command-line driver.
//!
//! ```text
//! ttmerge gen        --out DIR [--seed N] [--params FILE]
//! ttmerge precompute (--scenario DIR | --data FILE --pt FILE --ft FILE) --out PATH
//! ttmerge eval       --scenario DIR [--methods LIST] [--cache DIR] [--report json|csv] [--out FILE]
//! ttmerge diag       (--scenario DIR | --data FILE) [--bins N] [--out FILE]
//! ```
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or validation error,
//! 3 stale or inconsistent inputs. `TTMC_THREADS` caps worker threads.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ttmerge::bench::{
    self, gen_scenario, lambda_histogram, load_pair, quadrant_analysis_pooled,
    run_benchmark, save_pair, test_sets, train_pair, BenchConfig, BenchmarkReport, MethodSpec,
    ScenarioParams, ShiftScenario,
};
use ttmerge::coefficient::{CoefficientConfig, Direction, Policy};
use ttmerge::dynamic::{precompute_lambdas, predict_t3, ForwardCounter, LambdaCache, DEFAULT_BATCH_SIZE};
use ttmerge::models::Dataset;
use ttmerge::params::{load_checkpoint, ParameterMap};
use ttmerge::{write_atomic, Error, ErrorClass};

const THREADS_VAR: &str = "TTMC_THREADS";

#[derive(Parser)]
#[command(name = "ttmerge", version, about = "Test-time merging of a pretrained and an expert classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario and train its model pair.
    Gen(GenArgs),
    /// Compute and cache merging coefficients.
    Precompute(PrecomputeArgs),
    /// Score merging methods on every test setting of a scenario.
    Eval(EvalArgs),
    /// Coefficient histogram, agreement quadrants and correlation.
    Diag(DiagArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = bench::PINNED_SEED)]
    seed: u64,
    /// Scenario parameters as JSON; defaults to the shipped scenario.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct CoefArgs {
    #[arg(long, default_value_t = 0.0)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_max: f64,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    tau_pt: f64,
    #[arg(long, default_value_t = 0.05)]
    tau_ft: f64,
    /// js_sigmoid, entropy_ratio, confidence_ratio or fixed(α).
    #[arg(long, default_value = "js_sigmoid")]
    policy: String,
    /// per_eq10 or inverted.
    #[arg(long, default_value = "per_eq10")]
    direction: String,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
}

impl CoefArgs {
    fn config(&self) -> Result<CoefficientConfig, Error> {
        let cfg = CoefficientConfig {
            lambda_min: self.lambda_min,
            lambda_max: self.lambda_max,
            delta: self.delta,
            tau_pt: self.tau_pt,
            tau_ft: self.tau_ft,
            policy: self.policy.parse::<Policy>()?,
            direction: self.direction.parse::<Direction>()?,
            ..CoefficientConfig::default()
        };
        cfg.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("--batch-size must be >= 1".into()));
        }
        Ok(cfg)
    }
}

/// Where the inputs come from: a scenario directory, or a dataset with an
/// explicit model pair. Explicit `--pt`/`--ft` override a scenario's models.
#[derive(Args, Clone)]
struct Inputs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    pt: Option<PathBuf>,
    #[arg(long)]
    ft: Option<PathBuf>,
}

impl Inputs {
    fn models(&self) -> Result<(ParameterMap, ParameterMap), Error> {
        match (&self.pt, &self.ft, &self.scenario) {
            (Some(pt), Some(ft), _) => Ok((load_checkpoint(pt)?, load_checkpoint(ft)?)),
            (None, None, Some(dir)) => load_pair(dir),
            _ => Err(Error::Config(
                "give both --pt and --ft, or a --scenario holding them".into(),
            )),
        }
    }

    fn source(&self) -> Result<Source, Error> {
        match (&self.scenario, &self.data) {
            (Some(dir), None) => Ok(Source::Scenario(Box::new(ShiftScenario::load(dir)?))),
            (None, Some(path)) => Ok(Source::Data(Dataset::load(path)?)),
            _ => Err(Error::Config("give exactly one of --scenario and --data".into())),
        }
    }
}

enum Source {
    Scenario(Box<ShiftScenario>),
    Data(Dataset),
}

#[derive(Args)]
struct PrecomputeArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    coef: CoefArgs,
    /// Cache file (with --data) or directory of caches (with --scenario).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    pt: Option<PathBuf>,
    #[arg(long)]
    ft: Option<PathBuf>,
    #[command(flatten)]
    coef: CoefArgs,
    /// Comma-separated methods; defaults to all.
    #[arg(long)]
    methods: Option<String>,
    /// Directory written by `precompute --scenario`.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    report: ReportFormat,
    /// Seed for randomized baselines; defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    coef: CoefArgs,
    #[arg(long, default_value_t = bench::HISTOGRAM_BINS)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Io | ErrorClass::Runtime => 1,
        ErrorClass::Usage => 2,
        ErrorClass::Consistency => 3,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cache_path(dir: &Path, set: &str) -> PathBuf {
    dir.join(format!("{set}.ttlc"))
}

fn cmd_gen(a: &GenArgs) -> Result<(), Error> {
    let params = match &a.params {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_slice::<ScenarioParams>(&bytes)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => ScenarioParams::default(),
    };
    let s = gen_scenario(a.seed, &params)?;
    let (pt, ft) = train_pair(&s)?;
    s.save(&a.out)?;
    save_pair(&a.out, &pt, &ft)?;
    eprintln!("wrote scenario (seed {}) to {}", a.seed, a.out.display());
    Ok(())
}

fn cmd_precompute(a: &PrecomputeArgs) -> Result<(), Error> {
    let cfg = a.coef.config()?;
    let (pt, ft) = a.inputs.models()?;
    let bs = a.coef.batch_size;
    match a.inputs.source()? {
        Source::Data(d) => precompute_lambdas(&pt, &ft, &d, &cfg, bs)?.save(&a.out)?,
        Source::Scenario(s) => {
            std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
                path: a.out.clone(),
                source: e,
            })?;
            for (name, d) in test_sets(&s) {
                precompute_lambdas(&pt, &ft, d, &cfg, bs)?.save(cache_path(&a.out, &name))?;
            }
        }
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), Error> {
    let cfg = a.coef.config()?;
    let methods = match &a.methods {
        Some(m) => MethodSpec::parse_list(m)?,
        None => MethodSpec::all(),
    };
    let inputs = Inputs {
        scenario: Some(a.scenario.clone()),
        data: None,
        pt: a.pt.clone(),
        ft: a.ft.clone(),
    };
    let (pt, ft) = inputs.models()?;
    let s = ShiftScenario::load(&a.scenario)?;
    let caches = match &a.cache {
        Some(dir) => {
            let mut m = BTreeMap::new();
            for (name, _) in test_sets(&s) {
                m.insert(name.clone(), LambdaCache::load(cache_path(dir, &name))?);
            }
            Some(m)
        }
        None => None,
    };
    let bench_cfg = BenchConfig::new(cfg, a.coef.batch_size, a.seed.unwrap_or(s.seed));
    let reports = run_benchmark(&s, &pt, &ft, &methods, &bench_cfg, caches.as_ref())?;
    let report = BenchmarkReport::new(&bench_cfg, reports);
    let text = match a.report {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Csv => report.to_csv(),
    };
    emit(a.out.as_deref(), &text)
}

fn cmd_diag(a: &DiagArgs) -> Result<(), Error> {
    let cfg = a.coef.config()?;
    let (pt, ft) = a.inputs.models()?;
    let source = a.inputs.source()?;
    let sets: Vec<&Dataset> = match &source {
        Source::Scenario(s) => test_sets(s).into_iter().map(|(_, d)| d).collect(),
        Source::Data(d) => vec![d],
    };
    let mut records = Vec::new();
    for d in &sets {
        records.extend(predict_t3(&pt, &ft, d, &cfg, &mut ForwardCounter::default())?.records);
    }
    let hist = lambda_histogram(&records, a.bins)?;
    let lambdas: Vec<f64> = records.iter().map(|r| r.lambda_prime).collect();
    let n = lambdas.len() as f64;
    let quadrants = quadrant_analysis_pooled(&pt, &ft, &sets)?;
    let out = json!({
        "config": cfg,
        "config_digest": cfg.digest(),
        "n": records.len(),
        "lambda_mean": lambdas.iter().sum::<f64>() / n,
        "lambda_histogram": hist,
        "quadrants": quadrants,
        "rho": quadrants.rho,
    });
    emit(a.out.as_deref(), &bench::to_canonical_json(&out))
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR}={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Precompute(a) => cmd_precompute(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Diag(a) => cmd_diag(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ttmerge: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
