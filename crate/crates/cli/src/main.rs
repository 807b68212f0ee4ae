use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::Value;

use multireg::baselines::{SransacParams, TlinkageParams};
use multireg::harness::{self, BenchConfig, EstimateFile, InitSpec, Method};
use multireg::io;
use multireg::scenegen::{self, SceneSpec, SceneTruth};
use multireg::{EmParams, Error};

const EXIT_UNEXPECTED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

#[derive(Parser)]
#[command(name = "multireg", version, about = "Multi-model 3D registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene: correspondences CSV plus `<out>.gt.json`.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one method on a correspondences CSV.
    Solve {
        #[arg(long)]
        method: Method,
        #[arg(long = "in")]
        input: PathBuf,
        /// `euclidean:<target>` or `labels:<file>`
        #[arg(long)]
        init: Option<InitSpec>,
        /// Inline JSON object or path to a JSON file.
        #[arg(long)]
        params: Option<String>,
        /// Seed for randomized methods when `params` has none.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an estimate against the ground truth of a correspondences CSV.
    Evaluate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        /// Ground-truth sidecar; defaults to `<in>.gt.json` when present.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a seeded experiment sweep and write summary/boxplot tables.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn new(code: u8, err: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            err: err.into(),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

/// Exit code for a library error outside of solving/evaluating.
fn input_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParam { .. }
        | Error::Parse { .. }
        | Error::Coverage { .. }
        | Error::Io { .. }
        | Error::Json(_) => EXIT_USAGE,
        _ => EXIT_UNEXPECTED,
    }
}

fn input(e: Error) -> Failure {
    Failure::new(input_code(&e), e)
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".gt.json");
    PathBuf::from(s)
}

/// Deserializes with the offending field path in the error message.
fn typed<T: DeserializeOwned>(value: &Value, what: &str) -> Outcome<T> {
    serde_path_to_error::deserialize(value.clone()).map_err(|e| {
        let path = e.path().to_string();
        Failure::new(
            EXIT_USAGE,
            anyhow!("invalid {what}: field `{path}`: {}", e.inner()),
        )
    })
}

fn read_value(path: &Path) -> Outcome<Value> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(|e| Failure::new(EXIT_USAGE, e))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(|e| Failure::new(EXIT_USAGE, e))
}

fn parse_params(raw: Option<&str>) -> Outcome<Value> {
    let Some(raw) = raw else {
        return Ok(Value::Null);
    };
    let trimmed = raw.trim_start();
    if trimmed.starts_with('{') {
        serde_json::from_str(raw)
            .context("parsing --params")
            .map_err(|e| Failure::new(EXIT_USAGE, e))
    } else {
        read_value(Path::new(raw))
    }
}

fn check_params(method: Method, params: &Value) -> Outcome {
    if params.is_null() {
        return Ok(());
    }
    match method {
        Method::Em | Method::EmVanilla => {
            let p: EmParams = typed(params, "params")?;
            p.validate().map_err(input)
        }
        Method::Tlinkage => typed::<TlinkageParams>(params, "params").map(drop),
        Method::Sransac => typed::<SransacParams>(params, "params").map(drop),
        Method::Naive => match params.as_object() {
            Some(m) if m.is_empty() => Ok(()),
            _ => Err(Failure::new(EXIT_USAGE, anyhow!("naive takes no params"))),
        },
    }
}

fn generate(spec_path: &Path, out: &Path) -> Outcome {
    let spec: SceneSpec = typed(&read_value(spec_path)?, "scene spec")?;
    spec.validate().map_err(input)?;
    let corrs = scenegen::generate_scene(&spec).map_err(input)?;
    io::save_correspondences(out, &corrs).map_err(input)?;
    let truth = scenegen::scene_truth(&spec, &corrs);
    io::write_json(sidecar(out), &truth).map_err(input)?;
    log::info!("wrote {} correspondences to {}", corrs.len(), out.display());
    Ok(())
}

fn solve(
    method: Method,
    input_path: &Path,
    init: Option<&InitSpec>,
    params: Option<&str>,
    seed: u64,
    out: &Path,
) -> Outcome {
    if method.needs_init() && init.is_none() {
        return Err(Failure::new(
            EXIT_USAGE,
            anyhow!("--init is required for method {method}"),
        ));
    }
    let params = parse_params(params)?;
    check_params(method, &params)?;
    let corrs = io::load_correspondences(input_path).map_err(input)?;
    let start = Instant::now();
    let init = match init {
        Some(spec) => Some(harness::build_init(spec, &corrs).map_err(input)?),
        None => None,
    };
    let estimate =
        harness::run_method(method, &corrs, init.as_ref(), &params, seed).map_err(|e| match e {
            Error::InvalidParam { .. } | Error::Json(_) => Failure::new(EXIT_USAGE, e),
            e => Failure::new(EXIT_SOLVER, e),
        })?;
    let file = EstimateFile::new(method, estimate, start.elapsed().as_secs_f64());
    log::info!(
        "{method}: {} clusters, {} iterations",
        file.hypotheses.len(),
        file.iterations_run
    );
    io::write_json(out, &file).map_err(input)
}

fn evaluate(input_path: &Path, estimate: &Path, gt: Option<&Path>, out: &Path) -> Outcome {
    let mut corrs = io::load_correspondences(input_path).map_err(input)?;
    let est: EstimateFile = typed(&read_value(estimate)?, "estimate")?;
    let gt_path = gt.map(Path::to_path_buf).or_else(|| {
        let p = sidecar(input_path);
        p.exists().then_some(p)
    });
    if let Some(p) = gt_path {
        let truth: SceneTruth = typed(&read_value(&p)?, "ground truth")?;
        corrs.gt_poses = Some(truth.poses);
    }
    if est.labels.len() != corrs.len() || est.n != corrs.len() {
        return Err(Failure::new(
            EXIT_MISMATCH,
            Error::LengthMismatch {
                expected: corrs.len(),
                actual: est.labels.len(),
            },
        ));
    }
    let report =
        harness::evaluate_estimate(&corrs, &est.labels, &est.hypotheses).map_err(|e| match e {
            Error::LengthMismatch { .. } => Failure::new(EXIT_MISMATCH, e),
            e => input(e),
        })?;
    io::write_json(out, &report).map_err(input)
}

fn bench(config: &Path, out_dir: &Path) -> Outcome {
    let config: BenchConfig = typed(&read_value(config)?, "bench config")?;
    config.validate().map_err(input)?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(|e| Failure::new(EXIT_USAGE, e))?;
    let outcome = harness::run_bench(&config, out_dir).map_err(input)?;
    let failed = outcome.failures();
    let total = outcome.records.len();
    if failed > 0 {
        log::warn!("{failed} of {total} trials failed");
    }
    if total > 0 && failed == total {
        return Err(Failure::new(
            EXIT_SOLVER,
            anyhow!("all {total} trials failed"),
        ));
    }
    println!("{}", outcome.summary_path.display());
    println!("{}", outcome.boxplot_path.display());
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Generate { spec, out } => generate(&spec, &out),
        Command::Solve {
            method,
            input,
            init,
            params,
            seed,
            out,
        } => solve(method, &input, init.as_ref(), params.as_deref(), seed, &out),
        Command::Evaluate {
            input,
            estimate,
            gt,
            out,
        } => evaluate(&input, &estimate, gt.as_deref(), &out),
        Command::Bench { config, out_dir } => bench(&config, &out_dir),
    }
}

fn threads_from_env() -> Option<usize> {
    let raw = std::env::var("MULTIREG_THREADS").ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            log::warn!("ignoring MULTIREG_THREADS={raw:?}");
            None
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match threads_from_env() {
        Some(n) => multireg::par::with_threads(n, move || run(cli)),
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
