use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use migan::gan::TrainConfig;
use migan::harness::{analyze, impute, run_experiment, write_reports, ExperimentConfig, Method};
use migan::inference::{compute_metrics, RunSummary};
use migan::io::{feature_header, read_csv, save_incomplete_csv, save_matrix_csv};
use migan::synthetic::{generate, SyntheticSpec};
use migan::{Error, Result};

#[derive(Parser)]
#[command(name = "migan", version, about = "GAN-based multiple imputation for blockwise-missing data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset: data.csv, truth.csv and provenance.json.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write imp_1.csv .. imp_M.csv for an incomplete CSV.
    Impute {
        #[arg(long)]
        method: Method,
        /// Training configuration (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_header: bool,
    },
    /// Fit, pool and score a directory of imputations against the truth.
    Evaluate {
        #[arg(long)]
        imputations: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_delimiter = ',')]
        beta: Vec<f64>,
        /// 1-based predictor columns.
        #[arg(long, value_delimiter = ',')]
        predictors: Vec<usize>,
        /// Incomplete data, needed for the imputation error.
        #[arg(long)]
        data: Option<PathBuf>,
        /// 1-based response column; defaults to the last.
        #[arg(long)]
        response: Option<usize>,
        /// Position within the predictors of the scored coefficient.
        #[arg(long, default_value_t = 0)]
        target: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_header: bool,
    },
    /// Run a Monte-Carlo experiment: metrics.csv, runs.jsonl, provenance.json.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run replicates in parallel (thread count from MIGAN_THREADS).
        #[arg(long)]
        parallel: bool,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn cmd_generate(spec: &Path, out: &Path) -> Result<()> {
    let spec: SyntheticSpec = read_json(spec)?;
    let ds = generate(&spec)?;
    fs::create_dir_all(out)?;
    let header = feature_header(spec.p);
    save_incomplete_csv(&out.join("data.csv"), Some(&header), &ds.data)?;
    save_matrix_csv(&out.join("truth.csv"), Some(&header), &ds.truth)?;
    let provenance = serde_json::json!({
        "spec": spec,
        "seed": spec.seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    fs::write(out.join("provenance.json"), serde_json::to_string_pretty(&provenance)?)?;
    Ok(())
}

fn cmd_impute(method: Method, config: Option<&Path>, data: &Path, out: &Path, header: bool) -> Result<()> {
    let cfg: TrainConfig = match config {
        Some(path) => read_json(path)?,
        None => TrainConfig::default(),
    };
    cfg.validate()?;
    let table = read_csv(data, header)?;
    let imputations = impute(method, &table.data, &cfg)?;
    fs::create_dir_all(out)?;
    for (k, m) in imputations.iter().enumerate() {
        save_matrix_csv(&out.join(format!("imp_{}.csv", k + 1)), table.header.as_deref(), m)?;
    }
    let provenance = serde_json::json!({
        "method": method,
        "config": cfg,
        "data": data,
        "version": env!("CARGO_PKG_VERSION"),
    });
    fs::write(out.join("provenance.json"), serde_json::to_string_pretty(&provenance)?)?;
    Ok(())
}

/// `imp_<k>.csv` files in increasing `k`.
fn imputation_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(usize, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            let k = path.file_name()?.to_str()?.strip_prefix("imp_")?.strip_suffix(".csv")?.parse().ok()?;
            Some((k, path))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no imp_<k>.csv files in {}", dir.display())));
    }
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

struct EvaluateArgs<'a> {
    imputations: &'a Path,
    truth: &'a Path,
    beta: &'a [f64],
    predictors: &'a [usize],
    data: Option<&'a Path>,
    response: Option<usize>,
    target: usize,
    out: Option<&'a Path>,
    header: bool,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    if args.beta.len() != args.predictors.len() || args.predictors.is_empty() {
        return Err(Error::Config("--beta and --predictors need the same, non-zero length".into()));
    }
    if args.target >= args.predictors.len() {
        return Err(Error::Config(format!("--target {} out of range", args.target)));
    }
    let truth = read_csv(args.truth, args.header)?.data;
    if !truth.is_complete() {
        return Err(Error::Data("truth has missing cells".into()));
    }
    let truth = truth.values().clone();
    let p = truth.ncols();
    let response = args.response.unwrap_or(p);
    if let Some(&bad) = args.predictors.iter().chain([&response]).find(|&&j| j == 0 || j > p) {
        return Err(Error::Config(format!("column {bad} outside 1..={p}")));
    }
    let imputations = imputation_files(args.imputations)?
        .iter()
        .map(|f| {
            let m = read_csv(f, args.header)?.data;
            if !m.is_complete() || m.values().shape() != truth.shape() {
                return Err(Error::Data(format!("{} is incomplete or has the wrong shape", f.display())));
            }
            Ok(m.values().clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let predictors: Vec<usize> = args.predictors.iter().map(|q| q - 1).collect();
    let pooled = analyze(&imputations, &predictors, response - 1, args.target)?;
    let summary = match args.data {
        Some(path) => {
            let data = read_csv(path, args.header)?.data;
            if data.values().shape() != truth.shape() {
                return Err(Error::Data("data and truth shapes differ".into()));
            }
            RunSummary::new(pooled, &imputations, &truth, data.mask(), None)
        }
        None => RunSummary {
            pooled,
            imp_mse: None,
            seconds_per_imputation: None,
        },
    };
    let metrics = compute_metrics(&[summary], args.beta[args.target])?;
    let out = args.out.map_or_else(|| args.imputations.join("metrics.csv"), Path::to_path_buf);
    metrics.write_csv(fs::File::create(out)?)
}

fn cmd_benchmark(config: &Path, out: Option<&Path>, parallel: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    cfg.parallel |= parallel;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: set output_dir or pass --out".into()))?;
    let result = run_experiment(&cfg)?;
    write_reports(&cfg, &result, &dir)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { spec, out } => cmd_generate(&spec, &out),
        Command::Impute {
            method,
            config,
            data,
            out,
            no_header,
        } => cmd_impute(method, config.as_deref(), &data, &out, !no_header),
        Command::Evaluate {
            imputations,
            truth,
            beta,
            predictors,
            data,
            response,
            target,
            out,
            no_header,
        } => cmd_evaluate(EvaluateArgs {
            imputations: &imputations,
            truth: &truth,
            beta: &beta,
            predictors: &predictors,
            data: data.as_deref(),
            response,
            target,
            out: out.as_deref(),
            header: !no_header,
        }),
        Command::Benchmark { config, out, parallel } => cmd_benchmark(&config, out.as_deref(), parallel),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
