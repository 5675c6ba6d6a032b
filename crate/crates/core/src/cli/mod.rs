//! `loanprofit` command line: `synth`, `train`, `evaluate`.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 schema or data error,
//! 4 I/O error.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

use crate::dataset::{generate_synthetic, load_csv, split, write_rejects, write_table_csv, LoanTable, SyntheticConfig};
use crate::error::{Error, ErrorClass, Result};
use crate::evaluation::{self, cross_table, evaluate_model, EvaluationReport};
use crate::pipeline::{self, FittedPipeline, PipelineMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const THREADS_ENV: &str = "LOANPROFIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "loanprofit", version, about = "Two-stage loan profit scoring")]
pub struct Cli {
    /// Worker threads for training and scoring (results do not depend on it).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic loan table as CSV.
    Synth(SynthArgs),
    /// Fit a pipeline on the training split of a loan CSV.
    Train(TrainArgs),
    /// Score held-out loans with one or two pipelines and write reports.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of loans.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output CSV path; the manifest goes to `<out>.manifest.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Loan CSV in the Lending Club layout.
    #[arg(long)]
    pub data: PathBuf,
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// one_stage or two_stage; overrides the config file.
    #[arg(long)]
    pub mode: Option<String>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output pipeline directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Pipeline directory written by `train`.
    #[arg(long)]
    pub pipeline: PathBuf,
    /// Second pipeline to compare against the first.
    #[arg(long)]
    pub pipeline_b: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Config file for CSV loading keys (`missing_tokens`, `column.*`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Length of the top-k curve and size of the selection tables.
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Score every loan in the file instead of the held-out split.
    #[arg(long)]
    pub all_rows: bool,
    #[arg(long)]
    pub name_a: Option<String>,
    #[arg(long)]
    pub name_b: Option<String>,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn exit_code(error: &Error) -> i32 {
    match error.class() {
        ErrorClass::Usage => EXIT_USAGE,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Io => EXIT_IO,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
    })
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn manifest_text(lines: &[(String, String)]) -> String {
    lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if args.n == 0 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    let start = Instant::now();
    let table = generate_synthetic(args.n, args.seed, &SyntheticConfig::default())?;
    let file = fs::File::create(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_table_csv(&table, BufWriter::new(file))?;
    let mut manifest_path = args.out.clone().into_os_string();
    manifest_path.push(".manifest.txt");
    write_file(
        Path::new(&manifest_path),
        &manifest_text(&[
            kv("command", "synth"),
            kv("version", env!("CARGO_PKG_VERSION")),
            kv("created_unix", unix_now()),
            kv("seed", args.seed),
            kv("rows", table.len()),
            kv("output", args.out.display()),
            kv("elapsed_ms", start.elapsed().as_millis()),
        ]),
    )?;
    log::info!("wrote {} loans to {}", table.len(), args.out.display());
    Ok(())
}

struct Loaded {
    table: LoanTable,
    rows_read: usize,
    dropped: usize,
    rejected: usize,
}

fn load(path: &Path, config: &RunConfig, rejects_dir: Option<&Path>) -> Result<Loaded> {
    let report = load_csv(path, &config.load)?;
    if !report.rejects.is_empty() {
        log::warn!("{} rows rejected while reading {}", report.rejects.len(), path.display());
        if let Some(dir) = rejects_dir {
            write_rejects(dir.join("rejects.csv"), &report.rejects)?;
        }
    }
    log::info!(
        "{}: {} rows, {} kept, {} intermediate dropped",
        path.display(),
        report.rows_read,
        report.table.len(),
        report.dropped_intermediate
    );
    if report.table.len() < 2 {
        return Err(Error::Size(format!(
            "{} has {} usable loans",
            path.display(),
            report.table.len()
        )));
    }
    Ok(Loaded {
        rows_read: report.rows_read,
        dropped: report.dropped_intermediate,
        rejected: report.rejects.len(),
        table: report.table,
    })
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let start = Instant::now();
    let mut config = RunConfig::load(args.config.as_deref(), &args.set)?;
    if let Some(mode) = &args.mode {
        config.pipeline.mode = mode.parse()?;
    }
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let data = load(&args.data, &config, Some(&args.out))?;
    let (train, test) = split(&data.table, &config.pipeline.split)?;
    let fitted = pipeline::fit(&train, &config.pipeline)?;

    let scored = fitted.score(&test)?;
    let predicted: Vec<f64> = scored.iter().map(|s| s.arr_hat).collect();
    let test_rmse = evaluation::rmse(&predicted, &test.arrs())?;
    let mut extra = vec![
        kv("command", "train"),
        kv("data", args.data.display()),
        kv(
            "config",
            args.config.as_ref().map_or("(defaults)".to_string(), |p| p.display().to_string()),
        ),
        kv("rows_read", data.rows_read),
        kv("dropped_intermediate", data.dropped),
        kv("rejected", data.rejected),
        kv("train_rows", train.len()),
        kv("test_rows", test.len()),
        kv("test_rmse", test_rmse),
    ];
    println!("mode: {}", fitted.mode());
    println!("test RMSE: {test_rmse:.6}");
    if let Some(pd) = scored.iter().map(|s| s.pd_hat).collect::<Option<Vec<f64>>>() {
        let statuses: Vec<u8> = test.outcomes().iter().map(|o| o.loan_status).collect();
        if let Ok(auc) = evaluation::auc(&pd, &statuses) {
            println!("stage-1 test AUC: {auc:.4}");
            extra.push(kv("stage1_test_auc", auc));
        }
    }
    extra.push(kv("elapsed_ms", start.elapsed().as_millis()));
    fitted.save_with(&args.out, &extra)?;
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let start = Instant::now();
    let a = FittedPipeline::load(&args.pipeline)?;
    let b = args.pipeline_b.as_deref().map(FittedPipeline::load).transpose()?;
    if let Some(b) = &b {
        if b.config().split != a.config().split {
            return Err(Error::Config("the two pipelines were trained on different splits".into()));
        }
        if b.config().targets != a.config().targets {
            return Err(Error::Config("the two pipelines use different arr_cap settings".into()));
        }
    }
    let mut config = RunConfig::load(args.config.as_deref(), &args.set)?;
    config.load.targets = a.config().targets;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let data = load(&args.data, &config, Some(&args.out))?;
    let table = if args.all_rows {
        data.table
    } else {
        split(&data.table, &a.config().split)?.1
    };
    if args.k == 0 || args.k > table.len() {
        return Err(Error::Config(format!(
            "--k {} outside 1..={} evaluated loans",
            args.k,
            table.len()
        )));
    }

    let default_name = |p: &FittedPipeline| p.mode().to_string();
    let mut name_a = args.name_a.clone().unwrap_or_else(|| default_name(&a));
    let mut models = Vec::new();
    let mut named = vec![(&a, String::new())];
    if let Some(b) = &b {
        let mut name_b = args.name_b.clone().unwrap_or_else(|| default_name(b));
        if name_b == name_a {
            name_a.push_str("_a");
            name_b.push_str("_b");
        }
        named.push((b, name_b));
    }
    named[0].1 = name_a;
    for (p, name) in &named {
        let (scored, report) = p.score_with_report(&table)?;
        if report.unseen_rows() > 0 {
            log::warn!("{name}: {} loans carry categories unseen in training", report.unseen_rows());
        }
        models.push(evaluate_model(name, &scored, &table, args.k)?);
    }
    let report = EvaluationReport {
        models,
        cross_table: cross_table(&table),
    };
    report.write(&args.out)?;
    print!("{}", report.render_text());

    let mut lines = vec![
        kv("command", "evaluate"),
        kv("version", env!("CARGO_PKG_VERSION")),
        kv("created_unix", unix_now()),
        kv("pipeline_a", args.pipeline.display()),
        kv("pipeline_a_config_sha256", a.config().hash()),
    ];
    if let (Some(path), Some(b)) = (&args.pipeline_b, &b) {
        lines.push(kv("pipeline_b", path.display()));
        lines.push(kv("pipeline_b_config_sha256", b.config().hash()));
    }
    lines.extend([
        kv("data", args.data.display()),
        kv("rows_read", data.rows_read),
        kv("dropped_intermediate", data.dropped),
        kv("rejected", data.rejected),
        kv("evaluated_rows", table.len()),
        kv("scope", if args.all_rows { "all rows" } else { "held-out split" }),
        kv("split_seed", a.config().split.seed),
        kv("k", args.k),
        kv("elapsed_ms", start.elapsed().as_millis()),
    ]);
    if a.mode() == PipelineMode::TwoStage || b.as_ref().is_some_and(|b| b.mode() == PipelineMode::TwoStage) {
        lines.push(kv("note", "stage-2 training used the cross_fit_folds setting recorded in each pipeline.cfg"));
    }
    write_file(&args.out.join("manifest.txt"), &manifest_text(&lines))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Schema("x".into())), EXIT_DATA);
        assert_eq!(
            exit_code(&Error::io("/x", std::io::Error::other("boom"))),
            EXIT_IO
        );
    }

    #[test]
    fn parse_errors_are_usage_errors() {
        assert_eq!(main_with_args(["loanprofit", "frobnicate"]), EXIT_USAGE);
        assert_eq!(main_with_args(["loanprofit", "synth", "--n", "ten", "--out", "x"]), EXIT_USAGE);
    }
}
