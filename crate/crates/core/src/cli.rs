//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 solver did not converge.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::data::{self, ProblemRecord, B_COLUMNS, ID_COLUMN, PROBLEM_COLUMNS};
use crate::evaluation::{self, AnomalyCheck};
use crate::io_util::write_atomic;
use crate::pipeline::{self, ModelBundle, PipelineError};
use crate::problem::{sample_problem, Block};
use crate::synthetic;

#[derive(Debug, Parser)]
#[command(
    name = "hybrid-choice",
    version,
    about = "Predict block-wise choice rates between two gambles"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Problem CSV (labeled for fit-scaler, train and evaluate)
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Bundle directory
    #[arg(long, global = true)]
    pub bundle: Option<PathBuf>,
    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Problems drawn for scaler fitting
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Anomaly check file (TOML)
    #[arg(long, global = true)]
    pub checks: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the per-block feature scalers and write them to the bundle directory
    FitScaler,
    /// Cross-validate the hyperparameter grid, then train and save the bundle
    Train,
    /// Predict the five block B-rates for every problem in --data
    Predict,
    /// Score a bundle on labeled data
    Evaluate,
    /// Run the anomaly checks against a bundle
    Check,
    /// Write randomly sampled problems as CSV
    Sample {
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Attach B-rates from the built-in synthetic rule
        #[arg(long)]
        synthetic_labels: bool,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Convergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Convergence(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Convergence(m) => m,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) | PipelineError::TooFewProblems { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<data::DataError> for CliError {
    fn from(e: data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<evaluation::EvalError> for CliError {
    fn from(e: evaluation::EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

/// Merges the config file (if any) with flag overrides and validates it.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::from_file(path).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(d) = &global.data {
        cfg.data = Some(d.clone());
    }
    if let Some(b) = &global.bundle {
        cfg.bundle = b.clone();
    }
    if let Some(o) = &global.out {
        cfg.out = Some(o.clone());
    }
    if let Some(f) = global.folds {
        cfg.folds = f;
    }
    if let Some(n) = global.samples {
        cfg.samples = n;
    }
    if let Some(c) = &global.checks {
        cfg.checks = Some(c.clone());
    }
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.global)?;
    match &cli.command {
        Command::FitScaler => cmd_fit_scaler(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Predict => cmd_predict(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::Check => cmd_check(&cfg),
        Command::Sample {
            count,
            synthetic_labels,
        } => cmd_sample(&cfg, *count, *synthetic_labels),
    }
}

fn data_path(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.data
        .as_deref()
        .ok_or_else(|| CliError::Usage("no data file given (use --data or `data` in the config)".into()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            write_atomic(path, text.as_bytes()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_fit_scaler(cfg: &RunConfig) -> Result<(), CliError> {
    let estimation = data::read_labeled(data_path(cfg)?)?;
    let scalers = pipeline::fit_scalers_sampled(&estimation, cfg.samples, cfg.seed, &cfg.pipeline().features)?;
    let written = pipeline::save_scalers(&scalers, &cfg.bundle)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn scalers_present(dir: &Path) -> bool {
    Block::all().all(|b| dir.join(pipeline::scaler_file(b)).is_file())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let estimation = data::read_labeled(data_path(cfg)?)?;
    let base = cfg.pipeline();
    let scalers = if scalers_present(&cfg.bundle) {
        pipeline::load_scalers(&cfg.bundle)?
    } else {
        pipeline::fit_scalers_sampled(&estimation, cfg.samples, cfg.seed, &base.features)?
    };

    let report = pipeline::grid_search(&estimation, &scalers, &base, &cfg.grid, cfg.folds, cfg.seed)?;
    let best = report.best();
    let mut csv = String::from("c,epsilon,mean_msd,converged\n");
    for e in &report.entries {
        writeln!(
            csv,
            "{:.6},{:.6},{:.6},{}",
            e.c, e.epsilon, e.cv.mean_msd, e.cv.all_converged
        )
        .unwrap();
    }

    let mut config = base;
    config.svr.c = best.c;
    config.svr.epsilon = best.epsilon;
    let (bundle, summary) = pipeline::train_bundle(&estimation, &scalers, &config, cfg.seed)?;
    bundle.save(&cfg.bundle)?;
    let cv_path = cfg.out.clone().unwrap_or_else(|| cfg.bundle.join("cv_report.csv"));
    emit(Some(&cv_path), &csv)?;

    println!(
        "selected C={} epsilon={} (CV MSD {:.6}); bundle written to {}",
        best.c,
        best.epsilon,
        best.cv.mean_msd,
        cfg.bundle.display()
    );
    if !summary.all_converged() {
        let blocks: Vec<String> = Block::all()
            .filter(|b| !summary.converged[b.index() - 1])
            .map(|b| b.to_string())
            .collect();
        return Err(CliError::Convergence(format!(
            "solver hit its iteration budget for block(s) {}",
            blocks.join(",")
        )));
    }
    Ok(())
}

/// Prediction CSV: inputs echoed, then `B1..B5`, then `SqDev1..SqDev5` when
/// every input row is labeled.
pub fn predictions_csv(bundle: &ModelBundle, records: &[ProblemRecord]) -> Result<String, CliError> {
    let labeled = !records.is_empty() && records.iter().all(|r| r.observed.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = vec![ID_COLUMN.to_string()];
    header.extend(PROBLEM_COLUMNS.iter().map(|c| c.to_string()));
    header.extend(B_COLUMNS.iter().map(|c| c.to_string()));
    if labeled {
        header.extend((1..=Block::COUNT).map(|i| format!("SqDev{i}")));
    }
    w.write_record(&header).expect("in-memory write");
    for r in records {
        let pred = pipeline::predict_problem(bundle, &r.problem)?;
        let mut row: Vec<String> = vec![r.id.clone()];
        row.extend(data::problem_cells(&r.problem));
        row.extend(pred.b_rates.iter().map(|b| format!("{b:.6}")));
        if let (true, Some(obs)) = (labeled, r.observed) {
            row.extend(
                obs.iter()
                    .zip(&pred.b_rates)
                    .map(|(o, p)| format!("{:.6}", (o - p).powi(2))),
            );
        }
        w.write_record(&row).expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv"))
}

fn load_bundle(cfg: &RunConfig) -> Result<ModelBundle, CliError> {
    Ok(ModelBundle::load(&cfg.bundle)?)
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<(), CliError> {
    let records = data::read_problems(data_path(cfg)?)?;
    let bundle = load_bundle(cfg)?;
    let text = predictions_csv(&bundle, &records)?;
    emit(cfg.out.as_deref(), &text)
}

fn load_checks(cfg: &RunConfig) -> Result<Vec<AnomalyCheck>, CliError> {
    match &cfg.checks {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            evaluation::parse_checks(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        }
        None => Ok(evaluation::default_checks()),
    }
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let problems = data::read_labeled(data_path(cfg)?)?;
    let bundle = load_bundle(cfg)?;
    let report = evaluation::evaluate(&bundle, &problems)?;
    for block in Block::all() {
        println!("block {block} MSD {:.6}", report.block_msd[block.index() - 1]);
    }
    println!("overall MSD {:.6}", report.overall);
    if let Some(out) = &cfg.out {
        emit(Some(out), &report.to_csv())?;
    }
    if cfg.checks.is_some() {
        let checks = load_checks(cfg)?;
        print!("{}", evaluation::run_anomaly_suite(&bundle, &checks)?.to_text());
    }
    Ok(())
}

pub fn cmd_check(cfg: &RunConfig) -> Result<(), CliError> {
    let bundle = load_bundle(cfg)?;
    let checks = load_checks(cfg)?;
    let report = evaluation::run_anomaly_suite(&bundle, &checks)?;
    emit(cfg.out.as_deref(), &report.to_text())
}

pub fn cmd_sample(cfg: &RunConfig, count: usize, synthetic_labels: bool) -> Result<(), CliError> {
    let records: Vec<ProblemRecord> = if synthetic_labels {
        synthetic::synthetic_dataset(count, cfg.seed, &cfg.pipeline().features)
            .into_iter()
            .map(|lp| ProblemRecord {
                id: lp.id,
                problem: lp.problem,
                observed: Some(lp.observed),
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        (0..count)
            .map(|k| ProblemRecord {
                id: format!("s{}", k + 1),
                problem: sample_problem(&mut rng),
                observed: None,
            })
            .collect()
    };
    emit(cfg.out.as_deref(), &data::problems_to_csv(&records))
}
