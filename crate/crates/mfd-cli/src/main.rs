//! `mfd`: generate skewed synthetic data, train teachers, distill students
//! with the fairness-aware MMD objectives, sweep the data skew, verify the
//! estimator's inequalities and gradients, and render comparison reports.
//!
//! Every command is driven by one JSON config document (`--config`); flags
//! override config keys, which override built-in defaults. All artifacts are
//! reproducible byte for byte from config plus seed; wall-clock timestamps
//! appear only in the `run.log` sidecar.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use mfd_core::experiment::{
    self, ExperimentConfig, MethodSection, ResolvedMethod, SweepRow,
};
use mfd_core::lemmas::{run_verification, VerifyConfig};
use mfd_core::model::ModelCheckpoint;
use mfd_core::objectives::Method;
use mfd_core::report::ComparisonReport;
use mfd_core::trainer::evaluate;

const ALL_METHODS: [Method; 6] = [
    Method::Ce,
    Method::Mfd,
    Method::MfdK,
    Method::MfdF,
    Method::Hkd,
    Method::Fitnet,
];

fn parse_method(s: &str) -> Result<Method, String> {
    ALL_METHODS
        .into_iter()
        .find(|m| m.tag() == s)
        .ok_or_else(|| {
            let names: Vec<&str> = ALL_METHODS.iter().map(|m| m.tag()).collect();
            format!("unknown method {s:?}; expected one of {}", names.join(", "))
        })
}

#[derive(Parser)]
#[command(
    name = "mfd",
    version,
    about = "Fairness-aware feature distillation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed override; drives data generation and training.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the skewed train set and the balanced test set.
    GenData(CommonArgs),
    /// Trains one cross-entropy teacher per seed.
    TrainTeacher(CommonArgs),
    /// Trains students for the configured method matrix.
    Distill {
        #[command(flatten)]
        common: CommonArgs,
        /// Teacher checkpoint; required by teacher-based methods.
        #[arg(long)]
        teacher: Option<PathBuf>,
        /// Single method to run instead of the config's matrix.
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        /// Regularizer weight override.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Evaluates a checkpoint on the balanced test set.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint to score.
        checkpoint: PathBuf,
    },
    /// Teacher and student metrics as a function of teacher-data skew.
    SweepSkew {
        #[command(flatten)]
        common: CommonArgs,
        /// Skews to sweep, comma separated, each in [0.5, 1.0].
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95])]
        skews: Vec<f64>,
        /// Student method.
        #[arg(long, value_parser = parse_method, default_value = "mfd")]
        method: Method,
        /// Regularizer weight override for the student.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Runs the randomized inequality trials and the gradient battery.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Randomized trials per inequality.
        #[arg(long)]
        trials: Option<usize>,
        /// Instances per gradient check.
        #[arg(long)]
        grad_instances: Option<usize>,
    },
    /// Renders the comparison table from written summaries.
    Report(CommonArgs),
}

enum CliError {
    Usage(String),
    Run(mfd_core::Error),
}

impl From<mfd_core::Error> for CliError {
    fn from(e: mfd_core::Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(mfd_core::Error::from(e))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::GenData(common) => cmd_gen_data(&load_config(&common)?),
        Command::TrainTeacher(common) => cmd_train_teacher(&load_config(&common)?),
        Command::Distill { common, teacher, method, lambda } => {
            cmd_distill(&load_config(&common)?, teacher.as_deref(), method, lambda)
        }
        Command::Eval { common, checkpoint } => cmd_eval(&load_config(&common)?, &checkpoint),
        Command::SweepSkew { common, skews, method, lambda } => {
            cmd_sweep_skew(&load_config(&common)?, &skews, method, lambda)
        }
        Command::Verify { common, trials, grad_instances } => {
            cmd_verify(&common, trials, grad_instances)
        }
        Command::Report(common) => cmd_report(&load_config(&common)?),
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

/// Appends one timestamped line to the sidecar log. This is the only output
/// that may differ between identical runs.
fn log_run(dir: &Path, line: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = fs::read_to_string(dir.join("run.log")).unwrap_or_default();
    text.push_str(&format!("{ts} {line}\n"));
    fs::write(dir.join("run.log"), text)?;
    Ok(())
}

fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<ExitCode, CliError> {
    let train = cfg.train_dataset()?;
    let test = cfg.test_dataset()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    train.save_binary(&dir.join("train.bin"))?;
    train.save_csv(&dir.join("train.csv"))?;
    test.save_binary(&dir.join("test.bin"))?;
    test.save_csv(&dir.join("test.csv"))?;

    println!("train counts per (group, class):");
    for ((a, y), idx) in train.cell_indices() {
        println!("  group={a} class={y} n={}", idx.len());
    }
    println!("test rows: {}", test.len());
    println!("wrote {}", dir.join("train.bin").display());
    println!("wrote {}", dir.join("test.bin").display());
    log_run(dir, "gen-data")?;
    Ok(ExitCode::SUCCESS)
}

fn print_summary(summary: &mfd_core::report::MethodSummary) {
    for i in 0..summary.seeds.len() {
        println!(
            "{} seed {}: accuracy {:.2}% deo_a {:.2}% deo_m {:.2}%",
            summary.tag, summary.seeds[i], summary.accuracy[i], summary.deo_a[i], summary.deo_m[i]
        );
    }
}

fn cmd_train_teacher(cfg: &ExperimentConfig) -> Result<ExitCode, CliError> {
    let train_ds = cfg.train_dataset()?;
    let test_ds = cfg.test_dataset()?;
    let summary = experiment::run_method(
        cfg,
        &ResolvedMethod::teacher(),
        &train_ds,
        &test_ds,
        |_| None,
    )?;
    print_summary(&summary);
    println!("wrote {}", experiment::summary_path(&cfg.output_dir, "teacher").display());
    log_run(&cfg.output_dir, "train-teacher")?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_distill(
    cfg: &ExperimentConfig,
    teacher_path: Option<&Path>,
    method: Option<Method>,
    lambda: Option<f64>,
) -> Result<ExitCode, CliError> {
    let mut scoped = cfg.clone();
    match method {
        Some(m) => {
            let mut section = MethodSection::for_method(m);
            if let Some(l) = lambda {
                section.lambda = l;
            }
            scoped.methods = vec![section];
        }
        None => {
            if let Some(l) = lambda {
                for section in &mut scoped.methods {
                    section.lambda = l;
                }
            }
        }
    }
    if scoped.methods.is_empty() {
        return Err(CliError::Usage(
            "no methods: configure a method matrix or pass --method".into(),
        ));
    }
    let resolved = scoped.resolved_methods()?;
    let teacher: Option<ModelCheckpoint> = match teacher_path {
        Some(p) => Some(ModelCheckpoint::load(p)?),
        None => None,
    };
    if teacher.is_none() {
        if let Some(rm) = resolved.iter().find(|rm| rm.objective.method.requires_teacher()) {
            return Err(CliError::Usage(format!(
                "method {} requires --teacher CHECKPOINT",
                rm.tag
            )));
        }
    }

    let train_ds = scoped.train_dataset()?;
    let test_ds = scoped.test_dataset()?;
    for rm in &resolved {
        let needs = rm.objective.method.requires_teacher();
        let summary = experiment::run_method(&scoped, rm, &train_ds, &test_ds, |_| {
            if needs { teacher.as_ref() } else { None }
        })?;
        print_summary(&summary);
    }
    log_run(&scoped.output_dir, "distill")?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<ExitCode, CliError> {
    let ckpt = ModelCheckpoint::load(checkpoint)?;
    let test_ds = cfg.test_dataset()?;
    let (acc, rep) = evaluate(&ckpt, &test_ds)?;
    println!(
        "accuracy {:.2}% deo_a {:.2}% deo_m {:.2}%",
        100.0 * acc,
        100.0 * rep.deo_a,
        100.0 * rep.deo_m
    );
    let stem = checkpoint
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint");
    fs::create_dir_all(&cfg.output_dir)?;
    let out = cfg.output_dir.join(format!("eval_{stem}.json"));
    let json = serde_json::to_string_pretty(&rep)
        .map_err(|e| CliError::Run(mfd_core::Error::Format(e.to_string())))?;
    fs::write(&out, json)?;
    println!("wrote {}", out.display());
    log_run(&cfg.output_dir, "eval")?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep_skew(
    cfg: &ExperimentConfig,
    skews: &[f64],
    method: Method,
    lambda: Option<f64>,
) -> Result<ExitCode, CliError> {
    for s in skews {
        if !(0.5..=1.0).contains(s) {
            return Err(CliError::Usage(format!("--skews value {s} outside [0.5, 1.0]")));
        }
    }
    let mut section = MethodSection::for_method(method);
    if let Some(l) = lambda {
        section.lambda = l;
    }
    let student = ResolvedMethod {
        tag: method.tag().to_string(),
        objective: section.objective(),
        sampler: section.sampler(),
    };
    let rows: Vec<SweepRow> = experiment::sweep_skew(cfg, skews, &student)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("sweep.csv");
    experiment::save_sweep_csv(&rows, &path)?;
    println!("{} rows over {} skews", rows.len(), skews.len());
    println!("wrote {}", path.display());
    log_run(&cfg.output_dir, "sweep-skew")?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    common: &CommonArgs,
    trials: Option<usize>,
    grad_instances: Option<usize>,
) -> Result<ExitCode, CliError> {
    let mut vcfg = VerifyConfig::default();
    if let Some(t) = trials {
        vcfg.trials = t;
    }
    if let Some(g) = grad_instances {
        vcfg.grad_instances = g;
    }
    if let Some(s) = common.seed {
        vcfg.seed = s;
    }
    let report = run_verification(&vcfg)?;
    println!(
        "inequality 1: {} trials, min slack {:.3e}, violations {}",
        report.lemma1.trials, report.lemma1.min_slack, report.lemma1.violations
    );
    println!(
        "inequality 2: {} trials, min slack {:.3e}, violations {}",
        report.lemma2.trials, report.lemma2.min_slack, report.lemma2.violations
    );
    for check in &report.gradients.checks {
        println!(
            "grad {}: {} instances, max rel err {:.3e}, {}",
            check.name,
            check.instances,
            check.max_rel_err,
            if check.pass { "ok" } else { "FAIL" }
        );
    }
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    fs::create_dir_all(&dir)?;
    let path = dir.join("verify.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Run(mfd_core::Error::Format(e.to_string())))?;
    fs::write(&path, json)?;
    println!("wrote {}", path.display());
    log_run(&dir, "verify")?;
    if report.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("verification failed");
        Ok(ExitCode::from(1))
    }
}

fn cmd_report(cfg: &ExperimentConfig) -> Result<ExitCode, CliError> {
    let dir = &cfg.output_dir;
    let summaries = experiment::read_summaries(dir)?;
    let teacher = summaries
        .iter()
        .find(|s| s.tag == "teacher")
        .cloned()
        .ok_or_else(|| {
            CliError::Usage(format!(
                "no teacher baseline: {} has no summary_teacher.json",
                dir.display()
            ))
        })?;
    let methods: Vec<_> = summaries.into_iter().filter(|s| s.tag != "teacher").collect();
    let report = ComparisonReport::build(&teacher, &methods)?;
    let text = report.render_text();
    print!("{text}");
    fs::write(dir.join("report.txt"), &text)?;
    fs::write(dir.join("report.csv"), report.to_csv())?;
    println!("wrote {}", dir.join("report.txt").display());
    println!("wrote {}", dir.join("report.csv").display());
    log_run(dir, "report")?;
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_parsing_accepts_all_tags() {
        for m in ALL_METHODS {
            assert_eq!(parse_method(m.tag()).unwrap(), m);
        }
        assert!(parse_method("gradient_descent").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
