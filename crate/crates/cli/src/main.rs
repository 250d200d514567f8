use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairlabel::audit;
use fairlabel::config::{Config, OUTPUT_DIR_ENV};
use fairlabel::dataset;
use fairlabel::error::Error;
use fairlabel::labeler;
use fairlabel::output::{self, RunRecord};
use fairlabel::selftest;
use log::warn;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "fairlabel", version, about = "Distance-based labeling of synthetic images with a bias audit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label synthetic images from a real (path,label) and a synthetic (path) manifest.
    Label(Box<LabelArgs>),
    /// Exact binomial sign test on two class counts.
    Audit {
        count_a: u64,
        count_b: u64,
        #[arg(long, default_value_t = audit::DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Args)]
struct LabelArgs {
    /// CSV with header `path,label`.
    #[arg(required_unless_present = "replay")]
    real_manifest: Option<PathBuf>,
    /// CSV with header `path`.
    #[arg(required_unless_present = "replay")]
    synthetic_manifest: Option<PathBuf>,
    /// Repeat a previous run from its run.json.
    #[arg(long, conflicts_with_all = ["real_manifest", "synthetic_manifest", "config"])]
    replay: Option<PathBuf>,
    /// Flat `key = value` config file; flags override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    bins: Option<String>,
    /// ridge_logistic or ridge_ls.
    #[arg(long)]
    model: Option<String>,
    /// `auto` or a fixed nonnegative value.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    #[arg(long)]
    grid_size: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// negative_positive or negative_reference.
    #[arg(long)]
    sign_convention: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, short, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
    /// `auto` or a worker count.
    #[arg(long)]
    parallelism: Option<String>,
    #[arg(long)]
    standardize: bool,
    /// Skip writing distances.csv.
    #[arg(long)]
    no_distances: bool,
    #[arg(long)]
    attribute: Option<String>,
    /// Name of the class coded 1.
    #[arg(long)]
    positive_class: Option<String>,
    /// Name of the class coded 0.
    #[arg(long)]
    reference_class: Option<String>,
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn exit_for(err: &Error) -> ExitCode {
    fail(if err.is_input_error() { EXIT_USAGE } else { EXIT_FAILURE }, err)
}

fn build_config(args: &LabelArgs) -> Result<Config, Error> {
    let mut cfg = Config::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            context: format!("reading {}", path.display()),
            source,
        })?;
        cfg.apply_text(&text)?;
    }
    let flags = [
        ("bins", &args.bins),
        ("model", &args.model),
        ("lambda", &args.lambda),
        ("folds", &args.folds),
        ("grid_size", &args.grid_size),
        ("alpha", &args.alpha),
        ("sign_convention", &args.sign_convention),
        ("seed", &args.seed),
        ("parallelism", &args.parallelism),
        ("attribute", &args.attribute),
        ("positive_class", &args.positive_class),
        ("reference_class", &args.reference_class),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if args.standardize {
        cfg.standardize = true;
    }
    if args.no_distances {
        cfg.write_distances = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_label(config: &Config, real: &Path, synthetic: &Path) -> Result<(), Error> {
    let manifest = dataset::load_manifest(real, synthetic, config.coding())?;
    let run = labeler::run_pipeline(&manifest, config)?;
    let record = RunRecord::capture(config, real, synthetic, &manifest)?;
    output::write_reports(&run, config)?;
    record.write(&config.output_dir)?;
    let r = &run.report;
    println!(
        "{} {}: {}, {} {}: {}, undetermined {}; lambda {}; sign test p = {:.4} ({:?}); CV AUC {:.3}",
        r.attribute,
        r.counts[0].class,
        r.counts[0].count,
        r.attribute,
        r.counts[1].class,
        r.counts[1].count,
        r.undetermined,
        r.lambda_used,
        run.audit.p_two_tailed,
        run.audit.verdict,
        run.roc.auc
    );
    println!("reports written to {}", config.output_dir.display());
    Ok(())
}

fn cmd_label(args: LabelArgs) -> ExitCode {
    if let Some(replay) = &args.replay {
        let record = match std::fs::read_to_string(replay)
            .map_err(|source| Error::Io {
                context: format!("reading {}", replay.display()),
                source,
            })
            .and_then(|t| RunRecord::from_json(&t))
        {
            Ok(r) => r,
            Err(e) => return fail(EXIT_USAGE, e),
        };
        let mut config = record.config.clone();
        if let Some(dir) = &args.output_dir {
            config.output_dir = dir.clone();
        }
        if let Ok(m) = dataset::load_manifest(&record.real_manifest, &record.synthetic_manifest, config.coding()) {
            match record.stale_inputs(&m) {
                Ok(stale) if !stale.is_empty() => warn!("inputs changed since the recorded run: {}", stale.join(", ")),
                _ => {}
            }
        }
        return match run_label(&config, &record.real_manifest, &record.synthetic_manifest) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => exit_for(&e),
        };
    }
    let config = match build_config(&args) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let (Some(real), Some(synthetic)) = (&args.real_manifest, &args.synthetic_manifest) else {
        return fail(EXIT_USAGE, "both manifests are required");
    };
    match run_label(&config, real, synthetic) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => exit_for(&e),
    }
}

fn cmd_audit(count_a: u64, count_b: u64, alpha: f64) -> ExitCode {
    match audit::sign_test_at(count_a, count_b, alpha) {
        Ok(result) => {
            println!("{}", serde_json::to_string_pretty(&result).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_USAGE, e),
    }
}

fn selftest_status(solvers: &selftest::Solvers) -> u8 {
    let outcomes = selftest::run_checks(solvers);
    for c in &outcomes {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if outcomes.iter().all(|c| c.passed) {
        0
    } else {
        EXIT_FAILURE
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Label(args) => cmd_label(*args),
        Command::Audit { count_a, count_b, alpha } => cmd_audit(count_a, count_b, alpha),
        Command::Selftest => ExitCode::from(selftest_status(&selftest::Solvers::default())),
    }
}
