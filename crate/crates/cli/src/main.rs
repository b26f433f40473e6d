//! Command-line front end: seeded replication runs from TOML configs plus
//! the sampler/MGR/partition/diagnosis self-tests.
//!
//! Exit codes: 0 when the requested work succeeded and every check passed;
//! 1 when a check failed or a run hit a module error; 2 for usage problems
//! (unknown subcommand, missing or malformed config file).

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use contextew::harness::{
    diagnose, load_config, mgr_self_test, run, sample_self_test, worker_count, z_eval,
    CheckReport, HarnessError, RunConfig,
};
use contextew::algorithms::{LearnerSpec, Mode};
use contextew::problem::{Adversary, ContextDist, EnvironmentSpec, ProblemDims};

#[derive(Parser)]
#[command(
    name = "contextew",
    version,
    about = "Simulator for adversarial linear contextual bandits: continuous \
             exponential weights, geometric resampling, and baselines."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run config: one trace CSV per replication plus summary.csv.
    Run {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Sampler self-tests: exact marginals against the quadrature CDF,
    /// exact vs hit-and-run agreement, clip-floor respect.
    SampleTest {
        #[arg(long, default_value_t = 2026)]
        seed: u64,
        /// Exact draws per marginal KS test.
        #[arg(long, default_value_t = 20_000)]
        draws: usize,
    },
    /// MGR self-test: Monte-Carlo mean of Σ̂⁺ against the truncated-series
    /// closed form, and the operator-norm ceiling on every draw.
    MgrTest {
        #[arg(long, default_value_t = 2026)]
        seed: u64,
        /// Independent Σ̂⁺ draws behind the mean.
        #[arg(long, default_value_t = 400)]
        repeats: usize,
    },
    /// Evaluate the partition function Z(c) by partial fractions and by
    /// adaptive quadrature, reporting the relative gap.
    ZEval {
        /// Comma-separated cost vector, e.g. --costs 2,1,0.
        #[arg(long, value_delimiter = ',', required = true)]
        costs: Vec<f64>,
    },
    /// Freeze a round of a reference ContextEW run and verify the ghost
    /// identity and the covariance sandwich on it.
    Diagnose {
        /// Run config supplying the instance; a built-in default otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Round to freeze (clamped to the horizon).
        #[arg(long, default_value_t = 10)]
        round: usize,
        /// Covariance samples for the frozen Σ and Σ̃.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        /// Monte-Carlo replays per side of the ghost identity.
        #[arg(long, default_value_t = 20_000)]
        mc: usize,
    },
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { config, workers } => cmd_run(&config, workers),
        Command::SampleTest { seed, draws } => {
            report_outcome("sample-test", sample_self_test(seed, draws))
        }
        Command::MgrTest { seed, repeats } => {
            report_outcome("mgr-test", mgr_self_test(seed, repeats))
        }
        Command::ZEval { costs } => cmd_z_eval(&costs),
        Command::Diagnose { config, round, samples, mc } => {
            cmd_diagnose(config.as_deref(), round, samples, mc)
        }
    }
}

/// 2 for input problems the user must fix, 1 for runtime failures.
fn exit_code(err: &HarnessError) -> i32 {
    match err {
        HarnessError::Io { .. } | HarnessError::Parse { .. } | HarnessError::Config(_) => 2,
        _ => 1,
    }
}

fn fail(err: HarnessError) -> i32 {
    eprintln!("error: {err}");
    exit_code(&err)
}

fn print_report(report: &CheckReport) {
    for line in &report.lines {
        let tag = if line.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {} — {}", line.name, line.detail);
    }
}

fn report_outcome(name: &str, outcome: Result<CheckReport, HarnessError>) -> i32 {
    match outcome {
        Ok(report) => {
            print_report(&report);
            if report.passed() {
                println!("{name}: all {} checks passed", report.lines.len());
                0
            } else {
                let failed = report.lines.iter().filter(|l| !l.passed).count();
                println!("{name}: {failed} of {} checks FAILED", report.lines.len());
                1
            }
        }
        Err(err) => fail(err),
    }
}

fn cmd_run(config_path: &std::path::Path, workers: Option<usize>) -> i32 {
    let mut config = match load_config(config_path) {
        Ok(config) => config,
        Err(err) => return fail(err),
    };
    if workers.is_some() {
        config.workers = workers;
    }
    println!(
        "mode = {:?}, T = {}, replications = {}, seed = {}, workers = {}",
        config.mode,
        config.dims.horizon,
        config.replications,
        config.seed,
        worker_count(config.workers),
    );
    match run(&config) {
        Ok(summary) => {
            println!(
                "wrote {} replication trace(s) under {}",
                summary.outcomes.len(),
                config.output_dir.display(),
            );
            println!("checkpoint,t,mean_regret,std_regret");
            for stat in &summary.stats {
                println!("{},{},{},{}", stat.label, stat.t, stat.mean, stat.std);
            }
            println!("summary: {}", summary.summary_path.display());
            0
        }
        Err(err) => fail(err),
    }
}

fn cmd_z_eval(costs: &[f64]) -> i32 {
    match z_eval(costs) {
        Ok(report) => {
            println!("costs                  = {costs:?}");
            println!("Z (partial fractions)  = {}", report.z);
            println!("Z (quadrature oracle)  = {}", report.z_quadrature);
            println!("relative gap           = {:.3e}", report.rel_gap);
            if report.passed() {
                println!("[PASS] gap within 1e-6");
                0
            } else {
                println!("[FAIL] gap exceeds 1e-6");
                1
            }
        }
        Err(err) => fail(err),
    }
}

/// Instance used by `diagnose` when no config is supplied: a d = 2, K = 3
/// box-context environment with a fixed adversary.
fn default_diagnose_config() -> RunConfig {
    RunConfig {
        mode: Mode::ContextewSecond,
        seed: 7,
        replications: 1,
        output_dir: PathBuf::from("diagnose-out"),
        workers: Some(1),
        dims: ProblemDims { d: 2, k: 3, horizon: 200, sigma: 1.0, r: 1.0 },
        environment: EnvironmentSpec {
            context: ContextDist::UniformBox { lo: vec![0.1, -0.5], hi: vec![0.7, 0.5] },
            adversary: Adversary::Fixed {
                theta: vec![vec![0.9, 0.2], vec![-0.3, 0.8], vec![0.1, -0.6]],
            },
            nonnegative: false,
        },
        learner: LearnerSpec { s_samples: 64, ..LearnerSpec::default() },
    }
}

fn cmd_diagnose(
    config_path: Option<&std::path::Path>,
    round: usize,
    samples: usize,
    mc: usize,
) -> i32 {
    let config = match config_path {
        Some(path) => match load_config(path) {
            Ok(config) => config,
            Err(err) => return fail(err),
        },
        None => default_diagnose_config(),
    };
    match diagnose(&config, round, samples, mc) {
        Ok(outcome) => {
            println!("frozen round {} of a {:?} reference run", outcome.frozen_round, config.mode);
            print_report(&outcome.report);
            if outcome.report.passed() {
                println!("diagnose: all checks passed");
                0
            } else {
                println!("diagnose: FAILED");
                1
            }
        }
        Err(err) => fail(err),
    }
}
