//! TOML-configured replication runner: builds the environment and learner a
//! config names, drives `replications` independent seeded runs (concurrently
//! up to a worker budget), writes one trace CSV per replication plus an
//! aggregate summary, and hosts the self-test entry points behind the CLI's
//! `sample-test`, `mgr-test`, `z-eval`, and `diagnose` subcommands.
//!
//! Determinism: every draw in a run flows from counter-based streams keyed
//! by (master seed, replication, round, purpose), so the files a config
//! produces are byte-identical across reruns and across worker counts.
//!
//! Trace CSV schema (one file per replication, header verbatim):
//!
//! ```text
//! t,action,loss,comparator_loss,cum_loss,cum_regret,eta,rejections,flag_forced_accept,flag_mgr_capped
//! ```
//!
//! Actions are 1-based; flags are 0/1; floats print in Rust's shortest
//! round-trip form. The summary CSV reports mean and sample standard
//! deviation of cumulative regret at the T/4, T/2, and T checkpoints.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{
    build_learner, drive, AlgorithmError, ContextEw, Learner, LearnerSpec, Mode,
};
use crate::covariance::{estimate_sigma, sandwich_check, CovarianceError, TruncationSpec};
use crate::estimators::{ghost_identity_check, EstimatorError, FrozenRound, GhostComparator, GhostReport};
use crate::mgr::{mgr_expected_value, mgr_inverse, mgr_params, symmetric_op_norm, MgrCaps, MgrError};
use crate::oracles::{one_sample_ks, two_sample_ks, MarginalCdfTable, OracleError};
use crate::partition::{z_partial_fraction, z_quadrature, PartitionError};
use crate::problem::{
    stream, ContextDist, Environment, EnvironmentSpec, FinalizedTrace, ProblemDims, ProblemError,
    StreamPurpose, ThetaMatrix,
};
use crate::rates::second_order_eta;
use crate::sampler::{sample_exact, sample_hit_and_run, SamplerConfig, SamplerError};

/// Verbatim header of every trace CSV.
pub const CSV_HEADER: &str =
    "t,action,loss,comparator_loss,cum_loss,cum_regret,eta,rejections,flag_forced_accept,flag_mgr_capped";

/// Environment variable consulted for the default worker count.
pub const WORKERS_ENV_VAR: &str = "CONTEXTEW_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error(transparent)]
    Mgr(#[from] MgrError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// One complete run request: which learner, on which problem, how many
/// seeded replications, and where the CSVs go.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    /// Master seed; replication r uses streams keyed by (seed, r, t, purpose).
    pub seed: u64,
    pub replications: usize,
    pub output_dir: PathBuf,
    /// Worker threads; `None` falls back to CONTEXTEW_WORKERS, then core count.
    #[serde(default)]
    pub workers: Option<usize>,
    pub dims: ProblemDims,
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub learner: LearnerSpec,
}

impl RunConfig {
    /// Checks every module precondition the run would hit, without running.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replications == 0 {
            return Err(HarnessError::Config("replications must be ≥ 1".into()));
        }
        Environment::new(self.dims, self.environment.clone())?;
        let needs_nonnegative =
            matches!(self.mode, Mode::ContextewFirst | Mode::Resampling);
        if needs_nonnegative && !self.environment.nonnegative {
            return Err(HarnessError::Config(format!(
                "mode {:?} requires an environment declared nonnegative = true",
                self.mode
            )));
        }
        // Builds (and drops) a learner to surface spec/dims conflicts early.
        build_learner(
            self.mode,
            self.dims,
            self.environment.context.clone(),
            &self.learner,
            self.seed,
            0,
        )?;
        Ok(())
    }
}

/// Reads and parses a TOML run config.
pub fn load_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    toml::from_str(&text)
        .map_err(|source| HarnessError::Parse { path: path.to_path_buf(), source: Box::new(source) })
}

/// Resolves the worker count: explicit config value, then the
/// CONTEXTEW_WORKERS environment variable, then the machine's core count.
pub fn worker_count(explicit: Option<usize>) -> usize {
    if let Some(w) = explicit {
        if w >= 1 {
            return w;
        }
    }
    if let Ok(raw) = std::env::var(WORKERS_ENV_VAR) {
        if let Ok(w) = raw.trim().parse::<usize>() {
            if w >= 1 {
                return w;
            }
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Regret checkpoints reported by the summary: T/4, T/2, T (floored, ≥ 1).
pub fn checkpoints(horizon: usize) -> [usize; 3] {
    [(horizon / 4).max(1), (horizon / 2).max(1), horizon]
}

/// One replication's outputs.
#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub csv_path: PathBuf,
    /// Cumulative regret at the three checkpoints, in checkpoint order.
    pub regret: [f64; 3],
}

/// Mean/σ of regret at one checkpoint across replications.
#[derive(Debug, Clone)]
pub struct CheckpointStat {
    pub label: &'static str,
    pub t: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator; 0 when n = 1).
    pub std: f64,
}

/// Everything `run` produced, for callers that want numbers, not files.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outcomes: Vec<ReplicationOutcome>,
    pub stats: [CheckpointStat; 3],
    pub summary_path: PathBuf,
    pub workers: usize,
}

/// Executes a config: one CSV per replication plus `summary.csv`, all under
/// `output_dir`. Replications run concurrently up to the worker budget; each
/// is internally sequential and owns its output file.
pub fn run(config: &RunConfig) -> Result<RunSummary, HarnessError> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)
        .map_err(|source| HarnessError::Io { path: config.output_dir.clone(), source })?;
    let workers = worker_count(config.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<ReplicationOutcome> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|rep| run_replication(config, rep))
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;

    let stats = aggregate(config.dims.horizon, &outcomes);
    let summary_path = config.output_dir.join("summary.csv");
    let mut text = String::from("checkpoint,t,mean_regret,std_regret,replications\n");
    for stat in &stats {
        writeln!(
            text,
            "{},{},{},{},{}",
            stat.label,
            stat.t,
            stat.mean,
            stat.std,
            outcomes.len()
        )
        .expect("writing to a String cannot fail");
    }
    fs::write(&summary_path, text)
        .map_err(|source| HarnessError::Io { path: summary_path.clone(), source })?;
    Ok(RunSummary { outcomes, stats, summary_path, workers })
}

fn run_replication(config: &RunConfig, rep: usize) -> Result<ReplicationOutcome, HarnessError> {
    let mut env = Environment::new(config.dims, config.environment.clone())?;
    let mut learner = build_learner(
        config.mode,
        config.dims,
        config.environment.context.clone(),
        &config.learner,
        config.seed,
        rep as u64,
    )?;
    let trace = drive(learner.as_mut(), &mut env, config.seed, rep as u64)?;
    let finalized = trace.finalize();
    let csv_path = config.output_dir.join(format!("rep_{rep:03}.csv"));
    write_trace_csv(&csv_path, &finalized)?;
    let marks = checkpoints(config.dims.horizon);
    Ok(ReplicationOutcome {
        replication: rep,
        csv_path,
        regret: [
            finalized.regret_at(marks[0]),
            finalized.regret_at(marks[1]),
            finalized.regret_at(marks[2]),
        ],
    })
}

/// Writes one finalized trace in the versioned CSV schema.
pub fn write_trace_csv(path: &Path, trace: &FinalizedTrace) -> Result<(), HarnessError> {
    let mut text = String::with_capacity(64 * (trace.rows.len() + 1));
    text.push_str(CSV_HEADER);
    text.push('\n');
    for r in &trace.rows {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.action,
            r.loss,
            r.comparator_loss,
            r.cum_loss,
            r.cum_regret,
            r.eta,
            r.rejections,
            r.flag_forced_accept as u8,
            r.flag_mgr_capped as u8,
        )
        .expect("writing to a String cannot fail");
    }
    fs::write(path, text).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn aggregate(horizon: usize, outcomes: &[ReplicationOutcome]) -> [CheckpointStat; 3] {
    let marks = checkpoints(horizon);
    let labels = ["quarter", "half", "final"];
    let n = outcomes.len() as f64;
    core::array::from_fn(|i| {
        let mean = outcomes.iter().map(|o| o.regret[i]).sum::<f64>() / n;
        let std = if outcomes.len() > 1 {
            (outcomes.iter().map(|o| (o.regret[i] - mean).powi(2)).sum::<f64>() / (n - 1.0))
                .sqrt()
        } else {
            0.0
        };
        CheckpointStat { label: labels[i], t: marks[i], mean, std }
    })
}

// ---------------------------------------------------------------------------
// Self-test entry points (CLI: sample-test, mgr-test, z-eval, diagnose)
// ---------------------------------------------------------------------------

/// One named pass/fail line of a self-test report.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// A bundle of check lines; passes only if every line does.
#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.lines.push(CheckLine { name: name.into(), passed, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }
}

/// Sampler self-test: exact-sampler marginals against the quadrature CDF
/// (KS, p > 0.01) for K ∈ {2, 3, 4}; exact vs hit-and-run two-sample KS;
/// clip-floor respect on the clipped simplex.
pub fn sample_self_test(seed: u64, draws: usize) -> Result<CheckReport, HarnessError> {
    let mut report = CheckReport::default();
    let cfg = SamplerConfig::default();
    for k in [2usize, 3, 4] {
        let mut cost_rng = stream(seed, 0, k as u64, StreamPurpose::Validation);
        let costs: Vec<f64> =
            (0..k).map(|_| 4.0 * rand::Rng::random::<f64>(&mut cost_rng)).collect();
        let mut draw_rng = stream(seed, 1, k as u64, StreamPurpose::Validation);
        let mut samples = Vec::with_capacity(draws);
        for _ in 0..draws {
            samples.push(sample_exact(&costs, &cfg, &mut draw_rng)?.get(0));
        }
        let table = MarginalCdfTable::build(&costs, 0, MarginalCdfTable::DEFAULT_CELLS)?;
        let ks = one_sample_ks(&samples, |v| table.eval(v))?;
        report.push(
            format!("exact marginal KS (K = {k})"),
            ks.p_value > 0.01,
            format!("D = {:.5}, p = {:.4}, n = {draws}", ks.statistic, ks.p_value),
        );
    }

    // Exact vs hit-and-run on the first coordinate at K = 3.
    let costs = [1.7, 0.4, 0.0];
    let n_cross = (draws / 4).clamp(200, 1500);
    let mut exact_rng = stream(seed, 2, 0, StreamPurpose::Validation);
    let mut hr_rng = stream(seed, 2, 1, StreamPurpose::Validation);
    let mut exact_samples = Vec::with_capacity(n_cross);
    let mut hr_samples = Vec::with_capacity(n_cross);
    for _ in 0..n_cross {
        exact_samples.push(sample_exact(&costs, &cfg, &mut exact_rng)?.get(0));
        hr_samples.push(sample_hit_and_run(&costs, &cfg, &mut hr_rng)?.get(0));
    }
    let ks = two_sample_ks(&exact_samples, &hr_samples)?;
    report.push(
        "exact vs hit-and-run KS (K = 3)",
        ks.p_value > 0.01,
        format!("D = {:.5}, p = {:.4}, n = {n_cross} each", ks.statistic, ks.p_value),
    );

    // Clip floor: every coordinate of a clipped draw stays ≥ 1/T.
    let clipped = SamplerConfig { clip_floor: 0.05, ..SamplerConfig::default() };
    let mut clip_rng = stream(seed, 3, 0, StreamPurpose::Validation);
    let mut min_coord = f64::INFINITY;
    for _ in 0..2000 {
        let q = sample_exact(&costs, &clipped, &mut clip_rng)?;
        for &v in q.as_slice() {
            min_coord = min_coord.min(v);
        }
    }
    report.push(
        "clip floor respected (floor = 0.05)",
        min_coord >= 0.05 - 1e-12,
        format!("min coordinate over 2000 draws = {min_coord:.6}"),
    );
    Ok(report)
}

/// MGR self-test: the Monte-Carlo mean of Σ̂⁺ draws matches the closed form
/// Σ⁻¹(I − (I − cΣ)^{N+1}) entrywise within 4·SE, and the deterministic
/// operator-norm ceiling holds on every single draw.
pub fn mgr_self_test(seed: u64, repeats: usize) -> Result<CheckReport, HarnessError> {
    let mut report = CheckReport::default();
    let dims = ProblemDims { d: 2, k: 2, horizon: 100, sigma: 1.0, r: 1.0 };
    let context = ContextDist::UniformBox { lo: vec![0.3, -0.5], hi: vec![0.8, 0.5] };
    let costs = [0.8, 0.1];
    let cfg = SamplerConfig::default();

    let mut sigma_rng = stream(seed, 0, 0, StreamPurpose::SigmaEstimate);
    let sigma = estimate_sigma(
        |r| context.draw(&dims, r),
        |_| costs.to_vec(),
        &cfg,
        20_000,
        None,
        &mut sigma_rng,
    )?
    .cov;

    let params = mgr_params(3.0, &dims, 0.2, 100.0)?
        .with_caps(&MgrCaps { m_cap: 10, pairs_cap: None });
    let bound = params.cov_norm1_bound();
    let d = dims.d;
    let k = dims.k;
    let mut mean = vec![DMatrix::<f64>::zeros(d, d); k];
    let mut m2 = vec![DMatrix::<f64>::zeros(d, d); k];
    let mut norm_violations = 0usize;
    let mut pair_rng = stream(seed, 0, 1, StreamPurpose::MgrPairs);
    for r in 0..repeats {
        let mut pairs = Vec::with_capacity(params.pair_count());
        for _ in 0..params.pair_count() {
            let x = context.draw(&dims, &mut pair_rng);
            let q = sample_exact(&costs, &cfg, &mut pair_rng)?;
            pairs.push((x, q));
        }
        let draw = mgr_inverse(&pairs, &params)?;
        for a in 0..k {
            if symmetric_op_norm(draw.block(a)) > bound * (1.0 + 1e-9) {
                norm_violations += 1;
            }
            // Welford, entrywise.
            let delta = draw.block(a) - &mean[a];
            mean[a] += &delta / (r + 1) as f64;
            let delta2 = draw.block(a) - &mean[a];
            m2[a] += delta.component_mul(&delta2);
        }
    }
    report.push(
        "cov_norm1 ceiling on every draw",
        norm_violations == 0,
        format!("{norm_violations} violations over {repeats} draws (bound {bound:.3})"),
    );

    let expected = mgr_expected_value(&sigma, params.c, params.n)?;
    let mut worst = 0.0f64;
    for a in 0..k {
        for i in 0..d {
            for j in 0..d {
                let se = (m2[a][(i, j)] / ((repeats - 1) as f64 * repeats as f64)).sqrt();
                let gap = (mean[a][(i, j)] - expected.block(a)[(i, j)]).abs();
                worst = worst.max(gap / (4.0 * se + 1e-12));
            }
        }
    }
    report.push(
        "E[Σ̂⁺] matches the truncated-series closed form",
        worst <= 1.0,
        format!("worst entry gap = {worst:.3} × (4·SE), {repeats} draws, N = {}, M = {}", params.n, params.m),
    );
    Ok(report)
}

/// Partition-function evaluation: the partial-fraction value, the quadrature
/// cross-check, and their relative gap.
#[derive(Debug, Clone)]
pub struct ZEvalReport {
    pub z: f64,
    pub z_quadrature: f64,
    pub rel_gap: f64,
}

impl ZEvalReport {
    /// Acceptance threshold shared with the partition tests.
    pub fn passed(&self) -> bool {
        self.rel_gap <= 1e-6
    }
}

/// Evaluates Z(c) by both routes.
pub fn z_eval(costs: &[f64]) -> Result<ZEvalReport, HarnessError> {
    let z = z_partial_fraction(costs)?.z;
    let z_quad = z_quadrature(costs, 1e-10)?;
    Ok(ZEvalReport { z, z_quadrature: z_quad, rel_gap: (z - z_quad).abs() / z_quad })
}

/// Diagnose output: the ghost-identity report, the sandwich margins, and the
/// pass/fail lines derived from them.
#[derive(Debug)]
pub struct DiagnoseReport {
    pub report: CheckReport,
    pub ghost: GhostReport,
    pub sandwich: (f64, f64),
    pub frozen_round: usize,
}

/// Runs a second-order ContextEW learner `freeze_round` rounds into the
/// configured environment, freezes the state, and checks the two identities
/// that certify it: the ghost-sample identity (dual Monte-Carlo confidence
/// intervals must overlap) and the Σ̃-vs-Σ eigenvalue sandwich (margins must
/// stay inside [0.60, 1.50] — an operational band for moderate sample
/// counts, looser than the acceptance suite's pinned interval at S = 10⁵).
pub fn diagnose(
    config: &RunConfig,
    freeze_round: usize,
    s_freeze: usize,
    n_mc: usize,
) -> Result<DiagnoseReport, HarnessError> {
    config.validate()?;
    let dims = config.dims;
    let context = config.environment.context.clone();
    let mut env = Environment::new(dims, config.environment.clone())?;
    let mut learner = ContextEw::new(
        dims,
        context.clone(),
        &config.learner,
        false,
        config.seed,
        0,
    )?;
    let freeze = freeze_round.clamp(1, dims.horizon);
    for t in 1..freeze {
        let mut ctx_rng = stream(config.seed, 0, t as u64, StreamPurpose::Context);
        let x = env.draw_context(&mut ctx_rng);
        let theta_t = env.theta_now(t);
        let arm = learner.act(&x)?;
        env.record_play(arm);
        learner.feed(theta_t.losses(&x)[arm])?;
    }

    // Freeze round `freeze`: schedule η, re-estimate Σ and Σ̃ at s_freeze.
    let eta = second_order_eta(
        learner.rates.v_hat,
        &dims,
        learner.rates.gamma,
        config.learner.g_variant,
    );
    let theta_cum = learner.estimator.cumulative.clone();
    let costs_of = |xp: &DVector<f64>| -> Vec<f64> {
        theta_cum.losses(xp).into_iter().map(|l| eta * l).collect()
    };
    let mut sig_rng = stream(config.seed, 0, freeze as u64, StreamPurpose::SigmaEstimate);
    let sigma = estimate_sigma(
        |r| context.draw(&dims, r),
        &costs_of,
        &config.learner.sampler,
        s_freeze,
        None,
        &mut sig_rng,
    )?
    .cov;
    let mut tilde_rng =
        stream(config.seed, 0, freeze as u64, StreamPurpose::SigmaTruncatedEstimate);
    let sigma_tilde = estimate_sigma(
        |r| context.draw(&dims, r),
        &costs_of,
        &config.learner.sampler,
        s_freeze,
        Some(TruncationSpec {
            sigma: &sigma,
            gamma: learner.rates.gamma,
            max_rejects: config.learner.max_rejects,
        }),
        &mut tilde_rng,
    )?
    .cov;
    let sandwich = sandwich_check(&sigma, &sigma_tilde)?;

    let tilde_inv = sigma_tilde.inverted()?;
    let theta_t = env.theta_now(freeze);
    let optimistic = ThetaMatrix::zeros(dims.k, dims.d);
    let frozen = FrozenRound {
        eta,
        theta_cum: &theta_cum,
        sigma: &sigma,
        sigma_tilde_inv: &tilde_inv,
        optimistic: &optimistic,
        theta_t: &theta_t,
        gamma: learner.rates.gamma,
        max_rejects: config.learner.max_rejects,
        sampler: &config.learner.sampler,
    };
    let mut ghost_rng = stream(config.seed, 0, freeze as u64, StreamPurpose::Ghost);
    let ghost = ghost_identity_check(
        &frozen,
        |r| context.draw(&dims, r),
        GhostComparator::BestArm,
        n_mc,
        &mut ghost_rng,
    )?;

    let mut report = CheckReport::default();
    report.push(
        "ghost identity: 95% CIs overlap",
        ghost.overlap,
        format!(
            "real {:.5} ± {:.5}, ghost {:.5} ± {:.5} (n = {})",
            ghost.real.0, ghost.real.1, ghost.ghost.0, ghost.ghost.1, ghost.n
        ),
    );
    let sandwich_ok = sandwich.0 >= 0.60 && sandwich.1 <= 1.50;
    report.push(
        "eigenvalue sandwich margins in [0.60, 1.50]",
        sandwich_ok,
        format!("margins = ({:.4}, {:.4}) at S = {s_freeze}", sandwich.0, sandwich.1),
    );
    Ok(DiagnoseReport { report, ghost, sandwich, frozen_round: freeze })
}
