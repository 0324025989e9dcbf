//! Monte Carlo batches over `(n, epsilon)` grids.
//!
//! Run `j` of cell `i` draws from `RngStream::for_run(masterSeed, i, j)`, and
//! results are merged in index order, so a report depends only on its spec.

mod io;
mod stats;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{purpose, RngStream, SimConfig};
use crate::params::{ceil_log2, ProtocolConstants};
use crate::protocols::{
    random_initial_set, run_baseline_forward, run_baseline_silent_wait, run_broadcast,
    run_desynchronized_with, run_majority_consensus, ClockConfiguration, DepthRow, DesyncOptions,
    Outcome, Stage2Shift,
};

pub use io::{load_report, load_spec, save_report, save_spec, write_csv, CSV_HEADER};
pub use stats::{ols_fit, wilson_interval, ScalingFit, Z95};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "FLIPSIM_THREADS";
/// Correct fraction counted as a relaxed success.
pub const RELAXED_THRESHOLD: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Broadcast,
    Consensus,
    Desync,
    BaselineForward,
    BaselineSilent,
}

/// Where desynchronised runs get their clocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ClockSource {
    /// Uniform offsets in `[0, 2 ceil(log2 n))`.
    #[default]
    Random,
    /// Offsets produced by the activation preamble.
    Preamble,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub protocol: Protocol,
    pub n_grid: Vec<usize>,
    pub epsilon_grid: Vec<f64>,
    pub runs_per_cell: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub constants: ProtocolConstants,
    /// Consensus: bias of the initial set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_bias: Option<f64>,
    /// Consensus: size of the initial set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_set_size: Option<usize>,
    /// Baselines: round cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rounds: Option<u64>,
    /// Silent-wait baseline: messages needed before sending.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_source: Option<ClockSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_shift: Option<Stage2Shift>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(
        protocol: Protocol,
        n_grid: Vec<usize>,
        epsilon_grid: Vec<f64>,
        runs_per_cell: u64,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            protocol,
            n_grid,
            epsilon_grid,
            runs_per_cell,
            master_seed: 0,
            constants: ProtocolConstants::default(),
            initial_bias: None,
            initial_set_size: None,
            max_rounds: None,
            threshold: None,
            clock_source: None,
            stage2_shift: None,
            output_path: None,
        }
    }

    /// Collects every violated field.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            problems.push(format!(
                "schemaVersion: expected {SCHEMA_VERSION}, found {}",
                self.schema_version
            ));
        }
        if self.runs_per_cell == 0 {
            problems.push("runsPerCell: must be at least 1".into());
        }
        if self.n_grid.is_empty() {
            problems.push("nGrid: must not be empty".into());
        }
        for &n in &self.n_grid {
            if n < 2 || n > u32::MAX as usize {
                problems.push(format!("nGrid: agent count {n} outside [2, 2^32)"));
            }
        }
        if self.epsilon_grid.is_empty() {
            problems.push("epsilonGrid: must not be empty".into());
        }
        for &e in &self.epsilon_grid {
            if !(e.is_finite() && e > 0.0 && e <= 0.5) {
                problems.push(format!("epsilonGrid: {e} outside (0, 1/2]"));
            }
        }
        if let Err(Error::Validation(v)) = self.constants.validate() {
            problems.extend(v.into_iter().map(|p| format!("constants: {p}")));
        }
        let consensus = self.protocol == Protocol::Consensus;
        match (consensus, self.initial_bias, self.initial_set_size) {
            (true, None, _) => problems.push("initialBias: required for consensus".into()),
            (true, _, None) => problems.push("initialSetSize: required for consensus".into()),
            (false, Some(_), _) => problems.push("initialBias: only valid for consensus".into()),
            (false, _, Some(_)) => problems.push("initialSetSize: only valid for consensus".into()),
            _ => {}
        }
        if let Some(b) = self.initial_bias {
            if !(-0.5..=0.5).contains(&b) {
                problems.push(format!("initialBias: {b} outside [-1/2, 1/2]"));
            }
        }
        if let Some(size) = self.initial_set_size {
            if size == 0 {
                problems.push("initialSetSize: must be positive".into());
            }
            if let Some(&n) = self.n_grid.iter().find(|&&n| size > n) {
                problems.push(format!("initialSetSize: {size} exceeds n={n}"));
            }
        }
        let baseline = matches!(
            self.protocol,
            Protocol::BaselineForward | Protocol::BaselineSilent
        );
        if self.max_rounds.is_some() && !baseline {
            problems.push("maxRounds: only valid for baselines".into());
        }
        if self.max_rounds == Some(0) {
            problems.push("maxRounds: must be positive".into());
        }
        match (self.protocol == Protocol::BaselineSilent, self.threshold) {
            (true, Some(0)) => problems.push("threshold: must be at least 1".into()),
            (false, Some(_)) => problems.push("threshold: only valid for baseline-silent".into()),
            _ => {}
        }
        let desync = self.protocol == Protocol::Desync;
        if !desync && self.clock_source.is_some() {
            problems.push("clockSource: only valid for desync".into());
        }
        if !desync && self.stage2_shift.is_some() {
            problems.push("stage2Shift: only valid for desync".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// `(n, epsilon)` in report order: `n` outer, `epsilon` inner.
    pub fn cells(&self) -> Vec<(usize, f64)> {
        self.n_grid
            .iter()
            .flat_map(|&n| self.epsilon_grid.iter().map(move |&e| (n, e)))
            .collect()
    }

    fn sim_config(&self, n: usize, epsilon: f64) -> Result<SimConfig> {
        Ok(SimConfig::new(n, epsilon)?
            .with_constants(self.constants)
            .with_seed(self.master_seed))
    }

    /// Round cap for the baselines: generous multiple of the broadcast length scale.
    fn baseline_cap(&self, n: usize, epsilon: f64) -> u64 {
        self.max_rounds.unwrap_or_else(|| {
            let lg = ceil_log2(n) as f64;
            let silent = 20.0 * (n as f64).sqrt();
            (lg / (epsilon * epsilon) * 10.0).max(silent).ceil() as u64 + 100
        })
    }
}

/// Executes run `run` of cell `cell`.
pub fn run_single(spec: &ExperimentSpec, cell: usize, run: u64) -> Result<Outcome> {
    let (n, epsilon) = *spec
        .cells()
        .get(cell)
        .ok_or_else(|| Error::Argument(format!("cell {cell} out of range")))?;
    let config = spec.sim_config(n, epsilon)?;
    let mut rng = RngStream::for_run(spec.master_seed, cell as u64, run);
    match spec.protocol {
        Protocol::Broadcast => run_broadcast(&config, &mut rng),
        Protocol::Consensus => {
            let mut set_rng = rng.fork(purpose::INITIAL_SET);
            let initial = random_initial_set(
                n,
                spec.initial_set_size.unwrap_or(n),
                spec.initial_bias.unwrap_or(0.0),
                config.correct_opinion,
                &mut set_rng,
            )?;
            run_majority_consensus(&config, &initial, &mut rng)
        }
        Protocol::Desync => {
            let options = DesyncOptions {
                stage2_shift: spec.stage2_shift.unwrap_or_default(),
            };
            match spec.clock_source.unwrap_or_default() {
                ClockSource::Random => {
                    let mut clock_rng = rng.fork(purpose::CLOCK_OFFSETS);
                    let clocks = ClockConfiguration::random(n, 2 * ceil_log2(n), &mut clock_rng)?;
                    run_desynchronized_with(&config, Some(&clocks), options, &mut rng)
                }
                ClockSource::Preamble => run_desynchronized_with(&config, None, options, &mut rng),
            }
        }
        Protocol::BaselineForward => {
            run_baseline_forward(&config, spec.baseline_cap(n, epsilon), &mut rng)
        }
        Protocol::BaselineSilent => run_baseline_silent_wait(
            &config,
            spec.threshold.unwrap_or(2),
            spec.baseline_cap(n, epsilon),
            &mut rng,
        ),
    }
}

/// Worker count: `FLIPSIM_THREADS` if set to a positive integer, else all cores.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `f` over `0..count` on the capped pool; output is in index order.
pub fn parallel_map<T, F>(count: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

/// All runs of one cell, in run order.
pub fn run_cell(spec: &ExperimentSpec, cell: usize) -> Result<Vec<Outcome>> {
    parallel_map(spec.runs_per_cell, |run| run_single(spec, cell, run))?
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Stage1Summary {
    pub phase: u32,
    pub mean_new: f64,
    /// Mean over runs with at least one activation in the phase.
    pub mean_bias: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Stage2Summary {
    pub phase_index: u32,
    pub mean_successful_fraction: f64,
    pub mean_correct_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CellReport {
    pub n: usize,
    pub epsilon: f64,
    pub runs: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// Runs ending with at least 99% correct.
    pub relaxed_success_rate: f64,
    /// Zero-bias consensus only: runs in which the nominal correct opinion ends
    /// with a strict majority. `successRate` then counts unanimity on either opinion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetric_outcome_rate: Option<f64>,
    pub mean_rounds: f64,
    pub mean_messages: f64,
    pub mean_correct_fraction: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage1: Vec<Stage1Summary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage2: Vec<Stage2Summary>,
    /// Forward baseline: depth table pooled over runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub depth_table: Vec<DepthRow>,
    /// Silent-wait baseline: median first-threshold round over runs that reached it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_first_threshold_round: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub constants_used: ProtocolConstants,
    pub spec_echo: ExperimentSpec,
    pub per_cell: Vec<CellReport>,
    #[serde(default)]
    pub scaling_fit: Option<ScalingFit>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

/// Aggregates the outcomes of one cell.
pub fn summarize_cell(
    spec: &ExperimentSpec,
    n: usize,
    epsilon: f64,
    outcomes: &[Outcome],
) -> CellReport {
    let runs = outcomes.len() as u64;
    let symmetric = spec.protocol == Protocol::Consensus && spec.initial_bias == Some(0.0);
    let successes = outcomes
        .iter()
        .filter(|o| match spec.protocol {
            Protocol::BaselineSilent => o.first_threshold_round.is_some(),
            _ if symmetric => o.unanimous().is_some(),
            _ => o.is_success(),
        })
        .count() as u64;
    let (wilson_lo, wilson_hi) = wilson_interval(successes, runs, Z95);
    let symmetric_outcome_rate = symmetric
        .then(|| outcomes.iter().filter(|o| o.correct_fraction > 0.5).count() as f64 / runs as f64);

    let phase_count = outcomes
        .iter()
        .filter_map(|o| o.stage1.as_ref())
        .map(|s| s.per_phase.len())
        .max()
        .unwrap_or(0);
    let stage1 = (0..phase_count)
        .map(|i| {
            let rows: Vec<_> = outcomes
                .iter()
                .filter_map(|o| o.stage1.as_ref()?.per_phase.get(i))
                .collect();
            Stage1Summary {
                phase: rows.first().map_or(i as u32, |r| r.phase),
                mean_new: mean(rows.iter().map(|r| r.y_new as f64)),
                mean_bias: {
                    let b: Vec<f64> = rows.iter().filter_map(|r| r.bias).collect();
                    (!b.is_empty()).then(|| mean(b.into_iter()))
                },
            }
        })
        .collect();
    let stage2_count = outcomes.iter().map(|o| o.stage2.len()).max().unwrap_or(0);
    let stage2 = (0..stage2_count)
        .map(|i| {
            let rows: Vec<_> = outcomes.iter().filter_map(|o| o.stage2.get(i)).collect();
            Stage2Summary {
                phase_index: rows.first().map_or(i as u32 + 1, |r| r.phase_index),
                mean_successful_fraction: mean(
                    rows.iter().map(|r| r.successful_count as f64 / n as f64),
                ),
                mean_correct_fraction: mean(rows.iter().map(|r| r.correct_fraction)),
            }
        })
        .collect();

    let mut depth_table: Vec<DepthRow> = Vec::new();
    for o in outcomes {
        for row in &o.depth_table {
            let idx = row.depth as usize - 1;
            while depth_table.len() <= idx {
                depth_table.push(DepthRow {
                    depth: depth_table.len() as u32 + 1,
                    agents: 0,
                    correct: 0,
                });
            }
            depth_table[idx].agents += row.agents;
            depth_table[idx].correct += row.correct;
        }
    }

    let mut firsts: Vec<u64> = outcomes
        .iter()
        .filter_map(|o| o.first_threshold_round)
        .collect();
    firsts.sort_unstable();
    let median_first_threshold_round = (!firsts.is_empty()).then(|| {
        let m = firsts.len() / 2;
        if firsts.len() % 2 == 1 {
            firsts[m] as f64
        } else {
            (firsts[m - 1] + firsts[m]) as f64 / 2.0
        }
    });

    CellReport {
        n,
        epsilon,
        runs,
        successes,
        success_rate: successes as f64 / runs as f64,
        wilson_lo,
        wilson_hi,
        relaxed_success_rate: outcomes
            .iter()
            .filter(|o| o.correct_fraction >= RELAXED_THRESHOLD)
            .count() as f64
            / runs as f64,
        symmetric_outcome_rate,
        mean_rounds: mean(outcomes.iter().map(|o| o.rounds_used as f64)),
        mean_messages: mean(outcomes.iter().map(|o| o.messages_sent as f64)),
        mean_correct_fraction: mean(outcomes.iter().map(|o| o.correct_fraction)),
        stage1,
        stage2,
        depth_table,
        median_first_threshold_round,
    }
}

/// Fits mean rounds on `(1/eps^2) log2 n`, plus `log2(n)^2` for desync.
pub fn scaling_fit(protocol: Protocol, cells: &[CellReport]) -> Option<ScalingFit> {
    let x: Vec<f64> = cells
        .iter()
        .map(|c| (c.n as f64).log2() / (c.epsilon * c.epsilon))
        .collect();
    let y: Vec<f64> = cells.iter().map(|c| c.mean_rounds).collect();
    if protocol == Protocol::Desync {
        let sq: Vec<f64> = cells.iter().map(|c| (c.n as f64).log2().powi(2)).collect();
        ols_fit(&["log2(n)/eps^2", "log2(n)^2"], &[x, sq], &y)
    } else {
        ols_fit(&["log2(n)/eps^2"], &[x], &y)
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let cells = spec.cells();
    let mut per_cell = Vec::with_capacity(cells.len());
    for (i, &(n, e)) in cells.iter().enumerate() {
        let outcomes = run_cell(spec, i)?;
        per_cell.push(summarize_cell(spec, n, e, &outcomes));
    }
    let scaling_fit = match spec.protocol {
        Protocol::Broadcast | Protocol::Consensus | Protocol::Desync => {
            scaling_fit(spec.protocol, &per_cell)
        }
        _ => None,
    };
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        constants_used: spec.constants,
        spec_echo: spec.clone(),
        per_cell,
        scaling_fit,
    })
}
