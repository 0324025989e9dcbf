//! Stage I / Stage II state machines and the drivers built on them.
//!
//! All drivers share one round loop (see `executor`). The synchronised
//! protocol is the zero-offset case of the clock-shifted one, so
//! [`run_desynchronized`] with all offsets zero reproduces [`run_broadcast`]
//! draw for draw.

mod baselines;
mod desync;
mod events;
mod executor;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Opinion, SimConfig};
use crate::params::{derive_schedule, majority_entry_phase, ScheduleParams};

pub use baselines::{run_baseline_forward, run_baseline_silent_wait};
pub use desync::{
    run_desynchronized, run_desynchronized_observed, run_desynchronized_with, DesyncOptions,
    Stage2Shift,
};
pub use events::{Event, EventLog, EventSink, NoEvents};
pub use executor::World;

use executor::{execute, Plan, Timing};

/// Observables of one stage-I phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PhaseMetrics {
    pub phase: u32,
    /// Activated agents after this phase, including the initially seeded ones.
    pub x_cumulative: usize,
    /// Agents activated during this phase.
    pub y_new: usize,
    /// Of those, how many fixed the correct initial opinion.
    pub z_correct: usize,
    /// `z/y - 1/2`, absent when nobody was activated.
    pub bias: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Stage1Result {
    pub per_phase: Vec<PhaseMetrics>,
    pub all_activated: bool,
    pub rounds_used: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Stage2PhaseRecord {
    /// 1-based.
    pub phase_index: u32,
    pub rounds: u64,
    pub subset_size: usize,
    pub successful_count: usize,
    pub start_correct_fraction: f64,
    pub correct_fraction: f64,
}

/// Correctness of forward-baseline agents at one hop depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DepthRow {
    pub depth: u32,
    pub agents: usize,
    pub correct: usize,
}

impl DepthRow {
    pub fn fraction(&self) -> f64 {
        if self.agents == 0 {
            f64::NAN
        } else {
            self.correct as f64 / self.agents as f64
        }
    }
}

/// Clock bookkeeping of a desynchronised run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClockReport {
    pub d_bound: u64,
    pub max_offset: u64,
    /// Rounds spent in the clock-reset preamble (0 when clocks were supplied).
    pub preamble_rounds: u64,
    /// Set when the preamble left some agent with offset `>= d_bound`.
    pub clock_bound_violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Outcome {
    pub final_opinions: Vec<Option<Opinion>>,
    pub correct_fraction: f64,
    pub rounds_used: u64,
    pub messages_sent: u64,
    pub stage1: Option<Stage1Result>,
    pub stage2: Vec<Stage2PhaseRecord>,
    /// Majority-consensus runs: `(A_correct - A_wrong) / (2|A|)`.
    pub initial_majority_bias: Option<f64>,
    pub entry_phase: Option<u32>,
    pub clock: Option<ClockReport>,
    /// Forward baseline only.
    pub depth_table: Vec<DepthRow>,
    /// Silent-wait baseline only; 1-based round.
    pub first_threshold_round: Option<u64>,
}

impl Outcome {
    fn new(world: &World, correct: Opinion, rounds_used: u64) -> Self {
        Self {
            final_opinions: world.opinions(),
            correct_fraction: world.correct_count(correct) as f64 / world.n() as f64,
            rounds_used,
            messages_sent: world.messages_sent,
            stage1: None,
            stage2: Vec::new(),
            initial_majority_bias: None,
            entry_phase: None,
            clock: None,
            depth_table: Vec::new(),
            first_threshold_round: None,
        }
    }

    /// Every agent holds the correct opinion.
    pub fn is_success(&self) -> bool {
        self.correct_fraction == 1.0
    }

    /// The opinion held by every agent, if there is one.
    pub fn unanimous(&self) -> Option<Opinion> {
        let first = (*self.final_opinions.first()?)?;
        self.final_opinions
            .iter()
            .all(|o| *o == Some(first))
            .then_some(first)
    }
}

/// Per-agent clock offsets in `[0, d_bound)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClockConfiguration {
    pub offsets: Vec<u64>,
    pub d_bound: u64,
}

impl ClockConfiguration {
    pub fn new(offsets: Vec<u64>, d_bound: u64) -> Result<Self> {
        let clocks = Self { offsets, d_bound };
        clocks.validate()?;
        Ok(clocks)
    }

    /// All offsets zero.
    pub fn aligned(n: usize, d_bound: u64) -> Result<Self> {
        Self::new(vec![0; n], d_bound)
    }

    /// Independent uniform offsets in `[0, d_bound)`.
    pub fn random<R: Rng + ?Sized>(n: usize, d_bound: u64, rng: &mut R) -> Result<Self> {
        if d_bound == 0 {
            return Err(Error::Validation(vec!["dBound must be positive".into()]));
        }
        Self::new((0..n).map(|_| rng.gen_range(0..d_bound)).collect(), d_bound)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.d_bound == 0 {
            problems.push("dBound must be positive".to_string());
        }
        if let Some((a, o)) = self
            .offsets
            .iter()
            .enumerate()
            .find(|(_, &o)| o >= self.d_bound)
        {
            problems.push(format!(
                "offset {o} of agent {a} is not below dBound {}",
                self.d_bound
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn max_offset(&self) -> u64 {
        self.offsets.iter().copied().max().unwrap_or(0)
    }
}

/// Uniform element of a nonempty inbox. A singleton inbox consumes no draw.
pub fn select_initial_opinion<R: Rng + ?Sized>(inbox: &[Opinion], rng: &mut R) -> Result<Opinion> {
    match inbox.len() {
        0 => Err(Error::Protocol(
            "initial opinion requested for an agent with an empty inbox".into(),
        )),
        1 => Ok(inbox[0]),
        len => Ok(inbox[rng.gen_range(0..len)]),
    }
}

/// Majority over a uniformly random `subset`-element subset of `samples`.
pub fn majority_update<R: Rng + ?Sized>(
    samples: &[Opinion],
    subset: usize,
    rng: &mut R,
) -> Result<Opinion> {
    if subset == 0 || subset.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "subset size must be odd and positive, got {subset}"
        )));
    }
    if samples.len() < subset {
        return Err(Error::Argument(format!(
            "{} samples cannot supply a subset of {subset}",
            samples.len()
        )));
    }
    let mut scratch = samples.to_vec();
    Ok(majority_of_random_subset(&mut scratch, subset, rng))
}

/// In-place partial Fisher-Yates; the first `subset` slots end up a uniform subset.
/// Callers guarantee `0 < subset <= samples.len()` and odd `subset`.
pub(crate) fn majority_of_random_subset<R: Rng + ?Sized>(
    samples: &mut [Opinion],
    subset: usize,
    rng: &mut R,
) -> Opinion {
    let len = samples.len();
    if subset < len {
        for i in 0..subset {
            let j = rng.gen_range(i..len);
            samples.swap(i, j);
        }
    }
    let ones = samples[..subset]
        .iter()
        .filter(|&&o| o == Opinion::One)
        .count();
    Opinion::from_bit(2 * ones > subset)
}

fn stage1_outcome(stats: &executor::ExecStats, seeded: usize, world: &World) -> Stage1Result {
    let rounds: u64 = stats.stage1_rounds();
    Stage1Result {
        per_phase: stats.stage1_metrics(seeded),
        all_activated: world.all_activated(),
        rounds_used: rounds,
    }
}

/// Stage-I phases `0..=T+1` on `world`, which must hold exactly one seeded source.
pub fn run_stage1<R: Rng + ?Sized>(
    config: &SimConfig,
    schedule: &ScheduleParams,
    world: &mut World,
    rng: &mut R,
) -> Result<Stage1Result> {
    let seeded = world.agents.iter().filter(|a| a.seeded).count();
    if seeded != 1 || world.agents.iter().any(|a| !a.seeded && a.activated) {
        return Err(Error::Protocol(
            "stage I expects one seeded source and every other agent dormant".into(),
        ));
    }
    run_stage1_from(config, schedule, world, 0, rng)
}

/// Stage-I phases `first_phase..=T+1`; seeded agents send from the start.
pub fn run_stage1_from<R: Rng + ?Sized>(
    config: &SimConfig,
    schedule: &ScheduleParams,
    world: &mut World,
    first_phase: u32,
    rng: &mut R,
) -> Result<Stage1Result> {
    check_world(config, world)?;
    if first_phase > schedule.final_stage1_phase() {
        return Err(Error::Argument(format!(
            "first phase {first_phase} is past the last stage-I phase {}",
            schedule.final_stage1_phase()
        )));
    }
    let seeded = world.agents.iter().filter(|a| a.seeded).count();
    let plan = Plan::stage1(schedule, first_phase);
    let stats = execute(
        &plan,
        &Timing::synchronous(world.n()),
        world,
        config,
        rng,
        &mut NoEvents,
    )?;
    Ok(stage1_outcome(&stats, seeded, world))
}

/// Stage II on a fully opinionated population.
pub fn run_stage2<R: Rng + ?Sized>(
    config: &SimConfig,
    schedule: &ScheduleParams,
    world: &mut World,
    rng: &mut R,
) -> Result<Vec<Stage2PhaseRecord>> {
    check_world(config, world)?;
    if let Some(a) = world.agents.iter().find(|a| a.opinion.is_none()) {
        return Err(Error::Protocol(format!(
            "stage II expects every agent opinionated; agent {} has none",
            a.id
        )));
    }
    let plan = Plan::stage2(schedule);
    let stats = execute(
        &plan,
        &Timing::synchronous(world.n()),
        world,
        config,
        rng,
        &mut NoEvents,
    )?;
    Ok(stats.stage2)
}

fn check_world(config: &SimConfig, world: &World) -> Result<()> {
    if world.n() != config.n {
        return Err(Error::Config(format!(
            "world has {} agents, config says {}",
            world.n(),
            config.n
        )));
    }
    Ok(())
}

/// Source broadcast: stage I from a single seeded source, then stage II.
pub fn run_broadcast<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Outcome> {
    run_broadcast_observed(config, rng, &mut NoEvents)
}

pub fn run_broadcast_observed<R: Rng + ?Sized, S: EventSink + ?Sized>(
    config: &SimConfig,
    rng: &mut R,
    sink: &mut S,
) -> Result<Outcome> {
    config.validate()?;
    let schedule = derive_schedule(config.n, &config.channel, &config.constants)?;
    let mut plan = Plan::stage1(&schedule, 0);
    plan.push_stage2(&schedule, |_| 0);
    let mut world = World::with_source(config.n, config.correct_opinion);
    let stats = execute(
        &plan,
        &Timing::synchronous(config.n),
        &mut world,
        config,
        rng,
        sink,
    )?;
    let mut outcome = Outcome::new(&world, config.correct_opinion, stats.rounds);
    outcome.stage1 = Some(stage1_outcome(&stats, 1, &world));
    outcome.stage2 = stats.stage2;
    Ok(outcome)
}

/// Majority consensus from an initial opinionated set (the `Some` entries).
pub fn run_majority_consensus<R: Rng + ?Sized>(
    config: &SimConfig,
    initial: &[Option<Opinion>],
    rng: &mut R,
) -> Result<Outcome> {
    run_majority_consensus_observed(config, initial, rng, &mut NoEvents)
}

pub fn run_majority_consensus_observed<R: Rng + ?Sized, S: EventSink + ?Sized>(
    config: &SimConfig,
    initial: &[Option<Opinion>],
    rng: &mut R,
    sink: &mut S,
) -> Result<Outcome> {
    config.validate()?;
    if initial.len() != config.n {
        return Err(Error::Config(format!(
            "initial assignment covers {} agents, config says {}",
            initial.len(),
            config.n
        )));
    }
    let schedule = derive_schedule(config.n, &config.channel, &config.constants)?;
    let a_size = initial.iter().filter(|o| o.is_some()).count();
    let entry = majority_entry_phase(a_size, &schedule, &config.constants)?;
    let correct = initial
        .iter()
        .filter(|o| **o == Some(config.correct_opinion))
        .count();
    let bias = (correct as f64 - (a_size - correct) as f64) / (2.0 * a_size as f64);

    let mut plan = Plan::stage1(&schedule, entry);
    plan.push_stage2(&schedule, |_| 0);
    let mut world = World::from_initial(initial, entry);
    let stats = execute(
        &plan,
        &Timing::synchronous(config.n),
        &mut world,
        config,
        rng,
        sink,
    )?;
    let mut outcome = Outcome::new(&world, config.correct_opinion, stats.rounds);
    outcome.stage1 = Some(stage1_outcome(&stats, a_size, &world));
    outcome.stage2 = stats.stage2;
    outcome.initial_majority_bias = Some(bias);
    outcome.entry_phase = Some(entry);
    Ok(outcome)
}

/// `size` agents chosen uniformly, `round(size * (1/2 + bias))` of them holding `correct`.
pub fn random_initial_set<R: Rng + ?Sized>(
    n: usize,
    size: usize,
    bias: f64,
    correct: Opinion,
    rng: &mut R,
) -> Result<Vec<Option<Opinion>>> {
    if size == 0 || size > n {
        return Err(Error::Argument(format!(
            "initial set size {size} must lie in 1..={n}"
        )));
    }
    if !(-0.5..=0.5).contains(&bias) {
        return Err(Error::Argument(format!("bias {bias} outside [-1/2, 1/2]")));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = rng.gen_range(i..n);
        ids.swap(i, j);
    }
    let holders = ((size as f64) * (0.5 + bias)).round() as usize;
    let mut initial = vec![None; n];
    for (rank, &id) in ids[..size].iter().enumerate() {
        initial[id] = Some(if rank < holders {
            correct
        } else {
            correct.complement()
        });
    }
    Ok(initial)
}
