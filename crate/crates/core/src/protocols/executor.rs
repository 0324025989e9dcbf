//! Round loop shared by the synchronised and clock-shifted executions.
//!
//! A [`Plan`] lists phases with their synchronous start, length and shift
//! index. Agent `a` with clock offset `o_a` executes phase `j` during global
//! rounds `[start_j + shift_j * d + o_a, ... + len_j)`. The synchronised protocol
//! is the special case `d = 0`, all offsets zero.

use rand::Rng;

use super::events::EventSink;
use super::{majority_of_random_subset, select_initial_opinion, PhaseMetrics, Stage2PhaseRecord};
use crate::error::{Error, Result};
use crate::model::{AgentState, Deliverer, Delivery, Opinion, SimConfig};
use crate::params::ScheduleParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PhaseKind {
    /// Stage-I phase number.
    Stage1(u32),
    /// 1-based stage-II phase with its majority subset size.
    Stage2 { index: u32, subset: usize },
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct PlannedPhase {
    pub kind: PhaseKind,
    pub start: u64,
    pub len: u64,
    pub shift: u64,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Plan {
    pub phases: Vec<PlannedPhase>,
}

impl Plan {
    /// Stage-I phases `first..=T+1`, laid out back to back from round 0.
    pub fn stage1(schedule: &ScheduleParams, first: u32) -> Self {
        let mut plan = Plan::default();
        plan.push_stage1(schedule, first);
        plan
    }

    pub fn stage2(schedule: &ScheduleParams) -> Self {
        let mut plan = Plan::default();
        plan.push_stage2(schedule, |_| 0);
        plan
    }

    pub fn push_stage1(&mut self, schedule: &ScheduleParams, first: u32) {
        for p in first..=schedule.final_stage1_phase() {
            let len = schedule.stage1_phases[p as usize].len;
            let start = self.sync_len();
            self.phases.push(PlannedPhase {
                kind: PhaseKind::Stage1(p),
                start,
                len,
                shift: p as u64,
            });
        }
    }

    /// Appends stage II; `shift_of(i)` gives the shift index of 1-based phase `i`.
    pub fn push_stage2(&mut self, schedule: &ScheduleParams, shift_of: impl Fn(u32) -> u64) {
        for (i, &len) in schedule.stage2_phase_lengths.iter().enumerate() {
            let index = i as u32 + 1;
            let start = self.sync_len();
            self.phases.push(PlannedPhase {
                kind: PhaseKind::Stage2 {
                    index,
                    subset: (len / 2) as usize,
                },
                start,
                len,
                shift: shift_of(index),
            });
        }
    }

    pub fn sync_len(&self) -> u64 {
        self.phases.last().map_or(0, |p| p.start + p.len)
    }

    /// Global span of the plan under `(d, max_offset)`.
    pub fn span(&self, d: u64, max_offset: u64) -> u64 {
        self.phases
            .iter()
            .map(|p| p.start + p.shift * d + p.len)
            .max()
            .map_or(0, |end| end + max_offset)
    }
}

/// Agent clock offsets and the shift unit `d`.
#[derive(Clone, Debug)]
pub(crate) struct Timing {
    pub offsets: Vec<u64>,
    pub d: u64,
}

impl Timing {
    pub fn synchronous(n: usize) -> Self {
        Self {
            offsets: vec![0; n],
            d: 0,
        }
    }

    pub fn max_offset(&self) -> u64 {
        self.offsets.iter().copied().max().unwrap_or(0)
    }
}

/// Population plus global counters.
#[derive(Clone, Debug)]
pub struct World {
    pub agents: Vec<AgentState>,
    /// Global round at which the next execution starts.
    pub round: u64,
    pub messages_sent: u64,
}

impl World {
    /// Broadcast start: agent 0 is the source holding `opinion`.
    pub fn with_source(n: usize, opinion: Opinion) -> Self {
        let mut agents: Vec<_> = (0..n).map(AgentState::dormant).collect();
        agents[0] = AgentState::seeded(0, opinion, 0);
        Self {
            agents,
            round: 0,
            messages_sent: 0,
        }
    }

    /// Consensus start: every `Some` agent is seeded at `level`.
    pub fn from_initial(initial: &[Option<Opinion>], level: u32) -> Self {
        let agents = initial
            .iter()
            .enumerate()
            .map(|(i, o)| match o {
                Some(o) => AgentState::seeded(i, *o, level),
                None => AgentState::dormant(i),
            })
            .collect();
        Self {
            agents,
            round: 0,
            messages_sent: 0,
        }
    }

    /// Everyone opinionated, as at the start of stage II.
    pub fn opinionated(opinions: &[Opinion]) -> Self {
        let agents = opinions
            .iter()
            .enumerate()
            .map(|(i, o)| AgentState::seeded(i, *o, 0))
            .collect();
        Self {
            agents,
            round: 0,
            messages_sent: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn opinions(&self) -> Vec<Option<Opinion>> {
        self.agents.iter().map(|a| a.opinion).collect()
    }

    pub fn correct_count(&self, correct: Opinion) -> usize {
        self.agents
            .iter()
            .filter(|a| a.opinion == Some(correct))
            .count()
    }

    pub fn all_activated(&self) -> bool {
        self.agents.iter().all(|a| a.activated)
    }
}

#[derive(Clone, Debug, Default)]
struct Stage2Acc {
    index: u32,
    subset: usize,
    rounds: u64,
    successful: usize,
    start_correct: usize,
    end_correct: usize,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct ExecStats {
    /// `(phase, newly activated, initially correct)` in plan order.
    pub stage1: Vec<(u32, usize, usize)>,
    pub stage1_rounds: u64,
    pub stage2: Vec<Stage2PhaseRecord>,
    pub rounds: u64,
}

impl ExecStats {
    pub fn stage1_rounds(&self) -> u64 {
        self.stage1_rounds
    }

    /// `seeded` agents count towards every cumulative total.
    pub fn stage1_metrics(&self, seeded: usize) -> Vec<PhaseMetrics> {
        let mut x = seeded;
        self.stage1
            .iter()
            .map(|&(phase, y, z)| {
                x += y;
                PhaseMetrics {
                    phase,
                    x_cumulative: x,
                    y_new: y,
                    z_correct: z,
                    bias: (y > 0).then(|| z as f64 / y as f64 - 0.5),
                }
            })
            .collect()
    }
}

pub(crate) fn execute<R: Rng + ?Sized, S: EventSink + ?Sized>(
    plan: &Plan,
    timing: &Timing,
    world: &mut World,
    config: &SimConfig,
    rng: &mut R,
    sink: &mut S,
) -> Result<ExecStats> {
    let n = world.n();
    if timing.offsets.len() != n {
        return Err(Error::Config(format!(
            "{} clock offsets for {n} agents",
            timing.offsets.len()
        )));
    }
    let correct = config.correct_opinion;
    let max_offset = timing.max_offset();
    let span = plan.span(timing.d, max_offset);
    let windows: Vec<(u64, u64)> = plan
        .phases
        .iter()
        .map(|p| {
            (
                p.start + p.shift * timing.d,
                p.start + p.shift * timing.d + p.len,
            )
        })
        .collect();

    let mut stage1_acc: Vec<(u32, usize, usize)> = Vec::new();
    let mut stage2_acc: Vec<Stage2Acc> = Vec::new();
    let mut slot_of_phase = vec![usize::MAX; plan.phases.len()];
    for (j, p) in plan.phases.iter().enumerate() {
        match p.kind {
            PhaseKind::Stage1(phase) => {
                slot_of_phase[j] = stage1_acc.len();
                stage1_acc.push((phase, 0, 0));
            }
            PhaseKind::Stage2 { index, subset } => {
                slot_of_phase[j] = stage2_acc.len();
                stage2_acc.push(Stage2Acc {
                    index,
                    subset,
                    rounds: p.len,
                    ..Default::default()
                });
            }
        }
    }

    // Phase state is a function of the offset alone; compute it per distinct offset.
    let offset_count = max_offset as usize + 1;
    let mut cursor = vec![0usize; offset_count];
    let mut active: Vec<Option<usize>> = vec![None; offset_count];
    let mut ending = vec![false; offset_count];

    let mut deliverer = Deliverer::new(n)?;
    let mut delivery = Delivery::default();
    let mut senders: Vec<(usize, Opinion)> = Vec::with_capacity(n);
    let base = world.round;

    for t in 0..span {
        let mut any_active = false;
        let mut any_ending = false;
        for o in 0..offset_count {
            active[o] = None;
            ending[o] = false;
            if t < o as u64 {
                continue;
            }
            let local = t - o as u64;
            while cursor[o] < windows.len() && windows[cursor[o]].1 <= local {
                cursor[o] += 1;
            }
            if let Some(&(lo, hi)) = windows.get(cursor[o]) {
                if local >= lo {
                    active[o] = Some(cursor[o]);
                    any_active = true;
                    if local + 1 == hi {
                        ending[o] = true;
                        any_ending = true;
                    }
                }
            }
        }
        if !any_active {
            continue;
        }
        let round = base + t;

        senders.clear();
        for (a, agent) in world.agents.iter().enumerate() {
            if active[timing.offsets[a] as usize].is_some() {
                if let Some(o) = agent.opinion {
                    senders.push((a, o));
                }
            }
        }
        for &(a, o) in &senders {
            sink.on_send(round, a, o);
        }
        world.messages_sent += senders.len() as u64;

        deliverer.deliver(round, &senders, &config.channel, rng, &mut delivery)?;
        for (r, payload) in delivery.accepted() {
            sink.on_accept(round, r, payload);
            let Some(j) = active[timing.offsets[r] as usize] else {
                continue;
            };
            let agent = &mut world.agents[r];
            match plan.phases[j].kind {
                PhaseKind::Stage1(phase) => {
                    if !agent.activated {
                        agent.activated = true;
                        agent.level = Some(phase);
                        agent.activation_round = Some(round);
                        agent.inbox.push(payload);
                    } else if !agent.seeded && agent.level == Some(phase) && agent.opinion.is_none()
                    {
                        agent.inbox.push(payload);
                    }
                }
                PhaseKind::Stage2 { .. } => agent.inbox.push(payload),
            }
        }

        if !any_ending {
            continue;
        }
        for a in 0..n {
            let o = timing.offsets[a] as usize;
            if !ending[o] {
                continue;
            }
            let Some(j) = active[o] else { continue };
            let slot = slot_of_phase[j];
            let agent = &mut world.agents[a];
            match plan.phases[j].kind {
                PhaseKind::Stage1(phase) => {
                    if !agent.seeded && agent.level == Some(phase) && agent.opinion.is_none() {
                        let chosen = select_initial_opinion(&agent.inbox, rng)?;
                        agent.opinion = Some(chosen);
                        stage1_acc[slot].1 += 1;
                        if chosen == correct {
                            stage1_acc[slot].2 += 1;
                        }
                    }
                    agent.inbox.clear();
                }
                PhaseKind::Stage2 { subset, .. } => {
                    let acc = &mut stage2_acc[slot];
                    if agent.opinion == Some(correct) {
                        acc.start_correct += 1;
                    }
                    if agent.inbox.len() >= subset {
                        acc.successful += 1;
                        agent.opinion =
                            Some(majority_of_random_subset(&mut agent.inbox, subset, rng));
                    }
                    if agent.opinion == Some(correct) {
                        acc.end_correct += 1;
                    }
                    agent.inbox.clear();
                }
            }
        }
    }

    for (a, agent) in world.agents.iter_mut().enumerate() {
        agent.local_clock = span.saturating_sub(timing.offsets[a]);
        agent.inbox.clear();
    }
    world.round = base + span;

    let nf = n as f64;
    let stage1_rounds = plan
        .phases
        .iter()
        .filter(|p| matches!(p.kind, PhaseKind::Stage1(_)))
        .map(|p| p.len)
        .sum();
    Ok(ExecStats {
        stage1: stage1_acc,
        stage1_rounds,
        stage2: stage2_acc
            .into_iter()
            .map(|a| Stage2PhaseRecord {
                phase_index: a.index,
                rounds: a.rounds,
                subset_size: a.subset,
                successful_count: a.successful,
                start_correct_fraction: a.start_correct as f64 / nf,
                correct_fraction: a.end_correct as f64 / nf,
            })
            .collect(),
        rounds: span,
    })
}
