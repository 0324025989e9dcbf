//! Execution without a global clock.
//!
//! Agent `a` runs phase `j` during its local rounds
//! `[start_j + shift_j * D, start_j + shift_j * D + len_j)`, its local clock
//! lagging the global one by `offset_a < D`. Between windows an agent is
//! silent and discards arrivals.

use serde::{Deserialize, Serialize};

use super::events::{EventSink, NoEvents};
use super::executor::{execute, Plan, Timing, World};
use super::{stage1_outcome, ClockConfiguration, ClockReport, Outcome};
use crate::error::{Error, Result};
use crate::model::{purpose, Deliverer, Delivery, Opinion, RngStream, SimConfig};
use crate::params::{ceil_log2, derive_schedule};

/// How stage-II phases are shifted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage2Shift {
    /// All of stage II shares shift index `T+2`.
    #[default]
    Block,
    /// Stage-II phase `i` gets its own shift index `T+1+i`.
    PerPhase,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DesyncOptions {
    pub stage2_shift: Stage2Shift,
}

/// With `clocks = None` the offsets come from the clock-reset preamble.
pub fn run_desynchronized(
    config: &SimConfig,
    clocks: Option<&ClockConfiguration>,
    rng: &mut RngStream,
) -> Result<Outcome> {
    run_desynchronized_observed(config, clocks, DesyncOptions::default(), rng, &mut NoEvents)
}

pub fn run_desynchronized_with(
    config: &SimConfig,
    clocks: Option<&ClockConfiguration>,
    options: DesyncOptions,
    rng: &mut RngStream,
) -> Result<Outcome> {
    run_desynchronized_observed(config, clocks, options, rng, &mut NoEvents)
}

pub fn run_desynchronized_observed<S: EventSink + ?Sized>(
    config: &SimConfig,
    clocks: Option<&ClockConfiguration>,
    options: DesyncOptions,
    rng: &mut RngStream,
    sink: &mut S,
) -> Result<Outcome> {
    config.validate()?;
    let schedule = derive_schedule(config.n, &config.channel, &config.constants)?;
    let mut world = World::with_source(config.n, config.correct_opinion);

    let (timing, preamble_rounds) = match clocks {
        Some(clocks) => {
            clocks.validate()?;
            if clocks.offsets.len() != config.n {
                return Err(Error::Validation(vec![format!(
                    "clock configuration covers {} agents, config says {}",
                    clocks.offsets.len(),
                    config.n
                )]));
            }
            (
                Timing {
                    offsets: clocks.offsets.clone(),
                    d: clocks.d_bound,
                },
                0,
            )
        }
        None => {
            let mut pre = rng.fork(purpose::PREAMBLE);
            let (offsets, rounds, sent) = preamble(config, &mut pre)?;
            world.messages_sent += sent;
            world.round = rounds;
            (
                Timing {
                    offsets,
                    d: 2 * ceil_log2(config.n),
                },
                rounds,
            )
        }
    };

    let t = schedule.t as u64;
    let mut plan = Plan::stage1(&schedule, 0);
    match options.stage2_shift {
        Stage2Shift::Block => plan.push_stage2(&schedule, |_| t + 2),
        Stage2Shift::PerPhase => plan.push_stage2(&schedule, |i| t + 1 + i as u64),
    }

    let stats = execute(&plan, &timing, &mut world, config, rng, sink)?;
    let max_offset = timing.max_offset();
    let mut outcome = Outcome::new(
        &world,
        config.correct_opinion,
        preamble_rounds + stats.rounds,
    );
    outcome.stage1 = Some(stage1_outcome(&stats, 1, &world));
    outcome.stage2 = stats.stage2;
    outcome.clock = Some(ClockReport {
        d_bound: timing.d,
        max_offset,
        preamble_rounds,
        clock_bound_violated: max_offset >= timing.d,
    });
    Ok(outcome)
}

/// Activation flood that sets every clock.
///
/// The source sends in rounds `0..L`; an agent first reached in round `t_a`
/// sends in rounds `t_a+1..=t_a+L`, with `L = 2 ceil(log2 n)`. Each agent resets
/// its clock `2L` rounds after first contact, so its offset relative to the
/// source is `t_a`. Agents never reached get offset `2L`, past the bound.
/// Returns `(offsets, rounds, messages)`.
fn preamble(config: &SimConfig, rng: &mut RngStream) -> Result<(Vec<u64>, u64, u64)> {
    let n = config.n;
    let l = 2 * ceil_log2(n);
    let mut first_contact: Vec<Option<u64>> = vec![None; n];
    first_contact[0] = Some(0);
    let mut deliverer = Deliverer::new(n)?;
    let mut delivery = Delivery::default();
    let mut senders = Vec::with_capacity(n);
    let mut sent = 0u64;
    for round in 0..2 * l {
        senders.clear();
        for (a, contact) in first_contact.iter().enumerate() {
            let Some(ta) = *contact else { continue };
            let begin = if a == 0 { 0 } else { ta + 1 };
            if (begin..begin + l).contains(&round) {
                senders.push((a, Opinion::One));
            }
        }
        sent += senders.len() as u64;
        deliverer.deliver(round, &senders, &config.channel, rng, &mut delivery)?;
        for (r, _) in delivery.accepted() {
            if first_contact[r].is_none() {
                first_contact[r] = Some(round);
            }
        }
    }
    let offsets = first_contact
        .into_iter()
        .map(|c| c.unwrap_or(2 * l))
        .collect();
    Ok((offsets, 2 * l, sent))
}
