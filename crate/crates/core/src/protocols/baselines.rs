//! Naive strategies that fail under noise, kept for comparison.

use rand::Rng;

use super::executor::World;
use super::{select_initial_opinion, DepthRow, Outcome};
use crate::error::{Error, Result};
use crate::model::{Deliverer, Delivery, SimConfig};

/// Every agent adopts the first opinion it accepts and forwards it every round
/// afterwards. Stops once everyone is informed or after `max_rounds`.
///
/// The depth table counts hops from the source using the diagnostics-only
/// sender of each activating message.
pub fn run_baseline_forward<R: Rng + ?Sized>(
    config: &SimConfig,
    max_rounds: u64,
    rng: &mut R,
) -> Result<Outcome> {
    config.validate()?;
    let n = config.n;
    let mut world = World::with_source(n, config.correct_opinion);
    let mut depth: Vec<Option<u32>> = vec![None; n];
    depth[0] = Some(0);
    let mut deliverer = Deliverer::new(n)?;
    let mut delivery = Delivery::default();
    let mut senders = Vec::with_capacity(n);
    let mut rounds = 0;
    while rounds < max_rounds && !world.all_activated() {
        senders.clear();
        senders.extend(
            world
                .agents
                .iter()
                .enumerate()
                .filter_map(|(a, s)| s.opinion.map(|o| (a, o))),
        );
        world.messages_sent += senders.len() as u64;
        deliverer.deliver(rounds, &senders, &config.channel, rng, &mut delivery)?;
        for accepted in delivery.diagnostics() {
            let agent = &mut world.agents[accepted.receiver];
            if agent.activated {
                continue;
            }
            agent.activated = true;
            agent.activation_round = Some(rounds);
            agent.opinion = Some(accepted.message.payload());
            let parent = depth[accepted.message.diagnostic_sender()]
                .ok_or_else(|| Error::Protocol("sender without depth".into()))?;
            depth[accepted.receiver] = Some(parent + 1);
        }
        rounds += 1;
    }
    for a in &mut world.agents {
        a.local_clock = rounds;
    }

    let mut table: Vec<DepthRow> = Vec::new();
    for (a, d) in depth.iter().enumerate().skip(1) {
        let Some(d) = *d else { continue };
        let idx = d as usize - 1;
        while table.len() <= idx {
            table.push(DepthRow {
                depth: table.len() as u32 + 1,
                agents: 0,
                correct: 0,
            });
        }
        table[idx].agents += 1;
        if world.agents[a].opinion == Some(config.correct_opinion) {
            table[idx].correct += 1;
        }
    }

    world.round = rounds;
    let mut outcome = Outcome::new(&world, config.correct_opinion, rounds);
    outcome.depth_table = table;
    Ok(outcome)
}

/// Agents stay silent until they have accepted `threshold` messages, then
/// adopt a uniform one of them and start sending. The run stops in the round
/// where the first non-source agent reaches the threshold, or after `max_rounds`.
pub fn run_baseline_silent_wait<R: Rng + ?Sized>(
    config: &SimConfig,
    threshold: usize,
    max_rounds: u64,
    rng: &mut R,
) -> Result<Outcome> {
    config.validate()?;
    if threshold == 0 {
        return Err(Error::Argument("threshold must be at least 1".into()));
    }
    let n = config.n;
    let mut world = World::with_source(n, config.correct_opinion);
    let mut deliverer = Deliverer::new(n)?;
    let mut delivery = Delivery::default();
    let mut senders = Vec::with_capacity(n);
    let mut first = None;
    let mut rounds = 0;
    while rounds < max_rounds && first.is_none() {
        senders.clear();
        senders.extend(
            world
                .agents
                .iter()
                .enumerate()
                .filter_map(|(a, s)| s.opinion.map(|o| (a, o))),
        );
        world.messages_sent += senders.len() as u64;
        deliverer.deliver(rounds, &senders, &config.channel, rng, &mut delivery)?;
        for (r, payload) in delivery.accepted() {
            let agent = &mut world.agents[r];
            if agent.opinion.is_some() {
                continue;
            }
            agent.activated = true;
            agent.activation_round.get_or_insert(rounds);
            agent.inbox.push(payload);
        }
        for agent in world.agents.iter_mut() {
            if agent.opinion.is_none() && agent.inbox.len() >= threshold {
                agent.opinion = Some(select_initial_opinion(&agent.inbox, rng)?);
                agent.inbox.clear();
                first.get_or_insert(rounds + 1);
            }
        }
        rounds += 1;
    }
    for a in &mut world.agents {
        a.local_clock = rounds;
    }
    world.round = rounds;
    let mut outcome = Outcome::new(&world, config.correct_opinion, rounds);
    outcome.first_threshold_round = first;
    Ok(outcome)
}
