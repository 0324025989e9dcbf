use std::collections::BTreeMap;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::{flip, NoiseChannel, Opinion};
use crate::error::{Error, Result};

/// A delivered message. The sender is kept for diagnostics only and is not
/// part of the protocol-facing view ([`Delivery::accepted`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Message {
    payload: Opinion,
    sender: u32,
    round_sent: u64,
}

impl Message {
    pub fn payload(&self) -> Opinion {
        self.payload
    }

    pub fn round_sent(&self) -> u64 {
        self.round_sent
    }

    /// Who sent it. Instrumentation and baselines only.
    pub fn diagnostic_sender(&self) -> usize {
        self.sender as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AcceptedMessage {
    pub receiver: usize,
    pub message: Message,
}

/// Result of one round: for every receiver with at least one arrival, the single
/// accepted message after noise. Sorted by ascending receiver index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Delivery {
    accepted: Vec<AcceptedMessage>,
    arrivals: usize,
}

impl Delivery {
    /// Protocol view: `(receiver, payload)` pairs, no sender identities.
    pub fn accepted(&self) -> impl Iterator<Item = (usize, Opinion)> + '_ {
        self.accepted
            .iter()
            .map(|a| (a.receiver, a.message.payload))
    }

    /// Diagnostic view including sender metadata.
    pub fn diagnostics(&self) -> &[AcceptedMessage] {
        &self.accepted
    }

    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    /// Total arrivals before the accept-one rule; equals the number of senders.
    pub fn arrivals(&self) -> usize {
        self.arrivals
    }

    pub fn to_map(&self) -> BTreeMap<usize, Opinion> {
        self.accepted().collect()
    }

    fn clear(&mut self) {
        self.accepted.clear();
        self.arrivals = 0;
    }
}

/// Reusable delivery buffers for a fixed population size.
///
/// Draw order per round: one target draw per sender in the order given, then for
/// each receiver in ascending index a tie-break draw (only if it has more than one
/// arrival) followed by exactly one noise draw for the accepted message.
#[derive(Clone, Debug)]
pub struct Deliverer {
    n: usize,
    other: Uniform<u32>,
    targets: Vec<u32>,
    counts: Vec<u32>,
    starts: Vec<u32>,
    fill: Vec<u32>,
    order: Vec<u32>,
}

impl Deliverer {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("need at least 2 agents, got {n}")));
        }
        if n > u32::MAX as usize {
            return Err(Error::Config(format!("agent count {n} exceeds u32 range")));
        }
        Ok(Self {
            n,
            other: Uniform::new(0, (n - 1) as u32),
            targets: Vec::new(),
            counts: vec![0; n],
            starts: vec![0; n + 1],
            fill: vec![0; n],
            order: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn deliver<R: Rng + ?Sized>(
        &mut self,
        round: u64,
        senders: &[(usize, Opinion)],
        channel: &NoiseChannel,
        rng: &mut R,
        out: &mut Delivery,
    ) -> Result<()> {
        out.clear();
        if let Some(&(bad, _)) = senders.iter().find(|(s, _)| *s >= self.n) {
            return Err(Error::Config(format!(
                "sender index {bad} out of range for n={}",
                self.n
            )));
        }
        if senders.is_empty() {
            return Ok(());
        }

        self.targets.clear();
        self.counts.iter_mut().for_each(|c| *c = 0);
        for &(s, _) in senders {
            let mut t = self.other.sample(rng);
            if t >= s as u32 {
                t += 1;
            }
            self.targets.push(t);
            self.counts[t as usize] += 1;
        }

        // Counting sort of sender positions by receiver, stable in sender order.
        let mut acc = 0u32;
        for (start, &c) in self.starts.iter_mut().zip(self.counts.iter()) {
            *start = acc;
            acc += c;
        }
        self.starts[self.n] = acc;
        self.order.resize(senders.len(), 0);
        self.fill.copy_from_slice(&self.starts[..self.n]);
        for (i, &t) in self.targets.iter().enumerate() {
            let slot = &mut self.fill[t as usize];
            self.order[*slot as usize] = i as u32;
            *slot += 1;
        }

        out.arrivals = senders.len();
        for receiver in 0..self.n {
            let c = self.counts[receiver];
            if c == 0 {
                continue;
            }
            let base = self.starts[receiver] as usize;
            let pick = if c == 1 {
                0
            } else {
                rng.gen_range(0..c as usize)
            };
            let (sender, payload) = senders[self.order[base + pick] as usize];
            out.accepted.push(AcceptedMessage {
                receiver,
                message: Message {
                    payload: flip(payload, channel, rng),
                    sender: sender as u32,
                    round_sent: round,
                },
            });
        }
        Ok(())
    }
}

/// One-shot convenience wrapper around [`Deliverer`].
pub fn deliver_round<R: Rng + ?Sized>(
    senders: &[(usize, Opinion)],
    n: usize,
    channel: &NoiseChannel,
    rng: &mut R,
) -> Result<Delivery> {
    let mut d = Deliverer::new(n)?;
    let mut out = Delivery::default();
    d.deliver(0, senders, channel, rng, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RngStream;
    use proptest::prelude::*;

    fn noiseless() -> NoiseChannel {
        NoiseChannel::from_bias(0.5).unwrap()
    }

    #[test]
    fn two_agents_only_target() {
        let mut rng = RngStream::new(1, 1);
        let d = deliver_round(&[(0, Opinion::One)], 2, &noiseless(), &mut rng).unwrap();
        assert_eq!(d.to_map(), BTreeMap::from([(1, Opinion::One)]));
    }

    #[test]
    fn silence() {
        let mut rng = RngStream::new(1, 1);
        let d = deliver_round(&[], 10, &noiseless(), &mut rng).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.arrivals(), 0);
    }

    #[test]
    fn sender_out_of_range() {
        let mut rng = RngStream::new(1, 1);
        let err = deliver_round(&[(10, Opinion::One)], 10, &noiseless(), &mut rng);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn occupancy_matches_balls_into_bins() {
        // Expected occupied fraction: 1 - (1 - 1/(n-1))^n for all-n senders
        // (each receiver is hit by each of the n-1 others with prob 1/(n-1)).
        let n = 1000;
        let expected = 1.0 - (1.0 - 1.0 / (n as f64 - 1.0)).powi(n as i32 - 1);
        let senders: Vec<_> = (0..n).map(|i| (i, Opinion::One)).collect();
        let mut d = Deliverer::new(n).unwrap();
        let mut out = Delivery::default();
        let mut rng = RngStream::new(9, 9);
        let rounds = 200;
        let mut total = 0usize;
        for r in 0..rounds {
            d.deliver(r, &senders, &noiseless(), &mut rng, &mut out)
                .unwrap();
            total += out.len();
        }
        let frac = total as f64 / (rounds as usize * n) as f64;
        assert!((frac - 0.632).abs() < 0.03, "frac={frac}");
        assert!(
            (frac - expected).abs() < 0.005,
            "frac={frac} expected={expected}"
        );
    }

    #[test]
    fn no_self_delivery() {
        let n = 5;
        let mut d = Deliverer::new(n).unwrap();
        let mut out = Delivery::default();
        let mut rng = RngStream::new(2, 3);
        for r in 0..2000 {
            let s = (r % n as u64) as usize;
            d.deliver(r, &[(s, Opinion::Zero)], &noiseless(), &mut rng, &mut out)
                .unwrap();
            assert_eq!(out.len(), 1);
            assert_ne!(out.diagnostics()[0].receiver, s);
            assert_eq!(out.diagnostics()[0].message.diagnostic_sender(), s);
        }
    }

    #[test]
    fn tie_break_is_uniform() {
        // Agents 1 and 2 both send to agent 0 when n = 2... use n = 3 and
        // condition on collisions at the same receiver.
        let ch = noiseless();
        let mut d = Deliverer::new(3).unwrap();
        let mut out = Delivery::default();
        let mut rng = RngStream::new(4, 4);
        let senders = [(1, Opinion::Zero), (2, Opinion::One)];
        let (mut zero, mut collisions) = (0usize, 0usize);
        for r in 0..100_000 {
            d.deliver(r, &senders, &ch, &mut rng, &mut out).unwrap();
            if out.len() == 1 && out.diagnostics()[0].receiver == 0 {
                collisions += 1;
                if out.diagnostics()[0].message.payload() == Opinion::Zero {
                    zero += 1;
                }
            }
        }
        let frac = zero as f64 / collisions as f64;
        assert!((frac - 0.5).abs() < 0.02, "frac={frac} over {collisions}");
    }

    proptest! {
        #[test]
        fn conservation_and_determinism(
            n in 2usize..64,
            raw in proptest::collection::vec((0usize..64, any::<bool>()), 0..128),
            seed in any::<u64>(),
            eps in 0.01f64..0.5,
        ) {
            let senders: Vec<_> = raw
                .into_iter()
                .map(|(s, b)| (s % n, Opinion::from_bit(b)))
                .collect();
            let ch = NoiseChannel::from_bias(eps).unwrap();
            let a = deliver_round(&senders, n, &ch, &mut RngStream::new(seed, 0)).unwrap();
            let b = deliver_round(&senders, n, &ch, &mut RngStream::new(seed, 0)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.arrivals(), senders.len());
            prop_assert!(a.len() <= senders.len());
            prop_assert!(a.len() <= n);
            let receivers: Vec<_> = a.accepted().map(|(r, _)| r).collect();
            prop_assert!(receivers.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
