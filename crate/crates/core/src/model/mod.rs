//! Domain types, the binary symmetric channel and the push-gossip delivery engine.

mod delivery;
mod rng;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ProtocolConstants;

pub use delivery::{deliver_round, AcceptedMessage, Deliverer, Delivery, Message};
pub use rng::{mix64, purpose, RngStream};

/// A one-bit opinion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum Opinion {
    Zero = 0,
    One = 1,
}

impl Opinion {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Opinion::One
        } else {
            Opinion::Zero
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn complement(self) -> Self {
        match self {
            Opinion::Zero => Opinion::One,
            Opinion::One => Opinion::Zero,
        }
    }
}

impl From<Opinion> for u8 {
    fn from(o: Opinion) -> u8 {
        o.bit()
    }
}

impl TryFrom<u8> for Opinion {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Opinion::Zero),
            1 => Ok(Opinion::One),
            other => Err(format!("opinion must be 0 or 1, got {other}")),
        }
    }
}

/// Binary symmetric channel that flips each delivered bit with probability
/// `1/2 - epsilon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseChannel {
    flip_probability: f64,
    epsilon: f64,
}

impl NoiseChannel {
    /// Channel with bias `epsilon` in `(0, 1/2]`.
    pub fn from_bias(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(Error::Config(format!(
                "channel bias epsilon must lie in (0, 1/2], got {epsilon}"
            )));
        }
        Ok(Self {
            flip_probability: 0.5 - epsilon,
            epsilon,
        })
    }

    /// Channel with flip probability in `[0, 1/2)`.
    pub fn from_flip_probability(p: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&p) {
            return Err(Error::Config(format!(
                "flip probability must lie in [0, 1/2), got {p}"
            )));
        }
        Ok(Self {
            flip_probability: p,
            epsilon: 0.5 - p,
        })
    }

    pub fn flip_probability(&self) -> f64 {
        self.flip_probability
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Passes `bit` through the channel. Consumes exactly one `f64` draw.
pub fn flip<R: Rng + ?Sized>(bit: Opinion, channel: &NoiseChannel, rng: &mut R) -> Opinion {
    let u: f64 = rng.gen();
    if u < channel.flip_probability {
        bit.complement()
    } else {
        bit
    }
}

/// Everything a single simulation run needs besides its random stream.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub channel: NoiseChannel,
    pub correct_opinion: Opinion,
    pub master_seed: u64,
    pub constants: ProtocolConstants,
}

impl SimConfig {
    pub fn new(n: usize, epsilon: f64) -> Result<Self> {
        let cfg = Self {
            n,
            channel: NoiseChannel::from_bias(epsilon)?,
            correct_opinion: Opinion::One,
            master_seed: 0,
            constants: ProtocolConstants::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_correct_opinion(mut self, opinion: Opinion) -> Self {
        self.correct_opinion = opinion;
        self
    }

    pub fn with_constants(mut self, constants: ProtocolConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.channel.epsilon()
    }

    /// Hard errors only. See [`SimConfig::warnings`] for the asymptotic regime.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!(
                "need at least 2 agents, got {}",
                self.n
            )));
        }
        if self.n > u32::MAX as usize {
            return Err(Error::Config(format!(
                "agent count {} exceeds u32 range",
                self.n
            )));
        }
        self.constants.validate()
    }

    /// Non-fatal diagnostics, e.g. `epsilon <= n^-(1/2 - eta)`.
    pub fn warnings(&self) -> Vec<String> {
        let eta = self.constants.eta;
        let floor = (self.n as f64).powf(-(0.5 - eta));
        if self.epsilon() <= floor {
            vec![format!(
                "epsilon={} is not above n^-(1/2-eta)={floor:.4} (n={}, eta={eta}); outside the asymptotic regime",
                self.epsilon(),
                self.n
            )]
        } else {
            Vec::new()
        }
    }
}

/// Per-agent protocol state.
///
/// `level` is the stage-I phase in which the agent was activated. Agents that
/// start out opinionated (the source, or the initial set of a consensus run)
/// are marked `seeded`; they send from the first executed phase on.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub activated: bool,
    pub seeded: bool,
    pub level: Option<u32>,
    pub activation_round: Option<u64>,
    pub local_clock: u64,
    pub opinion: Option<Opinion>,
    pub inbox: Vec<Opinion>,
}

impl AgentState {
    pub fn dormant(id: usize) -> Self {
        Self {
            id,
            activated: false,
            seeded: false,
            level: None,
            activation_round: None,
            local_clock: 0,
            opinion: None,
            inbox: Vec::new(),
        }
    }

    pub fn seeded(id: usize, opinion: Opinion, level: u32) -> Self {
        Self {
            id,
            activated: true,
            seeded: true,
            level: Some(level),
            activation_round: Some(0),
            local_clock: 0,
            opinion: Some(opinion),
            inbox: Vec::new(),
        }
    }

    /// `activated = false` implies no opinion and no level.
    pub fn is_consistent(&self) -> bool {
        self.activated || (self.opinion.is_none() && self.level.is_none())
    }
}
