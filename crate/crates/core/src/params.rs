//! Protocol constants and the phase schedule derived from `(n, epsilon)`.
//!
//! All logarithms are base 2. Round counts use `lg n = ceil(log2 n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NoiseChannel;

/// `Stage II` sample-count scale used by the analysis (`r = ceil(2^22 / eps^2)`).
pub const ANALYSIS_R_SCALE: f64 = 4_194_304.0;

/// Scale factors for every derived parameter.
///
/// Defaults are desk-scale values: large enough for high empirical success at
/// `n <= 2^14`, far below what the asymptotic argument needs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct ProtocolConstants {
    /// `s = ceil(c_s / eps^2)`; phase 0 lasts `s * lg n` rounds.
    pub c_s: f64,
    /// `beta = ceil(c_beta / eps^2)`; length of phases `1..=T`.
    pub c_beta: f64,
    /// `f = ceil(c_f / eps^2)`; phase `T+1` lasts `f * lg n` rounds.
    pub c_f: f64,
    /// Final stage-II phase length `~ c_final_stage2 * lg n / eps^2`.
    pub c_final_stage2: f64,
    /// `r = ceil(r_scale / eps^2)` for the first `k` stage-II phases.
    pub r_scale: f64,
    /// Exponent `c` in the `1 - n^-c` target of the direct-sampling yardstick.
    pub c_direct: f64,
    /// Minimum initial-set size is `ceil(c_entry * lg n / eps^2)`.
    pub c_entry: f64,
    /// Regime parameter in `eps > n^-(1/2 - eta)`.
    pub eta: f64,
}

impl Default for ProtocolConstants {
    fn default() -> Self {
        Self {
            c_s: 1.0,
            c_beta: 3.0,
            c_f: 9.0,
            c_final_stage2: 2.0,
            r_scale: 8.0,
            c_direct: 2.0,
            c_entry: 1.0,
            eta: 0.1,
        }
    }
}

impl ProtocolConstants {
    /// Defaults with the analysis' stage-II constant `2^22`.
    pub fn analysis() -> Self {
        Self {
            r_scale: ANALYSIS_R_SCALE,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [
            ("cS", self.c_s),
            ("cBeta", self.c_beta),
            ("cF", self.c_f),
            ("cFinalStage2", self.c_final_stage2),
            ("rScale", self.r_scale),
            ("cDirect", self.c_direct),
            ("cEntry", self.c_entry),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bad.push(format!(
                    "constants.{name} must be a positive finite number, got {v}"
                ));
            }
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            bad.push(format!(
                "constants.eta must lie in (0, 1/2), got {}",
                self.eta
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}

/// Half-open round interval `[start, start + len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub start: u64,
    pub len: u64,
}

impl PhaseSpan {
    pub fn end(&self) -> u64 {
        self.start + self.len
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScheduleParams {
    pub n: usize,
    pub epsilon: f64,
    /// `ceil(log2 n)`.
    pub lg_n: u64,
    pub s: u64,
    pub beta: u64,
    pub f: u64,
    pub beta_s: u64,
    pub beta_f: u64,
    pub t: u32,
    /// Phases `0..=T+1` of stage I, consecutive from round 0.
    pub stage1_phases: Vec<PhaseSpan>,
    pub r: u64,
    pub gamma: u64,
    pub delta1: f64,
    pub k: u32,
    /// `m_1 ..= m_{k+1}`.
    pub stage2_phase_lengths: Vec<u64>,
}

/// `ceil(x)` that ignores floating noise just above an integer (0.1^2 etc.).
pub fn ceil_tol(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

pub fn floor_tol(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 * r.abs().max(1.0) {
        r as i64
    } else {
        x.floor() as i64
    }
}

pub fn ceil_log2(n: usize) -> u64 {
    n.next_power_of_two().trailing_zeros() as u64
}

/// Largest `t >= 0` with `beta_s * (beta+1)^t <= n/2`, i.e.
/// `floor(log(n / 2 beta_s) / log(beta + 1))` clamped at 0.
fn stage1_depth(n: usize, beta_s: u64, beta: u64) -> u32 {
    let n = n as u128;
    let mut t = 0u32;
    let mut grown = beta_s as u128 * 2 * (beta as u128 + 1);
    while grown <= n {
        t += 1;
        grown = grown.saturating_mul(beta as u128 + 1);
    }
    t
}

/// Smallest integer `>= x` that is `2 mod 4`, so that half of it is odd.
fn round_up_to_2_mod_4(x: f64) -> u64 {
    let mut m = ceil_tol(x).max(2);
    while m % 4 != 2 {
        m += 1;
    }
    m
}

pub fn derive_schedule(
    n: usize,
    channel: &NoiseChannel,
    constants: &ProtocolConstants,
) -> Result<ScheduleParams> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 agents, got {n}")));
    }
    constants.validate()?;
    let eps = channel.epsilon();
    let inv_eps2 = 1.0 / (eps * eps);
    let lg_n = ceil_log2(n);

    let s = ceil_tol(constants.c_s * inv_eps2).max(1);
    let beta = ceil_tol(constants.c_beta * inv_eps2).max(1);
    let f = ceil_tol(constants.c_f * inv_eps2).max(1);
    if beta <= s {
        return Err(Error::ConstantsOrdering {
            inequality: "beta > s",
            f,
            beta,
            s,
        });
    }
    if f <= beta {
        return Err(Error::ConstantsOrdering {
            inequality: "f > beta",
            f,
            beta,
            s,
        });
    }

    let beta_s = s * lg_n;
    let beta_f = f * lg_n;
    let t = stage1_depth(n, beta_s, beta);

    let mut stage1_phases = Vec::with_capacity(t as usize + 2);
    stage1_phases.push(PhaseSpan {
        start: 0,
        len: beta_s,
    });
    for i in 1..=t as u64 {
        stage1_phases.push(PhaseSpan {
            start: beta_s + (i - 1) * beta,
            len: beta,
        });
    }
    stage1_phases.push(PhaseSpan {
        start: beta_s + t as u64 * beta,
        len: beta_f,
    });

    let r = ceil_tol(constants.r_scale * inv_eps2).max(1);
    let gamma = 2 * r + 1;
    let log_n = (n as f64).log2();
    let delta1 = (log_n / n as f64).sqrt();
    let k = ((1.0 / delta1).log2().ceil() as u32).max(1);
    let mut stage2_phase_lengths = vec![2 * gamma; k as usize];
    stage2_phase_lengths.push(round_up_to_2_mod_4(
        constants.c_final_stage2 * inv_eps2 * lg_n as f64,
    ));

    Ok(ScheduleParams {
        n,
        epsilon: eps,
        lg_n,
        s,
        beta,
        f,
        beta_s,
        beta_f,
        t,
        stage1_phases,
        r,
        gamma,
        delta1,
        k,
        stage2_phase_lengths,
    })
}

impl ScheduleParams {
    pub fn stage1_rounds(&self) -> u64 {
        self.stage1_phases.last().map_or(0, |p| p.end())
    }

    pub fn stage2_rounds(&self) -> u64 {
        self.stage2_phase_lengths.iter().sum()
    }

    pub fn total_rounds(&self) -> u64 {
        self.stage1_rounds() + self.stage2_rounds()
    }

    /// Index of the last stage-I phase, `T + 1`.
    pub fn final_stage1_phase(&self) -> u32 {
        self.t + 1
    }

    /// Size of the majority subset in stage-II phase `i` (1-based): `m_i / 2`.
    pub fn stage2_subset(&self, i: usize) -> u64 {
        self.stage2_phase_lengths[i - 1] / 2
    }

    /// Structural checks on the schedule.
    pub fn check_well_formed(&self) -> std::result::Result<(), String> {
        let mut next = 0;
        for (i, p) in self.stage1_phases.iter().enumerate() {
            if p.start != next || p.len == 0 {
                return Err(format!("stage-I phase {i} is {p:?}, expected start {next}"));
            }
            next = p.end();
        }
        if self.stage1_phases.len() != self.t as usize + 2 {
            return Err("stage I must have T+2 phases".into());
        }
        if self.t >= 1 {
            let grown = self.beta_s as f64 * ((self.beta + 1) as f64).powi(self.t as i32);
            if grown > self.n as f64 / 2.0 {
                return Err(format!("beta_s (beta+1)^T = {grown} exceeds n/2"));
            }
        }
        if self.stage2_phase_lengths.len() != self.k as usize + 1 {
            return Err("stage II must have k+1 phases".into());
        }
        for (i, &m) in self.stage2_phase_lengths.iter().enumerate() {
            if m % 4 != 2 {
                return Err(format!("m_{} = {m} gives an even majority subset", i + 1));
            }
        }
        Ok(())
    }
}

/// Number of the first stage-I phase to execute for an initial opinionated set
/// of `a_size` agents: `floor(log(|A| / log n) / (2 log(1/eps)))` clamped to
/// `[0, T+1]`.
pub fn majority_entry_phase(
    a_size: usize,
    schedule: &ScheduleParams,
    constants: &ProtocolConstants,
) -> Result<u32> {
    let eps = schedule.epsilon;
    let log_n = (schedule.n as f64).log2();
    let required = ceil_tol(constants.c_entry * log_n / (eps * eps)) as usize;
    if a_size < required {
        return Err(Error::InitialSetTooSmall {
            size: a_size,
            required,
        });
    }
    let top = schedule.final_stage1_phase();
    let denom = 2.0 * (1.0 / eps).log2();
    let raw = (a_size as f64 / log_n).log2() / denom;
    let phase = floor_tol(raw).clamp(0, top as i64);
    Ok(phase as u32)
}
