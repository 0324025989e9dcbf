//! Acceptance gate A1-A11. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use flipsim::harness::{
    parallel_map, run_cell, run_experiment, wilson_interval, ExperimentSpec, Protocol, Z95,
};
use flipsim::oracle::{
    majority_bound_check, majority_correct_prob, stirling_check, ANALYSIS_R_SCALE, BOUND_SLACK,
};
use flipsim::params::{ceil_log2, derive_schedule};
use flipsim::protocols::{run_broadcast_observed, EventLog, Outcome};
use flipsim::{NoiseChannel, Opinion, ProtocolConstants, RngStream, SimConfig};

const SEED: u64 = 20_240_601;
/// Fixed message-count constant for A6.
const MESSAGE_C: f64 = 40.0;

struct Verdict {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, pass, detail }
}

fn a1() -> Verdict {
    let start = Instant::now();
    let eps = [0.05, 0.1, 0.25, 0.4];
    let deltas = [1e-8, 1e-6, 1e-4, 1e-2, 0.05, 0.1, 0.25, 0.4];
    let mut failures = Vec::new();
    let mut min_margin = f64::INFINITY;
    for &e in &eps {
        for &d in &deltas {
            match majority_bound_check(e, d, ANALYSIS_R_SCALE) {
                Ok(c) => {
                    min_margin = min_margin.min(c.probability - c.bound);
                    if !c.holds {
                        failures.push(format!(
                            "eps={e} delta={d} p={} bound={}",
                            c.probability, c.bound
                        ));
                    }
                }
                Err(err) => failures.push(format!("eps={e} delta={d}: {err}")),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "A1",
        failures.is_empty() && secs < 10.0,
        format!(
            "majority bound at r=ceil(2^22/eps^2): {}/32 hold (slack {BOUND_SLACK:e}), min margin {min_margin:.3e}, {secs:.2}s {}",
            32 - failures.len(),
            failures.join("; ")
        ),
    )
}

fn a2() -> Verdict {
    let start = Instant::now();
    let mut failing = Vec::new();
    let mut worst = (0, f64::INFINITY);
    for r in 1..=10_000u64 {
        let c = stirling_check(r).expect("r >= 1");
        if !c.holds {
            failing.push(r);
        }
        if c.min_ratio < worst.1 {
            worst = (r, c.min_ratio);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "A2",
        failing.is_empty() && secs < 5.0,
        format!(
            "central binomial terms > 1/(10 sqrt r), r=1..=10^4: {} failures, tightest r={} ratio {:.4}, {secs:.2}s",
            failing.len(),
            worst.0,
            worst.1
        ),
    )
}

fn brute_majority(gamma: u32, q: f64) -> f64 {
    (0u32..(1 << gamma))
        .filter(|m| 2 * m.count_ones() > gamma)
        .map(|m| q.powi(m.count_ones() as i32) * (1.0 - q).powi((gamma - m.count_ones()) as i32))
        .sum()
}

fn a3() -> Verdict {
    let start = Instant::now();
    let mut max_err: f64 = 0.0;
    for gamma in (1..=15u32).step_by(2) {
        for q in [0.5, 0.55, 0.6, 0.75, 0.9, 1.0] {
            let p = majority_correct_prob(gamma as u64, q).expect("valid input");
            max_err = max_err.max((p - brute_majority(gamma, q)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "A3",
        max_err <= 1e-12 && secs < 1.0,
        format!(
            "tail vs 2^gamma enumeration, odd gamma<=15: max abs error {max_err:.2e}, {secs:.3}s"
        ),
    )
}

fn a4() -> Verdict {
    let start = Instant::now();
    let mut spec = ExperimentSpec::new(Protocol::Broadcast, vec![256, 1024], vec![0.5], 100);
    spec.master_seed = SEED;
    let report = run_experiment(&spec).expect("noiseless sweep");
    let rates: Vec<String> = report
        .per_cell
        .iter()
        .map(|c| format!("n={}: {}", c.n, c.success_rate))
        .collect();
    verdict(
        "A4",
        report.per_cell.iter().all(|c| c.success_rate == 1.0),
        format!(
            "noiseless broadcast, 100 seeds: {}, {:.1}s",
            rates.join(", "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn success_counts(outcomes: &[Outcome]) -> (u64, u64) {
    (
        outcomes.iter().filter(|o| o.is_success()).count() as u64,
        outcomes.len() as u64,
    )
}

fn a5(outcomes: &[Outcome], secs: f64) -> Verdict {
    let (s, n) = success_counts(outcomes);
    let (lo, hi) = wilson_interval(s, n, Z95);
    let rate = s as f64 / n as f64;
    verdict(
        "A5",
        rate >= 0.99 && lo >= 0.96,
        format!("broadcast n=4096 eps=0.25: {s}/{n} = {rate:.3}, Wilson95 [{lo:.4}, {hi:.4}], {secs:.1}s"),
    )
}

fn a6() -> Verdict {
    let start = Instant::now();
    let mut spec = ExperimentSpec::new(
        Protocol::Broadcast,
        vec![256, 1024, 4096, 16384],
        vec![0.25],
        10,
    );
    spec.master_seed = SEED + 6;
    let report = run_experiment(&spec).expect("scaling sweep");
    let mut ratios = Vec::new();
    let mut msg_ratios = Vec::new();
    for c in &report.per_cell {
        let unit = (c.n as f64).log2() / (c.epsilon * c.epsilon);
        ratios.push(c.mean_rounds / unit);
        msg_ratios.push(c.mean_messages / (c.n as f64 * unit));
    }
    let spread = ratios.iter().cloned().fold(0.0, f64::max)
        / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_c = msg_ratios.iter().cloned().fold(0.0, f64::max);
    let fit = report.scaling_fit.as_ref();
    verdict(
        "A6",
        spread <= 2.0 && max_c <= MESSAGE_C,
        format!(
            "rounds/(log2 n/eps^2) = [{}] spread {spread:.3} (<= 2); messages/(n log2 n/eps^2) max {max_c:.2} (<= C={MESSAGE_C}); fit slope {:.2} max rel residual {:.3}; {:.1}s",
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", "),
            fit.map_or(f64::NAN, |f| f.slope),
            fit.map_or(f64::NAN, |f| f.max_relative_residual),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn a7(outcomes: &[Outcome]) -> Verdict {
    let (n, eps) = (4096usize, 0.25);
    let constants = ProtocolConstants::default();
    let schedule = derive_schedule(n, &NoiseChannel::from_bias(eps).unwrap(), &constants).unwrap();
    let beta = schedule.beta as f64;
    let lg = (n as f64).log2();
    let t = schedule.t as usize;
    let runs = outcomes.len();
    let (mut upper_ok, mut lower_ok, mut growth_ok, mut bias_ok) = (0, 0, 0, 0);
    for o in outcomes {
        let phases = &o.stage1.as_ref().expect("stage I recorded").per_phase;
        let x0 = phases[0].x_cumulative as f64;
        let upper =
            (1..=t).all(|i| phases[i].x_cumulative as f64 <= (beta + 1.0).powi(i as i32) * x0);
        let lower = (1..=t)
            .all(|i| phases[i].x_cumulative as f64 >= (beta + 1.0).powi(i as i32) * x0 / 16.0);
        let growth = (1..=t + 1).all(|i| phases[i].y_new as f64 >= beta.powi(i as i32 - 1) * lg);
        let bias = (0..=t + 1).all(|i| {
            phases[i]
                .bias
                .is_some_and(|b| b >= eps.powi(i as i32 + 1) / 2.0)
        });
        upper_ok += upper as usize;
        lower_ok += lower as usize;
        growth_ok += growth as usize;
        bias_ok += bias as usize;
    }
    let frac = |k: usize| k as f64 / runs as f64;
    verdict(
        "A7",
        upper_ok == runs && frac(lower_ok) >= 0.95 && frac(growth_ok) >= 0.95 && frac(bias_ok) >= 0.95,
        format!(
            "stage I over {runs} runs (T={t}{}): X upper bound {upper_ok}/{runs}, X lower {lower_ok}/{runs}, Y growth {growth_ok}/{runs}, phase bias {bias_ok}/{runs}",
            if t == 0 { ", X sandwich vacuous" } else { "" }
        ),
    )
}

fn a8(outcomes: &[Outcome]) -> Verdict {
    let n = 4096f64;
    let threshold = 4.0 * (n.log2() / n).sqrt();
    let (mut observed, mut boosted, mut phases, mut successful) = (0, 0, 0, 0);
    for o in outcomes {
        for p in &o.stage2 {
            phases += 1;
            if p.successful_count as f64 >= n / 2.0 {
                successful += 1;
            }
            let delta = p.start_correct_fraction - 0.5;
            if delta >= threshold {
                observed += 1;
                if p.correct_fraction >= (0.5 + 1.7 * delta).min(0.5 + 1.0 / 800.0) {
                    boosted += 1;
                }
            }
        }
    }
    let boost_frac = boosted as f64 / observed.max(1) as f64;
    let succ_frac = successful as f64 / phases.max(1) as f64;
    verdict(
        "A8",
        observed > 0 && boost_frac >= 0.95 && succ_frac >= 0.99,
        format!(
            "stage II: boost met in {boosted}/{observed} phases with delta >= {threshold:.4}; >= n/2 successful in {successful}/{phases} phases"
        ),
    )
}

fn a9(sync: &[Outcome], sync_spec: &ExperimentSpec) -> Verdict {
    let start = Instant::now();
    let mut spec = sync_spec.clone();
    spec.protocol = Protocol::Desync;
    let desync = run_cell(&spec, 0).expect("desync runs");
    let n = 4096usize;
    let schedule =
        derive_schedule(n, &NoiseChannel::from_bias(0.25).unwrap(), &spec.constants).unwrap();
    let lg = ceil_log2(n);
    let d = 2 * lg;
    let bound = (schedule.t as u64 + 2) * d + 6 * lg;
    let (ss, sn) = success_counts(sync);
    let (ds, dn) = success_counts(&desync);
    let (lo, hi) = wilson_interval(ss, sn, Z95);
    let rate = ds as f64 / dn as f64;
    let worst = sync
        .iter()
        .zip(&desync)
        .map(|(s, d)| d.rounds_used as i64 - s.rounds_used as i64)
        .max()
        .unwrap_or(0);
    let within = sync
        .iter()
        .zip(&desync)
        .all(|(s, d)| d.rounds_used <= s.rounds_used + bound);
    verdict(
        "A9",
        (lo..=hi).contains(&rate) && within,
        format!(
            "desync D={d}: {ds}/{dn} = {rate:.3} vs sync Wilson95 [{lo:.4}, {hi:.4}]; overhead max {worst} <= {bound} in every run: {within}; {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn a10() -> Verdict {
    let start = Instant::now();
    let eps = 0.1;
    let mut spec = ExperimentSpec::new(Protocol::BaselineForward, vec![1 << 14], vec![eps], 20);
    spec.master_seed = SEED + 10;
    let report = run_experiment(&spec).expect("forward baseline");
    let table = &report.per_cell[0].depth_table;
    let mut forward_ok = table.len() >= 5;
    let mut cells = Vec::new();
    for row in table.iter().take(5) {
        let c = row.depth as i32;
        let p0 = (0.5 + (2.0 * eps).powi(c)).min(1.0);
        let sd = (p0 * (1.0 - p0) / row.agents as f64).sqrt();
        let ok = row.fraction() <= p0 + 3.0 * sd;
        forward_ok &= ok;
        cells.push(format!(
            "c={c}: {:.4}<= {:.4}",
            row.fraction(),
            p0 + 3.0 * sd
        ));
    }

    let mut spec = ExperimentSpec::new(Protocol::BaselineSilent, vec![10_000], vec![0.25], 100);
    spec.master_seed = SEED + 11;
    spec.threshold = Some(2);
    let report = run_experiment(&spec).expect("silent-wait baseline");
    let cell = &report.per_cell[0];
    let sqrt_n = 100.0;
    let median = cell.median_first_threshold_round.unwrap_or(f64::NAN);
    let silent_ok = cell.successes == cell.runs && (0.5 * sqrt_n..=5.0 * sqrt_n).contains(&median);
    verdict(
        "A10",
        forward_ok && silent_ok,
        format!(
            "forward n=2^14 eps=0.1 depth correctness [{}]; silent-wait n=10^4 median first-threshold round {median} in [50, 500], {}/{} reached; {:.1}s",
            cells.join(", "),
            cell.successes,
            cell.runs,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn a11() -> Verdict {
    let start = Instant::now();
    let one = SimConfig::new(256, 0.25).unwrap();
    let zero = one.clone().with_correct_opinion(Opinion::Zero);
    let results = parallel_map(20, |seed| {
        let (mut l1, mut l0) = (EventLog::default(), EventLog::default());
        run_broadcast_observed(&one, &mut RngStream::for_run(SEED, 11, seed), &mut l1).unwrap();
        run_broadcast_observed(&zero, &mut RngStream::for_run(SEED, 11, seed), &mut l0).unwrap();
        let complemented: Vec<_> = l1.events.iter().map(|e| e.complemented()).collect();
        (complemented == l0.events, l1.events.len())
    })
    .expect("pool");
    let matching = results.iter().filter(|r| r.0).count();
    let events: usize = results.iter().map(|r| r.1).sum();
    verdict(
        "A11",
        matching == 20,
        format!(
            "relabelled event logs identical modulo complement: {matching}/20 seeds, {events} events, {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let mut verdicts = vec![a1(), a2(), a3(), a4()];

    let mut spec = ExperimentSpec::new(Protocol::Broadcast, vec![4096], vec![0.25], 200);
    spec.master_seed = SEED;
    let start = Instant::now();
    let broadcast = run_cell(&spec, 0).expect("broadcast runs");
    let secs = start.elapsed().as_secs_f64();
    verdicts.push(a5(&broadcast, secs));
    verdicts.push(a6());
    verdicts.push(a7(&broadcast));
    verdicts.push(a8(&broadcast));
    verdicts.push(a9(&broadcast, &spec));
    verdicts.push(a10());
    verdicts.push(a11());

    println!();
    for v in &verdicts {
        println!(
            "{} {} {}",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!(
        "\nacceptance: {} passed, {failed} failed",
        verdicts.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
