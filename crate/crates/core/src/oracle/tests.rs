use super::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn brute_majority(gamma: u32, q: f64) -> f64 {
    let mut total = 0.0;
    for mask in 0u32..(1 << gamma) {
        let ones = mask.count_ones();
        if 2 * ones > gamma {
            total += q.powi(ones as i32) * (1.0 - q).powi((gamma - ones) as i32);
        }
    }
    total
}

#[test]
fn sample_correct_prob_values() {
    assert_eq!(sample_correct_prob(0.0, 0.3).unwrap(), 0.5);
    assert_eq!(sample_correct_prob(0.5, 0.5).unwrap(), 1.0);
    assert!((sample_correct_prob(0.1, 0.25).unwrap() - 0.55).abs() < 1e-15);
    assert!(sample_correct_prob(0.6, 0.25).is_err());
    assert!(sample_correct_prob(0.1, 0.0).is_err());
}

#[test]
fn majority_trivial_cases() {
    for q in [0.5, 0.6, 0.99] {
        assert!((majority_correct_prob(1, q).unwrap() - q).abs() < 1e-15);
    }
    for g in [1, 3, 101, 2_000_001] {
        assert_eq!(majority_correct_prob(g, 0.5).unwrap(), 0.5);
    }
    assert!(majority_correct_prob(4, 0.6).is_err());
    assert!(majority_correct_prob(5, 0.4).is_err());
}

#[test]
fn majority_five_samples_fixture() {
    let p = majority_correct_prob(5, 0.6).unwrap();
    assert!((p - 0.68256).abs() < 1e-14);
    assert!((brute_majority(5, 0.6) - 0.68256).abs() < 1e-14);
}

#[test]
fn majority_matches_enumeration() {
    for gamma in (1..=11).step_by(2) {
        for q in [0.5, 0.55, 0.75, 1.0] {
            let d = majority_correct_prob(gamma as u64, q).unwrap();
            assert!((d - brute_majority(gamma, q)).abs() < 1e-12);
        }
    }
}

#[test]
fn wrong_prob_complements() {
    for &(g, q) in &[(5u64, 0.6), (101, 0.55), (3_000_001, 0.5005)] {
        let c = majority_correct_prob(g, q).unwrap();
        let w = majority_wrong_prob(g, q).unwrap();
        assert!((c + w - 1.0).abs() < 1e-12, "g={g}");
    }
}

#[test]
fn monotone_in_q_and_gamma() {
    let mut prev = 0.0;
    for i in 0..=50 {
        let q = 0.5 + i as f64 / 100.0;
        let p = majority_correct_prob(41, q).unwrap();
        assert!(p >= prev - 1e-15);
        prev = p;
    }
    let mut prev = 0.0;
    for g in (1..400).step_by(2) {
        let p = majority_correct_prob(g, 0.53).unwrap();
        assert!(p >= prev - 1e-15);
        prev = p;
    }
}

#[test]
fn bound_check_full_scale_fixtures() {
    let frozen = [
        (0.25, 1e-6, 0.504_621_737_707_496_1),
        (0.4, 1e-8, 0.500_046_218_411_242),
        (0.05, 1e-8, 0.500_046_218_410_591_2),
        (0.05, 1e-4, 0.876_674_817_471_170_1),
        (0.1, 1e-4, 0.876_674_817_700_459_4),
    ];
    for (eps, delta, expected) in frozen {
        let c = majority_bound_check(eps, delta, ANALYSIS_R_SCALE).unwrap();
        assert!(
            ((c.probability - expected) / expected).abs() < 1e-9,
            "eps={eps} delta={delta}: {} vs {expected}",
            c.probability
        );
        assert!(c.holds);
    }
    let c = majority_bound_check(0.25, 0.3, ANALYSIS_R_SCALE).unwrap();
    assert!(c.holds && c.probability >= 0.51);
    assert_eq!(c.regime, DeltaRegime::Large);
    assert_eq!(
        majority_bound_check(0.25, 1e-8, ANALYSIS_R_SCALE)
            .unwrap()
            .regime,
        DeltaRegime::Small
    );
    assert_eq!(
        majority_bound_check(0.25, 1e-4, ANALYSIS_R_SCALE)
            .unwrap()
            .regime,
        DeltaRegime::Medium
    );
}

#[test]
fn bound_check_unscaled_is_reported_not_asserted() {
    let c = majority_bound_check(0.25, 0.3, 1.0).unwrap();
    assert_eq!(c.r, 16);
    assert_eq!(c.gamma, 33);
    assert_eq!(c.holds, c.probability >= c.bound - BOUND_SLACK);
    // At a small delta the under-scaled sample count cannot deliver the 4x boost.
    let c = majority_bound_check(0.25, 1e-3, 1.0).unwrap();
    assert!(!c.holds);
}

#[test]
fn bound_check_domain() {
    assert!(majority_bound_check(0.25, 0.0, 1.0).is_err());
    assert!(majority_bound_check(0.6, 0.1, 1.0).is_err());
    assert!(majority_bound_check(0.25, 0.1, -1.0).is_err());
}

#[test]
fn two_step_values() {
    assert_eq!(two_step_correct_prob(0.0).unwrap(), 0.5);
    assert_eq!(two_step_correct_prob(0.5).unwrap(), 1.0);
    assert!(two_step_correct_prob(0.6).is_err());
}

#[test]
fn two_step_distribution_is_binomial() {
    let dist = two_step_count_distribution(21, 0.1).unwrap();
    for (j, p) in dist.iter().enumerate() {
        let reference = special::dbinom_log(j as f64, 21.0, 0.6).exp();
        assert!((p - reference).abs() < 1e-14);
    }
}

#[test]
fn two_step_identity_on_rationals() {
    // Per-player law and the full count law, exactly.
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    for (num, den) in [(0, 1), (1, 10), (1, 4), (1, 3), (1, 2)] {
        let b = BigRational::new(BigInt::from(num), BigInt::from(den));
        let two_b = &b + &b;
        let per_player = &half + &half * &two_b;
        assert_eq!(per_player, &half + &b);

        let gamma = 5usize;
        let choose = |n: usize, k: usize| -> BigRational {
            let mut c = BigInt::one();
            for i in 0..k {
                c = c * BigInt::from(n - i) / BigInt::from(i + 1);
            }
            BigRational::from_integer(c)
        };
        let pow = |x: &BigRational, e: usize| (0..e).fold(BigRational::one(), |acc, _| acc * x);
        let one = BigRational::one();
        let mut dist = vec![BigRational::zero(); gamma + 1];
        for c in 0..=gamma {
            let coin = choose(gamma, c) * pow(&half, gamma);
            let wrong = gamma - c;
            for x in 0..=wrong {
                let corr = choose(wrong, x) * pow(&two_b, x) * pow(&(&one - &two_b), wrong - x);
                dist[c + x] += &coin * corr;
            }
        }
        let q = &half + &b;
        for (j, p) in dist.iter().enumerate() {
            let expected = choose(gamma, j) * pow(&q, j) * pow(&(&one - &q), gamma - j);
            assert_eq!(*p, expected, "b={num}/{den} j={j}");
        }
    }
}

#[test]
fn two_step_simulation_total_variation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 200_000;
    let mut hist = [0u64; 22];
    for _ in 0..trials {
        hist[two_step_sample(21, 0.1, &mut rng).unwrap() as usize] += 1;
    }
    let tv: f64 = hist
        .iter()
        .enumerate()
        .map(|(j, &h)| {
            (h as f64 / trials as f64 - special::dbinom_log(j as f64, 21.0, 0.6).exp()).abs()
        })
        .sum::<f64>()
        / 2.0;
    assert!(tv <= 0.01, "tv={tv}");
}

#[test]
fn stirling_small_cases() {
    assert!((central_binomial_prob(1, 1) - 0.375).abs() < 1e-15);
    assert!(stirling_check(1).unwrap().holds);
    let p101 = central_binomial_prob(100, 1);
    assert!((p101 - 0.056_069_5).abs() < 1e-7);
    let approx = (2.0 / (std::f64::consts::PI * 201.0)).sqrt();
    assert!(((p101 - approx) / approx).abs() < 0.01);
    assert!(stirling_check(100).unwrap().holds);
    assert!(stirling_check(0).is_err());
}

#[test]
fn flip_count_cases() {
    let c = flip_count_bound_check(10, 0.05).unwrap();
    let c1 = c.case1.unwrap();
    assert!((c1.value - 0.383_546_284_11).abs() < 1e-10);
    assert!((c1.bound - 0.009_157_819).abs() < 1e-8);
    assert!(c1.holds);
    assert!(c.case2.is_none());

    let z = flip_count_bound_check(10, 0.0).unwrap().case1.unwrap();
    assert_eq!((z.value, z.bound, z.holds), (0.0, 0.0, true));

    let c = flip_count_bound_check(10_000, 0.01).unwrap();
    assert!(c.case1.is_none());
    let c2 = c.case2.unwrap();
    assert_eq!(c2.x, 100);
    assert!(c2.holds);
}

#[test]
fn boost_map_values() {
    assert!((boost_map(0.0, 0.3, 21, 0.7).unwrap() - 0.5).abs() < 1e-15);
    assert!((boost_map(0.5, 0.5, 3, 1.0).unwrap() - 1.0).abs() < 1e-15);
    let v = boost_map(0.05, 0.25, 21, 0.9).unwrap();
    assert!((v - 0.587_563_991_941_694_3).abs() < 1e-13);
}

#[test]
fn direct_requirement_fixtures() {
    assert_eq!(direct_sample_requirement(0.5, 1024, 2.0).unwrap(), 1);
    assert_eq!(direct_sample_requirement(0.25, 1024, 2.0).unwrap(), 79);
    assert_eq!(direct_sample_requirement(0.1, 1024, 2.0).unwrap(), 557);
    assert_eq!(direct_sample_requirement(0.25, 1 << 20, 2.0).unwrap(), 173);
    let mut prev = u64::MAX;
    for i in 1..=25 {
        let m = direct_sample_requirement(i as f64 / 50.0, 4096, 2.0).unwrap();
        assert!(m <= prev);
        assert_eq!(m % 2, 1);
        prev = m;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn beta_and_direct_agree(i in 0u64..500_000, dq in 0.0f64..0.05) {
        let gamma = 2 * i + 1;
        let q = 0.5 + dq;
        let d = majority_correct_prob_direct(gamma, q).unwrap();
        let b = majority_correct_prob_beta(gamma, q).unwrap();
        prop_assert!(((d - b) / d).abs() < 1e-10, "gamma={} q={}: {} vs {}", gamma, q, d, b);
    }
}
