use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use adaptest_core::bank::{synth_bank, ItemBank, SynthSpec};
use adaptest_core::engine::{replay, start_session, ReplayMode, SessionConfig, SessionEvent, SessionStatus};
use adaptest_core::irt::{posterior_from_responses, GridSpec, ItemParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Posterior mean and SD by Simpson's rule on 10,001 points over [−12, 12],
/// working directly with densities.
fn oracle(prior_mean: f64, prior_sd: f64, responses: &[(ItemParams, bool)]) -> (f64, f64) {
    let n = 10_001;
    let (lo, hi) = (-12.0f64, 12.0f64);
    let h = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
    let log_f: Vec<f64> = xs
        .iter()
        .map(|&t| {
            let z = (t - prior_mean) / prior_sd;
            let mut lf = -0.5 * z * z;
            for (p, y) in responses {
                let pr = 1.0 / (1.0 + (-p.a * (t + p.b)).exp());
                lf += if *y { pr.ln() } else { (1.0 - pr).ln() };
            }
            lf
        })
        .collect();
    let max = log_f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let f: Vec<f64> = log_f.iter().map(|v| (v - max).exp()).collect();
    let simpson = |g: &dyn Fn(usize) -> f64| {
        let mut s = g(0) + g(n - 1);
        for i in 1..n - 1 {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i);
        }
        s * h / 3.0
    };
    let z = simpson(&|i| f[i]);
    let m = simpson(&|i| xs[i] * f[i]) / z;
    let v = simpson(&|i| (xs[i] - m).powi(2) * f[i]) / z;
    (m, v.sqrt())
}

#[test]
fn grid_posterior_matches_dense_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut grid_time = Duration::ZERO;
    for case in 0..100 {
        let len = rng.random_range(0..=30);
        let responses: Vec<(ItemParams, bool)> = (0..len)
            .map(|_| {
                let a = rng.random_range(-0.7f64..0.7).exp();
                let b = rng.random_range(-2.0..2.0);
                (ItemParams { a, b }, rng.random::<bool>())
            })
            .collect();
        let prior_mean = if case % 2 == 0 { 0.0 } else { -1.0 };
        let t = Instant::now();
        let post = posterior_from_responses(
            prior_mean,
            1.0,
            responses.iter().map(|(p, y)| (p, *y)),
            GridSpec::default(),
        )
        .unwrap();
        grid_time += t.elapsed();
        let (m, s) = oracle(prior_mean, 1.0, &responses);
        assert!((post.mean() - m).abs() < 1e-4, "case {case}: {} vs {m}", post.mean());
        assert!((post.sd() - s).abs() < 1e-4, "case {case}: {} vs {s}", post.sd());
    }
    assert!(grid_time < Duration::from_secs(1), "{grid_time:?}");
}

fn covered(bank: &ItemBank, state: &adaptest_core::engine::SessionState) -> BTreeSet<(String, String)> {
    state
        .administered()
        .iter()
        .filter(|a| a.scored)
        .flat_map(|a| {
            let item = bank.item(&a.item_id).unwrap();
            bank.covering_dimensions
                .iter()
                .filter_map(|d| item.features.get(d).map(|v| (d.clone(), v.clone())))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn all_targets(bank: &ItemBank) -> BTreeSet<(String, String)> {
    bank.covering_dimensions
        .iter()
        .flat_map(|d| bank.vocabularies[d].iter().map(move |v| (d.clone(), v.clone())))
        .collect()
}

fn run_random(bank: &ItemBank, config: SessionConfig, rng: &mut ChaCha8Rng) -> adaptest_core::engine::SessionState {
    let mut s = start_session(bank, config, "s").unwrap();
    while s.pending().is_some() {
        let correct = rng.random::<bool>();
        s.submit_correctness(bank, correct).unwrap();
    }
    s
}

#[test]
fn every_session_covers_every_feature_value() {
    for (spec, expect) in [(SynthSpec::vlat_like(), 20), (SynthSpec::calvi_like(), 11)] {
        let bank = synth_bank(99, &spec).unwrap();
        let targets = all_targets(&bank);
        assert_eq!(targets.len(), expect);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 0..1000 {
            let cfg = SessionConfig::for_bank(&bank, 3, k);
            let s = run_random(&bank, cfg, &mut rng);
            assert_eq!(s.status(), SessionStatus::Completed);
            assert_eq!(covered(&bank, &s), targets, "session {k} on {}", bank.bank_id);
        }
    }
}

#[test]
fn unscored_answers_leave_the_trajectory_untouched() {
    let bank = synth_bank(12, &SynthSpec::calvi_like()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..50 {
        let s = run_random(&bank, SessionConfig::for_bank(&bank, 8, k), &mut rng);
        let mut mutated = s.transcript().to_vec();
        let mut touched = 0;
        for ev in &mut mutated {
            if let SessionEvent::AnswerSubmitted { item_id, selected_index, scored: false, .. } = ev {
                let n = bank.item(item_id).unwrap().options.len();
                *selected_index = (*selected_index + 1) % n;
                touched += 1;
            }
        }
        assert_eq!(touched, 4);
        let again = replay(&bank, &mutated, ReplayMode::Recompute).unwrap();
        let trajectory = |events: &[SessionEvent]| -> Vec<(u64, u64)> {
            events
                .iter()
                .filter_map(|e| match e {
                    SessionEvent::AnswerSubmitted { posterior_mean, posterior_sd, .. } => {
                        Some((posterior_mean.to_bits(), posterior_sd.to_bits()))
                    }
                    _ => None,
                })
                .collect()
        };
        assert_eq!(trajectory(s.transcript()), trajectory(again.transcript()));
        let served = |st: &adaptest_core::engine::SessionState| -> Vec<String> {
            st.administered().iter().map(|a| a.item_id.clone()).collect()
        };
        assert_eq!(served(&s), served(&again));
    }
}

#[test]
fn verify_replay_reproduces_the_transcript() {
    let bank = synth_bank(12, &SynthSpec::vlat_like()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = run_random(&bank, SessionConfig::for_bank(&bank, 0, 1), &mut rng);
    let again = replay(&bank, s.transcript(), ReplayMode::Verify).unwrap();
    assert_eq!(again, s);
    assert_eq!(again.final_score().unwrap(), s.final_score().unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sessions_respect_their_invariants(bank_seed in 0u64..1000, session_seed in any::<u64>(), calvi in any::<bool>(), extra in 0usize..8) {
        let spec = if calvi { SynthSpec::calvi_like() } else { SynthSpec::vlat_like() };
        let bank = synth_bank(bank_seed, &spec).unwrap();
        let mut cfg = SessionConfig::for_bank(&bank, bank_seed, session_seed);
        cfg = adaptest_core::sim::with_scored_length(&cfg, cfg.scored_length + extra, bank_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(session_seed);
        let s = run_random(&bank, cfg.clone(), &mut rng);

        let ids: Vec<&str> = s.administered().iter().map(|a| a.item_id.as_str()).collect();
        let distinct: BTreeSet<&str> = ids.iter().copied().collect();
        prop_assert_eq!(distinct.len(), ids.len());
        prop_assert_eq!(ids.len(), cfg.total_length());
        prop_assert_eq!(s.scored_count(), cfg.scored_length);
        for a in s.administered() {
            prop_assert_eq!(a.scored, cfg.unscored_positions.binary_search(&a.position).is_err());
        }
        prop_assert_eq!(covered(&bank, &s), all_targets(&bank));
        let score = s.final_score().unwrap();
        prop_assert!(score.theta_se > 0.0 && score.theta_se < 1.0 + 1e-12);
        prop_assert!((0.0..=1.0).contains(&score.raw_correctness));
    }
}
