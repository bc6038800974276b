use adaptest_core::bank::{synth_bank, ItemBank, SynthSpec};
use adaptest_core::engine::SessionConfig;
use adaptest_core::irt::ItemParams;
use adaptest_core::sim::{
    draw_persons, recovery_analysis, respond, simulate_response, simulate_session, sweep_lengths,
    Baseline, RecoveryRule, SimulatedPerson,
};
use adaptest_core::{stats, Error};

fn vlat() -> ItemBank {
    synth_bank(31, &SynthSpec::vlat_like()).unwrap()
}

#[test]
fn persons_follow_the_requested_normal() {
    let ps = draw_persons(1_000_000, 0.7, 1.3, 5).unwrap();
    let thetas: Vec<f64> = ps.iter().map(|p| p.true_theta).collect();
    assert!((stats::mean(&thetas) - 0.7).abs() < 0.005);
    assert!((stats::sd(&thetas) - 1.3).abs() < 0.005);
    assert_eq!(draw_persons(50, 0.0, 1.0, 9).unwrap(), draw_persons(50, 0.0, 1.0, 9).unwrap());
}

#[test]
fn response_frequencies_match_the_model() {
    let ps = draw_persons(10_000, 0.0, 1.0, 3).unwrap();
    let easy = ItemParams { a: 3.0, b: 10.0 };
    let hits = ps
        .iter()
        .map(|p| SimulatedPerson { true_theta: 0.0, ..*p })
        .filter(|p| respond(p, 0, &easy))
        .count();
    assert!(hits as f64 / 1e4 > 0.999);

    let mid = ItemParams { a: 1.7, b: -0.4 };
    let hits = ps
        .iter()
        .map(|p| SimulatedPerson { true_theta: 0.4, ..*p })
        .filter(|p| respond(p, 1, &mid))
        .count();
    assert!((hits as f64 / 1e4 - 0.5).abs() < 0.02);
}

#[test]
fn responses_are_reproducible_and_unscored_items_rejected() {
    let bank = synth_bank(2, &SynthSpec::calvi_like()).unwrap();
    let p = draw_persons(1, 0.0, 1.0, 4).unwrap()[0];
    let scored = bank.scored_items().next().unwrap().item_id.clone();
    let unscored = bank.unscored_items().next().unwrap().item_id.clone();
    assert_eq!(
        simulate_response(&p, &bank, &scored).unwrap(),
        simulate_response(&p, &bank, &scored).unwrap()
    );
    assert!(matches!(
        simulate_response(&p, &bank, &unscored),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn full_length_against_full_bank_is_exactly_zero() {
    let bank = vlat();
    let persons = draw_persons(40, 0.0, 1.0, 8).unwrap();
    let cfg = SessionConfig::for_bank(&bank, 1, 0);
    let r = sweep_lengths(&bank, &cfg, &[19, 27, 53], &persons, Baseline::FullBank, 1).unwrap();
    assert!(r.at(53).unwrap().values.iter().all(|&v| v == 0.0));
    // The full bank is never less precise than a subset.
    assert!(r.at(19).unwrap().values.iter().all(|&v| v >= 0.0));
    assert!(r.at(19).unwrap().summary.median >= r.at(27).unwrap().summary.median);
    assert_eq!(r.at(27).unwrap().values.len(), 40);
}

#[test]
fn sweep_is_deterministic() {
    let bank = vlat();
    let persons = draw_persons(10, 0.0, 1.0, 8).unwrap();
    let cfg = SessionConfig::for_bank(&bank, 1, 0);
    let a = sweep_lengths(&bank, &cfg, &[20, 30], &persons, Baseline::FullBank, 1).unwrap();
    let b = sweep_lengths(&bank, &cfg, &[20, 30], &persons, Baseline::FullBank, 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn infeasible_length_names_the_minimum() {
    let bank = vlat();
    let persons = draw_persons(2, 0.0, 1.0, 8).unwrap();
    let cfg = SessionConfig::for_bank(&bank, 1, 0);
    let err = sweep_lengths(&bank, &cfg, &[18], &persons, Baseline::FullBank, 1).unwrap_err();
    assert_eq!(err, Error::LengthBelowCoverageMinimum { length: 18, minimum: 19 });
    assert!(err.to_string().contains("19"));
}

#[test]
fn static_reference_needs_a_reference_form() {
    let spec = SynthSpec { static_reference_len: None, ..SynthSpec::vlat_like() };
    let bank = synth_bank(3, &spec).unwrap();
    let persons = draw_persons(2, 0.0, 1.0, 8).unwrap();
    let cfg = SessionConfig::for_bank(&bank, 1, 0);
    assert!(matches!(
        sweep_lengths(&bank, &cfg, &[27], &persons, Baseline::StaticReference, 1),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn calvi_sessions_have_fifteen_positions() {
    let bank = synth_bank(6, &SynthSpec::calvi_like()).unwrap();
    let p = draw_persons(1, -1.0, 1.0, 2).unwrap()[0];
    let cfg = SessionConfig::for_bank(&bank, 4, p.rng_seed);
    let s = simulate_session(&bank, cfg, &p, "x").unwrap();
    assert_eq!(s.administered().len(), 15);
    assert_eq!(s.administered().iter().filter(|a| a.scored).count(), 11);
}

#[test]
fn recovery_counts_are_consistent() {
    let bank = synth_bank(6, &SynthSpec::calvi_like()).unwrap();
    let persons = draw_persons(60, -1.0, 1.0, 2).unwrap();
    let cfg = SessionConfig::for_bank(&bank, 4, 0);
    for rule in [RecoveryRule::Printed, RecoveryRule::PreviousStep] {
        let r = recovery_analysis(&bank, &cfg, &persons, rule).unwrap();
        assert!(r.n_mistakes >= r.n_recovered);
        assert_eq!(r.n_censored, r.n_mistakes - r.n_recovered);
        let censored: usize = r
            .persons
            .iter()
            .map(|p| p.events.iter().filter(|e| e.censored()).count())
            .sum();
        assert_eq!(censored, r.n_censored);
        assert!(r.persons.iter().flat_map(|p| &p.events).all(|e| e.mistake_step <= 11));
    }
}
