use haptic_core::gp::{FitOptions, GpBank};
use haptic_core::ingest::{normalize, SyntheticKind, SyntheticSpec, Trace, NUM_FEATURES};
use haptic_core::nn::{NetConfig, TrainedNet};
use haptic_core::pipeline::{run_episode, EpisodeConfig, EpisodeState, LossModel, PipelineError, Predictor, TruthFeed};
use proptest::prelude::*;

fn fixture(kind: SyntheticKind, len: usize, features: &[usize]) -> (Trace, GpBank) {
    let trace = normalize(&SyntheticSpec::new(kind, len, 0.001, 3).generate().unwrap());
    let rows = trace.rows();
    let bank = GpBank::fit_rows(&rows[..100], 10, features, 32, FitOptions::warm_start(20)).unwrap();
    (trace, bank)
}

fn all() -> Vec<usize> {
    (0..NUM_FEATURES).collect()
}

#[test]
fn twenty_sample_trace_gives_one_block() {
    let (trace, bank) = fixture(SyntheticKind::Sine, 200, &all());
    let short = trace.slice(0, 20).unwrap();
    let events = LossModel::None.arrivals(&short, 10, 20);
    let r = run_episode(&short, 0, Predictor::Gp, &bank, &events, &EpisodeConfig::default()).unwrap();
    assert_eq!(r.predicted(), 10);
    assert_eq!(r.refits, 1);
    assert_eq!(r.samples.first().unwrap().index, 10);
    assert_eq!(r.samples.last().unwrap().index, 19);
    let too_short = trace.slice(0, 19).unwrap();
    assert!(matches!(
        run_episode(&too_short, 0, Predictor::Gp, &bank, &[], &EpisodeConfig::default()),
        Err(PipelineError::TooShort { .. })
    ));
}

#[test]
fn lossless_refits_splice_in_the_truth() {
    let (trace, bank) = fixture(SyntheticKind::Drag, 300, &[1, 4, 7]);
    let start = 120;
    let events = LossModel::None.arrivals(&trace, start, trace.len());
    let cfg = EpisodeConfig { blocks: Some(4), ..EpisodeConfig::default() };
    let r = run_episode(&trace, start, Predictor::Gp, &bank, &events, &cfg).unwrap();
    let rows = trace.rows();
    for b in &r.blocks {
        assert!(!b.self_fed);
        assert_eq!(b.delivered, 10);
        assert_eq!(b.refit_rows, rows[b.first_index..b.first_index + 10].to_vec());
    }
}

#[test]
fn delayed_truth_only_counts_once_it_has_arrived() {
    let (trace, bank) = fixture(SyntheticKind::Sine, 300, &all());
    let start = 120;
    let events = LossModel::FixedDelay { d: 4 }.arrivals(&trace, start, trace.len());
    let cfg = EpisodeConfig { blocks: Some(3), ..EpisodeConfig::default() };
    let r = run_episode(&trace, start, Predictor::Gp, &bank, &events, &cfg).unwrap();
    // At the refit after a block, the last four samples are still in flight.
    for b in &r.blocks {
        assert_eq!(b.delivered, 6);
    }
}

#[test]
fn drop_all_episodes_are_fully_self_fed() {
    let (trace, bank) = fixture(SyntheticKind::Tap, 300, &all());
    let start = 150;
    let events = LossModel::DropAll.arrivals(&trace, start, trace.len());
    let cfg = EpisodeConfig { blocks: Some(5), ..EpisodeConfig::default() };
    let r = run_episode(&trace, start, Predictor::Gp, &bank, &events, &cfg).unwrap();
    assert_eq!(r.self_fed_blocks(), 5);
    assert_eq!(r.refits, 5);
    for (s, b) in r.samples.chunks(10).zip(&r.blocks) {
        let predicted: Vec<[f64; NUM_FEATURES]> =
            s.iter().map(|x| trace.norm().normalize(&x.prediction)).collect();
        for (p, q) in predicted.iter().zip(&b.refit_rows) {
            for k in 0..NUM_FEATURES {
                assert!((p[k] - q[k]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn state_never_reads_ahead_of_the_clock() {
    let (trace, bank) = fixture(SyntheticKind::Sine, 300, &all());
    let start = 100;
    let rows = trace.rows();
    let events = LossModel::IidDrop { p: 0.3, seed: 4 }.arrivals(&trace, start, trace.len());
    let feed = TruthFeed::new(&events, trace.norm());
    let mut state =
        EpisodeState::new(&bank, &rows[start..start + 10], start, feed, *trace.norm(), trace.side(), EpisodeConfig::default())
            .unwrap();
    for _ in 0..50 {
        let p = state.predict_next(Predictor::Gp).unwrap();
        if let Some(m) = state.feed().max_read() {
            assert!(m <= p.index, "read {m} at {}", p.index);
        }
    }
    assert_eq!(state.refits(), 5);

    let mut feed = TruthFeed::new(&events, trace.norm());
    assert!(matches!(feed.read(200, 199), Err(PipelineError::Causality { requested: 200, now: 199 })));
}

#[test]
fn network_episodes_report_oracle_divergence() {
    let (trace, bank) = fixture(SyntheticKind::Sine, 300, &[0, 3]);
    let net = TrainedNet::init(NetConfig { depth: 2, width: 16, ..NetConfig::fully_connected(20) }, 1).unwrap();
    let events = LossModel::None.arrivals(&trace, 150, trace.len());
    let cfg = EpisodeConfig { blocks: Some(2), ..EpisodeConfig::default() };
    let r = run_episode(&trace, 150, Predictor::Net(&net), &bank, &events, &cfg).unwrap();
    assert!(r.samples.iter().all(|s| s.jsd_vs_gp.is_some()));
    assert_eq!(r.predictor, "nn_fully_connected");
    let wrong = TrainedNet::init(NetConfig::fully_connected(21), 1).unwrap();
    assert!(matches!(
        run_episode(&trace, 150, Predictor::Net(&wrong), &bank, &events, &cfg),
        Err(PipelineError::InvalidConfig(_))
    ));
}

#[test]
fn episodes_are_deterministic_apart_from_timing() {
    let (trace, bank) = fixture(SyntheticKind::Drag, 300, &all());
    let events = LossModel::Burst { len: 3, gap: 7 }.arrivals(&trace, 110, trace.len());
    let cfg = EpisodeConfig { blocks: Some(3), ..EpisodeConfig::default() };
    let a = run_episode(&trace, 110, Predictor::Gp, &bank, &events, &cfg).unwrap();
    let b = run_episode(&trace, 110, Predictor::Gp, &bank, &events, &cfg).unwrap();
    assert_eq!(a.to_csv(false), b.to_csv(false));
}

#[test]
fn self_fed_error_grows_with_horizon() {
    let (trace, bank) = fixture(SyntheticKind::Sine, 600, &all());
    let cfg = EpisodeConfig { blocks: Some(1), ..EpisodeConfig::default() };
    let mut sums = vec![0.0; 10];
    for start in (100..580).step_by(12) {
        let events = LossModel::DropAll.arrivals(&trace, start, trace.len());
        let r = run_episode(&trace, start, Predictor::Gp, &bank, &events, &cfg).unwrap();
        for (s, h) in sums.iter_mut().zip(r.horizon_mae()) {
            *s += h;
        }
    }
    assert!(sums[9] > sums[0], "{sums:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn refits_follow_completed_blocks(blocks in 1usize..6, drop in 0.0..1.0f64) {
        let (trace, bank) = fixture(SyntheticKind::Sine, 200, &[2, 5, 8]);
        let events = LossModel::IidDrop { p: drop, seed: 1 }.arrivals(&trace, 100, trace.len());
        let cfg = EpisodeConfig { blocks: Some(blocks), refit_evals: 0, ..EpisodeConfig::default() };
        let r = run_episode(&trace, 100, Predictor::Gp, &bank, &events, &cfg).unwrap();
        prop_assert_eq!(r.refits, r.predicted() / 10);
        prop_assert_eq!(r.blocks.len(), blocks);
        for (i, s) in r.samples.iter().enumerate() {
            prop_assert_eq!(s.horizon, i % 10 + 1);
            prop_assert_eq!(s.index, 110 + i);
        }
    }
}
