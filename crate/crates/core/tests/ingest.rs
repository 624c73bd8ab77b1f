use haptic_core::ingest::{
    denormalize, make_windows, normalize, parse_trace, parse_trace_str, trace_to_csv, write_trace, IngestError, Schema,
    Side, SyntheticKind, SyntheticSpec, Trace, NUM_FEATURES,
};
use proptest::prelude::*;

fn row_strategy() -> impl Strategy<Value = [f64; NUM_FEATURES]> {
    prop::array::uniform9(-1e4..1e4f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec(row_strategy(), 1..40), robot in any::<bool>()) {
        let side = if robot { Side::Robot } else { Side::Human };
        let trace = Trace::from_rows("prop", side, rows).unwrap();
        let back = parse_trace_str(&trace_to_csv(&trace), "other", &Schema::canonical()).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn normalization_round_trips(rows in prop::collection::vec(row_strategy(), 2..40)) {
        let trace = Trace::from_rows("prop", Side::Human, rows).unwrap();
        let back = denormalize(&normalize(&trace));
        for (a, b) in back.rows().iter().zip(trace.rows()) {
            for k in 0..NUM_FEATURES {
                prop_assert!((a[k] - b[k]).abs() <= 1e-9 * (1.0 + b[k].abs()));
            }
        }
    }

    #[test]
    fn normalized_csv_keeps_its_record(rows in prop::collection::vec(row_strategy(), 2..20)) {
        let trace = normalize(&Trace::from_rows("n", Side::Human, rows).unwrap());
        let back = parse_trace_str(&trace_to_csv(&trace), "n", &Schema::canonical()).unwrap();
        prop_assert_eq!(back.norm(), trace.norm());
        prop_assert_eq!(back.rows(), trace.rows());
    }
}

#[test]
fn normalized_columns_have_zero_mean_and_unit_sd() {
    let trace = SyntheticSpec::new(SyntheticKind::Drag, 2000, 0.001, 4).generate().unwrap();
    let n = normalize(&trace);
    for k in 0..NUM_FEATURES {
        let col = n.column(k);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-9, "column {k} mean {mean}");
        assert!((var - 1.0).abs() < 1e-9, "column {k} var {var}");
    }
}

#[test]
fn synthetic_noise_has_the_requested_spread() {
    let spec = SyntheticSpec::new(SyntheticKind::Sine, 10_000, 0.1, 9);
    let trace = spec.generate().unwrap();
    for k in 0..NUM_FEATURES {
        let resid: Vec<f64> = trace.samples().iter().map(|s| s.values[k] - spec.clean_value(s.t)[k]).collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let sd = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((sd - 0.1).abs() < 0.005, "channel {k}: sd {sd}");
    }
}

#[test]
fn synthetic_generation_is_deterministic_per_seed() {
    for kind in [SyntheticKind::Sine, SyntheticKind::Drag, SyntheticKind::Tap] {
        let a = SyntheticSpec::new(kind, 500, 0.01, 3).generate().unwrap();
        let b = SyntheticSpec::new(kind, 500, 0.01, 3).generate().unwrap();
        let c = SyntheticSpec::new(kind, 500, 0.01, 4).generate().unwrap();
        assert_eq!(a, b);
        assert_ne!(a.rows(), c.rows());
    }
}

#[test]
fn robot_side_lags_the_human_side() {
    let human = SyntheticSpec::new(SyntheticKind::Sine, 200, 0.0, 2);
    let robot = human.clone().with_side(Side::Robot);
    // Lag of three samples on position channels.
    for t in 10..100 {
        let h = human.clean_value(t);
        let r = robot.clean_value(t + 3);
        for k in 6..9 {
            assert!((h[k] - r[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn missing_column_is_named() {
    let text = "fx,fy,vx,vy,vz,px,py,pz\n1,2,3,4,5,6,7,8\n";
    match parse_trace_str(text, "bad", &Schema::canonical()) {
        Err(IngestError::MissingColumn(c)) => assert_eq!(c, "fz"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn renamed_columns_follow_the_schema() {
    let schema: Schema = Schema::from_json(
        r#"{"fx":"Fx","fy":"Fy","fz":"Fz","vx":"Vx","vy":"Vy","vz":"Vz","px":"X","py":"Y","pz":"Z","time":"ms"}"#,
    )
    .unwrap();
    let text = "ms,Z,Y,X,Vz,Vy,Vx,Fz,Fy,Fx\n1,9,8,7,6,5,4,3,2,1\n2,18,16,14,12,10,8,6,4,2\n";
    let trace = parse_trace_str(text, "renamed", &schema).unwrap();
    assert_eq!(trace.rows()[0], [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    assert_eq!(trace.len(), 2);
}

#[test]
fn decreasing_time_is_rejected() {
    let schema = Schema { time: Some("t".into()), ..Schema::canonical() };
    let text = "t,fx,fy,fz,vx,vy,vz,px,py,pz\n2,0,0,0,0,0,0,0,0,0\n1,0,0,0,0,0,0,0,0,0\n";
    assert!(matches!(parse_trace_str(text, "x", &schema), Err(IngestError::NonMonotoneTime { row: 2 })));
}

#[test]
fn non_numeric_cell_reports_its_position() {
    let text = "fx,fy,fz,vx,vy,vz,px,py,pz\n0,0,0,0,0,0,0,0,0\n0,0,abc,0,0,0,0,0,0\n";
    match parse_trace_str(text, "x", &Schema::canonical()) {
        Err(IngestError::BadNumber { row, column, .. }) => {
            assert_eq!(row, 2);
            assert_eq!(column, "fz");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tap.csv");
    let trace = SyntheticSpec::new(SyntheticKind::Tap, 100, 0.01, 1).generate().unwrap();
    write_trace(&trace, &path).unwrap();
    assert_eq!(parse_trace(&path, &Schema::canonical()).unwrap(), trace);
}

#[test]
fn windows_cover_the_trace() {
    let trace = SyntheticSpec::new(SyntheticKind::Sine, 60, 0.0, 1).generate().unwrap();
    let pairs = make_windows(&trace, 10, 1).unwrap();
    assert_eq!(pairs.len(), 60 - 20 + 1);
    for (i, p) in pairs.iter().enumerate() {
        assert_eq!(p.input.start, i as u64 + 1);
        assert_eq!(p.target.start, p.input.start + 10);
        assert_eq!(p.input.len(), 10);
        assert_eq!(p.target.len(), 10);
    }
    let short = trace.slice(0, 15).unwrap();
    assert!(matches!(make_windows(&short, 10, 1), Err(IngestError::TooShort { .. })));
}
