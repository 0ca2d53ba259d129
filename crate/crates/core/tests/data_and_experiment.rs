use dicekit::experiment::{mean_row, to_csv_string, SeedTag, CSV_HEADER};
use dicekit::*;
use proptest::prelude::*;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        data: DataSpec {
            n_positive: 40,
            ratio: 5.0,
            ..Default::default()
        },
        train: TrainSpec {
            epochs: 15,
            ..Default::default()
        },
        replicate_seeds: vec![3, 1, 2],
        ..Default::default()
    }
}

#[test]
fn positives_separate_from_easy_negatives_on_feature_sum() {
    let data = generate(&DataSpec {
        n_positive: 100,
        ratio: 1.0,
        easy_negative_fraction: 1.0,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let sums: Vec<f64> = data.features().iter().map(|x| x.iter().sum()).collect();
    let golds = data.golds();
    let best = sums
        .iter()
        .map(|&t| {
            let correct = sums
                .iter()
                .zip(&golds)
                .filter(|(&s, &g)| (s > t) == (g == 1))
                .count();
            correct as f64 / sums.len() as f64
        })
        .fold(0.0, f64::max);
    assert!(best >= 0.99, "{best}");
}

#[test]
fn csv_round_trip_preserves_nine_digits() {
    let data = generate(&DataSpec {
        n_positive: 5,
        ratio: 2.0,
        feature_dim: 3,
        ..Default::default()
    })
    .unwrap();
    let mut buf = Vec::new();
    data.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("f0,f1,f2,label\n"));
    let back = LabeledBatch::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.labels(), data.labels());
    for (a, b) in back.features().iter().flatten().zip(data.features().iter().flatten()) {
        assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
    }
}

#[test]
fn run_rows_are_sorted_and_aggregated() {
    let config = small_config();
    let rows = run(&config).unwrap();
    let seeds: Vec<SeedTag> = rows.iter().map(|r| r.seed).collect();
    assert_eq!(
        seeds,
        [SeedTag::Seed(1), SeedTag::Seed(2), SeedTag::Seed(3), SeedTag::Mean, SeedTag::Std]
    );
    let mean = rows[..3].iter().map(|r| r.f1).sum::<f64>() / 3.0;
    assert!((rows[3].f1 - mean).abs() <= 1e-12);
    assert!(rows[4].f1 >= 0.0);
    for r in &rows {
        for m in [r.precision, r.recall, r.f1, r.accuracy] {
            assert!((0.0..=1.0).contains(&m) || r.seed == SeedTag::Std);
        }
    }
}

#[test]
fn single_seed_aggregate_matches_the_seed_row() {
    let config = ExperimentConfig {
        replicate_seeds: vec![7],
        ..small_config()
    };
    let rows = run(&config).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].metrics(), rows[1].metrics());
    assert_eq!(rows[2].f1, 0.0);
}

#[test]
fn sweep_covers_every_loss_and_ratio() {
    let rows = sweep(&small_config(), &[LossKind::Ce, LossKind::DlSample], &[1.0, 3.0]).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 5);
    assert!(mean_row(&rows, LossKind::DlSample, 3.0).is_some());
    let csv = to_csv_string(&rows);
    assert!(csv.starts_with(CSV_HEADER));
    assert_eq!(csv.lines().count(), 21);
    assert_eq!(csv, to_csv_string(&sweep(&small_config(), &[LossKind::Ce, LossKind::DlSample], &[1.0, 3.0]).unwrap()));
}

#[test]
fn tversky_sweep_orders_by_alpha() {
    let config = ExperimentConfig {
        loss: LossSpec::new(LossKind::Tversky),
        ..small_config()
    };
    let rows = sweep_tversky(&config, &[0.7, 0.2]).unwrap();
    let means: Vec<&ResultRow> = rows.iter().filter(|r| r.seed == SeedTag::Mean).collect();
    assert_eq!(means.len(), 2);
    assert!(means[0].alpha < means[1].alpha);
    assert!((means[0].beta - 0.8).abs() < 1e-12);
    assert!(sweep_tversky(&small_config(), &[0.5]).is_err());
    assert!(sweep_tversky(&config, &[1.0]).is_err());
}

#[test]
fn config_round_trips_through_json() {
    let config = ExperimentConfig {
        transform: TransformSpec::new(TransformKind::AddBoth, 0.3),
        loss: LossSpec::dsc_selfadj(0.7, 0.2, true),
        ..small_config()
    };
    let back = ExperimentConfig::from_json(&config.to_json().unwrap()).unwrap();
    assert_eq!(back, config);
}

#[test]
fn transformed_training_runs_end_to_end() {
    for kind in [
        TransformKind::AddPositive,
        TransformKind::AddNegative,
        TransformKind::DownsampleNegative,
        TransformKind::AddBoth,
    ] {
        let target = if kind == TransformKind::AddNegative { 0.1 } else { 0.5 };
        let config = ExperimentConfig {
            transform: TransformSpec::new(kind, target),
            replicate_seeds: vec![1],
            ..small_config()
        };
        let rows = run(&config).unwrap();
        assert_eq!(rows[0].transform, kind);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generate_counts_match_spec(n_positive in 1usize..60, ratio in 0.1..20.0f64, easy in 0.0..=1.0f64, seed: u64) {
        let spec = DataSpec { n_positive, ratio, easy_negative_fraction: easy, seed, ..Default::default() };
        let b = generate(&spec).unwrap();
        prop_assert_eq!(b.len(), spec.total());
        prop_assert_eq!(b.counts().positive, n_positive);
        prop_assert_eq!(b.counts(), data::ClassCounts::recount(b.labels()));
        prop_assert_eq!(generate(&spec).unwrap(), b);
    }

    #[test]
    fn downsampling_keeps_every_positive(n_positive in 5usize..40, ratio in 1.5..6.0f64, seed: u64) {
        let b = generate(&DataSpec { n_positive, ratio, ..Default::default() }).unwrap();
        let out = transform(&b, &TransformSpec::new(TransformKind::DownsampleNegative, 0.5), seed, 0.1).unwrap();
        let pos = |x: &LabeledBatch| -> Vec<Vec<f64>> {
            x.features().iter().zip(x.labels()).filter(|(_, y)| y.is_positive()).map(|(f, _)| f.clone()).collect()
        };
        prop_assert_eq!(pos(&out), pos(&b));
    }
}
