use std::io::Write;
use std::sync::Arc;

use mou_core::data::{load_csv, make_windows, patch, prepare, split, Features, Normalizer, SeriesTable, SplitSpec};
use proptest::prelude::*;

fn table(columns: Vec<Vec<f64>>) -> SeriesTable {
    let len = columns[0].len();
    let names = (0..columns.len()).map(|i| format!("v{i}")).collect();
    SeriesTable::new(names, (0..len).map(|t| t.to_string()).collect(), columns).unwrap()
}

#[test]
fn benchmark_sized_split() {
    let spec: SplitSpec = "6:2:2".parse().unwrap();
    let [a, b, c] = spec.boundaries(17420);
    assert_eq!((a.len(), b.len(), c.len()), (10452, 3484, 3484));
    let [a, b, c] = spec.boundaries(10);
    assert_eq!((a.len(), b.len(), c.len()), (6, 2, 2));
    let err = split(100, spec, 60).unwrap_err();
    assert!(err.is_config() && err.to_string().contains("val split"), "{err}");
}

#[test]
fn window_examples() {
    let series = Arc::new(vec![(0..100).map(|v| v as f32).collect::<Vec<_>>()]);
    let w = make_windows(series.clone(), 0..100, 96, 4, None).unwrap();
    assert_eq!(w.len(), 1);
    assert_eq!(w.target(0, 0), &[96.0, 97.0, 98.0, 99.0]);
    let w = make_windows(series, 10..30, 15, 5, None).unwrap();
    assert_eq!(w.len(), 1);
    assert_eq!(w.input(0, 0)[0], 10.0);
}

#[test]
fn unnormalised_values_are_raw_and_normalisation_inverts() {
    let col: Vec<f64> = (0..200).map(|t| (t as f64 * 0.37).sin() * 5.0 + 3.0).collect();
    let t = table(vec![col.clone()]);
    let raw = prepare(&t, "6:2:2".parse().unwrap(), Features::Multivariate, 8, 4, false).unwrap();
    assert_eq!(raw.train.input(0, 0)[0], col[0] as f32);
    let norm = Normalizer::fit(t.columns(), 0..120);
    for &x in &col {
        assert!((norm.denormalize(0, norm.normalize(0, x)) - x).abs() < 1e-6);
    }
}

#[test]
fn patch_examples() {
    let x: Vec<f32> = (0..512).map(|v| v as f32).collect();
    assert_eq!(patch(&x, 16, 8, 0, 0).unwrap().n_patches, 63);
    let p = patch(&x[..16], 16, 8, 0, 0).unwrap();
    assert_eq!((p.n_patches, p.row(0)), (1, &x[..16]));
    assert!(patch(&x[..10], 16, 8, 0, 0).is_err());
}

#[test]
fn csv_round_trip_with_two_variables() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "date,HUFL,OT\n2016-07-01 00:00:00,5.8,30.5\n2016-07-01 01:00:00,5.7,27.8").unwrap();
    let t = load_csv(f.path()).unwrap();
    assert_eq!(t.names(), &["HUFL".to_string(), "OT".to_string()]);
    assert_eq!(t.target(), "OT");
    assert_eq!(t.column("OT").unwrap(), &[30.5, 27.8]);
    assert_eq!(t.univariate().n_variables(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_are_chronological_and_cover(len in 3usize..50_000, a in 1u32..10, b in 1u32..10, c in 1u32..10) {
        let [tr, va, te] = SplitSpec::new(a, b, c).unwrap().boundaries(len);
        prop_assert_eq!(tr.start, 0);
        prop_assert_eq!(tr.end, va.start);
        prop_assert_eq!(va.end, te.start);
        prop_assert_eq!(te.end, len);
    }

    #[test]
    fn patches_with_stride_equal_to_length_reassemble(l in 1usize..200, p in 1usize..32) {
        prop_assume!(l >= p);
        let x: Vec<f32> = (0..l).map(|v| v as f32 * 0.5 - 3.0).collect();
        let seq = patch(&x, p, p, 0, 0).unwrap();
        prop_assert_eq!(seq.n_patches, (l - p) / p + 1);
        prop_assert_eq!(&seq.patches[..], &x[..seq.n_patches * p]);
    }

    #[test]
    fn patch_rows_are_contiguous_slices(l in 1usize..200, p in 1usize..32, s in 1usize..16) {
        prop_assume!(l >= p);
        let x: Vec<f32> = (0..l).map(|v| v as f32).collect();
        let seq = patch(&x, p, s, 0, 0).unwrap();
        for i in 0..seq.n_patches {
            prop_assert_eq!(seq.row(i), &x[i * s..i * s + p]);
        }
    }

    #[test]
    fn train_statistics_standardise_train(seed in 0u64..1000, scale in 0.1f64..100.0, shift in -50.0f64..50.0) {
        let col: Vec<f64> = (0..300).map(|t| ((t as f64 + seed as f64) * 0.731).sin() * scale + shift + (t as f64 * 0.01)).collect();
        let t = table(vec![col, vec![7.0; 300]]);
        let d = prepare(&t, "6:2:2".parse().unwrap(), Features::Multivariate, 10, 5, true).unwrap();
        let norm = d.normalizer.as_ref().unwrap();
        prop_assert_eq!(&norm.constant, &vec![false, true]);
        prop_assert_eq!(norm.std[1], 1.0);
        let z: Vec<f64> = t.columns()[0][..180].iter().map(|&x| norm.normalize(0, x)).collect();
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / z.len() as f64).sqrt();
        prop_assert!(mean.abs() < 1e-6);
        prop_assert!((std - 1.0).abs() < 1e-4);
    }

    #[test]
    fn targets_immediately_follow_inputs(len in 40usize..120, l in 1usize..20, t in 1usize..10) {
        let series = Arc::new(vec![(0..len).map(|v| v as f32).collect::<Vec<_>>()]);
        let w = make_windows(series, 0..len, l, t, None).unwrap();
        prop_assert_eq!(w.len(), len - l - t + 1);
        for off in [0, w.len() - 1] {
            prop_assert_eq!(w.target(off, 0)[0], w.input(off, 0)[l - 1] + 1.0);
        }
    }
}
