use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use cpcr_core::datasets::*;
use cpcr_core::rng::{gaussian_matrix, stream};
use cpcr_core::{DMatrix, Error};
use proptest::prelude::*;
use tempfile::TempDir;

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn tabular(n: usize, d: usize, seed: u64) -> TabularDataset {
    let features = gaussian_matrix(&mut stream(seed, &[]), n, d) * 3.0 + DMatrix::from_element(n, d, 5.0);
    let target = features.column(0) * 2.0 - features.column(d - 1);
    TabularDataset {
        features,
        target,
        column_names: (0..d).map(|j| format!("x{j}")).collect(),
        target_name: "y".into(),
        standardization: None,
    }
}

fn rbf_gram(x: &DMatrix<f64>, ell: f64) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let d2 = (x.row(i) - x.row(j)).norm_squared();
        (-d2 / (2.0 * ell * ell)).exp()
    })
}

#[test]
fn small_csv_loads() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "a.csv", "x0,x1,y\n1,2,3\n4,5,6\n7,8,9.5\n");
    let ds = load_csv(&path, "y", b',').unwrap();
    assert_eq!(ds.features.shape(), (3, 2));
    assert_eq!(ds.target.as_slice(), &[3.0, 6.0, 9.5]);
    assert_eq!(ds.column_names, vec!["x0", "x1"]);
    assert_eq!(ds.feature_matrix().shape(), (2, 3));

    let semi = write(&dir, "b.csv", "y;x0\n1;2\n3;4\n");
    assert_eq!(load_csv(&semi, "y", b';').unwrap().features.shape(), (2, 1));
}

#[test]
fn csv_errors() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.csv", "x0,x1,y\n1,2,3\n4,oops,6\n");
    match load_csv(&bad, "y", b',') {
        Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "x1")),
        other => panic!("unexpected {other:?}"),
    }
    let empty = write(&dir, "empty.csv", "");
    assert!(load_csv(&empty, "y", b',').is_err());
    let ok = write(&dir, "ok.csv", "x0,y\n1,2\n");
    assert!(matches!(load_csv(&ok, "target", b','), Err(Error::Input(_))));
    assert!(load_csv(&dir.path().join("missing.csv"), "y", b',').is_err());
}

#[test]
fn standardize_drops_constant_columns() {
    let mut ds = tabular(30, 4, 1);
    ds.features.column_mut(2).fill(7.0);
    let st = standardize(&ds).unwrap();
    assert_eq!(st.features.ncols(), 3);
    assert_eq!(st.column_names, vec!["x0", "x1", "x3"]);
    let rec = st.standardization.as_ref().unwrap();
    assert_eq!(rec.kept_columns, vec![0, 1, 3]);
    for j in 0..3 {
        let col = st.features.column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 29.0;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-10);
    }
}

#[test]
fn standardization_record_reuse_and_round_trip() {
    let ds = tabular(40, 3, 2);
    let train = ds.subset(&(0..25).collect::<Vec<_>>());
    let test = ds.subset(&(25..40).collect::<Vec<_>>());
    let st = standardize(&train).unwrap();
    let rec = st.standardization.clone().unwrap();
    let again = rec.apply(&train).unwrap();
    assert!((again.features - &st.features).abs().max() < 1e-12);
    let mapped = rec.apply(&test).unwrap();
    let back = rec.inverse_target(&mapped.target);
    assert!((back - &test.target).abs().max() < 1e-10);

    let mut flat = tabular(10, 2, 3);
    flat.target.fill(1.0);
    assert!(matches!(standardize(&flat), Err(Error::Input(_))));
}

#[test]
fn nystrom_with_all_landmarks_reproduces_gram() {
    let x = gaussian_matrix(&mut stream(4, &[]), 25, 3);
    let map = NystromMap::fit(&x, 25, BandwidthRule::Fixed { length_scale: 1.5 }, 0).unwrap();
    let phi = map.transform(&x).unwrap();
    let gram = phi.transpose() * &phi;
    assert!((gram - rbf_gram(&x, 1.5)).abs().max() < 1e-6);

    let map2 = NystromMap::fit(&x, 25, BandwidthRule::Median, 0).unwrap();
    let phi2 = map2.transform(&x).unwrap();
    assert!((phi2.transpose() * &phi2 - rbf_gram(&x, map2.bandwidth)).abs().max() < 1e-6);
}

#[test]
fn nystrom_whitener_identity_on_retained_space() {
    let x = gaussian_matrix(&mut stream(5, &[]), 40, 4);
    let map = NystromMap::fit(&x, 15, BandwidthRule::Median, 2).unwrap();
    let kmm = rbf_gram(&map.landmarks, map.bandwidth);
    let w = &map.whitener;
    let prod = w * &kmm * w.transpose();
    // On the retained eigenspace this is the identity, i.e. a rank-`retained` projector.
    assert!((&prod * &prod - &prod).abs().max() < 1e-6);
    assert!((prod.trace() - map.retained as f64).abs() < 1e-6);
}

#[test]
fn nystrom_huge_bandwidth_is_rank_one() {
    let x = gaussian_matrix(&mut stream(6, &[]), 20, 3);
    let map = NystromMap::fit(&x, 10, BandwidthRule::Fixed { length_scale: 1e6 }, 1).unwrap();
    let phi = map.transform(&x).unwrap();
    let mut sv: Vec<f64> = phi.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    assert!(sv[1..].iter().all(|s| *s < 1e-4 * sv[0]), "{sv:?}");
}

#[test]
fn nystrom_errors_and_determinism() {
    let x = gaussian_matrix(&mut stream(7, &[]), 8, 2);
    assert!(matches!(NystromMap::fit(&x, 9, BandwidthRule::Median, 0), Err(Error::Config(_))));
    assert!(NystromMap::fit(&x, 4, BandwidthRule::Fixed { length_scale: 0.0 }, 0).is_err());
    let ds = tabular(30, 3, 8);
    let (map, phi) = nystrom_features(&ds, 12, BandwidthRule::Median, 3).unwrap();
    assert_eq!(phi.shape(), (12, 30));
    assert_eq!(map.transform(&ds.features).unwrap(), phi);
    assert!(matches!(map.transform(&DMatrix::zeros(3, 5)), Err(Error::Input(_))));
}

fn labeled(d: usize, n: usize, classes: usize) -> LabeledDataset {
    let features = gaussian_matrix(&mut stream(9, &[]), d, n);
    LabeledDataset::new(features, (0..n).map(|i| i % classes).collect()).unwrap()
}

#[test]
fn embeddings_round_trip_in_both_formats() {
    let dir = TempDir::new().unwrap();
    let ds = labeled(768, 10, 7);
    for (name, format) in [("e.csv", EmbeddingFormat::Csv), ("e.bin", EmbeddingFormat::Binary)] {
        let path = dir.path().join(name);
        write_embeddings(&path, &ds, format).unwrap();
        let back = load_embeddings(&path).unwrap();
        assert_eq!(back.features.shape(), (768, 10));
        assert_eq!(back.classes, 7);
        assert_eq!(back.labels, ds.labels);
        assert!(back.features.iter().zip(ds.features.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn embedding_errors() {
    let dir = TempDir::new().unwrap();
    assert!(load_embeddings(&write(&dir, "empty.csv", "")).is_err());
    assert!(load_embeddings(&write(&dir, "ragged.csv", "label,f0,f1\n0,1,2\n1,3\n")).is_err());
    let named = write(&dir, "named.csv", "label,f0\ncat,1\ndog,2\n");
    assert!(load_embeddings(&named).is_err());
    let map: HashMap<String, usize> = [("cat".to_string(), 0), ("dog".to_string(), 1)].into();
    let ds = load_embeddings_with_labels(&named, Some(&map)).unwrap();
    assert_eq!(ds.labels, vec![0, 1]);
}

#[test]
fn flip_label_examples() {
    let labels: Vec<usize> = (0..100).map(|i| i % 7).collect();
    assert_eq!(flip_labels(&labels, 7, 0.0, 1).unwrap(), labels);
    let out = flip_labels(&labels, 7, 0.2, 1).unwrap();
    assert_eq!(labels.iter().zip(&out).filter(|(a, b)| a != b).count(), 20);
    assert_eq!(out, flip_labels(&labels, 7, 0.2, 1).unwrap());
    assert!(matches!(flip_labels(&[0, 0, 0], 1, 0.2, 0), Err(Error::Input(_))));
    assert!(matches!(flip_labels(&labels, 7, 1.0, 0), Err(Error::Parameter(_))));
}

#[test]
fn train_test_split_partitions() {
    let (train, test) = train_test_split(50, 20, 3).unwrap();
    assert_eq!((train.len(), test.len()), (20, 30));
    let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..50).collect::<Vec<_>>());
    assert!(train_test_split(5, 5, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flips_change_exact_count(n in 1usize..300, classes in 2usize..10, fraction in 0.0f64..0.99, seed in any::<u64>()) {
        let labels: Vec<usize> = (0..n).map(|i| (i * 31) % classes).collect();
        let out = flip_labels(&labels, classes, fraction, seed).unwrap();
        let changed = labels.iter().zip(&out).filter(|(a, b)| a != b).count();
        prop_assert_eq!(changed, (fraction * n as f64).floor() as usize);
        prop_assert!(out.iter().all(|l| *l < classes));
    }
}
