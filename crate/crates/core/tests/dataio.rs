mod common;

use common::fixtures;
use mjghd::dataio::{
    data_dir, export_projection, load_builtin, load_delimited, read_delimited, standardize, Dataset,
    LoadOptions,
};
use mjghd::ecm::{FitResult, MjghdModel};
use mjghd::jghd::JghdParams;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

fn class_sizes(ds: &Dataset) -> Vec<(String, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for l in ds.labels.as_ref().unwrap() {
        *counts.entry(l.clone()).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

#[test]
fn bundled_files_match_their_checksums() {
    let dir = data_dir();
    let sums = std::fs::read_to_string(dir.join("SHA256SUMS")).unwrap();
    let mut checked = 0;
    for line in sums.lines().filter(|l| !l.trim().is_empty()) {
        let (digest, name) = line.split_once("  ").unwrap();
        let bytes = std::fs::read(dir.join(name.trim())).unwrap();
        let got: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(got, digest, "{name}");
        checked += 1;
    }
    assert_eq!(checked, 2);
}

#[test]
fn wine_has_three_cultivars() {
    let ds = load_builtin("wine").unwrap();
    assert_eq!(ds.n(), 178);
    assert!(ds.p() == 13 || ds.p() == 27);
    let sizes: Vec<usize> = class_sizes(&ds).into_iter().map(|(_, c)| c).collect();
    let mut sorted = sizes.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, vec![48, 59, 71]);
    assert_eq!(ds.provenance.rejected_rows, 0);
}

#[test]
fn tumour_has_benign_and_malignant_cases() {
    let ds = load_builtin("tumour").unwrap();
    assert_eq!((ds.n(), ds.p()), (569, 30));
    assert_eq!(class_sizes(&ds), vec![("B".to_string(), 357), ("M".to_string(), 212)]);
}

#[test]
fn standardized_columns_have_unit_variance() {
    let ds = standardize(&load_builtin("wine").unwrap()).unwrap();
    let alcohol = ds.feature_names.iter().position(|f| f == "alcohol").unwrap_or(0);
    for j in [alcohol, ds.p() - 1] {
        let c = ds.matrix.column(j);
        let mean = c.sum() / ds.n() as f64;
        let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ds.n() - 1) as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }
    let again = standardize(&ds).unwrap();
    assert!((&again.matrix - &ds.matrix).abs().max() < 1e-12);
    assert_eq!(ds.provenance.standardization.as_ref().unwrap().means.len(), ds.p());
}

fn result_for(model: MjghdModel, n: usize) -> FitResult {
    let g = model.g();
    FitResult {
        model,
        zhat: DMatrix::from_element(n, g, 1.0 / g as f64),
        loglik_trace: vec![0.0],
        loglik: 0.0,
        converged: true,
        n_iterations: 0,
        hard_labels: (0..n).map(|i| i % g).collect(),
        n_params: 0,
        bic: 0.0,
        best_start: 0,
        starts: Vec::new(),
    }
}

fn single(gamma: DMatrix<f64>) -> MjghdModel {
    let p = gamma.nrows();
    MjghdModel {
        weights: vec![1.0],
        components: vec![JghdParams {
            gamma,
            mu: vec![0.0; p],
            beta: vec![0.0; p],
            phi: vec![1.0],
            b: 1.0,
            omega: vec![1.0],
            lambda: vec![1.0],
            omega0: 1.0,
            lambda0: 1.0,
            q: 1,
        }],
    }
}

#[test]
fn identity_projection_round_trips_bit_exactly() {
    let ds = load_builtin("tumour").unwrap();
    let fit = result_for(single(DMatrix::identity(ds.p(), ds.p())), ds.n());
    let table = export_projection(&fit, &ds, 0, ds.p()).unwrap();
    assert_eq!(table.coords, ds.matrix);
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    let back = read_delimited(
        buf.as_slice(),
        &LoadOptions {
            label_column: Some("true_label".into()),
            ..LoadOptions::default()
        },
    )
    .unwrap();
    let coords = back.matrix.columns(0, ds.p()).into_owned();
    assert!(coords.iter().zip(ds.matrix.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(back.feature_names[0], "dim1");
    assert_eq!(back.labels, ds.labels);
}

#[test]
fn projection_is_an_isometry() {
    let ds = load_builtin("wine").unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let gamma = fixtures::random_orthogonal(ds.p(), &mut rng);
    let fit = result_for(single(gamma), ds.n());
    let table = export_projection(&fit, &ds, 0, ds.p()).unwrap();
    for i in 0..ds.n() {
        let (a, b) = (table.coords.row(i).norm(), ds.matrix.row(i).norm());
        assert!((a - b).abs() <= 1e-10 * b);
    }
    assert!(export_projection(&fit, &ds, 1, 2).is_err());
    assert!(export_projection(&fit, &ds, 0, 0).is_err());
    assert_eq!(export_projection(&fit, &ds, 0, 3).unwrap().coords.ncols(), 3);
}

#[test]
fn missing_files_are_io_errors() {
    let err = load_delimited(std::path::Path::new("/nonexistent.csv"), &LoadOptions::default()).unwrap_err();
    assert_eq!(err.kind(), "io");
}
