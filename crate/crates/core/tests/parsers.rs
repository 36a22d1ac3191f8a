//! Every parser entry point returns `Ok` or `Err` on arbitrary input, and
//! the checked-in fuzz corpus seeds replay cleanly.

use std::path::{Path, PathBuf};

use divae_core::divvae::ModelParams;
use divae_core::experiment::{read_tabular_dataset, Comparison, ExperimentConfig, TableSource, Threshold, Transform};
use divae_core::scmgen::{Dataset, ScenarioSpec};
use proptest::prelude::*;

fn source(flags: u8) -> TableSource {
    TableSource {
        path: "t.csv".into(),
        treatment: "w".into(),
        outcome: "y".into(),
        covariates: None,
        exclude: vec![],
        categorical: if flags & 1 != 0 { vec!["a".into()] } else { vec![] },
        infer_categorical: flags & 2 != 0,
        treatment_threshold: (flags & 4 != 0).then_some(Threshold {
            op: Comparison::Lt,
            value: 30.0,
        }),
        outcome_transform: (flags & 8 != 0).then_some(Transform::Log),
        sha256: None,
        beta_reference: None,
    }
}

fn all_parsers(data: &[u8]) {
    let _ = ExperimentConfig::from_json_slice(data);
    let _ = serde_json::from_slice::<ScenarioSpec>(data).map(|s| s.validate());
    let _ = ModelParams::from_json_slice(data);
    match data.iter().position(|&b| b == 0) {
        Some(i) => {
            let _ = Dataset::read_csv(&data[..i], Some(&data[i + 1..]));
        }
        None => {
            let _ = Dataset::read_csv(data, None::<&[u8]>);
        }
    }
    if let Some((&flags, csv)) = data.split_first() {
        let _ = read_tabular_dataset(csv, &source(flags));
    }
}

fn corpus_files() -> Vec<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut out = Vec::new();
    for dir in std::fs::read_dir(root).unwrap() {
        for f in std::fs::read_dir(dir.unwrap().path()).unwrap() {
            out.push(f.unwrap().path());
        }
    }
    out.sort();
    out
}

#[test]
fn corpus_seeds_replay() {
    let files = corpus_files();
    assert!(files.len() >= 10);
    for f in files {
        all_parsers(&std::fs::read(&f).unwrap());
    }
}

#[test]
fn corpus_params_seed_loads() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/model_params/seed-tiny.json");
    let params = ModelParams::from_json_slice(&std::fs::read(root).unwrap()).unwrap();
    assert!(params.parameter_count() > 0);
}

fn csv_like() -> impl Strategy<Value = Vec<u8>> {
    let cell = prop_oneof![
        Just("".to_string()),
        Just("NA".to_string()),
        Just("nan".to_string()),
        Just("inf".to_string()),
        Just("-0".to_string()),
        Just("1e308".to_string()),
        Just("x".to_string()),
        Just("\"q,\"".to_string()),
        (-1e3f64..1e3).prop_map(|v| v.to_string()),
        (0u8..2).prop_map(|v| v.to_string()),
    ];
    let header = prop::sample::subsequence(vec!["w", "y", "a", "b", "W", "Y", "S"], 0..7)
        .prop_map(|h| h.join(","));
    let row = prop::collection::vec(cell, 0..6).prop_map(|c| c.join(","));
    (any::<u8>(), header, prop::collection::vec(row, 0..8)).prop_map(|(flags, h, rows)| {
        let mut out = vec![flags];
        out.extend(h.into_bytes());
        for r in rows {
            out.push(b'\n');
            out.extend(r.into_bytes());
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_bytes_never_panic(data in prop::collection::vec(any::<u8>(), 0..256)) {
        all_parsers(&data);
    }

    #[test]
    fn csv_shaped_input_never_panics(data in csv_like()) {
        all_parsers(&data);
        all_parsers(&data[1..]);
    }

    #[test]
    fn json_shaped_input_never_panics(
        version in 0u32..3,
        n in 0usize..50,
        generator in prop::sample::select(vec!["single_siv", "multi_siv", "highdim", "x"]),
        extra in prop::sample::select(vec!["", ", \"siv_count\": 0", ", \"dim\": 16", ", \"reps\": 0", ", \"jobs\": -1"]),
    ) {
        let text = format!(
            r#"{{"version": {version}, "scenario": {{"generator": "{generator}", "n": {n}, "outcome": "linear"}}{extra}}}"#
        );
        all_parsers(text.as_bytes());
    }
}
