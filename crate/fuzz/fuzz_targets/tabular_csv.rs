#![no_main]
use libfuzzer_sys::fuzz_target;

use divae_core::experiment::{read_tabular_dataset, Comparison, TableSource, Threshold, Transform};

fuzz_target!(|data: &[u8]| {
    // First byte picks the mapping options; the rest is the CSV.
    let Some((&flags, csv)) = data.split_first() else { return };
    let source = TableSource {
        path: "fuzz.csv".into(),
        treatment: "w".into(),
        outcome: "y".into(),
        covariates: None,
        exclude: vec![],
        categorical: if flags & 1 != 0 { vec!["a".into()] } else { vec![] },
        infer_categorical: flags & 2 != 0,
        treatment_threshold: (flags & 4 != 0).then_some(Threshold { op: Comparison::Lt, value: 30.0 }),
        outcome_transform: (flags & 8 != 0).then_some(Transform::Log),
        sha256: None,
        beta_reference: None,
    };
    let _ = read_tabular_dataset(csv, &source);
});
