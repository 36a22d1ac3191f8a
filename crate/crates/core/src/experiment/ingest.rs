use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{TableSource, Transform};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scmgen::Dataset;

/// Dummy columns created for one categorical covariate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalEncoding {
    pub column: String,
    /// Every observed level in sorted order; the first is the baseline.
    pub levels: Vec<String>,
    pub dummy_columns: Vec<String>,
}

/// A real-world table after mapping, cleaning and encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTable {
    pub dataset: Dataset,
    pub rows_read: usize,
    pub rows_rejected: usize,
    /// Hex SHA-256 of the raw bytes.
    pub sha256: String,
    pub encodings: Vec<CategoricalEncoding>,
}

const MISSING: [&str; 5] = ["", "NA", "NaN", "nan", "."];

fn is_missing(field: &str) -> bool {
    MISSING.contains(&field)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Read and map the CSV named by `source.path`.
pub fn load_tabular_dataset(path: &Path, source: &TableSource) -> Result<LoadedTable> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Schema(format!("cannot read dataset {}: {e}", path.display())))?;
    read_tabular_dataset(&bytes, source)
}

/// Map raw CSV bytes to a [`Dataset`]. Rows with a missing value in any
/// mapped column, or a non-positive outcome under a log transform, are
/// dropped and counted.
pub fn read_tabular_dataset(bytes: &[u8], source: &TableSource) -> Result<LoadedTable> {
    source.validate()?;
    let sha256 = sha256_hex(bytes);
    if let Some(expected) = &source.sha256 {
        if !expected.eq_ignore_ascii_case(&sha256) {
            return Err(Error::Schema(format!("dataset checksum {sha256} does not match expected {expected}")));
        }
    }

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let wi = find(&source.treatment)?;
    let yi = find(&source.outcome)?;
    let covariates: Vec<String> = match &source.covariates {
        Some(list) => list.clone(),
        None => header
            .iter()
            .filter(|h| *h != &source.treatment && *h != &source.outcome && !source.exclude.contains(h))
            .cloned()
            .collect(),
    };
    let mut seen = BTreeSet::new();
    for c in &covariates {
        if c == &source.treatment || c == &source.outcome {
            return Err(Error::Schema(format!("column '{c}' cannot be both a covariate and {}", "treatment/outcome")));
        }
        if !seen.insert(c) {
            return Err(Error::Schema(format!("covariate '{c}' listed twice")));
        }
    }
    for c in &source.categorical {
        if !covariates.contains(c) {
            return Err(Error::Schema(format!("categorical column '{c}' is not a covariate")));
        }
    }
    let cov_idx: Vec<usize> = covariates.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    for (r, rec) in records.iter().enumerate() {
        if rec.len() != header.len() {
            return Err(Error::Schema(format!("row {} has {} fields, header has {}", r + 1, rec.len(), header.len())));
        }
    }
    let is_cat: Vec<bool> = covariates
        .iter()
        .zip(&cov_idx)
        .map(|(c, &j)| {
            source.categorical.contains(c)
                || (source.infer_categorical
                    && records.iter().any(|rec| {
                        let f = rec.get(j).unwrap_or("").trim();
                        !is_missing(f) && f.parse::<f64>().is_err()
                    }))
        })
        .collect();

    let numeric = |field: &str, row: usize, col: &str| {
        field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Schema(format!("row {row}, column '{col}': '{field}' is not a finite number")))
    };

    // Numeric covariates as f64, categorical ones as their raw level.
    let mut kept: Vec<(f64, f64, Vec<f64>, Vec<String>)> = Vec::new();
    let (mut rows_read, mut rows_rejected) = (0, 0);
    for (r, rec) in records.iter().enumerate() {
        let row = r + 1;
        rows_read += 1;
        let field = |j: usize| rec.get(j).unwrap_or("").trim();
        if std::iter::once(wi).chain([yi]).chain(cov_idx.iter().copied()).any(|j| is_missing(field(j))) {
            rows_rejected += 1;
            continue;
        }
        let raw_w = numeric(field(wi), row, &source.treatment)?;
        let w = match &source.treatment_threshold {
            Some(t) => t.apply(raw_w),
            None => raw_w,
        };
        if w != 0.0 && w != 1.0 {
            return Err(Error::Schema(format!(
                "row {row}: treatment '{}' is {raw_w}, not 0/1 (set a treatment_threshold?)",
                source.treatment
            )));
        }
        let mut y = numeric(field(yi), row, &source.outcome)?;
        if let Some(Transform::Log) = source.outcome_transform {
            if y <= 0.0 {
                rows_rejected += 1;
                continue;
            }
            y = y.ln();
        }
        let mut nums = Vec::new();
        let mut cats = Vec::new();
        for (k, &j) in cov_idx.iter().enumerate() {
            if is_cat[k] {
                cats.push(field(j).to_string());
            } else {
                nums.push(numeric(field(j), row, &covariates[k])?);
            }
        }
        kept.push((w, y, nums, cats));
    }
    if kept.len() < 2 {
        return Err(Error::Schema(format!("only {} usable rows after rejecting missing values", kept.len())));
    }

    let mut encodings = Vec::new();
    let mut level_maps: Vec<BTreeMap<String, usize>> = Vec::new();
    let cat_names: Vec<&String> = covariates.iter().zip(&is_cat).filter(|(_, &c)| c).map(|(n, _)| n).collect();
    for (k, name) in cat_names.iter().enumerate() {
        let levels: BTreeSet<&String> = kept.iter().map(|r| &r.3[k]).collect();
        let levels: Vec<String> = levels.into_iter().cloned().collect();
        let dummy_columns = levels[1..].iter().map(|l| format!("{name}={l}")).collect();
        level_maps.push(levels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect());
        encodings.push(CategoricalEncoding {
            column: (*name).clone(),
            levels,
            dummy_columns,
        });
    }

    let mut names = Vec::new();
    let (mut num_k, mut cat_k) = (0, 0);
    let mut layout = Vec::new();
    for (k, name) in covariates.iter().enumerate() {
        if is_cat[k] {
            names.extend(encodings[cat_k].dummy_columns.iter().cloned());
            layout.push((true, cat_k));
            cat_k += 1;
        } else {
            names.push(name.clone());
            layout.push((false, num_k));
            num_k += 1;
        }
    }
    let n = kept.len();
    let mut x = Vec::with_capacity(n * names.len());
    let (mut w, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (wi, yi, nums, cats) in &kept {
        for &(cat, k) in &layout {
            if cat {
                let level = level_maps[k][&cats[k]];
                x.extend((1..level_maps[k].len()).map(|l| if l == level { 1.0 } else { 0.0 }));
            } else {
                x.push(nums[k]);
            }
        }
        w.push(*wi);
        y.push(*yi);
    }
    let mut dataset = Dataset::new(names.clone(), Tensor::matrix(n, names.len(), x)?, w, y)?;
    dataset.beta_true = source.beta_reference;
    Ok(LoadedTable {
        dataset,
        rows_read,
        rows_rejected,
        sha256,
        encodings,
    })
}
