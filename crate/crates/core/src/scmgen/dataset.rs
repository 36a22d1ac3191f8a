use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Ground-truth columns that are never part of the covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTruth {
    pub names: Vec<String>,
    /// `n x names.len()`
    pub values: Tensor,
}

impl LatentTruth {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.names.iter().position(|n| n == name).map(|j| self.values.column(j))
    }
}

/// Observational data: covariates `x`, binary treatment `w`, outcome `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub covariate_names: Vec<String>,
    /// `n x d`, row-major.
    pub x: Tensor,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub beta_true: Option<f64>,
    pub latent: Option<LatentTruth>,
}

pub const TREATMENT_COLUMN: &str = "W";
pub const OUTCOME_COLUMN: &str = "Y";
const BETA_COLUMN: &str = "beta_true";

impl Dataset {
    pub fn new(covariate_names: Vec<String>, x: Tensor, w: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let ds = Self {
            covariate_names,
            x,
            w,
            y,
            beta_true: None,
            latent: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn d(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate(&self, name: &str) -> Option<Vec<f64>> {
        self.covariate_names.iter().position(|n| n == name).map(|j| self.x.column(j))
    }

    pub fn latent_column(&self, name: &str) -> Option<Vec<f64>> {
        self.latent.as_ref().and_then(|l| l.column(name))
    }

    /// Covariates other than `excluded`, in their original order.
    pub fn covariates_except(&self, excluded: &[&str]) -> Tensor {
        let keep: Vec<Vec<f64>> = self
            .covariate_names
            .iter()
            .enumerate()
            .filter(|(_, n)| !excluded.contains(&n.as_str()))
            .map(|(j, _)| self.x.column(j))
            .collect();
        if keep.is_empty() {
            return Tensor::zeros(self.n(), 0);
        }
        Tensor::from_columns(&keep).expect("columns share the row count")
    }

    pub fn outcome_is_binary(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.w.len();
        if self.y.len() != n || self.x.rows() != n || self.x.cols() != self.covariate_names.len() {
            return Err(Error::dim(format!(
                "dataset parts disagree: w has {n} rows, y {} rows, x {:?} with {} names",
                self.y.len(),
                self.x.shape(),
                self.covariate_names.len()
            )));
        }
        if let Some(i) = self.w.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Schema(format!("treatment row {i} is {} (must be 0 or 1)", self.w[i])));
        }
        if !self.x.is_finite() || self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema("dataset contains non-finite values".into()));
        }
        if let Some(l) = &self.latent {
            if l.values.rows() != n || l.values.cols() != l.names.len() {
                return Err(Error::dim("latent block does not match the dataset"));
            }
        }
        let mut names: Vec<&String> = self.covariate_names.iter().collect();
        names.sort();
        if names.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Schema("duplicate covariate names".into()));
        }
        if self
            .covariate_names
            .iter()
            .any(|c| c == TREATMENT_COLUMN || c == OUTCOME_COLUMN)
        {
            return Err(Error::Schema(format!(
                "covariate names may not be {TREATMENT_COLUMN} or {OUTCOME_COLUMN}"
            )));
        }
        Ok(())
    }

    /// Path of the diagnostics file that accompanies `path`.
    pub fn latent_path(path: &Path) -> PathBuf {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        path.with_file_name(format!("{stem}.latent.csv"))
    }

    /// Covariates, then `W`, then `Y`, with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.covariate_names.iter().map(String::as_str).collect();
        header.push(TREATMENT_COLUMN);
        header.push(OUTCOME_COLUMN);
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.w[i].to_string());
            rec.push(self.y[i].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Latent ground truth plus a constant `beta_true` column, if present.
    pub fn write_latent_csv<W: Write>(&self, out: W) -> Result<bool> {
        let Some(latent) = &self.latent else {
            return Ok(false);
        };
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = latent.names.iter().map(String::as_str).collect();
        if self.beta_true.is_some() {
            header.push(BETA_COLUMN);
        }
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = latent.values.row(i).iter().map(|v| v.to_string()).collect();
            if let Some(b) = self.beta_true {
                rec.push(b.to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(true)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)?;
        if self.latent.is_some() {
            self.write_latent_csv(std::fs::File::create(Self::latent_path(path))?)?;
        }
        Ok(())
    }

    /// Load a dataset written by [`Dataset::save`], picking up the sibling
    /// `.latent.csv` when it exists.
    pub fn load(path: &Path) -> Result<Self> {
        let main = std::fs::File::open(path)?;
        let latent_path = Self::latent_path(path);
        if latent_path.exists() {
            Self::read_csv(main, Some(std::fs::File::open(latent_path)?))
        } else {
            Self::read_csv(main, None::<std::fs::File>)
        }
    }

    /// Parse the format produced by [`Dataset::write_csv`] (and optionally
    /// [`Dataset::write_latent_csv`]).
    pub fn read_csv<R: Read, L: Read>(main: R, latent: Option<L>) -> Result<Self> {
        let (header, rows) = read_numeric_csv(main)?;
        let (Some(wi), Some(yi)) = (
            header.iter().position(|h| h == TREATMENT_COLUMN),
            header.iter().position(|h| h == OUTCOME_COLUMN),
        ) else {
            return Err(Error::Schema(format!(
                "dataset header needs {TREATMENT_COLUMN} and {OUTCOME_COLUMN} columns"
            )));
        };
        let cov_idx: Vec<usize> = (0..header.len()).filter(|&j| j != wi && j != yi).collect();
        let names = cov_idx.iter().map(|&j| header[j].clone()).collect();
        let n = rows.len();
        let mut x = Vec::with_capacity(n * cov_idx.len());
        let (mut w, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for r in &rows {
            x.extend(cov_idx.iter().map(|&j| r[j]));
            w.push(r[wi]);
            y.push(r[yi]);
        }
        let mut ds = Dataset::new(names, Tensor::matrix(n, cov_idx.len(), x)?, w, y)?;

        if let Some(l) = latent {
            let (lheader, lrows) = read_numeric_csv(l)?;
            if lrows.len() != n {
                return Err(Error::Schema(format!(
                    "latent file has {} rows, dataset has {n}",
                    lrows.len()
                )));
            }
            let beta_idx = lheader.iter().position(|h| h == BETA_COLUMN);
            if let Some(b) = beta_idx {
                let first = lrows.first().map(|r| r[b]);
                if lrows.iter().any(|r| Some(r[b]) != first) {
                    return Err(Error::Schema("beta_true column is not constant".into()));
                }
                ds.beta_true = first;
            }
            let keep: Vec<usize> = (0..lheader.len()).filter(|&j| Some(j) != beta_idx).collect();
            let values = lrows.iter().flat_map(|r| keep.iter().map(move |&j| r[j])).collect();
            ds.latent = Some(LatentTruth {
                names: keep.iter().map(|&j| lheader[j].clone()).collect(),
                values: Tensor::matrix(n, keep.len(), values)?,
            });
        }
        ds.validate()?;
        Ok(ds)
    }
}

fn read_numeric_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().any(String::is_empty) {
        return Err(Error::Schema("empty column name in header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Schema(format!(
                "row {} has {} fields, header has {}",
                i + 1,
                rec.len(),
                header.len()
            )));
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Schema(format!("row {}, column {}: '{f}' is not a finite number", i + 1, header[j])))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
