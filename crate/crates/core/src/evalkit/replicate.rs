use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divvae::VaeConfig;
use crate::error::{Error, Result};
use crate::estimators::{estimate_effect, EstimatorId, PipelineOptions};
use crate::scmgen::{generate, ScenarioSpec};

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub beta_hat: f64,
    pub bias_pct: Option<f64>,
    pub mean_abs_pcc: Option<f64>,
}

/// Per-replication records and their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub scenario: String,
    pub n: usize,
    pub estimator: EstimatorId,
    pub reps: usize,
    pub base_seed: u64,
    pub mean_beta: f64,
    pub std_beta: Option<f64>,
    pub mean_bias: Option<f64>,
    pub std_bias: Option<f64>,
    pub mean_abs_pcc: Option<f64>,
    pub records: Vec<ReplicationRecord>,
}

/// Mean and sample (n - 1) standard deviation; the deviation is `None` for
/// a single value.
pub fn mean_and_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

fn collect_all(values: impl Iterator<Item = Option<f64>>) -> Option<Vec<f64>> {
    values.collect()
}

impl ReplicationSummary {
    /// Aggregate records that are already in index order.
    pub fn from_records(
        scenario: impl Into<String>,
        n: usize,
        estimator: EstimatorId,
        base_seed: u64,
        records: Vec<ReplicationRecord>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::spec("a summary needs at least one replication"));
        }
        let betas: Vec<f64> = records.iter().map(|r| r.beta_hat).collect();
        let (mean_beta, std_beta) = mean_and_std(&betas);
        let (mean_bias, std_bias) = match collect_all(records.iter().map(|r| r.bias_pct)) {
            Some(b) => {
                let (m, s) = mean_and_std(&b);
                (Some(m), s)
            }
            None => (None, None),
        };
        let mean_abs_pcc = collect_all(records.iter().map(|r| r.mean_abs_pcc)).map(|p| mean_and_std(&p).0);
        Ok(Self {
            scenario: scenario.into(),
            n,
            estimator,
            reps: records.len(),
            base_seed,
            mean_beta,
            std_beta,
            mean_bias,
            std_bias,
            mean_abs_pcc,
            records,
        })
    }

    pub const CSV_HEADER: [&'static str; 7] = ["scenario", "n", "estimator", "mean_bias", "std_bias", "reps", "base_seed"];

    pub fn csv_row(&self) -> [String; 7] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.scenario.clone(),
            self.n.to_string(),
            self.estimator.to_string(),
            opt(self.mean_bias),
            opt(self.std_bias),
            self.reps.to_string(),
            self.base_seed.to_string(),
        ]
    }

    /// Summary rows as CSV, header first.
    pub fn write_summary_csv<'a, W: Write>(summaries: impl IntoIterator<Item = &'a Self>, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(Self::CSV_HEADER)?;
        for s in summaries {
            wtr.write_record(s.csv_row())?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// One row per replication with header
    /// `index,seed,beta_hat,bias_pct,mean_abs_pcc`.
    pub fn write_records_csv<W: Write>(&self, out: W) -> Result<()> {
        write_records_csv(&self.records, out)
    }
}

pub fn write_records_csv<W: Write>(records: &[ReplicationRecord], out: W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["index", "seed", "beta_hat", "bias_pct", "mean_abs_pcc"])?;
    for r in records {
        wtr.write_record([
            r.index.to_string(),
            r.seed.to_string(),
            r.beta_hat.to_string(),
            opt(r.bias_pct),
            opt(r.mean_abs_pcc),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Run `job(index, base_seed + index)` for every replication on at most
/// `jobs` threads. Results come back in index order whatever the completion
/// order; the first failure by index is reported.
pub fn run_replications<T, F>(reps: usize, base_seed: u64, jobs: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    if reps == 0 {
        return Err(Error::spec("reps must be at least 1"));
    }
    if jobs == 0 {
        return Err(Error::spec("jobs must be at least 1"));
    }
    let run = |i: usize| job(i, base_seed.wrapping_add(i as u64)).map_err(|e| Error::Replication { index: i, source: Box::new(e) });
    if jobs == 1 {
        return (0..reps).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::spec(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..reps).into_par_iter().map(run).collect());
    results.into_iter().collect()
}

/// Generate, train and estimate `reps` times. Replication `i` uses seed
/// `scenario.seed + i` for both the data and the model.
pub fn replicate(
    scenario: &ScenarioSpec,
    cfg: &VaeConfig,
    estimator: EstimatorId,
    options: &PipelineOptions,
    reps: usize,
    jobs: usize,
) -> Result<ReplicationSummary> {
    scenario.validate()?;
    cfg.validate()?;
    options.validate()?;
    let records = run_replications(reps, scenario.seed, jobs, |index, seed| {
        let data = generate(&scenario.with_seed(seed))?;
        let out = estimate_effect(&data, &cfg.clone().with_seed(seed), estimator, options)?;
        Ok(ReplicationRecord {
            index,
            seed,
            beta_hat: out.report.beta_hat,
            bias_pct: out.report.bias_pct,
            mean_abs_pcc: out.report.diagnostics.pcc_profile.map(|p| p.mean_abs),
        })
    })?;
    ReplicationSummary::from_records(scenario.label(), scenario.n, estimator, scenario.seed, records)
}
