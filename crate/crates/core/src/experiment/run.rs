use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::ingest::{load_tabular_dataset, CategoricalEncoding, LoadedTable};
use crate::divvae::{train, VaeConfig};
use crate::error::{Error, Result};
use crate::estimators::{estimate_effect, scalar_instrument, EstimationReport};
use crate::evalkit::{mean_and_std, pdf_compare, pearson, run_replications, PdfComparison, ReplicationRecord, ReplicationSummary};
use crate::scmgen::{generate, Dataset};

/// Format tag and version written at the top of every `report.json`.
pub const REPORT_FORMAT: &str = "divae-report";
pub const REPORT_VERSION: u32 = 1;

/// The α grid swept by `sweep-alpha`; both α_W and α_Y take each value.
pub const ALPHA_GRID: [f64; 7] = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0];

pub const REPLICATIONS_HEADER: [&str; 8] =
    ["variant", "index", "seed", "beta_hat", "bias_pct", "mean_abs_pcc", "pcc_true_iv", "pdf_l1"];
pub const LOSS_TRACE_HEADER: [&str; 4] = ["variant", "index", "epoch", "loss"];
pub const PCC_HEADER: [&str; 5] = ["variant", "index", "seed", "latent", "pcc"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Generate,
    Train,
    Estimate,
    Bench,
    Ablate,
    SweepAlpha,
    EvalPcc,
    PdfCompare,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Generate,
        Command::Train,
        Command::Estimate,
        Command::Bench,
        Command::Ablate,
        Command::SweepAlpha,
        Command::EvalPcc,
        Command::PdfCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Estimate => "estimate",
            Command::Bench => "bench",
            Command::Ablate => "ablate",
            Command::SweepAlpha => "sweep-alpha",
            Command::EvalPcc => "eval-pcc",
            Command::PdfCompare => "pdf-compare",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::spec(format!("unknown command '{s}'")))
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub reps: Option<usize>,
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(jobs) = o.jobs {
            self.jobs = jobs;
        }
        if let Some(reps) = o.reps {
            self.reps = reps;
        }
        self.validate()
    }
}

/// A named model configuration; commands that compare settings run several.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub vae: VaeConfig,
}

pub fn variants(command: Command, base: &VaeConfig) -> Vec<Variant> {
    let with = |label: String, f: &dyn Fn(&mut VaeConfig)| {
        let mut vae = base.clone();
        f(&mut vae);
        Variant { label, vae }
    };
    match command {
        Command::Ablate => vec![
            with("opr_on".into(), &|v| v.opr_enabled = true),
            with("opr_off".into(), &|v| v.opr_enabled = false),
        ],
        Command::SweepAlpha => ALPHA_GRID
            .iter()
            .map(|&a| {
                with(format!("alpha={a}"), &|v| {
                    v.alpha_w = a;
                    v.alpha_y = a;
                })
            })
            .collect(),
        _ => vec![with("default".into(), &|_| {})],
    }
}

/// Where replication data comes from: a fresh synthetic draw per seed, or
/// one fixed table shared by every replication.
#[derive(Debug, Clone)]
pub enum DataSource {
    Scenario(super::config::ScenarioConfig),
    Table { label: String, table: Box<LoadedTable> },
}

impl DataSource {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        match (&cfg.scenario, &cfg.dataset) {
            (Some(s), None) => Ok(DataSource::Scenario(*s)),
            (None, Some(d)) => {
                let table = load_tabular_dataset(&d.path, d)?;
                let label = d.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                Ok(DataSource::Table {
                    label,
                    table: Box::new(table),
                })
            }
            _ => Err(Error::spec("exactly one of `scenario` and `dataset` must be given")),
        }
    }

    pub fn dataset(&self, seed: u64) -> Result<Dataset> {
        match self {
            DataSource::Scenario(s) => generate(&s.spec(seed)?),
            DataSource::Table { table, .. } => Ok(table.dataset.clone()),
        }
    }

    pub fn label(&self, seed: u64) -> Result<String> {
        match self {
            DataSource::Scenario(s) => Ok(s.spec(seed)?.label()),
            DataSource::Table { label, .. } => Ok(label.clone()),
        }
    }
}

/// The true instrument when the data carries ground truth: the sum of the
/// latent `Z` columns, which is how they enter the propensity.
pub fn true_instrument(dataset: &Dataset) -> Option<Vec<f64>> {
    let latent = dataset.latent.as_ref()?;
    let cols: Vec<Vec<f64>> = latent
        .names
        .iter()
        .enumerate()
        .filter(|(_, n)| *n == "Z" || (n.starts_with('Z') && n[1..].parse::<usize>().is_ok()))
        .map(|(j, _)| latent.values.column(j))
        .collect();
    let first = cols.first()?;
    Some((0..first.len()).map(|i| cols.iter().map(|c| c[i]).sum()).collect())
}

/// One replication of one variant, with everything the artifacts need.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub variant: String,
    pub index: usize,
    pub seed: u64,
    pub beta_hat: f64,
    pub bias_pct: Option<f64>,
    pub mean_abs_pcc: Option<f64>,
    pub pcc_true_iv: Option<f64>,
    pub pdf_l1: Option<f64>,
    #[serde(skip)]
    pub pcc_values: Vec<f64>,
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
    #[serde(skip)]
    pub pdf: Option<PdfComparison>,
    #[serde(skip)]
    pub estimation: EstimationReport,
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl RunRecord {
    pub fn replication_record(&self) -> ReplicationRecord {
        ReplicationRecord {
            index: self.index,
            seed: self.seed,
            beta_hat: self.beta_hat,
            bias_pct: self.bias_pct,
            mean_abs_pcc: self.mean_abs_pcc,
        }
    }
}

fn run_one(source: &DataSource, cfg: &ExperimentConfig, variant: &Variant, index: usize, seed: u64) -> Result<RunRecord> {
    let start = Instant::now();
    let data = source.dataset(seed)?;
    let out = estimate_effect(&data, &variant.vae.clone().with_seed(seed), cfg.estimator, &cfg.pipeline)?;
    let z = scalar_instrument(&out.iv, &data.w)?;
    let truth = true_instrument(&data);
    let pcc_true_iv = truth.as_ref().and_then(|t| pearson(&z, t).ok());
    let pdf = truth.as_ref().map(|t| pdf_compare(t, &z, cfg.pdf_bins)).transpose()?;
    let mut estimation = out.report;
    estimation.diagnostics.runtime_seconds = None;
    let profile = estimation.diagnostics.pcc_profile.clone();
    Ok(RunRecord {
        variant: variant.label.clone(),
        index,
        seed,
        beta_hat: estimation.beta_hat,
        bias_pct: estimation.bias_pct,
        mean_abs_pcc: profile.as_ref().map(|p| p.mean_abs),
        pcc_true_iv,
        pdf_l1: pdf.as_ref().map(|p| p.l1),
        pcc_values: profile.map(|p| p.values).unwrap_or_default(),
        loss_trace: out.model.loss_trace,
        pdf,
        estimation,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Run every variant `reps` times. Replication `i` of every variant uses
/// seed `base + i`, so variants are compared on identical data. A failure
/// is reported with its replication index.
pub fn run_variants(source: &DataSource, cfg: &ExperimentConfig, variants: &[Variant], reps: usize) -> Result<Vec<RunRecord>> {
    if variants.is_empty() {
        return Err(Error::spec("no variants to run"));
    }
    let total = variants.len() * reps;
    let base = cfg.seed;
    run_replications(total, 0, cfg.jobs, |flat, _| {
        let index = flat % reps;
        run_one(source, cfg, &variants[flat / reps], index, base.wrapping_add(index as u64))
    })
    .map_err(|e| match e {
        Error::Replication { index, source } => Error::Replication {
            index: index % reps,
            source,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSummary {
    pub source: String,
    pub n: usize,
    pub covariates: Vec<String>,
    pub treated_fraction: f64,
    pub beta_true: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows_read: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows_rejected: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub encodings: Vec<CategoricalEncoding>,
}

impl DataSummary {
    fn new(source: &DataSource, data: &Dataset, seed: u64) -> Result<Self> {
        let mut s = Self {
            source: source.label(seed)?,
            n: data.n(),
            covariates: data.covariate_names.clone(),
            treated_fraction: data.w.iter().sum::<f64>() / data.n() as f64,
            beta_true: data.beta_true,
            rows_read: None,
            rows_rejected: None,
            sha256: None,
            encodings: Vec::new(),
        };
        if let DataSource::Table { table, .. } = source {
            s.rows_read = Some(table.rows_read);
            s.rows_rejected = Some(table.rows_rejected);
            s.sha256 = Some(table.sha256.clone());
            s.encodings = table.encodings.clone();
        }
        Ok(s)
    }
}

/// Aggregate of one variant's replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub label: String,
    pub alpha_w: f64,
    pub alpha_y: f64,
    pub opr_enabled: bool,
    pub reps: usize,
    pub mean_beta: f64,
    pub std_beta: Option<f64>,
    pub mean_bias: Option<f64>,
    pub std_bias: Option<f64>,
    pub mean_abs_pcc: Option<f64>,
    pub mean_pcc_true_iv: Option<f64>,
    pub mean_pdf_l1: Option<f64>,
    #[serde(skip)]
    pub summary: ReplicationSummary,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean_and_std(&v).0)
}

fn summarize(
    source: &DataSource,
    cfg: &ExperimentConfig,
    n: usize,
    variants: &[Variant],
    records: &[RunRecord],
) -> Result<Vec<VariantSummary>> {
    variants
        .iter()
        .map(|v| {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| r.variant == v.label).collect();
            let summary = ReplicationSummary::from_records(
                source.label(cfg.seed)?,
                n,
                cfg.estimator,
                cfg.seed,
                mine.iter().map(|r| r.replication_record()).collect(),
            )?;
            Ok(VariantSummary {
                label: v.label.clone(),
                alpha_w: v.vae.alpha_w,
                alpha_y: v.vae.alpha_y,
                opr_enabled: v.vae.opr_enabled,
                reps: summary.reps,
                mean_beta: summary.mean_beta,
                std_beta: summary.std_beta,
                mean_bias: summary.mean_bias,
                std_bias: summary.std_bias,
                mean_abs_pcc: summary.mean_abs_pcc,
                mean_pcc_true_iv: mean_of(mine.iter().map(|r| r.pcc_true_iv)),
                mean_pdf_l1: mean_of(mine.iter().map(|r| r.pdf_l1)),
                summary,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub parameter_count: usize,
    pub first_loss: Option<f64>,
    pub final_loss: Option<f64>,
}

/// Wall-clock fields, kept apart so everything else is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub replication_seconds: Vec<f64>,
}

/// Contents of `report.json`. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub format: &'static str,
    pub version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    pub data: DataSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimation: Option<EstimationReport>,
    pub variants: Vec<VariantSummary>,
    pub replications: Vec<RunRecord>,
    pub artifacts: Vec<String>,
    pub timing: Timing,
}

/// What a command produced, for callers that want more than the files.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub report: Report,
    pub records: Vec<RunRecord>,
}

fn create(dir: &Path, name: &str, artifacts: &mut Vec<String>) -> Result<BufWriter<File>> {
    artifacts.push(name.to_string());
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_replications_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(REPLICATIONS_HEADER)?;
    for r in records {
        wtr.write_record([
            r.variant.clone(),
            r.index.to_string(),
            r.seed.to_string(),
            r.beta_hat.to_string(),
            fmt_opt(r.bias_pct),
            fmt_opt(r.mean_abs_pcc),
            fmt_opt(r.pcc_true_iv),
            fmt_opt(r.pdf_l1),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `variant` followed by the fixed summary columns.
pub fn write_variant_summary_csv<W: Write>(summaries: &[VariantSummary], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["variant"];
    header.extend(ReplicationSummary::CSV_HEADER);
    wtr.write_record(&header)?;
    for s in summaries {
        let mut row = vec![s.label.clone()];
        row.extend(s.summary.csv_row());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_loss_traces<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let traces: Vec<_> = records.iter().map(|r| (r.variant.as_str(), r.index, r.loss_trace.as_slice())).collect();
    write_trace_rows(&traces, out)
}

fn write_trace_rows<W: Write>(traces: &[(&str, usize, &[f64])], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(LOSS_TRACE_HEADER)?;
    for (variant, index, trace) in traces {
        for (epoch, loss) in trace.iter().enumerate() {
            wtr.write_record([variant.to_string(), index.to_string(), (epoch + 1).to_string(), loss.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_pcc_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(PCC_HEADER)?;
    for r in records {
        for (j, p) in r.pcc_values.iter().enumerate() {
            wtr.write_record([
                r.variant.clone(),
                r.index.to_string(),
                r.seed.to_string(),
                format!("C{}", j + 1),
                p.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn write_report(dir: &Path, report: &mut Report) -> Result<()> {
    report.artifacts.push("report.json".into());
    let mut f = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Run `command` and write its artifacts to the configured output
/// directory (default `out`).
pub fn run_command(command: Command, cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let source = DataSource::from_config(cfg)?;
    if command == Command::Generate && !matches!(source, DataSource::Scenario(_)) {
        return Err(Error::spec("generate needs a `scenario`"));
    }
    let first = source.dataset(cfg.seed)?;
    if command == Command::PdfCompare && true_instrument(&first).is_none() {
        return Err(Error::spec("pdf-compare needs data with a known instrument"));
    }
    let data = DataSummary::new(&source, &first, cfg.seed)?;
    std::fs::create_dir_all(&out_dir)?;
    let mut artifacts = Vec::new();
    let mut report = Report {
        format: REPORT_FORMAT,
        version: REPORT_VERSION,
        command: command.to_string(),
        config: cfg.clone(),
        data,
        training: None,
        estimation: None,
        variants: Vec::new(),
        replications: Vec::new(),
        artifacts: Vec::new(),
        timing: Timing {
            total_seconds: 0.0,
            replication_seconds: Vec::new(),
        },
    };
    let mut records = Vec::new();

    match command {
        Command::Generate => {
            artifacts.push("dataset.csv".into());
            if first.latent.is_some() {
                artifacts.push("dataset.latent.csv".into());
            }
            first.save(&out_dir.join("dataset.csv"))?;
        }
        Command::Train => {
            let model = train(&first, &cfg.vae)?;
            report.training = Some(TrainingSummary {
                epochs: model.loss_trace.len(),
                parameter_count: model.params.parameter_count(),
                first_loss: model.loss_trace.first().copied(),
                final_loss: model.loss_trace.last().copied(),
            });
            let mut f = create(&out_dir, "params.json", &mut artifacts)?;
            f.write_all(model.params.to_json()?.as_bytes())?;
            f.flush()?;
            let traces = [("default", 0, model.loss_trace.as_slice())];
            write_trace_rows(&traces, create(&out_dir, "loss_trace.csv", &mut artifacts)?)?;
        }
        _ => {
            let reps = if command == Command::Estimate { 1 } else { cfg.reps };
            let vs = variants(command, &cfg.vae);
            records = run_variants(&source, cfg, &vs, reps)?;
            report.variants = summarize(&source, cfg, first.n(), &vs, &records)?;
            if command == Command::Estimate {
                report.estimation = Some(records[0].estimation.clone());
            }
            write_replications_csv(&records, create(&out_dir, "replications.csv", &mut artifacts)?)?;
            write_variant_summary_csv(&report.variants, create(&out_dir, "summary.csv", &mut artifacts)?)?;
            write_loss_traces(&records, create(&out_dir, "loss_trace.csv", &mut artifacts)?)?;
            if command == Command::EvalPcc {
                write_pcc_csv(&records, create(&out_dir, "pcc.csv", &mut artifacts)?)?;
            }
            if let Some(pdf) = &records[0].pdf {
                pdf.write_csv(create(&out_dir, "pdf_compare.csv", &mut artifacts)?)?;
            }
            report.timing.replication_seconds = records.iter().map(|r| r.runtime_seconds).collect();
            report.replications = records.clone();
        }
    }

    report.artifacts = artifacts;
    report.timing.total_seconds = start.elapsed().as_secs_f64();
    write_report(&out_dir, &mut report)?;
    Ok(RunOutcome {
        out_dir,
        report,
        records,
    })
}

/// Entry point behind the `bench` subcommand.
pub fn run_experiment(config_path: &Path, overrides: &Overrides) -> Result<RunOutcome> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    cfg.apply(overrides)?;
    run_command(Command::Bench, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::ScenarioConfig;
    use crate::scmgen::{GeneratorId, OutcomeForm};

    fn tiny(out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            version: 1,
            scenario: Some(ScenarioConfig {
                generator: GeneratorId::SingleSiv,
                n: 200,
                outcome: OutcomeForm::Linear,
                siv_count: None,
                dim: None,
            }),
            dataset: None,
            vae: VaeConfig {
                hidden: vec![4],
                dim_c: 2,
                epochs: 2,
                batch_size: 64,
                ..Default::default()
            },
            estimator: crate::estimators::EstimatorId::OrthoIv,
            pipeline: Default::default(),
            reps: 2,
            jobs: 1,
            seed: 5,
            out: Some(out.to_path_buf()),
            pdf_bins: 10,
        }
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("benchmark".parse::<Command>().is_err());
    }

    #[test]
    fn variant_grids() {
        let base = VaeConfig::default();
        let sweep = variants(Command::SweepAlpha, &base);
        assert_eq!(sweep.len(), 7);
        assert_eq!(sweep[0].label, "alpha=0.01");
        assert_eq!(sweep[6].vae.alpha_y, 10000.0);
        let ab = variants(Command::Ablate, &base);
        assert!(ab[0].vae.opr_enabled && !ab[1].vae.opr_enabled);
        assert_eq!(variants(Command::Bench, &base)[0].vae, base);
    }

    #[test]
    fn true_instrument_sums_latent_z() {
        let ds = generate(&crate::scmgen::ScenarioSpec::multi_siv(10, OutcomeForm::Linear, 2, 1)).unwrap();
        let t = true_instrument(&ds).unwrap();
        let z1 = ds.latent_column("Z1").unwrap();
        let z2 = ds.latent_column("Z2").unwrap();
        assert_eq!(t[3], z1[3] + z2[3]);
    }

    #[test]
    fn ablate_writes_paired_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let out = run_command(Command::Ablate, &cfg).unwrap();
        assert_eq!(out.records.len(), 4);
        assert_eq!(out.records[0].seed, out.records[2].seed);
        let csv = std::fs::read_to_string(dir.path().join("replications.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("variant,index,seed,beta_hat,bias_pct,mean_abs_pcc,pcc_true_iv,pdf_l1\n"));
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.starts_with("variant,scenario,n,estimator,mean_bias,std_bias,reps,base_seed\n"));
        assert!(summary.contains("opr_off,single_siv,200,ortho_iv,"));
        assert!(dir.path().join("pdf_compare.csv").exists());
    }

    #[test]
    fn generate_and_train_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        run_command(Command::Generate, &cfg).unwrap();
        let ds = Dataset::load(&dir.path().join("dataset.csv")).unwrap();
        assert_eq!(ds, generate(&cfg.scenario.unwrap().spec(5).unwrap()).unwrap());
        let out = run_command(Command::Train, &cfg).unwrap();
        assert_eq!(out.report.training.as_ref().unwrap().epochs, 2);
        let params = std::fs::read(dir.path().join("params.json")).unwrap();
        assert!(crate::divvae::ModelParams::from_json_slice(&params).is_ok());
    }

    #[test]
    fn overrides_are_validated() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.apply(&Overrides {
            seed: Some(9),
            reps: Some(3),
            ..Default::default()
        })
        .unwrap();
        assert_eq!((cfg.seed, cfg.reps), (9, 3));
        assert!(cfg
            .apply(&Overrides {
                jobs: Some(0),
                ..Default::default()
            })
            .is_err());
    }
}
