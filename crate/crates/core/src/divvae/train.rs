use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{OutcomeKind, VaeConfig};
use super::loss::loss_graph;
use super::model::{Batch, ModelParams, Noise, Standardization};
use crate::diffcore::{AdamConfig, AdamState, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scmgen::Dataset;

/// Substreams of the training seed, disjoint from the generator streams.
const INIT_STREAM: u64 = 0x1_0000_0000;
const SHUFFLE_STREAM: u64 = 0x1_0000_0001;
const NOISE_STREAM: u64 = 0x1_0000_0002;

/// Trained parameters and the epoch-mean objective after every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub loss_trace: Vec<f64>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_dataset(dataset: &Dataset, cfg: &VaeConfig) -> Result<()> {
    dataset.validate()?;
    if dataset.n() < 2 {
        return Err(Error::spec("training needs at least two rows"));
    }
    if dataset.d() == 0 {
        return Err(Error::dim("training needs at least one covariate"));
    }
    if cfg.outcome == OutcomeKind::Binary && !dataset.outcome_is_binary() {
        return Err(Error::Schema("binary outcome configured but Y has values other than 0/1".into()));
    }
    Ok(())
}

/// Minibatch Adam on the full objective. Batches come from a fresh shuffle
/// every epoch; a trailing batch with fewer than two rows is skipped.
pub fn train(dataset: &Dataset, cfg: &VaeConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    check_dataset(dataset, cfg)?;

    let standardization = Standardization::fit(dataset, cfg.outcome);
    let mut params = ModelParams::init(
        cfg,
        dataset.covariate_names.clone(),
        standardization.clone(),
        &mut rng_for(cfg.seed, INIT_STREAM),
    )?;
    let scaled = Dataset {
        covariate_names: dataset.covariate_names.clone(),
        x: standardization.apply_x(&dataset.x)?,
        w: dataset.w.clone(),
        y: standardization.apply_y(&dataset.y),
        beta_true: None,
        latent: None,
    };

    let adam_cfg = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, params.tensors());
    let mut shuffle_rng = rng_for(cfg.seed, SHUFFLE_STREAM);
    let mut noise_rng = rng_for(cfg.seed, NOISE_STREAM);
    let mut order: Vec<usize> = (0..dataset.n()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let diverged = |message: String| Error::Training { epoch, message };
        order.shuffle(&mut shuffle_rng);
        let (mut sum, mut rows) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch = Batch::from_dataset(&scaled, chunk);
            let noise = Noise::sample(chunk.len(), cfg.dim_z, cfg.dim_c, &mut noise_rng);

            let mut g = Graph::with_capacity(256);
            let vars: Vec<Var> = params.tensors().into_iter().map(|t| g.leaf(t.clone())).collect();
            let nodes = loss_graph(&params, &mut g, &vars, &batch, &noise, cfg).map_err(|e| diverged(e.to_string()))?;
            let loss = g.scalar(nodes.total);
            let mut grads = g.backward(nodes.total)?;
            let grads: Vec<Tensor> = vars.iter().map(|&v| grads.take(v)).collect();
            adam.step(&mut params.tensors_mut(), &grads)
                .map_err(|e| diverged(e.to_string()))?;

            sum += loss * chunk.len() as f64;
            rows += chunk.len();
        }
        let mean = sum / rows as f64;
        if !mean.is_finite() {
            return Err(diverged(format!("epoch-mean loss is {mean}")));
        }
        trace.push(mean);
    }
    params.optimizer = Some(adam);
    Ok(TrainedModel {
        params,
        loss_trace: trace,
    })
}

/// Loss trace as CSV with header `epoch,loss`; epochs start at 1.
pub fn write_loss_trace<W: Write>(trace: &[f64], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["epoch", "loss"])?;
    for (i, l) in trace.iter().enumerate() {
        wtr.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

fn check_compatible(params: &ModelParams, dataset: &Dataset) -> Result<()> {
    params.validate()?;
    if dataset.d() != params.input_width() {
        return Err(Error::dim(format!(
            "dataset has {} covariates, model was trained on {}",
            dataset.d(),
            params.input_width()
        )));
    }
    Ok(())
}

/// Posterior means of the instrument latent, one `n x dim_z` tensor.
pub fn posterior_mean_z(params: &ModelParams, dataset: &Dataset) -> Result<Tensor> {
    check_compatible(params, dataset)?;
    let out = params.encoder_z.apply(&params.standardization.apply_x(&dataset.x)?)?;
    Ok(out.slice_cols(0, params.config.dim_z))
}

/// Posterior means of the auxiliary latent, one `n x dim_c` tensor.
pub fn posterior_mean_c(params: &ModelParams, dataset: &Dataset) -> Result<Tensor> {
    check_compatible(params, dataset)?;
    let out = params.encoder_c.apply(&params.standardization.apply_x(&dataset.x)?)?;
    Ok(out.slice_cols(0, params.config.dim_c))
}

/// Learned instrument: posterior means of `Z`, each column standardized to
/// mean 0 and sample variance 1.
pub fn extract_iv(params: &ModelParams, dataset: &Dataset) -> Result<Tensor> {
    let mut z = posterior_mean_z(params, dataset)?;
    let (n, k) = (z.rows(), z.cols());
    if n < 2 {
        return Err(Error::dim("standardization needs at least two rows"));
    }
    for j in 0..k {
        let col = z.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * (1.0 + mean.abs())) {
            return Err(Error::numeric(format!("latent dimension {j} of Z has zero variance")));
        }
        let data = z.data_mut();
        for i in 0..n {
            data[i * k + j] = (data[i * k + j] - mean) / sd;
        }
    }
    Ok(z)
}
