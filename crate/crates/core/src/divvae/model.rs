use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{OutcomeKind, VaeConfig};
use crate::diffcore::{Activation, AdamState, BoundMlp, Graph, MlpParams, Tensor, Var};
use crate::error::{Error, Result};
use crate::scmgen::Dataset;

/// Format version written into serialized parameters.
pub const PARAMS_FORMAT_VERSION: u32 = 1;

/// Added to every softplus standard-deviation or variance head.
pub const STD_FLOOR: f64 = 1e-4;

/// Outcome predictors. Continuous outcomes use four separate networks of
/// `c`: means and variances under treatment and control. Binary outcomes use
/// one logit network of `(w, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeHeads {
    Continuous {
        /// g2
        mean_treated: MlpParams,
        /// g3
        mean_control: MlpParams,
        /// g4
        var_treated: MlpParams,
        /// g5
        var_control: MlpParams,
    },
    Binary {
        /// g6
        logit: MlpParams,
    },
}

/// Affine maps applied to the data before it reaches the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_center: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_center: f64,
    pub y_scale: f64,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Self {
            x_center: vec![0.0; d],
            x_scale: vec![1.0; d],
            y_center: 0.0,
            y_scale: 1.0,
        }
    }

    /// Column means and sample standard deviations; constant columns keep
    /// scale 1. The outcome is standardized only when it is continuous.
    pub fn fit(dataset: &Dataset, outcome: OutcomeKind) -> Self {
        let (x_center, x_scale) = (0..dataset.d()).map(|j| center_scale(&dataset.x.column(j))).unzip();
        let (y_center, y_scale) = match outcome {
            OutcomeKind::Continuous => center_scale(&dataset.y),
            OutcomeKind::Binary => (0.0, 1.0),
        };
        Self {
            x_center,
            x_scale,
            y_center,
            y_scale,
        }
    }

    pub fn apply_x(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.x_center.len() {
            return Err(Error::dim(format!(
                "data has {} covariates, model was built for {}",
                x.cols(),
                self.x_center.len()
            )));
        }
        let d = x.cols();
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(d.max(1)) {
            for ((v, m), s) in row.iter_mut().zip(&self.x_center).zip(&self.x_scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn apply_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.y_center) / self.y_scale).collect()
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.x_center.len() != d || self.x_scale.len() != d {
            return Err(Error::dim("standardization does not match covariate count"));
        }
        let ok = |c: f64, s: f64| c.is_finite() && s.is_finite() && s > 0.0;
        if !self.x_center.iter().zip(&self.x_scale).all(|(&c, &s)| ok(c, s)) || !ok(self.y_center, self.y_scale) {
            return Err(Error::numeric("standardization has non-finite or non-positive entries"));
        }
        Ok(())
    }
}

fn center_scale(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    if sd > 1e-12 * (1.0 + mean.abs()) {
        (mean, sd)
    } else {
        (mean, 1.0)
    }
}

/// Every trainable network of the model plus the data standardization and
/// (after training) the optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub version: u32,
    pub config: VaeConfig,
    pub covariate_names: Vec<String>,
    pub standardization: Standardization,
    /// `x -> [mean_z | raw_sd_z]`
    pub encoder_z: MlpParams,
    /// `x -> [mean_c | raw_sd_c]`
    pub encoder_c: MlpParams,
    /// `(z, c) -> [mean_x | raw_sd_x]`
    pub decoder_x: MlpParams,
    /// g1: `(z, c) -> logit P(W = 1)`
    pub predictor_w: MlpParams,
    pub outcome: OutcomeHeads,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamState>,
}

/// Rows of `(x, w, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
}

impl Batch {
    pub fn new(x: Tensor, w: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if w.len() != x.rows() || y.len() != x.rows() {
            return Err(Error::dim(format!(
                "batch parts disagree: x has {} rows, w {}, y {}",
                x.rows(),
                w.len(),
                y.len()
            )));
        }
        Ok(Self { x, w, y })
    }

    pub fn from_dataset(dataset: &Dataset, rows: &[usize]) -> Self {
        Self {
            x: dataset.x.select_rows(rows),
            w: rows.iter().map(|&i| dataset.w[i]).collect(),
            y: rows.iter().map(|&i| dataset.y[i]).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.w.len()
    }
}

/// Standard-normal draws for the reparameterized samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    /// `b x dim_z`
    pub z: Tensor,
    /// `b x dim_c`
    pub c: Tensor,
}

impl Noise {
    pub fn zeros(rows: usize, dim_z: usize, dim_c: usize) -> Self {
        Self {
            z: Tensor::zeros(rows, dim_z),
            c: Tensor::zeros(rows, dim_c),
        }
    }

    pub fn sample<R: Rng + ?Sized>(rows: usize, dim_z: usize, dim_c: usize, rng: &mut R) -> Self {
        let mut draw = |k: usize| {
            let data = (0..rows * k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            Tensor::matrix(rows, k, data).expect("length matches shape")
        };
        let z = draw(dim_z);
        let c = draw(dim_c);
        Self { z, c }
    }
}

/// Predicted outcome distribution, on the model's standardized scale.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeParams {
    Gaussian { mean: Vec<f64>, sd: Vec<f64> },
    Bernoulli { prob: Vec<f64> },
}

/// Values of one forward pass. Covariate reconstructions and outcome
/// parameters are on the standardized scale the networks see.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutputs {
    pub mu_z: Tensor,
    pub sd_z: Tensor,
    pub mu_c: Tensor,
    pub sd_c: Tensor,
    pub z: Tensor,
    pub c: Tensor,
    pub x_mean: Tensor,
    pub x_sd: Tensor,
    pub treatment_prob: Vec<f64>,
    pub outcome: OutcomeParams,
}

pub(crate) enum GraphOutcome {
    Gaussian { mean: Var, var: Var },
    Bernoulli { logit: Var },
}

/// Nodes of one forward pass recorded on a tape.
pub(crate) struct GraphForward {
    pub mu_z: Var,
    pub sd_z: Var,
    pub mu_c: Var,
    pub sd_c: Var,
    pub z: Var,
    pub c: Var,
    pub x_mean: Var,
    pub x_sd: Var,
    pub w_logit: Var,
    pub outcome: GraphOutcome,
}

/// Inputs of one forward pass as tape leaves.
pub(crate) struct GraphInputs {
    pub x: Var,
    pub w: Var,
    pub y: Var,
    pub eps_z: Var,
    pub eps_c: Var,
}

impl GraphInputs {
    /// `batch` must already be standardized.
    pub fn record(g: &mut Graph, batch: &Batch, noise: &Noise) -> Self {
        Self {
            x: g.leaf(batch.x.clone()),
            w: g.leaf(Tensor::column_vector(batch.w.clone())),
            y: g.leaf(Tensor::column_vector(batch.y.clone())),
            eps_z: g.leaf(noise.z.clone()),
            eps_c: g.leaf(noise.c.clone()),
        }
    }
}

/// Split a `[mean | raw_sd]` head into its mean and floored softplus sd.
fn gaussian_head(g: &mut Graph, out: Var, k: usize) -> Result<(Var, Var)> {
    let mean = g.slice_cols(out, 0, k)?;
    let raw = g.slice_cols(out, k, 2 * k)?;
    let sd = g.activate(raw, Activation::Softplus);
    Ok((mean, g.add_scalar(sd, STD_FLOOR)))
}

impl ModelParams {
    /// Freshly initialized networks for `covariate_names.len()` covariates.
    pub fn init<R: Rng + ?Sized>(
        config: &VaeConfig,
        covariate_names: Vec<String>,
        standardization: Standardization,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let d = covariate_names.len();
        if d == 0 {
            return Err(Error::dim("model needs at least one covariate"));
        }
        let (dz, dc, h) = (config.dim_z, config.dim_c, config.hidden.as_slice());
        let mut net = |input, output, out_act| MlpParams::init(input, h, output, Activation::Elu, out_act, rng);
        let encoder_z = net(d, 2 * dz, Activation::Identity);
        let encoder_c = net(d, 2 * dc, Activation::Identity);
        let decoder_x = net(dz + dc, 2 * d, Activation::Identity);
        let predictor_w = net(dz + dc, 1, Activation::Identity);
        let outcome = match config.outcome {
            OutcomeKind::Continuous => OutcomeHeads::Continuous {
                mean_treated: net(dc, 1, Activation::Identity),
                mean_control: net(dc, 1, Activation::Identity),
                var_treated: net(dc, 1, Activation::Softplus),
                var_control: net(dc, 1, Activation::Softplus),
            },
            OutcomeKind::Binary => OutcomeHeads::Binary {
                logit: net(dc + 1, 1, Activation::Identity),
            },
        };
        let params = Self {
            version: PARAMS_FORMAT_VERSION,
            config: config.clone(),
            covariate_names,
            standardization,
            encoder_z,
            encoder_c,
            decoder_x,
            predictor_w,
            outcome,
            optimizer: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn input_width(&self) -> usize {
        self.covariate_names.len()
    }

    /// Networks in a fixed order: encoders, decoder, g1, then outcome heads.
    pub fn networks(&self) -> Vec<&MlpParams> {
        let mut nets = vec![&self.encoder_z, &self.encoder_c, &self.decoder_x, &self.predictor_w];
        match &self.outcome {
            OutcomeHeads::Continuous {
                mean_treated,
                mean_control,
                var_treated,
                var_control,
            } => nets.extend([mean_treated, mean_control, var_treated, var_control]),
            OutcomeHeads::Binary { logit } => nets.push(logit),
        }
        nets
    }

    pub fn networks_mut(&mut self) -> Vec<&mut MlpParams> {
        let mut nets = vec![
            &mut self.encoder_z,
            &mut self.encoder_c,
            &mut self.decoder_x,
            &mut self.predictor_w,
        ];
        match &mut self.outcome {
            OutcomeHeads::Continuous {
                mean_treated,
                mean_control,
                var_treated,
                var_control,
            } => nets.extend([mean_treated, mean_control, var_treated, var_control]),
            OutcomeHeads::Binary { logit } => nets.push(logit),
        }
        nets
    }

    /// All parameter tensors, network by network.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.networks().into_iter().flat_map(|n| n.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.networks_mut().into_iter().flat_map(|n| n.tensors_mut()).collect()
    }

    pub fn set_tensors(&mut self, values: &[Tensor]) -> Result<()> {
        let mut slots = self.tensors_mut();
        if slots.len() != values.len() || slots.iter().zip(values).any(|(s, v)| !s.same_shape(v)) {
            return Err(Error::dim("replacement tensors do not match the model"));
        }
        for (s, v) in slots.iter_mut().zip(values) {
            **s = v.clone();
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.networks().iter().map(|n| n.parameter_count()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PARAMS_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "parameter format version {} is not supported (expected {PARAMS_FORMAT_VERSION})",
                self.version
            )));
        }
        self.config.validate()?;
        let d = self.input_width();
        if d == 0 {
            return Err(Error::dim("model needs at least one covariate"));
        }
        self.standardization.validate(d)?;
        let (dz, dc) = (self.config.dim_z, self.config.dim_c);
        let check = |name: &str, net: &MlpParams, input: usize, output: usize| {
            if net.input_width() != input || net.output_width() != output {
                return Err(Error::dim(format!(
                    "{name} maps {} -> {}, expected {input} -> {output}",
                    net.input_width(),
                    net.output_width()
                )));
            }
            Ok(())
        };
        check("encoder_z", &self.encoder_z, d, 2 * dz)?;
        check("encoder_c", &self.encoder_c, d, 2 * dc)?;
        check("decoder_x", &self.decoder_x, dz + dc, 2 * d)?;
        check("predictor_w", &self.predictor_w, dz + dc, 1)?;
        match (&self.outcome, self.config.outcome) {
            (
                OutcomeHeads::Continuous {
                    mean_treated,
                    mean_control,
                    var_treated,
                    var_control,
                },
                OutcomeKind::Continuous,
            ) => {
                check("mean_treated", mean_treated, dc, 1)?;
                check("mean_control", mean_control, dc, 1)?;
                check("var_treated", var_treated, dc, 1)?;
                check("var_control", var_control, dc, 1)?;
                for (name, net) in [("var_treated", var_treated), ("var_control", var_control)] {
                    if net.layers().last().map(|l| l.activation) != Some(Activation::Softplus) {
                        return Err(Error::Schema(format!("{name} must end in a softplus layer")));
                    }
                }
            }
            (OutcomeHeads::Binary { logit }, OutcomeKind::Binary) => check("outcome logit", logit, dc + 1, 1)?,
            _ => return Err(Error::Schema("outcome heads do not match the configured outcome kind".into())),
        }
        if let Some(opt) = &self.optimizer {
            if !opt.matches(self.tensors()) {
                return Err(Error::dim("optimizer state does not match the parameters"));
            }
        }
        if self.tensors().iter().any(|t| !t.is_finite()) {
            return Err(Error::numeric("parameters contain non-finite values"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Decode and validate serialized parameters.
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let params: Self = serde_json::from_slice(bytes)?;
        params.validate()?;
        Ok(params)
    }

    /// Record a forward pass on `g`. `vars` are leaves for
    /// [`ModelParams::tensors`], `inputs` hold a standardized batch.
    pub(crate) fn forward_graph(&self, g: &mut Graph, vars: &[Var], inputs: &GraphInputs) -> Result<GraphForward> {
        let nets = self.networks();
        let mut bound: Vec<BoundMlp> = Vec::with_capacity(nets.len());
        let mut offset = 0;
        for net in &nets {
            let k = 2 * net.layers().len();
            let slice = vars
                .get(offset..offset + k)
                .ok_or_else(|| Error::dim("too few parameter vars for the model"))?;
            bound.push(net.bind_vars(slice)?);
            offset += k;
        }
        if offset != vars.len() {
            return Err(Error::dim("too many parameter vars for the model"));
        }
        let (dz, dc, d) = (self.config.dim_z, self.config.dim_c, self.input_width());

        let ez = bound[0].forward(g, inputs.x)?;
        let (mu_z, sd_z) = gaussian_head(g, ez, dz)?;
        let ec = bound[1].forward(g, inputs.x)?;
        let (mu_c, sd_c) = gaussian_head(g, ec, dc)?;

        let nz = g.mul(sd_z, inputs.eps_z)?;
        let z = g.add(mu_z, nz)?;
        let nc = g.mul(sd_c, inputs.eps_c)?;
        let c = g.add(mu_c, nc)?;
        let zc = g.concat_cols(z, c)?;

        let dx = bound[2].forward(g, zc)?;
        let (x_mean, x_sd) = gaussian_head(g, dx, d)?;
        let w_logit = bound[3].forward(g, zc)?;

        let outcome = match self.outcome {
            OutcomeHeads::Continuous { .. } => {
                let m1 = bound[4].forward(g, c)?;
                let m0 = bound[5].forward(g, c)?;
                let v1 = bound[6].forward(g, c)?;
                let v1 = g.add_scalar(v1, STD_FLOOR);
                let v0 = bound[7].forward(g, c)?;
                let v0 = g.add_scalar(v0, STD_FLOOR);
                // w * a + (1 - w) * b written as b + w * (a - b)
                let dm = g.sub(m1, m0)?;
                let wdm = g.mul(inputs.w, dm)?;
                let mean = g.add(m0, wdm)?;
                let dv = g.sub(v1, v0)?;
                let wdv = g.mul(inputs.w, dv)?;
                let var = g.add(v0, wdv)?;
                GraphOutcome::Gaussian { mean, var }
            }
            OutcomeHeads::Binary { .. } => {
                let wc = g.concat_cols(inputs.w, c)?;
                GraphOutcome::Bernoulli {
                    logit: bound[4].forward(g, wc)?,
                }
            }
        };
        Ok(GraphForward {
            mu_z,
            sd_z,
            mu_c,
            sd_c,
            z,
            c,
            x_mean,
            x_sd,
            w_logit,
            outcome,
        })
    }

    pub(crate) fn standardize_batch(&self, batch: &Batch) -> Result<Batch> {
        Ok(Batch {
            x: self.standardization.apply_x(&batch.x)?,
            w: batch.w.clone(),
            y: self.standardization.apply_y(&batch.y),
        })
    }

    pub(crate) fn check_inputs(&self, batch: &Batch, noise: &Noise) -> Result<()> {
        let b = batch.rows();
        if batch.x.rows() != b || batch.y.len() != b {
            return Err(Error::dim("batch parts have different row counts"));
        }
        if batch.x.cols() != self.input_width() {
            return Err(Error::dim(format!(
                "batch has {} covariates, model expects {}",
                batch.x.cols(),
                self.input_width()
            )));
        }
        let (dz, dc) = (self.config.dim_z, self.config.dim_c);
        if noise.z.shape() != [b, dz] || noise.c.shape() != [b, dc] {
            return Err(Error::dim(format!(
                "noise shapes {:?} and {:?} do not match ({b}, {dz}) and ({b}, {dc})",
                noise.z.shape(),
                noise.c.shape()
            )));
        }
        Ok(())
    }
}

/// One forward pass on a raw-scale batch with the supplied noise.
pub fn model_forward(params: &ModelParams, batch: &Batch, noise: &Noise) -> Result<ForwardOutputs> {
    params.check_inputs(batch, noise)?;
    let scaled = params.standardize_batch(batch)?;
    let mut g = Graph::new();
    let vars: Vec<Var> = params.tensors().into_iter().map(|t| g.leaf(t.clone())).collect();
    let inputs = GraphInputs::record(&mut g, &scaled, noise);
    let f = params.forward_graph(&mut g, &vars, &inputs)?;
    let value = |v: Var| g.value(v).clone();
    let outcome = match f.outcome {
        GraphOutcome::Gaussian { mean, var } => OutcomeParams::Gaussian {
            mean: g.value(mean).data().to_vec(),
            sd: g.value(var).data().iter().map(|v| v.sqrt()).collect(),
        },
        GraphOutcome::Bernoulli { logit } => OutcomeParams::Bernoulli {
            prob: g.value(logit).data().iter().map(|&l| crate::diffcore::sigmoid(l)).collect(),
        },
    };
    Ok(ForwardOutputs {
        mu_z: value(f.mu_z),
        sd_z: value(f.sd_z),
        mu_c: value(f.mu_c),
        sd_c: value(f.sd_c),
        z: value(f.z),
        c: value(f.c),
        x_mean: value(f.x_mean),
        x_sd: value(f.x_sd),
        treatment_prob: g
            .value(f.w_logit)
            .data()
            .iter()
            .map(|&l| crate::diffcore::sigmoid(l))
            .collect(),
        outcome,
    })
}
