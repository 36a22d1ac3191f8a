use super::config::VaeConfig;
use super::model::{Batch, GraphInputs, GraphOutcome, ModelParams, Noise};
use crate::diffcore::{grad_check, Activation, GradCheckReport, Graph, Tensor, Var};
use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// `KL(N(mu, diag(sigma^2)) || N(0, I)) = 1/2 sum(mu^2 + sigma^2 - ln sigma^2 - 1)`.
pub fn kl_diag_gauss(mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if mu.len() != sigma.len() {
        return Err(Error::dim(format!("mu has {} entries, sigma {}", mu.len(), sigma.len())));
    }
    if let Some(i) = sigma.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::numeric(format!("sigma[{i}] = {} is not positive", sigma[i])));
    }
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::numeric("mu contains non-finite values"));
    }
    Ok(0.5
        * mu
            .iter()
            .zip(sigma)
            .map(|(m, s)| m * m + s * s - (s * s).ln() - 1.0)
            .sum::<f64>())
}

/// Batch mean of the per-row cosine similarity between `z_i` and `c_i`.
///
/// When the widths differ the shorter vector is zero-padded, so only the
/// leading `min(dim_z, dim_c)` coordinates enter the inner product while
/// both norms use every coordinate.
pub fn opr(z: &Tensor, c: &Tensor) -> Result<f64> {
    if z.rows() != c.rows() || z.rows() == 0 {
        return Err(Error::dim(format!(
            "latent batches need the same positive row count, got {} and {}",
            z.rows(),
            c.rows()
        )));
    }
    let m = z.cols().min(c.cols());
    let mut total = 0.0;
    for i in 0..z.rows() {
        let (zi, ci) = (z.row(i), c.row(i));
        let nz = zi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nc = ci.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nz == 0.0 || nc == 0.0 {
            return Err(Error::numeric(format!("row {i} has a zero-norm latent vector")));
        }
        let dot: f64 = zi[..m].iter().zip(&ci[..m]).map(|(a, b)| a * b).sum();
        total += dot / (nz * nc);
    }
    Ok(total / z.rows() as f64)
}

/// Individual pieces of the objective, each a batch mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    /// The minimized objective.
    pub total: f64,
    /// Gaussian log-likelihood of the covariates, summed over covariates.
    pub reconstruction: f64,
    pub kl_z: f64,
    pub kl_c: f64,
    /// `log q(w | z, c)`
    pub treatment_log_lik: f64,
    /// `log q(y | w, c)`
    pub outcome_log_lik: f64,
    /// Mean cosine similarity; `None` when the penalty is disabled.
    pub opr: Option<f64>,
}

impl LossTerms {
    /// Negative evidence lower bound.
    pub fn neg_elbo(&self) -> f64 {
        -self.reconstruction + (self.kl_z + self.kl_c)
    }
}

/// Selects one piece of the objective, e.g. for gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    Total,
    Reconstruction,
    KlZ,
    KlC,
    Treatment,
    Outcome,
    Opr,
}

pub(crate) struct LossNodes {
    pub total: Var,
    pub reconstruction: Var,
    pub kl_z: Var,
    pub kl_c: Var,
    pub treatment: Var,
    pub outcome: Var,
    pub opr: Option<Var>,
}

impl LossNodes {
    pub fn term(&self, term: LossTerm) -> Result<Var> {
        Ok(match term {
            LossTerm::Total => self.total,
            LossTerm::Reconstruction => self.reconstruction,
            LossTerm::KlZ => self.kl_z,
            LossTerm::KlC => self.kl_c,
            LossTerm::Treatment => self.treatment,
            LossTerm::Outcome => self.outcome,
            LossTerm::Opr => self.opr.ok_or_else(|| Error::spec("OPR term requested but disabled"))?,
        })
    }

    fn check_finite(&self, g: &Graph) -> Result<()> {
        let named = [
            ("reconstruction", Some(self.reconstruction)),
            ("kl_z", Some(self.kl_z)),
            ("kl_c", Some(self.kl_c)),
            ("treatment", Some(self.treatment)),
            ("outcome", Some(self.outcome)),
            ("opr", self.opr),
            ("total", Some(self.total)),
        ];
        for (name, node) in named {
            if let Some(v) = node {
                if !g.scalar(v).is_finite() {
                    return Err(Error::numeric(format!("non-finite {name} term ({})", g.scalar(v))));
                }
            }
        }
        Ok(())
    }
}

/// `sum_j log N(x_j; mean_j, sd_j^2)` per row, averaged over rows.
fn gaussian_log_lik(g: &mut Graph, x: Var, mean: Var, sd: Var) -> Result<Var> {
    let width = g.value(x).cols() as f64;
    let diff = g.sub(x, mean)?;
    let r = g.div(diff, sd)?;
    let sq = g.square(r);
    let half_sq = g.scale(sq, 0.5);
    let log_sd = g.ln(sd);
    let per = g.add(half_sq, log_sd)?;
    let rows = g.sum_rows(per);
    let m = g.mean(rows);
    let neg = g.neg(m);
    Ok(g.add_scalar(neg, -width * HALF_LN_2PI))
}

fn kl_graph(g: &mut Graph, mu: Var, sd: Var) -> Result<Var> {
    let width = g.value(mu).cols() as f64;
    let mu2 = g.square(mu);
    let sd2 = g.square(sd);
    let s = g.add(mu2, sd2)?;
    let half = g.scale(s, 0.5);
    let log_sd = g.ln(sd);
    let per = g.sub(half, log_sd)?;
    let rows = g.sum_rows(per);
    let m = g.mean(rows);
    Ok(g.add_scalar(m, -0.5 * width))
}

/// Mean Bernoulli log-likelihood `t * l - softplus(l)`.
fn bernoulli_log_lik(g: &mut Graph, target: Var, logit: Var) -> Result<Var> {
    let tl = g.mul(target, logit)?;
    let sp = g.activate(logit, Activation::Softplus);
    let ll = g.sub(tl, sp)?;
    Ok(g.mean(ll))
}

fn opr_graph(g: &mut Graph, z: Var, c: Var) -> Result<Var> {
    let (dz, dc) = (g.value(z).cols(), g.value(c).cols());
    for (name, v) in [("z", z), ("c", c)] {
        let t = g.value(v);
        if let Some(i) = (0..t.rows()).find(|&i| t.row(i).iter().all(|&x| x == 0.0)) {
            return Err(Error::numeric(format!("row {i} of {name} has zero norm")));
        }
    }
    let m = dz.min(dc);
    let zs = if m == dz { z } else { g.slice_cols(z, 0, m)? };
    let cs = if m == dc { c } else { g.slice_cols(c, 0, m)? };
    let prod = g.mul(zs, cs)?;
    let dot = g.sum_rows(prod);
    let z2 = g.square(z);
    let z2 = g.sum_rows(z2);
    let nz = g.sqrt(z2);
    let c2 = g.square(c);
    let c2 = g.sum_rows(c2);
    let nc = g.sqrt(c2);
    let norms = g.mul(nz, nc)?;
    let cos = g.div(dot, norms)?;
    Ok(g.mean(cos))
}

/// Record the full objective for a standardized batch.
pub(crate) fn loss_graph(
    params: &ModelParams,
    g: &mut Graph,
    vars: &[Var],
    batch: &Batch,
    noise: &Noise,
    cfg: &VaeConfig,
) -> Result<LossNodes> {
    let inputs = GraphInputs::record(g, batch, noise);
    let f = params.forward_graph(g, vars, &inputs)?;

    let reconstruction = gaussian_log_lik(g, inputs.x, f.x_mean, f.x_sd)?;
    let kl_z = kl_graph(g, f.mu_z, f.sd_z)?;
    let kl_c = kl_graph(g, f.mu_c, f.sd_c)?;
    let treatment = bernoulli_log_lik(g, inputs.w, f.w_logit)?;
    let outcome = match f.outcome {
        GraphOutcome::Gaussian { mean, var } => {
            let sd = g.sqrt(var);
            gaussian_log_lik(g, inputs.y, mean, sd)?
        }
        GraphOutcome::Bernoulli { logit } => bernoulli_log_lik(g, inputs.y, logit)?,
    };
    let opr = if cfg.opr_enabled {
        Some(opr_graph(g, f.z, f.c)?)
    } else {
        None
    };

    // -ELBO - alpha_w E[log q(w)] - alpha_y E[log q(y)] (+ OPR)
    let neg_rec = g.neg(reconstruction);
    let kl = g.add(kl_z, kl_c)?;
    let neg_elbo = g.add(neg_rec, kl)?;
    let aw = g.scale(treatment, -cfg.alpha_w);
    let ay = g.scale(outcome, -cfg.alpha_y);
    let aux = g.add(aw, ay)?;
    let mut total = g.add(neg_elbo, aux)?;
    if let Some(o) = opr {
        total = g.add(total, o)?;
    }
    let nodes = LossNodes {
        total,
        reconstruction,
        kl_z,
        kl_c,
        treatment,
        outcome,
        opr,
    };
    nodes.check_finite(g)?;
    Ok(nodes)
}

/// Every term of the objective on a raw-scale batch.
pub fn loss_terms(params: &ModelParams, batch: &Batch, cfg: &VaeConfig, noise: &Noise) -> Result<LossTerms> {
    params.check_inputs(batch, noise)?;
    let scaled = params.standardize_batch(batch)?;
    let mut g = Graph::new();
    let vars: Vec<Var> = params.tensors().into_iter().map(|t| g.leaf(t.clone())).collect();
    let n = loss_graph(params, &mut g, &vars, &scaled, noise, cfg)?;
    Ok(LossTerms {
        total: g.scalar(n.total),
        reconstruction: g.scalar(n.reconstruction),
        kl_z: g.scalar(n.kl_z),
        kl_c: g.scalar(n.kl_c),
        treatment_log_lik: g.scalar(n.treatment),
        outcome_log_lik: g.scalar(n.outcome),
        opr: n.opr.map(|v| g.scalar(v)),
    })
}

/// The minimized objective on a raw-scale batch.
pub fn total_loss(params: &ModelParams, batch: &Batch, cfg: &VaeConfig, noise: &Noise) -> Result<f64> {
    loss_terms(params, batch, cfg, noise).map(|t| t.total)
}

/// Compare reverse-mode gradients of one loss term with central
/// differences, over every parameter tensor of the model.
pub fn grad_check_loss(
    params: &ModelParams,
    batch: &Batch,
    cfg: &VaeConfig,
    noise: &Noise,
    term: LossTerm,
    h: f64,
) -> Result<GradCheckReport> {
    params.check_inputs(batch, noise)?;
    let scaled = params.standardize_batch(batch)?;
    let tensors: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    grad_check(&tensors, h, |g, vars| {
        loss_graph(params, g, vars, &scaled, noise, cfg)?.term(term)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divvae::{model_forward, OutcomeKind, OutcomeParams, Standardization};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(outcome: OutcomeKind, opr_enabled: bool, dim_z: usize, dim_c: usize) -> (ModelParams, Batch, Noise, VaeConfig) {
        let cfg = VaeConfig {
            dim_z,
            dim_c,
            hidden: vec![2],
            alpha_w: 1.5,
            alpha_y: 0.7,
            opr_enabled,
            outcome,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let names = vec!["a".to_string(), "b".to_string()];
        let params = ModelParams::init(&cfg, names, Standardization::identity(2), &mut rng).unwrap();
        let x = Tensor::matrix(4, 2, vec![0.3, -1.2, 0.8, 0.1, -0.5, 0.9, 1.4, -0.7]).unwrap();
        let w = vec![1.0, 0.0, 1.0, 0.0];
        let y = match outcome {
            OutcomeKind::Continuous => vec![0.4, -0.2, 1.1, -0.9],
            OutcomeKind::Binary => vec![1.0, 0.0, 0.0, 1.0],
        };
        let noise = Noise::sample(4, dim_z, dim_c, &mut rng);
        (params, Batch::new(x, w, y).unwrap(), noise, cfg)
    }

    #[test]
    fn kl_reference_values() {
        assert_eq!(kl_diag_gauss(&[0.0], &[1.0]).unwrap(), 0.0);
        assert!((kl_diag_gauss(&[1.0], &[1.0]).unwrap() - 0.5).abs() < 1e-15);
        let expected = 0.5 * (4.0 - 4f64.ln() - 1.0);
        assert!((kl_diag_gauss(&[0.0], &[2.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.806_853).abs() < 1e-6);
        assert!(kl_diag_gauss(&[0.0], &[0.0]).is_err());
        assert!(kl_diag_gauss(&[0.0], &[-1.0]).is_err());
        assert!(kl_diag_gauss(&[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn opr_reference_values() {
        let z = Tensor::matrix(2, 2, vec![1.0, 2.0, -3.0, 0.5]).unwrap();
        assert!((opr(&z, &z).unwrap() - 1.0).abs() < 1e-15);
        let perp = Tensor::matrix(2, 2, vec![-2.0, 1.0, 0.5, 3.0]).unwrap();
        assert!(opr(&z, &perp).unwrap().abs() < 1e-15);

        // cos((1,0),(1,1)) = 1/sqrt2, cos((0,2),(0,-1)) = -1, cos((3,4),(4,3)) = 24/25
        let a = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(3, 2, vec![1.0, 1.0, 0.0, -1.0, 4.0, 3.0]).unwrap();
        let expected = (std::f64::consts::FRAC_1_SQRT_2 - 1.0 + 0.96) / 3.0;
        assert!((opr(&a, &b).unwrap() - expected).abs() < 1e-15);

        let zero = Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let err = opr(&zero, &z).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn opr_zero_pads_the_shorter_vector() {
        // z = (2), c = (1, 1): padded z = (2, 0), cos = 2 / (2 * sqrt 2)
        let z = Tensor::matrix(1, 1, vec![2.0]).unwrap();
        let c = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        assert!((opr(&z, &c).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(opr(&z, &c).unwrap(), opr(&c, &z).unwrap());
    }

    #[test]
    fn graph_terms_match_direct_formulas() {
        let (params, batch, noise, cfg) = tiny(OutcomeKind::Continuous, true, 1, 3);
        let f = model_forward(&params, &batch, &noise).unwrap();
        let t = loss_terms(&params, &batch, &cfg, &noise).unwrap();
        let b = batch.rows() as f64;

        let kl_z: f64 = (0..4).map(|i| kl_diag_gauss(f.mu_z.row(i), f.sd_z.row(i)).unwrap()).sum::<f64>() / b;
        let kl_c: f64 = (0..4).map(|i| kl_diag_gauss(f.mu_c.row(i), f.sd_c.row(i)).unwrap()).sum::<f64>() / b;
        let log_n = |x: f64, m: f64, s: f64| -0.5 * (2.0 * std::f64::consts::PI).ln() - s.ln() - 0.5 * ((x - m) / s).powi(2);
        let mut rec = 0.0;
        for i in 0..4 {
            for j in 0..2 {
                rec += log_n(batch.x.get(i, j), f.x_mean.get(i, j), f.x_sd.get(i, j));
            }
        }
        rec /= b;
        let lw: f64 = (0..4)
            .map(|i| {
                let p = f.treatment_prob[i];
                if batch.w[i] == 1.0 { p.ln() } else { (1.0 - p).ln() }
            })
            .sum::<f64>()
            / b;
        let OutcomeParams::Gaussian { mean, sd } = &f.outcome else { panic!() };
        let ly: f64 = (0..4).map(|i| log_n(batch.y[i], mean[i], sd[i])).sum::<f64>() / b;
        let o = opr(&f.z, &f.c).unwrap();

        assert!((t.kl_z - kl_z).abs() < 1e-12);
        assert!((t.kl_c - kl_c).abs() < 1e-12);
        assert!((t.reconstruction - rec).abs() < 1e-12);
        assert!((t.treatment_log_lik - lw).abs() < 1e-12);
        assert!((t.outcome_log_lik - ly).abs() < 1e-12);
        assert!((t.opr.unwrap() - o).abs() < 1e-12);
        let total = -rec + kl_z + kl_c - cfg.alpha_w * lw - cfg.alpha_y * ly + o;
        assert!((t.total - total).abs() < 1e-10);
    }

    #[test]
    fn ablation_identities() {
        let (params, batch, noise, mut cfg) = tiny(OutcomeKind::Continuous, false, 1, 2);
        cfg.alpha_w = 0.0;
        cfg.alpha_y = 0.0;
        let t = loss_terms(&params, &batch, &cfg, &noise).unwrap();
        assert_eq!(t.total, t.neg_elbo());
        assert!(t.opr.is_none());

        cfg.alpha_w = 3.0;
        cfg.alpha_y = 2.0;
        let off = loss_terms(&params, &batch, &cfg, &noise).unwrap();
        assert_eq!(off.total, off.neg_elbo() + (-3.0 * off.treatment_log_lik + -2.0 * off.outcome_log_lik));
        cfg.opr_enabled = true;
        let on = loss_terms(&params, &batch, &cfg, &noise).unwrap();
        assert_eq!(on.total, off.total + on.opr.unwrap());
    }

    #[test]
    fn gradients_of_every_term() {
        for (outcome, dz, dc) in [
            (OutcomeKind::Continuous, 1, 3),
            (OutcomeKind::Continuous, 2, 2),
            (OutcomeKind::Binary, 1, 2),
        ] {
            let (params, batch, noise, cfg) = tiny(outcome, true, dz, dc);
            for term in [
                LossTerm::Total,
                LossTerm::Reconstruction,
                LossTerm::KlZ,
                LossTerm::KlC,
                LossTerm::Treatment,
                LossTerm::Outcome,
                LossTerm::Opr,
            ] {
                let r = grad_check_loss(&params, &batch, &cfg, &noise, term, 1e-5).unwrap();
                assert!(r.passes(1e-4), "{outcome:?} {term:?}: {r:?}");
            }
        }
    }

    #[test]
    fn opr_term_requires_switch() {
        let (params, batch, noise, cfg) = tiny(OutcomeKind::Continuous, false, 1, 2);
        assert!(grad_check_loss(&params, &batch, &cfg, &noise, LossTerm::Opr, 1e-5).is_err());
    }
}
