use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    /// Zeroed accumulators shaped like `params`.
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Tensor> = params
            .into_iter()
            .map(|p| Tensor::new(p.shape().to_vec(), vec![0.0; p.len()]).expect("shape of a valid tensor"))
            .collect();
        Self {
            config,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    pub fn for_mlp(config: AdamConfig, mlp: &MlpParams) -> Self {
        Self::new(config, mlp.tensors())
    }

    /// True when the accumulators are shaped like `params`.
    pub fn matches<'a>(&self, params: impl IntoIterator<Item = &'a Tensor>) -> bool {
        let params: Vec<&Tensor> = params.into_iter().collect();
        params.len() == self.first.len()
            && params
                .iter()
                .zip(self.first.iter().zip(&self.second))
                .all(|(p, (m, v))| p.same_shape(m) && p.same_shape(v))
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Fails before touching anything if a
    /// gradient is non-finite; the error names the parameter tensor index.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::dim(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if !p.same_shape(g) || !p.same_shape(&self.first[i]) {
                return Err(Error::dim(format!(
                    "tensor {i}: parameter {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::numeric(format!("non-finite gradient in parameter tensor {i}")));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(grads[i].data()).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Adam update on an MLP; a non-finite gradient is reported by layer index.
pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &[Tensor]) -> Result<()> {
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!("non-finite gradient in layer {}", i / 2)));
    }
    state.step(&mut params.tensors_mut(), grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Activation, Dense};

    fn scalar_mlp(w: f64) -> MlpParams {
        MlpParams::from_layers(vec![Dense {
            weight: Tensor::matrix(1, 1, vec![w]).unwrap(),
            bias: Tensor::zeros(1, 1),
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = scalar_mlp(0.7);
        let mut state = AdamState::for_mlp(AdamConfig::default(), &net);
        let before = net.clone();
        adam_step(&mut state, &mut net, &[Tensor::zeros(1, 1), Tensor::zeros(1, 1)]).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = Tensor::scalar(1.0);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(cfg, [&w]);
        state.step(&mut [&mut w], &[Tensor::scalar(2.0)]).unwrap();
        assert!((w.data()[0] - 0.9).abs() < 1e-8);
    }

    /// Reference loop for minimizing w^2, written out independently.
    fn reference_adam_on_square(w0: f64, lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        w
    }

    #[test]
    fn minimizes_square() {
        let expected = reference_adam_on_square(1.0, 0.1, 200);
        assert!(expected.abs() < 1e-2);

        let mut w = Tensor::scalar(1.0);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(cfg, [&w]);
        for _ in 0..200 {
            let g = Tensor::scalar(2.0 * w.data()[0]);
            state.step(&mut [&mut w], &[g]).unwrap();
        }
        assert!(w.data()[0].abs() < 1e-2);
        assert!((w.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut net = scalar_mlp(1.0);
        let mut state = AdamState::for_mlp(AdamConfig::default(), &net);
        let err = adam_step(
            &mut state,
            &mut net,
            &[Tensor::zeros(1, 1), Tensor::scalar(f64::NAN)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn deterministic_updates() {
        let run = || {
            let mut w = Tensor::matrix(1, 3, vec![0.3, -0.2, 1.1]).unwrap();
            let mut state = AdamState::new(AdamConfig::default(), [&w]);
            let g = Tensor::matrix(1, 3, vec![0.01, -3.0, 0.5]).unwrap();
            for _ in 0..5 {
                state.step(&mut [&mut w], &[g.clone()]).unwrap();
            }
            (w, state)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(sa, sb);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut w = Tensor::zeros(2, 2);
        let mut state = AdamState::new(AdamConfig::default(), [&w]);
        assert!(matches!(
            state.step(&mut [&mut w], &[Tensor::zeros(1, 2)]),
            Err(Error::Dimension(_))
        ));
    }
}
