use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::tape::{Graph, Var};
use super::tensor::{matmul, Tensor};
use crate::error::{Error, Result};

/// One affine layer followed by an activation. `weight` is `in x out`,
/// `bias` is `1 x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn input_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.weight.cols()
    }
}

/// Multilayer perceptron parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMlp")]
pub struct MlpParams {
    layers: Vec<Dense>,
}

#[derive(Deserialize)]
struct RawMlp {
    layers: Vec<Dense>,
}

impl TryFrom<RawMlp> for MlpParams {
    type Error = Error;

    fn try_from(raw: RawMlp) -> Result<Self> {
        MlpParams::from_layers(raw.layers)
    }
}

/// Graph handles for an MLP whose parameters are already leaves.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    layers: Vec<(Var, Var, Activation)>,
}

impl MlpParams {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::dim("an MLP needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.shape().len() != 2 || l.bias.shape() != [1, l.weight.cols()] {
                return Err(Error::dim(format!(
                    "layer {i}: weight {:?} and bias {:?} are incompatible",
                    l.weight.shape(),
                    l.bias.shape()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(Error::dim(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output_width(),
                    i + 1,
                    pair[1].input_width()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights, zero biases. `hidden_act` is used on every
    /// layer but the last, which uses `output_act`.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        output_act: Activation,
        rng: &mut R,
    ) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
                Dense {
                    weight: Tensor::matrix(fan_in, fan_out, data).expect("sized above"),
                    bias: Tensor::zeros(1, fan_out),
                    activation: if i == last { output_act } else { hidden_act },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width()
    }

    /// Parameter tensors in `[w0, b0, w1, b1, ...]` order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Add every parameter tensor to `g` as a leaf.
    pub fn bind(&self, g: &mut Graph) -> BoundMlp {
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| g.leaf(t.clone())).collect();
        self.bind_vars(&vars).expect("one var per tensor")
    }

    /// Reuse existing leaves, consumed in [`MlpParams::tensors`] order.
    pub fn bind_vars(&self, vars: &[Var]) -> Result<BoundMlp> {
        if vars.len() != 2 * self.layers.len() {
            return Err(Error::dim(format!(
                "expected {} parameter vars, got {}",
                2 * self.layers.len(),
                vars.len()
            )));
        }
        Ok(BoundMlp {
            layers: self
                .layers
                .iter()
                .zip(vars.chunks(2))
                .map(|(l, v)| (v[0], v[1], l.activation))
                .collect(),
        })
    }

    /// Forward pass without recording a tape.
    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        if input.cols() != self.input_width() {
            return Err(Error::dim(format!(
                "input has {} columns, network expects {}",
                input.cols(),
                self.input_width()
            )));
        }
        let rows = input.rows();
        let mut cur = input.data().to_vec();
        let mut width = input.cols();
        for l in &self.layers {
            let out_w = l.output_width();
            let mut next = matmul(&cur, l.weight.data(), rows, width, out_w);
            let b = l.bias.data();
            for chunk in next.chunks_mut(out_w.max(1)) {
                for (o, bj) in chunk.iter_mut().zip(b) {
                    *o = l.activation.apply(*o + bj);
                }
            }
            cur = next;
            width = out_w;
        }
        Tensor::matrix(rows, width, cur)
    }
}

impl BoundMlp {
    pub fn forward(&self, g: &mut Graph, input: Var) -> Result<Var> {
        let mut h = input;
        for &(w, b, act) in &self.layers {
            let z = g.matmul(h, w)?;
            let z = g.add_row(z, b)?;
            h = g.activate(z, act);
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense(w: Tensor, b: Vec<f64>, activation: Activation) -> Dense {
        let n = b.len();
        Dense {
            weight: w,
            bias: Tensor::matrix(1, n, b).unwrap(),
            activation,
        }
    }

    #[test]
    fn zero_weights_return_bias() {
        let net = MlpParams::from_layers(vec![dense(
            Tensor::zeros(3, 2),
            vec![0.5, -1.5],
            Activation::Identity,
        )])
        .unwrap();
        let x = Tensor::matrix(4, 3, (0..12).map(f64::from).collect()).unwrap();
        let out = net.apply(&x).unwrap();
        assert_eq!(out.shape(), &[4, 2]);
        for r in 0..4 {
            assert_eq!(out.row(r), &[0.5, -1.5]);
        }
    }

    #[test]
    fn identity_layer_is_identity() {
        let net = MlpParams::from_layers(vec![dense(
            Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            vec![0.0, 0.0],
            Activation::Identity,
        )])
        .unwrap();
        let out = net.apply(&Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    /// 2-2-1 network, elu hidden layer, identity output.
    ///
    /// Hand computation for input [0.5, -0.5]:
    ///   h_pre = [0.5*1.0 + -0.5*0.5 + 0.1, 0.5*-1.0 + -0.5*2.0 + 0.0]
    ///         = [0.35, -1.5]
    ///   h     = [0.35, e^-1.5 - 1] = [0.35, -0.776869839851570]
    ///   out   = 0.35*2.0 + -0.776869839851570*-1.0 + 0.25
    ///         = 1.726869839851570
    #[test]
    fn hand_computed_two_layer_elu() {
        let net = MlpParams::from_layers(vec![
            dense(
                Tensor::matrix(2, 2, vec![1.0, -1.0, 0.5, 2.0]).unwrap(),
                vec![0.1, 0.0],
                Activation::Elu,
            ),
            dense(
                Tensor::matrix(2, 1, vec![2.0, -1.0]).unwrap(),
                vec![0.25],
                Activation::Identity,
            ),
        ])
        .unwrap();
        let out = net.apply(&Tensor::matrix(1, 2, vec![0.5, -0.5]).unwrap()).unwrap();
        assert!((out.data()[0] - 1.726_869_839_851_570).abs() < 1e-12);

        let mut g = Graph::new();
        let bound = net.bind(&mut g);
        let x = g.leaf(Tensor::matrix(1, 2, vec![0.5, -0.5]).unwrap());
        let y = bound.forward(&mut g, x).unwrap();
        assert_eq!(g.value(y).data(), out.data());
    }

    #[test]
    fn width_mismatch_is_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpParams::init(3, &[4], 2, Activation::Elu, Activation::Identity, &mut rng);
        assert!(matches!(net.apply(&Tensor::zeros(2, 5)), Err(Error::Dimension(_))));

        let l0 = dense(Tensor::zeros(3, 4), vec![0.0; 4], Activation::Elu);
        let l1 = dense(Tensor::zeros(5, 1), vec![0.0], Activation::Identity);
        assert!(MlpParams::from_layers(vec![l0, l1]).is_err());
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = MlpParams::init(10, &[6], 2, Activation::Elu, Activation::Identity, &mut rng);
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(net.layers()[0].weight.data().iter().all(|w| w.abs() <= limit));
        assert!(net.layers().iter().all(|l| l.bias.data().iter().all(|&b| b == 0.0)));
        assert_eq!(net.layers()[0].activation, Activation::Elu);
        assert_eq!(net.layers()[1].activation, Activation::Identity);
        assert_eq!(net.parameter_count(), 10 * 6 + 6 + 6 * 2 + 2);
    }
}
