//! Small feed-forward networks (one or two hidden layers) trained with
//! mini-batch SGD on softmax cross-entropy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{softmax3, TrainSet};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(a > 0.0),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Dense layer: `weights` is out x in, one bias per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpLayer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl MlpLayer {
    fn zeros_like(&self) -> Self {
        Self {
            weights: vec![vec![0.0; self.weights[0].len()]; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.iter().zip(&self.bias) {
            let mut z = *b;
            for (w, v) in row.iter().zip(input) {
                z += w * v;
            }
            out.push(z);
        }
    }
}

/// Hidden layers plus a linear output layer feeding the softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub layers: Vec<MlpLayer>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy)]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub lr: f64,
    pub epochs: usize,
}

const BATCH_SIZE: usize = 64;

/// Xavier-uniform initialization on a derived stream.
pub fn init_net(config: &MlpConfig, n_features: usize, seed: u64) -> MlpNet {
    let mut rng = stream_rng(seed, stream::MLP_INIT, 0);
    let mut sizes = vec![n_features];
    sizes.extend(std::iter::repeat(config.width).take(config.hidden_layers));
    sizes.push(3);
    let layers = sizes
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            MlpLayer {
                weights: (0..fan_out)
                    .map(|_| (0..fan_in).map(|_| rng.gen_range(-bound..bound)).collect())
                    .collect(),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    MlpNet { layers, activation: config.activation }
}

/// Mean cross-entropy over the batch plus exact backprop gradients, laid
/// out like the network's own layers.
pub fn forward_backward(
    net: &MlpNet,
    rows: &[Vec<f64>],
    labels: &[usize],
) -> Result<(f64, Vec<MlpLayer>)> {
    let n = rows.len() as f64;
    let depth = net.layers.len();
    let mut grads: Vec<MlpLayer> = net.layers.iter().map(MlpLayer::zeros_like).collect();
    let mut loss = 0.0;

    // activations[l] is the output of layer l-1 (activations[0] = input)
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(depth + 1);
    for (x, &y) in rows.iter().zip(labels) {
        activations.clear();
        activations.push(x.clone());
        for (l, layer) in net.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward_into(activations.last().unwrap(), &mut z);
            if l + 1 < depth {
                for v in &mut z {
                    *v = net.activation.apply(*v);
                }
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training("non-finite activation".into()));
            }
            activations.push(z);
        }

        let logits = activations.last().unwrap();
        let p = softmax3(&[logits[0], logits[1], logits[2]]);
        loss -= p[y].max(1e-300).ln() / n;

        // delta starts as dL/dz of the output layer
        let mut delta: Vec<f64> = (0..3).map(|k| (p[k] - f64::from(k == y)) / n).collect();
        for l in (0..depth).rev() {
            let input = &activations[l];
            let grad = &mut grads[l];
            for (j, &dj) in delta.iter().enumerate() {
                grad.bias[j] += dj;
                let row = &mut grad.weights[j];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += dj * v;
                }
            }
            if l > 0 {
                let layer = &net.layers[l];
                let mut upstream = vec![0.0; input.len()];
                for (j, &dj) in delta.iter().enumerate() {
                    for (u, w) in upstream.iter_mut().zip(&layer.weights[j]) {
                        *u += dj * w;
                    }
                }
                for (u, &a) in upstream.iter_mut().zip(input.iter()) {
                    *u *= net.activation.derivative_from_output(a);
                }
                delta = upstream;
            }
        }
    }
    Ok((loss, grads))
}

fn sgd_step(net: &mut MlpNet, grads: &[MlpLayer], lr: f64) {
    for (layer, grad) in net.layers.iter_mut().zip(grads) {
        for (wrow, grow) in layer.weights.iter_mut().zip(&grad.weights) {
            for (w, g) in wrow.iter_mut().zip(grow) {
                *w -= lr * g;
            }
        }
        for (b, g) in layer.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
    }
}

/// Mini-batch SGD with a seeded shuffle per epoch; the trace records the
/// mean training loss of each epoch.
pub fn fit_mlp(set: &TrainSet, config: &MlpConfig, seed: u64) -> Result<(MlpNet, Vec<f64>)> {
    if super::glm::distinct_labels(&set.labels) < 2 {
        return Err(Error::Training(
            "network training needs at least two classes in the training set".into(),
        ));
    }
    let n = set.rows.len();
    let mut net = init_net(config, set.rows[0].len(), seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = stream_rng(seed, stream::MLP_INIT, 1 + epoch as u64);
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(BATCH_SIZE) {
            let rows: Vec<Vec<f64>> = chunk.iter().map(|&i| set.rows[i].clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| set.labels[i]).collect();
            let (loss, grads) = forward_backward(&net, &rows, &labels)?;
            sgd_step(&mut net, &grads, config.lr);
            epoch_loss += loss * chunk.len() as f64;
        }
        trace.push(epoch_loss / n as f64);
    }
    Ok((net, trace))
}

/// Raw logits for one input.
pub fn mlp_scores(net: &MlpNet, x: &[f64]) -> [f64; 3] {
    let depth = net.layers.len();
    let mut current = x.to_vec();
    let mut next = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        layer.forward_into(&current, &mut next);
        if l + 1 < depth {
            for v in &mut next {
                *v = net.activation.apply(*v);
            }
        }
        std::mem::swap(&mut current, &mut next);
    }
    [current[0], current[1], current[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_batch() -> (Vec<Vec<f64>>, Vec<usize>) {
        use rand::Rng;
        let mut rng = stream_rng(31, stream::SYNTH, 4);
        let rows: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels = vec![0, 1, 2, 0, 1, 2, 0, 1, 2];
        (rows, labels)
    }

    #[test]
    fn zero_weights_give_uniform_softmax_loss() {
        let (rows, labels) = toy_batch();
        let mut net = init_net(
            &MlpConfig {
                hidden_layers: 1,
                width: 8,
                activation: Activation::Tanh,
                lr: 0.1,
                epochs: 1,
            },
            4,
            0,
        );
        for layer in &mut net.layers {
            for row in &mut layer.weights {
                row.iter_mut().for_each(|w| *w = 0.0);
            }
        }
        let (loss, _) = forward_backward(&net, &rows, &labels).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_central_differences() {
        let (rows, labels) = toy_batch();
        for activation in [Activation::Tanh, Activation::Relu] {
            let net = init_net(
                &MlpConfig { hidden_layers: 2, width: 8, activation, lr: 0.1, epochs: 1 },
                4,
                42,
            );
            let (_, grads) = forward_backward(&net, &rows, &labels).unwrap();
            let h = 1e-5;
            for l in 0..net.layers.len() {
                for j in 0..net.layers[l].weights.len() {
                    for i in 0..net.layers[l].weights[j].len() {
                        let mut plus = net.clone();
                        plus.layers[l].weights[j][i] += h;
                        let mut minus = net.clone();
                        minus.layers[l].weights[j][i] -= h;
                        let (lp, _) = forward_backward(&plus, &rows, &labels).unwrap();
                        let (lm, _) = forward_backward(&minus, &rows, &labels).unwrap();
                        let numeric = (lp - lm) / (2.0 * h);
                        let analytic = grads[l].weights[j][i];
                        let rel = (numeric - analytic).abs()
                            / analytic.abs().max(numeric.abs()).max(1e-8);
                        assert!(
                            rel < 1e-4,
                            "layer {l} w[{j}][{i}]: analytic {analytic} vs numeric {numeric}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (rows, labels) = toy_batch();
        let set = TrainSet { rows, labels };
        let config = MlpConfig {
            hidden_layers: 1,
            width: 8,
            activation: Activation::Relu,
            lr: 0.0,
            epochs: 3,
        };
        let (net, _) = fit_mlp(&set, &config, 5).unwrap();
        assert_eq!(net, init_net(&config, 4, 5));
    }

    #[test]
    fn training_is_deterministic() {
        let (rows, labels) = toy_batch();
        let set = TrainSet { rows, labels };
        let config = MlpConfig {
            hidden_layers: 2,
            width: 8,
            activation: Activation::Tanh,
            lr: 0.1,
            epochs: 5,
        };
        let (a, ta) = fit_mlp(&set, &config, 5).unwrap();
        let (b, tb) = fit_mlp(&set, &config, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }
}
