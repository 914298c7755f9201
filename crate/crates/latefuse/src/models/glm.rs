//! Multinomial logistic regression with an elastic-net penalty, fit by
//! full-batch gradient descent.

use super::{softmax3, TrainSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GlmConfig {
    /// Penalty strength.
    pub lambda: f64,
    /// Elastic-net mix: 1 is pure L1, 0 pure L2.
    pub alpha: f64,
    pub epochs: usize,
    pub lr: f64,
}

/// Class scores for weights laid out as 3 rows of (features + bias).
pub fn scores(weights: &[Vec<f64>], x: &[f64]) -> [f64; 3] {
    std::array::from_fn(|k| {
        let row = &weights[k];
        let mut s = row[x.len()]; // bias is the trailing coefficient
        for (w, v) in row[..x.len()].iter().zip(x) {
            s += w * v;
        }
        s
    })
}

/// Objective (mean cross-entropy plus elastic-net penalty on non-bias
/// weights) and its analytic gradient. The L1 part uses the sign
/// subgradient, zero at zero.
pub fn objective_and_gradient(
    weights: &[Vec<f64>],
    rows: &[Vec<f64>],
    labels: &[usize],
    lambda: f64,
    alpha: f64,
) -> (f64, Vec<Vec<f64>>) {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mut grad = vec![vec![0.0; d + 1]; 3];
    let mut loss = 0.0;

    for (x, &y) in rows.iter().zip(labels) {
        let p = softmax3(&scores(weights, x));
        loss -= p[y].max(1e-300).ln();
        for k in 0..3 {
            let delta = (p[k] - f64::from(k == y)) / n;
            let row = &mut grad[k];
            for (g, v) in row[..d].iter_mut().zip(x) {
                *g += delta * v;
            }
            row[d] += delta;
        }
    }
    loss /= n;

    for k in 0..3 {
        for j in 0..d {
            let w = weights[k][j];
            loss += lambda * (alpha * w.abs() + 0.5 * (1.0 - alpha) * w * w);
            grad[k][j] += lambda * (alpha * w.signum() * f64::from(w != 0.0) + (1.0 - alpha) * w);
        }
    }
    (loss, grad)
}

/// Proximal gradient descent from zero weights: each epoch takes a step on
/// the smooth cross-entropy gradient and then applies the closed-form
/// elastic-net shrinkage (soft threshold for L1, multiplicative decay for
/// L2), which stays stable for any penalty strength. The trace records the
/// full objective after every epoch.
pub fn fit_glm(set: &TrainSet, config: &GlmConfig) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let distinct = distinct_labels(&set.labels);
    if distinct < 2 {
        return Err(Error::Training(
            "multinomial regression needs at least two classes in the training set".into(),
        ));
    }
    let d = set.rows[0].len();
    let mut weights = vec![vec![0.0; d + 1]; 3];
    let mut trace = Vec::with_capacity(config.epochs);
    let l1_step = config.lr * config.lambda * config.alpha;
    let l2_decay = 1.0 + config.lr * config.lambda * (1.0 - config.alpha);
    for _ in 0..config.epochs {
        let (ce_loss, grad) = objective_and_gradient(&weights, &set.rows, &set.labels, 0.0, 0.0);
        if !ce_loss.is_finite() {
            return Err(Error::Training("non-finite logistic loss".into()));
        }
        for (wrow, grow) in weights.iter_mut().zip(&grad) {
            for (w, g) in wrow.iter_mut().zip(grow) {
                *w -= config.lr * g;
            }
            for w in wrow[..d].iter_mut() {
                *w = (w.abs() - l1_step).max(0.0) * w.signum() / l2_decay;
            }
        }
        let penalty: f64 = weights
            .iter()
            .flat_map(|row| &row[..d])
            .map(|w| config.lambda * (config.alpha * w.abs() + 0.5 * (1.0 - config.alpha) * w * w))
            .sum();
        trace.push(ce_loss + penalty);
    }
    Ok((weights, trace))
}

pub fn distinct_labels(labels: &[usize]) -> usize {
    let mut present = [false; 3];
    for &l in labels {
        present[l] = true;
    }
    present.iter().filter(|&&p| p).count()
}
