//! One-vs-rest linear SVM baseline: hinge loss with L2 regularization,
//! trained by full-batch subgradient descent.

use super::TrainSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SvmConfig {
    /// L2 regularization strength.
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { lambda: 1e-3, epochs: 200, lr: 0.1 }
    }
}

/// Per-class margins for weights laid out as 3 rows of (features + bias).
pub fn margins(weights: &[Vec<f64>], x: &[f64]) -> [f64; 3] {
    std::array::from_fn(|k| {
        let row = &weights[k];
        let mut m = row[x.len()];
        for (w, v) in row[..x.len()].iter().zip(x) {
            m += w * v;
        }
        m
    })
}

/// Mean hinge loss over the one-vs-rest problems plus the L2 term.
pub fn objective(weights: &[Vec<f64>], rows: &[Vec<f64>], labels: &[usize], lambda: f64) -> f64 {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mut loss = 0.0;
    for (x, &y) in rows.iter().zip(labels) {
        let m = margins(weights, x);
        for k in 0..3 {
            let target = if k == y { 1.0 } else { -1.0 };
            loss += (1.0 - target * m[k]).max(0.0) / n;
        }
    }
    for row in weights {
        for &w in &row[..d] {
            loss += 0.5 * lambda * w * w;
        }
    }
    loss
}

/// Subgradient descent from zero weights; the trace records the objective
/// after every epoch.
pub fn fit_svm(set: &TrainSet, config: &SvmConfig) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if super::glm::distinct_labels(&set.labels) < 2 {
        return Err(Error::Training(
            "margin training needs at least two classes in the training set".into(),
        ));
    }
    let n = set.rows.len() as f64;
    let d = set.rows[0].len();
    let mut weights = vec![vec![0.0; d + 1]; 3];
    let mut trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut grad = vec![vec![0.0; d + 1]; 3];
        for (x, &y) in set.rows.iter().zip(&set.labels) {
            let m = margins(&weights, x);
            for k in 0..3 {
                let target = if k == y { 1.0 } else { -1.0 };
                if target * m[k] < 1.0 {
                    let row = &mut grad[k];
                    for (g, v) in row[..d].iter_mut().zip(x) {
                        *g -= target * v / n;
                    }
                    row[d] -= target / n;
                }
            }
        }
        for k in 0..3 {
            for j in 0..d {
                grad[k][j] += config.lambda * weights[k][j];
            }
        }
        for (wrow, grow) in weights.iter_mut().zip(&grad) {
            for (w, g) in wrow.iter_mut().zip(grow) {
                *w -= config.lr * g;
            }
        }
        trace.push(objective(&weights, &set.rows, &set.labels, config.lambda));
    }
    Ok((weights, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_points_are_classified_correctly() {
        let set = TrainSet {
            rows: vec![vec![-2.0, 0.0], vec![2.0, 0.0]],
            labels: vec![0, 2],
        };
        let (weights, _) = fit_svm(&set, &SvmConfig::default()).unwrap();
        for (x, &y) in set.rows.iter().zip(&set.labels) {
            let m = margins(&weights, x);
            let pred = (0..3).max_by(|&a, &b| m[a].partial_cmp(&m[b]).unwrap()).unwrap();
            assert_eq!(pred, y);
        }
    }

    #[test]
    fn argmax_margin_wins() {
        let m = [2.0, -1.0, -1.0];
        let pred = (0..3).max_by(|&a, &b| m[a].partial_cmp(&m[b]).unwrap()).unwrap();
        assert_eq!(pred, 0);
    }

    #[test]
    fn light_regularization_fits_at_least_as_well_as_heavy() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(23, crate::rng::stream::SYNTH, 6);
        let rows: Vec<Vec<f64>> = (0..90)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = rows
            .iter()
            .map(|r| if r[0] + 0.3 * r[1] > 0.2 { 2 } else { usize::from(r[2] > 0.0) })
            .collect();
        let set = TrainSet { rows, labels };
        let train_accuracy = |lambda: f64| -> f64 {
            let (weights, _) =
                fit_svm(&set, &SvmConfig { lambda, ..SvmConfig::default() }).unwrap();
            let hits = set
                .rows
                .iter()
                .zip(&set.labels)
                .filter(|(x, &y)| {
                    let m = margins(&weights, x);
                    (0..3).max_by(|&a, &b| m[a].partial_cmp(&m[b]).unwrap()).unwrap() == y
                })
                .count();
            hits as f64 / set.rows.len() as f64
        };
        assert!(train_accuracy(1e-4) >= train_accuracy(50.0));
    }

    #[test]
    fn single_class_training_set_is_rejected() {
        let set = TrainSet { rows: vec![vec![0.0], vec![1.0]], labels: vec![0, 0] };
        assert!(fit_svm(&set, &SvmConfig::default()).is_err());
    }
}
