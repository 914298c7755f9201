//! Multiclass gradient boosting with two leaf solvers behind one engine.
//!
//! Both variants fit one regression tree per class per round against the
//! multinomial deviance with a softmax link. The first-order variant fits
//! trees to the negative gradient and uses mean-residual leaves; the
//! second-order variant scores splits and leaves from gradient/Hessian
//! sums with an L2 term, leaf weight -G / (H + lambda).

use rand::Rng;

use super::tree::{
    grow_tree, FeatureSubsample, GradHessCriterion, GrowConfig, MeanResidualCriterion,
    SortedDataset, ThresholdMode, Tree,
};
use super::{softmax3, TrainSet};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy)]
pub struct BoostConfig {
    pub n_rounds: usize,
    /// Shrinkage applied to every leaf contribution.
    pub nu: f64,
    pub max_depth: usize,
    /// Fraction of rows used to grow each round's trees.
    pub subsample: f64,
    /// L2 leaf regularization; `Some` selects the second-order solver.
    pub lambda: Option<f64>,
}

/// Mutable boosting state threaded through rounds.
pub struct BoostState {
    pub init_scores: [f64; 3],
    pub scores: Vec<[f64; 3]>,
    pub trees: Vec<Tree>,
    pub deviance_trace: Vec<f64>,
}

/// Class-prior initialization on the score scale: the softmax of the
/// initial scores reproduces the training priors.
pub fn init_state(set: &TrainSet) -> BoostState {
    let n = set.labels.len() as f64;
    let mut counts = [0.0f64; 3];
    for &label in &set.labels {
        counts[label] += 1.0;
    }
    let init_scores = counts.map(|c| (c / n).max(1e-12).ln());
    BoostState {
        init_scores,
        scores: vec![init_scores; set.labels.len()],
        trees: Vec::new(),
        deviance_trace: Vec::new(),
    }
}

/// Mean multinomial deviance of the current scores.
pub fn deviance(state: &BoostState, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (score, &label) in state.scores.iter().zip(labels) {
        let p = softmax3(score);
        total -= p[label].max(1e-300).ln();
    }
    total / labels.len() as f64
}

/// Runs one boosting round: grows one tree per class on the (sub)sampled
/// rows and updates every row's scores with shrinkage `nu`.
pub fn boost_round(
    state: &mut BoostState,
    data: &SortedDataset,
    set: &TrainSet,
    config: &BoostConfig,
    round: usize,
    seed: u64,
) -> Result<()> {
    let n = set.labels.len();
    let mut rng = stream_rng(seed, stream::BOOST_ROUND, round as u64);

    let weights: Vec<f64> = if config.subsample < 1.0 {
        let keep = ((config.subsample * n as f64).floor() as usize).max(1);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..keep {
            let j = rng.gen_range(i..n);
            pool.swap(i, j);
        }
        let mut weights = vec![0.0; n];
        for &i in &pool[..keep] {
            weights[i] = 1.0;
        }
        weights
    } else {
        vec![1.0; n]
    };

    let probs: Vec<[f64; 3]> = state.scores.iter().map(softmax3).collect();
    for p in &probs {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite boosting gradients".into()));
        }
    }

    let grow_config = GrowConfig {
        max_depth: config.max_depth,
        min_samples_leaf: 1.0,
        feature_subsample: FeatureSubsample::All,
        threshold_mode: ThresholdMode::Exhaustive,
    };

    let mut round_trees = Vec::with_capacity(3);
    for class in 0..3 {
        let tree = match config.lambda {
            None => {
                // negative gradient of the deviance: y - p
                let targets: Vec<f64> = probs
                    .iter()
                    .zip(&set.labels)
                    .map(|(p, &y)| f64::from(y == class) - p[class])
                    .collect();
                let criterion = MeanResidualCriterion { targets: &targets, class };
                grow_tree(data, &weights, &criterion, grow_config, &mut rng)
            }
            Some(lambda) => {
                let grad: Vec<f64> = probs
                    .iter()
                    .zip(&set.labels)
                    .map(|(p, &y)| p[class] - f64::from(y == class))
                    .collect();
                let hess: Vec<f64> = probs.iter().map(|p| p[class] * (1.0 - p[class])).collect();
                let criterion = GradHessCriterion { grad: &grad, hess: &hess, lambda, class };
                grow_tree(data, &weights, &criterion, grow_config, &mut rng)
            }
        };
        round_trees.push(tree);
    }

    for (i, row) in set.rows.iter().enumerate() {
        for tree in &round_trees {
            let leaf = tree.leaf_for(row);
            for k in 0..3 {
                state.scores[i][k] += config.nu * leaf[k];
            }
        }
    }
    state.trees.extend(round_trees);
    state.deviance_trace.push(deviance(state, &set.labels));
    Ok(())
}

/// Full boosting fit; the trace holds the post-round training deviance.
pub fn fit_gbm(set: &TrainSet, config: &BoostConfig, seed: u64) -> Result<BoostState> {
    let data = SortedDataset::from_rows(&set.rows);
    let mut state = init_state(set);
    for round in 0..config.n_rounds {
        boost_round(&mut state, &data, set, config, round, seed)?;
    }
    Ok(state)
}

/// Raw class scores for one input.
pub fn gbm_scores(init_scores: &[f64; 3], nu: f64, trees: &[Tree], x: &[f64]) -> [f64; 3] {
    let mut scores = *init_scores;
    for tree in trees {
        let leaf = tree.leaf_for(x);
        for k in 0..3 {
            scores[k] += nu * leaf[k];
        }
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_set() -> TrainSet {
        use rand::Rng;
        let mut rng = stream_rng(4, stream::SYNTH, 9);
        let rows: Vec<Vec<f64>> = (0..90)
            .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = rows
            .iter()
            .map(|r| if r[0] > 0.67 { 2 } else { usize::from(r[1] > 0.4) })
            .collect();
        TrainSet { rows, labels }
    }

    fn config(lambda: Option<f64>) -> BoostConfig {
        BoostConfig { n_rounds: 30, nu: 0.1, max_depth: 3, subsample: 1.0, lambda }
    }

    #[test]
    fn first_round_moves_scores_toward_the_single_class() {
        // Start from uniform scores so the gradient is nonzero; the round
        // must push every row toward the one observed class and strictly
        // reduce the deviance.
        let set = TrainSet {
            rows: vec![vec![0.1], vec![0.4], vec![0.9]],
            labels: vec![2, 2, 2],
        };
        let data = SortedDataset::from_rows(&set.rows);
        let mut state = init_state(&set);
        state.scores = vec![[0.0; 3]; 3];
        let before = deviance(&state, &set.labels);
        boost_round(&mut state, &data, &set, &config(None), 0, 0).unwrap();
        assert!(state.deviance_trace[0] < before);
        for score in &state.scores {
            assert!(score[2] > score[0] && score[2] > score[1]);
        }
    }

    #[test]
    fn prior_initialized_single_class_data_is_already_converged() {
        let set = TrainSet {
            rows: vec![vec![0.1], vec![0.4], vec![0.9]],
            labels: vec![2, 2, 2],
        };
        let data = SortedDataset::from_rows(&set.rows);
        let mut state = init_state(&set);
        let before = deviance(&state, &set.labels);
        assert!(before < 1e-9);
        boost_round(&mut state, &data, &set, &config(None), 0, 0).unwrap();
        assert!(state.deviance_trace[0] <= before + 1e-12);
    }

    #[test]
    fn zero_shrinkage_changes_nothing() {
        let set = small_set();
        let data = SortedDataset::from_rows(&set.rows);
        let mut state = init_state(&set);
        let before_scores = state.scores.clone();
        let before_dev = deviance(&state, &set.labels);
        let cfg = BoostConfig { nu: 0.0, ..config(None) };
        boost_round(&mut state, &data, &set, &cfg, 0, 0).unwrap();
        assert_eq!(state.scores, before_scores);
        assert!((state.deviance_trace[0] - before_dev).abs() < 1e-15);
    }

    #[test]
    fn deviance_is_non_increasing_for_both_solvers() {
        let set = small_set();
        for lambda in [None, Some(1.0)] {
            let state = fit_gbm(&set, &config(lambda), 7).unwrap();
            for pair in state.deviance_trace.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-9,
                    "deviance rose from {} to {} (lambda {lambda:?})",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn subsampled_rounds_are_seeded() {
        let set = small_set();
        let cfg = BoostConfig { subsample: 0.6, ..config(Some(0.5)) };
        let a = fit_gbm(&set, &cfg, 11).unwrap();
        let b = fit_gbm(&set, &cfg, 11).unwrap();
        assert_eq!(a.trees, b.trees);
    }

    #[test]
    fn init_scores_reproduce_priors() {
        let set = TrainSet {
            rows: vec![vec![0.0]; 4],
            labels: vec![0, 0, 0, 1],
        };
        let state = init_state(&set);
        let p = softmax3(&state.init_scores);
        assert!((p[0] - 0.75).abs() < 1e-9);
        assert!((p[1] - 0.25).abs() < 1e-9);
        assert!(p[2] < 1e-9);
    }
}
