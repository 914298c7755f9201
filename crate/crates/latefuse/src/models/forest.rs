//! Random forests and extremely randomized forests over the shared grower.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tree::{
    grow_tree, FeatureSubsample, GiniCriterion, GrowConfig, SortedDataset, ThresholdMode, Tree,
};
use super::TrainSet;
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Fraction of features per split, or the sqrt rule.
    pub feature_rule: FeatureRule,
    pub bootstrap: bool,
    /// Exhaustive thresholds for a random forest, one uniform draw per
    /// feature for extremely randomized trees.
    pub randomized_thresholds: bool,
}

#[derive(Debug, Clone, Copy)]
pub enum FeatureRule {
    Sqrt,
    Fraction(f64),
}

impl FeatureRule {
    fn resolve(self, n_features: usize) -> FeatureSubsample {
        match self {
            FeatureRule::Sqrt => {
                FeatureSubsample::Count(((n_features as f64).sqrt().floor() as usize).max(1))
            }
            FeatureRule::Fraction(f) if f >= 1.0 => FeatureSubsample::All,
            FeatureRule::Fraction(f) => {
                FeatureSubsample::Count(((n_features as f64 * f).round() as usize).max(1))
            }
        }
    }
}

/// Bootstrap weights: counts of `n` draws with replacement.
fn bootstrap_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut weights = vec![0.0; n];
    for _ in 0..n {
        weights[rng.gen_range(0..n)] += 1.0;
    }
    weights
}

/// Fits `config.n_trees` trees, each on its own derived random stream, so
/// the forest is identical no matter how trees would be scheduled.
pub fn fit_forest(set: &TrainSet, config: &ForestConfig, seed: u64) -> Vec<Tree> {
    let data = SortedDataset::from_rows(&set.rows);
    let grow_config = GrowConfig {
        max_depth: config.max_depth,
        min_samples_leaf: 1.0,
        feature_subsample: config.feature_rule.resolve(data.n_features()),
        threshold_mode: if config.randomized_thresholds {
            ThresholdMode::RandomUniform
        } else {
            ThresholdMode::Exhaustive
        },
    };
    let criterion = GiniCriterion { labels: &set.labels };
    let n = set.rows.len();
    (0..config.n_trees)
        .map(|t| {
            let mut rng = stream_rng(seed, stream::TREE, t as u64);
            let weights = if config.bootstrap {
                bootstrap_weights(n, &mut rng)
            } else {
                vec![1.0; n]
            };
            grow_tree(&data, &weights, &criterion, grow_config, &mut rng)
        })
        .collect()
}

/// Average of the member trees' leaf distributions.
pub fn forest_proba(trees: &[Tree], x: &[f64]) -> [f64; 3] {
    let mut acc = [0.0f64; 3];
    for tree in trees {
        let leaf = tree.leaf_for(x);
        for (a, &v) in acc.iter_mut().zip(leaf) {
            *a += v;
        }
    }
    let scale = 1.0 / trees.len() as f64;
    acc.map(|v| v * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_set() -> TrainSet {
        use rand::Rng;
        let mut rng = stream_rng(21, stream::SYNTH, 5);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..4).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = rows
            .iter()
            .map(|r| if r[0] > 0.6 { 2 } else { usize::from(r[1] > 0.5) })
            .collect();
        TrainSet { rows, labels }
    }

    #[test]
    fn same_seed_gives_identical_forest() {
        let set = toy_set();
        let config = ForestConfig {
            n_trees: 12,
            max_depth: 6,
            feature_rule: FeatureRule::Sqrt,
            bootstrap: true,
            randomized_thresholds: false,
        };
        assert_eq!(fit_forest(&set, &config, 9), fit_forest(&set, &config, 9));
    }

    #[test]
    fn extra_trees_threshold_sets_differ_across_seeds() {
        let set = toy_set();
        let config = ForestConfig {
            n_trees: 8,
            max_depth: 6,
            feature_rule: FeatureRule::Fraction(1.0),
            bootstrap: false,
            randomized_thresholds: true,
        };
        let thresholds = |seed: u64| -> Vec<f64> {
            fit_forest(&set, &config, seed)
                .iter()
                .flat_map(Tree::thresholds)
                .collect()
        };
        assert_eq!(thresholds(1), thresholds(1));
        assert_ne!(thresholds(1), thresholds(2));
    }

    #[test]
    fn averaging_two_disagreeing_trees() {
        let leaf = |probs: [f64; 3]| Tree {
            nodes: vec![super::super::tree::TreeNode {
                feature_index: 0,
                threshold: 0.0,
                left: None,
                right: None,
                leaf_value: Some(probs.to_vec()),
            }],
        };
        let trees = vec![leaf([1.0, 0.0, 0.0]), leaf([0.0, 1.0, 0.0])];
        assert_eq!(forest_proba(&trees, &[0.0]), [0.5, 0.5, 0.0]);
    }

    #[test]
    fn sqrt_rule_floors_at_one() {
        assert!(matches!(FeatureRule::Sqrt.resolve(6), FeatureSubsample::Count(2)));
        assert!(matches!(FeatureRule::Sqrt.resolve(1), FeatureSubsample::Count(1)));
        assert!(matches!(FeatureRule::Fraction(0.5).resolve(6), FeatureSubsample::Count(3)));
        assert!(matches!(FeatureRule::Fraction(1.0).resolve(6), FeatureSubsample::All));
    }
}
