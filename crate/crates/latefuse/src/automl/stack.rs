//! Stacked ensembles: a multinomial GLM meta-learner trained on
//! out-of-fold base-model probabilities.

use serde::{Deserialize, Serialize};

use crate::core::ClassVector;
use crate::error::{Error, Result};
use crate::models::{self, HyperValue, ModelFamily, ModelSpec, TrainSet, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Every successful search trial becomes a base model.
    AllModels,
    /// The best trial of each family present in the leaderboard.
    BestOfFamily,
}

/// Base models plus the GLM that blends their probability outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedEnsemble {
    pub kind: EnsembleKind,
    pub base_models: Vec<TrainedModel>,
    pub meta_learner: TrainedModel,
}

pub const STACKING_FOLDS: usize = 5;

fn meta_spec() -> ModelSpec {
    ModelSpec::new(
        ModelFamily::Glm,
        [
            ("lambda", HyperValue::Float(1e-3)),
            ("alpha", HyperValue::Float(0.0)),
            ("epochs", HyperValue::Int(200)),
            ("lr", HyperValue::Float(0.1)),
        ],
        0,
    )
    .expect("meta-learner spec is within the declared domains")
}

/// Class-stratified fold ids in training order (round-robin per class).
pub fn stratified_folds(labels: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut counts = [0usize; 3];
    for &label in labels {
        counts[label] += 1;
    }
    for (class, &count) in counts.iter().enumerate() {
        if count < k {
            return Err(Error::FoldConstruction(format!(
                "class {class} has {count} training examples, need at least {k} for {k}-fold stacking"
            )));
        }
    }
    let mut next = [0usize; 3];
    Ok(labels
        .iter()
        .map(|&label| {
            let fold = next[label] % k;
            next[label] += 1;
            fold
        })
        .collect())
}

/// Out-of-fold probabilities for one spec: refits the spec on each fold
/// complement and predicts the held-out rows.
pub fn out_of_fold_probs(
    spec: &ModelSpec,
    set: &TrainSet,
    folds: &[usize],
) -> Result<Vec<[f64; 3]>> {
    let n = set.rows.len();
    let mut oof = vec![[0.0f64; 3]; n];
    for fold in 0..STACKING_FOLDS {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut held_out = Vec::new();
        for i in 0..n {
            if folds[i] == fold {
                held_out.push(i);
            } else {
                rows.push(set.rows[i].clone());
                labels.push(set.labels[i]);
            }
        }
        let model = models::fit_set(spec, &TrainSet::from_raw(rows, labels)?)?;
        for i in held_out {
            oof[i] = model.predict_proba(&set.rows[i])?.probs();
        }
    }
    Ok(oof)
}

/// Builds an ensemble from already-fitted base models and their
/// out-of-fold probability blocks (one block per base model, aligned).
pub fn build_from_oof(
    kind: EnsembleKind,
    base_models: Vec<TrainedModel>,
    oof_blocks: &[Vec<[f64; 3]>],
    set: &TrainSet,
) -> Result<StackedEnsemble> {
    assert_eq!(base_models.len(), oof_blocks.len());
    if base_models.is_empty() {
        return Err(Error::EmptyInput("stacked ensemble needs at least one base model".into()));
    }
    let n = set.rows.len();
    let meta_rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(3 * oof_blocks.len());
            for block in oof_blocks {
                row.extend_from_slice(&block[i]);
            }
            row
        })
        .collect();
    let meta_set = TrainSet::from_raw(meta_rows, set.labels.clone())?;
    let meta_learner = models::fit_set(&meta_spec(), &meta_set)?;
    Ok(StackedEnsemble { kind, base_models, meta_learner })
}

/// Builds an ensemble from scratch: 5-fold out-of-fold probabilities per
/// base spec, then the GLM meta-learner on the concatenated blocks.
pub fn build_stacked_ensemble(
    base_models: Vec<TrainedModel>,
    train: &TrainSet,
    kind: EnsembleKind,
) -> Result<StackedEnsemble> {
    let folds = stratified_folds(&train.labels, STACKING_FOLDS)?;
    let blocks = base_models
        .iter()
        .map(|m| out_of_fold_probs(&m.spec, train, &folds))
        .collect::<Result<Vec<_>>>()?;
    build_from_oof(kind, base_models, &blocks, train)
}

impl StackedEnsemble {
    /// Meta-learner over the base models' full-data probability outputs.
    pub fn predict_proba(&self, x: &[f64]) -> Result<ClassVector> {
        let mut meta = Vec::with_capacity(3 * self.base_models.len());
        for model in &self.base_models {
            meta.extend_from_slice(&model.predict_proba(x)?.probs());
        }
        self.meta_learner.predict_proba(&meta)
    }

    pub fn meta_feature_width(&self) -> usize {
        3 * self.base_models.len()
    }
}
