//! Random-search model selection: sample architectures, fit on the train
//! split, score validation accuracy, append two stacked ensembles, and keep
//! the best scorer.

pub mod stack;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{accuracy, ClassVector, FusedFeature, Polarity};
use crate::error::{Error, Result};
use crate::models::{self, ModelFamily, ModelSpec, TrainSet, TrainedModel};
use crate::rng::{stream, stream_rng};
pub use stack::{build_stacked_ensemble, EnsembleKind, StackedEnsemble};

/// Search stops at whichever bound is hit first; at least one must be set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_trials: Option<usize>,
    pub max_wall_clock: Option<Duration>,
}

impl SearchBudget {
    pub const DEFAULT_TRIALS: usize = 60;

    pub fn trials(n: usize) -> Self {
        Self { max_trials: Some(n), max_wall_clock: None }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.max_trials, self.max_wall_clock) {
            (None, None) => Err(Error::InvalidBudget("no bound set".into())),
            (Some(0), _) => Err(Error::InvalidBudget("max_trials must be positive".into())),
            (_, Some(d)) if d.is_zero() => {
                Err(Error::InvalidBudget("max_wall_clock must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self::trials(Self::DEFAULT_TRIALS)
    }
}

/// What a trial evaluated: a sampled architecture or one of the two
/// ensembles built after the search.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialSetup {
    Model(ModelSpec),
    Ensemble(EnsembleKind),
}

/// Anything the search can select and the pipeline can evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedClassifier {
    Single(TrainedModel),
    Stacked(StackedEnsemble),
}

impl FittedClassifier {
    pub fn predict_proba(&self, x: &[f64]) -> Result<ClassVector> {
        match self {
            FittedClassifier::Single(m) => m.predict_proba(x),
            FittedClassifier::Stacked(e) => e.predict_proba(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Polarity> {
        Ok(self.predict_proba(x)?.argmax())
    }
}

/// One search trial. Failed fits keep objective -1 and are never selected.
#[derive(Debug, Clone)]
pub struct Trial {
    pub index: usize,
    pub setup: TrialSetup,
    pub model: Option<FittedClassifier>,
    pub objective: f64,
    pub fit_seconds: f64,
    pub error: Option<String>,
}

pub const FAILED_OBJECTIVE: f64 = -1.0;

impl Trial {
    pub fn succeeded(&self) -> bool {
        self.model.is_some()
    }
}

/// Ordered search record: base trials first, then up to two ensembles with
/// continuing indices.
#[derive(Debug, Clone)]
pub struct Leaderboard {
    pub master_seed: u64,
    pub budget: SearchBudget,
    pub trials: Vec<Trial>,
    pub ensembles: Vec<Trial>,
    pub selected_index: usize,
}

impl Leaderboard {
    /// Base trials followed by ensemble trials, in index order.
    pub fn all_trials(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().chain(self.ensembles.iter())
    }

    pub fn selected(&self) -> &Trial {
        self.all_trials()
            .find(|t| t.index == self.selected_index)
            .expect("selected index always names an existing trial")
    }
}

/// Draws the architecture for one trial: family uniform over the six
/// searchable families, then every hyperparameter from its declared range,
/// then the model seed. Fully determined by (master_seed, trial_index).
pub fn sample_spec(master_seed: u64, trial_index: usize) -> ModelSpec {
    let mut rng = stream_rng(master_seed, stream::TRIAL_SPEC, trial_index as u64);
    let family = ModelFamily::SEARCHABLE[rng.gen_range(0..ModelFamily::SEARCHABLE.len())];
    let hyperparams = models::space::sample(family, &mut rng);
    let seed = rng.gen::<u64>();
    ModelSpec { family, hyperparams, seed }
}

/// Validation accuracy of a classifier.
pub fn score_on(classifier: &FittedClassifier, data: &[FusedFeature]) -> Result<f64> {
    let mut predictions = Vec::with_capacity(data.len());
    let mut gold = Vec::with_capacity(data.len());
    for f in data {
        predictions.push(classifier.predict(&f.x)?);
        gold.push(f.label.ok_or_else(|| {
            Error::Training(format!("validation feature {:?} has no gold label", f.id))
        })?);
    }
    accuracy(&predictions, &gold)
}

/// Random search with the default worker count (one per available core,
/// capped by the trial count).
pub fn random_search(
    train: &[FusedFeature],
    valid: &[FusedFeature],
    budget: SearchBudget,
    master_seed: u64,
) -> Result<Leaderboard> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    random_search_with_workers(train, valid, budget, master_seed, workers)
}

/// Random search with an explicit worker count. Per-trial randomness
/// derives only from (master_seed, trial index) and results are assembled
/// in index order, so the leaderboard does not depend on scheduling.
pub fn random_search_with_workers(
    train: &[FusedFeature],
    valid: &[FusedFeature],
    budget: SearchBudget,
    master_seed: u64,
    workers: usize,
) -> Result<Leaderboard> {
    budget.validate()?;
    crate::core::DatasetSplit::check_fit_ready(train, "train")?;
    crate::core::DatasetSplit::check_fit_ready(valid, "valid")?;

    let train_set = TrainSet::from_features(train)?;
    let start = Instant::now();
    let deadline = budget.max_wall_clock.map(|d| start + d);
    // With only a wall-clock bound the trial count is open-ended; the
    // recorded trials are then reproducible only as a prefix.
    let hard_cap = budget.max_trials.unwrap_or(usize::MAX);

    let next_index = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Trial)>> = Mutex::new(Vec::new());
    let workers = workers.max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next_index.fetch_add(1, Ordering::Relaxed);
                if index >= hard_cap {
                    return;
                }
                if let Some(deadline) = deadline {
                    if Instant::now() >= deadline && index > 0 {
                        return;
                    }
                }
                let trial = run_trial(index, master_seed, &train_set, valid);
                results.lock().unwrap().push((index, trial));
            });
        }
    });

    let mut indexed = results.into_inner().unwrap();
    indexed.sort_by_key(|(index, _)| *index);
    let trials: Vec<Trial> = indexed.into_iter().map(|(_, t)| t).collect();
    // A racing worker may have claimed an index past the deadline while
    // another was still finishing a lower one; keep the contiguous prefix.
    for (expected, trial) in trials.iter().enumerate() {
        debug_assert_eq!(trial.index, expected);
    }

    if trials.iter().all(|t| !t.succeeded()) {
        return Err(Error::AllTrialsFailed);
    }

    let ensembles = build_ensemble_trials(&trials, &train_set, valid);

    let mut leaderboard = Leaderboard {
        master_seed,
        budget,
        trials,
        ensembles,
        selected_index: 0,
    };
    leaderboard.selected_index = select_best(&leaderboard)?.index;
    Ok(leaderboard)
}

fn run_trial(
    index: usize,
    master_seed: u64,
    train_set: &TrainSet,
    valid: &[FusedFeature],
) -> Trial {
    let spec = sample_spec(master_seed, index);
    let t0 = Instant::now();
    let outcome = models::fit_set(&spec, train_set)
        .map(FittedClassifier::Single)
        .and_then(|model| {
            let objective = score_on(&model, valid)?;
            Ok((model, objective))
        });
    let fit_seconds = t0.elapsed().as_secs_f64();
    match outcome {
        Ok((model, objective)) => Trial {
            index,
            setup: TrialSetup::Model(spec),
            model: Some(model),
            objective,
            fit_seconds,
            error: None,
        },
        Err(e) => Trial {
            index,
            setup: TrialSetup::Model(spec),
            model: None,
            objective: FAILED_OBJECTIVE,
            fit_seconds,
            error: Some(e.to_string()),
        },
    }
}

/// Builds both ensembles over the successful base trials. Out-of-fold
/// blocks are computed once per base model and shared, since the
/// best-of-family members are a subset of the all-models members.
fn build_ensemble_trials(
    trials: &[Trial],
    train_set: &TrainSet,
    valid: &[FusedFeature],
) -> Vec<Trial> {
    let successful: Vec<&Trial> = trials.iter().filter(|t| t.succeeded()).collect();
    let base_models: Vec<TrainedModel> = successful
        .iter()
        .map(|t| match t.model.as_ref() {
            Some(FittedClassifier::Single(m)) => m.clone(),
            _ => unreachable!("base trials hold single models"),
        })
        .collect();

    // Best trial per family, earliest index winning ties.
    let mut best_of_family: Vec<usize> = Vec::new(); // positions into `successful`
    for family in ModelFamily::ALL {
        let best = successful
            .iter()
            .enumerate()
            .filter(|(_, t)| matches!(&t.setup, TrialSetup::Model(s) if s.family == family))
            .max_by(|(_, a), (_, b)| {
                a.objective
                    .partial_cmp(&b.objective)
                    .unwrap()
                    .then(b.index.cmp(&a.index))
            })
            .map(|(pos, _)| pos);
        if let Some(pos) = best {
            best_of_family.push(pos);
        }
    }
    best_of_family.sort_unstable();

    let next_index = trials.len();
    let t0 = Instant::now();
    let shared = stack::stratified_folds(&train_set.labels, stack::STACKING_FOLDS).and_then(
        |folds| {
            base_models
                .iter()
                .map(|m| stack::out_of_fold_probs(&m.spec, train_set, &folds))
                .collect::<Result<Vec<_>>>()
        },
    );

    let make = |kind: EnsembleKind, positions: Vec<usize>, index: usize| -> Trial {
        let t_start = Instant::now();
        let outcome = shared.as_ref().map_err(|e| e.to_string()).and_then(|blocks| {
            let models: Vec<TrainedModel> =
                positions.iter().map(|&p| base_models[p].clone()).collect();
            let oof: Vec<Vec<[f64; 3]>> =
                positions.iter().map(|&p| blocks[p].clone()).collect();
            stack::build_from_oof(kind, models, &oof, train_set)
                .map(FittedClassifier::Stacked)
                .and_then(|c| {
                    let objective = score_on(&c, valid)?;
                    Ok((c, objective))
                })
                .map_err(|e| e.to_string())
        });
        let fit_seconds = t0.elapsed().as_secs_f64() + t_start.elapsed().as_secs_f64();
        match outcome {
            Ok((model, objective)) => Trial {
                index,
                setup: TrialSetup::Ensemble(kind),
                model: Some(model),
                objective,
                fit_seconds,
                error: None,
            },
            Err(message) => Trial {
                index,
                setup: TrialSetup::Ensemble(kind),
                model: None,
                objective: FAILED_OBJECTIVE,
                fit_seconds,
                error: Some(message),
            },
        }
    };

    let all_positions: Vec<usize> = (0..base_models.len()).collect();
    vec![
        make(EnsembleKind::AllModels, all_positions, next_index),
        make(EnsembleKind::BestOfFamily, best_of_family, next_index + 1),
    ]
}

/// The successful trial with the highest objective; ties break toward the
/// smallest index, which orders ensembles after all base trials.
pub fn select_best(leaderboard: &Leaderboard) -> Result<&Trial> {
    leaderboard
        .all_trials()
        .filter(|t| t.succeeded())
        .max_by(|a, b| {
            a.objective
                .partial_cmp(&b.objective)
                .unwrap()
                .then(b.index.cmp(&a.index))
        })
        .ok_or(Error::AllTrialsFailed)
}

pub const LEADERBOARD_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct LeaderboardRow<'a> {
    index: usize,
    family: &'a str,
    hyperparams: serde_json::Value,
    objective: f64,
    fit_seconds: f64,
}

#[derive(Serialize)]
struct LeaderboardDoc<'a> {
    schema_version: u32,
    master_seed: u64,
    budget: BudgetDoc,
    trials: Vec<LeaderboardRow<'a>>,
    selected_index: usize,
}

#[derive(Serialize)]
struct BudgetDoc {
    max_trials: Option<usize>,
    max_wall_clock_seconds: Option<f64>,
}

/// Stable family string used in leaderboard rows and reports.
pub fn family_name(setup: &TrialSetup) -> &'static str {
    match setup {
        TrialSetup::Model(spec) => match spec.family {
            ModelFamily::Cart => "cart",
            ModelFamily::RandomForest => "random_forest",
            ModelFamily::ExtraTrees => "extra_trees",
            ModelFamily::Glm => "glm",
            ModelFamily::GbmFirstOrder => "gbm_first_order",
            ModelFamily::GbmSecondOrder => "gbm_second_order",
            ModelFamily::Mlp => "mlp",
            ModelFamily::LinearSvm => "linear_svm",
        },
        TrialSetup::Ensemble(EnsembleKind::AllModels) => "stacked_ensemble_all_models",
        TrialSetup::Ensemble(EnsembleKind::BestOfFamily) => "stacked_ensemble_best_of_family",
    }
}

impl Leaderboard {
    /// Canonical JSON bytes. Wall time is excluded (written as zero) so
    /// that identical searches always produce identical bytes.
    pub fn to_canonical_json(&self) -> Result<Vec<u8>> {
        let trials = self
            .all_trials()
            .map(|t| {
                let hyperparams = match &t.setup {
                    TrialSetup::Model(spec) => serde_json::to_value(&spec.hyperparams)?,
                    TrialSetup::Ensemble(_) => serde_json::Value::Object(Default::default()),
                };
                Ok(LeaderboardRow {
                    index: t.index,
                    family: family_name(&t.setup),
                    hyperparams,
                    objective: t.objective,
                    fit_seconds: 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let doc = LeaderboardDoc {
            schema_version: LEADERBOARD_SCHEMA_VERSION,
            master_seed: self.master_seed,
            budget: BudgetDoc {
                max_trials: self.budget.max_trials,
                max_wall_clock_seconds: self.budget.max_wall_clock.map(|d| d.as_secs_f64()),
            },
            trials,
            selected_index: self.selected_index,
        };
        Ok(serde_json::to_vec_pretty(&doc)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_canonical_json()?)?;
        Ok(())
    }
}

pub const CLASSIFIER_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StackedDoc {
    schema_version: u32,
    family: String,
    kind: EnsembleKind,
    base: Vec<serde_json::Value>,
    meta: serde_json::Value,
}

/// Serializes either a single model or a stacked ensemble; single models
/// use the plain model artifact layout.
pub fn serialize_classifier(classifier: &FittedClassifier) -> Result<Vec<u8>> {
    match classifier {
        FittedClassifier::Single(model) => models::serialize(model),
        FittedClassifier::Stacked(ensemble) => {
            let base = ensemble
                .base_models
                .iter()
                .map(|m| Ok(serde_json::from_slice(&models::serialize(m)?)?))
                .collect::<Result<Vec<serde_json::Value>>>()?;
            let doc = StackedDoc {
                schema_version: CLASSIFIER_SCHEMA_VERSION,
                family: "stacked_ensemble".into(),
                kind: ensemble.kind,
                base,
                meta: serde_json::from_slice(&models::serialize(&ensemble.meta_learner)?)?,
            };
            Ok(serde_json::to_vec(&doc)?)
        }
    }
}

/// Parses a classifier artifact produced by [`serialize_classifier`].
pub fn deserialize_classifier(bytes: &[u8]) -> Result<FittedClassifier> {
    let probe: serde_json::Value = serde_json::from_slice(bytes)?;
    let family = probe.get("family").and_then(|f| f.as_str()).unwrap_or_default();
    if family == "stacked_ensemble" {
        let doc: StackedDoc = serde_json::from_slice(bytes)?;
        if doc.schema_version != CLASSIFIER_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: CLASSIFIER_SCHEMA_VERSION,
                got: doc.schema_version,
            });
        }
        let base_models = doc
            .base
            .iter()
            .map(|v| models::deserialize(&serde_json::to_vec(v)?))
            .collect::<Result<Vec<_>>>()?;
        let meta_learner = models::deserialize(&serde_json::to_vec(&doc.meta)?)?;
        Ok(FittedClassifier::Stacked(StackedEnsemble {
            kind: doc.kind,
            base_models,
            meta_learner,
        }))
    } else {
        Ok(FittedClassifier::Single(models::deserialize(bytes)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::ClassVector;

    fn labeled(id: &str, img: [f64; 3], txt: [f64; 3], label: Polarity) -> FusedFeature {
        FusedFeature::from_vectors(
            id,
            ClassVector::new(img).unwrap(),
            ClassVector::new(txt).unwrap(),
            Some(label),
        )
    }

    /// A small separable fused dataset: image block encodes the class.
    fn toy_split(n: usize, seed: u64) -> (Vec<FusedFeature>, Vec<FusedFeature>) {
        use rand::Rng;
        let mut rng = stream_rng(seed, stream::SYNTH, 12);
        let mut make = |prefix: &str, count: usize| {
            (0..count)
                .map(|i| {
                    let class = rng.gen_range(0..3usize);
                    let mut img = [0.05, 0.05, 0.05];
                    img[class] = 0.9;
                    let t = rng.gen_range(0..3usize);
                    let mut txt = [0.1, 0.1, 0.1];
                    txt[t] = 0.8;
                    let label = Polarity::from_index(class).unwrap();
                    labeled(&format!("{prefix}{i}"), img, txt, label)
                })
                .collect::<Vec<_>>()
        };
        (make("tr", n), make("va", n / 2))
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_spec(42, 7), sample_spec(42, 7));
        assert_ne!(sample_spec(42, 7), sample_spec(42, 8));
        assert_ne!(sample_spec(41, 7), sample_spec(42, 7));
    }

    #[test]
    fn six_hundred_samples_cover_every_searchable_family() {
        let mut seen = std::collections::BTreeSet::new();
        for index in 0..600 {
            seen.insert(sample_spec(0, index).family);
        }
        for family in ModelFamily::SEARCHABLE {
            assert!(seen.contains(&family), "family {family:?} never sampled");
        }
        assert!(!seen.contains(&ModelFamily::LinearSvm));
        assert!(!seen.contains(&ModelFamily::Cart));
    }

    #[test]
    fn sampled_specs_stay_in_range_over_many_draws() {
        for index in 0..10_000 {
            sample_spec(1, index).validate().unwrap();
        }
    }

    #[test]
    fn degenerate_single_trial_budget() {
        let (train, valid) = toy_split(60, 1);
        let lb =
            random_search_with_workers(&train, &valid, SearchBudget::trials(1), 3, 1).unwrap();
        assert_eq!(lb.trials.len(), 1);
        assert_eq!(lb.ensembles.len(), 2);
        assert_eq!(lb.ensembles[0].index, 1);
        assert_eq!(lb.ensembles[1].index, 2);
    }

    #[test]
    fn leaderboard_bytes_are_reproducible_across_worker_counts() {
        let (train, valid) = toy_split(60, 2);
        let a = random_search_with_workers(&train, &valid, SearchBudget::trials(6), 5, 1)
            .unwrap()
            .to_canonical_json()
            .unwrap();
        let b = random_search_with_workers(&train, &valid, SearchBudget::trials(6), 5, 4)
            .unwrap()
            .to_canonical_json()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn objectives_are_recomputable() {
        let (train, valid) = toy_split(60, 3);
        let lb =
            random_search_with_workers(&train, &valid, SearchBudget::trials(4), 9, 2).unwrap();
        for trial in lb.all_trials().filter(|t| t.succeeded()) {
            let again = score_on(trial.model.as_ref().unwrap(), &valid).unwrap();
            assert_eq!(again, trial.objective, "trial {}", trial.index);
        }
    }

    #[test]
    fn select_best_takes_maximum_with_earliest_tie_break() {
        let (train, valid) = toy_split(60, 4);
        let mut lb =
            random_search_with_workers(&train, &valid, SearchBudget::trials(3), 11, 1).unwrap();
        lb.trials[0].objective = 0.91;
        lb.trials[1].objective = 0.93;
        lb.trials[2].objective = 0.93;
        lb.ensembles[0].objective = 0.5;
        lb.ensembles[1].objective = 0.5;
        let best = select_best(&lb).unwrap();
        assert_eq!(best.index, 1);
    }

    #[test]
    fn ensembles_compete_for_selection() {
        let (train, valid) = toy_split(60, 5);
        let mut lb =
            random_search_with_workers(&train, &valid, SearchBudget::trials(2), 13, 1).unwrap();
        for t in &mut lb.trials {
            t.objective = 0.94;
        }
        lb.ensembles[0].objective = 0.95;
        lb.ensembles[1].objective = 0.9;
        assert_eq!(select_best(&lb).unwrap().index, lb.trials.len());
    }

    #[test]
    fn failed_trials_never_win() {
        let (train, valid) = toy_split(60, 6);
        let mut lb =
            random_search_with_workers(&train, &valid, SearchBudget::trials(2), 15, 1).unwrap();
        lb.trials[0].model = None;
        lb.trials[0].objective = FAILED_OBJECTIVE;
        let best = select_best(&lb).unwrap();
        assert!(best.succeeded());
        assert_ne!(best.index, 0);
    }

    #[test]
    fn invalid_budgets_are_rejected() {
        assert!(SearchBudget { max_trials: None, max_wall_clock: None }.validate().is_err());
        assert!(SearchBudget::trials(0).validate().is_err());
        assert!(SearchBudget::trials(1).validate().is_ok());
    }

    #[test]
    fn classifier_round_trip_covers_both_variants() {
        let (train, valid) = toy_split(60, 7);
        let lb =
            random_search_with_workers(&train, &valid, SearchBudget::trials(3), 17, 2).unwrap();
        for trial in lb.all_trials().filter(|t| t.succeeded()) {
            let model = trial.model.as_ref().unwrap();
            let restored =
                deserialize_classifier(&serialize_classifier(model).unwrap()).unwrap();
            for f in valid.iter().take(20) {
                assert_eq!(
                    model.predict_proba(&f.x).unwrap().probs(),
                    restored.predict_proba(&f.x).unwrap().probs()
                );
            }
        }
    }
}
