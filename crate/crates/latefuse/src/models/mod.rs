//! The searchable classifier zoo behind one fit / predict-probabilities
//! interface: a single CART tree, random and extremely randomized forests,
//! elastic-net multinomial regression, first- and second-order gradient
//! boosting, small MLPs, and the linear SVM baseline.

pub mod forest;
pub mod gbm;
pub mod glm;
pub mod mlp;
pub mod space;
pub mod svm;
pub mod tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::core::{ClassVector, FusedFeature};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
pub use mlp::{Activation, MlpLayer};
pub use tree::{Tree, TreeNode};

/// Supported model families. The first six are the random-search space;
/// CART backs the forests and tests, the SVM is an evaluation baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Cart,
    RandomForest,
    ExtraTrees,
    Glm,
    GbmFirstOrder,
    GbmSecondOrder,
    Mlp,
    LinearSvm,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 8] = [
        ModelFamily::Cart,
        ModelFamily::RandomForest,
        ModelFamily::ExtraTrees,
        ModelFamily::Glm,
        ModelFamily::GbmFirstOrder,
        ModelFamily::GbmSecondOrder,
        ModelFamily::Mlp,
        ModelFamily::LinearSvm,
    ];

    /// The families random search draws from: the forests, the GLM grid,
    /// both boosting grids and the network grid. The SVM stays a baseline
    /// and plain CART is only reachable as a degenerate forest.
    pub const SEARCHABLE: [ModelFamily; 6] = [
        ModelFamily::RandomForest,
        ModelFamily::ExtraTrees,
        ModelFamily::Glm,
        ModelFamily::GbmFirstOrder,
        ModelFamily::GbmSecondOrder,
        ModelFamily::Mlp,
    ];
}

/// A hyperparameter value; the admissible type depends on the parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

/// An architecture: family, hyperparameters and the seed all of its
/// stochastic choices derive from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub hyperparams: BTreeMap<String, HyperValue>,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new<K: Into<String>>(
        family: ModelFamily,
        hyperparams: impl IntoIterator<Item = (K, HyperValue)>,
        seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            family,
            hyperparams: hyperparams.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A spec using every declared default.
    pub fn with_defaults(family: ModelFamily, seed: u64) -> Self {
        Self { family, hyperparams: BTreeMap::new(), seed }
    }

    pub fn validate(&self) -> Result<()> {
        space::validate(self.family, &self.hyperparams)
    }

    fn int(&self, name: &str) -> i64 {
        match space::resolve(self.family, &self.hyperparams, name) {
            HyperValue::Int(v) => v,
            other => panic!("{name} resolved to {other:?}, expected an integer"),
        }
    }

    fn float(&self, name: &str) -> f64 {
        match space::resolve(self.family, &self.hyperparams, name) {
            HyperValue::Float(v) => v,
            other => panic!("{name} resolved to {other:?}, expected a float"),
        }
    }

    fn bool(&self, name: &str) -> bool {
        match space::resolve(self.family, &self.hyperparams, name) {
            HyperValue::Bool(v) => v,
            other => panic!("{name} resolved to {other:?}, expected a bool"),
        }
    }
}

/// Labeled training rows in plain row-major form.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl TrainSet {
    pub fn from_features(features: &[FusedFeature]) -> Result<Self> {
        let mut rows = Vec::with_capacity(features.len());
        let mut labels = Vec::with_capacity(features.len());
        for f in features {
            let label = f.label.ok_or_else(|| {
                Error::Training(format!("feature {:?} has no gold label", f.id))
            })?;
            rows.push(f.x.to_vec());
            labels.push(label.code());
        }
        Self::from_raw(rows, labels)
    }

    pub fn from_raw(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("training set is empty".into()));
        }
        let d = rows[0].len();
        for row in &rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training("non-finite feature value".into()));
            }
        }
        if labels.len() != rows.len() {
            return Err(Error::LengthMismatch { left: rows.len(), right: labels.len() });
        }
        Ok(Self { rows, labels })
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }
}

/// Per-epoch (or per-round) training loss, recorded where fitting iterates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub loss_trace: Vec<f64>,
}

/// Fitted parameters, family-shaped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    Cart { tree: Tree },
    Forest { trees: Vec<Tree> },
    Glm { weights: Vec<Vec<f64>> },
    Gbm { init_scores: [f64; 3], shrinkage: f64, trees: Vec<Tree> },
    Mlp { layers: Vec<MlpLayer>, activation: Activation },
    Svm { weights: Vec<Vec<f64>> },
}

/// A fitted model; prediction is pure and the value is safe to share.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub n_features: usize,
    pub params: ModelParams,
    pub train_meta: TrainMeta,
}

/// Numerically safe three-way softmax.
pub fn softmax3(scores: &[f64; 3]) -> [f64; 3] {
    let m = scores[0].max(scores[1]).max(scores[2]);
    let e = scores.map(|s| (s - m).exp());
    let sum = e[0] + e[1] + e[2];
    e.map(|v| v / sum)
}

/// Fits a spec on labeled fused features.
pub fn fit(spec: &ModelSpec, train: &[FusedFeature]) -> Result<TrainedModel> {
    fit_set(spec, &TrainSet::from_features(train)?)
}

/// Fits a spec on an explicit training set (any feature dimension).
pub fn fit_set(spec: &ModelSpec, set: &TrainSet) -> Result<TrainedModel> {
    spec.validate()?;
    let (params, train_meta) = match spec.family {
        ModelFamily::Cart => {
            let data = tree::SortedDataset::from_rows(&set.rows);
            let criterion = tree::GiniCriterion { labels: &set.labels };
            let config = tree::GrowConfig {
                max_depth: spec.int("max_depth") as usize,
                min_samples_leaf: spec.int("min_samples_leaf") as f64,
                feature_subsample: tree::FeatureSubsample::All,
                threshold_mode: tree::ThresholdMode::Exhaustive,
            };
            let mut rng = crate::rng::stream_rng(spec.seed, stream::TREE, 0);
            let t = tree::grow_tree(&data, &vec![1.0; set.rows.len()], &criterion, config, &mut rng);
            (ModelParams::Cart { tree: t }, TrainMeta::default())
        }
        ModelFamily::RandomForest | ModelFamily::ExtraTrees => {
            let feature_rule = match space::resolve(spec.family, &spec.hyperparams, "feature_subsample")
            {
                HyperValue::Str(s) if s == "sqrt" => forest::FeatureRule::Sqrt,
                HyperValue::Float(f) => forest::FeatureRule::Fraction(f),
                other => panic!("feature_subsample resolved to {other:?}"),
            };
            let config = forest::ForestConfig {
                n_trees: spec.int("n_trees") as usize,
                max_depth: spec.int("max_depth") as usize,
                feature_rule,
                bootstrap: spec.bool("bootstrap"),
                randomized_thresholds: spec.family == ModelFamily::ExtraTrees,
            };
            let trees = forest::fit_forest(set, &config, spec.seed);
            (ModelParams::Forest { trees }, TrainMeta::default())
        }
        ModelFamily::Glm => {
            let config = glm::GlmConfig {
                lambda: spec.float("lambda"),
                alpha: spec.float("alpha"),
                epochs: spec.int("epochs") as usize,
                lr: spec.float("lr"),
            };
            let (weights, trace) = glm::fit_glm(set, &config)?;
            (ModelParams::Glm { weights }, TrainMeta { loss_trace: trace })
        }
        ModelFamily::GbmFirstOrder | ModelFamily::GbmSecondOrder => {
            let lambda = (spec.family == ModelFamily::GbmSecondOrder)
                .then(|| spec.float("lambda"));
            let config = gbm::BoostConfig {
                n_rounds: spec.int("n_rounds") as usize,
                nu: spec.float("nu"),
                max_depth: spec.int("max_depth") as usize,
                subsample: spec.float("subsample"),
                lambda,
            };
            let state = gbm::fit_gbm(set, &config, spec.seed)?;
            (
                ModelParams::Gbm {
                    init_scores: state.init_scores,
                    shrinkage: config.nu,
                    trees: state.trees,
                },
                TrainMeta { loss_trace: state.deviance_trace },
            )
        }
        ModelFamily::Mlp => {
            let activation = match space::resolve(spec.family, &spec.hyperparams, "activation") {
                HyperValue::Str(s) if s == "relu" => Activation::Relu,
                HyperValue::Str(s) if s == "tanh" => Activation::Tanh,
                other => panic!("activation resolved to {other:?}"),
            };
            let config = mlp::MlpConfig {
                hidden_layers: spec.int("layers") as usize,
                width: spec.int("width") as usize,
                activation,
                lr: spec.float("lr"),
                epochs: spec.int("epochs") as usize,
            };
            let (net, trace) = mlp::fit_mlp(set, &config, spec.seed)?;
            (
                ModelParams::Mlp { layers: net.layers, activation: net.activation },
                TrainMeta { loss_trace: trace },
            )
        }
        ModelFamily::LinearSvm => {
            let config = svm::SvmConfig {
                lambda: spec.float("lambda"),
                epochs: spec.int("epochs") as usize,
                lr: spec.float("lr"),
            };
            let (weights, trace) = svm::fit_svm(set, &config)?;
            (ModelParams::Svm { weights }, TrainMeta { loss_trace: trace })
        }
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        n_features: set.n_features(),
        params,
        train_meta,
    })
}

impl TrainedModel {
    /// Class probabilities for one input row.
    pub fn predict_proba(&self, x: &[f64]) -> Result<ClassVector> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        let probs = match &self.params {
            ModelParams::Cart { tree } => {
                let leaf = tree.leaf_for(x);
                [leaf[0], leaf[1], leaf[2]]
            }
            ModelParams::Forest { trees } => forest::forest_proba(trees, x),
            ModelParams::Glm { weights } => softmax3(&glm::scores(weights, x)),
            ModelParams::Gbm { init_scores, shrinkage, trees } => {
                softmax3(&gbm::gbm_scores(init_scores, *shrinkage, trees, x))
            }
            ModelParams::Mlp { layers, activation } => {
                let net = mlp::MlpNet { layers: layers.clone(), activation: *activation };
                softmax3(&mlp::mlp_scores(&net, x))
            }
            ModelParams::Svm { weights } => softmax3(&svm::margins(weights, x)),
        };
        ClassVector::new(probs)
    }

    /// Predicted class (argmax of probabilities).
    pub fn predict(&self, x: &[f64]) -> Result<crate::core::Polarity> {
        Ok(self.predict_proba(x)?.argmax())
    }

    /// A deterministic seed for a derived refit (cross-validation folds).
    pub fn fold_seed(&self, fold: usize) -> u64 {
        derive_seed(self.spec.seed, stream::FOLDS, fold as u64)
    }
}

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    n_features: usize,
    #[serde(flatten)]
    params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    schema_version: u32,
    family: ModelFamily,
    hyperparams: BTreeMap<String, HyperValue>,
    seed: u64,
    params: ParamsDoc,
}

/// Serializes a fitted model to its versioned JSON artifact.
pub fn serialize(model: &TrainedModel) -> Result<Vec<u8>> {
    let doc = ModelDocument {
        schema_version: SCHEMA_VERSION,
        family: model.spec.family,
        hyperparams: model.spec.hyperparams.clone(),
        seed: model.spec.seed,
        params: ParamsDoc { n_features: model.n_features, params: model.params.clone() },
    };
    Ok(serde_json::to_vec(&doc)?)
}

/// Parses a model artifact, rejecting unsupported schema versions.
pub fn deserialize(bytes: &[u8]) -> Result<TrainedModel> {
    let doc: ModelDocument = serde_json::from_slice(bytes)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion { expected: SCHEMA_VERSION, got: doc.schema_version });
    }
    Ok(TrainedModel {
        spec: ModelSpec { family: doc.family, hyperparams: doc.hyperparams, seed: doc.seed },
        n_features: doc.params.n_features,
        params: doc.params.params,
        train_meta: TrainMeta::default(),
    })
}
