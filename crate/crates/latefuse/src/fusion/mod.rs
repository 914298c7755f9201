//! The late-fusion pipeline: join per-modality prediction files by id,
//! concatenate the probability blocks, search for the fusion classifier,
//! and evaluate once on the held-out test split alongside the
//! weighted-average and SVM baselines.

pub mod synth;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::automl::{
    self, FittedClassifier, Leaderboard, SearchBudget, Trial, TrialSetup,
};
use crate::core::{
    accuracy, argmax3, confusion, ClassVector, ConfusionMatrix, DatasetSplit, FusedFeature,
    Polarity,
};
use crate::error::{Error, Result};
use crate::models::{self, ModelFamily, ModelSpec};
pub use synth::{generate_synthetic, SplitIds, SynthConfig, SyntheticData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Text,
}

/// One modality's per-id probability vectors, ordered by id.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityPredictions {
    pub modality: Modality,
    pub rows: BTreeMap<String, ClassVector>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ModalityLine {
    id: String,
    probs: [f64; 3],
}

#[derive(Debug, Deserialize, Serialize)]
struct GoldLine {
    id: String,
    label: u8,
}

impl ModalityPredictions {
    pub fn new(modality: Modality) -> Self {
        Self { modality, rows: BTreeMap::new() }
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: ClassVector) -> Result<()> {
        let id = id.into();
        if self.rows.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.rows.insert(id, vector);
        Ok(())
    }

    /// Parses the JSON-lines format, one `{"id", "probs"}` object per line.
    pub fn from_reader(modality: Modality, reader: impl BufRead) -> Result<Self> {
        let mut out = Self::new(modality);
        for (number, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ModalityLine =
                serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                    line: number + 1,
                    detail: e.to_string(),
                })?;
            let vector = ClassVector::new(parsed.probs).map_err(|e| Error::MalformedLine {
                line: number + 1,
                detail: e.to_string(),
            })?;
            out.insert(parsed.id, vector)?;
        }
        Ok(out)
    }

    pub fn from_path(modality: Modality, path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(modality, std::io::BufReader::new(file))
    }

    pub fn write(&self, mut writer: impl Write) -> Result<()> {
        for (id, vector) in &self.rows {
            let line = ModalityLine { id: id.clone(), probs: vector.probs() };
            serde_json::to_writer(&mut writer, &line)?;
            writeln!(writer)?;
        }
        Ok(())
    }

    /// Fraction of ids whose argmax matches the gold label (ids without
    /// gold are skipped).
    pub fn accuracy_against(&self, gold: &BTreeMap<String, Polarity>) -> Result<f64> {
        let mut predictions = Vec::new();
        let mut labels = Vec::new();
        for (id, vector) in &self.rows {
            if let Some(&label) = gold.get(id) {
                predictions.push(vector.argmax());
                labels.push(label);
            }
        }
        accuracy(&predictions, &labels)
    }
}

/// Parses the gold JSON-lines format (`{"id", "label"}`).
pub fn read_gold(reader: impl BufRead) -> Result<BTreeMap<String, Polarity>> {
    let mut out = BTreeMap::new();
    for (number, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: GoldLine = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: number + 1,
            detail: e.to_string(),
        })?;
        let label = Polarity::try_from(parsed.label).map_err(|e| Error::MalformedLine {
            line: number + 1,
            detail: e.to_string(),
        })?;
        if out.insert(parsed.id.clone(), label).is_some() {
            return Err(Error::DuplicateId(parsed.id));
        }
    }
    Ok(out)
}

pub fn read_gold_path(path: impl AsRef<Path>) -> Result<BTreeMap<String, Polarity>> {
    let file = std::fs::File::open(path)?;
    read_gold(std::io::BufReader::new(file))
}

pub fn write_gold(
    gold: impl IntoIterator<Item = (String, Polarity)>,
    mut writer: impl Write,
) -> Result<()> {
    for (id, label) in gold {
        let line = GoldLine { id, label: label as u8 };
        serde_json::to_writer(&mut writer, &line)?;
        writeln!(writer)?;
    }
    Ok(())
}

/// Ids dropped during a join, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReport {
    pub joined: usize,
    pub image_only: usize,
    pub text_only: usize,
    pub missing_gold: usize,
}

impl JoinReport {
    pub fn missing(&self) -> usize {
        self.image_only + self.text_only + self.missing_gold
    }
}

/// Emits one fused feature per id present in both modalities, ordered by
/// id. Ids on only one side are counted, never silently dropped; when gold
/// labels are supplied, ids without one are counted and skipped too.
pub fn join_modalities(
    image: &ModalityPredictions,
    text: &ModalityPredictions,
    gold: Option<&BTreeMap<String, Polarity>>,
) -> Result<(Vec<FusedFeature>, JoinReport)> {
    let mut report = JoinReport::default();
    let mut features = Vec::new();
    for (id, img_vec) in &image.rows {
        match text.rows.get(id) {
            None => report.image_only += 1,
            Some(text_vec) => {
                let label = match gold {
                    None => None,
                    Some(map) => match map.get(id) {
                        None => {
                            report.missing_gold += 1;
                            continue;
                        }
                        Some(&label) => Some(label),
                    },
                };
                features.push(FusedFeature::from_vectors(id, *img_vec, *text_vec, label));
                report.joined += 1;
            }
        }
    }
    report.text_only = text.rows.keys().filter(|id| !image.rows.contains_key(*id)).count();
    if features.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok((features, report))
}

/// Convex combination of the two modality vectors: `w` on the image side.
pub fn weighted_average_fuse(
    image: &ClassVector,
    text: &ClassVector,
    w: f64,
) -> Result<ClassVector> {
    if !(0.0..=1.0).contains(&w) || !w.is_finite() {
        return Err(Error::InvalidWeight(w));
    }
    let a = image.probs();
    let b = text.probs();
    ClassVector::new(std::array::from_fn(|i| w * a[i] + (1.0 - w) * b[i]))
}

/// Accuracy of the weighted-average rule at a fixed weight.
fn weighted_accuracy(features: &[FusedFeature], w: f64) -> Result<f64> {
    let mut predictions = Vec::with_capacity(features.len());
    let mut gold = Vec::with_capacity(features.len());
    for f in features {
        let img = f.image_block();
        let txt = f.text_block();
        let blend = std::array::from_fn(|i| w * img[i] + (1.0 - w) * txt[i]);
        predictions.push(argmax3(&blend));
        gold.push(f.label.ok_or_else(|| {
            Error::Training(format!("feature {:?} has no gold label", f.id))
        })?);
    }
    accuracy(&predictions, &gold)
}

/// Grid search over w in {0.00, 0.01, ..., 1.00} maximizing validation
/// accuracy; ties resolve to the smallest weight.
pub fn tune_weight(valid: &[FusedFeature]) -> Result<f64> {
    if valid.is_empty() {
        return Err(Error::EmptyInput("weight tuning needs a validation set".into()));
    }
    let mut best_w = 0.0;
    let mut best_acc = f64::NEG_INFINITY;
    for step in 0..=100u32 {
        let w = f64::from(step) / 100.0;
        let acc = weighted_accuracy(valid, w)?;
        if acc > best_acc {
            best_acc = acc;
            best_w = w;
        }
    }
    Ok(best_w)
}

/// Test-set accuracy of the selected model and every baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestAccuracies {
    pub selected: f64,
    pub image_only: f64,
    pub text_only: f64,
    pub weighted_avg: f64,
    pub svm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub selected: ConfusionMatrix,
    pub image_only: ConfusionMatrix,
    pub text_only: ConfusionMatrix,
    pub weighted_avg: ConfusionMatrix,
    pub svm: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedTrialInfo {
    pub index: usize,
    pub family: String,
    pub hyperparams: serde_json::Value,
    pub objective: f64,
}

/// The pipeline report serialized by the batch interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub test_accuracy: TestAccuracies,
    pub confusion: ConfusionReport,
    pub selected_trial: SelectedTrialInfo,
    pub w_star: f64,
}

/// Everything the pipeline produced: the report, the full leaderboard and
/// the selected classifier ready for serialization.
#[derive(Debug, Clone)]
pub struct FuseOutcome {
    pub report: EvalReport,
    pub leaderboard: Leaderboard,
    pub selected_model: FittedClassifier,
}

fn trial_info(trial: &Trial) -> Result<SelectedTrialInfo> {
    let hyperparams = match &trial.setup {
        TrialSetup::Model(spec) => serde_json::to_value(&spec.hyperparams)?,
        TrialSetup::Ensemble(_) => serde_json::Value::Object(Default::default()),
    };
    Ok(SelectedTrialInfo {
        index: trial.index,
        family: automl::family_name(&trial.setup).to_string(),
        hyperparams,
        objective: trial.objective,
    })
}

/// Runs the search on (train, valid), selects the best trial, then touches
/// the test split exactly once: a single pass scoring the selected model,
/// both single-modality argmax rules, the weighted-average baseline at the
/// validation-tuned weight, and the SVM baseline.
pub fn fuse_train_evaluate(
    split: &DatasetSplit,
    budget: SearchBudget,
    master_seed: u64,
    workers: usize,
) -> Result<FuseOutcome> {
    let leaderboard = automl::random_search_with_workers(
        &split.train,
        &split.valid,
        budget,
        master_seed,
        workers,
    )?;
    let selected_trial = leaderboard.selected();
    let selected_model = selected_trial
        .model
        .clone()
        .expect("selection never returns a failed trial");
    let selected_info = trial_info(selected_trial)?;

    let w_star = tune_weight(&split.valid)?;

    let svm_spec = ModelSpec::with_defaults(ModelFamily::LinearSvm, master_seed);
    let svm_model = models::fit(&svm_spec, &split.train)?;

    // The single evaluation pass over the test split.
    let mut gold = Vec::with_capacity(split.test.len());
    let mut selected_preds = Vec::with_capacity(split.test.len());
    let mut image_preds = Vec::with_capacity(split.test.len());
    let mut text_preds = Vec::with_capacity(split.test.len());
    let mut weighted_preds = Vec::with_capacity(split.test.len());
    let mut svm_preds = Vec::with_capacity(split.test.len());
    for f in &split.test {
        gold.push(f.label.ok_or_else(|| {
            Error::Training(format!("test feature {:?} has no gold label", f.id))
        })?);
        selected_preds.push(selected_model.predict(&f.x)?);
        let img = f.image_block();
        let txt = f.text_block();
        image_preds.push(argmax3(&img));
        text_preds.push(argmax3(&txt));
        let blend = std::array::from_fn(|i| w_star * img[i] + (1.0 - w_star) * txt[i]);
        weighted_preds.push(argmax3(&blend));
        svm_preds.push(svm_model.predict(&f.x)?);
    }

    let report = EvalReport {
        test_accuracy: TestAccuracies {
            selected: accuracy(&selected_preds, &gold)?,
            image_only: accuracy(&image_preds, &gold)?,
            text_only: accuracy(&text_preds, &gold)?,
            weighted_avg: accuracy(&weighted_preds, &gold)?,
            svm: accuracy(&svm_preds, &gold)?,
        },
        confusion: ConfusionReport {
            selected: confusion(&selected_preds, &gold)?,
            image_only: confusion(&image_preds, &gold)?,
            text_only: confusion(&text_preds, &gold)?,
            weighted_avg: confusion(&weighted_preds, &gold)?,
            svm: confusion(&svm_preds, &gold)?,
        },
        selected_trial: selected_info,
        w_star,
    };
    Ok(FuseOutcome { report, leaderboard, selected_model })
}

/// Splits fused features into train/valid/test following the id lists.
pub fn assemble_split(features: Vec<FusedFeature>, splits: &SplitIds) -> Result<DatasetSplit> {
    let mut by_id: BTreeMap<String, FusedFeature> =
        features.into_iter().map(|f| (f.id.clone(), f)).collect();
    let mut take = |ids: &[String], partition: &str| -> Result<Vec<FusedFeature>> {
        ids.iter()
            .map(|id| {
                by_id.remove(id).ok_or_else(|| {
                    Error::EmptyInput(format!("{partition} id {id:?} has no fused feature"))
                })
            })
            .collect()
    };
    let train = take(&splits.train, "train")?;
    let valid = take(&splits.valid, "valid")?;
    let test = take(&splits.test, "test")?;
    DatasetSplit::new(train, valid, test)
}

/// Writes the synthetic data as the pipeline's four input files:
/// img.jsonl, text.jsonl, gold.jsonl and splits.json.
pub fn write_synthetic(data: &SyntheticData, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut image = ModalityPredictions::new(Modality::Image);
    let mut text = ModalityPredictions::new(Modality::Text);
    for row in &data.rows {
        image.insert(&row.id, row.image)?;
        text.insert(&row.id, row.text)?;
    }
    image.write(std::io::BufWriter::new(std::fs::File::create(dir.join("img.jsonl"))?))?;
    text.write(std::io::BufWriter::new(std::fs::File::create(dir.join("text.jsonl"))?))?;

    let gold_file = std::fs::File::create(dir.join("gold.jsonl"))?;
    write_gold(
        data.rows.iter().map(|r| (r.id.clone(), r.gold)),
        std::io::BufWriter::new(gold_file),
    )?;

    let splits_file = std::fs::File::create(dir.join("splits.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(splits_file), &data.splits)?;
    Ok(())
}

/// Loads a splits file written by [`write_synthetic`].
pub fn read_splits(path: impl AsRef<Path>) -> Result<SplitIds> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// In-memory dataset split straight from generated data.
pub fn synthetic_split(data: &SyntheticData) -> Result<DatasetSplit> {
    let features: Vec<FusedFeature> = data
        .rows
        .iter()
        .map(|r| FusedFeature::from_vectors(&r.id, r.image, r.text, Some(r.gold)))
        .collect();
    assemble_split(features, &data.splits)
}
