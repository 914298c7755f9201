//! Shared domain types, dataset splits, and evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the "components sum to one" check. Loose enough to survive
/// serialization round-trips, tight enough to catch real violations.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// Three-class sentiment polarity with stable integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Polarity {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Negative, Polarity::Neutral, Polarity::Positive];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        match index {
            0 => Ok(Polarity::Negative),
            1 => Ok(Polarity::Neutral),
            2 => Ok(Polarity::Positive),
            other => Err(Error::InvalidPolarity(other.min(u8::MAX as usize) as u8)),
        }
    }
}

impl From<Polarity> for u8 {
    fn from(p: Polarity) -> u8 {
        p as u8
    }
}

impl TryFrom<u8> for Polarity {
    type Error = Error;

    fn try_from(code: u8) -> Result<Self> {
        Polarity::from_index(code as usize)
    }
}

/// Index of the largest of three scores; ties break toward the lowest index.
///
/// Works on raw (possibly unnormalized) scores so callers can classify
/// before building a validated [`ClassVector`].
pub fn argmax3(scores: &[f64; 3]) -> Polarity {
    let mut best = 0;
    for i in 1..3 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Polarity::from_index(best).expect("index < 3")
}

/// A probability distribution over the three polarity classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", try_from = "[f64; 3]")]
pub struct ClassVector {
    probs: [f64; 3],
}

impl ClassVector {
    pub fn new(probs: [f64; 3]) -> Result<Self> {
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidClassVector(format!(
                    "component {i} is {p}, must be a finite non-negative number"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::InvalidClassVector(format!(
                "components sum to {sum}, expected 1 within {PROB_SUM_TOLERANCE}"
            )));
        }
        Ok(Self { probs })
    }

    /// One-hot vector for a single class.
    pub fn one_hot(class: Polarity) -> Self {
        let mut probs = [0.0; 3];
        probs[class.code()] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> [f64; 3] {
        self.probs
    }

    /// Predicted class: argmax with lowest-index tie-breaking.
    pub fn argmax(&self) -> Polarity {
        argmax3(&self.probs)
    }
}

impl From<ClassVector> for [f64; 3] {
    fn from(v: ClassVector) -> [f64; 3] {
        v.probs
    }
}

impl TryFrom<[f64; 3]> for ClassVector {
    type Error = Error;

    fn try_from(probs: [f64; 3]) -> Result<Self> {
        ClassVector::new(probs)
    }
}

/// One AutoML training row: the six fused probabilities plus an optional
/// gold label (absent for pure inference inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedFeature {
    pub id: String,
    pub x: [f64; 6],
    pub label: Option<Polarity>,
}

impl FusedFeature {
    pub fn new(id: impl Into<String>, x: [f64; 6], label: Option<Polarity>) -> Result<Self> {
        ClassVector::new([x[0], x[1], x[2]])
            .map_err(|e| Error::InvalidClassVector(format!("image block: {e}")))?;
        ClassVector::new([x[3], x[4], x[5]])
            .map_err(|e| Error::InvalidClassVector(format!("text block: {e}")))?;
        Ok(Self { id: id.into(), x, label })
    }

    pub fn from_vectors(
        id: impl Into<String>,
        image: ClassVector,
        text: ClassVector,
        label: Option<Polarity>,
    ) -> Self {
        let ip = image.probs();
        let tp = text.probs();
        Self {
            id: id.into(),
            x: [ip[0], ip[1], ip[2], tp[0], tp[1], tp[2]],
            label,
        }
    }

    /// The first three dimensions (image modality block).
    pub fn image_block(&self) -> [f64; 3] {
        [self.x[0], self.x[1], self.x[2]]
    }

    /// The last three dimensions (text modality block).
    pub fn text_block(&self) -> [f64; 3] {
        [self.x[3], self.x[4], self.x[5]]
    }
}

/// Train/validation/test partitions with disjoint ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<FusedFeature>,
    pub valid: Vec<FusedFeature>,
    pub test: Vec<FusedFeature>,
}

impl DatasetSplit {
    pub fn new(
        train: Vec<FusedFeature>,
        valid: Vec<FusedFeature>,
        test: Vec<FusedFeature>,
    ) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for f in train.iter().chain(valid.iter()).chain(test.iter()) {
            if !seen.insert(f.id.as_str()) {
                return Err(Error::OverlappingSplits(f.id.clone()));
            }
        }
        Ok(Self { train, valid, test })
    }

    /// Checks that a labeled partition is usable for fitting: non-empty and
    /// covering every polarity class.
    pub fn check_fit_ready(partition: &[FusedFeature], name: &str) -> Result<()> {
        if partition.is_empty() {
            return Err(Error::EmptyInput(format!("{name} partition is empty")));
        }
        let mut present = [false; 3];
        for f in partition {
            if let Some(label) = f.label {
                present[label.code()] = true;
            }
        }
        for class in Polarity::ALL {
            if !present[class.code()] {
                return Err(Error::EmptyInput(format!(
                    "{name} partition has no example with label {:?}",
                    class
                )));
            }
        }
        Ok(())
    }

    /// Replaces each modality block by the one-hot of its argmax
    /// (hard-label ablation of the fused input).
    pub fn to_one_hot(&self) -> Self {
        let map = |fs: &[FusedFeature]| {
            fs.iter()
                .map(|f| {
                    let img = ClassVector::one_hot(argmax3(&f.image_block())).probs();
                    let txt = ClassVector::one_hot(argmax3(&f.text_block())).probs();
                    FusedFeature {
                        id: f.id.clone(),
                        x: [img[0], img[1], img[2], txt[0], txt[1], txt[2]],
                        label: f.label,
                    }
                })
                .collect()
        };
        Self {
            train: map(&self.train),
            valid: map(&self.valid),
            test: map(&self.test),
        }
    }
}

/// 3x3 confusion counts; rows are gold classes, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }
}

/// Fraction of positions where the prediction equals the gold label.
pub fn accuracy(predictions: &[Polarity], gold: &[Polarity]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no predictions to score".into()));
    }
    let hits = predictions
        .iter()
        .zip(gold)
        .filter(|(p, g)| p == g)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Tallies a confusion matrix; rows index gold, columns index predictions.
pub fn confusion(predictions: &[Polarity], gold: &[Polarity]) -> Result<ConfusionMatrix> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    let mut counts = [[0u64; 3]; 3];
    for (p, g) in predictions.iter().zip(gold) {
        counts[g.code()][p.code()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pol(codes: &[u8]) -> Vec<Polarity> {
        codes.iter().map(|&c| Polarity::try_from(c).unwrap()).collect()
    }

    #[test]
    fn accuracy_identity_case() {
        assert_eq!(accuracy(&pol(&[0, 1, 2]), &pol(&[0, 1, 2])).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_total_disagreement() {
        assert_eq!(accuracy(&pol(&[0, 0, 0]), &pol(&[2, 2, 2])).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_three_of_four() {
        assert_eq!(
            accuracy(&pol(&[0, 1, 2, 2]), &pol(&[0, 1, 1, 2])).unwrap(),
            0.75
        );
    }

    #[test]
    fn accuracy_rejects_mismatch_and_empty() {
        assert!(matches!(
            accuracy(&pol(&[0]), &pol(&[0, 1])),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(accuracy(&[], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn argmax_unique_maximum() {
        let v = ClassVector::new([0.2, 0.3, 0.5]).unwrap();
        assert_eq!(v.argmax(), Polarity::Positive);
    }

    #[test]
    fn argmax_three_way_tie_takes_lowest_index() {
        let third = 1.0 / 3.0;
        let v = ClassVector::new([third, third, third]).unwrap();
        assert_eq!(v.argmax(), Polarity::Negative);
    }

    #[test]
    fn argmax_two_way_tie_takes_lowest_index() {
        let v = ClassVector::new([0.5, 0.5, 0.0]).unwrap();
        assert_eq!(v.argmax(), Polarity::Negative);
    }

    #[test]
    fn confusion_single_hit() {
        let m = confusion(&pol(&[0]), &pol(&[0])).unwrap();
        assert_eq!(m.counts[0][0], 1);
        assert_eq!(m.total(), 1);
    }

    #[test]
    fn confusion_single_miss() {
        let m = confusion(&pol(&[1]), &pol(&[2])).unwrap();
        assert_eq!(m.counts[2][1], 1);
    }

    #[test]
    fn confusion_consistent_with_accuracy() {
        let preds = pol(&[0, 1, 2, 2]);
        let gold = pol(&[0, 1, 1, 2]);
        let m = confusion(&preds, &gold).unwrap();
        assert_eq!(m.trace(), 3);
        assert_eq!(m.total(), 4);
        assert_eq!(m.accuracy(), accuracy(&preds, &gold).unwrap());
    }

    #[test]
    fn class_vector_rejects_bad_inputs() {
        assert!(ClassVector::new([0.5, 0.5, 0.1]).is_err());
        assert!(ClassVector::new([-0.1, 0.6, 0.5]).is_err());
        assert!(ClassVector::new([f64::NAN, 0.5, 0.5]).is_err());
    }

    #[test]
    fn class_vector_tolerates_round_trip_noise() {
        assert!(ClassVector::new([0.1 + 5e-7, 0.2, 0.7]).is_ok());
    }

    #[test]
    fn polarity_codes_are_stable_through_serde() {
        let json = serde_json::to_string(&Polarity::ALL.to_vec()).unwrap();
        assert_eq!(json, "[0,1,2]");
        let back: Vec<Polarity> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Polarity::ALL.to_vec());
        assert!(serde_json::from_str::<Polarity>("3").is_err());
    }

    #[test]
    fn fused_feature_validates_both_blocks() {
        assert!(FusedFeature::new("a", [0.2, 0.3, 0.5, 0.1, 0.8, 0.1], None).is_ok());
        assert!(FusedFeature::new("a", [0.9, 0.3, 0.5, 0.1, 0.8, 0.1], None).is_err());
        assert!(FusedFeature::new("a", [0.2, 0.3, 0.5, 0.5, 0.8, 0.1], None).is_err());
    }

    #[test]
    fn split_rejects_shared_ids() {
        let f = |id: &str| FusedFeature::new(id, [1.0, 0.0, 0.0, 1.0, 0.0, 0.0], None).unwrap();
        let err = DatasetSplit::new(vec![f("a")], vec![f("a")], vec![]);
        assert!(matches!(err, Err(Error::OverlappingSplits(_))));
    }
}
