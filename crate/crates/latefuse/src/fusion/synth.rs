//! Synthetic multimodal data with a known, enumerable noise model.
//!
//! Each example draws a gold class uniformly. Each modality then picks a
//! "chosen" class through a per-class reliability channel (correct with the
//! class's accuracy, otherwise uniform over the two wrong classes) and
//! emits a Dirichlet sample concentrated on the chosen class, with the
//! sample's maximum swapped onto the chosen position so the vector's argmax
//! is exactly the chosen class. The two modalities are conditionally
//! independent given the gold label, and their per-class accuracy profiles
//! are deliberately skewed in opposite directions so that fusing both
//! vectors strictly beats either one alone.

use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::core::{argmax3, ClassVector, Polarity};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// Generator configuration; accuracies are overall per-modality targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub acc_img: f64,
    pub acc_text: f64,
    /// Dirichlet concentration added to the chosen class; larger values
    /// push vectors toward one-hot.
    pub concentration: f64,
    pub seed: u64,
}

/// Nominal 30 examples per class per split.
pub const MIN_SPLIT_SIZE: usize = 90;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n_train", self.n_train),
            ("n_valid", self.n_valid),
            ("n_test", self.n_test),
        ] {
            if n < MIN_SPLIT_SIZE {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {n}, need at least {MIN_SPLIT_SIZE} (30 per class)"
                )));
            }
        }
        for (name, acc) in [("acc_img", self.acc_img), ("acc_text", self.acc_text)] {
            if !(acc > 1.0 / 3.0 && acc <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {acc}, must lie in (1/3, 1]"
                )));
            }
        }
        if !(self.concentration > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "concentration = {}, must be positive",
                self.concentration
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_valid + self.n_test
    }
}

// Per-class spread caps. The image channel is most reliable on class 0 and
// weakest on class 2; the text channel leans the opposite way with a
// different magnitude, which breaks posterior ties when the modalities
// disagree.
const IMAGE_SPREAD_CAP: f64 = 0.28;
const TEXT_SPREAD_CAP: f64 = 0.22;

fn spread(target: f64, cap: f64) -> f64 {
    cap * 1.0f64.min((1.0 - target) / 0.3).min((target - 1.0 / 3.0) / 0.3)
}

/// Per-class accuracy of the image channel; the mean equals `target`.
pub fn image_profile(target: f64) -> [f64; 3] {
    let s = spread(target, IMAGE_SPREAD_CAP);
    [target + s, target, target - s]
}

/// Per-class accuracy of the text channel; the mean equals `target`.
pub fn text_profile(target: f64) -> [f64; 3] {
    let s = spread(target, TEXT_SPREAD_CAP);
    [target - s, target, target + s]
}

/// P(chosen class = c | gold = g) for a per-class accuracy profile: the
/// diagonal holds the profile, errors spread uniformly over the two wrong
/// classes.
pub fn channel_matrix(profile: &[f64; 3]) -> [[f64; 3]; 3] {
    std::array::from_fn(|g| {
        std::array::from_fn(|c| {
            if c == g {
                profile[g]
            } else {
                (1.0 - profile[g]) / 2.0
            }
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRow {
    pub id: String,
    pub gold: Polarity,
    pub image: ClassVector,
    pub text: ClassVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub rows: Vec<SynthRow>,
    pub splits: SplitIds,
}

fn sample_class_vector(
    chosen: usize,
    concentration: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<ClassVector> {
    let mut alpha = [1.0f64; 3];
    alpha[chosen] += concentration;
    let dirichlet = Dirichlet::new(&alpha)
        .map_err(|e| Error::InvalidConfig(format!("dirichlet parameters: {e}")))?;
    let mut v: Vec<f64> = dirichlet.sample(rng);
    let m = argmax3(&[v[0], v[1], v[2]]).code();
    v.swap(m, chosen);
    ClassVector::new([v[0], v[1], v[2]])
}

fn draw_chosen(gold: usize, profile: &[f64; 3], rng: &mut rand_chacha::ChaCha8Rng) -> usize {
    if rng.gen::<f64>() < profile[gold] {
        gold
    } else {
        let others = [(gold + 1) % 3, (gold + 2) % 3];
        others[rng.gen_range(0..2)]
    }
}

/// Generates all splits. Row `i` draws from its own derived stream, so the
/// output is identical regardless of how rows would be batched.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let img_profile = image_profile(config.acc_img);
    let text_profile = text_profile(config.acc_text);
    let total = config.total();
    let mut rows = Vec::with_capacity(total);
    for i in 0..total {
        let mut rng = stream_rng(config.seed, stream::SYNTH, i as u64);
        let gold = rng.gen_range(0..3usize);
        let img_chosen = draw_chosen(gold, &img_profile, &mut rng);
        let image = sample_class_vector(img_chosen, config.concentration, &mut rng)?;
        let text_chosen = draw_chosen(gold, &text_profile, &mut rng);
        let text = sample_class_vector(text_chosen, config.concentration, &mut rng)?;
        rows.push(SynthRow {
            id: format!("s{i:06}"),
            gold: Polarity::from_index(gold)?,
            image,
            text,
        });
    }
    let ids = |range: std::ops::Range<usize>| range.map(|i| rows[i].id.clone()).collect();
    let splits = SplitIds {
        train: ids(0..config.n_train),
        valid: ids(config.n_train..config.n_train + config.n_valid),
        test: ids(config.n_train + config.n_valid..total),
    };
    Ok(SyntheticData { rows, splits })
}

impl SyntheticData {
    /// Fraction of rows whose modality argmax equals the gold label.
    pub fn modality_accuracy(&self, image: bool) -> f64 {
        let hits = self
            .rows
            .iter()
            .filter(|r| {
                let v = if image { &r.image } else { &r.text };
                v.argmax() == r.gold
            })
            .count();
        hits as f64 / self.rows.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(acc: f64, n: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_train: n,
            n_valid: 90,
            n_test: 90,
            acc_img: acc,
            acc_text: acc,
            concentration: 6.0,
            seed,
        }
    }

    #[test]
    fn profiles_average_to_the_target_and_stay_in_range() {
        for target in [0.34, 0.5, 0.7, 0.9, 1.0] {
            for profile in [image_profile(target), text_profile(target)] {
                let mean = profile.iter().sum::<f64>() / 3.0;
                assert!((mean - target).abs() < 1e-12, "target {target}: {profile:?}");
                for p in profile {
                    assert!(p > 1.0 / 3.0 && p <= 1.0, "target {target}: {profile:?}");
                }
            }
        }
    }

    #[test]
    fn channel_rows_are_distributions() {
        let m = channel_matrix(&image_profile(0.7));
        for row in m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_accuracy_with_tight_concentration_is_exact() {
        let mut cfg = config(1.0, 90, 3);
        cfg.concentration = 50.0;
        let data = generate_synthetic(&cfg).unwrap();
        assert_eq!(data.modality_accuracy(true), 1.0);
        assert_eq!(data.modality_accuracy(false), 1.0);
    }

    #[test]
    fn same_seed_reproduces_identical_rows() {
        let a = generate_synthetic(&config(0.7, 200, 42)).unwrap();
        let b = generate_synthetic(&config(0.7, 200, 42)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&config(0.7, 200, 43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn seventy_percent_target_is_hit_within_two_points() {
        let data = generate_synthetic(&config(0.70, 6000, 7)).unwrap();
        for image in [true, false] {
            let acc = data.modality_accuracy(image);
            assert!((0.68..=0.72).contains(&acc), "measured {acc}");
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(generate_synthetic(&config(0.2, 200, 1)).is_err());
        assert!(generate_synthetic(&config(1.2, 200, 1)).is_err());
        assert!(generate_synthetic(&config(0.7, 50, 1)).is_err());
        let mut bad = config(0.7, 200, 1);
        bad.concentration = 0.0;
        assert!(generate_synthetic(&bad).is_err());
    }

    #[test]
    fn splits_partition_the_ids() {
        let cfg = config(0.8, 120, 5);
        let data = generate_synthetic(&cfg).unwrap();
        assert_eq!(data.splits.train.len(), 120);
        assert_eq!(data.splits.valid.len(), 90);
        assert_eq!(data.splits.test.len(), 90);
        let mut all: Vec<&String> = data
            .splits
            .train
            .iter()
            .chain(&data.splits.valid)
            .chain(&data.splits.test)
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), data.rows.len());
    }
}
