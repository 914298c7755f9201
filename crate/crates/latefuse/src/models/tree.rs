//! Binary decision trees and the shared grower used by CART, the forests
//! and both boosting variants.
//!
//! The grower keeps one index array per feature, pre-sorted by feature
//! value, and stable-partitions those arrays at every split. Each node then
//! scans its samples in sorted order without re-sorting, which keeps a full
//! fit at O(features * samples * depth) after the initial sorts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One node; internal nodes have both children, leaves carry a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature_index: u32,
    pub threshold: f64,
    pub left: Option<u32>,
    pub right: Option<u32>,
    pub leaf_value: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Walks from the root; `x[f] <= threshold` goes left.
    pub fn leaf_for(&self, x: &[f64]) -> &[f64] {
        let mut node = &self.nodes[0];
        loop {
            match node.leaf_value {
                Some(ref value) => return value,
                None => {
                    let next = if x[node.feature_index as usize] <= node.threshold {
                        node.left.expect("internal node has two children")
                    } else {
                        node.right.expect("internal node has two children")
                    };
                    node = &self.nodes[next as usize];
                }
            }
        }
    }

    /// Thresholds of every internal node, in node order.
    pub fn thresholds(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter(|n| n.leaf_value.is_none())
            .map(|n| n.threshold)
            .collect()
    }

    /// Root split as (feature, threshold), if the root is internal.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        let root = &self.nodes[0];
        root.leaf_value
            .is_none()
            .then_some((root.feature_index as usize, root.threshold))
    }
}

/// Split quality measure plus the leaf payload it produces. Stats are plain
/// sums, so sibling stats subtract exactly from the parent's.
pub trait Criterion {
    type Stats: Clone;

    fn zero(&self) -> Self::Stats;
    fn add(&self, stats: &mut Self::Stats, sample: u32, weight: f64);
    fn sub(&self, total: &Self::Stats, left: &Self::Stats) -> Self::Stats;
    /// Total sample weight accumulated.
    fn weight(&self, stats: &Self::Stats) -> f64;
    /// Impurity mass of a node (weighted, additive across siblings); a
    /// split's gain is the parent score minus the sum of child scores.
    fn score(&self, stats: &Self::Stats) -> f64;
    fn leaf(&self, stats: &Self::Stats) -> Vec<f64>;
    /// Nothing left to separate; the grower makes a leaf without scanning.
    fn is_pure(&self, stats: &Self::Stats) -> bool;
    /// Whether zero-gain splits are taken (classic CART behavior, needed to
    /// descend into XOR-like targets whose single splits do not lower Gini).
    fn zero_gain_splits(&self) -> bool {
        false
    }
}

/// Weighted Gini impurity over three classes; leaves are class frequencies.
pub struct GiniCriterion<'a> {
    pub labels: &'a [usize],
}

impl Criterion for GiniCriterion<'_> {
    type Stats = [f64; 4]; // class counts + total

    fn zero(&self) -> Self::Stats {
        [0.0; 4]
    }

    #[inline]
    fn add(&self, stats: &mut Self::Stats, sample: u32, weight: f64) {
        stats[self.labels[sample as usize]] += weight;
        stats[3] += weight;
    }

    fn sub(&self, total: &Self::Stats, left: &Self::Stats) -> Self::Stats {
        std::array::from_fn(|i| total[i] - left[i])
    }

    fn weight(&self, stats: &Self::Stats) -> f64 {
        stats[3]
    }

    fn score(&self, stats: &Self::Stats) -> f64 {
        let n = stats[3];
        if n <= 0.0 {
            return 0.0;
        }
        // n * gini(node) = n - sum(c_k^2) / n
        n - (stats[0] * stats[0] + stats[1] * stats[1] + stats[2] * stats[2]) / n
    }

    fn leaf(&self, stats: &Self::Stats) -> Vec<f64> {
        let n = stats[3];
        vec![stats[0] / n, stats[1] / n, stats[2] / n]
    }

    fn is_pure(&self, stats: &Self::Stats) -> bool {
        self.score(stats) <= 1e-12
    }

    fn zero_gain_splits(&self) -> bool {
        true
    }
}

/// Squared-error regression on one boosting class; the leaf holds the mean
/// residual at `class` inside a 3-vector of additive scores.
pub struct MeanResidualCriterion<'a> {
    pub targets: &'a [f64],
    pub class: usize,
}

impl Criterion for MeanResidualCriterion<'_> {
    type Stats = [f64; 3]; // weighted sum, weighted sum of squares, weight

    fn zero(&self) -> Self::Stats {
        [0.0; 3]
    }

    #[inline]
    fn add(&self, stats: &mut Self::Stats, sample: u32, weight: f64) {
        let y = self.targets[sample as usize];
        stats[0] += weight * y;
        stats[1] += weight * y * y;
        stats[2] += weight;
    }

    fn sub(&self, total: &Self::Stats, left: &Self::Stats) -> Self::Stats {
        std::array::from_fn(|i| total[i] - left[i])
    }

    fn weight(&self, stats: &Self::Stats) -> f64 {
        stats[2]
    }

    fn score(&self, stats: &Self::Stats) -> f64 {
        if stats[2] <= 0.0 {
            return 0.0;
        }
        // within-node sum of squared errors
        (stats[1] - stats[0] * stats[0] / stats[2]).max(0.0)
    }

    fn leaf(&self, stats: &Self::Stats) -> Vec<f64> {
        let mut value = vec![0.0; 3];
        if stats[2] > 0.0 {
            value[self.class] = stats[0] / stats[2];
        }
        value
    }

    fn is_pure(&self, stats: &Self::Stats) -> bool {
        self.score(stats) <= 1e-12
    }
}

/// Second-order leaf solver: split gain from gradient/Hessian sums and leaf
/// weight -G/(H+lambda) at `class`.
pub struct GradHessCriterion<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
    pub class: usize,
}

impl Criterion for GradHessCriterion<'_> {
    type Stats = [f64; 3]; // G, H, weight

    fn zero(&self) -> Self::Stats {
        [0.0; 3]
    }

    #[inline]
    fn add(&self, stats: &mut Self::Stats, sample: u32, weight: f64) {
        stats[0] += weight * self.grad[sample as usize];
        stats[1] += weight * self.hess[sample as usize];
        stats[2] += weight;
    }

    fn sub(&self, total: &Self::Stats, left: &Self::Stats) -> Self::Stats {
        std::array::from_fn(|i| total[i] - left[i])
    }

    fn weight(&self, stats: &Self::Stats) -> f64 {
        stats[2]
    }

    fn score(&self, stats: &Self::Stats) -> f64 {
        -(stats[0] * stats[0]) / (stats[1] + self.lambda).max(1e-12)
    }

    fn leaf(&self, stats: &Self::Stats) -> Vec<f64> {
        let mut value = vec![0.0; 3];
        value[self.class] = -stats[0] / (stats[1] + self.lambda).max(1e-12);
        value
    }

    fn is_pure(&self, _stats: &Self::Stats) -> bool {
        // A flat gradient makes every split gain non-positive, so the gain
        // threshold already stops these nodes.
        false
    }
}

/// How many features to examine at each split.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSubsample {
    All,
    Count(usize),
}

/// How candidate thresholds are proposed per examined feature.
#[derive(Debug, Clone, Copy)]
pub enum ThresholdMode {
    /// Every midpoint between consecutive distinct values (exact CART).
    Exhaustive,
    /// One threshold drawn uniformly between the node's min and max
    /// (extremely randomized trees).
    RandomUniform,
}

#[derive(Debug, Clone, Copy)]
pub struct GrowConfig {
    pub max_depth: usize,
    pub min_samples_leaf: f64,
    pub feature_subsample: FeatureSubsample,
    pub threshold_mode: ThresholdMode,
}

/// Column-major training features with per-feature sorted sample orders,
/// built once per fit and shared by every tree of a forest or booster.
pub struct SortedDataset {
    pub columns: Vec<Vec<f64>>,
    pub orders: Vec<Vec<u32>>,
    pub n_samples: usize,
}

impl SortedDataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(n); d];
        for row in rows {
            for (f, &v) in row.iter().enumerate() {
                columns[f].push(v);
            }
        }
        let orders = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| {
                    col[a as usize]
                        .partial_cmp(&col[b as usize])
                        .expect("finite features")
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Self { columns, orders, n_samples: n }
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

const MIN_GAIN: f64 = 1e-12;

struct Grower<'a, C: Criterion> {
    data: &'a SortedDataset,
    weights: &'a [f64],
    criterion: &'a C,
    config: GrowConfig,
    // One working buffer per feature: each node owns the same [start, end)
    // segment in every buffer, kept sorted by that buffer's feature.
    buffers: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    nodes: Vec<TreeNode>,
}

impl<C: Criterion> Grower<'_, C> {
    fn node_stats(&self, start: usize, end: usize) -> C::Stats {
        let mut stats = self.criterion.zero();
        for &i in &self.buffers[0][start..end] {
            self.criterion.add(&mut stats, i, self.weights[i as usize]);
        }
        stats
    }

    /// Best exhaustive split of feature `f` over [start, end).
    fn scan_exhaustive(
        &self,
        f: usize,
        start: usize,
        end: usize,
        total: &C::Stats,
        parent_score: f64,
        floor: f64,
    ) -> Option<BestSplit> {
        let col = &self.data.columns[f];
        let idx = &self.buffers[f][start..end];
        let total_weight = self.criterion.weight(total);
        let mut left = self.criterion.zero();
        let mut best: Option<BestSplit> = None;
        for k in 0..idx.len() - 1 {
            let i = idx[k];
            self.criterion.add(&mut left, i, self.weights[i as usize]);
            let v_lo = col[i as usize];
            let v_hi = col[idx[k + 1] as usize];
            if v_lo == v_hi {
                continue;
            }
            let left_weight = self.criterion.weight(&left);
            if left_weight < self.config.min_samples_leaf
                || total_weight - left_weight < self.config.min_samples_leaf
            {
                continue;
            }
            let right = self.criterion.sub(total, &left);
            let gain =
                parent_score - self.criterion.score(&left) - self.criterion.score(&right);
            if gain > best.as_ref().map_or(floor, |b| b.gain) {
                let mut threshold = v_lo + (v_hi - v_lo) / 2.0;
                if threshold >= v_hi {
                    threshold = v_lo;
                }
                best = Some(BestSplit { feature: f, threshold, gain });
            }
        }
        best
    }

    /// Evaluates one uniformly drawn threshold on feature `f`.
    fn scan_random(
        &self,
        f: usize,
        start: usize,
        end: usize,
        total: &C::Stats,
        parent_score: f64,
        floor: f64,
        rng: &mut ChaCha8Rng,
    ) -> Option<BestSplit> {
        let col = &self.data.columns[f];
        let idx = &self.buffers[f][start..end];
        let lo = col[idx[0] as usize];
        let hi = col[idx[idx.len() - 1] as usize];
        if lo == hi {
            return None;
        }
        let threshold = rng.gen_range(lo..hi);
        let mut left = self.criterion.zero();
        for &i in idx {
            if col[i as usize] <= threshold {
                self.criterion.add(&mut left, i, self.weights[i as usize]);
            } else {
                break; // sorted order: everything after is above the threshold
            }
        }
        let left_weight = self.criterion.weight(&left);
        let total_weight = self.criterion.weight(total);
        if left_weight < self.config.min_samples_leaf
            || total_weight - left_weight < self.config.min_samples_leaf
        {
            return None;
        }
        let right = self.criterion.sub(total, &left);
        let gain = parent_score - self.criterion.score(&left) - self.criterion.score(&right);
        (gain > floor).then_some(BestSplit { feature: f, threshold, gain })
    }

    fn candidate_features(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let d = self.data.n_features();
        match self.config.feature_subsample {
            FeatureSubsample::All => (0..d).collect(),
            FeatureSubsample::Count(k) => {
                let k = k.clamp(1, d);
                let mut pool: Vec<usize> = (0..d).collect();
                for i in 0..k {
                    let j = rng.gen_range(i..d);
                    pool.swap(i, j);
                }
                let mut subset = pool[..k].to_vec();
                subset.sort_unstable();
                subset
            }
        }
    }

    fn grow(&mut self, start: usize, end: usize, depth: usize, rng: &mut ChaCha8Rng) -> u32 {
        let stats = self.node_stats(start, end);
        let parent_score = self.criterion.score(&stats);
        let n = end - start;

        // A zero-gain floor lets Gini trees take even splits (first
        // candidate wins); the regression criteria require real gain.
        let floor = if self.criterion.zero_gain_splits() {
            -MIN_GAIN
        } else {
            MIN_GAIN
        };

        let mut best: Option<BestSplit> = None;
        if depth < self.config.max_depth
            && n >= 2
            && self.criterion.weight(&stats) >= 2.0 * self.config.min_samples_leaf
            && !self.criterion.is_pure(&stats)
        {
            for f in self.candidate_features(rng) {
                let candidate = match self.config.threshold_mode {
                    ThresholdMode::Exhaustive => {
                        self.scan_exhaustive(f, start, end, &stats, parent_score, floor)
                    }
                    ThresholdMode::RandomUniform => {
                        self.scan_random(f, start, end, &stats, parent_score, floor, rng)
                    }
                };
                if let Some(c) = candidate {
                    if best.as_ref().map_or(true, |b| c.gain > b.gain) {
                        best = Some(c);
                    }
                }
            }
        }

        let Some(split) = best else {
            let id = self.nodes.len() as u32;
            self.nodes.push(TreeNode {
                feature_index: 0,
                threshold: 0.0,
                left: None,
                right: None,
                leaf_value: Some(self.criterion.leaf(&stats)),
            });
            return id;
        };

        // Stable-partition every feature buffer so both children stay sorted.
        let col = &self.data.columns[split.feature];
        let mut mid = start;
        for buffer in &mut self.buffers {
            self.scratch.clear();
            let mut write = start;
            for k in start..end {
                let i = buffer[k];
                if col[i as usize] <= split.threshold {
                    buffer[write] = i;
                    write += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            buffer[write..end].copy_from_slice(&self.scratch);
            mid = write;
        }

        let id = self.nodes.len() as u32;
        self.nodes.push(TreeNode {
            feature_index: split.feature as u32,
            threshold: split.threshold,
            left: None,
            right: None,
            leaf_value: None,
        });
        let left = self.grow(start, mid, depth + 1, rng);
        let right = self.grow(mid, end, depth + 1, rng);
        self.nodes[id as usize].left = Some(left);
        self.nodes[id as usize].right = Some(right);
        id
    }
}

/// Grows one tree on the samples with nonzero weight.
pub fn grow_tree<C: Criterion>(
    data: &SortedDataset,
    weights: &[f64],
    criterion: &C,
    config: GrowConfig,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let buffers: Vec<Vec<u32>> = data
        .orders
        .iter()
        .map(|order| {
            order
                .iter()
                .copied()
                .filter(|&i| weights[i as usize] > 0.0)
                .collect()
        })
        .collect();
    let n_active = buffers.first().map_or(0, Vec::len);
    let mut grower = Grower {
        data,
        weights,
        criterion,
        config,
        scratch: Vec::with_capacity(n_active),
        buffers,
        nodes: Vec::new(),
    };
    grower.grow(0, n_active, 0, rng);
    Tree { nodes: grower.nodes }
}
