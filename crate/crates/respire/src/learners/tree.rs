//! Binary classification tree grown best-first under a split budget, with
//! the Gini diversity index as the division criterion.
//!
//! Growth keeps a frontier of splittable leaves and repeatedly splits the
//! one with the greatest weighted impurity decrease, over every candidate
//! `(feature, threshold)` where thresholds are midpoints of consecutive
//! distinct sorted values. Ties on gain break to the lower feature index,
//! then the lower threshold. Routing is `x[feature] < threshold` to the
//! left; a value exactly at the threshold goes right.

use serde::{Deserialize, Serialize};

use super::{check_xy, LearnError};
use crate::corpus::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// Budget on branch (internal) nodes.
    pub max_splits: usize,
    /// Minimum samples (by count) on each side of a split.
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_splits: 100,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Branch {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        label: Label,
        probability: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<TreeNode>,
    pub num_features: usize,
}

impl TreeModel {
    pub fn num_branches(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Branch { .. }))
            .count()
    }

    pub(crate) fn descend(&self, x: &[f64]) -> &TreeNode {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                leaf => return leaf,
            }
        }
    }
}

/// Gini diversity index `1 - sum((n_i / n)^2)` of a node's class counts.
pub fn gini_impurity(class_counts: &[u64]) -> Result<f64, LearnError> {
    let total: u64 = class_counts.iter().sum();
    if total == 0 {
        return Err(LearnError::EmptyNode);
    }
    let t = total as f64;
    Ok(1.0
        - class_counts
            .iter()
            .map(|&c| (c as f64 / t).powi(2))
            .sum::<f64>())
}

fn gini_weighted(w_patient: f64, w_total: f64) -> f64 {
    let p = w_patient / w_total;
    let q = 1.0 - p;
    1.0 - p * p - q * q
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct GrowLeaf {
    node: usize,
    indices: Vec<usize>,
    best: Option<SplitCandidate>,
    created: usize,
}

fn leaf_record(indices: &[usize], y: &[Label], w: &[f64]) -> TreeNode {
    let mut w_patient = 0.0;
    let mut w_total = 0.0;
    for &i in indices {
        w_total += w[i];
        if y[i] == Label::Patient {
            w_patient += w[i];
        }
    }
    // Weighted majority; ties go to the patient class.
    let (label, w_major) = if w_patient >= w_total - w_patient {
        (Label::Patient, w_patient)
    } else {
        (Label::NonPatient, w_total - w_patient)
    };
    TreeNode::Leaf {
        label,
        probability: w_major / w_total,
    }
}

/// Best split of one leaf, or `None` when no candidate has positive gain.
fn best_split(
    indices: &[usize],
    x: &[Vec<f64>],
    y: &[Label],
    w: &[f64],
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let mut w_patient = 0.0;
    let mut w_total = 0.0;
    for &i in indices {
        w_total += w[i];
        if y[i] == Label::Patient {
            w_patient += w[i];
        }
    }
    let parent = w_total * gini_weighted(w_patient, w_total);
    if parent <= 0.0 {
        return None; // pure node
    }

    let dim = x[0].len();
    let mut best: Option<SplitCandidate> = None;
    let mut order: Vec<usize> = indices.to_vec();
    for feature in 0..dim {
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
        let mut left_w = 0.0;
        let mut left_wp = 0.0;
        for (pos, &i) in order.iter().enumerate().take(order.len() - 1) {
            left_w += w[i];
            if y[i] == Label::Patient {
                left_wp += w[i];
            }
            let here = x[i][feature];
            let next = x[order[pos + 1]][feature];
            if here == next {
                continue;
            }
            let left_count = pos + 1;
            if left_count < min_leaf || order.len() - left_count < min_leaf {
                continue;
            }
            let threshold = here + (next - here) / 2.0;
            let right_w = w_total - left_w;
            let right_wp = w_patient - left_wp;
            let gain = parent
                - left_w * gini_weighted(left_wp, left_w)
                - right_w * gini_weighted(right_wp, right_w);
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                // Ascending (feature, threshold) scan: strict improvement
                // keeps the first of any gain tie, i.e. the lowest feature
                // index and threshold.
                best = Some(SplitCandidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

/// Grow a tree on standardized rows, optionally sample-weighted.
pub fn train_tree(
    x: &[Vec<f64>],
    y: &[Label],
    cfg: &TreeConfig,
    sample_weights: Option<&[f64]>,
) -> Result<TreeModel, LearnError> {
    let dim = check_xy(x, y)?;
    let weights: Vec<f64> = match sample_weights {
        Some(w) => {
            // NaN weights fail the finiteness check.
            if w.len() != x.len() || w.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                return Err(LearnError::BadSampleWeights);
            }
            w.to_vec()
        }
        None => vec![1.0; x.len()],
    };
    let min_leaf = cfg.min_leaf.max(1);

    let all: Vec<usize> = (0..x.len()).collect();
    let mut nodes = vec![leaf_record(&all, y, &weights)];
    let mut frontier = vec![GrowLeaf {
        node: 0,
        best: best_split(&all, x, y, &weights, min_leaf),
        indices: all,
        created: 0,
    }];
    let mut created = 1usize;
    let mut splits_used = 0usize;

    while splits_used < cfg.max_splits {
        // Leaf with the greatest positive gain; earliest creation on ties.
        let mut pick: Option<usize> = None;
        for (slot, leaf) in frontier.iter().enumerate() {
            let Some(cand) = leaf.best else { continue };
            let better = match pick {
                None => true,
                Some(p) => {
                    let best = frontier[p].best.unwrap();
                    cand.gain > best.gain
                        || (cand.gain == best.gain && leaf.created < frontier[p].created)
                }
            };
            if better {
                pick = Some(slot);
            }
        }
        let Some(slot) = pick else { break };
        let leaf = frontier.swap_remove(slot);
        let cand = leaf.best.unwrap();

        let (mut left_idx, mut right_idx) = (Vec::new(), Vec::new());
        for &i in &leaf.indices {
            if x[i][cand.feature] < cand.threshold {
                left_idx.push(i);
            } else {
                right_idx.push(i);
            }
        }

        let left_node = nodes.len();
        let right_node = nodes.len() + 1;
        nodes[leaf.node] = TreeNode::Branch {
            feature: cand.feature,
            threshold: cand.threshold,
            left: left_node,
            right: right_node,
        };
        nodes.push(leaf_record(&left_idx, y, &weights));
        nodes.push(leaf_record(&right_idx, y, &weights));
        splits_used += 1;

        for (node, indices) in [(left_node, left_idx), (right_node, right_idx)] {
            frontier.push(GrowLeaf {
                node,
                best: best_split(&indices, x, y, &weights, min_leaf),
                indices,
                created,
            });
            created += 1;
        }
    }

    Ok(TreeModel {
        nodes,
        num_features: dim,
    })
}

/// Route a row to its leaf and return the leaf class.
pub fn predict_tree(model: &TreeModel, x: &[f64]) -> Result<Label, LearnError> {
    if x.len() != model.num_features {
        return Err(LearnError::DimensionMismatch {
            expected: model.num_features,
            got: x.len(),
        });
    }
    match model.descend(x) {
        TreeNode::Leaf { label, .. } => Ok(*label),
        TreeNode::Branch { .. } => unreachable!("descend stops at a leaf"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini_impurity(&[10, 0]).unwrap(), 0.0);
        assert_eq!(gini_impurity(&[5, 5]).unwrap(), 0.5);
        assert_eq!(gini_impurity(&[3, 1]).unwrap(), 0.375);
        assert!(matches!(gini_impurity(&[0, 0]), Err(LearnError::EmptyNode)));
    }

    #[test]
    fn zero_budget_gives_majority_leaf() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![Label::Patient, Label::Patient, Label::NonPatient];
        let cfg = TreeConfig {
            max_splits: 0,
            min_leaf: 1,
        };
        let model = train_tree(&x, &y, &cfg, None).unwrap();
        assert_eq!(model.nodes.len(), 1);
        for xi in &x {
            assert_eq!(predict_tree(&model, xi).unwrap(), Label::Patient);
        }
    }

    #[test]
    fn step_function_needs_one_split() {
        let x: Vec<Vec<f64>> = (-5..5).map(|v| vec![v as f64]).collect();
        let y: Vec<Label> = (-5..5)
            .map(|v| {
                if v < 0 {
                    Label::NonPatient
                } else {
                    Label::Patient
                }
            })
            .collect();
        let model = train_tree(&x, &y, &TreeConfig::default(), None).unwrap();
        assert_eq!(model.num_branches(), 1);
        match &model.nodes[0] {
            TreeNode::Branch { threshold, .. } => {
                assert!((*threshold - (-0.5)).abs() < 1e-15);
            }
            other => panic!("expected branch at root, got {other:?}"),
        }
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(predict_tree(&model, xi).unwrap(), *yi);
        }
    }

    #[test]
    fn value_at_threshold_routes_right() {
        let x = vec![vec![0.0], vec![2.0]];
        let y = vec![Label::NonPatient, Label::Patient];
        let model = train_tree(&x, &y, &TreeConfig::default(), None).unwrap();
        // Threshold is 1.0; a query exactly there takes the right branch.
        assert_eq!(predict_tree(&model, &[1.0]).unwrap(), Label::Patient);
        assert_eq!(
            predict_tree(&model, &[1.0 - 1e-12]).unwrap(),
            Label::NonPatient
        );
    }

    #[test]
    fn budget_is_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|v| vec![v as f64]).collect();
        let y: Vec<Label> = (0..64)
            .map(|v| {
                if v % 2 == 0 {
                    Label::Patient
                } else {
                    Label::NonPatient
                }
            })
            .collect();
        for budget in [0usize, 1, 3, 7] {
            let cfg = TreeConfig {
                max_splits: budget,
                min_leaf: 1,
            };
            let model = train_tree(&x, &y, &cfg, None).unwrap();
            assert!(model.num_branches() <= budget);
        }
    }

    pub(crate) fn random_dataset(seed: u64, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<Label>) {
        let mut state = seed.max(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| next() * 10.0 - 5.0).collect())
            .collect();
        let y: Vec<Label> = x
            .iter()
            .map(|row| {
                let score: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(d, v)| v * (d as f64 + 0.5))
                    .sum();
                if score + (next() - 0.5) * 4.0 > 0.0 {
                    Label::Patient
                } else {
                    Label::NonPatient
                }
            })
            .collect();
        (x, y)
    }

    /// Exhaustive enumeration of every (feature, threshold) candidate.
    pub(crate) fn brute_force_root_split(x: &[Vec<f64>], y: &[Label]) -> Option<(usize, f64, f64)> {
        let n = x.len() as f64;
        let wp = y.iter().filter(|&&l| l == Label::Patient).count() as f64;
        let parent = n * gini_weighted(wp, n);
        let dim = x[0].len();
        let mut best: Option<(usize, f64, f64)> = None;
        for feature in 0..dim {
            let mut values: Vec<f64> = x.iter().map(|r| r[feature]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for pair in values.windows(2) {
                let threshold = pair[0] + (pair[1] - pair[0]) / 2.0;
                let mut lw = 0.0;
                let mut lwp = 0.0;
                for (row, label) in x.iter().zip(y) {
                    if row[feature] < threshold {
                        lw += 1.0;
                        if *label == Label::Patient {
                            lwp += 1.0;
                        }
                    }
                }
                let rw = n - lw;
                let rwp = wp - lwp;
                if lw == 0.0 || rw == 0.0 {
                    continue;
                }
                let gain = parent - lw * gini_weighted(lwp, lw) - rw * gini_weighted(rwp, rw);
                if gain > 0.0 && best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((feature, threshold, gain));
                }
            }
        }
        best
    }

    #[test]
    fn root_split_matches_exhaustive_search() {
        for seed in 1..=20u64 {
            let (x, y) = random_dataset(seed * 7919, 30, 4);
            let Some((bf_feature, bf_threshold, _)) = brute_force_root_split(&x, &y) else {
                continue;
            };
            let cfg = TreeConfig {
                max_splits: 1,
                min_leaf: 1,
            };
            let model = train_tree(&x, &y, &cfg, None).unwrap();
            match &model.nodes[0] {
                TreeNode::Branch {
                    feature, threshold, ..
                } => {
                    assert_eq!(*feature, bf_feature, "seed {seed}");
                    assert!((threshold - bf_threshold).abs() < 1e-12, "seed {seed}");
                }
                other => panic!("seed {seed}: expected branch, got {other:?}"),
            }
        }
    }

    #[test]
    fn prediction_invariant_under_monotone_transforms() {
        let (x, y) = random_dataset(42, 60, 3);
        let cfg = TreeConfig {
            max_splits: 10,
            min_leaf: 1,
        };
        let model = train_tree(&x, &y, &cfg, None).unwrap();

        // Strictly increasing per-feature map; thresholds are recomputed by
        // retraining on the transformed data.
        let transform = |row: &Vec<f64>| -> Vec<f64> {
            row.iter()
                .enumerate()
                .map(|(d, &v)| match d % 3 {
                    0 => v.powi(3),
                    1 => v.exp(),
                    _ => 2.0 * v + 11.0,
                })
                .collect()
        };
        let tx: Vec<Vec<f64>> = x.iter().map(transform).collect();
        let tmodel = train_tree(&tx, &y, &cfg, None).unwrap();

        let (qx, _) = random_dataset(4242, 40, 3);
        for q in &qx {
            let a = predict_tree(&model, q).unwrap();
            let b = predict_tree(&tmodel, &transform(q)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gain_ties_pick_lowest_feature_and_threshold() {
        // Feature 1 duplicates feature 0, so their best splits tie exactly;
        // the root must use feature 0.
        let x: Vec<Vec<f64>> = (0..8).map(|v| vec![v as f64, v as f64, 3.5]).collect();
        let y: Vec<Label> = (0..8)
            .map(|v| {
                if v < 4 {
                    Label::NonPatient
                } else {
                    Label::Patient
                }
            })
            .collect();
        let cfg = TreeConfig {
            max_splits: 1,
            min_leaf: 1,
        };
        let model = train_tree(&x, &y, &cfg, None).unwrap();
        match &model.nodes[0] {
            TreeNode::Branch {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 0);
                assert!((*threshold - 3.5).abs() < 1e-15);
            }
            other => panic!("expected branch, got {other:?}"),
        }
    }

    #[test]
    fn weighted_majority_respects_weights() {
        let x = vec![vec![0.0], vec![0.0], vec![0.0]];
        let y = vec![Label::Patient, Label::NonPatient, Label::NonPatient];
        let w = vec![10.0, 1.0, 1.0];
        let cfg = TreeConfig {
            max_splits: 0,
            min_leaf: 1,
        };
        let model = train_tree(&x, &y, &cfg, Some(&w)).unwrap();
        assert_eq!(predict_tree(&model, &[0.0]).unwrap(), Label::Patient);
    }

    #[test]
    fn bad_weights_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![Label::Patient, Label::NonPatient];
        assert!(matches!(
            train_tree(&x, &y, &TreeConfig::default(), Some(&[1.0])),
            Err(LearnError::BadSampleWeights)
        ));
        assert!(matches!(
            train_tree(&x, &y, &TreeConfig::default(), Some(&[1.0, -1.0])),
            Err(LearnError::BadSampleWeights)
        ));
    }

    #[test]
    fn empty_data_rejected() {
        assert!(matches!(
            train_tree(&[], &[], &TreeConfig::default(), None),
            Err(LearnError::EmptyData)
        ));
    }
}
