//! Tree ensembles: bootstrap aggregation and AdaBoost.M1.
//!
//! Bagging draws each member's bootstrap from its own ChaCha stream derived
//! from `(seed, member)`, so parallel and serial training produce identical
//! ensembles. AdaBoost.M1 reweights samples deterministically: correctly
//! classified weights shrink by `beta = eps / (1 - eps)` each round and
//! members vote with weight `ln(1 / beta)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{predict_tree, train_tree, TreeConfig, TreeModel};
use super::{check_xy, LearnError};
use crate::corpus::Label;

/// Floor on `beta` when a round classifies every sample correctly.
const BETA_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaggingConfig {
    pub n_learners: usize,
    pub tree: TreeConfig,
}

impl Default for BaggingConfig {
    fn default() -> Self {
        BaggingConfig {
            n_learners: 100,
            tree: TreeConfig {
                max_splits: 3715,
                min_leaf: 1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaBoostConfig {
    pub rounds: usize,
    pub tree: TreeConfig,
}

impl Default for AdaBoostConfig {
    fn default() -> Self {
        AdaBoostConfig {
            rounds: 100,
            tree: TreeConfig {
                max_splits: 20,
                min_leaf: 1,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Bagging,
    AdaBoostM1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub kind: EnsembleKind,
    pub members: Vec<TreeModel>,
    /// All 1 for bagging; `ln(1 / beta_t)` for AdaBoost.M1.
    pub member_weights: Vec<f64>,
    pub rng_seed: u64,
    /// Vote tie-break: the class with the higher training prior (patient
    /// when the priors tie too).
    pub tie_break: Label,
    pub num_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsemblePrediction {
    pub label: Label,
    /// `(winner - runner_up) / sum(weights)`.
    pub vote_margin: f64,
}

/// Per-round diagnostics from the traced AdaBoost trainer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaBoostRound {
    pub epsilon: f64,
    pub beta: f64,
    /// Sum of sample weights after renormalization.
    pub weight_sum: f64,
    pub accepted: bool,
}

fn training_prior_majority(y: &[Label]) -> Label {
    let patients = y.iter().filter(|&&l| l == Label::Patient).count();
    if 2 * patients >= y.len() {
        Label::Patient
    } else {
        Label::NonPatient
    }
}

/// The bootstrap of member `member`: `n` draws with replacement from `0..n`,
/// taken from a stream derived by counter-based splitting of `seed`.
pub fn bootstrap_indices(seed: u64, member: u64, n: usize) -> Vec<usize> {
    let stream = seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(member.wrapping_mul(0xD1B54A32D192ED03));
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Fit `n_learners` unweighted trees on bootstrap resamples.
pub fn train_bagging(
    x: &[Vec<f64>],
    y: &[Label],
    cfg: &BaggingConfig,
    seed: u64,
) -> Result<EnsembleModel, LearnError> {
    let dim = check_xy(x, y)?;
    if cfg.n_learners == 0 {
        return Err(LearnError::InvalidConfig(
            "bagging needs at least one learner".to_string(),
        ));
    }
    let n = x.len();
    let mut members = Vec::with_capacity(cfg.n_learners);
    for t in 0..cfg.n_learners {
        let indices = bootstrap_indices(seed, t as u64 + 1, n);
        let bx: Vec<Vec<f64>> = indices.iter().map(|&i| x[i].clone()).collect();
        let by: Vec<Label> = indices.iter().map(|&i| y[i]).collect();
        members.push(train_tree(&bx, &by, &cfg.tree, None)?);
    }
    Ok(EnsembleModel {
        kind: EnsembleKind::Bagging,
        member_weights: vec![1.0; members.len()],
        members,
        rng_seed: seed,
        tie_break: training_prior_majority(y),
        num_features: dim,
    })
}

/// `beta = eps / (1 - eps)` (floored) and the member weight `ln(1 / beta)`.
pub fn stage_weight(epsilon: f64) -> (f64, f64) {
    let beta = (epsilon / (1.0 - epsilon)).max(BETA_FLOOR);
    (beta, (1.0 / beta).ln())
}

/// Boost weighted trees; stops early when a round reaches weighted error 0
/// (member kept with the floored beta) or >= 0.5 (member discarded).
pub fn train_adaboost_m1(
    x: &[Vec<f64>],
    y: &[Label],
    cfg: &AdaBoostConfig,
) -> Result<EnsembleModel, LearnError> {
    Ok(train_adaboost_m1_traced(x, y, cfg)?.0)
}

/// [`train_adaboost_m1`] plus the per-round error/weight trace.
pub fn train_adaboost_m1_traced(
    x: &[Vec<f64>],
    y: &[Label],
    cfg: &AdaBoostConfig,
) -> Result<(EnsembleModel, Vec<AdaBoostRound>), LearnError> {
    let dim = check_xy(x, y)?;
    if cfg.rounds == 0 {
        return Err(LearnError::InvalidConfig(
            "boosting needs at least one round".to_string(),
        ));
    }
    if y.iter().all(|&l| l == y[0]) {
        return Err(LearnError::SingleClassData);
    }

    let n = x.len();
    let mut weights = vec![1.0 / n as f64; n];
    let mut members = Vec::new();
    let mut member_weights = Vec::new();
    let mut rounds = Vec::new();

    for _ in 0..cfg.rounds {
        let tree = train_tree(x, y, &cfg.tree, Some(&weights))?;
        let misclassified: Vec<bool> = x
            .iter()
            .zip(y)
            .map(|(xi, &yi)| predict_tree(&tree, xi).expect("dims checked") != yi)
            .collect();
        let epsilon: f64 = weights
            .iter()
            .zip(&misclassified)
            .filter(|(_, &m)| m)
            .map(|(&w, _)| w)
            .sum();

        if epsilon >= 0.5 {
            rounds.push(AdaBoostRound {
                epsilon,
                beta: f64::NAN,
                weight_sum: weights.iter().sum(),
                accepted: false,
            });
            break;
        }

        let (beta, member_weight) = stage_weight(epsilon);
        members.push(tree);
        member_weights.push(member_weight);

        if epsilon == 0.0 {
            rounds.push(AdaBoostRound {
                epsilon,
                beta,
                weight_sum: weights.iter().sum(),
                accepted: true,
            });
            break;
        }

        for (w, &miss) in weights.iter_mut().zip(&misclassified) {
            if !miss {
                *w *= beta;
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        rounds.push(AdaBoostRound {
            epsilon,
            beta,
            weight_sum: weights.iter().sum(),
            accepted: true,
        });
    }

    if members.is_empty() {
        return Err(LearnError::BoostingStalled);
    }

    Ok((
        EnsembleModel {
            kind: EnsembleKind::AdaBoostM1,
            members,
            member_weights,
            rng_seed: 0,
            tie_break: training_prior_majority(y),
            num_features: dim,
        },
        rounds,
    ))
}

/// Weighted majority vote.
pub fn predict_ensemble(
    model: &EnsembleModel,
    x: &[f64],
) -> Result<EnsemblePrediction, LearnError> {
    if x.len() != model.num_features {
        return Err(LearnError::DimensionMismatch {
            expected: model.num_features,
            got: x.len(),
        });
    }
    let mut patient_votes = 0.0;
    let mut nonpatient_votes = 0.0;
    for (tree, &w) in model.members.iter().zip(&model.member_weights) {
        match predict_tree(tree, x)? {
            Label::Patient => patient_votes += w,
            Label::NonPatient => nonpatient_votes += w,
        }
    }
    let total = patient_votes + nonpatient_votes;
    let label = if patient_votes > nonpatient_votes {
        Label::Patient
    } else if nonpatient_votes > patient_votes {
        Label::NonPatient
    } else {
        model.tie_break
    };
    Ok(EnsemblePrediction {
        label,
        vote_margin: (patient_votes - nonpatient_votes).abs() / total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_data(n_per: usize, spread: f64) -> (Vec<Vec<f64>>, Vec<Label>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut state = 7u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 2.0 * spread
        };
        for i in 0..n_per {
            let _ = i;
            x.push(vec![1.0 + next(), 1.0 + next()]);
            y.push(Label::Patient);
            x.push(vec![-1.0 + next(), -1.0 + next()]);
            y.push(Label::NonPatient);
        }
        (x, y)
    }

    fn two_blob_data(n_per: usize) -> (Vec<Vec<f64>>, Vec<Label>) {
        blob_data(n_per, 0.5)
    }

    #[test]
    fn bagging_same_seed_is_bit_identical() {
        let (x, y) = two_blob_data(20);
        let cfg = BaggingConfig {
            n_learners: 8,
            tree: TreeConfig {
                max_splits: 5,
                min_leaf: 1,
            },
        };
        let a = train_bagging(&x, &y, &cfg, 61080).unwrap();
        let b = train_bagging(&x, &y, &cfg, 61080).unwrap();
        assert_eq!(a, b);
        let c = train_bagging(&x, &y, &cfg, 61081).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bootstrap_unique_fraction_near_632() {
        // E[unique fraction] = 1 - 1/e for draws with replacement.
        let n = 1000usize;
        let mut total = 0.0;
        for draw in 0..100u64 {
            let indices = bootstrap_indices(99, draw, n);
            let mut seen = vec![false; n];
            for &i in &indices {
                seen[i] = true;
            }
            total += seen.iter().filter(|&&s| s).count() as f64 / n as f64;
        }
        let mean = total / 100.0;
        assert!((mean - 0.632).abs() <= 0.03, "mean unique fraction {mean}");
    }

    #[test]
    fn bagging_improves_on_noisy_data() {
        // Overlapping classes, so a single bootstrap tree mislabels some of
        // its out-of-bag rows and aggregation has something to win.
        let (x, y) = blob_data(40, 1.6);
        let tree_cfg = TreeConfig {
            max_splits: 40,
            min_leaf: 1,
        };
        let single = train_bagging(
            &x,
            &y,
            &BaggingConfig {
                n_learners: 1,
                tree: tree_cfg.clone(),
            },
            5,
        )
        .unwrap();
        let many = train_bagging(
            &x,
            &y,
            &BaggingConfig {
                n_learners: 25,
                tree: tree_cfg,
            },
            5,
        )
        .unwrap();
        let accuracy = |m: &EnsembleModel| {
            x.iter()
                .zip(&y)
                .filter(|(xi, yi)| predict_ensemble(m, xi).unwrap().label == **yi)
                .count() as f64
                / x.len() as f64
        };
        assert!(accuracy(&many) >= accuracy(&single));
    }

    #[test]
    fn adaboost_first_round_weights_uniform() {
        // The first fitted tree sees uniform weights by construction; check
        // via the traced epsilon of a stump on a known split.
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![
            Label::NonPatient,
            Label::NonPatient,
            Label::Patient,
            Label::Patient,
        ];
        let cfg = AdaBoostConfig {
            rounds: 1,
            tree: TreeConfig {
                max_splits: 1,
                min_leaf: 1,
            },
        };
        let (_, rounds) = train_adaboost_m1_traced(&x, &y, &cfg).unwrap();
        assert_eq!(rounds.len(), 1);
        // Separable: first round is perfect under uniform 1/n weights.
        assert_eq!(rounds[0].epsilon, 0.0);
    }

    #[test]
    fn stage_weight_formula() {
        let (beta, w) = stage_weight(0.3);
        assert!((beta - 3.0 / 7.0).abs() < 1e-15);
        assert!((w - (7.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn weights_renormalize_every_round() {
        let (x, y) = two_blob_data(30);
        // Weak stumps so boosting runs many rounds.
        let cfg = AdaBoostConfig {
            rounds: 30,
            tree: TreeConfig {
                max_splits: 1,
                min_leaf: 1,
            },
        };
        let (model, rounds) = train_adaboost_m1_traced(&x, &y, &cfg).unwrap();
        assert!(!model.members.is_empty());
        for (t, round) in rounds.iter().enumerate() {
            if round.accepted && round.epsilon > 0.0 {
                assert!(
                    (round.weight_sum - 1.0).abs() <= 1e-12,
                    "round {t}: weight sum {}",
                    round.weight_sum
                );
            }
            if round.accepted {
                assert!(round.epsilon < 0.5);
            }
        }
        for &w in &model.member_weights {
            assert!(w > 0.0);
        }
    }

    #[test]
    fn adaboost_training_error_bound() {
        // Classical bound: weighted-vote training error
        // <= prod_t 2 sqrt(eps_t (1 - eps_t)).
        let (x, y) = two_blob_data(30);
        let cfg = AdaBoostConfig {
            rounds: 20,
            tree: TreeConfig {
                max_splits: 1,
                min_leaf: 1,
            },
        };
        let (model, rounds) = train_adaboost_m1_traced(&x, &y, &cfg).unwrap();
        let bound: f64 = rounds
            .iter()
            .filter(|r| r.accepted)
            .map(|r| 2.0 * (r.epsilon * (1.0 - r.epsilon)).sqrt())
            .product();
        let errors = x
            .iter()
            .zip(&y)
            .filter(|(xi, yi)| predict_ensemble(&model, xi).unwrap().label != **yi)
            .count() as f64
            / x.len() as f64;
        assert!(errors <= bound + 1e-12, "error {errors} > bound {bound}");
    }

    #[test]
    fn ensemble_vote_margins() {
        let leaf = |label: Label| TreeModel {
            nodes: vec![super::super::tree::TreeNode::Leaf {
                label,
                probability: 1.0,
            }],
            num_features: 1,
        };
        // Bagging-style: P, P, N with unit weights.
        let model = EnsembleModel {
            kind: EnsembleKind::Bagging,
            members: vec![
                leaf(Label::Patient),
                leaf(Label::Patient),
                leaf(Label::NonPatient),
            ],
            member_weights: vec![1.0, 1.0, 1.0],
            rng_seed: 0,
            tie_break: Label::Patient,
            num_features: 1,
        };
        let p = predict_ensemble(&model, &[0.0]).unwrap();
        assert_eq!(p.label, Label::Patient);
        assert!((p.vote_margin - 1.0 / 3.0).abs() < 1e-15);

        // Weighted: P(2.0) vs N(0.5), N(0.5).
        let model = EnsembleModel {
            member_weights: vec![2.0, 0.5, 0.5],
            members: vec![
                leaf(Label::Patient),
                leaf(Label::NonPatient),
                leaf(Label::NonPatient),
            ],
            ..model
        };
        let p = predict_ensemble(&model, &[0.0]).unwrap();
        assert_eq!(p.label, Label::Patient);
        assert!((p.vote_margin - 1.0 / 3.0).abs() < 1e-15);

        // Unanimous vote: margin 1.
        let model = EnsembleModel {
            member_weights: vec![1.0, 1.0, 1.0],
            members: vec![
                leaf(Label::Patient),
                leaf(Label::Patient),
                leaf(Label::Patient),
            ],
            ..model
        };
        let p = predict_ensemble(&model, &[0.0]).unwrap();
        assert_eq!(p.label, Label::Patient);
        assert_eq!(p.vote_margin, 1.0);
    }

    #[test]
    fn vote_tie_uses_training_prior() {
        let leaf = |label: Label| TreeModel {
            nodes: vec![super::super::tree::TreeNode::Leaf {
                label,
                probability: 1.0,
            }],
            num_features: 1,
        };
        let model = EnsembleModel {
            kind: EnsembleKind::Bagging,
            members: vec![leaf(Label::Patient), leaf(Label::NonPatient)],
            member_weights: vec![1.0, 1.0],
            rng_seed: 0,
            tie_break: Label::NonPatient,
            num_features: 1,
        };
        let p = predict_ensemble(&model, &[0.0]).unwrap();
        assert_eq!(p.label, Label::NonPatient);
        assert_eq!(p.vote_margin, 0.0);
    }

    #[test]
    fn empty_data_rejected() {
        assert!(matches!(
            train_bagging(&[], &[], &BaggingConfig::default(), 0),
            Err(LearnError::EmptyData)
        ));
        assert!(matches!(
            train_adaboost_m1(&[], &[], &AdaBoostConfig::default()),
            Err(LearnError::EmptyData)
        ));
    }
}
