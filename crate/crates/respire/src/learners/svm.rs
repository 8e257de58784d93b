//! Soft-margin SVM with an RBF kernel, trained by sequential pairwise
//! optimization of the dual.
//!
//! The solver is fully deterministic: the first multiplier is chosen by
//! scanning KKT violators in index order, the second by the largest error
//! difference with ties to the lowest index. Termination is a full pass with
//! no updates (every sample then satisfies the KKT conditions within
//! `kkt_tolerance`) or the iteration cap, which is reported.

use serde::{Deserialize, Serialize};

use super::{check_xy, label_sign, LearnError};
use crate::corpus::Label;

/// Relative threshold below which a pair step is considered no progress.
const STEP_EPS: f64 = 1e-10;
/// Multipliers closer than this to a bound are snapped onto it.
const BOUND_EPS: f64 = 1e-12;
/// Multipliers below this are dropped from the model.
const SV_KEEP_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Soft-margin regularization.
    pub c: f64,
    /// RBF width; gamma = 1 / (2 * sigma^2).
    pub sigma: f64,
    /// KKT tolerance used as the stopping criterion.
    pub kkt_tolerance: f64,
    /// Cap on full sweeps over the training set.
    pub max_passes: usize,
    /// Cap on accepted pair updates; `None` means `10 * n_samples`.
    pub max_iterations: Option<usize>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            sigma: 1.0,
            kkt_tolerance: 1e-3,
            max_passes: 50,
            max_iterations: None,
        }
    }
}

/// Gaussian kernel `exp(-||x - y||^2 / (2 sigma^2))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64, LearnError> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(LearnError::InvalidSigma(sigma));
    }
    if x.len() != y.len() {
        return Err(LearnError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let sq_dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-sq_dist / (2.0 * sigma * sigma)).exp())
}

/// Trained SVM: retained support vectors with coefficients `alpha_i * y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub sigma: f64,
    pub num_features: usize,
}

/// How training terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SvmTrainReport {
    /// True when a full sweep found every sample KKT-feasible within
    /// tolerance; false when an iteration or pass cap stopped the solver.
    pub converged: bool,
    /// Accepted pair updates.
    pub iterations: usize,
    /// Full sweeps over the data.
    pub passes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmPrediction {
    pub label: Label,
    pub decision_value: f64,
}

/// Decision value of a trained model at `x`.
pub fn predict_svm(model: &SvmModel, x: &[f64]) -> Result<SvmPrediction, LearnError> {
    if x.len() != model.num_features {
        return Err(LearnError::DimensionMismatch {
            expected: model.num_features,
            got: x.len(),
        });
    }
    let mut decision = model.bias;
    for (sv, &coef) in model.support_vectors.iter().zip(&model.dual_coefs) {
        decision += coef * rbf_kernel(sv, x, model.sigma)?;
    }
    Ok(SvmPrediction {
        // Ties at exactly zero go to the patient class.
        label: if decision >= 0.0 {
            Label::Patient
        } else {
            Label::NonPatient
        },
        decision_value: decision,
    })
}

/// Train on standardized rows; labels map Patient -> +1, NonPatient -> -1.
pub fn train_svm(
    x: &[Vec<f64>],
    y: &[Label],
    cfg: &SvmConfig,
) -> Result<(SvmModel, SvmTrainReport), LearnError> {
    let (model, report, _) = solve(x, y, cfg, false)?;
    Ok((model, report))
}

/// Like [`train_svm`] but also records the dual objective after every
/// accepted pair update (intended for small diagnostic problems: each
/// objective evaluation is quadratic in the sample count).
pub fn train_svm_traced(
    x: &[Vec<f64>],
    y: &[Label],
    cfg: &SvmConfig,
) -> Result<(SvmModel, SvmTrainReport, Vec<f64>), LearnError> {
    solve(x, y, cfg, true)
}

struct Solver<'a> {
    kernel: Vec<f64>,
    n: usize,
    y: Vec<f64>,
    alpha: Vec<f64>,
    error: Vec<f64>,
    bias: f64,
    cfg: &'a SvmConfig,
    updates: usize,
    trace: Option<Vec<f64>>,
}

fn solve(
    x: &[Vec<f64>],
    y: &[Label],
    cfg: &SvmConfig,
    traced: bool,
) -> Result<(SvmModel, SvmTrainReport, Vec<f64>), LearnError> {
    if cfg.c <= 0.0 || !cfg.c.is_finite() {
        return Err(LearnError::InvalidConfig(format!(
            "C must be positive, got {}",
            cfg.c
        )));
    }
    let dim = check_xy(x, y)?;
    let signs: Vec<f64> = y.iter().map(|&l| label_sign(l)).collect();
    if signs.iter().all(|&s| s > 0.0) || signs.iter().all(|&s| s < 0.0) {
        return Err(LearnError::SingleClassData);
    }

    let n = x.len();
    // Dense per-training-run kernel matrix.
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = rbf_kernel(&x[i], &x[j], cfg.sigma)?;
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }

    let mut solver = Solver {
        kernel,
        n,
        error: signs.iter().map(|&s| -s).collect(),
        y: signs,
        alpha: vec![0.0; n],
        bias: 0.0,
        cfg,
        updates: 0,
        trace: traced.then(Vec::new),
    };

    let max_iterations = cfg.max_iterations.unwrap_or(10 * n);
    let mut examine_all = true;
    let mut passes = 0usize;
    let converged;
    loop {
        let mut changed = 0usize;
        for i in 0..n {
            if !examine_all && !solver.is_unbound(i) {
                continue;
            }
            if solver.updates >= max_iterations {
                break;
            }
            if solver.examine(i) {
                changed += 1;
            }
        }
        passes += 1;
        if solver.updates >= max_iterations || passes >= cfg.max_passes {
            converged = examine_all && changed == 0;
            break;
        }
        if examine_all {
            if changed == 0 {
                converged = true;
                break;
            }
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
    }

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for (i, row) in x.iter().enumerate() {
        if solver.alpha[i] >= SV_KEEP_THRESHOLD {
            support_vectors.push(row.clone());
            dual_coefs.push(solver.alpha[i] * solver.y[i]);
        }
    }

    let report = SvmTrainReport {
        converged,
        iterations: solver.updates,
        passes,
    };
    let trace = solver.trace.take().unwrap_or_default();
    Ok((
        SvmModel {
            support_vectors,
            dual_coefs,
            bias: solver.bias,
            sigma: cfg.sigma,
            num_features: dim,
        },
        report,
        trace,
    ))
}

impl Solver<'_> {
    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.n + j]
    }

    fn is_unbound(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.cfg.c
    }

    fn violates_kkt(&self, i: usize) -> bool {
        let r = self.error[i] * self.y[i];
        let tol = self.cfg.kkt_tolerance;
        (r < -tol && self.alpha[i] < self.cfg.c) || (r > tol && self.alpha[i] > 0.0)
    }

    fn examine(&mut self, i: usize) -> bool {
        if !self.violates_kkt(i) {
            return false;
        }
        // Second-choice heuristic: largest |E_i - E_j| over unbound
        // multipliers, lowest index on ties.
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n {
            if j == i || !self.is_unbound(j) {
                continue;
            }
            let gap = (self.error[i] - self.error[j]).abs();
            if best.is_none_or(|(_, g)| gap > g) {
                best = Some((j, gap));
            }
        }
        if let Some((j, _)) = best {
            if self.take_step(i, j) {
                return true;
            }
        }
        for j in 0..self.n {
            if j != i && self.is_unbound(j) && self.take_step(i, j) {
                return true;
            }
        }
        for j in 0..self.n {
            if j != i && self.take_step(i, j) {
                return true;
            }
        }
        false
    }

    fn take_step(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (a_i, a_j) = (self.alpha[i], self.alpha[j]);
        let (y_i, y_j) = (self.y[i], self.y[j]);
        let (e_i, e_j) = (self.error[i], self.error[j]);
        let s = y_i * y_j;
        let c = self.cfg.c;

        let (lo, hi) = if (y_i - y_j).abs() > f64::EPSILON {
            ((a_j - a_i).max(0.0), (c + a_j - a_i).min(c))
        } else {
            ((a_i + a_j - c).max(0.0), (a_i + a_j).min(c))
        };
        if hi - lo <= f64::EPSILON {
            return false;
        }

        let k_ii = self.k(i, i);
        let k_jj = self.k(j, j);
        let k_ij = self.k(i, j);
        let eta = k_ii + k_jj - 2.0 * k_ij;

        let mut a_j_new = if eta > 0.0 {
            (a_j + y_j * (e_i - e_j) / eta).clamp(lo, hi)
        } else {
            // Degenerate curvature (duplicate points): evaluate the
            // objective at both clip ends and move to the better one.
            let f_i = y_i * e_i - a_i * k_ii - s * a_j * k_ij;
            let f_j = y_j * e_j - s * a_i * k_ij - a_j * k_jj;
            let l_i = a_i + s * (a_j - lo);
            let h_i = a_i + s * (a_j - hi);
            let psi_lo = l_i * f_i
                + lo * f_j
                + 0.5 * l_i * l_i * k_ii
                + 0.5 * lo * lo * k_jj
                + s * lo * l_i * k_ij;
            let psi_hi = h_i * f_i
                + hi * f_j
                + 0.5 * h_i * h_i * k_ii
                + 0.5 * hi * hi * k_jj
                + s * hi * h_i * k_ij;
            if psi_lo < psi_hi - STEP_EPS {
                lo
            } else if psi_lo > psi_hi + STEP_EPS {
                hi
            } else {
                return false;
            }
        };
        if (a_j_new - a_j).abs() < STEP_EPS * (a_j_new + a_j + STEP_EPS) {
            return false;
        }
        if a_j_new < BOUND_EPS {
            a_j_new = 0.0;
        } else if a_j_new > c - BOUND_EPS {
            a_j_new = c;
        }

        let a_i_new = a_i + s * (a_j - a_j_new);
        let delta_i = a_i_new - a_i;
        let delta_j = a_j_new - a_j;

        // Bias keeping the updated pair on the margin when unbound.
        let b1 = self.bias - e_i - y_i * delta_i * k_ii - y_j * delta_j * k_ij;
        let b2 = self.bias - e_j - y_i * delta_i * k_ij - y_j * delta_j * k_jj;
        let new_bias = if a_i_new > 0.0 && a_i_new < c {
            b1
        } else if a_j_new > 0.0 && a_j_new < c {
            b2
        } else {
            (b1 + b2) / 2.0
        };
        let delta_b = new_bias - self.bias;

        self.alpha[i] = a_i_new;
        self.alpha[j] = a_j_new;
        self.bias = new_bias;
        for k in 0..self.n {
            self.error[k] += y_i * delta_i * self.k(i, k) + y_j * delta_j * self.k(j, k) + delta_b;
        }
        self.updates += 1;
        if self.trace.is_some() {
            let objective = self.dual_objective();
            if let Some(trace) = self.trace.as_mut() {
                trace.push(objective);
            }
        }
        true
    }

    /// Dual objective `sum(alpha) - 1/2 * sum_ij alpha_i alpha_j y_i y_j K_ij`.
    fn dual_objective(&self) -> f64 {
        let mut linear = 0.0;
        let mut quad = 0.0;
        for i in 0..self.n {
            if self.alpha[i] == 0.0 {
                continue;
            }
            linear += self.alpha[i];
            for j in 0..self.n {
                if self.alpha[j] != 0.0 {
                    quad += self.alpha[i] * self.alpha[j] * self.y[i] * self.y[j] * self.k(i, j);
                }
            }
        }
        linear - 0.5 * quad
    }
}
