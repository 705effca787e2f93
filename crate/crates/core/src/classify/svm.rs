//! Soft-margin SVM trained by sequential minimal optimization.
//!
//! The dual problem
//!
//! ```text
//! min_α  ½ αᵀQα - Σα    subject to  0 ≤ α_i ≤ C,  Σ y_i α_i = 0,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! is solved two coordinates at a time, always picking the maximal violating
//! pair, until the KKT gap `m(α) - M(α)` drops below the tolerance. Inputs are
//! standardized to zero mean and unit variance before training; the stored
//! model applies the same transform at prediction time.

use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::util::dot;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Kernel {
    Linear,
    /// `exp(-gamma |x - z|^2)`; `None` means `1 / num_features`.
    Rbf { gamma: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: Kernel,
    pub c: f64,
    pub tolerance: f64,
    /// Upper bound on SMO pair updates.
    pub max_iterations: usize,
    /// Recorded for reproducibility; the solver itself is deterministic.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Rbf { gamma: None },
            c: 1.0,
            tolerance: 1e-3,
            max_iterations: 1_000_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    kernel: Kernel,
    gamma: f64,
    c: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Standardized support vectors.
    support: Vec<Vec<f64>>,
    /// `α_i y_i` for each support vector.
    coef: Vec<f64>,
    /// Training-row index of each support vector.
    support_indices: Vec<usize>,
    bias: f64,
    iterations: usize,
    kkt_gap: f64,
}

impl SvmModel {
    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn support_indices(&self) -> &[usize] {
        &self.support_indices
    }

    /// Dual coefficients `α_i` of the support vectors.
    pub fn alphas(&self) -> Vec<f64> {
        self.coef.iter().map(|c| c.abs()).collect()
    }

    /// `α_i` for every training row, zero for non-support rows.
    pub fn dual_coefficients(&self, n_train: usize) -> Vec<f64> {
        let mut a = vec![0.0; n_train];
        for (&i, c) in self.support_indices.iter().zip(&self.coef) {
            a[i] = c.abs();
        }
        a
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Maximal KKT violation `m(α) - M(α)` at the end of training.
    pub fn kkt_gap(&self) -> f64 {
        self.kkt_gap
    }

    /// Signed distance-like margin `Σ α_i y_i K(s_i, x) + b`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let z = standardize(x, &self.mean, &self.scale);
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * kernel_value(self.kernel, self.gamma, s, &z))
            .sum::<f64>()
            + self.bias
    }
}

fn standardize(x: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(mean)
        .zip(scale)
        .map(|((v, m), s)| (v - m) / s)
        .collect()
}

fn kernel_value(kernel: Kernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kernel {
        Kernel::Linear => dot(a, b),
        Kernel::Rbf { .. } => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-gamma * d2).exp()
        }
    }
}

pub fn train_svm(x: &[Vec<f64>], y: &[bool], config: &SvmConfig) -> Result<SvmModel, ClassifyError> {
    super::check_training_data(x, y)?;
    if !(config.c > 0.0 && config.tolerance > 0.0) {
        return Err(ClassifyError::Config("C and tolerance must be positive".into()));
    }
    let n = x.len();
    let d = x[0].len();
    let gamma = match config.kernel {
        Kernel::Rbf { gamma: Some(g) } if g > 0.0 => g,
        Kernel::Rbf { gamma: Some(g) } => {
            return Err(ClassifyError::Config(format!("gamma must be positive, got {g}")))
        }
        _ => 1.0 / d.max(1) as f64,
    };

    let mean: Vec<f64> = (0..d).map(|f| x.iter().map(|r| r[f]).sum::<f64>() / n as f64).collect();
    let scale: Vec<f64> = (0..d)
        .map(|f| {
            let var = x.iter().map(|r| (r[f] - mean[f]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = x.iter().map(|r| standardize(r, &mean, &scale)).collect();
    let ys: Vec<f64> = y.iter().map(|&t| if t { 1.0 } else { -1.0 }).collect();

    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| ys[i] * ys[j] * kernel_value(config.kernel, gamma, &z[i], &z[j]))
                .collect()
        })
        .collect();

    let c = config.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let converged = loop {
        let (i, j, gap) = select_pair(&alpha, &grad, &ys, c);
        if gap < config.tolerance {
            break true;
        }
        if iterations >= config.max_iterations {
            break false;
        }
        iterations += 1;
        let (i, j) = (i.expect("gap is finite"), j.expect("gap is finite"));
        let (old_i, old_j) = (alpha[i], alpha[j]);
        update_pair(&mut alpha, &grad, &q, &ys, i, j, c);
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q[t][i] * di + q[t][j] * dj;
        }
    };

    let (_, _, gap) = select_pair(&alpha, &grad, &ys, c);
    let rho = compute_rho(&alpha, &grad, &ys, c);
    let mut model = SvmModel {
        kernel: config.kernel,
        gamma,
        c,
        mean,
        scale,
        support: Vec::new(),
        coef: Vec::new(),
        support_indices: Vec::new(),
        bias: -rho,
        iterations,
        kkt_gap: gap,
    };
    for (i, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            model.support.push(z[i].clone());
            model.coef.push(a * ys[i]);
            model.support_indices.push(i);
        }
    }
    if converged {
        Ok(model)
    } else {
        Err(ClassifyError::NotConverged {
            gap,
            model: Box::new(model),
        })
    }
}

/// Maximal violating pair and the current KKT gap.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> (Option<usize>, Option<usize>, f64) {
    let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut i, mut j) = (None, None);
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
        let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
        if up && v > gmax {
            gmax = v;
            i = Some(t);
        }
        if low && v < gmin {
            gmin = v;
            j = Some(t);
        }
    }
    (i, j, gmax - gmin)
}

fn update_pair(alpha: &mut [f64], grad: &[f64], q: &[Vec<f64>], y: &[f64], i: usize, j: usize, c: f64) {
    if y[i] != y[j] {
        let quad = (q[i][i] + q[j][j] + 2.0 * q[i][j]).max(TAU);
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = alpha[i] - alpha[j];
        alpha[i] += delta;
        alpha[j] += delta;
        if diff > 0.0 {
            if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = -diff;
        }
        if diff > 0.0 {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = c - diff;
            }
        } else if alpha[j] > c {
            alpha[j] = c;
            alpha[i] = c + diff;
        }
    } else {
        let quad = (q[i][i] + q[j][j] - 2.0 * q[i][j]).max(TAU);
        let delta = (grad[i] - grad[j]) / quad;
        let sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if sum > c {
            if alpha[i] > c {
                alpha[i] = c;
                alpha[j] = sum - c;
            }
        } else if alpha[j] < 0.0 {
            alpha[j] = 0.0;
            alpha[i] = sum;
        }
        if sum > c {
            if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = sum - c;
            }
        } else if alpha[i] < 0.0 {
            alpha[i] = 0.0;
            alpha[j] = sum;
        }
    }
}

/// Offset `ρ` with decision `f(x) = Σ α_i y_i K(x_i, x) - ρ`: the mean of
/// `y_i ∇_i` over free vectors, or the midpoint of the feasible range.
fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clusters() -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.05;
            x.push(vec![-3.0 + t, -3.0 + 0.5 * t]);
            y.push(false);
            x.push(vec![3.0 - t, 3.0 - 0.5 * t]);
            y.push(true);
        }
        (x, y)
    }

    #[test]
    fn separated_clusters() {
        let (x, y) = clusters();
        for kernel in [Kernel::Linear, Kernel::Rbf { gamma: None }] {
            let m = train_svm(&x, &y, &SvmConfig { kernel, ..Default::default() }).unwrap();
            assert!(m.margin(&[-2.5, -2.8]) < 0.0);
            assert!(m.margin(&[2.9, 2.5]) > 0.0);
            assert!(m.alphas().iter().all(|&a| a > 0.0 && a <= m.c()));
        }
    }

    #[test]
    fn xor_linear_is_at_most_three_quarters() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = vec![false, false, true, true];
        let cfg = SvmConfig { kernel: Kernel::Linear, ..Default::default() };
        let m = train_svm(&x, &y, &cfg).unwrap();
        let correct = x.iter().zip(&y).filter(|(r, &t)| (m.margin(r) > 0.0) == t).count();
        assert!(correct <= 3);
    }

    #[test]
    fn iteration_cap_returns_best_so_far() {
        let (x, y) = clusters();
        let cfg = SvmConfig { max_iterations: 1, tolerance: 1e-12, ..Default::default() };
        match train_svm(&x, &y, &cfg) {
            Err(ClassifyError::NotConverged { model, gap }) => {
                assert_eq!(model.iterations(), 1);
                assert!(gap >= 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_feature_is_harmless() {
        let (x, y) = clusters();
        let x: Vec<Vec<f64>> = x.into_iter().map(|mut r| {
            r.push(7.0);
            r
        }).collect();
        let m = train_svm(&x, &y, &SvmConfig::default()).unwrap();
        assert!(m.margin(&[3.0, 3.0, 7.0]) > 0.0);
    }
}
