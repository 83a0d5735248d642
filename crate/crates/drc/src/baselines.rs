//! Baseline methods: dynamic Borda count over a time neighborhood, and a
//! kernel-smoothed maximum-likelihood estimator for latent scores.

use nalgebra::DMatrix;

use crate::error::{DrcError, Result};
use crate::graph::neighborhood;
use crate::model::{ranking_of, ComparisonDataset, StrengthEstimate};

/// Borda win rates at a query time, with the induced ranking and the items
/// that had no comparisons in the window (their score is 0).
#[derive(Debug, Clone, PartialEq)]
pub struct BordaScores {
    pub t: f64,
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
    pub uncompared: Vec<usize>,
}

/// Win rate per item over the neighborhood: total wins / total comparisons,
/// counted from the exact integer outcome records.
pub fn borda_scores(ds: &ComparisonDataset, t: f64, delta: f64) -> Result<BordaScores> {
    let view = neighborhood(ds, t, delta)?;
    let n = ds.n();
    let mut wins = vec![0u64; n];
    let mut appearances = vec![0u64; n];
    for &t_idx in &view.times {
        for ((i, j), outcome) in ds.edges_at(t_idx) {
            wins[j] += u64::from(outcome.wins);
            wins[i] += u64::from(outcome.trials - outcome.wins);
            appearances[i] += u64::from(outcome.trials);
            appearances[j] += u64::from(outcome.trials);
        }
    }
    let mut uncompared = Vec::new();
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            if appearances[i] == 0 {
                uncompared.push(i);
                0.0
            } else {
                wins[i] as f64 / appearances[i] as f64
            }
        })
        .collect();
    let ranking = ranking_of(&scores);
    Ok(BordaScores {
        t,
        scores,
        ranking,
        uncompared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Boxcar,
    Epanechnikov,
}

/// Kernel-smoothed win counts at a query time: entry (i, j) is the smoothed
/// number of times i beat j.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCounts {
    pub t: f64,
    pub counts: DMatrix<f64>,
    pub bandwidth: f64,
    pub kernel: Kernel,
}

fn kernel_weight(kernel: Kernel, t: f64, t_prime: f64, h: f64) -> f64 {
    let u = (t - t_prime) / h;
    match kernel {
        Kernel::Boxcar => {
            if u.abs() <= 1.0 + 1e-12 {
                1.0
            } else {
                0.0
            }
        }
        Kernel::Epanechnikov => (0.75 * (1.0 - u * u) / h).max(0.0),
    }
}

/// Smooth the per-time win-count matrices over the grid with the given
/// kernel and bandwidth (in the units of t, i.e. h = delta / T matches a
/// neighborhood of radius delta).
pub fn smooth_counts(
    ds: &ComparisonDataset,
    t: f64,
    h: f64,
    kernel: Kernel,
) -> Result<SmoothedCounts> {
    if h <= 0.0 {
        return Err(DrcError::InvalidParameter(format!(
            "bandwidth {h} must be positive"
        )));
    }
    let n = ds.n();
    let grid = ds.grid();
    let mut counts = DMatrix::zeros(n, n);
    let mut any = false;
    for t_idx in 0..grid.num_points() {
        let w = kernel_weight(kernel, t, grid.point(t_idx), h);
        if w <= 0.0 {
            continue;
        }
        any = true;
        for ((i, j), outcome) in ds.edges_at(t_idx) {
            counts[(j, i)] += w * f64::from(outcome.wins);
            counts[(i, j)] += w * f64::from(outcome.trials - outcome.wins);
        }
    }
    if !any {
        return Err(DrcError::EmptyKernelWindow { h });
    }
    Ok(SmoothedCounts {
        t,
        counts,
        bandwidth: h,
        kernel,
    })
}

/// Normalized negative log-likelihood of scores beta for smoothed counts:
/// sum_{i != j} X_ij log(1 + exp(beta_j - beta_i)) / sum X_ij.
pub fn mle_objective(x: &SmoothedCounts, beta: &[f64]) -> f64 {
    let n = beta.len();
    let total: f64 = x.counts.iter().sum();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && x.counts[(i, j)] > 0.0 {
                acc += x.counts[(i, j)] * log1p_exp(beta[j] - beta[i]);
            }
        }
    }
    acc / total
}

/// Gradient of the normalized negative log-likelihood.
pub fn mle_gradient(x: &SmoothedCounts, beta: &[f64]) -> Vec<f64> {
    let n = beta.len();
    let total: f64 = x.counts.iter().sum();
    let mut grad = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && x.counts[(i, j)] > 0.0 {
                // d/d beta_j X_ij log(1 + e^{beta_j - beta_i}) = X_ij sigma(beta_j - beta_i)
                let s = x.counts[(i, j)] * sigmoid(beta[j] - beta[i]);
                grad[j] += s;
                grad[i] -= s;
            }
        }
    }
    for g in grad.iter_mut() {
        *g /= total;
    }
    grad
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn strongly_connected(n: usize, has_edge: impl Fn(usize, usize) -> bool) -> bool {
    let reach = |reverse: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for w in 0..n {
                let connected = if reverse {
                    has_edge(w, v)
                } else {
                    has_edge(v, w)
                };
                if connected && !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    };
    reach(false) && reach(true)
}

/// Fit BTL scores to smoothed counts by projected gradient descent on the
/// zero-sum subspace (projection is a mean subtraction), with backtracking
/// line search. Converged when the gradient l-infinity norm is at or below
/// `tol`. A nonpositive `step` selects the default initial step n.
///
/// Returns the strengths exp(beta) normalized to sum 1.
pub fn mle_fit(x: &SmoothedCounts, step: f64, max_iter: usize, tol: f64) -> Result<StrengthEstimate> {
    let n = x.counts.nrows();
    if !strongly_connected(n, |i, j| i != j && x.counts[(i, j)] > 0.0) {
        return Err(DrcError::NotStronglyConnected);
    }
    let step0 = if step > 0.0 { step } else { n as f64 };
    let mut beta = vec![0.0; n];
    let mut obj = mle_objective(x, &beta);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..max_iter {
        let grad = mle_gradient(x, &beta);
        grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm <= tol {
            let scores: Vec<f64> = beta.iter().map(|b| b.exp()).collect();
            return Ok(StrengthEstimate::from_scores(x.t, scores));
        }
        // backtracking: halve the step until the objective decreases
        let mut s = step0;
        loop {
            let mut cand: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - s * g).collect();
            let mean: f64 = cand.iter().sum::<f64>() / n as f64;
            cand.iter_mut().for_each(|b| *b -= mean);
            let cand_obj = mle_objective(x, &cand);
            if cand_obj < obj {
                beta = cand;
                obj = cand_obj;
                break;
            }
            s /= 2.0;
            if s < 1e-16 {
                return Err(DrcError::MleNotConverged {
                    max_iter,
                    grad_norm,
                });
            }
        }
    }
    Err(DrcError::MleNotConverged {
        max_iter,
        grad_norm,
    })
}
