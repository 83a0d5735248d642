//! Error measures: ranking discrepancy weighted by squared strength gaps,
//! relative l2 / l-infinity estimation errors, and per-cell error records.

use serde::{Deserialize, Serialize};

use crate::error::{DrcError, Result};

/// Error statistics for one (time, method) evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub t: f64,
    pub method: String,
    pub d_metric: f64,
    pub rel_l2: f64,
    pub rel_linf: f64,
    pub top_k_overlap: Option<usize>,
}

/// Ranking discrepancy D_pi*(sigma): each misordered pair contributes its
/// squared strength gap,
/// D = sqrt( 1/(2n ||pi*||^2) * sum_{i<j} (pi*_i - pi*_j)^2 1{misordered} ).
///
/// `sigma` lists items best-first (the `ranking` field of a strength
/// estimate). A pair is misordered when the item with larger pi* is placed
/// worse; tied pi* entries never contribute.
pub fn d_metric(pi_star: &[f64], sigma: &[usize]) -> Result<f64> {
    let n = pi_star.len();
    if sigma.len() != n {
        return Err(DrcError::DimensionMismatch(format!(
            "pi has {n} entries but ranking has {}",
            sigma.len()
        )));
    }
    // position[i] = rank of item i, smaller is better
    let mut position = vec![usize::MAX; n];
    for (pos, &item) in sigma.iter().enumerate() {
        position[item] = pos;
    }
    let norm_sq: f64 = pi_star.iter().map(|p| p * p).sum();
    let mut acc = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dp = pi_star[i] - pi_star[j];
            let ds = position[i] as f64 - position[j] as f64;
            if dp * ds > 0.0 {
                acc += dp * dp;
            }
        }
    }
    Ok((acc / (2.0 * n as f64 * norm_sq)).sqrt())
}

/// Relative l2 error ||pi_hat - pi*||_2 / ||pi*||_2.
pub fn rel_l2(pi_star: &[f64], pi_hat: &[f64]) -> f64 {
    let num: f64 = pi_star
        .iter()
        .zip(pi_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let den: f64 = pi_star.iter().map(|a| a * a).sum::<f64>().sqrt();
    num / den
}

/// Relative l-infinity error ||pi_hat - pi*||_inf / ||pi*||_inf.
pub fn rel_linf(pi_star: &[f64], pi_hat: &[f64]) -> f64 {
    let num = pi_star
        .iter()
        .zip(pi_hat)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let den = pi_star.iter().map(|a| a.abs()).fold(0.0, f64::max);
    num / den
}

/// Number of shared items among the top k of two rankings.
pub fn top_k_overlap(a: &[usize], b: &[usize], k: usize) -> usize {
    let ka = &a[..k.min(a.len())];
    let kb = &b[..k.min(b.len())];
    ka.iter().filter(|x| kb.contains(x)).count()
}
