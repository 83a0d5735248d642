//! The Dynamic Rank Centrality estimator: transition matrix construction on
//! the union graph, stationary-distribution solve by left power iteration,
//! and the end-to-end pipeline.

use nalgebra::DMatrix;

use crate::error::{DrcError, Result};
use crate::graph::{self, neighborhood, NeighborhoodView};
use crate::model::{ComparisonDataset, StrengthEstimate};

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 100_000;

/// How the row normalization d >= d_max of the transition matrix is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizationPolicy {
    /// d = factor * d_max, factor >= 1.
    MaxDegree { factor: f64 },
    /// d = 3 n p_delta for a known union edge probability; errors if below d_max.
    KnownP { p_delta: f64 },
    /// d = max(3 n p_hat, d_max) with p_hat = |E| / C(n,2).
    EmpiricalP,
}

/// Row-stochastic transition matrix over the items, with the normalization
/// constant it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub n: usize,
    pub entries: DMatrix<f64>,
    pub d_norm: f64,
}

impl TransitionMatrix {
    /// Wrap an explicit row-stochastic matrix. Rows must sum to 1 within 1e-12.
    pub fn from_entries(entries: DMatrix<f64>, d_norm: f64) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(DrcError::DimensionMismatch(format!(
                "transition matrix must be square, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        for i in 0..n {
            let s: f64 = entries.row(i).iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(DrcError::InvalidParameter(format!(
                    "row {i} sums to {s}, not 1"
                )));
            }
        }
        Ok(TransitionMatrix { n, entries, d_norm })
    }
}

/// Result of a stationary-distribution solve, with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub estimate: StrengthEstimate,
    pub iterations: usize,
    /// Whether the lazy chain (P + I)/2 was substituted for aperiodicity.
    pub lazy: bool,
}

fn resolve_d_norm(view: &NeighborhoodView, policy: NormalizationPolicy) -> Result<f64> {
    let d_max = view.degrees().into_iter().max().unwrap_or(0) as f64;
    let n = view.n;
    match policy {
        NormalizationPolicy::MaxDegree { factor } => {
            if factor < 1.0 {
                return Err(DrcError::InvalidParameter(format!(
                    "max-degree factor {factor} must be >= 1"
                )));
            }
            Ok(factor * d_max)
        }
        NormalizationPolicy::KnownP { p_delta } => {
            let d = 3.0 * n as f64 * p_delta;
            if d < d_max {
                Err(DrcError::NormalizationTooSmall { d_norm: d, d_max })
            } else {
                Ok(d)
            }
        }
        NormalizationPolicy::EmpiricalP => {
            let pairs = (n * (n - 1) / 2) as f64;
            let p_hat = view.num_edges() as f64 / pairs;
            Ok(f64::max(3.0 * n as f64 * p_hat, d_max))
        }
    }
}

/// Build the transition matrix on the union graph: off-diagonal entry (i, j)
/// is ybar_ij / d on union edges, the diagonal absorbs the remaining mass.
pub fn build_transition(view: &NeighborhoodView, policy: NormalizationPolicy) -> Result<TransitionMatrix> {
    if view.edges.is_empty() {
        return Err(DrcError::NoComparisons {
            t: view.t,
            delta: view.delta,
        });
    }
    let n = view.n;
    let d_norm = resolve_d_norm(view, policy)?;
    let mut entries = DMatrix::zeros(n, n);
    for (&(i, j), stats) in &view.edges {
        entries[(i, j)] = stats.ybar / d_norm;
        entries[(j, i)] = (1.0 - stats.ybar) / d_norm;
    }
    for i in 0..n {
        let off: f64 = entries.row(i).iter().sum();
        entries[(i, i)] = 1.0 - off;
    }
    Ok(TransitionMatrix { n, entries, d_norm })
}

/// Build the reversible transition matrix induced by exact strengths on the
/// union edge set: off-diagonal (i, j) is (w_j / (w_i + w_j)) / d. Its
/// stationary distribution is w / ||w||_1 by detailed balance.
pub fn build_transition_truth(
    view: &NeighborhoodView,
    weights: &[f64],
    policy: NormalizationPolicy,
) -> Result<TransitionMatrix> {
    if view.edges.is_empty() {
        return Err(DrcError::NoComparisons {
            t: view.t,
            delta: view.delta,
        });
    }
    let n = view.n;
    let d_norm = resolve_d_norm(view, policy)?;
    let mut entries = DMatrix::zeros(n, n);
    for &(i, j) in view.edges.keys() {
        entries[(i, j)] = weights[j] / (weights[i] + weights[j]) / d_norm;
        entries[(j, i)] = weights[i] / (weights[i] + weights[j]) / d_norm;
    }
    for i in 0..n {
        let off: f64 = entries.row(i).iter().sum();
        entries[(i, i)] = 1.0 - off;
    }
    Ok(TransitionMatrix { n, entries, d_norm })
}

/// Stationary distribution of a transition matrix by left power iteration
/// with l1 renormalization, uniform start, tolerance 1e-10, cap 100000.
///
/// The undirected support graph must be connected or the strengths are not
/// identifiable. If every diagonal entry is zero the chain may be periodic;
/// the lazy chain (P + I)/2, which has the same stationary distribution, is
/// substituted.
pub fn stationary_distribution(p: &TransitionMatrix, t: f64) -> Result<SpectralResult> {
    let n = p.n;
    let support = (0..n).flat_map(|i| {
        let p = &p.entries;
        (i + 1..n).filter_map(move |j| {
            if p[(i, j)] > 0.0 || p[(j, i)] > 0.0 {
                Some((i, j))
            } else {
                None
            }
        })
    });
    if !graph::is_connected(n, support) {
        return Err(DrcError::Disconnected {
            t,
            delta: f64::NAN,
        });
    }

    let lazy = (0..n).all(|i| p.entries[(i, i)] <= 0.0);
    let step = |x: &[f64], out: &mut [f64]| {
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &xi) in x.iter().enumerate() {
                acc += xi * p.entries[(i, j)];
            }
            *o = if lazy { 0.5 * (acc + x[j]) } else { acc };
        }
    };

    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for iter in 1..=POWER_MAX_ITER {
        step(&x, &mut next);
        let norm: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= norm;
        }
        residual = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if residual <= POWER_TOL {
            return Ok(SpectralResult {
                estimate: StrengthEstimate::from_scores(t, x),
                iterations: iter,
                lazy,
            });
        }
    }
    Err(DrcError::NotConverged {
        max_iter: POWER_MAX_ITER,
        residual,
    })
}

/// Dynamic Rank Centrality end to end: pool the data within radius `delta`
/// of `t`, build the transition matrix and return its stationary distribution.
pub fn dynamic_rank_centrality(
    ds: &ComparisonDataset,
    t: f64,
    delta: f64,
    policy: NormalizationPolicy,
) -> Result<SpectralResult> {
    let view = neighborhood(ds, t, delta)?;
    let p = build_transition(&view, policy)?;
    stationary_distribution(&p, t).map_err(|e| match e {
        DrcError::Disconnected { t, .. } => DrcError::Disconnected {
            t,
            delta: view.delta,
        },
        other => other,
    })
}

/// Smallest delta in {delta0, delta0 + 1, ...} (capped at T) whose union
/// graph at `t` is connected. The full-grid union graph must be connected,
/// otherwise no delta can ever identify the strengths.
pub fn increase_delta_until_connected(ds: &ComparisonDataset, t: f64, delta0: f64) -> Result<f64> {
    let t_big = ds.grid().intervals() as f64;
    let full = neighborhood(ds, t, f64::max(t_big, 0.5))?;
    if !full.is_connected() {
        return Err(DrcError::NeverIdentifiable);
    }
    let mut delta = delta0;
    loop {
        let view = neighborhood(ds, t, delta)?;
        if view.is_connected() {
            return Ok(view.delta);
        }
        if view.clamped || delta >= t_big {
            // full union already verified connected
            return Ok(view.delta);
        }
        delta += 1.0;
    }
}
