//! Synthetic data generation: Gaussian-process latent strengths on the grid,
//! Erdos-Renyi comparison graphs, Bernoulli outcomes, plus a constant-weight
//! fixture for the zero-drift case.
//!
//! Randomness is split into named substreams derived from the master seed, so
//! connectivity retries resample the graphs and outcomes while the strength
//! paths stay fixed.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Normal};
use sha2::{Digest, Sha256};

use crate::error::{DrcError, Result};
use crate::graph::is_connected;
use crate::model::{ComparisonDataset, GroundTruth, TimeGrid};

const CONNECTIVITY_RETRIES: usize = 100;

/// Configuration for the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub t_intervals: usize,
    pub l_per_edge: u32,
    /// Per-time edge probability is drawn uniformly from this interval.
    pub p_range: (f64, f64),
    /// Standard deviation of the GP mean entries (default sqrt(0.1)).
    pub gp_mean_std: f64,
    pub seed: u64,
    pub ensure_union_connected: bool,
}

impl SynthConfig {
    pub fn new(n: usize, t_intervals: usize, l_per_edge: u32) -> Self {
        SynthConfig {
            n,
            t_intervals,
            l_per_edge,
            p_range: paper_default_p_range(n),
            gp_mean_std: 0.1f64.sqrt(),
            seed: 0,
            ensure_union_connected: true,
        }
    }

    pub fn with_p_range(mut self, lo: f64, hi: f64) -> Self {
        self.p_range = (lo, hi);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_union_connectivity(mut self, ensure: bool) -> Self {
        self.ensure_union_connected = ensure;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(DrcError::InvalidParameter("n must be >= 2".into()));
        }
        if self.l_per_edge < 1 {
            return Err(DrcError::InvalidParameter("L must be >= 1".into()));
        }
        let (lo, hi) = self.p_range;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(DrcError::InvalidParameter(format!(
                "p_range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"
            )));
        }
        Ok(())
    }
}

/// The experiment-preset interval [1/n, log n / n], capped at 1.
pub fn paper_default_p_range(n: usize) -> (f64, f64) {
    let n = n as f64;
    (1.0 / n, ((n.ln()) / n).min(1.0).max(1.0 / n))
}

/// Deterministic substream: a ChaCha generator keyed by the master seed, a
/// stream tag and two indices.
pub fn substream(seed: u64, tag: &str, a: u64, b: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(a.to_le_bytes());
    hasher.update(b.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Toeplitz covariance with first row 1 - t/(T+1), t = 0..T.
fn toeplitz_covariance(t_intervals: usize) -> DMatrix<f64> {
    let m = t_intervals + 1;
    DMatrix::from_fn(m, m, |r, c| {
        let lag = r.abs_diff(c) as f64;
        1.0 - lag / (t_intervals as f64 + 1.0)
    })
}

/// Cholesky factor of the covariance, escalating a diagonal jitter from
/// 1e-10 by factors of 10 up to 1e-6 if the plain factorization fails.
fn cholesky_with_jitter(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = sigma.clone().cholesky() {
        return Ok(chol.l());
    }
    let mut jitter = 1e-10;
    while jitter <= 1e-6 {
        let mut jittered = sigma.clone();
        for i in 0..sigma.nrows() {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = jittered.cholesky() {
            return Ok(chol.l());
        }
        jitter *= 10.0;
    }
    Err(DrcError::CovarianceNotPd)
}

/// Draw GP strength paths: w*_i = exp(mu_i + chol * z) per item.
fn draw_strengths(cfg: &SynthConfig) -> Result<Vec<Vec<f64>>> {
    let m = cfg.t_intervals + 1;
    let chol = cholesky_with_jitter(&toeplitz_covariance(cfg.t_intervals))?;
    let mean_law = Normal::new(0.0, cfg.gp_mean_std).unwrap();
    let std_normal = Normal::new(0.0, 1.0).unwrap();

    // weights[t][i]
    let mut weights = vec![vec![0.0; cfg.n]; m];
    for item in 0..cfg.n {
        let mut rng = substream(cfg.seed, "strengths", item as u64, 0);
        let mu: Vec<f64> = (0..m).map(|_| rng.sample(mean_law)).collect();
        let z = DMatrix::from_fn(m, 1, |_, _| rng.sample(std_normal));
        let path = &chol * z;
        for t_idx in 0..m {
            weights[t_idx][item] = (mu[t_idx] + path[(t_idx, 0)]).exp();
        }
    }
    Ok(weights)
}

/// Sample the comparison graphs and outcomes for one connectivity attempt.
fn draw_graphs(
    cfg: &SynthConfig,
    weights: &[Vec<f64>],
    attempt: u64,
) -> ComparisonDataset {
    let grid = TimeGrid::new(cfg.t_intervals);
    let mut ds = ComparisonDataset::new(cfg.n, grid, cfg.l_per_edge);
    for t_idx in 0..grid.num_points() {
        let mut rng = substream(cfg.seed, "graphs", attempt, t_idx as u64);
        let p = rng.gen_range(cfg.p_range.0..=cfg.p_range.1);
        let row = &weights[t_idx];
        for i in 0..cfg.n {
            for j in (i + 1)..cfg.n {
                if rng.gen_bool(p) {
                    let win_prob = row[j] / (row[i] + row[j]);
                    let law = Binomial::new(u64::from(cfg.l_per_edge), win_prob).unwrap();
                    let wins = rng.sample(law) as u32;
                    ds.record(t_idx, i, j, wins, cfg.l_per_edge);
                }
            }
        }
    }
    ds
}

fn full_union_connected(ds: &ComparisonDataset) -> bool {
    let edges: Vec<(usize, usize)> = (0..ds.grid().num_points())
        .flat_map(|t_idx| ds.edges_at(t_idx).map(|(e, _)| e).collect::<Vec<_>>())
        .collect();
    is_connected(ds.n(), edges)
}

/// Generate a synthetic dataset with GP strengths and Erdos-Renyi graphs.
/// With `ensure_union_connected`, graphs (not strengths) are resampled until
/// the full-grid union graph is connected, up to 100 attempts.
pub fn generate(cfg: &SynthConfig) -> Result<(ComparisonDataset, GroundTruth)> {
    cfg.validate()?;
    let weights = draw_strengths(cfg)?;
    let ds = sample_until_connected(cfg, &weights)?;
    let mut gt = GroundTruth::new(weights)?;
    gt.lipschitz = Some(gt.empirical_lipschitz());
    Ok((ds, gt))
}

fn sample_until_connected(
    cfg: &SynthConfig,
    weights: &[Vec<f64>],
) -> Result<ComparisonDataset> {
    let attempts = if cfg.ensure_union_connected {
        CONNECTIVITY_RETRIES
    } else {
        1
    };
    for attempt in 0..attempts {
        let ds = draw_graphs(cfg, weights, attempt as u64);
        if !cfg.ensure_union_connected || full_union_connected(&ds) {
            return Ok(ds);
        }
    }
    Err(DrcError::RetriesExhausted {
        retries: CONNECTIVITY_RETRIES,
    })
}

/// Constant-weight fixture: the same strengths at every grid point (so the
/// drift constant is exactly zero), Erdos-Renyi graphs with fixed edge
/// probability `p`, Bernoulli outcomes.
pub fn make_constant_weights(
    n: usize,
    t_intervals: usize,
    l_per_edge: u32,
    weights: &[f64],
    p: f64,
    seed: u64,
) -> Result<(ComparisonDataset, GroundTruth)> {
    if weights.len() != n {
        return Err(DrcError::DimensionMismatch(format!(
            "{} weights for n={n}",
            weights.len()
        )));
    }
    let cfg = SynthConfig::new(n, t_intervals, l_per_edge)
        .with_p_range(p, p)
        .with_seed(seed);
    cfg.validate()?;
    let rows = vec![weights.to_vec(); t_intervals + 1];
    let ds = sample_until_connected(&cfg, &rows)?;
    let mut gt = GroundTruth::new(rows)?;
    gt.lipschitz = Some(0.0);
    Ok((ds, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::normalized_truth;

    #[test]
    fn full_probability_gives_complete_graphs() {
        let cfg = SynthConfig::new(5, 4, 2).with_p_range(1.0, 1.0).with_seed(1);
        let (ds, _) = generate(&cfg).unwrap();
        for t_idx in 0..=4 {
            assert_eq!(ds.num_edges_at(t_idx), 10);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = SynthConfig::new(8, 10, 3).with_p_range(0.3, 0.6).with_seed(99);
        let (ds1, gt1) = generate(&cfg).unwrap();
        let (ds2, gt2) = generate(&cfg).unwrap();
        assert_eq!(ds1, ds2);
        assert_eq!(gt1, gt2);
    }

    #[test]
    fn covariance_is_positive_semidefinite() {
        for t in [1usize, 5, 50, 200] {
            let sigma = toeplitz_covariance(t);
            let eigs = sigma.symmetric_eigen().eigenvalues;
            assert!(eigs.iter().all(|&l| l >= -1e-8), "T={t}");
        }
    }

    #[test]
    fn win_frequency_matches_binomial_oracle() {
        // With one edge and a huge L, the observed fraction concentrates
        // around w_j / (w_i + w_j) within 3 sigma of the binomial law.
        let l = 100_000u32;
        let weights = [1.0, 3.0];
        let (ds, gt) = make_constant_weights(2, 0, l, &weights, 1.0, 7).unwrap();
        let y_star = gt.y_star(0, 0, 1);
        let y = ds.win_fraction(0, 0, 1).unwrap();
        let sigma = (y_star * (1.0 - y_star) / l as f64).sqrt();
        assert!((y - y_star).abs() <= 3.0 * sigma, "{y} vs {y_star}");
    }

    #[test]
    fn edge_density_matches_binomial_oracle() {
        let n = 30usize;
        let t = 50usize;
        let p = 0.3;
        let cfg = SynthConfig::new(n, t, 1)
            .with_p_range(p, p)
            .with_seed(5)
            .with_union_connectivity(false);
        let (ds, _) = generate(&cfg).unwrap();
        let total: usize = (0..=t).map(|i| ds.num_edges_at(i)).sum();
        let trials = (t + 1) * n * (n - 1) / 2;
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((total as f64 - mean).abs() <= 3.0 * sd);
    }

    #[test]
    fn constant_weights_fixture() {
        let weights = [1.0, 1.0, 1.0];
        let (_, gt) = make_constant_weights(3, 5, 2, &weights, 0.8, 3).unwrap();
        for t_idx in 0..=5 {
            assert_eq!(gt.y_star(t_idx, 0, 1), 0.5);
        }
        assert_eq!(gt.lipschitz, Some(0.0));
        assert_eq!(gt.empirical_lipschitz(), 0.0);

        let (_, gt2) = make_constant_weights(3, 2, 1, &[0.5, 2.0, 1.0], 1.0, 3).unwrap();
        assert_eq!(crate::model::condition_number_b(&gt2, 0).unwrap(), 4.0);
        let est = normalized_truth(&gt2, 0).unwrap();
        assert_eq!(est.ranking, vec![1, 2, 0]);
    }

    #[test]
    fn large_l_concentrates_ybar() {
        // Hoeffding: with L = 10^4 every observed fraction is within 0.02
        // of its mean except with probability ~2 exp(-2 * 1e4 * 4e-4) << 1.
        let l = 10_000u32;
        let weights = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (ds, gt) = make_constant_weights(5, 2, l, &weights, 1.0, 11).unwrap();
        for t_idx in 0..=2 {
            for i in 0..5 {
                for j in (i + 1)..5 {
                    let y = ds.win_fraction(t_idx, i, j).unwrap();
                    assert!((y - gt.y_star(t_idx, i, j)).abs() < 0.02);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&SynthConfig::new(1, 3, 1)).is_err());
        assert!(generate(&SynthConfig::new(4, 3, 1).with_p_range(0.0, 0.5)).is_err());
        assert!(generate(&SynthConfig::new(4, 3, 1).with_p_range(0.9, 0.5)).is_err());
    }
}
