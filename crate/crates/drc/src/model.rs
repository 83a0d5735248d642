//! Core domain types: time grids, comparison datasets, ground-truth strengths
//! and strength estimates. All types are immutable after construction and safe
//! to share across threads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{DrcError, Result};

/// Uniform grid {i/T : i = 0..T} on [0,1].
///
/// `T = 0` is the static case: a single grid point at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    intervals: usize,
}

impl TimeGrid {
    pub fn new(intervals: usize) -> Self {
        TimeGrid { intervals }
    }

    /// Number of intervals T.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of grid points, T + 1.
    pub fn num_points(&self) -> usize {
        self.intervals + 1
    }

    /// The grid point i/T. For the static grid (T = 0) this is 0.
    pub fn point(&self, index: usize) -> f64 {
        if self.intervals == 0 {
            0.0
        } else {
            index as f64 / self.intervals as f64
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_points()).map(|i| self.point(i))
    }
}

/// Outcome of the comparisons on one edge at one grid point, stored exactly
/// as integer counts. For the canonical edge (i, j) with i < j, `wins` is the
/// number of times j beat i, so the win fraction y_ij = wins / trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeOutcome {
    pub wins: u32,
    pub trials: u32,
}

impl EdgeOutcome {
    /// Win fraction of the higher-index endpoint.
    pub fn fraction(&self) -> f64 {
        f64::from(self.wins) / f64::from(self.trials)
    }
}

/// Timestamped pairwise comparison data: per grid point, an undirected edge
/// set with win fractions. Edges are stored canonically with i < j; the two
/// orientations of an edge carry the same information (y_ji = 1 - y_ij), so
/// recording either one yields an identical dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonDataset {
    n: usize,
    grid: TimeGrid,
    l_per_edge: u32,
    observations: Vec<BTreeMap<(usize, usize), EdgeOutcome>>,
}

impl ComparisonDataset {
    pub fn new(n: usize, grid: TimeGrid, l_per_edge: u32) -> Self {
        let observations = vec![BTreeMap::new(); grid.num_points()];
        ComparisonDataset {
            n,
            grid,
            l_per_edge,
            observations,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Comparisons per edge per time (L).
    pub fn l_per_edge(&self) -> u32 {
        self.l_per_edge
    }

    /// Record the outcome of `trials` comparisons between `i` and `j` at grid
    /// point `t_idx`, where `wins_j` is the number of times `j` beat `i`.
    /// Either orientation may be passed; storage is canonicalized to i < j.
    pub fn record(&mut self, t_idx: usize, i: usize, j: usize, wins_j: u32, trials: u32) {
        assert!(i != j, "self-loops are not allowed");
        assert!(i < self.n && j < self.n, "item index out of range");
        assert!(trials > 0, "an edge must carry at least one comparison");
        assert!(wins_j <= trials);
        let (key, wins) = if i < j {
            ((i, j), wins_j)
        } else {
            ((j, i), trials - wins_j)
        };
        self.observations[t_idx].insert(key, EdgeOutcome { wins, trials });
    }

    /// Remove the stored outcome for edge {i, j} at `t_idx`, returning it.
    pub fn remove(&mut self, t_idx: usize, i: usize, j: usize) -> Option<EdgeOutcome> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.observations[t_idx].remove(&key)
    }

    /// Canonical outcome for edge {i, j} at `t_idx`, if compared there.
    pub fn outcome(&self, t_idx: usize, i: usize, j: usize) -> Option<EdgeOutcome> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.observations[t_idx].get(&key).copied()
    }

    /// Win fraction y_ij(t') = proportion of times j beat i, if compared.
    pub fn win_fraction(&self, t_idx: usize, i: usize, j: usize) -> Option<f64> {
        self.outcome(t_idx, i, j).map(|o| {
            if i < j {
                o.fraction()
            } else {
                1.0 - o.fraction()
            }
        })
    }

    /// Canonical edges compared at grid point `t_idx`.
    pub fn edges_at(&self, t_idx: usize) -> impl Iterator<Item = ((usize, usize), EdgeOutcome)> + '_ {
        self.observations[t_idx].iter().map(|(&k, &v)| (k, v))
    }

    pub fn num_edges_at(&self, t_idx: usize) -> usize {
        self.observations[t_idx].len()
    }

    /// All recorded (grid index, edge) pairs, in deterministic order.
    pub fn recorded_games(&self) -> Vec<(usize, (usize, usize))> {
        let mut games = Vec::new();
        for (t_idx, obs) in self.observations.iter().enumerate() {
            for &edge in obs.keys() {
                games.push((t_idx, edge));
            }
        }
        games
    }

    pub fn total_recorded(&self) -> usize {
        self.observations.iter().map(|o| o.len()).sum()
    }
}

/// True latent strengths on the grid: a (T+1) x n matrix of positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    weights: Vec<Vec<f64>>,
    /// Empirical Lipschitz constant of the induced win probabilities, when
    /// known (synthetic data records it; real data cannot observe it).
    pub lipschitz: Option<f64>,
}

impl GroundTruth {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        for (t_idx, row) in weights.iter().enumerate() {
            for (item, &w) in row.iter().enumerate() {
                if !(w > 0.0) {
                    return Err(DrcError::NonPositiveWeight {
                        grid_index: t_idx,
                        item,
                        value: w,
                    });
                }
            }
        }
        Ok(GroundTruth {
            weights,
            lipschitz: None,
        })
    }

    pub fn num_grid_points(&self) -> usize {
        self.weights.len()
    }

    pub fn n(&self) -> usize {
        self.weights.first().map_or(0, |r| r.len())
    }

    pub fn weights_at(&self, grid_index: usize) -> &[f64] {
        &self.weights[grid_index]
    }

    /// True win probability y*_ij(t') = w_j / (w_i + w_j).
    pub fn y_star(&self, grid_index: usize, i: usize, j: usize) -> f64 {
        let row = &self.weights[grid_index];
        row[j] / (row[i] + row[j])
    }

    /// Dynamic range b(t') at the grid point, and its max over the grid.
    pub fn b_max(&self) -> f64 {
        (0..self.num_grid_points())
            .map(|i| condition_number_b(self, i).unwrap())
            .fold(1.0, f64::max)
    }

    /// Empirical Lipschitz constant: max over adjacent grid points and pairs
    /// of |y*_ij(t'+1/T) - y*_ij(t')| * T. Zero for a single-point grid.
    pub fn empirical_lipschitz(&self) -> f64 {
        let t = self.num_grid_points().saturating_sub(1);
        if t == 0 {
            return 0.0;
        }
        let n = self.n();
        let mut m = 0.0f64;
        for k in 0..t {
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = (self.y_star(k + 1, i, j) - self.y_star(k, i, j)).abs();
                    m = m.max(d * t as f64);
                }
            }
        }
        m
    }
}

/// A strength estimate at a query time: probability vector over the items and
/// the induced ranking (best first; ties broken by ascending item index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthEstimate {
    pub t: f64,
    pub pi: Vec<f64>,
    pub ranking: Vec<usize>,
}

impl StrengthEstimate {
    /// Normalize nonnegative scores to sum 1 and derive the ranking.
    pub fn from_scores(t: f64, scores: Vec<f64>) -> Self {
        let total: f64 = scores.iter().sum();
        let pi: Vec<f64> = if total > 0.0 {
            scores.iter().map(|s| s / total).collect()
        } else {
            scores
        };
        let ranking = ranking_of(&pi);
        StrengthEstimate { t, pi, ranking }
    }
}

/// Items sorted by descending score, ties broken by ascending index.
pub fn ranking_of(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx
}

/// Normalized truth w*_{t'} / ||w*_{t'}||_1 at a grid point.
pub fn normalized_truth(gt: &GroundTruth, grid_index: usize) -> Result<StrengthEstimate> {
    if grid_index >= gt.num_grid_points() {
        return Err(DrcError::IndexOutOfRange {
            index: grid_index,
            points: gt.num_grid_points(),
        });
    }
    let grid = TimeGrid::new(gt.num_grid_points() - 1);
    Ok(StrengthEstimate::from_scores(
        grid.point(grid_index),
        gt.weights_at(grid_index).to_vec(),
    ))
}

/// Dynamic range b(t') = max weight / min weight at a grid point; always >= 1.
pub fn condition_number_b(gt: &GroundTruth, grid_index: usize) -> Result<f64> {
    if grid_index >= gt.num_grid_points() {
        return Err(DrcError::IndexOutOfRange {
            index: grid_index,
            points: gt.num_grid_points(),
        });
    }
    let row = gt.weights_at(grid_index);
    let mut min = f64::INFINITY;
    let mut max = 0.0f64;
    for (item, &w) in row.iter().enumerate() {
        if !(w > 0.0) {
            return Err(DrcError::NonPositiveWeight {
                grid_index,
                item,
                value: w,
            });
        }
        min = min.min(w);
        max = max.max(w);
    }
    Ok(max / min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_points_are_uniform() {
        let g = TimeGrid::new(10);
        assert_eq!(g.num_points(), 11);
        assert_eq!(g.point(0), 0.0);
        assert_eq!(g.point(10), 1.0);
        assert_abs_diff_eq!(g.point(5), 0.5);
        let pts: Vec<f64> = g.points().collect();
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn static_grid_single_point() {
        let g = TimeGrid::new(0);
        assert_eq!(g.num_points(), 1);
        assert_eq!(g.point(0), 0.0);
    }

    #[test]
    fn normalized_truth_symmetric_pair() {
        let gt = GroundTruth::new(vec![vec![1.0, 1.0]]).unwrap();
        let est = normalized_truth(&gt, 0).unwrap();
        assert_eq!(est.pi, vec![0.5, 0.5]);
    }

    #[test]
    fn normalized_truth_direct() {
        let gt = GroundTruth::new(vec![vec![1.0, 2.0, 3.0]]).unwrap();
        let est = normalized_truth(&gt, 0).unwrap();
        assert_abs_diff_eq!(est.pi[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(est.pi[1], 2.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(est.pi[2], 3.0 / 6.0, epsilon = 1e-15);
        assert_eq!(est.ranking, vec![2, 1, 0]);
    }

    #[test]
    fn all_ties_rank_by_index() {
        let gt = GroundTruth::new(vec![vec![2.0, 2.0, 2.0, 2.0]]).unwrap();
        let est = normalized_truth(&gt, 0).unwrap();
        assert_eq!(est.ranking, vec![0, 1, 2, 3]);
    }

    #[test]
    fn condition_number_trivial() {
        let gt = GroundTruth::new(vec![vec![1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(condition_number_b(&gt, 0).unwrap(), 1.0);
        let gt = GroundTruth::new(vec![vec![1.0, 4.0]]).unwrap();
        assert_eq!(condition_number_b(&gt, 0).unwrap(), 4.0);
    }

    #[test]
    fn condition_number_matches_pairwise_scan() {
        // Brute-force oracle: max over all ordered pairs of w_i / w_j.
        let row = vec![0.7, 2.3, 1.1, 0.42, 5.5, 0.9];
        let gt = GroundTruth::new(vec![row.clone()]).unwrap();
        let mut oracle = 0.0f64;
        for &a in &row {
            for &b in &row {
                oracle = oracle.max(a / b);
            }
        }
        assert_abs_diff_eq!(condition_number_b(&gt, 0).unwrap(), oracle, epsilon = 1e-15);
    }

    #[test]
    fn rejects_nonpositive_weight() {
        assert!(GroundTruth::new(vec![vec![1.0, 0.0]]).is_err());
        assert!(GroundTruth::new(vec![vec![1.0, -2.0]]).is_err());
    }

    #[test]
    fn rejects_out_of_range_index() {
        let gt = GroundTruth::new(vec![vec![1.0, 2.0]]).unwrap();
        assert!(normalized_truth(&gt, 1).is_err());
        assert!(condition_number_b(&gt, 5).is_err());
    }

    #[test]
    fn normalized_truth_scale_invariant() {
        let row = vec![0.3, 1.7, 0.9, 2.2];
        let gt1 = GroundTruth::new(vec![row.clone()]).unwrap();
        let scaled: Vec<f64> = row.iter().map(|w| w * 37.5).collect();
        let gt2 = GroundTruth::new(vec![scaled]).unwrap();
        let e1 = normalized_truth(&gt1, 0).unwrap();
        let e2 = normalized_truth(&gt2, 0).unwrap();
        for (a, b) in e1.pi.iter().zip(&e2.pi) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_eq!(e1.ranking, e2.ranking);
    }

    #[test]
    fn recording_orientation_is_canonical() {
        let grid = TimeGrid::new(4);
        let mut a = ComparisonDataset::new(3, grid, 5);
        let mut b = ComparisonDataset::new(3, grid, 5);
        a.record(2, 0, 1, 3, 5);
        b.record(2, 1, 0, 2, 5);
        assert_eq!(a, b);
        assert_abs_diff_eq!(a.win_fraction(2, 0, 1).unwrap(), 0.6);
        assert_abs_diff_eq!(a.win_fraction(2, 1, 0).unwrap(), 0.4);
    }

    #[test]
    fn win_fractions_sum_to_one() {
        let mut ds = ComparisonDataset::new(4, TimeGrid::new(2), 7);
        ds.record(0, 2, 3, 4, 7);
        let y = ds.win_fraction(0, 2, 3).unwrap();
        let y_rev = ds.win_fraction(0, 3, 2).unwrap();
        assert_eq!(y + y_rev, 1.0);
    }

    #[test]
    fn empirical_lipschitz_zero_for_constant_weights() {
        let gt = GroundTruth::new(vec![vec![1.0, 2.0]; 6]).unwrap();
        assert_eq!(gt.empirical_lipschitz(), 0.0);
    }
}
