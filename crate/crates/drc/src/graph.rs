//! Neighborhood construction, union graphs, averaged statistics and graph
//! diagnostics (degrees, connectivity, spectral gap).

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{DrcError, Result};
use crate::model::ComparisonDataset;

/// Absolute slack for the closed neighborhood inequality |t - t'| <= delta/T,
/// keeping grid points t' = i/T stable under floating point.
const GRID_SLACK: f64 = 1e-12;

/// Per-edge statistics within a neighborhood: the grid indices where the edge
/// was compared and the averaged win fraction ybar (canonical orientation,
/// i < j, fraction of times j beat i).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStats {
    pub times: Vec<usize>,
    pub ybar: f64,
}

/// The data within radius delta of a query time: the neighborhood grid
/// points, the union edge set, and averaged statistics per union edge.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodView {
    pub t: f64,
    pub delta: f64,
    /// Set when the requested delta exceeded T and was clamped down.
    pub clamped: bool,
    /// Grid indices t' with |t - t'/T| <= delta/T.
    pub times: Vec<usize>,
    /// Union edges (i < j) with their comparison times and averaged ybar.
    pub edges: BTreeMap<(usize, usize), EdgeStats>,
    pub n: usize,
}

impl NeighborhoodView {
    /// Averaged win fraction for the ordered pair (i, j): probability mass
    /// that j beat i, averaged over the times the edge was compared.
    pub fn ybar(&self, i: usize, j: usize) -> Option<f64> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.get(&key).map(|s| {
            if i < j {
                s.ybar
            } else {
                1.0 - s.ybar
            }
        })
    }

    /// Vertex degrees in the union graph.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for &(i, j) in self.edges.keys() {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self.n, self.edges.keys().copied())
    }
}

/// Degree, connectivity and spectral-gap diagnostics of a union graph.
/// `spectral_gap` is absent when some vertex is isolated.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDiagnostics {
    pub d_min: usize,
    pub d_max: usize,
    pub n_edges: usize,
    pub connected: bool,
    pub spectral_gap: Option<f64>,
}

/// Build the neighborhood view at time `t` with radius `delta` per the closed
/// inequality |t - t'| <= delta/T, truncated at [0,1]. `delta` below 1/2 is
/// rejected (the neighborhood could be empty); above T it is clamped with the
/// `clamped` flag set. For a static grid (T = 0) the single point is used.
pub fn neighborhood(ds: &ComparisonDataset, t: f64, delta: f64) -> Result<NeighborhoodView> {
    if !(0.0..=1.0).contains(&t) {
        return Err(DrcError::TimeOutOfRange { t });
    }
    if delta < 0.5 {
        return Err(DrcError::DeltaTooSmall { delta });
    }
    let grid = ds.grid();
    let t_big = grid.intervals();
    let (delta, clamped) = if t_big >= 1 && delta > t_big as f64 {
        (t_big as f64, true)
    } else {
        (delta, false)
    };

    let times: Vec<usize> = if t_big == 0 {
        vec![0]
    } else {
        let radius = delta / t_big as f64;
        (0..grid.num_points())
            .filter(|&i| (t - grid.point(i)).abs() <= radius + GRID_SLACK)
            .collect()
    };

    let mut edges: BTreeMap<(usize, usize), EdgeStats> = BTreeMap::new();
    for &t_idx in &times {
        for (edge, outcome) in ds.edges_at(t_idx) {
            let stats = edges.entry(edge).or_insert_with(|| EdgeStats {
                times: Vec::new(),
                ybar: 0.0,
            });
            stats.times.push(t_idx);
            stats.ybar += outcome.fraction();
        }
    }
    for stats in edges.values_mut() {
        stats.ybar /= stats.times.len() as f64;
    }

    Ok(NeighborhoodView {
        t,
        delta,
        clamped,
        times,
        edges,
        n: ds.n(),
    })
}

/// Degrees, connectivity (by traversal) and the spectral gap of the
/// random-walk Laplacian, computed through the symmetric similarity
/// D^{-1/2} A D^{-1/2} and a dense symmetric eigendecomposition.
pub fn diagnostics(view: &NeighborhoodView) -> GraphDiagnostics {
    let n = view.n;
    let deg = view.degrees();
    let d_min = deg.iter().copied().min().unwrap_or(0);
    let d_max = deg.iter().copied().max().unwrap_or(0);
    let connected = view.is_connected();

    let spectral_gap = if n >= 2 && d_min >= 1 {
        let mut sym = DMatrix::zeros(n, n);
        let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();
        for &(i, j) in view.edges.keys() {
            let v = inv_sqrt[i] * inv_sqrt[j];
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
        let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        // lambda_max = max{lambda_2, -lambda_n}; xi = 1 - lambda_max
        let lambda_max = f64::max(eigs[1], -eigs[n - 1]);
        Some(1.0 - lambda_max)
    } else {
        None
    };

    GraphDiagnostics {
        d_min,
        d_max,
        n_edges: view.num_edges(),
        connected,
        spectral_gap,
    }
}

/// Edge probability of the Erdos-Renyi union graph over a neighborhood:
/// p_delta = 1 - prod (1 - p(t')).
pub fn union_edge_probability(p_values: &[f64]) -> Result<f64> {
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(DrcError::InvalidParameter(format!(
                "edge probability {p} outside [0,1]"
            )));
        }
    }
    let survive: f64 = p_values.iter().map(|p| 1.0 - p).product();
    Ok(1.0 - survive)
}

/// Connectivity of an undirected graph on `n` vertices by traversal.
/// An isolated vertex (n >= 2) makes the graph disconnected.
pub fn is_connected(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> bool {
    if n <= 1 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for (i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TimeGrid;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn empty_ds(n: usize, t: usize, l: u32) -> ComparisonDataset {
        ComparisonDataset::new(n, TimeGrid::new(t), l)
    }

    #[test]
    fn neighborhood_interior() {
        let ds = empty_ds(3, 10, 1);
        let view = neighborhood(&ds, 0.5, 1.0).unwrap();
        assert_eq!(view.times, vec![4, 5, 6]);
    }

    #[test]
    fn neighborhood_boundary_truncated() {
        let ds = empty_ds(3, 10, 1);
        let view = neighborhood(&ds, 0.0, 1.0).unwrap();
        assert_eq!(view.times, vec![0, 1]);
    }

    #[test]
    fn rejects_small_delta_clamps_large() {
        let ds = empty_ds(3, 10, 1);
        assert!(neighborhood(&ds, 0.5, 0.4).is_err());
        let view = neighborhood(&ds, 0.5, 25.0).unwrap();
        assert!(view.clamped);
        assert_eq!(view.delta, 10.0);
        assert_eq!(view.times.len(), 11);
    }

    #[test]
    fn ybar_is_arithmetic_mean() {
        let mut ds = empty_ds(2, 10, 10);
        ds.record(4, 0, 1, 2, 10); // y = 0.2
        ds.record(5, 0, 1, 4, 10); // y = 0.4
        let view = neighborhood(&ds, 0.45, 1.0).unwrap();
        assert_abs_diff_eq!(view.ybar(0, 1).unwrap(), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(view.ybar(1, 0).unwrap(), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn ybar_matches_full_scan_oracle() {
        // Independent recomputation of ybar by scanning every (edge, time)
        // record in the dataset.
        let mut rng = StdRng::seed_from_u64(42);
        let n = 8;
        let t_big = 20;
        let l = 6;
        let mut ds = empty_ds(n, t_big, l);
        for t_idx in 0..=t_big {
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen_bool(0.4) {
                        ds.record(t_idx, i, j, rng.gen_range(0..=l), l);
                    }
                }
            }
        }
        let t = 0.37;
        let delta = 3.0;
        let view = neighborhood(&ds, t, delta).unwrap();
        for (&(i, j), stats) in &view.edges {
            let mut sum = 0.0;
            let mut count = 0usize;
            for t_idx in 0..=t_big {
                let on_grid = (t - t_idx as f64 / t_big as f64).abs() <= delta / t_big as f64 + 1e-12;
                if on_grid {
                    if let Some(y) = ds.win_fraction(t_idx, i, j) {
                        sum += y;
                        count += 1;
                    }
                }
            }
            assert_eq!(count, stats.times.len());
            assert_abs_diff_eq!(stats.ybar, sum / count as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn neighborhood_monotone_in_delta() {
        let mut rng = StdRng::seed_from_u64(7);
        let n = 6;
        let mut ds = empty_ds(n, 15, 2);
        for t_idx in 0..=15 {
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen_bool(0.3) {
                        ds.record(t_idx, i, j, rng.gen_range(0..=2), 2);
                    }
                }
            }
        }
        for &t in &[0.0, 0.3, 0.71, 1.0] {
            let mut prev: Option<NeighborhoodView> = None;
            for &delta in &[0.5, 1.0, 2.0, 4.0, 8.0, 15.0] {
                let view = neighborhood(&ds, t, delta).unwrap();
                // size bound delta <= |times| <= 4 delta
                assert!(view.times.len() as f64 >= delta);
                assert!(view.times.len() as f64 <= 4.0 * delta);
                if let Some(p) = &prev {
                    assert!(p.times.iter().all(|x| view.times.contains(x)));
                    assert!(p.edges.keys().all(|k| view.edges.contains_key(k)));
                }
                prev = Some(view);
            }
        }
    }

    #[test]
    fn diagnostics_complete_graph() {
        let n = 5;
        let mut ds = empty_ds(n, 0, 1);
        for i in 0..n {
            for j in (i + 1)..n {
                ds.record(0, i, j, 1, 1);
            }
        }
        let view = neighborhood(&ds, 0.0, 0.5).unwrap();
        let d = diagnostics(&view);
        assert!(d.connected);
        assert_eq!(d.d_min, n - 1);
        assert_eq!(d.d_max, n - 1);
        assert_eq!(d.n_edges, n * (n - 1) / 2);
    }

    #[test]
    fn diagnostics_disjoint_pairs() {
        let mut ds = empty_ds(4, 0, 1);
        ds.record(0, 0, 1, 1, 1);
        ds.record(0, 2, 3, 1, 1);
        let view = neighborhood(&ds, 0.0, 0.5).unwrap();
        let d = diagnostics(&view);
        assert!(!d.connected);
    }

    #[test]
    fn diagnostics_isolated_vertex_has_no_gap() {
        let mut ds = empty_ds(3, 0, 1);
        ds.record(0, 0, 1, 1, 1);
        let view = neighborhood(&ds, 0.0, 0.5).unwrap();
        let d = diagnostics(&view);
        assert!(!d.connected);
        assert!(d.spectral_gap.is_none());
    }

    #[test]
    fn path_graph_p3_has_zero_gap() {
        // Eigenvalues of D^{-1}A on P_3 are {1, 0, -1}, so xi = 0.
        let mut ds = empty_ds(3, 0, 1);
        ds.record(0, 0, 1, 1, 1);
        ds.record(0, 1, 2, 1, 1);
        let view = neighborhood(&ds, 0.0, 0.5).unwrap();
        let d = diagnostics(&view);
        assert!(d.connected);
        assert_abs_diff_eq!(d.spectral_gap.unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn union_probability_examples() {
        let p = union_edge_probability(&[0.1, 0.1, 0.1]).unwrap();
        assert_abs_diff_eq!(p, 1.0 - 0.9f64.powi(3), epsilon = 1e-15);
        assert_eq!(union_edge_probability(&[0.5, 1.0, 0.2]).unwrap(), 1.0);
        // 1 - 0.8 * 0.7 evaluated independently
        assert_abs_diff_eq!(
            union_edge_probability(&[0.2, 0.3]).unwrap(),
            0.44,
            epsilon = 1e-15
        );
        assert!(union_edge_probability(&[1.5]).is_err());
    }

    #[test]
    fn union_probability_lower_bound() {
        // p_delta >= 1 - exp(-p_min * |times|) for constant p.
        for &(p_min, k) in &[(0.05, 3usize), (0.2, 10), (0.01, 40)] {
            let ps = vec![p_min; k];
            let p_delta = union_edge_probability(&ps).unwrap();
            assert!(p_delta >= 1.0 - (-p_min * k as f64).exp() - 1e-12);
        }
    }
}
