//! Neighborhood radius (delta) selection: closed-form rules derived from the
//! l2 and l-infinity error bounds, and data-driven leave-one-out
//! cross-validation over held-out games.

use rand::Rng;

use crate::baselines::{borda_scores, mle_fit, smooth_counts, Kernel};
use crate::error::{DrcError, Result};
use crate::model::ComparisonDataset;
use crate::spectral::{dynamic_rank_centrality, NormalizationPolicy};
use crate::synth::substream;
use crate::Method;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const DEFAULT_LOOCV_TRIALS: usize = 200;

/// How delta is chosen before estimation.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaRule {
    /// Closed-form rule from the l2 error bound.
    TheoryL2 {
        m: f64,
        b: f64,
        l: u32,
        p_min: f64,
    },
    /// Closed-form rule from the l-infinity error bound.
    TheoryLinf {
        m: f64,
        b: f64,
        l: u32,
        p_min: f64,
    },
    /// A fixed radius supplied by the caller.
    Fixed(f64),
    /// Cross-validated choice among candidates; `None` uses the default grid.
    Loocv {
        candidates: Option<Vec<f64>>,
        trials: usize,
    },
}

impl DeltaRule {
    /// Resolve the rule to a concrete radius for the dataset at query time t.
    pub fn resolve(
        &self,
        ds: &ComparisonDataset,
        t: f64,
        seed: u64,
        method: Method,
    ) -> Result<f64> {
        let t_big = ds.grid().intervals();
        let n = ds.n();
        match self {
            DeltaRule::TheoryL2 { m, b, l, p_min } => {
                delta_star_l2(*m, *b, n, *l, *p_min, t_big)
            }
            DeltaRule::TheoryLinf { m, b, l, p_min } => {
                delta_star_linf(*m, *b, n, *l, *p_min, t_big, None)
            }
            DeltaRule::Fixed(delta) => {
                if *delta < 0.5 {
                    Err(DrcError::DeltaTooSmall { delta: *delta })
                } else {
                    Ok(*delta)
                }
            }
            DeltaRule::Loocv { candidates, trials } => {
                let cands = match candidates {
                    Some(c) => c.clone(),
                    None => default_candidates(t_big),
                };
                let (best, _) = loocv_select(ds, t, &cands, *trials, seed, method)?;
                Ok(best)
            }
        }
    }
}

fn check_rule_params(m: f64, b: f64, n: usize, l: u32, p_min: f64) -> Result<()> {
    if m < 0.0 || !m.is_finite() {
        return Err(DrcError::InvalidParameter(format!(
            "drift constant M={m} must be finite and >= 0"
        )));
    }
    if b < 1.0 {
        return Err(DrcError::InvalidParameter(format!(
            "dynamic range b={b} must be >= 1"
        )));
    }
    if n < 1 || l < 1 {
        return Err(DrcError::InvalidParameter(format!(
            "n={n} and L={l} must be >= 1"
        )));
    }
    if !(p_min > 0.0 && p_min <= 1.0) {
        return Err(DrcError::InvalidParameter(format!(
            "p_min={p_min} must lie in (0, 1]"
        )));
    }
    Ok(())
}

fn clamp_delta(raw: f64, t_big: usize) -> f64 {
    raw.min(t_big as f64).max(0.5)
}

fn delta_star_l2_raw(m: f64, b: f64, n: usize, l: u32, p_min: f64) -> f64 {
    b.powf(2.0 / 3.0) / ((2.0 * m).powf(2.0 / 3.0) * n as f64 * (f64::from(l) * p_min).cbrt())
}

/// Radius minimizing the l2 error bound:
/// min{ b^{2/3} T^{2/3} / ((2M)^{2/3} n (L p_min)^{1/3}), T }, clamped below
/// at 1/2. With M = 0 there is no drift and the whole grid is used (T).
pub fn delta_star_l2(m: f64, b: f64, n: usize, l: u32, p_min: f64, t_big: usize) -> Result<f64> {
    check_rule_params(m, b, n, l, p_min)?;
    let t = t_big as f64;
    if m == 0.0 {
        return Ok(t.max(0.5));
    }
    let raw = delta_star_l2_raw(m, b, n, l, p_min) * t.powf(2.0 / 3.0);
    Ok(clamp_delta(raw, t_big))
}

/// The variance inflation factor gamma_n = 1 + b^{5/2}/sqrt(log n) *
/// max{b^2, log n / sqrt(n)}. Defined for n > 1 (log n > 0).
pub fn gamma_n(b: f64, n: f64) -> Result<f64> {
    let log_n = n.ln();
    if !(log_n > 0.0) {
        return Err(DrcError::InvalidParameter(format!(
            "gamma_n needs n > 1, got {n}"
        )));
    }
    Ok(1.0 + b.powf(2.5) / log_n.sqrt() * f64::max(b * b, log_n / n.sqrt()))
}

/// Radius minimizing the l-infinity error bound:
/// min{ gamma_n^{2/3} (log n)^{1/3} T^{2/3} / ((2M)^{2/3} n b^{7/3} (L p_min)^{1/3}), T },
/// clamped below at 1/2. `gamma` overrides the internally computed gamma_n.
pub fn delta_star_linf(
    m: f64,
    b: f64,
    n: usize,
    l: u32,
    p_min: f64,
    t_big: usize,
    gamma: Option<f64>,
) -> Result<f64> {
    check_rule_params(m, b, n, l, p_min)?;
    let t = t_big as f64;
    if m == 0.0 {
        return Ok(t.max(0.5));
    }
    let gamma = match gamma {
        Some(g) => g,
        None => gamma_n(b, n as f64)?,
    };
    let log_n = (n as f64).ln();
    let raw = gamma.powf(2.0 / 3.0) * log_n.cbrt() * t.powf(2.0 / 3.0)
        / ((2.0 * m).powf(2.0 / 3.0) * n as f64 * b.powf(7.0 / 3.0) * (f64::from(l) * p_min).cbrt());
    Ok(clamp_delta(raw, t_big))
}

/// Default candidate grid {ceil(T^{1/3}), ceil(T^{1/2}), ceil(T^{2/3}), T/4, T/2, T},
/// clamped to [1/2, T], deduplicated and sorted.
pub fn default_candidates(t_big: usize) -> Vec<f64> {
    let t = t_big as f64;
    let mut cands: Vec<f64> = [
        t.cbrt().ceil(),
        t.sqrt().ceil(),
        t.powf(2.0 / 3.0).ceil(),
        t / 4.0,
        t / 2.0,
        t,
    ]
    .into_iter()
    .map(|d| d.min(t).max(0.5))
    .collect();
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    cands
}

/// Cross-validation scores for one candidate radius.
#[derive(Debug, Clone, PartialEq)]
pub struct LoocvScore {
    pub delta: f64,
    /// Mean squared prediction error over the completed trials, if feasible.
    pub mean_sq_error: Option<f64>,
    /// Mean absolute prediction error over the completed trials, if feasible.
    pub mean_abs_error: Option<f64>,
    pub trials_used: usize,
    pub trials_skipped: usize,
    /// More than half the trials failed (removal left the window unusable).
    pub infeasible: bool,
}

fn fit_pi_at(ds: &ComparisonDataset, t: f64, delta: f64, method: Method) -> Result<Vec<f64>> {
    match method {
        Method::Drc => dynamic_rank_centrality(ds, t, delta, NormalizationPolicy::EmpiricalP)
            .map(|r| r.estimate.pi),
        Method::Mle => {
            let t_big = ds.grid().intervals();
            let h = if t_big == 0 { 1.0 } else { delta / t_big as f64 };
            let x = smooth_counts(ds, t, h, Kernel::Boxcar)?;
            mle_fit(&x, 0.0, 10_000, 1e-8).map(|e| e.pi)
        }
        Method::Borda => borda_scores(ds, t, delta).map(|b| b.scores),
    }
}

fn loocv_candidate(
    ds: &ComparisonDataset,
    candidate: f64,
    trials: usize,
    seed: u64,
    cand_index: u64,
    method: Method,
) -> LoocvScore {
    let games = ds.recorded_games();
    let grid = ds.grid();
    let mut sq_sum = 0.0;
    let mut abs_sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for trial in 0..trials {
        let mut rng = substream(seed, "loocv", cand_index, trial as u64);
        let (t_idx, (i, j)) = games[rng.gen_range(0..games.len())];
        let t0 = grid.point(t_idx);
        let y = ds.win_fraction(t_idx, i, j).unwrap();
        let mut held_out = ds.clone();
        held_out.remove(t_idx, i, j);
        match fit_pi_at(&held_out, t0, candidate, method) {
            Ok(pi) => {
                let denom = pi[i] + pi[j];
                if denom > 0.0 {
                    let err = y - pi[j] / denom;
                    sq_sum += err * err;
                    abs_sum += err.abs();
                    used += 1;
                } else {
                    skipped += 1;
                }
            }
            Err(_) => skipped += 1,
        }
    }
    let infeasible = skipped * 2 > trials;
    LoocvScore {
        delta: candidate,
        mean_sq_error: (!infeasible && used > 0).then(|| sq_sum / used as f64),
        mean_abs_error: (!infeasible && used > 0).then(|| abs_sum / used as f64),
        trials_used: used,
        trials_skipped: skipped,
        infeasible,
    }
}

/// Leave-one-out cross-validation over candidate radii: per trial, one
/// recorded game (a time and an edge) is sampled uniformly, its aggregate
/// outcome removed, strengths refit at that time, and the squared prediction
/// error of the held-out win fraction recorded. Returns the candidate with
/// the smallest mean squared error (ties toward the smallest radius) and the
/// per-candidate score table, sorted by radius.
///
/// Trials whose removal makes the fit fail (for example a disconnected union
/// graph) are skipped; a candidate with more than half its trials skipped is
/// infeasible. Deterministic given (seed, candidates, trials).
pub fn loocv_select(
    ds: &ComparisonDataset,
    _t: f64,
    candidates: &[f64],
    trials: usize,
    seed: u64,
    method: Method,
) -> Result<(f64, Vec<LoocvScore>)> {
    if candidates.is_empty() {
        return Err(DrcError::InvalidParameter(
            "LOOCV needs at least one candidate delta".into(),
        ));
    }
    if trials == 0 {
        return Err(DrcError::InvalidParameter(
            "LOOCV needs at least one trial".into(),
        ));
    }
    if ds.total_recorded() < 2 {
        return Err(DrcError::InvalidParameter(
            "LOOCV needs at least two recorded comparisons".into(),
        ));
    }
    let mut cands = candidates.to_vec();
    if cands.iter().any(|d| !d.is_finite() || *d < 0.5) {
        return Err(DrcError::InvalidParameter(format!(
            "candidate radii {cands:?} must be finite and >= 1/2"
        )));
    }
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();

    let eval = |(idx, &delta): (usize, &f64)| {
        loocv_candidate(ds, delta, trials, seed, idx as u64, method)
    };
    // reduced in candidate order either way, so both modes agree bitwise
    #[cfg(feature = "parallel")]
    let scores: Vec<LoocvScore> = cands.par_iter().enumerate().map(eval).collect();
    #[cfg(not(feature = "parallel"))]
    let scores: Vec<LoocvScore> = cands.iter().enumerate().map(eval).collect();

    let mut best: Option<(f64, f64)> = None;
    for s in &scores {
        if let Some(mse) = s.mean_sq_error {
            // strict improvement only: ties keep the smaller radius
            if best.map_or(true, |(_, b)| mse < b) {
                best = Some((s.delta, mse));
            }
        }
    }
    match best {
        Some((delta, _)) => Ok((delta, scores)),
        None => Err(DrcError::InvalidParameter(
            "every candidate delta was infeasible".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TimeGrid;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn zero_drift_uses_the_whole_grid() {
        assert_eq!(delta_star_l2(0.0, 2.0, 50, 5, 0.1, 40).unwrap(), 40.0);
        assert_eq!(delta_star_linf(0.0, 2.0, 50, 5, 0.1, 40, None).unwrap(), 40.0);
        // static grid still respects the lower clamp
        assert_eq!(delta_star_l2(0.0, 1.0, 10, 1, 1.0, 0).unwrap(), 0.5);
    }

    #[test]
    fn unit_parameters_collapse_to_t_two_thirds() {
        // b = 1, M = 1/2, n = 1, L = 1, p_min = 1: every factor is 1, so the
        // rule is just T^{2/3}; T = 125 makes that exactly 25.
        let d = delta_star_l2(0.5, 1.0, 1, 1, 1.0, 125).unwrap();
        assert_abs_diff_eq!(d, 25.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_n_at_log_n_one() {
        // n = e so log n = 1: gamma = 1 + max{1, 1/sqrt(e)} = 2
        let g = gamma_n(1.0, std::f64::consts::E).unwrap();
        assert_abs_diff_eq!(g, 2.0, epsilon = 1e-12);
        assert!(gamma_n(1.0, 1.0).is_err());
    }

    #[test]
    fn l2_rule_matches_log_route_recomputation() {
        // Independent evaluation of the closed form through logarithms.
        let (m, b, n, l, p_min, t_big) = (1.0, 2.0, 100usize, 5u32, 0.05, 125usize);
        let raw = delta_star_l2_raw(m, b, n, l, p_min) * (t_big as f64).powf(2.0 / 3.0);
        let log_route = ((2.0 / 3.0) * b.ln() + (2.0 / 3.0) * (t_big as f64).ln()
            - (2.0 / 3.0) * (2.0 * m).ln()
            - (n as f64).ln()
            - (f64::from(l) * p_min).ln() / 3.0)
            .exp();
        assert!((raw - log_route).abs() / log_route < 1e-12);
        // b^{2/3} cancels (2M)^{2/3} here and the result falls below 1/2,
        // exercising the lower clamp
        assert!(raw < 0.5);
        assert_eq!(delta_star_l2(m, b, n, l, p_min, t_big).unwrap(), 0.5);
    }

    #[test]
    fn linf_rule_matches_log_route_recomputation() {
        let (m, b, n, l, p_min, t_big) = (0.8f64, 1.5f64, 60usize, 3u32, 0.1f64, 200usize);
        let g = gamma_n(b, n as f64).unwrap();
        let log_n = (n as f64).ln();
        let log_route = ((2.0 / 3.0) * g.ln() + log_n.ln() / 3.0
            + (2.0 / 3.0) * (t_big as f64).ln()
            - (2.0 / 3.0) * (2.0 * m).ln()
            - (n as f64).ln()
            - (7.0 / 3.0) * b.ln()
            - (f64::from(l) * p_min).ln() / 3.0)
            .exp();
        let got = delta_star_linf(m, b, n, l, p_min, t_big, None).unwrap();
        assert!((got - log_route.min(t_big as f64).max(0.5)).abs() / got < 1e-12);
        // explicit gamma overrides the internal one
        let forced = delta_star_linf(m, b, n, l, p_min, t_big, Some(g)).unwrap();
        assert_eq!(got, forced);
    }

    #[test]
    fn rules_are_monotone_over_sampled_grids() {
        use rand::Rng;
        let mut rng = StdRng::seed_from_u64(77);
        for _ in 0..200 {
            let m = rng.gen_range(0.01..3.0);
            let b = rng.gen_range(1.0..4.0);
            let n = rng.gen_range(2..200);
            let l = rng.gen_range(1..20);
            let p_min = rng.gen_range(0.01..1.0);
            let t_big = rng.gen_range(1..500);

            let base = delta_star_l2(m, b, n, l, p_min, t_big).unwrap();
            // nonincreasing in M and n, nondecreasing in T
            assert!(delta_star_l2(m * 2.0, b, n, l, p_min, t_big).unwrap() <= base);
            assert!(delta_star_l2(m, b, n * 2, l, p_min, t_big).unwrap() <= base);
            assert!(delta_star_l2(m, b, n, l, p_min, t_big * 2).unwrap() >= base);
            assert!(base >= 0.5 && base <= t_big as f64);

            if n > 2 {
                let base = delta_star_linf(m, b, n, l, p_min, t_big, None).unwrap();
                assert!(delta_star_linf(m * 2.0, b, n, l, p_min, t_big, None).unwrap() <= base);
                assert!(delta_star_linf(m, b, n * 2, l, p_min, t_big, None).unwrap() <= base);
                assert!(delta_star_linf(m, b, n, l, p_min, t_big * 2, None).unwrap() >= base);
                assert!(base >= 0.5 && base <= t_big as f64);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(delta_star_l2(-1.0, 1.0, 5, 1, 0.5, 10).is_err());
        assert!(delta_star_l2(1.0, 0.5, 5, 1, 0.5, 10).is_err());
        assert!(delta_star_l2(1.0, 1.0, 0, 1, 0.5, 10).is_err());
        assert!(delta_star_l2(1.0, 1.0, 5, 0, 0.5, 10).is_err());
        assert!(delta_star_l2(1.0, 1.0, 5, 1, 0.0, 10).is_err());
        assert!(delta_star_l2(1.0, 1.0, 5, 1, 1.5, 10).is_err());
    }

    #[test]
    fn default_candidate_grid_shape() {
        let c = default_candidates(64);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert!(c.iter().all(|&d| (0.5..=64.0).contains(&d)));
        assert_eq!(*c.last().unwrap(), 64.0);
        // static grid collapses to the single value 1/2
        assert_eq!(default_candidates(0), vec![0.5]);
    }

    fn dense_dataset(seed: u64) -> ComparisonDataset {
        use rand::Rng;
        let mut rng = StdRng::seed_from_u64(seed);
        let n = 5;
        let t_big = 8;
        let mut ds = ComparisonDataset::new(n, TimeGrid::new(t_big), 4);
        for t_idx in 0..=t_big {
            for i in 0..n {
                for j in (i + 1)..n {
                    ds.record(t_idx, i, j, rng.gen_range(0..=4), 4);
                }
            }
        }
        ds
    }

    #[test]
    fn single_candidate_is_returned() {
        let ds = dense_dataset(1);
        let (best, scores) = loocv_select(&ds, 1.0, &[2.0], 10, 9, Method::Drc).unwrap();
        assert_eq!(best, 2.0);
        assert_eq!(scores.len(), 1);
        assert!(!scores[0].infeasible);
    }

    #[test]
    fn infeasible_candidate_loses() {
        // two items, one game per time: removing the sampled game empties a
        // radius-1/2 window, so only the full-grid radius is feasible
        let t_big = 10;
        let mut ds = ComparisonDataset::new(2, TimeGrid::new(t_big), 4);
        for t_idx in 0..=t_big {
            ds.record(t_idx, 0, 1, 2, 4);
        }
        let (best, scores) =
            loocv_select(&ds, 1.0, &[0.5, t_big as f64], 20, 3, Method::Drc).unwrap();
        assert_eq!(best, t_big as f64);
        assert!(scores[0].infeasible);
        assert!(scores[0].mean_sq_error.is_none());
        assert!(!scores[1].infeasible);

        // only infeasible candidates: selection fails
        assert!(loocv_select(&ds, 1.0, &[0.5], 20, 3, Method::Drc).is_err());
    }

    #[test]
    fn selection_is_deterministic_in_the_seed() {
        let ds = dense_dataset(2);
        let cands = [1.0, 2.0, 4.0, 8.0];
        let a = loocv_select(&ds, 1.0, &cands, 30, 42, Method::Drc).unwrap();
        let b = loocv_select(&ds, 1.0, &cands, 30, 42, Method::Drc).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        // candidate order must not matter
        let shuffled = [8.0, 1.0, 4.0, 2.0];
        let c = loocv_select(&ds, 1.0, &shuffled, 30, 42, Method::Drc).unwrap();
        assert_eq!(a.0, c.0);
        assert_eq!(a.1, c.1);
    }

    #[test]
    fn all_methods_produce_scores() {
        let ds = dense_dataset(3);
        for method in [Method::Drc, Method::Mle, Method::Borda] {
            let (best, scores) = loocv_select(&ds, 1.0, &[2.0, 8.0], 15, 5, method).unwrap();
            assert!(best == 2.0 || best == 8.0, "{method}");
            assert!(scores.iter().any(|s| s.mean_sq_error.is_some()));
            for s in &scores {
                if let (Some(mse), Some(mae)) = (s.mean_sq_error, s.mean_abs_error) {
                    assert!(mse >= 0.0 && mae >= 0.0);
                    // Cauchy-Schwarz on the trial sample
                    assert!(mae * mae <= mse + 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let ds = dense_dataset(4);
        assert!(loocv_select(&ds, 1.0, &[], 10, 1, Method::Drc).is_err());
        assert!(loocv_select(&ds, 1.0, &[2.0], 0, 1, Method::Drc).is_err());
        assert!(loocv_select(&ds, 1.0, &[0.2], 10, 1, Method::Drc).is_err());
        let empty = ComparisonDataset::new(3, TimeGrid::new(2), 1);
        assert!(loocv_select(&empty, 1.0, &[1.0], 10, 1, Method::Drc).is_err());
    }

    #[test]
    fn fixed_rule_resolves_and_validates() {
        let ds = dense_dataset(5);
        assert_eq!(
            DeltaRule::Fixed(3.0).resolve(&ds, 0.5, 1, Method::Drc).unwrap(),
            3.0
        );
        assert!(DeltaRule::Fixed(0.1).resolve(&ds, 0.5, 1, Method::Drc).is_err());
        let theory = DeltaRule::TheoryL2 {
            m: 1.0,
            b: 2.0,
            l: 4,
            p_min: 0.5,
        };
        let d = theory.resolve(&ds, 0.5, 1, Method::Drc).unwrap();
        assert_eq!(d, delta_star_l2(1.0, 2.0, 5, 4, 0.5, 8).unwrap());
    }
}
