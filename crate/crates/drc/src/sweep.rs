//! Monte-Carlo sweep harness: run the estimators over grids of (n, T, run)
//! cells on synthetic data and aggregate the error metrics, optionally in
//! parallel across cells.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{default_candidates, delta_star_l2, loocv_select};
use crate::baselines::{borda_scores, mle_fit, smooth_counts, Kernel};
use crate::error::{DrcError, Result};
use crate::metrics::{d_metric, rel_l2, rel_linf, ErrorRecord};
use crate::model::{normalized_truth, ComparisonDataset, GroundTruth, StrengthEstimate};
use crate::spectral::{dynamic_rank_centrality, increase_delta_until_connected, NormalizationPolicy};
use crate::synth::{generate, paper_default_p_range, substream, SynthConfig};
use crate::Method;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether cells run on the rayon pool or on the calling thread. Both modes
/// reduce results in the same order, so reports are identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

/// Sweep configuration, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    pub t: Vec<usize>,
    pub l: u32,
    pub runs: usize,
    pub methods: Vec<Method>,
    /// Per-time edge probability range; omitted means [1/n, log n / n].
    #[serde(default)]
    pub p_range: Option<(f64, f64)>,
    /// "theory", "loocv" or "fixed:<value>".
    #[serde(default = "default_delta_policy")]
    pub delta: String,
    #[serde(default)]
    pub seed: u64,
    /// "empirical", "maxdeg:<factor>" or "knownp:<p>".
    #[serde(default = "default_normalization")]
    pub normalization: String,
    #[serde(default = "default_loocv_trials")]
    pub loocv_trials: usize,
}

fn default_delta_policy() -> String {
    "theory".to_string()
}

fn default_normalization() -> String {
    "empirical".to_string()
}

fn default_loocv_trials() -> usize {
    crate::bandwidth::DEFAULT_LOOCV_TRIALS
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaPolicy {
    Theory,
    Loocv,
    Fixed(f64),
}

/// Parse "theory", "loocv" or "fixed:<value>".
pub fn parse_delta_policy(s: &str) -> Result<DeltaPolicy> {
    match s {
        "theory" => Ok(DeltaPolicy::Theory),
        "loocv" => Ok(DeltaPolicy::Loocv),
        other => match other.strip_prefix("fixed:").and_then(|v| v.parse().ok()) {
            Some(v) if v >= 0.5 => Ok(DeltaPolicy::Fixed(v)),
            _ => Err(DrcError::InvalidParameter(format!(
                "delta policy {s:?}: expected theory, loocv or fixed:<value >= 0.5>"
            ))),
        },
    }
}

/// Parse "empirical", "maxdeg:<factor>" or "knownp:<p>".
pub fn parse_normalization(s: &str) -> Result<NormalizationPolicy> {
    if s == "empirical" {
        return Ok(NormalizationPolicy::EmpiricalP);
    }
    if let Some(v) = s.strip_prefix("maxdeg:").and_then(|v| v.parse().ok()) {
        if v >= 1.0 {
            return Ok(NormalizationPolicy::MaxDegree { factor: v });
        }
    }
    if let Some(v) = s.strip_prefix("knownp:").and_then(|v| v.parse::<f64>().ok()) {
        if v > 0.0 && v <= 1.0 {
            return Ok(NormalizationPolicy::KnownP { p_delta: v });
        }
    }
    Err(DrcError::InvalidParameter(format!(
        "normalization {s:?}: expected empirical, maxdeg:<factor >= 1> or knownp:<p in (0,1]>"
    )))
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text)
            .map_err(|e| DrcError::InvalidParameter(format!("bad sweep config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.t.is_empty() || self.methods.is_empty() || self.runs == 0 {
            return Err(DrcError::InvalidParameter(
                "sweep needs nonempty n, t, methods and runs >= 1".into(),
            ));
        }
        if self.l < 1 {
            return Err(DrcError::InvalidParameter("l must be >= 1".into()));
        }
        if let Some((lo, hi)) = self.p_range {
            if !(0.0 < lo && lo <= hi && hi <= 1.0) {
                return Err(DrcError::InvalidParameter(format!(
                    "p_range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"
                )));
            }
        }
        parse_delta_policy(&self.delta)?;
        parse_normalization(&self.normalization)?;
        Ok(())
    }

    fn p_range_for(&self, n: usize) -> (f64, f64) {
        self.p_range.unwrap_or_else(|| paper_default_p_range(n))
    }
}

/// One evaluated (method, n, T, run, grid point) cell: either an error record
/// or a failure reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: String,
    pub n: usize,
    pub t_intervals: usize,
    pub l: u32,
    pub run: usize,
    pub seed: u64,
    pub t: f64,
    pub delta: f64,
    pub record: Option<ErrorRecord>,
    pub error: Option<String>,
}

/// Mean/std of one statistic over all succeeded cells of a (method, n, T, L)
/// group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub n: usize,
    pub t_intervals: usize,
    pub l: u32,
    pub statistic: String,
    pub mean: f64,
    pub std_dev: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// The effective configuration, rendered as TOML.
    pub config_echo: String,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<AggregateRow>,
}

/// Derive the per-dataset seed for a sweep cell from the master seed.
pub fn cell_seed(master: u64, n: usize, t_intervals: usize, run: usize) -> u64 {
    let key = ((n as u64) << 32) | t_intervals as u64;
    substream(master, "sweep-cell", key, run as u64).gen()
}

/// Fit one method at one query time.
pub fn estimate_with(
    method: Method,
    ds: &ComparisonDataset,
    t: f64,
    delta: f64,
    normalization: NormalizationPolicy,
) -> Result<StrengthEstimate> {
    match method {
        Method::Drc => dynamic_rank_centrality(ds, t, delta, normalization).map(|r| r.estimate),
        Method::Mle => {
            let t_big = ds.grid().intervals();
            let h = if t_big == 0 { 1.0 } else { delta / t_big as f64 };
            let x = smooth_counts(ds, t, h, Kernel::Boxcar)?;
            mle_fit(&x, 0.0, 20_000, 1e-8)
        }
        Method::Borda => borda_scores(ds, t, delta).map(|b| StrengthEstimate::from_scores(t, b.scores)),
    }
}

fn score_estimate(
    gt: &GroundTruth,
    grid_index: usize,
    method: Method,
    est: &StrengthEstimate,
) -> ErrorRecord {
    let truth = normalized_truth(gt, grid_index).expect("grid index in range");
    ErrorRecord {
        t: est.t,
        method: method.name().to_string(),
        d_metric: d_metric(&truth.pi, &est.ranking).expect("matching dimensions"),
        rel_l2: rel_l2(&truth.pi, &est.pi),
        rel_linf: rel_linf(&truth.pi, &est.pi),
        top_k_overlap: None,
    }
}

fn failed_cells(
    cfg: &SweepConfig,
    n: usize,
    t_intervals: usize,
    run: usize,
    seed: u64,
    reason: &str,
) -> Vec<CellResult> {
    let grid = crate::model::TimeGrid::new(t_intervals);
    let mut cells = Vec::new();
    for t_idx in 0..grid.num_points() {
        for &method in &cfg.methods {
            cells.push(CellResult {
                method: method.name().to_string(),
                n,
                t_intervals,
                l: cfg.l,
                run,
                seed,
                t: grid.point(t_idx),
                delta: f64::NAN,
                record: None,
                error: Some(reason.to_string()),
            });
        }
    }
    cells
}

fn evaluate_dataset(cfg: &SweepConfig, n: usize, t_intervals: usize, run: usize) -> Vec<CellResult> {
    let seed = cell_seed(cfg.seed, n, t_intervals, run);
    let p_range = cfg.p_range_for(n);
    let synth = SynthConfig::new(n, t_intervals, cfg.l)
        .with_p_range(p_range.0, p_range.1)
        .with_seed(seed);
    let (ds, gt) = match generate(&synth) {
        Ok(pair) => pair,
        Err(e) => return failed_cells(cfg, n, t_intervals, run, seed, &e.to_string()),
    };
    let policy = parse_delta_policy(&cfg.delta).expect("validated");
    let normalization = parse_normalization(&cfg.normalization).expect("validated");

    // base radius per policy; the theory rule is refined per grid point by
    // escalating until the union graph connects
    let base_delta = match policy {
        DeltaPolicy::Fixed(v) => Ok(v),
        DeltaPolicy::Theory => {
            let m = gt.lipschitz.unwrap_or_else(|| gt.empirical_lipschitz());
            delta_star_l2(m, gt.b_max(), n, cfg.l, p_range.0, t_intervals)
        }
        DeltaPolicy::Loocv => {
            let candidates = default_candidates(t_intervals);
            loocv_select(&ds, 1.0, &candidates, cfg.loocv_trials, seed, Method::Drc)
                .map(|(best, _)| best)
        }
    };
    let base_delta = match base_delta {
        Ok(d) => d,
        Err(e) => return failed_cells(cfg, n, t_intervals, run, seed, &e.to_string()),
    };

    let grid = ds.grid();
    let mut cells = Vec::new();
    for t_idx in 0..grid.num_points() {
        let t = grid.point(t_idx);
        let delta = match policy {
            DeltaPolicy::Theory => {
                increase_delta_until_connected(&ds, t, base_delta).unwrap_or(base_delta)
            }
            _ => base_delta,
        };
        for &method in &cfg.methods {
            let (record, error) = match estimate_with(method, &ds, t, delta, normalization) {
                Ok(est) => (Some(score_estimate(&gt, t_idx, method, &est)), None),
                Err(e) => (None, Some(e.to_string())),
            };
            cells.push(CellResult {
                method: method.name().to_string(),
                n,
                t_intervals,
                l: cfg.l,
                run,
                seed,
                t,
                delta,
                record,
                error,
            });
        }
    }
    cells
}

fn aggregate(cells: &[CellResult]) -> Vec<AggregateRow> {
    // group key -> per-statistic samples
    let mut groups: std::collections::BTreeMap<(String, usize, usize, u32), Vec<&ErrorRecord>> =
        std::collections::BTreeMap::new();
    for cell in cells {
        if let Some(r) = &cell.record {
            groups
                .entry((cell.method.clone(), cell.n, cell.t_intervals, cell.l))
                .or_default()
                .push(r);
        }
    }
    let mut rows = Vec::new();
    for ((method, n, t_intervals, l), records) in groups {
        for (statistic, pick) in [
            ("d_metric", (|r: &ErrorRecord| r.d_metric) as fn(&ErrorRecord) -> f64),
            ("rel_l2", |r| r.rel_l2),
            ("rel_linf", |r| r.rel_linf),
        ] {
            let vals: Vec<f64> = records.iter().map(|r| pick(r)).collect();
            let count = vals.len();
            let mean = vals.iter().sum::<f64>() / count as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
            rows.push(AggregateRow {
                method: method.clone(),
                n,
                t_intervals,
                l,
                statistic: statistic.to_string(),
                mean,
                std_dev: var.sqrt(),
                cells: count,
            });
        }
    }
    rows
}

/// Run the full sweep: for every (n, T, run) cell generate a dataset with a
/// derived seed, estimate at every grid point with every method, and
/// aggregate. Cell failures are recorded in the report, never fatal.
pub fn run_sweep(cfg: &SweepConfig, mode: ExecMode) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &n in &cfg.n {
        for &t_intervals in &cfg.t {
            for run in 0..cfg.runs {
                jobs.push((n, t_intervals, run));
            }
        }
    }

    let eval = |&(n, t, run): &(usize, usize, usize)| evaluate_dataset(cfg, n, t, run);
    let nested: Vec<Vec<CellResult>> = match mode {
        ExecMode::Sequential => jobs.iter().map(eval).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                jobs.par_iter().map(eval).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                jobs.iter().map(eval).collect()
            }
        }
    };
    let cells: Vec<CellResult> = nested.into_iter().flatten().collect();
    let aggregates = aggregate(&cells);
    Ok(ExperimentReport {
        config_echo: cfg.to_toml_string(),
        cells,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SweepConfig {
        SweepConfig {
            n: vec![8],
            t: vec![6],
            l: 3,
            runs: 2,
            methods: vec![Method::Drc, Method::Borda],
            p_range: Some((0.5, 0.8)),
            delta: "theory".into(),
            seed: 21,
            normalization: "empirical".into(),
            loocv_trials: 20,
        }
    }

    #[test]
    fn report_has_one_cell_per_grid_point() {
        let cfg = SweepConfig {
            n: vec![10],
            t: vec![10],
            l: 5,
            runs: 1,
            methods: vec![Method::Drc],
            ..small_config()
        };
        let report = run_sweep(&cfg, ExecMode::Sequential).unwrap();
        assert_eq!(report.cells.len(), 11);
        assert!(report.cells.iter().all(|c| c.record.is_some()));
        assert_eq!(report.aggregates.len(), 3);
        assert!(report.aggregates.iter().all(|a| a.cells == 11));
    }

    #[test]
    fn same_seed_gives_identical_reports() {
        let cfg = small_config();
        let a = run_sweep(&cfg, ExecMode::Sequential).unwrap();
        let b = run_sweep(&cfg, ExecMode::Sequential).unwrap();
        assert_eq!(a, b);
        let mut other = cfg;
        other.seed = 22;
        let c = run_sweep(&other, ExecMode::Sequential).unwrap();
        assert_ne!(a.cells, c.cells);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let cfg = small_config();
        let seq = run_sweep(&cfg, ExecMode::Sequential).unwrap();
        let par = run_sweep(&cfg, ExecMode::Parallel).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn failed_cells_do_not_abort_the_sweep() {
        // edge probability so small no connected union graph can appear
        let cfg = SweepConfig {
            n: vec![6],
            t: vec![2],
            p_range: Some((1e-9, 1e-9)),
            runs: 1,
            ..small_config()
        };
        let report = run_sweep(&cfg, ExecMode::Sequential).unwrap();
        assert!(!report.cells.is_empty());
        assert!(report.cells.iter().all(|c| c.record.is_none()));
        assert!(report
            .cells
            .iter()
            .all(|c| c.error.as_deref().is_some_and(|e| !e.is_empty())));
        assert!(report.aggregates.is_empty());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = small_config();
        let text = cfg.to_toml_string();
        let parsed = SweepConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, parsed);
        // defaults fill in missing optional fields
        let minimal = "n = [4]\nt = [3]\nl = 1\nruns = 1\nmethods = [\"drc\"]\n";
        let parsed = SweepConfig::from_toml_str(minimal).unwrap();
        assert_eq!(parsed.delta, "theory");
        assert_eq!(parsed.normalization, "empirical");
        assert_eq!(parsed.loocv_trials, 200);
        assert!(SweepConfig::from_toml_str("n = [4]\nbogus = 1\n").is_err());
    }

    #[test]
    fn policy_parsers() {
        assert_eq!(parse_delta_policy("theory").unwrap(), DeltaPolicy::Theory);
        assert_eq!(parse_delta_policy("loocv").unwrap(), DeltaPolicy::Loocv);
        assert_eq!(
            parse_delta_policy("fixed:2.5").unwrap(),
            DeltaPolicy::Fixed(2.5)
        );
        assert!(parse_delta_policy("fixed:0.1").is_err());
        assert!(parse_delta_policy("nonsense").is_err());

        assert_eq!(
            parse_normalization("empirical").unwrap(),
            NormalizationPolicy::EmpiricalP
        );
        assert_eq!(
            parse_normalization("maxdeg:1.5").unwrap(),
            NormalizationPolicy::MaxDegree { factor: 1.5 }
        );
        assert_eq!(
            parse_normalization("knownp:0.3").unwrap(),
            NormalizationPolicy::KnownP { p_delta: 0.3 }
        );
        assert!(parse_normalization("maxdeg:0.5").is_err());
        assert!(parse_normalization("knownp:2.0").is_err());
        assert!(parse_normalization("bogus").is_err());
    }

    #[test]
    fn cell_seeds_are_distinct_and_stable() {
        let a = cell_seed(1, 10, 20, 0);
        assert_eq!(a, cell_seed(1, 10, 20, 0));
        assert_ne!(a, cell_seed(1, 10, 20, 1));
        assert_ne!(a, cell_seed(1, 11, 20, 0));
        assert_ne!(a, cell_seed(1, 10, 21, 0));
        assert_ne!(a, cell_seed(2, 10, 20, 0));
    }

    #[test]
    fn loocv_policy_runs_end_to_end() {
        let cfg = SweepConfig {
            delta: "loocv".into(),
            runs: 1,
            loocv_trials: 10,
            methods: vec![Method::Drc],
            ..small_config()
        };
        let report = run_sweep(&cfg, ExecMode::Sequential).unwrap();
        assert!(report.cells.iter().all(|c| c.record.is_some()));
        assert!(report.cells.iter().all(|c| c.delta >= 0.5));
    }
}
