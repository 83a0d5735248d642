//! Command-line harness: Monte-Carlo sweeps over synthetic data, season
//! ranking from match files, single-shot estimation, dataset generation and
//! cross-validated radius selection.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use drc::bandwidth::{default_candidates, loocv_select, DEFAULT_LOOCV_TRIALS};
use drc::error::{DrcError, Result};
use drc::graph::{diagnostics, neighborhood};
use drc::io::{
    canonicalize, emit_cells, emit_report, load_dataset, load_matches, save_dataset, ReportFormat,
};
use drc::model::{ComparisonDataset, GroundTruth};
use drc::spectral::increase_delta_until_connected;
use drc::sweep::{
    estimate_with, parse_delta_policy, parse_normalization, run_sweep, DeltaPolicy, ExecMode,
    SweepConfig,
};
use drc::synth::{generate, SynthConfig};
use drc::Method;

#[derive(Parser)]
#[command(
    name = "drc",
    version,
    about = "Time-varying rankings from timestamped pairwise comparisons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep from a TOML config and write report files.
    Sweep(SweepArgs),
    /// Rank teams from a match CSV at a query time.
    Rank(RankArgs),
    /// Estimate strengths from a saved dataset at one query time.
    Estimate(EstimateArgs),
    /// Generate a synthetic dataset and save it.
    Generate(GenerateArgs),
    /// Cross-validate the neighborhood radius on a saved dataset.
    Loocv(LoocvArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    emit_config: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    /// Worker threads; 1 forces sequential evaluation.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RankArgs {
    /// Match CSV with header season,round,team_i,team_j,winner.
    matches: PathBuf,
    /// Season to rank; defaults to the only season in the file.
    #[arg(long)]
    season: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    at_time: f64,
    /// theory, loocv or fixed:<value>.
    #[arg(long, default_value = "loocv")]
    delta: String,
    #[arg(long, default_value = "drc")]
    method: Method,
    #[arg(long, default_value = "empirical")]
    normalization: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of rows to print.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct EstimateArgs {
    /// Dataset file written by `drc generate` or the library.
    dataset: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// theory, loocv or fixed:<value>. theory needs stored ground truth.
    #[arg(long, default_value = "fixed:1")]
    delta: String,
    #[arg(long, default_value = "drc")]
    method: Method,
    #[arg(long, default_value = "empirical")]
    normalization: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    /// Number of grid intervals T.
    #[arg(long)]
    t_intervals: usize,
    /// Comparisons per edge per time.
    #[arg(long, default_value_t = 1)]
    l: u32,
    /// Edge probability range lo,hi; defaults to [1/n, log n / n].
    #[arg(long, value_parser = parse_pair)]
    p_range: Option<(f64, f64)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LoocvArgs {
    dataset: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Comma-separated candidate radii; defaults to a geometric grid.
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_LOOCV_TRIALS)]
    trials: usize,
    #[arg(long, default_value = "drc")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected lo,hi, got {s:?}"));
    }
    let lo = parts[0].parse().map_err(|e| format!("{e}"))?;
    let hi = parts[1].parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

fn exit_code_for(err: &DrcError) -> u8 {
    match err {
        DrcError::InvalidParameter(_) => 2,
        DrcError::Io(_)
        | DrcError::Parse { .. }
        | DrcError::VersionMismatch { .. }
        | DrcError::ChecksumMismatch
        | DrcError::DimensionMismatch(_)
        | DrcError::IndexOutOfRange { .. }
        | DrcError::NonPositiveWeight { .. } => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(args) => cmd_sweep(args),
        Command::Rank(args) => cmd_rank(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Loocv(args) => cmd_loocv(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => SweepConfig::from_toml_str(&std::fs::read_to_string(path)?)?,
        None if args.emit_config => SweepConfig {
            n: vec![50],
            t: vec![10, 50, 100],
            l: 5,
            runs: 30,
            methods: vec![Method::Drc, Method::Mle, Method::Borda],
            p_range: None,
            delta: "theory".into(),
            seed: 0,
            normalization: "empirical".into(),
            loocv_trials: DEFAULT_LOOCV_TRIALS,
        },
        None => {
            return Err(DrcError::InvalidParameter(
                "--config is required (or --emit-config for a template)".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.emit_config {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }

    let mode = match args.jobs {
        Some(1) => ExecMode::Sequential,
        #[cfg(feature = "parallel")]
        Some(jobs) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()
                .map_err(|e| DrcError::InvalidParameter(format!("--jobs {jobs}: {e}")))?;
            ExecMode::Parallel
        }
        _ => ExecMode::Parallel,
    };
    let report = run_sweep(&cfg, mode)?;

    std::fs::create_dir_all(&args.out_dir)?;
    let ext = match args.format {
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    };
    let report_path = args.out_dir.join(format!("report.{ext}"));
    let cells_path = args.out_dir.join("cells.csv");
    emit_report(&report, &report_path, args.format)?;
    emit_cells(&report, &cells_path)?;
    let failed = report.cells.iter().filter(|c| c.record.is_none()).count();
    println!(
        "wrote {} and {} ({} cells, {failed} failed)",
        report_path.display(),
        cells_path.display(),
        report.cells.len()
    );
    Ok(())
}

fn resolve_delta(
    policy: DeltaPolicy,
    ds: &ComparisonDataset,
    gt: Option<&GroundTruth>,
    t: f64,
    seed: u64,
    method: Method,
    trials: usize,
) -> Result<f64> {
    match policy {
        DeltaPolicy::Fixed(v) => Ok(v),
        DeltaPolicy::Loocv => {
            let candidates = default_candidates(ds.grid().intervals());
            let (best, scores) = loocv_select(ds, t, &candidates, trials, seed, method)?;
            for s in &scores {
                match s.mean_sq_error {
                    Some(mse) => println!("delta {:>8.3}  mse {mse:.6}", s.delta),
                    None => println!("delta {:>8.3}  infeasible", s.delta),
                }
            }
            println!("selected delta* = {best}");
            Ok(best)
        }
        DeltaPolicy::Theory => {
            let gt = gt.ok_or_else(|| {
                DrcError::InvalidParameter(
                    "theory delta rule needs ground truth (drift constant and range)".into(),
                )
            })?;
            let m = gt.lipschitz.unwrap_or_else(|| gt.empirical_lipschitz());
            let base = drc::bandwidth::delta_star_l2(
                m,
                gt.b_max(),
                ds.n(),
                ds.l_per_edge(),
                0.5,
                ds.grid().intervals(),
            )?;
            increase_delta_until_connected(ds, t, base)
        }
    }
}

fn cmd_rank(args: RankArgs) -> Result<()> {
    let seasons = load_matches(&args.matches)?;
    let data = match &args.season {
        Some(s) => seasons
            .iter()
            .find(|d| &d.season == s)
            .ok_or_else(|| DrcError::InvalidParameter(format!("season {s:?} not in file")))?,
        None if seasons.len() == 1 => &seasons[0],
        None => {
            let names: Vec<&str> = seasons.iter().map(|d| d.season.as_str()).collect();
            return Err(DrcError::InvalidParameter(format!(
                "file has {} seasons ({}), pick one with --season",
                seasons.len(),
                names.join(", ")
            )));
        }
    };
    let data = canonicalize(data);
    let policy = parse_delta_policy(&args.delta)?;
    let normalization = parse_normalization(&args.normalization)?;
    let delta = resolve_delta(
        policy,
        &data.dataset,
        None,
        args.at_time,
        args.seed,
        args.method,
        DEFAULT_LOOCV_TRIALS,
    )?;
    let est = estimate_with(args.method, &data.dataset, args.at_time, delta, normalization)?;
    println!(
        "season {} at t={} ({}, delta={delta})",
        data.season, args.at_time, args.method
    );
    for (pos, &item) in est.ranking.iter().take(args.top).enumerate() {
        println!("{:>3}. {:<24} {:.6}", pos + 1, data.names[item], est.pi[item]);
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let (ds, gt) = load_dataset(&args.dataset)?;
    let policy = parse_delta_policy(&args.delta)?;
    let normalization = parse_normalization(&args.normalization)?;
    let delta = resolve_delta(
        policy,
        &ds,
        gt.as_ref(),
        args.t,
        args.seed,
        args.method,
        DEFAULT_LOOCV_TRIALS,
    )?;

    let view = neighborhood(&ds, args.t, delta)?;
    let diag = diagnostics(&view);
    let pairs = (ds.n() * (ds.n() - 1) / 2) as f64;
    println!(
        "t={} delta={delta} edges={} d_min={} d_max={} p_hat={:.4} connected={}",
        args.t,
        diag.n_edges,
        diag.d_min,
        diag.d_max,
        diag.n_edges as f64 / pairs,
        diag.connected
    );
    if let Some(gap) = diag.spectral_gap {
        println!("spectral_gap={gap:.6}");
    }

    if args.method == Method::Drc {
        let p = drc::spectral::build_transition(&view, normalization)?;
        let res = drc::spectral::stationary_distribution(&p, args.t).map_err(|e| match e {
            DrcError::Disconnected { t, .. } => DrcError::Disconnected { t, delta },
            other => other,
        })?;
        println!("iterations={} lazy={}", res.iterations, res.lazy);
        print_estimate(&res.estimate);
    } else {
        let est = estimate_with(args.method, &ds, args.t, delta, normalization)?;
        print_estimate(&est);
    }
    Ok(())
}

fn print_estimate(est: &drc::model::StrengthEstimate) {
    for (pos, &item) in est.ranking.iter().enumerate() {
        println!("{:>3}. item {:<6} {:.6}", pos + 1, item, est.pi[item]);
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mut cfg = SynthConfig::new(args.n, args.t_intervals, args.l).with_seed(args.seed);
    if let Some((lo, hi)) = args.p_range {
        cfg = cfg.with_p_range(lo, hi);
    }
    let (ds, gt) = generate(&cfg)?;
    save_dataset(&ds, Some(&gt), &args.out)?;
    println!(
        "wrote {} (n={}, T={}, L={}, {} recorded edges)",
        args.out.display(),
        ds.n(),
        ds.grid().intervals(),
        ds.l_per_edge(),
        ds.total_recorded()
    );
    Ok(())
}

fn cmd_loocv(args: LoocvArgs) -> Result<()> {
    let (ds, _) = load_dataset(&args.dataset)?;
    let candidates = match args.candidates {
        Some(c) => c,
        None => default_candidates(ds.grid().intervals()),
    };
    let (best, scores) = loocv_select(&ds, args.t, &candidates, args.trials, args.seed, args.method)?;
    println!("delta,mean_sq_error,mean_abs_error,trials_used,trials_skipped,infeasible");
    for s in &scores {
        println!(
            "{},{},{},{},{},{}",
            s.delta,
            s.mean_sq_error.map_or(String::new(), |v| v.to_string()),
            s.mean_abs_error.map_or(String::new(), |v| v.to_string()),
            s.trials_used,
            s.trials_skipped,
            s.infeasible
        );
    }
    println!("selected delta* = {best}");
    Ok(())
}
