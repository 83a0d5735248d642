//! Serialization: match-result CSV ingestion, dataset persistence in a
//! versioned line-delimited text format with a checksum, and experiment
//! report emission as CSV or JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{DrcError, Result};
use crate::model::{ComparisonDataset, GroundTruth, TimeGrid};
use crate::sweep::ExperimentReport;

pub const DATASET_FORMAT_VERSION: &str = "v1";
const MATCH_HEADER: &str = "season,round,team_i,team_j,winner";

/// One season of ingested match results: the dataset on the round grid and
/// the team-name table (index = item id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchData {
    pub season: String,
    pub names: Vec<String>,
    pub dataset: ComparisonDataset,
}

impl MatchData {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

struct RawMatch {
    round: usize,
    team_i: String,
    team_j: String,
    j_won: bool,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> DrcError {
    DrcError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Load an NFL-style match file: CSV with header
/// `season,round,team_i,team_j,winner`, winner one of `i`/`j`. Returns one
/// entry per season, in order of first appearance.
///
/// Rounds 1..R map to the grid points (r-1)/(R-1); a single-round season is
/// the static grid T=0. Team indices follow first appearance within the
/// season. A pair meeting k times in one round is stored as one edge with k
/// trials; the dataset's L is the maximum meeting count seen.
pub fn load_matches(path: impl AsRef<Path>) -> Result<Vec<MatchData>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == MATCH_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(
                path,
                1,
                format!("expected header {MATCH_HEADER:?}, found {header:?}"),
            ))
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }

    // season -> matches, preserving first-appearance order
    let mut seasons: Vec<(String, Vec<RawMatch>)> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let round: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad round {:?}", fields[1])))?;
        if round < 1 {
            return Err(parse_err(path, line_no, "round must be >= 1"));
        }
        if fields[2] == fields[3] {
            return Err(parse_err(
                path,
                line_no,
                format!("a team cannot play itself ({:?})", fields[2]),
            ));
        }
        let j_won = match fields[4] {
            "j" => true,
            "i" => false,
            other => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("unknown winner token {other:?}, expected \"i\" or \"j\""),
                ))
            }
        };
        let season = fields[0];
        let raw = RawMatch {
            round,
            team_i: fields[2].to_string(),
            team_j: fields[3].to_string(),
            j_won,
        };
        match seasons.iter_mut().find(|(s, _)| s == season) {
            Some((_, v)) => v.push(raw),
            None => seasons.push((season.to_string(), vec![raw])),
        }
    }

    seasons
        .into_iter()
        .map(|(season, matches)| build_season(season, matches))
        .collect()
}

fn build_season(season: String, matches: Vec<RawMatch>) -> Result<MatchData> {
    let mut names: Vec<String> = Vec::new();
    let index = |name: &str, names: &mut Vec<String>| match names.iter().position(|n| n == name)
    {
        Some(i) => i,
        None => {
            names.push(name.to_string());
            names.len() - 1
        }
    };
    let rounds = matches.iter().map(|m| m.round).max().unwrap_or(1);

    // (round index, canonical edge) -> (wins of higher index, meetings)
    let mut tallies: std::collections::BTreeMap<(usize, (usize, usize)), (u32, u32)> =
        std::collections::BTreeMap::new();
    for m in &matches {
        let i = index(&m.team_i, &mut names);
        let j = index(&m.team_j, &mut names);
        let (key, hi_won) = if i < j {
            ((i, j), m.j_won)
        } else {
            ((j, i), !m.j_won)
        };
        let entry = tallies.entry((m.round - 1, key)).or_insert((0, 0));
        entry.0 += u32::from(hi_won);
        entry.1 += 1;
    }
    let l = tallies.values().map(|&(_, t)| t).max().unwrap_or(1);
    let mut dataset = ComparisonDataset::new(names.len(), TimeGrid::new(rounds - 1), l);
    for (&(t_idx, (i, j)), &(wins, trials)) in &tallies {
        dataset.record(t_idx, i, j, wins, trials);
    }
    Ok(MatchData {
        season,
        names,
        dataset,
    })
}

/// Reindex the teams by sorted name, so row order in the source file no
/// longer matters.
pub fn canonicalize(data: &MatchData) -> MatchData {
    let mut sorted: Vec<String> = data.names.clone();
    sorted.sort();
    let remap: Vec<usize> = data
        .names
        .iter()
        .map(|n| sorted.iter().position(|s| s == n).unwrap())
        .collect();
    let grid = data.dataset.grid();
    let mut dataset = ComparisonDataset::new(data.dataset.n(), grid, data.dataset.l_per_edge());
    for t_idx in 0..grid.num_points() {
        for ((i, j), o) in data.dataset.edges_at(t_idx) {
            // wins counts the higher original index; record() re-canonicalizes
            dataset.record(t_idx, remap[i], remap[j], o.wins, o.trials);
        }
    }
    MatchData {
        season: data.season.clone(),
        names: sorted,
        dataset,
    }
}

fn render_dataset(ds: &ComparisonDataset, gt: Option<&GroundTruth>) -> String {
    let mut out = String::new();
    writeln!(out, "drc-dataset {DATASET_FORMAT_VERSION}").unwrap();
    writeln!(out, "n {}", ds.n()).unwrap();
    writeln!(out, "t {}", ds.grid().intervals()).unwrap();
    writeln!(out, "l {}", ds.l_per_edge()).unwrap();
    writeln!(out, "edges {}", ds.total_recorded()).unwrap();
    for t_idx in 0..ds.grid().num_points() {
        for ((i, j), o) in ds.edges_at(t_idx) {
            writeln!(out, "e {t_idx} {i} {j} {} {}", o.wins, o.trials).unwrap();
        }
    }
    match gt {
        Some(gt) => {
            match gt.lipschitz {
                Some(m) => writeln!(out, "truth lipschitz {m}").unwrap(),
                None => writeln!(out, "truth lipschitz none").unwrap(),
            }
            for t_idx in 0..gt.num_grid_points() {
                let row: Vec<String> = gt
                    .weights_at(t_idx)
                    .iter()
                    .map(|w| format!("{w}"))
                    .collect();
                writeln!(out, "w {t_idx} {}", row.join(" ")).unwrap();
            }
        }
        None => writeln!(out, "truth none").unwrap(),
    }
    let digest = Sha256::digest(out.as_bytes());
    writeln!(out, "checksum {digest:x}").unwrap();
    out
}

/// Save a dataset (and optionally its ground truth) as versioned
/// line-delimited text. Counts are integers and reals are decimal strings
/// that parse back to the identical float, so round-trips are bitwise exact.
pub fn save_dataset(
    ds: &ComparisonDataset,
    gt: Option<&GroundTruth>,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, render_dataset(ds, gt))?;
    Ok(())
}

/// Load a dataset written by [`save_dataset`], verifying version and checksum.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(ComparisonDataset, Option<GroundTruth>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;

    let checksum_pos = text
        .rfind("checksum ")
        .ok_or_else(|| parse_err(path, 0, "missing checksum line"))?;
    let body = &text[..checksum_pos];
    let stated = text[checksum_pos..]
        .trim_end()
        .strip_prefix("checksum ")
        .unwrap()
        .to_string();
    let digest = format!("{:x}", Sha256::digest(body.as_bytes()));
    if digest != stated {
        return Err(DrcError::ChecksumMismatch);
    }

    let mut lines = body.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let version = first
        .strip_prefix("drc-dataset ")
        .ok_or_else(|| parse_err(path, 1, "not a drc dataset file"))?;
    if version != DATASET_FORMAT_VERSION {
        return Err(DrcError::VersionMismatch {
            found: version.to_string(),
            expected: DATASET_FORMAT_VERSION.to_string(),
        });
    }

    let mut field = |name: &str| -> Result<usize> {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("missing {name} line")))?;
        line.strip_prefix(name)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse_err(path, line_no, format!("bad {name} line {line:?}")))
    };
    let n = field("n")?;
    let t_intervals = field("t")?;
    let l = field("l")? as u32;
    let edges = field("edges")?;

    let mut ds = ComparisonDataset::new(n, TimeGrid::new(t_intervals), l);
    for _ in 0..edges {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, "truncated edge list"))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = || parse_err(path, line_no, format!("bad edge line {line:?}"));
        if parts.len() != 6 || parts[0] != "e" {
            return Err(bad());
        }
        let t_idx: usize = parts[1].parse().map_err(|_| bad())?;
        let i: usize = parts[2].parse().map_err(|_| bad())?;
        let j: usize = parts[3].parse().map_err(|_| bad())?;
        let wins: u32 = parts[4].parse().map_err(|_| bad())?;
        let trials: u32 = parts[5].parse().map_err(|_| bad())?;
        if t_idx > t_intervals || i >= n || j >= n || i >= j || wins > trials {
            return Err(bad());
        }
        ds.record(t_idx, i, j, wins, trials);
    }

    let (line_no, truth_line) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "missing truth line"))?;
    let gt = match truth_line {
        "truth none" => None,
        other => {
            let lip = other
                .strip_prefix("truth lipschitz ")
                .ok_or_else(|| parse_err(path, line_no, format!("bad truth line {other:?}")))?;
            let lipschitz = if lip == "none" {
                None
            } else {
                Some(lip.parse::<f64>().map_err(|_| {
                    parse_err(path, line_no, format!("bad lipschitz value {lip:?}"))
                })?)
            };
            let mut weights = Vec::with_capacity(t_intervals + 1);
            for expect in 0..=t_intervals {
                let (line_no, line) = lines
                    .next()
                    .ok_or_else(|| parse_err(path, 0, "truncated truth rows"))?;
                let bad = || parse_err(path, line_no, format!("bad truth row {line:?}"));
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != n + 2 || parts[0] != "w" || parts[1] != expect.to_string() {
                    return Err(bad());
                }
                let row: Vec<f64> = parts[2..]
                    .iter()
                    .map(|v| v.parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                weights.push(row);
            }
            let mut gt = GroundTruth::new(weights)?;
            gt.lipschitz = lipschitz;
            Some(gt)
        }
    };
    Ok((ds, gt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format {other:?}, expected csv|json")),
        }
    }
}

pub const AGGREGATE_HEADER: &str = "method,n,T,L,statistic,mean,std_dev,cells";
pub const CELL_HEADER: &str = "method,n,T,L,run,seed,t,delta,d_metric,rel_l2,rel_linf,error";

/// Write the aggregate table of a report: one row per
/// (method, n, T, L, statistic) with mean and standard deviation across runs
/// and grid points. Output bytes are deterministic.
pub fn emit_report(report: &ExperimentReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let bytes = match format {
        ReportFormat::Csv => {
            let mut out = String::new();
            writeln!(out, "{AGGREGATE_HEADER}").unwrap();
            for row in &report.aggregates {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    row.method, row.n, row.t_intervals, row.l, row.statistic, row.mean,
                    row.std_dev, row.cells
                )
                .unwrap();
            }
            out
        }
        ReportFormat::Json => {
            let mut out = serde_json::to_string_pretty(report).expect("report serializes");
            out.push('\n');
            out
        }
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Write the per-cell dump of a report as CSV, one row per evaluation cell,
/// failed cells carrying their error message.
pub fn emit_cells(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{CELL_HEADER}").unwrap();
    for cell in &report.cells {
        match (&cell.record, &cell.error) {
            (Some(r), _) => writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},",
                cell.method,
                cell.n,
                cell.t_intervals,
                cell.l,
                cell.run,
                cell.seed,
                r.t,
                cell.delta,
                r.d_metric,
                r.rel_l2,
                r.rel_linf
            )
            .unwrap(),
            (None, Some(err)) => writeln!(
                out,
                "{},{},{},{},{},{},{},{},,,,{}",
                cell.method,
                cell.n,
                cell.t_intervals,
                cell.l,
                cell.run,
                cell.seed,
                cell.t,
                cell.delta,
                err.replace(',', ";")
            )
            .unwrap(),
            (None, None) => unreachable!("cell is either scored or failed"),
        }
    }
    fs::write(path, out)?;
    Ok(())
}
