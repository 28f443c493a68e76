//! Tabular exports: episode logs to CSV, heatmap grids to CSV, and a small
//! numeric CSV reader for the plotting pipeline.
//!
//! All writers build the full byte string in memory and write it in one
//! shot, so a rerun over the same inputs produces identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

use crate::env::ACTION_COUNT;
use crate::metrics::{HeatmapGrid, SeedAggregate};
use crate::trainer::RunRecord;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("io error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: malformed log record: {source}")]
    MalformedLine {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {message}")]
    MalformedCsv {
        path: String,
        line: usize,
        message: String,
    },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("no records in {0}")]
    Empty(String),
}

fn io_err(path: &Path, source: std::io::Error) -> ExportError {
    ExportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Read a JSON-lines episode log. Blank lines are skipped; anything else
/// that fails to parse is reported with its 1-based line number.
pub fn read_log(path: &Path) -> Result<Vec<RunRecord>, ExportError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord =
            serde_json::from_str(&line).map_err(|source| ExportError::MalformedLine {
                path: path.display().to_string(),
                line: idx + 1,
                source,
            })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(ExportError::Empty(path.display().to_string()));
    }
    Ok(records)
}

/// Column headers for a log with `n_agents` agents, in the order
/// [`metrics_csv_row`] emits values.
fn metrics_csv_header(n_agents: usize) -> Vec<String> {
    let mut cols = vec!["episode".to_string(), "team_reward".to_string()];
    for i in 0..n_agents {
        cols.push(format!("reward_agent{i}"));
    }
    for i in 0..n_agents {
        cols.push(format!("entropy_agent{i}"));
    }
    cols.push("mean_inter_agent_distance".to_string());
    cols.push("coordination".to_string());
    cols.push("success".to_string());
    cols.push("collisions".to_string());
    for k in 0..ACTION_COUNT {
        cols.push(format!("action_{k}"));
    }
    for i in 0..n_agents {
        cols.push(format!("actor_loss_agent{i}"));
        cols.push(format!("critic_loss_agent{i}"));
        cols.push(format!("mean_ratio_agent{i}"));
        cols.push(format!("clip_fraction_agent{i}"));
    }
    cols
}

fn metrics_csv_row(record: &RunRecord, n_agents: usize, out: &mut String) {
    let _ = write!(out, "{},{}", record.episode, record.team_reward);
    for i in 0..n_agents {
        let _ = write!(out, ",{}", record.per_agent_rewards[i]);
    }
    for i in 0..n_agents {
        let _ = write!(out, ",{}", record.per_agent_entropy[i]);
    }
    let _ = write!(
        out,
        ",{},{},{},{}",
        record.mean_inter_agent_distance,
        record.coordination,
        u8::from(record.success),
        record.collisions
    );
    for k in 0..ACTION_COUNT {
        let _ = write!(out, ",{}", record.action_counts[k]);
    }
    for u in &record.updates {
        let _ = write!(
            out,
            ",{},{},{},{}",
            u.actor_loss, u.critic_loss, u.mean_ratio, u.clip_fraction
        );
    }
    out.push('\n');
}

/// Convert an episode log into a flat CSV, one row per episode. A leading
/// comment block documents the layout; every later column is numeric
/// (`success` is 0/1) so the file feeds straight into the plotters.
pub fn export_metrics(log_path: &Path, csv_path: &Path) -> Result<(), ExportError> {
    let records = read_log(log_path)?;
    let n_agents = records[0].per_agent_rewards.len();
    for (idx, r) in records.iter().enumerate() {
        if r.per_agent_rewards.len() != n_agents
            || r.per_agent_entropy.len() != n_agents
            || r.updates.len() != n_agents
        {
            return Err(ExportError::MalformedCsv {
                path: log_path.display().to_string(),
                line: idx + 1,
                message: format!("agent count differs from first record ({n_agents})"),
            });
        }
    }

    let mut out = String::new();
    out.push_str("# one row per training episode, in order\n");
    out.push_str("# team_reward: episode return shared by all agents\n");
    out.push_str("# success: 1 when every landmark had a distinct agent within the success radius at the final step\n");
    out.push_str("# action_k: steps (summed over agents) that chose discrete action k\n");
    out.push_str("# *_agentI: per-agent series; loss/ratio columns report the last optimizer epoch\n");
    out.push_str(&metrics_csv_header(n_agents).join(","));
    out.push('\n');
    for record in &records {
        metrics_csv_row(record, n_agents, &mut out);
    }
    fs::write(csv_path, out).map_err(|e| io_err(csv_path, e))
}

/// A fully numeric CSV with named columns, as written by
/// [`export_metrics`] and the aggregate writers.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    /// Column-major values; `columns[j]` belongs to `headers[j]`.
    pub columns: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Result<&[f64], ExportError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|j| self.columns[j].as_slice())
            .ok_or_else(|| ExportError::MissingColumn(name.to_string()))
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Read a numeric CSV, skipping `#` comment lines. The first remaining
/// line names the columns.
pub fn read_csv(path: &Path) -> Result<CsvTable, ExportError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut headers: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match &headers {
            None => {
                let names: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                columns = vec![Vec::new(); names.len()];
                headers = Some(names);
            }
            Some(names) => {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != names.len() {
                    return Err(ExportError::MalformedCsv {
                        path: path.display().to_string(),
                        line: idx + 1,
                        message: format!("expected {} fields, got {}", names.len(), fields.len()),
                    });
                }
                for (j, field) in fields.iter().enumerate() {
                    let value: f64 =
                        field
                            .trim()
                            .parse()
                            .map_err(|_| ExportError::MalformedCsv {
                                path: path.display().to_string(),
                                line: idx + 1,
                                message: format!("`{field}` is not a number"),
                            })?;
                    columns[j].push(value);
                }
            }
        }
    }
    match headers {
        Some(headers) if !columns.iter().all(Vec::is_empty) => Ok(CsvTable { headers, columns }),
        _ => Err(ExportError::Empty(path.display().to_string())),
    }
}

/// Dump a visitation grid as CSV: a comment line with the grid geometry,
/// then `resolution` rows of counts, row y = 0 (world y = -bound) first.
pub fn write_heatmap_csv(path: &Path, grid: &HeatmapGrid) -> Result<(), std::io::Error> {
    let mut out = String::new();
    let _ = writeln!(out, "# heatmap resolution={} bound={}", grid.resolution, grid.bound);
    for y in 0..grid.resolution {
        for x in 0..grid.resolution {
            if x > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", grid.cell(x, y));
        }
        out.push('\n');
    }
    fs::write(path, out)
}

/// Inverse of [`write_heatmap_csv`].
pub fn read_heatmap_csv(path: &Path) -> Result<HeatmapGrid, ExportError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut resolution: Option<usize> = None;
    let mut bound: Option<f64> = None;
    let mut rows: Vec<Vec<u64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for token in rest.split_whitespace() {
                if let Some(v) = token.strip_prefix("resolution=") {
                    resolution = v.parse().ok();
                } else if let Some(v) = token.strip_prefix("bound=") {
                    bound = v.parse().ok();
                }
            }
            continue;
        }
        let row: Result<Vec<u64>, _> = line.split(',').map(|f| f.trim().parse()).collect();
        let row = row.map_err(|_| ExportError::MalformedCsv {
            path: path.display().to_string(),
            line: idx + 1,
            message: "count rows must be comma separated integers".to_string(),
        })?;
        rows.push(row);
    }
    let resolution = resolution.unwrap_or(rows.len());
    let bound = bound.unwrap_or(1.0);
    if resolution == 0 || rows.len() != resolution || rows.iter().any(|r| r.len() != resolution) {
        return Err(ExportError::MalformedCsv {
            path: path.display().to_string(),
            line: 1,
            message: format!("expected a {resolution}x{resolution} count grid"),
        });
    }
    let mut grid = HeatmapGrid::new(resolution, bound);
    for (y, row) in rows.iter().enumerate() {
        for (x, &count) in row.iter().enumerate() {
            grid.counts[y * resolution + x] = count;
        }
    }
    Ok(grid)
}

/// A cross-seed aggregate series together with its x axis, as stored in
/// aggregate CSV files.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub index_name: String,
    pub index: Vec<f64>,
    pub agg: SeedAggregate,
}

/// Write mean/std aggregate series as CSV, with a shared index column.
/// The seed count rides along in the comment header.
pub fn write_aggregate_csv(
    path: &Path,
    index_name: &str,
    index: impl Iterator<Item = f64>,
    agg: &SeedAggregate,
) -> Result<(), ExportError> {
    assert_eq!(agg.mean.len(), agg.std.len(), "mean/std must align");
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# seeds={} pointwise mean and population std across seeds",
        agg.n_seeds
    );
    let _ = writeln!(out, "{index_name},mean,std");
    let mut wrote = 0usize;
    for (i, x) in index.enumerate() {
        let _ = writeln!(out, "{},{},{}", x, agg.mean[i], agg.std[i]);
        wrote += 1;
    }
    assert_eq!(wrote, agg.mean.len(), "index length must match series");
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Inverse of [`write_aggregate_csv`].
pub fn read_aggregate_csv(path: &Path) -> Result<AggregateSeries, ExportError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut n_seeds = 0usize;
    for line in text.lines() {
        if let Some(rest) = line.trim().strip_prefix('#') {
            for token in rest.split_whitespace() {
                if let Some(v) = token.strip_prefix("seeds=") {
                    n_seeds = v.parse().unwrap_or(0);
                }
            }
        }
    }
    let table = read_csv(path)?;
    let mean = table.column("mean")?.to_vec();
    let std = table.column("std")?.to_vec();
    Ok(AggregateSeries {
        index_name: table.headers[0].clone(),
        index: table.columns[0].clone(),
        agg: SeedAggregate { mean, std, n_seeds },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::UpdateStats;
    use std::io::Write as _;

    fn sample_record(episode: u32, reward: f64) -> RunRecord {
        RunRecord {
            episode,
            team_reward: reward,
            per_agent_rewards: vec![reward; 3],
            per_agent_entropy: vec![1.2, 1.3, 1.4],
            mean_inter_agent_distance: 0.5,
            coordination: 0.25,
            success: episode % 2 == 0,
            collisions: 2,
            action_counts: [10, 20, 15, 15, 15],
            updates: (0..3)
                .map(|i| UpdateStats {
                    actor_loss: -0.01 * f64::from(episode) - i as f64,
                    critic_loss: 0.5,
                    mean_entropy: 1.3,
                    mean_ratio: 1.01,
                    clip_fraction: 0.05,
                })
                .collect(),
        }
    }

    fn write_log(path: &Path, records: &[RunRecord]) {
        let mut file = fs::File::create(path).unwrap();
        for r in records {
            let line = serde_json::to_string(r).unwrap();
            writeln!(file, "{line}").unwrap();
        }
    }

    #[test]
    fn export_produces_one_row_per_episode() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        let csv = dir.path().join("metrics.csv");
        let records: Vec<RunRecord> = (0..3).map(|e| sample_record(e, -40.0 - f64::from(e))).collect();
        write_log(&log, &records);

        export_metrics(&log, &csv).unwrap();
        let table = read_csv(&csv).unwrap();
        assert_eq!(table.rows(), 3);
        assert_eq!(table.column("episode").unwrap(), &[0.0, 1.0, 2.0]);
        assert_eq!(table.column("team_reward").unwrap(), &[-40.0, -41.0, -42.0]);
        assert_eq!(table.column("success").unwrap(), &[1.0, 0.0, 1.0]);
        assert_eq!(table.column("action_1").unwrap(), &[20.0, 20.0, 20.0]);
        assert_eq!(table.column("reward_agent2").unwrap(), &[-40.0, -41.0, -42.0]);
        // Loss columns carry through exactly.
        assert_eq!(table.column("actor_loss_agent1").unwrap()[2], -0.02 - 1.0);
    }

    #[test]
    fn export_bytes_are_rerun_stable() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        let records: Vec<RunRecord> = (0..5).map(|e| sample_record(e, -60.0 + f64::from(e))).collect();
        write_log(&log, &records);

        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        export_metrics(&log, &a).unwrap();
        export_metrics(&log, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        let good = serde_json::to_string(&sample_record(0, -50.0)).unwrap();
        fs::write(&log, format!("{good}\n{{\"episode\": oops}}\n")).unwrap();

        let err = export_metrics(&log, &dir.path().join("out.csv")).unwrap_err();
        match err {
            ExportError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn missing_column_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("t.csv");
        fs::write(&csv, "# note\na,b\n1,2\n").unwrap();
        let table = read_csv(&csv).unwrap();
        assert!(table.column("a").is_ok());
        assert!(matches!(table.column("zz"), Err(ExportError::MissingColumn(_))));
    }

    #[test]
    fn csv_reader_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("t.csv");
        fs::write(&csv, "a,b\n1,2\n3\n").unwrap();
        let err = read_csv(&csv).unwrap_err();
        assert!(matches!(err, ExportError::MalformedCsv { line: 3, .. }));
    }

    #[test]
    fn heatmap_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut grid = HeatmapGrid::new(4, 1.5);
        grid.counts[1] = 7;
        grid.counts[4 * 3 + 2] = 11;
        let path = dir.path().join("heatmap.csv");
        write_heatmap_csv(&path, &grid).unwrap();
        let back = read_heatmap_csv(&path).unwrap();
        assert_eq!(back, grid);
    }

    #[test]
    fn aggregate_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agg.csv");
        let agg = SeedAggregate {
            mean: vec![1.0, 2.0, 3.0],
            std: vec![0.1, 0.0, 0.2],
            n_seeds: 5,
        };
        write_aggregate_csv(&path, "episode", (0..3).map(f64::from), &agg).unwrap();
        let back = read_aggregate_csv(&path).unwrap();
        assert_eq!(back.index_name, "episode");
        assert_eq!(back.index, vec![0.0, 1.0, 2.0]);
        assert_eq!(back.agg, agg);
    }

    #[test]
    fn empty_log_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.jsonl");
        fs::write(&log, "\n\n").unwrap();
        assert!(matches!(read_log(&log), Err(ExportError::Empty(_))));
    }
}
