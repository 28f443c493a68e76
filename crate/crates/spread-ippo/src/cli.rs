//! Command line surface: train, eval, metrics, plot, compare-seeds.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for runtime failures.

use std::error::Error;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use crate::checkpoint;
use crate::config;
use crate::env::Action;
use crate::export;
use crate::metrics::{self, SeriesStat};
use crate::plot::{self, PlotKind, PlotSpec};
use crate::trainer::{self, RolloutMode, RunRecord};

#[derive(Parser)]
#[command(
    name = "spread-ippo",
    version,
    about = "Cooperative landmark coverage with independent PPO learners"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write per-seed run artifacts.
    Train {
        /// JSON run config; absent fields take the documented defaults.
        #[arg(long)]
        config: PathBuf,
        /// Restrict the run to this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out a saved checkpoint without learning and report metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: u32,
        #[arg(long, value_enum, default_value_t = RolloutMode::Greedy)]
        mode: RolloutMode,
        /// Radius for the coordination and success metrics.
        #[arg(long, default_value_t = 0.10)]
        delta: f64,
        /// Seed for the evaluation episode draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write eval artifacts; defaults to `eval/` next to the
        /// checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flatten an episode log (JSON lines) into a CSV of metric columns.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a chart from a CSV written by `metrics`, `compare-seeds`, or
    /// an eval run.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKindArg,
        #[arg(long)]
        out: PathBuf,
        /// Sliding window smoothing for line plots.
        #[arg(long)]
        window: Option<usize>,
        /// Column to draw (line plots).
        #[arg(long, default_value = "team_reward")]
        column: String,
    },
    /// Aggregate several seed runs into the standard report figures.
    CompareSeeds {
        /// Run directory containing seed<k>/log.jsonl subdirectories.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlotKindArg {
    Line,
    MultilineWithBand,
    Bar,
    Heatmap,
}

/// Parse `argv` and run the selected subcommand, mapping every outcome to
/// a process exit code.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn run(command: Command) -> Result<(), Box<dyn Error>> {
    match command {
        Command::Train { config, seed, out } => run_train(&config, seed, out),
        Command::Eval {
            checkpoint,
            episodes,
            mode,
            delta,
            seed,
            out,
        } => run_eval(&checkpoint, episodes, mode, delta, seed, out),
        Command::Metrics { log, out } => {
            export::export_metrics(&log, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Plot {
            input,
            kind,
            out,
            window,
            column,
        } => run_plot(&input, kind, &out, window, &column),
        Command::CompareSeeds { runs, out } => run_compare_seeds(&runs, &out),
    }
}

fn run_train(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Box<dyn Error>> {
    let mut cfg = config::load_config(config_path)?;
    if let Some(seed) = seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    let summary = trainer::train(&cfg)?;
    for s in &summary.seeds {
        match &s.eval {
            Some(eval) => println!(
                "seed {} done: final-window reward {:+.2}, greedy success {:.1}%",
                s.seed, s.final_reward_window, eval.success_rate
            ),
            None => println!(
                "seed {} done: final-window reward {:+.2}",
                s.seed, s.final_reward_window
            ),
        }
    }
    println!("manifest: {}", summary.manifest_path.display());
    Ok(())
}

fn run_eval(
    checkpoint_path: &Path,
    episodes: u32,
    mode: RolloutMode,
    delta: f64,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), Box<dyn Error>> {
    if episodes == 0 {
        return Err("need at least one evaluation episode".into());
    }
    if !(delta > 0.0) {
        return Err("delta must be positive".into());
    }
    let ckpt = checkpoint::load_checkpoint(checkpoint_path)?;
    let agents = ckpt.to_agents()?;
    let world = ckpt.config_echo.world.clone();
    let (report, rollouts) = trainer::evaluate(&agents, &world, episodes, mode, delta, seed)?;
    let dir = out.unwrap_or_else(|| {
        checkpoint_path
            .parent()
            .map_or_else(|| PathBuf::from("eval"), |p| p.join("eval"))
    });
    let files = trainer::write_eval_artifacts(&dir, &report, &rollouts, &world)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("wrote {} files under {}", files.len(), dir.display());
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "plot".to_string(), |s| s.to_string_lossy().into_owned())
}

fn run_plot(
    input: &Path,
    kind: PlotKindArg,
    out: &Path,
    window: Option<usize>,
    column: &str,
) -> Result<(), Box<dyn Error>> {
    let svg = match kind {
        PlotKindArg::Line => {
            let table = export::read_csv(input)?;
            let values = table.column(column)?.to_vec();
            let spec = PlotSpec::new(PlotKind::Line, column, "episode", column).with_window(window);
            plot::line_svg(&spec, &[SeriesStat::new(column, values)])?
        }
        PlotKindArg::MultilineWithBand => {
            let series = export::read_aggregate_csv(input)?;
            let x0 = series.index.first().copied().unwrap_or(0.0);
            let x_step = if series.index.len() > 1 {
                series.index[1] - series.index[0]
            } else {
                1.0
            };
            let spec = PlotSpec::new(
                PlotKind::MultilineWithBand,
                &file_stem(input),
                &series.index_name,
                "mean",
            )
            .with_x(x0, x_step);
            plot::band_svg(&spec, &[], &series.agg)?
        }
        PlotKindArg::Bar => {
            let table = export::read_csv(input)?;
            let mut labels = Vec::new();
            let mut totals = Vec::new();
            for action in Action::ALL {
                let col = table.column(&format!("action_{}", action.index()))?;
                labels.push(action.name().to_string());
                totals.push(col.iter().sum::<f64>());
            }
            let spec = PlotSpec::new(PlotKind::Bar, "action histogram", "action", "steps");
            plot::bar_svg(&spec, &labels, &totals)?
        }
        PlotKindArg::Heatmap => {
            let grid = export::read_heatmap_csv(input)?;
            plot::heatmap_svg(&grid, &file_stem(input))
        }
    };
    fs::write(out, svg)?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Per-seed episode logs discovered under a run directory.
fn collect_seed_logs(runs: &Path) -> Result<Vec<(u64, Vec<RunRecord>)>, Box<dyn Error>> {
    let mut seed_logs = Vec::new();
    for entry in fs::read_dir(runs)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(digits) = name.strip_prefix("seed") else {
            continue;
        };
        let Ok(seed) = digits.parse::<u64>() else {
            continue;
        };
        let log = entry.path().join("log.jsonl");
        if log.is_file() {
            seed_logs.push((seed, export::read_log(&log)?));
        }
    }
    seed_logs.sort_by_key(|(seed, _)| *seed);
    if seed_logs.is_empty() {
        return Err(format!("no seed<k>/log.jsonl found under {}", runs.display()).into());
    }
    Ok(seed_logs)
}

/// Split a series into at most `max_chunks` equal runs of episodes and
/// average each; returns the chunk means and the chunk length.
fn chunk_means(values: &[f64], max_chunks: usize) -> (Vec<f64>, usize) {
    let chunk = values.len().div_ceil(max_chunks).max(1);
    let means = values
        .chunks(chunk)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    (means, chunk)
}

fn run_compare_seeds(runs: &Path, out: &Path) -> Result<(), Box<dyn Error>> {
    let seed_logs = collect_seed_logs(runs)?;
    let episodes = seed_logs[0].1.len();
    for (seed, records) in &seed_logs {
        if records.len() != episodes {
            return Err(format!(
                "seed {seed} has {} episodes, expected {episodes}",
                records.len()
            )
            .into());
        }
    }
    let n_agents = seed_logs[0].1[0].per_agent_rewards.len();
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let emit = |name: &str, svg: String, written: &mut Vec<String>| -> Result<(), Box<dyn Error>> {
        fs::write(out.join(name), svg)?;
        written.push(name.to_string());
        Ok(())
    };

    // Per-agent reward curves, averaged across seeds then smoothed.
    let per_agent: Vec<SeriesStat> = (0..n_agents)
        .map(|a| {
            let values: Vec<f64> = (0..episodes)
                .map(|e| {
                    seed_logs
                        .iter()
                        .map(|(_, records)| records[e].per_agent_rewards[a])
                        .sum::<f64>()
                        / seed_logs.len() as f64
                })
                .collect();
            SeriesStat::new(format!("agent {a}"), values)
        })
        .collect();
    let spec = PlotSpec::new(
        PlotKind::Line,
        "Per-agent episode reward (mean across seeds)",
        "episode",
        "reward",
    )
    .with_window(Some(100));
    emit("fig2_per_agent_reward.svg", plot::line_svg(&spec, &per_agent)?, &mut written)?;

    // Team reward training curve with a cross-seed band.
    let raw_rewards: Vec<Vec<f64>> = seed_logs
        .iter()
        .map(|(_, records)| records.iter().map(|r| r.team_reward).collect())
        .collect();
    let reward_agg = metrics::aggregate_seeds(&raw_rewards, Some(100))?;
    let reward_traces: Vec<SeriesStat> = seed_logs
        .iter()
        .zip(&raw_rewards)
        .map(|((seed, _), values)| {
            SeriesStat::new(format!("seed {seed}"), metrics::sliding_average(values, 100))
        })
        .collect();
    let spec = PlotSpec::new(
        PlotKind::MultilineWithBand,
        "Team reward (window 100)",
        "episode",
        "reward",
    );
    emit("fig3_team_reward.svg", plot::band_svg(&spec, &reward_traces, &reward_agg)?, &mut written)?;
    export::write_aggregate_csv(
        &out.join("reward_aggregate.csv"),
        "episode",
        (0..episodes).map(|e| e as f64),
        &reward_agg,
    )?;
    written.push("reward_aggregate.csv".to_string());

    // Action histogram over all seeds, episodes and agents.
    let mut totals = [0u64; crate::env::ACTION_COUNT];
    for (_, records) in &seed_logs {
        for r in records {
            for (k, c) in r.action_counts.iter().enumerate() {
                totals[k] += c;
            }
        }
    }
    let labels: Vec<String> = Action::ALL.iter().map(|a| a.name().to_string()).collect();
    let values: Vec<f64> = totals.iter().map(|&c| c as f64).collect();
    let spec = PlotSpec::new(PlotKind::Bar, "Action usage over training", "action", "steps");
    emit("fig6_action_histogram.svg", plot::bar_svg(&spec, &labels, &values)?, &mut written)?;
    {
        let mut csv = String::from("# total steps per discrete action\naction,count\n");
        for (k, &c) in totals.iter().enumerate() {
            csv.push_str(&format!("{k},{c}\n"));
        }
        fs::write(out.join("action_counts.csv"), csv)?;
        written.push("action_counts.csv".to_string());
    }

    // Mean inter-agent distance with a cross-seed band.
    let raw_dist: Vec<Vec<f64>> = seed_logs
        .iter()
        .map(|(_, records)| records.iter().map(|r| r.mean_inter_agent_distance).collect())
        .collect();
    let dist_agg = metrics::aggregate_seeds(&raw_dist, Some(20))?;
    let dist_traces: Vec<SeriesStat> = seed_logs
        .iter()
        .zip(&raw_dist)
        .map(|((seed, _), values)| {
            SeriesStat::new(format!("seed {seed}"), metrics::sliding_average(values, 20))
        })
        .collect();
    let spec = PlotSpec::new(
        PlotKind::MultilineWithBand,
        "Inter-agent distance (window 20)",
        "episode",
        "distance",
    );
    emit("fig7_inter_agent_distance.svg", plot::band_svg(&spec, &dist_traces, &dist_agg)?, &mut written)?;
    export::write_aggregate_csv(
        &out.join("distance_aggregate.csv"),
        "episode",
        (0..episodes).map(|e| e as f64),
        &dist_agg,
    )?;
    written.push("distance_aggregate.csv".to_string());

    // Per-seed success rate over the final stretch of training.
    let tail = episodes.min(100);
    let labels: Vec<String> = seed_logs.iter().map(|(seed, _)| format!("seed {seed}")).collect();
    let rates: Vec<f64> = seed_logs
        .iter()
        .map(|(_, records)| {
            let flags: Vec<bool> = records[episodes - tail..].iter().map(|r| r.success).collect();
            metrics::success_rate(&flags)
        })
        .collect();
    let spec = PlotSpec::new(
        PlotKind::Bar,
        &format!("Success rate, final {tail} episodes"),
        "seed",
        "success %",
    );
    emit("fig8_success_rate.svg", plot::bar_svg(&spec, &labels, &rates)?, &mut written)?;
    {
        let mut csv = format!("# success over the final {tail} training episodes\nseed,success_rate\n");
        for ((seed, _), rate) in seed_logs.iter().zip(&rates) {
            csv.push_str(&format!("{seed},{rate}\n"));
        }
        fs::write(out.join("success_rates.csv"), csv)?;
        written.push("success_rates.csv".to_string());
    }

    // Policy entropy, chunk-averaged to at most 50 points per seed.
    let raw_entropy: Vec<Vec<f64>> = seed_logs
        .iter()
        .map(|(_, records)| {
            records
                .iter()
                .map(|r| r.per_agent_entropy.iter().sum::<f64>() / r.per_agent_entropy.len() as f64)
                .collect()
        })
        .collect();
    let chunk = raw_entropy[0].len().div_ceil(50).max(1);
    let chunked: Vec<Vec<f64>> = raw_entropy.iter().map(|v| chunk_means(v, 50).0).collect();
    let entropy_agg = metrics::aggregate_seeds(&chunked, None)?;
    let entropy_traces: Vec<SeriesStat> = seed_logs
        .iter()
        .zip(&chunked)
        .map(|((seed, _), values)| SeriesStat::new(format!("seed {seed}"), values.clone()))
        .collect();
    let spec = PlotSpec::new(
        PlotKind::MultilineWithBand,
        "Mean policy entropy",
        "episode",
        "entropy (nats)",
    )
    .with_x(0.0, chunk as f64);
    emit("fig9_entropy.svg", plot::band_svg(&spec, &entropy_traces, &entropy_agg)?, &mut written)?;
    export::write_aggregate_csv(
        &out.join("entropy_aggregate.csv"),
        "episode",
        (0..entropy_agg.mean.len()).map(|i| (i * chunk) as f64),
        &entropy_agg,
    )?;
    written.push("entropy_aggregate.csv".to_string());

    for name in &written {
        println!("wrote {}", out.join(name).display());
    }
    Ok(())
}
