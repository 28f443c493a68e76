//! Evaluation battery: reward aggregates, smoothing, coverage scores,
//! unique-assignment success, pairwise spread, visitation heatmaps, action
//! histograms, and cross-seed aggregation.
//!
//! Everything here is a pure function over immutable logs, safe to call
//! concurrently.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{dist, dist_sq, Action, WorldState, ACTION_COUNT};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least 2 agents, got {n}")]
    NotEnoughAgents { n: usize },
    #[error("seed series lengths differ: {a} vs {b}")]
    SeriesLengthMismatch { a: usize, b: usize },
    #[error("no input series")]
    EmptyInput,
}

/// Labeled per-episode series, the unit plots and aggregates consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStat {
    pub label: String,
    pub values: Vec<f64>,
}

impl SeriesStat {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        let values = values;
        debug_assert!(values.iter().all(|v| v.is_finite()), "series must be finite");
        SeriesStat {
            label: label.into(),
            values,
        }
    }
}

/// Cumulative episode reward averaged across agents. Per-agent sums come
/// in pre-summed; under a shared team reward all entries coincide.
pub fn mean_episode_reward(per_agent_episode_rewards: &[f64]) -> f64 {
    assert!(!per_agent_episode_rewards.is_empty(), "need at least one agent");
    per_agent_episode_rewards.iter().sum::<f64>() / per_agent_episode_rewards.len() as f64
}

/// Prefix sums of per-step rewards.
pub fn cumulative_reward(step_rewards: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    step_rewards
        .iter()
        .map(|r| {
            acc += r;
            acc
        })
        .collect()
}

/// Moving average with a prefix-clipped window: entry `t` averages
/// `series[max(0, t-w+1) ..= t]`, so the output keeps the input length.
pub fn sliding_average(series: &[f64], w: usize) -> Vec<f64> {
    assert!(w >= 1, "window must be >= 1");
    (0..series.len())
        .map(|t| {
            let start = (t + 1).saturating_sub(w);
            let slice = &series[start..=t];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Fraction of landmarks that have at least one agent within `delta`.
pub fn coordination_score(state: &WorldState, delta: f64) -> f64 {
    assert!(delta > 0.0, "delta must be positive");
    let covered = state
        .landmark_pos
        .iter()
        .filter(|l| {
            state
                .agent_pos
                .iter()
                .any(|p| dist_sq(p, l) <= delta * delta)
        })
        .count();
    covered as f64 / state.landmark_pos.len() as f64
}

/// Unique coverage: true iff each landmark can be paired with a distinct
/// agent within `delta`. Dispatches to exhaustive permutation search for
/// small teams and an augmenting-path matching otherwise.
pub fn success(state: &WorldState, delta: f64) -> bool {
    if state.agent_pos.len() <= 8 {
        success_by_permutation(state, delta)
    } else {
        success_by_matching(state, delta)
    }
}

fn within(state: &WorldState, agent: usize, landmark: usize, delta: f64) -> bool {
    dist_sq(&state.agent_pos[agent], &state.landmark_pos[landmark]) <= delta * delta
}

/// Reference implementation: try every permutation of agents and accept if
/// any covers all landmarks pairwise. Factorial cost; keep N small.
pub fn success_by_permutation(state: &WorldState, delta: f64) -> bool {
    let n = state.agent_pos.len();
    let m = state.landmark_pos.len();
    if m > n {
        return false;
    }
    let mut order: Vec<usize> = (0..n).collect();
    permute_any(&mut order, 0, &mut |perm: &[usize]| {
        (0..m).all(|j| within(state, perm[j], j, delta))
    })
}

fn permute_any(order: &mut [usize], k: usize, accept: &mut impl FnMut(&[usize]) -> bool) -> bool {
    if k == order.len() {
        return accept(order);
    }
    for i in k..order.len() {
        order.swap(k, i);
        if permute_any(order, k + 1, accept) {
            order.swap(k, i);
            return true;
        }
        order.swap(k, i);
    }
    false
}

/// Scalable route: Kuhn's augmenting-path algorithm on the bipartite graph
/// of (landmark, agent) pairs within `delta`; succeeds iff a matching
/// saturates every landmark.
pub fn success_by_matching(state: &WorldState, delta: f64) -> bool {
    let n = state.agent_pos.len();
    let m = state.landmark_pos.len();
    if m > n {
        return false;
    }
    let adj: Vec<Vec<usize>> = (0..m)
        .map(|j| (0..n).filter(|&i| within(state, i, j, delta)).collect())
        .collect();
    let mut landmark_of_agent: Vec<Option<usize>> = vec![None; n];

    fn augment(
        j: usize,
        adj: &[Vec<usize>],
        visited: &mut [bool],
        landmark_of_agent: &mut [Option<usize>],
    ) -> bool {
        for &i in &adj[j] {
            if !visited[i] {
                visited[i] = true;
                let free = match landmark_of_agent[i] {
                    None => true,
                    Some(owner) => augment(owner, adj, visited, landmark_of_agent),
                };
                if free {
                    landmark_of_agent[i] = Some(j);
                    return true;
                }
            }
        }
        false
    }

    for j in 0..m {
        let mut visited = vec![false; n];
        if !augment(j, &adj, &mut visited, &mut landmark_of_agent) {
            return false;
        }
    }
    true
}

/// Percentage of true flags.
pub fn success_rate(flags: &[bool]) -> f64 {
    assert!(!flags.is_empty(), "need at least one episode");
    100.0 * flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}

/// Mean Euclidean distance over all unordered agent pairs.
pub fn avg_inter_agent_distance(state: &WorldState) -> Result<f64, MetricsError> {
    let n = state.agent_pos.len();
    if n < 2 {
        return Err(MetricsError::NotEnoughAgents { n });
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            total += dist(&state.agent_pos[i], &state.agent_pos[j]);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Occupancy counts over a square grid covering `[-bound, bound]^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub resolution: usize,
    pub bound: f64,
    /// Row-major counts, `counts[y * resolution + x]`.
    pub counts: Vec<u64>,
}

impl HeatmapGrid {
    pub fn new(resolution: usize, bound: f64) -> Self {
        assert!(resolution >= 1, "resolution must be >= 1");
        assert!(bound > 0.0, "bound must be positive");
        HeatmapGrid {
            resolution,
            bound,
            counts: vec![0; resolution * resolution],
        }
    }

    /// Cell index along one axis; the upper edge maps into the last cell.
    pub fn bin_axis(&self, coord: f64) -> usize {
        let res = self.resolution as f64;
        let scaled = (coord + self.bound) / (2.0 * self.bound) * res;
        (scaled.floor().max(0.0) as usize).min(self.resolution - 1)
    }

    pub fn record(&mut self, pos: [f64; 2]) {
        let x = self.bin_axis(pos[0]);
        let y = self.bin_axis(pos[1]);
        self.counts[y * self.resolution + x] += 1;
    }

    pub fn cell(&self, x: usize, y: usize) -> u64 {
        self.counts[y * self.resolution + x]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

/// Bin every logged position into a fresh grid.
pub fn visitation_heatmap(
    positions: impl IntoIterator<Item = [f64; 2]>,
    resolution: usize,
    bound: f64,
) -> HeatmapGrid {
    let mut grid = HeatmapGrid::new(resolution, bound);
    for pos in positions {
        grid.record(pos);
    }
    grid
}

/// Frequency of each discrete action over all agents and steps.
pub fn action_histogram(actions: impl IntoIterator<Item = Action>) -> [u64; ACTION_COUNT] {
    let mut counts = [0u64; ACTION_COUNT];
    for a in actions {
        counts[a.index()] += 1;
    }
    counts
}

/// Pointwise mean and population standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub mean: Vec<f64>,
    /// Population std (divide by n, not n-1).
    pub std: Vec<f64>,
    pub n_seeds: usize,
}

/// Aggregate equal-length per-seed series, optionally smoothing each seed
/// first with [`sliding_average`].
pub fn aggregate_seeds(series: &[Vec<f64>], window: Option<usize>) -> Result<SeedAggregate, MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let len = series[0].len();
    for s in series {
        if s.len() != len {
            return Err(MetricsError::SeriesLengthMismatch { a: len, b: s.len() });
        }
    }
    let smoothed: Vec<Vec<f64>> = match window {
        Some(w) => series.iter().map(|s| sliding_average(s, w)).collect(),
        None => series.to_vec(),
    };
    let n = smoothed.len() as f64;
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for t in 0..len {
        let m = smoothed.iter().map(|s| s[t]).sum::<f64>() / n;
        let var = smoothed.iter().map(|s| (s[t] - m) * (s[t] - m)).sum::<f64>() / n;
        mean[t] = m;
        std[t] = var.sqrt();
    }
    Ok(SeedAggregate {
        mean,
        std,
        n_seeds: smoothed.len(),
    })
}
