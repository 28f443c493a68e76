//! Training and evaluation orchestration.
//!
//! One training run owns N independent agents, an environment stream, and
//! one sampling stream per agent; (seed, config) fully determines every
//! byte it writes. Seeds run as independent workers into seed-scoped
//! subdirectories, and per-agent updates within an episode run as
//! independent tasks.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{self, Checkpoint, CheckpointError};
use crate::env::{self, Action, EnvError, WorldConfig, WorldState, ACTION_COUNT};
use crate::export;
use crate::metrics;
use crate::net::{
    actor_forward, critic_forward, init_actor, init_critic, policy_entropy, sample_action,
    ActorNet, AdamState, CriticNet, NetError,
};
use crate::par;
use crate::plot;
use crate::ppo::{update_agent, ComputedTargets, PPOConfig, PpoError, Trajectory, UpdateStats};
use crate::rng::{self, StreamState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config field `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("io error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("serialize error: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("seed {seed} aborted at episode {episode}: {source}; diagnostics at {dump_path}")]
    Aborted {
        seed: u64,
        episode: u32,
        dump_path: String,
        #[source]
        source: AgentUpdateError,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> TrainError {
    TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Root for run output: `$SPREAD_IPPO_OUT` when set, else `runs/`.
pub fn default_output_root() -> PathBuf {
    std::env::var_os("SPREAD_IPPO_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn default_output_dir() -> PathBuf {
    default_output_root().join("default")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub world: WorldConfig,
    pub ppo: PPOConfig,
    pub episodes: u32,
    pub seeds: Vec<u64>,
    /// Console summary cadence, in episodes.
    pub log_every: u32,
    /// Intermediate checkpoint cadence, in episodes.
    pub checkpoint_every: u32,
    /// Greedy self-evaluation episodes after training; 0 skips it.
    pub eval_episodes: u32,
    /// Coverage radius delta used for coordination and success.
    pub success_radius: f64,
    pub output_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            world: WorldConfig::default(),
            ppo: PPOConfig::default(),
            episodes: 1500,
            seeds: vec![0, 1, 2, 3, 4],
            log_every: 10,
            checkpoint_every: 100,
            eval_episodes: 100,
            success_radius: 0.10,
            output_dir: default_output_dir(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        fn err(field: &'static str, message: impl Into<String>) -> TrainError {
            TrainError::InvalidConfig {
                field,
                message: message.into(),
            }
        }
        self.world.validate()?;
        self.ppo.validate()?;
        if self.episodes < 1 {
            return Err(err("episodes", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(err("seeds", "must list at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(err("seeds", "must be unique; duplicates would share a directory"));
        }
        if self.log_every < 1 {
            return Err(err("log_every", "must be >= 1"));
        }
        if self.checkpoint_every < 1 {
            return Err(err("checkpoint_every", "must be >= 1"));
        }
        if !(self.success_radius > 0.0) || !self.success_radius.is_finite() {
            return Err(err(
                "success_radius",
                format!("must be finite and > 0, got {}", self.success_radius),
            ));
        }
        Ok(())
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed{seed}"))
    }
}

/// Action selection during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    /// Draw from the policy distribution.
    Sample,
    /// Take the argmax action, ties broken by lowest index.
    Greedy,
}

/// One learner: its policy, its centralized-input critic, and a separate
/// optimizer for each. No parameters are shared between agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
}

/// Fresh agents for one seed, each initialized from its own stream so the
/// agent count never perturbs the environment stream.
pub fn init_agents(config: &TrainConfig, seed: u64) -> Vec<Agent> {
    (0..config.world.n_agents)
        .map(|i| {
            let mut r = rng::stream(seed, rng::stream_agent_init(i));
            let actor = init_actor(config.world.obs_dim(), config.ppo.hidden_size, &mut r);
            let critic = init_critic(config.world.global_dim(), config.ppo.hidden_size, &mut r);
            Agent {
                actor_adam: AdamState::new(&actor),
                critic_adam: AdamState::new(&critic),
                actor,
                critic,
            }
        })
        .collect()
}

/// Everything a log record needs about one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub team_reward: f64,
    pub per_agent_rewards: Vec<f64>,
    pub per_agent_entropy: Vec<f64>,
    /// Mean over steps of the pairwise agent distance; 0 for a lone agent.
    pub mean_inter_agent_distance: f64,
    /// Final-state coordination score.
    pub coordination: f64,
    /// Final-state unique coverage.
    pub success: bool,
    /// Colliding pairs summed over steps.
    pub collisions: u64,
    pub action_counts: [u64; ACTION_COUNT],
}

/// Raw product of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeRollout {
    pub trajectories: Vec<Trajectory>,
    /// All states, index 0 being the reset state.
    pub states: Vec<WorldState>,
    /// Joint action at each step.
    pub actions: Vec<Vec<Action>>,
    pub stats: EpisodeStats,
}

fn greedy_action(probs: &[f64]) -> (Action, f64) {
    let mut best = 0;
    for k in 1..probs.len() {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    (Action::from_index(best).expect("probs has action arity"), probs[best].ln())
}

/// Roll one episode to truncation. `sample` draws through the per-agent
/// streams; `greedy` never touches them.
pub fn run_episode(
    world: &WorldConfig,
    agents: &[Agent],
    env_rng: &mut ChaCha8Rng,
    sample_rngs: &mut [ChaCha8Rng],
    mode: RolloutMode,
    delta: f64,
) -> Result<EpisodeRollout, TrainError> {
    let n = world.n_agents;
    assert_eq!(agents.len(), n, "one agent per world slot");
    if mode == RolloutMode::Sample {
        assert_eq!(sample_rngs.len(), n, "one sampling stream per agent");
    }

    let mut state = env::reset(world, env_rng);
    let mut trajectories: Vec<Trajectory> = (0..n)
        .map(|_| Trajectory {
            obs: Vec::new(),
            global_states: Vec::new(),
            actions: Vec::new(),
            log_probs_old: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            entropies: Vec::new(),
        })
        .collect();
    let mut states = vec![state.clone()];
    let mut actions: Vec<Vec<Action>> = Vec::new();

    loop {
        let gs = env::global_state(&state);
        let mut joint = Vec::with_capacity(n);
        for i in 0..n {
            let obs = env::observe(&state, i);
            let probs = actor_forward(&agents[i].actor, obs.as_slice())?;
            let value = critic_forward(&agents[i].critic, gs.as_slice())?;
            let entropy = policy_entropy(&probs);
            let (action, log_prob) = match mode {
                RolloutMode::Sample => sample_action(&probs, &mut sample_rngs[i]),
                RolloutMode::Greedy => greedy_action(&probs),
            };
            let traj = &mut trajectories[i];
            traj.obs.push(obs);
            traj.global_states.push(gs.clone());
            traj.actions.push(action);
            traj.log_probs_old.push(log_prob);
            traj.values.push(value);
            traj.entropies.push(entropy);
            joint.push(action);
        }
        let (next, reward, done) = env::step(&state, &joint, world)?;
        for traj in trajectories.iter_mut() {
            traj.rewards.push(reward);
        }
        actions.push(joint);
        states.push(next.clone());
        state = next;
        if done {
            break;
        }
    }

    let t_len = actions.len();
    let post = &states[1..];
    let team_reward: f64 = trajectories[0].rewards.iter().sum();
    let per_agent_rewards: Vec<f64> = trajectories.iter().map(|t| t.rewards.iter().sum()).collect();
    let per_agent_entropy: Vec<f64> = trajectories
        .iter()
        .map(|t| t.entropies.iter().sum::<f64>() / t_len as f64)
        .collect();
    let mean_inter_agent_distance = if n >= 2 {
        post.iter()
            .map(|s| metrics::avg_inter_agent_distance(s).expect("n >= 2"))
            .sum::<f64>()
            / t_len as f64
    } else {
        0.0
    };
    let final_state = states.last().expect("at least the reset state");
    let stats = EpisodeStats {
        team_reward,
        per_agent_rewards,
        per_agent_entropy,
        mean_inter_agent_distance,
        coordination: metrics::coordination_score(final_state, delta),
        success: metrics::success(final_state, delta),
        collisions: post.iter().map(|s| env::count_collisions(s, world) as u64).sum(),
        action_counts: metrics::action_histogram(actions.iter().flatten().copied()),
    };
    Ok(EpisodeRollout {
        trajectories,
        states,
        actions,
        stats,
    })
}

/// Update failure tagged with the agent it came from.
#[derive(Debug, Error)]
#[error("agent {agent}: {source}")]
pub struct AgentUpdateError {
    pub agent: usize,
    #[source]
    pub source: PpoError,
}

/// Per-agent PPO updates over one episode batch; agents are independent,
/// so the updates run as parallel tasks collected in agent order.
pub fn update_all_agents(
    agents: &mut [Agent],
    rollout: &EpisodeRollout,
    ppo: &PPOConfig,
) -> Result<Vec<UpdateStats>, AgentUpdateError> {
    let results = par::zip_map(agents, &rollout.trajectories, |agent, traj| {
        let targets = ComputedTargets::from_trajectory(traj, ppo);
        update_agent(
            &mut agent.actor,
            &mut agent.critic,
            &mut agent.actor_adam,
            &mut agent.critic_adam,
            traj,
            &targets,
            ppo,
        )
    });
    results
        .into_iter()
        .enumerate()
        .map(|(agent, r)| r.map_err(|source| AgentUpdateError { agent, source }))
        .collect()
}

/// One JSONL log line: everything measured about one training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub episode: u32,
    pub team_reward: f64,
    pub per_agent_rewards: Vec<f64>,
    pub per_agent_entropy: Vec<f64>,
    pub mean_inter_agent_distance: f64,
    pub coordination: f64,
    pub success: bool,
    pub collisions: u64,
    pub action_counts: [u64; ACTION_COUNT],
    pub updates: Vec<UpdateStats>,
}

impl RunRecord {
    fn new(episode: u32, stats: &EpisodeStats, updates: Vec<UpdateStats>) -> Self {
        RunRecord {
            episode,
            team_reward: stats.team_reward,
            per_agent_rewards: stats.per_agent_rewards.clone(),
            per_agent_entropy: stats.per_agent_entropy.clone(),
            mean_inter_agent_distance: stats.mean_inter_agent_distance,
            coordination: stats.coordination,
            success: stats.success,
            collisions: stats.collisions,
            action_counts: stats.action_counts,
            updates,
        }
    }
}

/// One JSONL trajectory line: the joint action taken and the state it
/// produced, with landmarks echoed so rewards can be recomputed offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub episode: u32,
    pub step: u32,
    pub agent_pos: Vec<[f64; 2]>,
    pub agent_vel: Vec<[f64; 2]>,
    pub actions: Vec<Action>,
    pub reward: f64,
    pub landmark_pos: Vec<[f64; 2]>,
}

/// Flatten a rollout into dump lines (one per step).
pub fn trajectory_records(episode: u32, rollout: &EpisodeRollout) -> Vec<TrajectoryRecord> {
    (0..rollout.actions.len())
        .map(|t| {
            let s = &rollout.states[t + 1];
            TrajectoryRecord {
                episode,
                step: (t + 1) as u32,
                agent_pos: s.agent_pos.clone(),
                agent_vel: s.agent_vel.clone(),
                actions: rollout.actions[t].clone(),
                reward: rollout.trajectories[0].rewards[t],
                landmark_pos: s.landmark_pos.clone(),
            }
        })
        .collect()
}

/// Aggregate evaluation results; `eval.json` on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: u32,
    pub mode: RolloutMode,
    pub delta: f64,
    /// Percentage of episodes ending in unique coverage.
    pub success_rate: f64,
    pub mean_coordination: f64,
    pub mean_inter_agent_distance: f64,
    pub mean_entropy: f64,
    pub mean_reward: f64,
}

/// Evaluate fixed agents over independent episodes (no learning). Each
/// episode draws from its own streams, so results are order-independent
/// and the episodes fan out as parallel tasks.
pub fn evaluate(
    agents: &[Agent],
    world: &WorldConfig,
    episodes: u32,
    mode: RolloutMode,
    delta: f64,
    seed: u64,
) -> Result<(EvalReport, Vec<EpisodeRollout>), TrainError> {
    assert!(episodes >= 1, "need at least one evaluation episode");
    let n = world.n_agents;
    let results = par::map_collect((0..episodes as usize).collect::<Vec<_>>(), |ep| {
        let mut env_rng = rng::stream(seed, rng::stream_eval_env(ep));
        let mut sample_rngs: Vec<ChaCha8Rng> = (0..n)
            .map(|i| rng::stream(seed, rng::stream_eval_sample(ep, i, n)))
            .collect();
        run_episode(world, agents, &mut env_rng, &mut sample_rngs, mode, delta)
    });
    let mut rollouts = Vec::with_capacity(results.len());
    for r in results {
        rollouts.push(r?);
    }

    let k = rollouts.len() as f64;
    let flags: Vec<bool> = rollouts.iter().map(|r| r.stats.success).collect();
    let mean_entropy = rollouts
        .iter()
        .map(|r| {
            r.stats.per_agent_entropy.iter().sum::<f64>() / r.stats.per_agent_entropy.len() as f64
        })
        .sum::<f64>()
        / k;
    let report = EvalReport {
        episodes,
        mode,
        delta,
        success_rate: metrics::success_rate(&flags),
        mean_coordination: rollouts.iter().map(|r| r.stats.coordination).sum::<f64>() / k,
        mean_inter_agent_distance: rollouts
            .iter()
            .map(|r| r.stats.mean_inter_agent_distance)
            .sum::<f64>()
            / k,
        mean_entropy,
        mean_reward: rollouts.iter().map(|r| r.stats.team_reward).sum::<f64>() / k,
    };
    Ok((report, rollouts))
}

/// Write `eval.json`, `trajectories.jsonl`, and the visitation heatmap
/// (CSV and SVG) into `dir`; returns the file names written.
pub fn write_eval_artifacts(
    dir: &Path,
    report: &EvalReport,
    rollouts: &[EpisodeRollout],
    world: &WorldConfig,
) -> Result<Vec<String>, TrainError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut files = Vec::new();

    let eval_path = dir.join("eval.json");
    let mut eval_bytes = serde_json::to_vec_pretty(report)?;
    eval_bytes.push(b'\n');
    fs::write(&eval_path, eval_bytes).map_err(|e| io_err(&eval_path, e))?;
    files.push("eval.json".to_string());

    let traj_path = dir.join("trajectories.jsonl");
    let file = fs::File::create(&traj_path).map_err(|e| io_err(&traj_path, e))?;
    let mut out = BufWriter::new(file);
    for (ep, rollout) in rollouts.iter().enumerate() {
        for record in trajectory_records(ep as u32, rollout) {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n").map_err(|e| io_err(&traj_path, e))?;
        }
    }
    out.flush().map_err(|e| io_err(&traj_path, e))?;
    files.push("trajectories.jsonl".to_string());

    let positions = rollouts
        .iter()
        .flat_map(|r| r.states[1..].iter())
        .flat_map(|s| s.agent_pos.iter().copied());
    let grid = metrics::visitation_heatmap(positions, 50, world.bound);
    let csv_path = dir.join("heatmap.csv");
    export::write_heatmap_csv(&csv_path, &grid).map_err(|e| io_err(&csv_path, e))?;
    files.push("heatmap.csv".to_string());
    let svg_path = dir.join("heatmap.svg");
    let svg = plot::heatmap_svg(&grid, "Environment visitation");
    fs::write(&svg_path, svg).map_err(|e| io_err(&svg_path, e))?;
    files.push("heatmap.svg".to_string());

    Ok(files)
}

/// Outcome of one seed's training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub episodes: u32,
    /// Mean team reward over the final min(100, episodes) episodes.
    pub final_reward_window: f64,
    pub eval: Option<EvalReport>,
    /// Files written, relative to the run directory.
    pub files: Vec<String>,
}

/// Train one seed end to end; see [`train`] for the multi-seed driver.
pub fn train_seed(config: &TrainConfig, seed: u64) -> Result<SeedSummary, TrainError> {
    let seed_dir = config.seed_dir(seed);
    fs::create_dir_all(&seed_dir).map_err(|e| io_err(&seed_dir, e))?;
    let rel = |name: &str| format!("seed{seed}/{name}");

    let mut agents = init_agents(config, seed);
    let mut env_rng = rng::stream(seed, rng::STREAM_ENV);
    let mut sample_rngs: Vec<ChaCha8Rng> = (0..config.world.n_agents)
        .map(|i| rng::stream(seed, rng::stream_agent_sample(i)))
        .collect();

    let log_path = seed_dir.join("log.jsonl");
    let log_file = fs::File::create(&log_path).map_err(|e| io_err(&log_path, e))?;
    let mut log = BufWriter::new(log_file);
    let mut files = vec![rel("log.jsonl")];
    let mut reward_series = Vec::with_capacity(config.episodes as usize);

    let capture_rng_state = |env_rng: &ChaCha8Rng, sample_rngs: &[ChaCha8Rng]| {
        let env_state = StreamState::capture(seed, rng::STREAM_ENV, env_rng);
        let sample_states: Vec<StreamState> = sample_rngs
            .iter()
            .enumerate()
            .map(|(i, r)| StreamState::capture(seed, rng::stream_agent_sample(i), r))
            .collect();
        (env_state, sample_states)
    };

    for ep in 0..config.episodes {
        let rollout = run_episode(
            &config.world,
            &agents,
            &mut env_rng,
            &mut sample_rngs,
            RolloutMode::Sample,
            config.success_radius,
        )?;
        let updates = match update_all_agents(&mut agents, &rollout, &config.ppo) {
            Ok(u) => u,
            Err(source) => {
                // Leave a diagnostic trail before aborting the run.
                let dump_path = seed_dir.join("abort_dump.json");
                let dump = serde_json::json!({
                    "seed": seed,
                    "episode": ep,
                    "agent": source.agent,
                    "error": source.to_string(),
                    "episode_stats": rollout.stats,
                });
                let _ = fs::write(&dump_path, serde_json::to_vec_pretty(&dump).unwrap_or_default());
                let _ = log.flush();
                return Err(TrainError::Aborted {
                    seed,
                    episode: ep,
                    dump_path: dump_path.display().to_string(),
                    source,
                });
            }
        };
        let record = RunRecord::new(ep, &rollout.stats, updates);
        serde_json::to_writer(&mut log, &record)?;
        log.write_all(b"\n").map_err(|e| io_err(&log_path, e))?;
        reward_series.push(record.team_reward);

        let done = ep + 1;
        if done % config.log_every == 0 || done == config.episodes {
            println!(
                "seed {seed} | episode {done}/{} | reward {:+.2} | entropy {:.3} | coord {:.2}",
                config.episodes,
                record.team_reward,
                record.per_agent_entropy.iter().sum::<f64>()
                    / record.per_agent_entropy.len() as f64,
                record.coordination,
            );
        }
        if done % config.checkpoint_every == 0 && done != config.episodes {
            let (env_state, sample_states) = capture_rng_state(&env_rng, &sample_rngs);
            let ck = Checkpoint::from_agents(config, &agents, done, env_state, &sample_states);
            let name = format!("checkpoint_ep{done}.json");
            checkpoint::save_checkpoint(&seed_dir.join(&name), &ck)?;
            files.push(rel(&name));
        }
    }
    log.flush().map_err(|e| io_err(&log_path, e))?;

    let (env_state, sample_states) = capture_rng_state(&env_rng, &sample_rngs);
    let final_ck = Checkpoint::from_agents(config, &agents, config.episodes, env_state, &sample_states);
    checkpoint::save_checkpoint(&seed_dir.join("final.json"), &final_ck)?;
    files.push(rel("final.json"));

    let eval = if config.eval_episodes > 0 {
        let (report, rollouts) = evaluate(
            &agents,
            &config.world,
            config.eval_episodes,
            RolloutMode::Greedy,
            config.success_radius,
            seed,
        )?;
        for name in write_eval_artifacts(&seed_dir, &report, &rollouts, &config.world)? {
            files.push(rel(&name));
        }
        Some(report)
    } else {
        None
    };

    let window = reward_series.len().min(100);
    let final_reward_window =
        reward_series[reward_series.len() - window..].iter().sum::<f64>() / window as f64;
    Ok(SeedSummary {
        seed,
        dir: seed_dir,
        episodes: config.episodes,
        final_reward_window,
        eval,
        files,
    })
}

/// Full multi-seed result; the manifest inventories every file written.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub config: TrainConfig,
    pub seeds: Vec<SeedSummary>,
    pub manifest_path: PathBuf,
}

/// Train every configured seed (as independent parallel workers), then
/// write a hash manifest of the run directory.
pub fn train(config: &TrainConfig) -> Result<TrainSummary, TrainError> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir).map_err(|e| io_err(&config.output_dir, e))?;

    let outcomes = par::map_collect(config.seeds.clone(), |seed| train_seed(config, seed));
    let mut seeds = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        seeds.push(outcome?);
    }

    let rel_paths: Vec<String> = seeds.iter().flat_map(|s| s.files.iter().cloned()).collect();
    let manifest = checkpoint::build_manifest(&config.output_dir, config, &rel_paths)?;
    let manifest_path = config.output_dir.join("manifest.json");
    checkpoint::save_manifest(&manifest_path, &manifest)?;

    Ok(TrainSummary {
        config: config.clone(),
        seeds,
        manifest_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::RewardMetric;

    fn tiny_config(dir: &Path) -> TrainConfig {
        let mut config = TrainConfig::default();
        config.ppo.hidden_size = 8;
        config.episodes = 3;
        config.seeds = vec![0];
        config.eval_episodes = 2;
        config.checkpoint_every = 2;
        config.output_dir = dir.to_path_buf();
        config
    }

    fn fresh_rollout(config: &TrainConfig, seed: u64, mode: RolloutMode) -> EpisodeRollout {
        let agents = init_agents(config, seed);
        let mut env_rng = rng::stream(seed, rng::STREAM_ENV);
        let mut sample_rngs: Vec<ChaCha8Rng> = (0..config.world.n_agents)
            .map(|i| rng::stream(seed, rng::stream_agent_sample(i)))
            .collect();
        run_episode(
            &config.world,
            &agents,
            &mut env_rng,
            &mut sample_rngs,
            mode,
            config.success_radius,
        )
        .unwrap()
    }

    #[test]
    fn config_validation_flags_bad_fields() {
        let mut config = TrainConfig::default();
        config.episodes = 0;
        assert!(matches!(
            config.validate(),
            Err(TrainError::InvalidConfig { field: "episodes", .. })
        ));
        let mut config = TrainConfig::default();
        config.seeds = vec![1, 1];
        assert!(config.validate().is_err());
        let mut config = TrainConfig::default();
        config.ppo.gamma = 1.5;
        assert!(matches!(config.validate(), Err(TrainError::Ppo(_))));
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn single_step_episode_has_length_one_trajectories() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.world.max_steps = 1;
        let rollout = fresh_rollout(&config, 0, RolloutMode::Sample);
        assert_eq!(rollout.actions.len(), 1);
        assert_eq!(rollout.states.len(), 2);
        for traj in &rollout.trajectories {
            assert_eq!(traj.len(), 1);
            traj.validate().unwrap();
        }
    }

    #[test]
    fn greedy_rollout_repeats_identically() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let a = fresh_rollout(&config, 5, RolloutMode::Greedy);
        let b = fresh_rollout(&config, 5, RolloutMode::Greedy);
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.states, b.states);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn episode_reward_accounting_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let rollout = fresh_rollout(&config, 3, RolloutMode::Sample);
        let summed: f64 = rollout.trajectories[0].rewards.iter().sum();
        assert_eq!(summed.to_bits(), rollout.stats.team_reward.to_bits());
        for traj in &rollout.trajectories {
            assert_eq!(traj.rewards, rollout.trajectories[0].rewards);
        }
    }

    #[test]
    fn trajectory_dump_replays_rewards_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let rollout = fresh_rollout(&config, 7, RolloutMode::Sample);
        let mut total = 0.0;
        for record in trajectory_records(0, &rollout) {
            let line = serde_json::to_string(&record).unwrap();
            let parsed: TrajectoryRecord = serde_json::from_str(&line).unwrap();
            let state = WorldState {
                agent_pos: parsed.agent_pos.clone(),
                agent_vel: parsed.agent_vel.clone(),
                landmark_pos: parsed.landmark_pos.clone(),
                step: parsed.step,
            };
            let recomputed = env::team_reward(&state, &config.world);
            assert_eq!(recomputed.to_bits(), parsed.reward.to_bits());
            total += parsed.reward;
        }
        assert_eq!(total.to_bits(), rollout.stats.team_reward.to_bits());
    }

    #[test]
    fn euclidean_reward_metric_flows_through_rollout() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.world.reward_metric = RewardMetric::Euclidean;
        let rollout = fresh_rollout(&config, 2, RolloutMode::Sample);
        for record in trajectory_records(0, &rollout) {
            let state = WorldState {
                agent_pos: record.agent_pos.clone(),
                agent_vel: record.agent_vel.clone(),
                landmark_pos: record.landmark_pos.clone(),
                step: record.step,
            };
            assert_eq!(env::team_reward(&state, &config.world).to_bits(), record.reward.to_bits());
        }
    }

    // Scripted point controller: track an error-proportional target
    // velocity on the axis that is furthest from it, and coast once close
    // and slow (damping then freezes the agent near the landmark).
    fn controller_action(state: &WorldState, agent: usize, target: [f64; 2]) -> Action {
        let p = state.agent_pos[agent];
        let v = state.agent_vel[agent];
        let ex = target[0] - p[0];
        let ey = target[1] - p[1];
        if ex.hypot(ey) < 0.05 && v[0].hypot(v[1]) < 0.15 {
            return Action::Stay;
        }
        let vdes = |e: f64| (4.0 * e).clamp(-2.0, 2.0);
        let dvx = vdes(ex) - v[0];
        let dvy = vdes(ey) - v[1];
        if dvx.abs() >= dvy.abs() {
            if dvx > 0.0 {
                Action::Right
            } else {
                Action::Left
            }
        } else if dvy > 0.0 {
            Action::Up
        } else {
            Action::Down
        }
    }

    // Greedy assignment: repeatedly pair the globally closest free
    // agent/landmark, so no agent is sent across the arena needlessly.
    fn assign_targets(state: &WorldState) -> Vec<usize> {
        let n = state.agent_pos.len();
        let mut target = vec![usize::MAX; n];
        let mut taken = vec![false; n];
        for _ in 0..n {
            let mut best = (f64::INFINITY, 0, 0);
            for (i, p) in state.agent_pos.iter().enumerate() {
                if target[i] != usize::MAX {
                    continue;
                }
                for (j, l) in state.landmark_pos.iter().enumerate() {
                    if taken[j] {
                        continue;
                    }
                    let d = (p[0] - l[0]).hypot(p[1] - l[1]);
                    if d < best.0 {
                        best = (d, i, j);
                    }
                }
            }
            target[best.1] = best.2;
            taken[best.2] = true;
        }
        target
    }

    #[test]
    fn scripted_controller_reaches_unique_coverage() {
        // Oracle policy: agent i drives straight at landmark i. Establishes
        // that perfect play scores 100% under the success metric.
        let config = WorldConfig::default();
        let delta = 0.10;
        let episodes = 50;
        let mut successes = 0;
        for ep in 0..episodes {
            let mut env_rng = rng::stream(ep, rng::STREAM_ENV);
            let mut state = env::reset(&config, &mut env_rng);
            let targets = assign_targets(&state);
            loop {
                let joint: Vec<Action> = (0..config.n_agents)
                    .map(|i| controller_action(&state, i, state.landmark_pos[targets[i]]))
                    .collect();
                let (next, _, done) = env::step(&state, &joint, &config).unwrap();
                state = next;
                if done {
                    break;
                }
            }
            if metrics::success(&state, delta) {
                successes += 1;
            } else {
                for i in 0..config.n_agents {
                    let p = state.agent_pos[i];
                    let l = state.landmark_pos[targets[i]];
                    let d = (p[0] - l[0]).hypot(p[1] - l[1]);
                    let v = state.agent_vel[i][0].hypot(state.agent_vel[i][1]);
                    println!("ep {ep} agent {i}: dist {d:.3} speed {v:.3}");
                }
            }
        }
        assert_eq!(successes, episodes, "oracle controller must always cover");
    }

    #[test]
    fn train_writes_expected_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let summary = train(&config).unwrap();
        assert_eq!(summary.seeds.len(), 1);

        let seed_dir = config.seed_dir(0);
        let log = fs::read_to_string(seed_dir.join("log.jsonl")).unwrap();
        let lines: Vec<&str> = log.lines().collect();
        assert_eq!(lines.len(), 3);
        for (i, line) in lines.iter().enumerate() {
            let record: RunRecord = serde_json::from_str(line).unwrap();
            assert_eq!(record.episode, i as u32);
            assert_eq!(record.updates.len(), 3);
        }
        assert!(seed_dir.join("checkpoint_ep2.json").exists());
        assert!(seed_dir.join("final.json").exists());
        assert!(seed_dir.join("eval.json").exists());
        assert!(seed_dir.join("trajectories.jsonl").exists());
        assert!(seed_dir.join("heatmap.svg").exists());

        let manifest = checkpoint::load_manifest(&summary.manifest_path).unwrap();
        for entry in &manifest.files {
            let rehash = checkpoint::sha256_hex_file(&config.output_dir.join(&entry.path)).unwrap();
            assert_eq!(entry.sha256, rehash, "{}", entry.path);
        }

        let ck = checkpoint::load_checkpoint(&seed_dir.join("final.json")).unwrap();
        assert_eq!(ck.episode_count, 3);
        assert_eq!(ck.to_agents().unwrap().len(), 3);
    }

    #[test]
    fn train_single_episode_single_record_single_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.episodes = 1;
        config.eval_episodes = 0;
        train(&config).unwrap();
        let seed_dir = config.seed_dir(0);
        let log = fs::read_to_string(seed_dir.join("log.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 1);
        let checkpoints: Vec<_> = fs::read_dir(&seed_dir)
            .unwrap()
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".json") && n != "eval.json")
            .collect();
        assert_eq!(checkpoints, vec!["final.json".to_string()]);
    }

    #[test]
    fn rerun_is_byte_identical() {
        // Same config (including output paths, which final.json echoes), so
        // a rerun must overwrite every artifact with identical bytes.
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let names = ["log.jsonl", "final.json", "eval.json", "trajectories.jsonl"];
        train(&config).unwrap();
        let first: Vec<Vec<u8>> = names
            .iter()
            .map(|name| fs::read(config.seed_dir(0).join(name)).unwrap())
            .collect();
        train(&config).unwrap();
        for (name, before) in names.iter().zip(&first) {
            let after = fs::read(config.seed_dir(0).join(name)).unwrap();
            assert_eq!(&after, before, "{name} differs between reruns");
        }
    }

    #[test]
    fn evaluate_is_deterministic_and_reports_fields() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let agents = init_agents(&config, 0);
        let (a, rollouts) = evaluate(&agents, &config.world, 4, RolloutMode::Greedy, 0.10, 0).unwrap();
        let (b, _) = evaluate(&agents, &config.world, 4, RolloutMode::Greedy, 0.10, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(rollouts.len(), 4);
        assert!((0.0..=100.0).contains(&a.success_rate));
        assert!(a.mean_reward <= 0.0);
    }

    #[test]
    fn untrained_policy_entropy_is_near_maximum() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let mut big = config.clone();
        big.ppo.hidden_size = 128;
        let agents = init_agents(&big, 0);
        let (report, _) = evaluate(&agents, &big.world, 8, RolloutMode::Sample, 0.10, 0).unwrap();
        assert!(
            report.mean_entropy >= 1.55 && report.mean_entropy <= 5.0f64.ln(),
            "entropy {}",
            report.mean_entropy
        );
    }
}
