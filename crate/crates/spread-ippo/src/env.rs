//! Cooperative-coverage particle world.
//!
//! N point-mass agents and M static landmarks live in a bounded 2D square.
//! Agents pick one of five discrete moves per step; the team is rewarded by
//! the negated sum over landmarks of the distance to the nearest agent.
//! All transitions are pure value-to-value functions, so episodes replay
//! bit-for-bit from the same seed.

use rand::distr::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("config field `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("step called on a finished episode (step {step} >= max_steps {max_steps})")]
    EpisodeFinished { step: u32, max_steps: u32 },
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
}

/// Distance metric used by the team reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMetric {
    /// Sum of squared nearest-agent distances (the default).
    Squared,
    /// Sum of plain Euclidean nearest-agent distances.
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub n_agents: usize,
    pub n_landmarks: usize,
    pub max_steps: u32,
    /// Seconds of simulated time per step.
    pub dt: f64,
    /// Fraction of velocity lost per step before forces apply.
    pub damping: f64,
    /// Force magnitude of a directional action.
    pub accel_gain: f64,
    pub mass: f64,
    pub agent_radius: f64,
    /// World half-width; positions are clamped to `[-bound, bound]`.
    pub bound: f64,
    pub collision_penalty: bool,
    /// Half-width of the uniform spawn square for agents and landmarks.
    pub spawn_range: f64,
    pub reward_metric: RewardMetric,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_agents: 3,
            n_landmarks: 3,
            max_steps: 25,
            dt: 0.1,
            damping: 0.25,
            accel_gain: 5.0,
            mass: 1.0,
            agent_radius: 0.15,
            bound: 1.0,
            collision_penalty: false,
            spawn_range: 1.0,
            reward_metric: RewardMetric::Squared,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        fn err(field: &'static str, message: impl Into<String>) -> EnvError {
            EnvError::InvalidConfig {
                field,
                message: message.into(),
            }
        }
        if self.n_agents < 1 {
            return Err(err("n_agents", "must be >= 1"));
        }
        if self.n_landmarks < 1 {
            return Err(err("n_landmarks", "must be >= 1"));
        }
        if self.max_steps < 1 {
            return Err(err("max_steps", "must be >= 1"));
        }
        if !(self.dt > 0.0) {
            return Err(err("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(err("damping", format!("must be in [0, 1), got {}", self.damping)));
        }
        if !(self.bound > 0.0) {
            return Err(err("bound", format!("must be > 0, got {}", self.bound)));
        }
        if !(self.mass > 0.0) {
            return Err(err("mass", format!("must be > 0, got {}", self.mass)));
        }
        if self.accel_gain < 0.0 || !self.accel_gain.is_finite() {
            return Err(err("accel_gain", format!("must be finite and >= 0, got {}", self.accel_gain)));
        }
        if self.agent_radius < 0.0 || !self.agent_radius.is_finite() {
            return Err(err("agent_radius", format!("must be finite and >= 0, got {}", self.agent_radius)));
        }
        if self.spawn_range < 0.0 || self.spawn_range > self.bound {
            return Err(err(
                "spawn_range",
                format!("must be in [0, bound={}], got {}", self.bound, self.spawn_range),
            ));
        }
        Ok(())
    }

    /// Observation length: own position + velocity, M landmark offsets,
    /// and position offset + velocity for each other agent.
    pub fn obs_dim(&self) -> usize {
        4 + 2 * self.n_landmarks + 4 * (self.n_agents - 1)
    }

    /// Global-state length: all observations concatenated plus the
    /// absolute landmark positions.
    pub fn global_dim(&self) -> usize {
        self.n_agents * self.obs_dim() + 2 * self.n_landmarks
    }
}

/// Ground-truth state of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agent_pos: Vec<[f64; 2]>,
    pub agent_vel: Vec<[f64; 2]>,
    pub landmark_pos: Vec<[f64; 2]>,
    pub step: u32,
}

/// The five discrete moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Stay,
    Left,
    Right,
    Down,
    Up,
}

pub const ACTION_COUNT: usize = 5;

impl Action {
    pub const ALL: [Action; ACTION_COUNT] =
        [Action::Stay, Action::Left, Action::Right, Action::Down, Action::Up];

    pub fn index(self) -> usize {
        match self {
            Action::Stay => 0,
            Action::Left => 1,
            Action::Right => 2,
            Action::Down => 3,
            Action::Up => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Stay => "stay",
            Action::Left => "left",
            Action::Right => "right",
            Action::Down => "down",
            Action::Up => "up",
        }
    }
}

// Serialized as the action index so trajectory dumps stay compact.
impl Serialize for Action {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.index() as u8)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let i = u8::deserialize(d)?;
        Action::from_index(i as usize)
            .ok_or_else(|| serde::de::Error::custom(format!("action index {i} out of range 0..=4")))
    }
}

/// One agent's local view, laid out as
/// `[p_i, v_i, l_1-p_i .. l_M-p_i, (p_j-p_i, v_j) for j != i ascending]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Critic input: every observation concatenated, then absolute landmark
/// positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalState(pub Vec<f64>);

impl GlobalState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sample a fresh episode: positions i.i.d. uniform over the spawn square,
/// velocities zero. Draw order is agents then landmarks, x before y.
pub fn reset(config: &WorldConfig, rng: &mut ChaCha8Rng) -> WorldState {
    let dist = Uniform::new_inclusive(-config.spawn_range, config.spawn_range)
        .expect("spawn_range validated non-negative");
    let mut draw = || [dist.sample(rng), dist.sample(rng)];
    let agent_pos: Vec<[f64; 2]> = (0..config.n_agents).map(|_| draw()).collect();
    let landmark_pos: Vec<[f64; 2]> = (0..config.n_landmarks).map(|_| draw()).collect();
    WorldState {
        agent_vel: vec![[0.0, 0.0]; config.n_agents],
        agent_pos,
        landmark_pos,
        step: 0,
    }
}

/// Map a discrete action to its force vector (`g` = `accel_gain`).
pub fn action_to_force(action: Action, config: &WorldConfig) -> [f64; 2] {
    let g = config.accel_gain;
    match action {
        Action::Stay => [0.0, 0.0],
        Action::Left => [-g, 0.0],
        Action::Right => [g, 0.0],
        Action::Down => [0.0, -g],
        Action::Up => [0.0, g],
    }
}

/// Advance one step: damp velocities, apply forces, integrate, clamp to the
/// world bound (zeroing the wall-normal velocity component), then score the
/// new state. `done` is truncation at `max_steps`.
pub fn step(
    state: &WorldState,
    actions: &[Action],
    config: &WorldConfig,
) -> Result<(WorldState, f64, bool), EnvError> {
    if state.step >= config.max_steps {
        return Err(EnvError::EpisodeFinished {
            step: state.step,
            max_steps: config.max_steps,
        });
    }
    if actions.len() != config.n_agents {
        return Err(EnvError::ActionCount {
            expected: config.n_agents,
            got: actions.len(),
        });
    }

    let mut next = state.clone();
    for i in 0..config.n_agents {
        let force = action_to_force(actions[i], config);
        for axis in 0..2 {
            let v = state.agent_vel[i][axis] * (1.0 - config.damping)
                + force[axis] / config.mass * config.dt;
            let p_raw = state.agent_pos[i][axis] + v * config.dt;
            if p_raw > config.bound {
                next.agent_pos[i][axis] = config.bound;
                next.agent_vel[i][axis] = 0.0;
            } else if p_raw < -config.bound {
                next.agent_pos[i][axis] = -config.bound;
                next.agent_vel[i][axis] = 0.0;
            } else {
                next.agent_pos[i][axis] = p_raw;
                next.agent_vel[i][axis] = v;
            }
        }
    }
    next.step = state.step + 1;
    let reward = team_reward(&next, config);
    let done = next.step == config.max_steps;
    Ok((next, reward, done))
}

/// Team reward: minus the sum over landmarks of the (squared) distance to
/// the nearest agent, minus 1 per colliding agent pair when the collision
/// penalty is enabled.
pub fn team_reward(state: &WorldState, config: &WorldConfig) -> f64 {
    let mut total = 0.0;
    for l in &state.landmark_pos {
        let mut best = f64::INFINITY;
        for p in &state.agent_pos {
            let d2 = dist_sq(p, l);
            if d2 < best {
                best = d2;
            }
        }
        total -= match config.reward_metric {
            RewardMetric::Squared => best,
            RewardMetric::Euclidean => best.sqrt(),
        };
    }
    if config.collision_penalty {
        total -= count_collisions(state, config) as f64;
    }
    total
}

/// Agent `i`'s observation of `state`; see [`Observation`] for the layout.
pub fn observe(state: &WorldState, i: usize) -> Observation {
    let n = state.agent_pos.len();
    assert!(i < n, "agent index {i} out of range 0..{n}");
    let p = state.agent_pos[i];
    let mut values = Vec::with_capacity(4 + 2 * state.landmark_pos.len() + 4 * (n - 1));
    values.extend_from_slice(&p);
    values.extend_from_slice(&state.agent_vel[i]);
    for l in &state.landmark_pos {
        values.push(l[0] - p[0]);
        values.push(l[1] - p[1]);
    }
    for j in 0..n {
        if j == i {
            continue;
        }
        values.push(state.agent_pos[j][0] - p[0]);
        values.push(state.agent_pos[j][1] - p[1]);
        values.extend_from_slice(&state.agent_vel[j]);
    }
    Observation(values)
}

/// The critic's input for `state`: `[obs_0 .. obs_{N-1}, l_1 .. l_M]`.
pub fn global_state(state: &WorldState) -> GlobalState {
    let n = state.agent_pos.len();
    let mut values = Vec::new();
    for i in 0..n {
        values.extend_from_slice(&observe(state, i).0);
    }
    for l in &state.landmark_pos {
        values.extend_from_slice(l);
    }
    GlobalState(values)
}

/// Number of unordered agent pairs closer than `2 * agent_radius`.
pub fn count_collisions(state: &WorldState, config: &WorldConfig) -> usize {
    let threshold = 2.0 * config.agent_radius;
    let n = state.agent_pos.len();
    let mut count = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if dist_sq(&state.agent_pos[i], &state.agent_pos[j]) < threshold * threshold {
                count += 1;
            }
        }
    }
    count
}

pub(crate) fn dist_sq(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

pub(crate) fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    dist_sq(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn cfg() -> WorldConfig {
        WorldConfig::default()
    }

    fn fixed_state(agents: &[[f64; 2]], landmarks: &[[f64; 2]]) -> WorldState {
        WorldState {
            agent_pos: agents.to_vec(),
            agent_vel: vec![[0.0, 0.0]; agents.len()],
            landmark_pos: landmarks.to_vec(),
            step: 0,
        }
    }

    #[test]
    fn reset_zero_spawn_range_puts_everything_at_origin() {
        let config = WorldConfig {
            spawn_range: 0.0,
            ..cfg()
        };
        let mut r = rng::stream(0, rng::STREAM_ENV);
        let state = reset(&config, &mut r);
        for p in state.agent_pos.iter().chain(&state.landmark_pos) {
            assert_eq!(*p, [0.0, 0.0]);
        }
        for v in &state.agent_vel {
            assert_eq!(*v, [0.0, 0.0]);
        }
        assert_eq!(state.step, 0);
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let config = cfg();
        let a = reset(&config, &mut rng::stream(42, rng::STREAM_ENV));
        let b = reset(&config, &mut rng::stream(42, rng::STREAM_ENV));
        assert_eq!(a, b);
    }

    #[test]
    fn reset_positions_center_on_origin() {
        // Monte-Carlo check of the uniform sampler: 1e4 resets, per-axis
        // mean within +-0.05 of zero.
        let config = cfg();
        let mut r = rng::stream(123, rng::STREAM_ENV);
        let mut sum = [0.0f64; 2];
        let mut count = 0usize;
        for _ in 0..10_000 {
            let state = reset(&config, &mut r);
            for p in state.agent_pos.iter().chain(&state.landmark_pos) {
                sum[0] += p[0];
                sum[1] += p[1];
                count += 1;
            }
        }
        for axis in 0..2 {
            let mean = sum[axis] / count as f64;
            assert!(mean.abs() < 0.05, "axis {axis} mean {mean}");
        }
    }

    #[test]
    fn action_forces_match_definitions() {
        let config = cfg();
        assert_eq!(action_to_force(Action::Stay, &config), [0.0, 0.0]);
        assert_eq!(action_to_force(Action::Right, &config), [5.0, 0.0]);
        assert_eq!(action_to_force(Action::Up, &config), [0.0, 5.0]);
        assert_eq!(action_to_force(Action::Left, &config), [-5.0, 0.0]);
        assert_eq!(action_to_force(Action::Down, &config), [0.0, -5.0]);
    }

    #[test]
    fn step_at_rest_with_stay_keeps_positions() {
        let config = cfg();
        let state = fixed_state(&[[0.1, 0.2], [0.3, 0.4], [-0.5, 0.5]], &[[0.0; 2]; 3]);
        let (next, _, done) = step(&state, &[Action::Stay; 3], &config).unwrap();
        assert_eq!(next.agent_pos, state.agent_pos);
        assert!(!done);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn step_damps_velocity_by_hand_computed_amount() {
        // v=(1,0), stay: v' = 0.75, dp = 0.075 with the default constants.
        let config = cfg();
        let mut state = fixed_state(&[[0.0, 0.0], [0.9, 0.9], [-0.9, -0.9]], &[[0.0; 2]; 3]);
        state.agent_vel[0] = [1.0, 0.0];
        let (next, _, _) = step(&state, &[Action::Stay; 3], &config).unwrap();
        assert!((next.agent_vel[0][0] - 0.75).abs() < 1e-15);
        assert!((next.agent_pos[0][0] - 0.075).abs() < 1e-15);
        assert_eq!(next.agent_vel[0][1], 0.0);
    }

    #[test]
    fn step_from_rest_accelerates_by_hand_computed_amount() {
        // rest + right with g=5, dt=0.1: v' = 0.5, dp = 0.05.
        let config = cfg();
        let state = fixed_state(&[[0.0, 0.0], [0.9, 0.9], [-0.9, -0.9]], &[[0.0; 2]; 3]);
        let actions = [Action::Right, Action::Stay, Action::Stay];
        let (next, _, _) = step(&state, &actions, &config).unwrap();
        assert!((next.agent_vel[0][0] - 0.5).abs() < 1e-15);
        assert!((next.agent_pos[0][0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_finished_episode() {
        let config = cfg();
        let mut state = fixed_state(&[[0.0; 2]; 3], &[[0.0; 2]; 3]);
        state.step = config.max_steps;
        assert!(matches!(
            step(&state, &[Action::Stay; 3], &config),
            Err(EnvError::EpisodeFinished { .. })
        ));
    }

    #[test]
    fn step_rejects_wrong_action_count() {
        let config = cfg();
        let state = fixed_state(&[[0.0; 2]; 3], &[[0.0; 2]; 3]);
        assert!(matches!(
            step(&state, &[Action::Stay; 2], &config),
            Err(EnvError::ActionCount { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn wall_contact_zeroes_normal_velocity() {
        let config = cfg();
        let mut state = fixed_state(&[[0.99, 0.0], [0.0, 0.9], [0.0, -0.9]], &[[0.0; 2]; 3]);
        state.agent_vel[0] = [2.0, 0.5];
        let (next, _, _) = step(&state, &[Action::Right, Action::Stay, Action::Stay], &config).unwrap();
        assert_eq!(next.agent_pos[0][0], config.bound);
        assert_eq!(next.agent_vel[0][0], 0.0);
        // Tangential component keeps moving.
        assert!(next.agent_vel[0][1] > 0.0);
    }

    #[test]
    fn team_reward_zero_when_landmarks_covered() {
        let config = cfg();
        let pts = [[0.1, 0.2], [-0.3, 0.4], [0.5, -0.5]];
        let state = fixed_state(&pts, &pts);
        assert_eq!(team_reward(&state, &config), 0.0);
    }

    #[test]
    fn team_reward_squared_distance_single_pair() {
        let config = WorldConfig {
            n_agents: 1,
            n_landmarks: 1,
            ..cfg()
        };
        let state = fixed_state(&[[0.0, 0.0]], &[[0.3, 0.4]]);
        assert!((team_reward(&state, &config) - (-0.25)).abs() < 1e-15);
    }

    #[test]
    fn team_reward_takes_nearest_agent_per_landmark() {
        let config = WorldConfig {
            n_agents: 2,
            n_landmarks: 2,
            ..cfg()
        };
        let state = fixed_state(&[[0.0, 0.0], [1.0, 0.0]], &[[0.0, 0.0], [0.5, 0.0]]);
        assert!((team_reward(&state, &config) - (-0.25)).abs() < 1e-15);
    }

    #[test]
    fn team_reward_euclidean_metric() {
        let config = WorldConfig {
            n_agents: 1,
            n_landmarks: 1,
            reward_metric: RewardMetric::Euclidean,
            ..cfg()
        };
        let state = fixed_state(&[[0.0, 0.0]], &[[0.3, 0.4]]);
        assert!((team_reward(&state, &config) - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn collision_penalty_subtracts_one_per_pair() {
        let config = WorldConfig {
            collision_penalty: true,
            ..cfg()
        };
        let state = fixed_state(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]], &[[0.0; 2]; 3]);
        // All covered (reward 0) minus 3 coincident pairs.
        assert_eq!(team_reward(&state, &config), -3.0);
    }

    #[test]
    fn observation_has_documented_length_and_layout() {
        let config = cfg();
        let state = fixed_state(
            &[[0.1, 0.2], [0.5, 0.6], [-0.7, 0.8]],
            &[[0.0, 0.0], [0.1, 0.2], [0.9, -0.9]],
        );
        let obs = observe(&state, 0);
        assert_eq!(obs.len(), 18);
        assert_eq!(obs.len(), config.obs_dim());
        // Own position and velocity.
        assert_eq!(&obs.0[0..4], &[0.1, 0.2, 0.0, 0.0]);
        // Agent 0 sits exactly on landmark 2 (index 1): its relative block
        // at entries 4+2*1 .. 4+2*1+2 is zero.
        assert_eq!(&obs.0[6..8], &[0.0, 0.0]);
        // First other agent (index 1): relative position then absolute velocity.
        assert!((obs.0[10] - 0.4).abs() < 1e-15);
        assert!((obs.0[11] - 0.4).abs() < 1e-15);
        assert_eq!(&obs.0[12..14], &[0.0, 0.0]);
    }

    #[test]
    fn observation_all_zero_at_origin() {
        let state = fixed_state(&[[0.0; 2]; 3], &[[0.0; 2]; 3]);
        for i in 0..3 {
            assert!(observe(&state, i).0.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn global_state_length_and_zero_case() {
        let config = cfg();
        let state = fixed_state(&[[0.0; 2]; 3], &[[0.0; 2]; 3]);
        let gs = global_state(&state);
        assert_eq!(gs.len(), 60);
        assert_eq!(gs.len(), config.global_dim());
        assert!(gs.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn swapping_landmarks_permutes_their_slots_only() {
        let mut state = fixed_state(
            &[[0.1, 0.2], [0.5, 0.6], [-0.7, 0.8]],
            &[[0.3, -0.3], [0.1, 0.2], [0.9, -0.9]],
        );
        let before = global_state(&state);
        state.landmark_pos.swap(0, 1);
        let after = global_state(&state);
        let obs_dim = 18;
        for agent in 0..3 {
            let base = agent * obs_dim;
            // Landmark blocks swapped pairwise.
            assert_eq!(&after.0[base + 4..base + 6], &before.0[base + 6..base + 8]);
            assert_eq!(&after.0[base + 6..base + 8], &before.0[base + 4..base + 6]);
            // Everything else in the observation untouched.
            assert_eq!(&after.0[base..base + 4], &before.0[base..base + 4]);
            assert_eq!(&after.0[base + 8..base + obs_dim], &before.0[base + 8..base + obs_dim]);
        }
        // Tail: absolute landmark slots swapped.
        let tail = 3 * obs_dim;
        assert_eq!(&after.0[tail..tail + 2], &before.0[tail + 2..tail + 4]);
        assert_eq!(&after.0[tail + 2..tail + 4], &before.0[tail..tail + 2]);
        assert_eq!(&after.0[tail + 4..], &before.0[tail + 4..]);
    }

    #[test]
    fn collision_counting_examples() {
        let config = cfg();
        let far = fixed_state(&[[0.0, 0.0], [1.0, 0.0]], &[[0.0; 2]]);
        assert_eq!(count_collisions(&far, &config), 0);
        let pair = fixed_state(&[[0.0, 0.0], [0.0, 0.0]], &[[0.0; 2]]);
        assert_eq!(count_collisions(&pair, &config), 1);
        let triple = fixed_state(&[[0.0; 2]; 3], &[[0.0; 2]]);
        assert_eq!(count_collisions(&triple, &config), 3);
    }

    #[test]
    fn speed_decays_geometrically_without_force() {
        let config = cfg();
        let mut state = fixed_state(&[[0.0, 0.0], [0.5, 0.5], [-0.5, -0.5]], &[[0.0; 2]; 3]);
        state.agent_vel[0] = [0.4, -0.3];
        let v0 = 0.5f64;
        for t in 1..=5 {
            let (next, _, _) = step(&state, &[Action::Stay; 3], &config).unwrap();
            state = next;
            let speed = (state.agent_vel[0][0].powi(2) + state.agent_vel[0][1].powi(2)).sqrt();
            let expected = v0 * (1.0 - config.damping).powi(t);
            assert!((speed - expected).abs() < 1e-12, "t={t}: {speed} vs {expected}");
        }
    }

    #[test]
    fn obs_dim_formula_over_sizes() {
        for n in 1..=6 {
            for m in 1..=6 {
                let config = WorldConfig {
                    n_agents: n,
                    n_landmarks: m,
                    ..cfg()
                };
                let mut r = rng::stream(9, rng::STREAM_ENV);
                let state = reset(&config, &mut r);
                assert_eq!(observe(&state, 0).len(), 4 + 2 * m + 4 * (n - 1));
                assert_eq!(global_state(&state).len(), config.global_dim());
            }
        }
    }

    proptest! {
        #[test]
        fn positions_stay_bounded_and_reward_nonpositive(seed in 0u64..500) {
            let config = cfg();
            let mut env_rng = rng::stream(seed, rng::STREAM_ENV);
            let mut act_rng = rng::stream(seed, 77);
            let mut state = reset(&config, &mut env_rng);
            loop {
                let actions: Vec<Action> = (0..config.n_agents)
                    .map(|_| Action::from_index(rand::Rng::random_range(&mut act_rng, 0..ACTION_COUNT)).unwrap())
                    .collect();
                let (next, reward, done) = step(&state, &actions, &config).unwrap();
                prop_assert!(reward <= 0.0);
                for p in &next.agent_pos {
                    prop_assert!(p[0].abs() <= config.bound && p[1].abs() <= config.bound);
                }
                state = next;
                if done {
                    break;
                }
            }
        }

        #[test]
        fn translation_leaves_relative_entries_and_reward_unchanged(
            shift_x in -0.2f64..0.2, shift_y in -0.2f64..0.2, seed in 0u64..100,
        ) {
            let config = WorldConfig { spawn_range: 0.5, ..cfg() };
            let mut r = rng::stream(seed, rng::STREAM_ENV);
            let base = reset(&config, &mut r);
            let mut shifted = base.clone();
            for p in shifted.agent_pos.iter_mut().chain(shifted.landmark_pos.iter_mut()) {
                p[0] += shift_x;
                p[1] += shift_y;
            }
            let rel_err = (team_reward(&base, &config) - team_reward(&shifted, &config)).abs();
            prop_assert!(rel_err < 1e-12);
            for i in 0..config.n_agents {
                let a = observe(&base, i);
                let b = observe(&shifted, i);
                // Absolute own-position entries shift; everything else is relative.
                prop_assert!((b.0[0] - a.0[0] - shift_x).abs() < 1e-12);
                prop_assert!((b.0[1] - a.0[1] - shift_y).abs() < 1e-12);
                for k in 2..a.len() {
                    prop_assert!((a.0[k] - b.0[k]).abs() < 1e-12, "entry {k}");
                }
            }
        }

        #[test]
        fn step_is_pure(seed in 0u64..100) {
            let config = cfg();
            let mut r = rng::stream(seed, rng::STREAM_ENV);
            let state = reset(&config, &mut r);
            let actions = [Action::Up, Action::Left, Action::Stay];
            let a = step(&state, &actions, &config).unwrap();
            let b = step(&state, &actions, &config).unwrap();
            prop_assert_eq!(a.0, b.0);
            prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }
}
