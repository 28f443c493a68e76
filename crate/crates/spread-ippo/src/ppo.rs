//! On-policy PPO machinery: trajectory storage, Monte-Carlo returns,
//! advantages, the clipped-surrogate actor loss with entropy bonus, the
//! critic regression loss, and the per-agent update step.
//!
//! Losses are computed over one full episode per batch. All gradient
//! assembly is exact: the loss functions report per-step coefficients and
//! the update step feeds analytically derived logit gradients into the
//! network backward pass.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, GlobalState, Observation, ACTION_COUNT};
use crate::net::{
    actor_forward_cached, adam_step, backward_from_cache, policy_entropy, ActorNet, AdamState,
    CriticNet, ForwardCache, Gradients, NetError,
};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("config field `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("bad trajectory: {0}")]
    BadTrajectory(String),
    #[error("non-finite {which} loss {value} at epoch {epoch}")]
    NonFiniteLoss {
        which: &'static str,
        epoch: u32,
        value: f64,
    },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// One agent's record of one episode. The team reward is replicated into
/// every agent's trajectory; `values` are the rollout-time critic outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub obs: Vec<Observation>,
    pub global_states: Vec<GlobalState>,
    pub actions: Vec<Action>,
    pub log_probs_old: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// Policy entropy at each rollout step, kept for logging.
    pub entropies: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        let t = self.obs.len();
        if t == 0 {
            return Err(PpoError::BadTrajectory("empty trajectory".into()));
        }
        let lens = [
            ("global_states", self.global_states.len()),
            ("actions", self.actions.len()),
            ("log_probs_old", self.log_probs_old.len()),
            ("rewards", self.rewards.len()),
            ("values", self.values.len()),
            ("entropies", self.entropies.len()),
        ];
        for (name, len) in lens {
            if len != t {
                return Err(PpoError::BadTrajectory(format!(
                    "{name} has length {len}, expected {t}"
                )));
            }
        }
        if let Some(&lp) = self.log_probs_old.iter().find(|&&lp| lp > 0.0 || !lp.is_finite()) {
            return Err(PpoError::BadTrajectory(format!(
                "log_probs_old must be finite and <= 0, found {lp}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PPOConfig {
    /// Discount factor.
    pub gamma: f64,
    /// Surrogate clip half-width epsilon.
    pub clip_eps: f64,
    /// Entropy bonus weight beta.
    pub entropy_coef: f64,
    /// Critic loss weight; rescales the critic gradient only.
    pub value_coef: f64,
    pub lr: f64,
    /// Optimizer passes over each episode batch.
    pub epochs_per_batch: u32,
    pub normalize_advantages: bool,
    /// Width of the single hidden layer in both actor and critic.
    pub hidden_size: usize,
}

impl Default for PPOConfig {
    fn default() -> Self {
        PPOConfig {
            gamma: 0.99,
            clip_eps: 0.2,
            entropy_coef: 0.01,
            value_coef: 1.0,
            lr: 1e-3,
            epochs_per_batch: 4,
            normalize_advantages: false,
            hidden_size: 128,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        fn err(field: &'static str, message: impl Into<String>) -> PpoError {
            PpoError::InvalidConfig {
                field,
                message: message.into(),
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(err("gamma", format!("must be in [0, 1], got {}", self.gamma)));
        }
        if !(self.clip_eps > 0.0) || !self.clip_eps.is_finite() {
            return Err(err("clip_eps", format!("must be finite and > 0, got {}", self.clip_eps)));
        }
        if self.entropy_coef < 0.0 || !self.entropy_coef.is_finite() {
            return Err(err(
                "entropy_coef",
                format!("must be finite and >= 0, got {}", self.entropy_coef),
            ));
        }
        if self.value_coef < 0.0 || !self.value_coef.is_finite() {
            return Err(err(
                "value_coef",
                format!("must be finite and >= 0, got {}", self.value_coef),
            ));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(err("lr", format!("must be finite and > 0, got {}", self.lr)));
        }
        if self.epochs_per_batch < 1 {
            return Err(err("epochs_per_batch", "must be >= 1"));
        }
        if self.hidden_size < 1 {
            return Err(err("hidden_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// Monte-Carlo returns and the advantages built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputedTargets {
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl ComputedTargets {
    pub fn from_trajectory(traj: &Trajectory, config: &PPOConfig) -> Self {
        let returns = compute_returns(&traj.rewards, config.gamma);
        let advantages = compute_advantages(&returns, &traj.values, config);
        ComputedTargets { returns, advantages }
    }
}

/// Discounted reward-to-go by backward recursion: `R_t = r_t + gamma R_{t+1}`.
/// Truncation is terminal, so there is no bootstrap term.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// `A_t = R_t - V_t`, optionally standardized to mean 0 / std 1 with a
/// 1e-8 floor on the population std.
pub fn compute_advantages(returns: &[f64], values: &[f64], config: &PPOConfig) -> Vec<f64> {
    assert_eq!(returns.len(), values.len(), "returns and values must align");
    let mut adv: Vec<f64> = returns.iter().zip(values).map(|(r, v)| r - v).collect();
    if config.normalize_advantages && !adv.is_empty() {
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        for a in adv.iter_mut() {
            *a = (*a - mean) / std;
        }
    }
    adv
}

/// Per-step coefficients of the actor loss with respect to the quantities
/// the policy network controls: the chosen action's log-probability and
/// the step entropy. A strictly active clip zeroes `dlogp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGrad {
    pub dlogp: f64,
    pub dentropy: f64,
}

/// Value and diagnostics of the clipped-surrogate actor loss on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    pub mean_ratio: f64,
    /// Fraction of steps where the clipped branch was the strict minimum.
    pub clip_fraction: f64,
    pub step_grads: Vec<StepGrad>,
}

/// `loss = -mean_t[min(r_t A_t, clip(r_t) A_t)] - beta mean_t[H_t]` with
/// `r_t = exp(new - old)`. Old log-probs are rollout constants; no
/// gradient flows through them or through an active clip.
pub fn actor_loss(
    new_log_probs: &[f64],
    old_log_probs: &[f64],
    advantages: &[f64],
    entropies: &[f64],
    config: &PPOConfig,
) -> ActorLoss {
    let t_len = new_log_probs.len();
    assert!(t_len >= 1, "empty batch");
    assert_eq!(old_log_probs.len(), t_len);
    assert_eq!(advantages.len(), t_len);
    assert_eq!(entropies.len(), t_len);

    let inv_t = 1.0 / t_len as f64;
    let lo = 1.0 - config.clip_eps;
    let hi = 1.0 + config.clip_eps;
    let beta = config.entropy_coef;

    let mut surrogate_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut ratio_sum = 0.0;
    let mut clipped = 0usize;
    let mut step_grads = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let ratio = (new_log_probs[t] - old_log_probs[t]).exp();
        let a = advantages[t];
        let unclipped = ratio * a;
        let clipped_term = ratio.clamp(lo, hi) * a;
        let clip_active = clipped_term < unclipped;
        surrogate_sum += if clip_active { clipped_term } else { unclipped };
        entropy_sum += entropies[t];
        ratio_sum += ratio;
        if clip_active {
            clipped += 1;
        }
        step_grads.push(StepGrad {
            dlogp: if clip_active { 0.0 } else { -inv_t * ratio * a },
            dentropy: -beta * inv_t,
        });
    }
    ActorLoss {
        loss: -inv_t * surrogate_sum - beta * inv_t * entropy_sum,
        mean_ratio: ratio_sum * inv_t,
        clip_fraction: clipped as f64 * inv_t,
        step_grads,
    }
}

/// Mean squared error between value estimates and returns.
pub fn critic_loss(values: &[f64], returns: &[f64]) -> f64 {
    assert_eq!(values.len(), returns.len(), "values and returns must align");
    assert!(!values.is_empty(), "empty batch");
    let n = values.len() as f64;
    values
        .iter()
        .zip(returns)
        .map(|(v, r)| (v - r) * (v - r))
        .sum::<f64>()
        / n
}

/// One forward-backward pass of the actor over a whole episode batch.
#[derive(Debug, Clone)]
pub struct ActorBatch {
    pub loss: f64,
    pub mean_entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub grads: Gradients,
}

/// Evaluate the actor loss on `traj` under the current parameters and
/// assemble exact parameter gradients. Does not mutate the network.
pub fn actor_batch(
    actor: &ActorNet,
    traj: &Trajectory,
    advantages: &[f64],
    config: &PPOConfig,
) -> Result<ActorBatch, PpoError> {
    let t_len = traj.len();
    assert_eq!(advantages.len(), t_len);

    let mut caches: Vec<(ForwardCache, Vec<f64>)> = Vec::with_capacity(t_len);
    let mut new_log_probs = Vec::with_capacity(t_len);
    let mut entropies = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let (cache, probs) = actor_forward_cached(actor, traj.obs[t].as_slice())?;
        new_log_probs.push(probs[traj.actions[t].index()].ln());
        entropies.push(policy_entropy(&probs));
        caches.push((cache, probs));
    }

    let al = actor_loss(&new_log_probs, &traj.log_probs_old, advantages, &entropies, config);

    let mut grads = Gradients::zeros_like(actor);
    let mut upstream = [0.0; ACTION_COUNT];
    for t in 0..t_len {
        let (cache, probs) = &caches[t];
        let sg = al.step_grads[t];
        let chosen = traj.actions[t].index();
        let h = entropies[t];
        for k in 0..ACTION_COUNT {
            let p = probs[k];
            let indicator = if k == chosen { 1.0 } else { 0.0 };
            // d(logp_chosen)/dlogit_k = 1{k=chosen} - p_k
            // dH/dlogit_k = -p_k (ln p_k + H)
            upstream[k] = sg.dlogp * (indicator - p) + sg.dentropy * (-p * (p.ln() + h));
        }
        backward_from_cache(actor, traj.obs[t].as_slice(), cache, &upstream, &mut grads);
    }

    let mean_entropy = entropies.iter().sum::<f64>() / t_len as f64;
    Ok(ActorBatch {
        loss: al.loss,
        mean_entropy,
        mean_ratio: al.mean_ratio,
        clip_fraction: al.clip_fraction,
        grads,
    })
}

/// One forward-backward pass of the critic over a whole episode batch.
#[derive(Debug, Clone)]
pub struct CriticBatch {
    /// Unweighted mean squared error.
    pub loss: f64,
    /// Gradient of `value_coef * loss`.
    pub grads: Gradients,
}

pub fn critic_batch(
    critic: &CriticNet,
    traj: &Trajectory,
    returns: &[f64],
    config: &PPOConfig,
) -> Result<CriticBatch, PpoError> {
    let t_len = traj.len();
    assert_eq!(returns.len(), t_len);

    let mut grads = Gradients::zeros_like(critic);
    let mut loss = 0.0;
    let inv_t = 1.0 / t_len as f64;
    for t in 0..t_len {
        let gs = traj.global_states[t].as_slice();
        let cache = critic.forward(gs)?;
        let v = cache.output[0];
        let diff = v - returns[t];
        loss += diff * diff * inv_t;
        let upstream = [config.value_coef * 2.0 * diff * inv_t];
        backward_from_cache(critic, gs, &cache, &upstream, &mut grads);
    }
    Ok(CriticBatch { loss, grads })
}

/// Diagnostics from one agent's batch update, reported from the final
/// epoch's forward pass (so a single-epoch update reports ratio 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

/// Run `epochs_per_batch` optimizer passes over one episode: each epoch
/// recomputes log-probs and entropies under the current actor, applies one
/// Adam step to the actor, then one to the critic. Both nets keep separate
/// optimizer state. Targets stay fixed at their rollout values.
pub fn update_agent(
    actor: &mut ActorNet,
    critic: &mut CriticNet,
    actor_adam: &mut AdamState,
    critic_adam: &mut AdamState,
    traj: &Trajectory,
    targets: &ComputedTargets,
    config: &PPOConfig,
) -> Result<UpdateStats, PpoError> {
    traj.validate()?;
    let mut stats = None;
    for epoch in 0..config.epochs_per_batch {
        let ab = actor_batch(actor, traj, &targets.advantages, config)?;
        if !ab.loss.is_finite() {
            return Err(PpoError::NonFiniteLoss {
                which: "actor",
                epoch,
                value: ab.loss,
            });
        }
        adam_step(actor, &ab.grads, actor_adam, config.lr)?;

        let cb = critic_batch(critic, traj, &targets.returns, config)?;
        if !cb.loss.is_finite() {
            return Err(PpoError::NonFiniteLoss {
                which: "critic",
                epoch,
                value: cb.loss,
            });
        }
        adam_step(critic, &cb.grads, critic_adam, config.lr)?;

        stats = Some(UpdateStats {
            actor_loss: ab.loss,
            critic_loss: cb.loss,
            mean_entropy: ab.mean_entropy,
            mean_ratio: ab.mean_ratio,
            clip_fraction: ab.clip_fraction,
        });
    }
    Ok(stats.expect("epochs_per_batch >= 1"))
}
