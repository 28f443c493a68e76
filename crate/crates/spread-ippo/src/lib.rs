//! Cooperative-coverage particle world trained with independent PPO agents.
//!
//! Each of N agents owns an actor network over 5 discrete movement actions
//! and a critic that reads the global state (all observations plus landmark
//! positions), trained with a clipped surrogate objective and Monte-Carlo
//! returns. Everything is plain `f64` with hand-written backprop and Adam,
//! so every run is reproducible bit-for-bit from `(seed, config)`.
//!
//! Module map:
//! - [`env`]: world dynamics, observations, team reward
//! - [`net`]: dense layers, softmax actor, scalar critic, backprop, Adam
//! - [`ppo`]: trajectories, returns, advantages, losses, per-agent update
//! - [`trainer`]: episode rollout, the training loop, evaluation
//! - [`metrics`]: coverage/success/entropy/distance metrics and aggregation
//! - [`config`], [`checkpoint`], [`export`], [`plot`], [`cli`]: artifact I/O

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod env;
pub mod export;
pub mod metrics;
pub mod net;
pub mod par;
pub mod plot;
pub mod ppo;
pub mod rng;
pub mod trainer;
