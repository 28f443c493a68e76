//! Checkpoint and manifest persistence.
//!
//! Checkpoints are JSON with every float printed as a 17-significant-digit
//! decimal, which round-trips `f64` exactly; reloading a checkpoint yields
//! bit-identical forward passes. The run manifest records a hash inventory
//! of everything a run wrote.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::net::{AdamState, DenseLayer, Gradients, Mlp, NetError};
use crate::rng::StreamState;
use crate::trainer::{Agent, TrainConfig};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error at {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("parse error at {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("unsupported checkpoint format_version {got}, expected {expected}")]
    VersionMismatch { expected: u32, got: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("serialize error: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn io_err(path: &Path, source: io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One dense layer as nested row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDump {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LayerDump {
    fn from_layer(layer: &DenseLayer) -> Self {
        LayerDump {
            w: (0..layer.out_dim()).map(|k| layer.row(k).to_vec()).collect(),
            b: layer.b.clone(),
        }
    }

    fn to_layer(&self) -> Result<DenseLayer, CheckpointError> {
        let out_dim = self.w.len();
        if out_dim == 0 {
            return Err(CheckpointError::DimensionMismatch("empty weight matrix".into()));
        }
        let in_dim = self.w[0].len();
        let mut flat = Vec::with_capacity(in_dim * out_dim);
        for row in &self.w {
            if row.len() != in_dim {
                return Err(CheckpointError::DimensionMismatch(format!(
                    "ragged weight matrix: row of {} in a {}-column matrix",
                    row.len(),
                    in_dim
                )));
            }
            flat.extend_from_slice(row);
        }
        Ok(DenseLayer::from_parts(in_dim, out_dim, flat, self.b.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetDump {
    pub hidden: LayerDump,
    pub output: LayerDump,
}

impl NetDump {
    pub fn from_net(net: &Mlp) -> Self {
        NetDump {
            hidden: LayerDump::from_layer(&net.hidden),
            output: LayerDump::from_layer(&net.output),
        }
    }

    pub fn to_net(&self) -> Result<Mlp, CheckpointError> {
        let hidden = self.hidden.to_layer()?;
        let output = self.output.to_layer()?;
        if output.in_dim() != hidden.out_dim() {
            return Err(CheckpointError::DimensionMismatch(format!(
                "hidden layer emits {}, output layer expects {}",
                hidden.out_dim(),
                output.in_dim()
            )));
        }
        Ok(Mlp { hidden, output })
    }

    fn from_gradients(g: &Gradients, like: &Mlp) -> Self {
        let nest = |flat: &[f64], in_dim: usize| -> Vec<Vec<f64>> {
            flat.chunks(in_dim).map(|c| c.to_vec()).collect()
        };
        NetDump {
            hidden: LayerDump {
                w: nest(&g.hidden.w, like.hidden.in_dim()),
                b: g.hidden.b.clone(),
            },
            output: LayerDump {
                w: nest(&g.output.w, like.output.in_dim()),
                b: g.output.b.clone(),
            },
        }
    }

    fn to_gradients(&self, like: &Mlp) -> Result<Gradients, CheckpointError> {
        let as_net = self.to_net()?;
        if as_net.hidden.in_dim() != like.hidden.in_dim()
            || as_net.hidden.out_dim() != like.hidden.out_dim()
            || as_net.output.out_dim() != like.output.out_dim()
        {
            return Err(CheckpointError::DimensionMismatch(
                "optimizer moment shape does not match its network".into(),
            ));
        }
        let mut g = Gradients::zeros_like(like);
        g.hidden.w = as_net.hidden.w;
        g.hidden.b = as_net.hidden.b;
        g.output.w = as_net.output.w;
        g.output.b = as_net.output.b;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamDump {
    pub m: NetDump,
    pub v: NetDump,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamDump {
    fn from_state(state: &AdamState, like: &Mlp) -> Self {
        AdamDump {
            m: NetDump::from_gradients(&state.m, like),
            v: NetDump::from_gradients(&state.v, like),
            t: state.t,
            beta1: state.beta1,
            beta2: state.beta2,
            eps: state.eps,
        }
    }

    fn to_state(&self, like: &Mlp) -> Result<AdamState, CheckpointError> {
        let v = self.v.to_gradients(like)?;
        if [&v.hidden.w, &v.hidden.b, &v.output.w, &v.output.b]
            .iter()
            .any(|slab| slab.iter().any(|&x| x < 0.0))
        {
            return Err(CheckpointError::DimensionMismatch(
                "second-moment accumulator has negative entries".into(),
            ));
        }
        Ok(AdamState {
            m: self.m.to_gradients(like)?,
            v,
            t: self.t,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDump {
    pub actor: NetDump,
    pub critic: NetDump,
    pub actor_adam: AdamDump,
    pub critic_adam: AdamDump,
}

/// Stream positions of every generator a training run owns, split into
/// 64-bit halves to stay inside JSON-friendly integer ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngStateDump {
    pub seed: u64,
    pub env_stream: u64,
    pub env_word_pos_lo: u64,
    pub env_word_pos_hi: u64,
    pub sample_streams: Vec<u64>,
    pub sample_word_pos_lo: Vec<u64>,
    pub sample_word_pos_hi: Vec<u64>,
}

impl RngStateDump {
    pub fn new(env: &StreamState, samples: &[StreamState]) -> Self {
        RngStateDump {
            seed: env.seed,
            env_stream: env.stream,
            env_word_pos_lo: env.word_pos as u64,
            env_word_pos_hi: (env.word_pos >> 64) as u64,
            sample_streams: samples.iter().map(|s| s.stream).collect(),
            sample_word_pos_lo: samples.iter().map(|s| s.word_pos as u64).collect(),
            sample_word_pos_hi: samples.iter().map(|s| (s.word_pos >> 64) as u64).collect(),
        }
    }

    pub fn env_state(&self) -> StreamState {
        StreamState {
            seed: self.seed,
            stream: self.env_stream,
            word_pos: (self.env_word_pos_hi as u128) << 64 | self.env_word_pos_lo as u128,
        }
    }

    pub fn sample_states(&self) -> Vec<StreamState> {
        self.sample_streams
            .iter()
            .zip(self.sample_word_pos_lo.iter().zip(&self.sample_word_pos_hi))
            .map(|(&stream, (&lo, &hi))| StreamState {
                seed: self.seed,
                stream,
                word_pos: (hi as u128) << 64 | lo as u128,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_echo: TrainConfig,
    pub agents: Vec<AgentDump>,
    /// Completed training episodes at save time.
    pub episode_count: u32,
    pub rng_state: RngStateDump,
}

impl Checkpoint {
    pub fn from_agents(
        config: &TrainConfig,
        agents: &[Agent],
        episode_count: u32,
        env_state: StreamState,
        sample_states: &[StreamState],
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_echo: config.clone(),
            agents: agents
                .iter()
                .map(|a| AgentDump {
                    actor: NetDump::from_net(&a.actor),
                    critic: NetDump::from_net(&a.critic),
                    actor_adam: AdamDump::from_state(&a.actor_adam, &a.actor),
                    critic_adam: AdamDump::from_state(&a.critic_adam, &a.critic),
                })
                .collect(),
            episode_count,
            rng_state: RngStateDump::new(&env_state, sample_states),
        }
    }

    /// Check every stored shape against the echoed config.
    pub fn validate(&self) -> Result<(), CheckpointError> {
        let world = &self.config_echo.world;
        let obs_dim = world.obs_dim();
        let global_dim = world.global_dim();
        let hidden = self.config_echo.ppo.hidden_size;
        if self.agents.len() != world.n_agents {
            return Err(CheckpointError::DimensionMismatch(format!(
                "checkpoint holds {} agents, config says n_agents={}",
                self.agents.len(),
                world.n_agents
            )));
        }
        for (i, dump) in self.agents.iter().enumerate() {
            let actor = dump.actor.to_net()?;
            if actor.in_dim() != obs_dim || actor.hidden.out_dim() != hidden || actor.out_dim() != 5 {
                return Err(CheckpointError::DimensionMismatch(format!(
                    "agent {i} actor is {}x{}x{}, config demands {obs_dim}x{hidden}x5",
                    actor.in_dim(),
                    actor.hidden.out_dim(),
                    actor.out_dim()
                )));
            }
            let critic = dump.critic.to_net()?;
            if critic.in_dim() != global_dim || critic.hidden.out_dim() != hidden || critic.out_dim() != 1 {
                return Err(CheckpointError::DimensionMismatch(format!(
                    "agent {i} critic is {}x{}x{}, config demands {global_dim}x{hidden}x1",
                    critic.in_dim(),
                    critic.hidden.out_dim(),
                    critic.out_dim()
                )));
            }
            dump.actor_adam.to_state(&actor)?;
            dump.critic_adam.to_state(&critic)?;
        }
        Ok(())
    }

    /// Rebuild live agents; validates first.
    pub fn to_agents(&self) -> Result<Vec<Agent>, CheckpointError> {
        self.validate()?;
        self.agents
            .iter()
            .map(|dump| {
                let actor = dump.actor.to_net()?;
                let critic = dump.critic.to_net()?;
                Ok(Agent {
                    actor_adam: dump.actor_adam.to_state(&actor)?,
                    critic_adam: dump.critic_adam.to_state(&critic)?,
                    actor,
                    critic,
                })
            })
            .collect()
    }
}

/// JSON formatter printing every float with 17 significant digits, enough
/// for an exact decimal round-trip of any finite `f64`.
struct FullPrecisionFormatter;

impl serde_json::ser::Formatter for FullPrecisionFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serialize with exact float formatting; compact, deterministic bytes.
pub fn to_full_precision_json<T: Serialize>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecisionFormatter);
    value.serialize(&mut ser)?;
    Ok(out)
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    let mut bytes = to_full_precision_json(checkpoint)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let checkpoint: Checkpoint =
        serde_json::from_slice(&bytes).map_err(|source| CheckpointError::Parse {
            path: path.display().to_string(),
            source,
        })?;
    if checkpoint.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            expected: CHECKPOINT_FORMAT_VERSION,
            got: checkpoint.format_version,
        });
    }
    checkpoint.validate()?;
    Ok(checkpoint)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    /// Path relative to the run directory, with `/` separators.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Inventory of a run directory: config echo, seed list, hashed files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    pub files: Vec<ManifestFile>,
    /// Wall-clock write time; the one field exempt from reproducibility.
    pub created_unix: u64,
}

pub fn sha256_hex_file(path: &Path) -> Result<String, CheckpointError> {
    let mut file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}

/// Hash `rel_paths` (relative to `root`) into a manifest.
pub fn build_manifest(
    root: &Path,
    config: &TrainConfig,
    rel_paths: &[String],
) -> Result<RunManifest, CheckpointError> {
    let mut files = Vec::with_capacity(rel_paths.len());
    for rel in rel_paths {
        let full = root.join(rel);
        let meta = fs::metadata(&full).map_err(|e| io_err(&full, e))?;
        files.push(ManifestFile {
            path: rel.clone(),
            bytes: meta.len(),
            sha256: sha256_hex_file(&full)?,
        });
    }
    let created_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        config: config.clone(),
        seeds: config.seeds.clone(),
        files,
        created_unix,
    })
}

pub fn save_manifest(path: &Path, manifest: &RunManifest) -> Result<(), CheckpointError> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, CheckpointError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| CheckpointError::Parse {
        path: path.display().to_string(),
        source,
    })
}

/// Write `bytes` to `path`, creating parent directories first.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(bytes).map_err(|e| io_err(path, e))
}
