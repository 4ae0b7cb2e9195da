//! Binary checkpoint container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic    8 bytes  "FAHEADCK"
//! version  u32      currently 1
//! mode     u8       0 = goal, 1 = velocity
//! step     u64      environment steps trained
//! level    u8       curriculum level
//! rng      32-byte seed, u64 stream, u128 word position
//! v_min    f64
//! v_max    f64
//! nets     u32 count, then per network:
//!            u32 layer count L, L × u32 sizes, (L-1) × u8 activation tags,
//!            u64 parameter count, parameters as f64
//! ```
//!
//! Networks are stored in the order actor, critic, target actor, target
//! critic.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::agent::{Agent, AgentConfig};
use super::mlp::{Activation, Mlp};
use crate::controller::ActionMode;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FAHEADCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub mode: ActionMode,
    pub step: u64,
    pub level: u8,
    pub rng: ChaCha8Rng,
    pub v_min: f64,
    pub v_max: f64,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
}

fn write_net<W: Write>(w: &mut W, net: &Mlp) -> std::io::Result<()> {
    w.write_u32::<LE>(net.sizes().len() as u32)?;
    for s in net.sizes() {
        w.write_u32::<LE>(*s as u32)?;
    }
    for a in net.activations() {
        w.write_u8(a.tag())?;
    }
    w.write_u64::<LE>(net.params().len() as u64)?;
    for p in net.params() {
        w.write_f64::<LE>(*p)?;
    }
    Ok(())
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: std::path::PathBuf::new(),
        reason: reason.into(),
    }
}

fn read_net<R: Read>(r: &mut R) -> Result<Mlp> {
    let n_layers = r.read_u32::<LE>()? as usize;
    if !(2..=64).contains(&n_layers) {
        return Err(bad(format!("implausible layer count {n_layers}")));
    }
    let sizes = (0..n_layers)
        .map(|_| r.read_u32::<LE>().map(|s| s as usize))
        .collect::<std::io::Result<Vec<_>>>()?;
    if sizes.iter().any(|s| *s == 0 || *s > 1 << 16) {
        return Err(bad(format!("implausible layer sizes {sizes:?}")));
    }
    let activations = (0..n_layers - 1)
        .map(|_| {
            let tag = r.read_u8()?;
            Activation::from_tag(tag).ok_or_else(|| bad(format!("unknown activation tag {tag}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let n_params = r.read_u64::<LE>()? as usize;
    let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if n_params != expected {
        return Err(bad(format!("{n_params} parameters for layer sizes {sizes:?}")));
    }
    let mut params = vec![0.0; n_params];
    r.read_f64_into::<LE>(&mut params)?;
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    Mlp::from_parts(sizes, activations, params)
}

impl Checkpoint {
    pub fn from_agent(agent: &Agent, mode: ActionMode, step: u64, level: u8, rng: ChaCha8Rng) -> Self {
        Self {
            mode,
            step,
            level,
            rng,
            v_min: agent.cfg.v_min,
            v_max: agent.cfg.v_max,
            actor: agent.actor.clone(),
            critic: agent.critic.clone(),
            target_actor: agent.target_actor.clone(),
            target_critic: agent.target_critic.clone(),
        }
    }

    /// Rebuilds an agent with fresh optimiser state. Network shapes override
    /// the sizes in `cfg`.
    pub fn into_agent(self, mut cfg: AgentConfig) -> Agent {
        let sizes = self.actor.sizes();
        cfg.obs_dim = sizes[0];
        cfg.action_dim = *sizes.last().unwrap();
        cfg.actor_hidden = sizes[1..sizes.len() - 1].to_vec();
        let csizes = self.critic.sizes();
        cfg.critic_hidden = csizes[1..csizes.len() - 1].to_vec();
        cfg.atoms = *csizes.last().unwrap();
        cfg.v_min = self.v_min;
        cfg.v_max = self.v_max;
        let mut agent = Agent::from_nets(cfg, self.actor, self.critic);
        agent.target_actor = self.target_actor;
        agent.target_critic = self.target_critic;
        agent
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u8(match self.mode {
            ActionMode::Goal => 0,
            ActionMode::Velocity => 1,
        })?;
        w.write_u64::<LE>(self.step)?;
        w.write_u8(self.level)?;
        w.write_all(&self.rng.get_seed())?;
        w.write_u64::<LE>(self.rng.get_stream())?;
        w.write_u128::<LE>(self.rng.get_word_pos())?;
        w.write_f64::<LE>(self.v_min)?;
        w.write_f64::<LE>(self.v_max)?;
        let nets = [&self.actor, &self.critic, &self.target_actor, &self.target_critic];
        w.write_u32::<LE>(nets.len() as u32)?;
        for n in nets {
            write_net(&mut w, n)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = r.read_u32::<LE>()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mode = match r.read_u8()? {
            0 => ActionMode::Goal,
            1 => ActionMode::Velocity,
            m => return Err(bad(format!("unknown action mode {m}"))),
        };
        let step = r.read_u64::<LE>()?;
        let level = r.read_u8()?;
        let mut seed = [0u8; 32];
        r.read_exact(&mut seed)?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(r.read_u64::<LE>()?);
        rng.set_word_pos(r.read_u128::<LE>()?);
        let v_min = r.read_f64::<LE>()?;
        let v_max = r.read_f64::<LE>()?;
        let count = r.read_u32::<LE>()?;
        if count != 4 {
            return Err(bad(format!("expected 4 networks, found {count}")));
        }
        let actor = read_net(&mut r)?;
        let critic = read_net(&mut r)?;
        let target_actor = read_net(&mut r)?;
        let target_critic = read_net(&mut r)?;
        if !actor.same_shape(&target_actor) || !critic.same_shape(&target_critic) {
            return Err(bad("target networks differ in shape from online networks"));
        }
        Ok(Self {
            mode,
            step,
            level,
            rng,
            v_min,
            v_max,
            actor,
            critic,
            target_actor,
            target_critic,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path)?;
        self.write_to(BufWriter::new(f)).map_err(|e| with_path(e, path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::read_from(BufReader::new(f)).map_err(|e| with_path(e, path))
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Checkpoint { reason, .. } => Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        },
        Error::Io(io) => Error::Checkpoint {
            path: path.to_path_buf(),
            reason: io.to_string(),
        },
        other => other,
    }
}
