//! Analytic ground-truth environments with Hamiltonian canonical dynamics,
//! a uniform reset/step interface, and exact canonical coordinate maps.

mod pendulum;
mod springmass;

pub use pendulum::{Pendulum, PendulumParams};
pub use springmass::{SpringMass, SpringMassParams};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NodaError, Result};
use crate::rng::{derive_indexed, rng_from};

/// One environment interaction record.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s2: Vec<f64>,
    pub r: f64,
    pub done: bool,
}

/// Observation, internal canonical state (q, p), and time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub obs: Vec<f64>,
    pub canonical: Vec<f64>,
    pub t: f64,
}

/// The closed set of analytic environments.
#[derive(Clone)]
pub enum Env {
    Pendulum(Pendulum),
    SpringMass(SpringMass),
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            Env::Pendulum($e) => $body,
            Env::SpringMass($e) => $body,
        }
    };
}

impl Env {
    pub fn by_name(name: &str) -> Result<Env> {
        match name {
            "pendulum" => Ok(Env::Pendulum(Pendulum::new(PendulumParams::default()))),
            "springmass" => Ok(Env::SpringMass(SpringMass::new(SpringMassParams::default()))),
            other => Err(NodaError::Domain(format!("unknown env `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        delegate!(self, e => e.name())
    }

    pub fn obs_dim(&self) -> usize {
        delegate!(self, e => e.obs_dim())
    }

    pub fn action_dim(&self) -> usize {
        delegate!(self, e => e.action_dim())
    }

    /// Symmetric action box: every dimension lies in [-bound, bound].
    pub fn action_bound(&self) -> f64 {
        delegate!(self, e => e.action_bound())
    }

    pub fn dt(&self) -> f64 {
        delegate!(self, e => e.dt())
    }

    /// Canonical state dimension 2K.
    pub fn canonical_dim(&self) -> usize {
        delegate!(self, e => e.canonical_dim())
    }

    pub fn reset(&mut self, seed: u64) -> EnvState {
        delegate!(self, e => e.reset(seed))
    }

    pub fn step(&mut self, a: &[f64]) -> Result<(EnvState, f64, bool)> {
        delegate!(self, e => e.step(a))
    }

    pub fn state(&self) -> EnvState {
        delegate!(self, e => e.state())
    }

    /// Places the environment at the canonical state encoded by `obs`.
    pub fn set_obs(&mut self, obs: &[f64]) -> Result<()> {
        delegate!(self, e => e.set_obs(obs))
    }

    pub fn hamiltonian(&self, u: &[f64]) -> f64 {
        delegate!(self, e => e.hamiltonian(u))
    }

    pub fn true_encode(&self, obs: &[f64]) -> Result<Vec<f64>> {
        delegate!(self, e => e.true_encode(obs))
    }

    pub fn true_decode(&self, u: &[f64]) -> Vec<f64> {
        delegate!(self, e => e.true_decode(u))
    }

    pub fn reward_from_obs(&self, obs: &[f64], a: &[f64]) -> Result<f64> {
        delegate!(self, e => e.reward_from_obs(obs, a))
    }

    pub fn sample_action(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let b = self.action_bound();
        (0..self.action_dim()).map(|_| rng.gen_range(-b..b)).collect()
    }

    pub fn sample_action_seeded(&self, seed: u64) -> Vec<f64> {
        self.sample_action(&mut rng_from(seed))
    }

    /// One-step lookahead from an arbitrary observation without touching
    /// the live state. Returns (next observation, reward).
    pub fn peek_step(&self, obs: &[f64], a: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut copy = self.clone();
        copy.set_obs(obs)?;
        let (next, r, _) = copy.step(a)?;
        Ok((next.obs, r))
    }

    /// Key=value pairs describing the environment, stored in checkpoints.
    pub fn metadata(&self) -> Vec<(String, String)> {
        delegate!(self, e => e.metadata())
    }
}

/// Random-policy rollouts cut into `episode_len`-step episodes. Each
/// recorded action is held for `steps_per_action` consecutive env steps
/// (1 for ordinary one-step transitions); `s2` is the observation after
/// the hold and `r` the first step's reward.
pub fn collect_transitions(
    env: &mut Env,
    seed: u64,
    count: usize,
    steps_per_action: usize,
    episode_len: usize,
) -> Result<Vec<Transition>> {
    assert!(steps_per_action >= 1);
    let mut rng = rng_from(crate::rng::derive(seed, "collect-actions"));
    let mut out = Vec::with_capacity(count);
    let mut episode = 0u64;
    'outer: loop {
        let mut state = env.reset(derive_indexed(seed, "collect-reset", episode));
        episode += 1;
        let mut steps = 0usize;
        while steps + steps_per_action <= episode_len {
            let a = env.sample_action(&mut rng);
            let s = state.obs.clone();
            let mut first_r = 0.0;
            for k in 0..steps_per_action {
                let (next, r, _) = env.step(&a)?;
                if k == 0 {
                    first_r = r;
                }
                state = next;
            }
            steps += steps_per_action;
            out.push(Transition { s, a, s2: state.obs.clone(), r: first_r, done: false });
            if out.len() == count {
                break 'outer;
            }
        }
    }
    Ok(out)
}
