//! Coupled spring-mass chain: two unit masses on a line, one spring to the
//! wall (k1) and one between the masses (k2), with a bounded force on the
//! second mass. H = (p1^2 + p2^2)/2 + k1 x1^2 / 2 + k2 (x2 - x1)^2 / 2.
//!
//! Observations are a fixed random orthonormal lift of the canonical state
//! (x1, x2, p1, p2) to 8 dimensions, so the auto-encoder has an actual
//! dimensionality reduction to learn and the latent-dimension sweep has a
//! known true value 2K = 4.

use rand::Rng;

use crate::error::{NodaError, Result};
use crate::odeint::{integrate_fn, IntegratorConfig, Method};
use crate::rng::rng_from;

use super::EnvState;

#[derive(Debug, Clone, PartialEq)]
pub struct SpringMassParams {
    pub k1: f64,
    pub k2: f64,
    pub dt: f64,
    pub force_bound: f64,
    /// Seed of the 8x4 observation lift; stored in checkpoints.
    pub lift_seed: u64,
    pub substeps: usize,
}

impl Default for SpringMassParams {
    fn default() -> Self {
        SpringMassParams { k1: 1.0, k2: 1.0, dt: 0.05, force_bound: 1.0, lift_seed: 1_234_567, substeps: 10 }
    }
}

pub const SPRING_OBS_DIM: usize = 8;
const CANON_DIM: usize = 4;

#[derive(Clone)]
pub struct SpringMass {
    params: SpringMassParams,
    /// Row-major [8, 4], orthonormal columns.
    lift: Vec<f64>,
    u: [f64; CANON_DIM],
    t: f64,
}

/// Gram-Schmidt orthonormalization of the columns of a seeded random
/// matrix; full column rank with probability 1, asserted anyway.
fn make_lift(seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    let mut cols: Vec<Vec<f64>> = (0..CANON_DIM)
        .map(|_| (0..SPRING_OBS_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    for j in 0..CANON_DIM {
        for i in 0..j {
            let dot: f64 = cols[j].iter().zip(&cols[i]).map(|(a, b)| a * b).sum();
            let prev = cols[i].clone();
            for (x, p) in cols[j].iter_mut().zip(&prev) {
                *x -= dot * p;
            }
        }
        let norm: f64 = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 1e-6, "degenerate lift seed");
        for x in cols[j].iter_mut() {
            *x /= norm;
        }
    }
    let mut lift = vec![0.0; SPRING_OBS_DIM * CANON_DIM];
    for (j, col) in cols.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            lift[i * CANON_DIM + j] = x;
        }
    }
    lift
}

impl SpringMass {
    pub fn new(params: SpringMassParams) -> Self {
        assert!(params.k1 > 0.0 && params.k2 > 0.0 && params.dt > 0.0 && params.force_bound > 0.0);
        let lift = make_lift(params.lift_seed);
        SpringMass { params, lift, u: [0.0; CANON_DIM], t: 0.0 }
    }

    pub fn params(&self) -> &SpringMassParams {
        &self.params
    }

    fn field(&self, u: &[f64], force: f64) -> Vec<f64> {
        let (x1, x2, p1, p2) = (u[0], u[1], u[2], u[3]);
        let stretch = x2 - x1;
        vec![
            p1,
            p2,
            -self.params.k1 * x1 + self.params.k2 * stretch,
            -self.params.k2 * stretch + force,
        ]
    }

    pub fn name(&self) -> &'static str {
        "springmass"
    }

    pub fn obs_dim(&self) -> usize {
        SPRING_OBS_DIM
    }

    pub fn action_dim(&self) -> usize {
        1
    }

    pub fn action_bound(&self) -> f64 {
        self.params.force_bound
    }

    pub fn dt(&self) -> f64 {
        self.params.dt
    }

    pub fn canonical_dim(&self) -> usize {
        CANON_DIM
    }

    pub fn reset(&mut self, seed: u64) -> EnvState {
        let mut rng = rng_from(seed);
        for x in self.u.iter_mut() {
            *x = rng.gen_range(-0.5..0.5);
        }
        self.t = 0.0;
        self.state()
    }

    pub fn state(&self) -> EnvState {
        EnvState { obs: self.true_decode(&self.u), canonical: self.u.to_vec(), t: self.t }
    }

    pub fn step(&mut self, a: &[f64]) -> Result<(EnvState, f64, bool)> {
        if a.len() != 1 {
            return Err(NodaError::Dim(format!("springmass action has shape [1], got [{}]", a.len())));
        }
        if !a[0].is_finite() {
            return Err(NodaError::Domain("non-finite action".into()));
        }
        let force = a[0].clamp(-self.params.force_bound, self.params.force_bound);
        let reward = -(self.u[0] * self.u[0] + self.u[1] * self.u[1]);
        let cfg = IntegratorConfig {
            method: Method::Rk4,
            t0: self.t,
            tau: self.params.dt,
            substeps: self.params.substeps,
        };
        let u = integrate_fn(|u, _a, _t| self.field(u, force), &self.u, &[], &cfg)?;
        self.u.copy_from_slice(&u);
        self.t += self.params.dt;
        Ok((self.state(), reward, false))
    }

    pub fn set_obs(&mut self, obs: &[f64]) -> Result<()> {
        let u = self.true_encode(obs)?;
        self.u.copy_from_slice(&u);
        self.t = 0.0;
        Ok(())
    }

    pub fn hamiltonian(&self, u: &[f64]) -> f64 {
        let (x1, x2, p1, p2) = (u[0], u[1], u[2], u[3]);
        0.5 * (p1 * p1 + p2 * p2)
            + 0.5 * self.params.k1 * x1 * x1
            + 0.5 * self.params.k2 * (x2 - x1) * (x2 - x1)
    }

    /// Pseudo-inverse of the lift; exact because the columns are
    /// orthonormal. Rejects observations off the lift's column space.
    pub fn true_encode(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != SPRING_OBS_DIM {
            return Err(NodaError::Dim(format!(
                "springmass obs has {SPRING_OBS_DIM} entries, got {}",
                obs.len()
            )));
        }
        let mut u = vec![0.0; CANON_DIM];
        for (i, &o) in obs.iter().enumerate() {
            for j in 0..CANON_DIM {
                u[j] += self.lift[i * CANON_DIM + j] * o;
            }
        }
        let back = self.true_decode(&u);
        let resid: f64 = back.iter().zip(obs).map(|(b, o)| (b - o) * (b - o)).sum::<f64>().sqrt();
        if resid > 1e-6 {
            return Err(NodaError::Domain(format!(
                "observation off the lift column space (residual {resid:.3e})"
            )));
        }
        Ok(u)
    }

    pub fn true_decode(&self, u: &[f64]) -> Vec<f64> {
        let mut obs = vec![0.0; SPRING_OBS_DIM];
        for i in 0..SPRING_OBS_DIM {
            let row = &self.lift[i * CANON_DIM..(i + 1) * CANON_DIM];
            obs[i] = row.iter().zip(u).map(|(l, x)| l * x).sum();
        }
        obs
    }

    pub fn reward_from_obs(&self, obs: &[f64], _a: &[f64]) -> Result<f64> {
        let u = self.true_encode(obs)?;
        Ok(-(u[0] * u[0] + u[1] * u[1]))
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("env".into(), "springmass".into()),
            ("k1".into(), format!("{:e}", self.params.k1)),
            ("k2".into(), format!("{:e}", self.params.k2)),
            ("dt".into(), format!("{:e}", self.params.dt)),
            ("force_bound".into(), format!("{:e}", self.params.force_bound)),
            ("lift_seed".into(), self.params.lift_seed.to_string()),
        ]
    }
}
