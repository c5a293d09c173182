//! Torque-controlled pendulum with canonical state (q, p).
//!
//! The canonical momentum is p = (1/3) m l^2 dq/dt, the Hamiltonian is
//! H(q, p) = 3 p^2 / (2 m l^2) + (1/2) m g l cos q (q = 0 is upright), and
//! the dynamics integrate
//!
//!   dq/dt = 3 p / (m l^2)
//!   dp/dt = (1/2) m g l sin q + clip(u)
//!
//! with the torque clipped to the bound and dp/dt clamped toward zero on
//! the offending side while |p| exceeds the momentum matching the angular
//! velocity bound. Observations are [cos q, sin q, dq/dt].

use rand::Rng;

use crate::error::{NodaError, Result};
use crate::odeint::{integrate_fn, IntegratorConfig, Method};
use crate::rng::rng_from;

use super::EnvState;

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    /// Gravitational acceleration; named to avoid the decoder `g`.
    pub g_grav: f64,
    pub dt: f64,
    pub torque_bound: f64,
    pub omega_bound: f64,
    pub substeps: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            mass: 1.0,
            length: 1.0,
            g_grav: 10.0,
            dt: 0.05,
            torque_bound: 2.0,
            omega_bound: 8.0,
            substeps: 10,
        }
    }
}

#[derive(Clone)]
pub struct Pendulum {
    params: PendulumParams,
    /// Unwrapped angle; only observations wrap to [-pi, pi).
    q: f64,
    p: f64,
    t: f64,
}

/// Wraps to [-pi, pi).
pub(crate) fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        assert!(
            params.mass > 0.0
                && params.length > 0.0
                && params.g_grav > 0.0
                && params.dt > 0.0
                && params.torque_bound > 0.0
                && params.omega_bound > 0.0
        );
        Pendulum { params, q: 0.0, p: 0.0, t: 0.0 }
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    fn ml2(&self) -> f64 {
        self.params.mass * self.params.length * self.params.length
    }

    /// Momentum at which |dq/dt| hits the angular velocity bound.
    fn p_max(&self) -> f64 {
        self.params.omega_bound * self.ml2() / 3.0
    }

    fn omega(&self, p: f64) -> f64 {
        3.0 * p / self.ml2()
    }

    fn field(&self, u: &[f64], torque: f64) -> Vec<f64> {
        let (q, p) = (u[0], u[1]);
        let dq = self.omega(p);
        let raw = 0.5 * self.params.mass * self.params.g_grav * self.params.length * q.sin() + torque;
        let p_max = self.p_max();
        let dp = if p > p_max {
            raw.min(0.0)
        } else if p < -p_max {
            raw.max(0.0)
        } else {
            raw
        };
        vec![dq, dp]
    }

    pub fn name(&self) -> &'static str {
        "pendulum"
    }

    pub fn obs_dim(&self) -> usize {
        3
    }

    pub fn action_dim(&self) -> usize {
        1
    }

    pub fn action_bound(&self) -> f64 {
        self.params.torque_bound
    }

    pub fn dt(&self) -> f64 {
        self.params.dt
    }

    pub fn canonical_dim(&self) -> usize {
        2
    }

    pub fn reset(&mut self, seed: u64) -> EnvState {
        let mut rng = rng_from(seed);
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let omega = rng.gen_range(-1.0..1.0);
        self.q = theta;
        self.p = self.ml2() * omega / 3.0;
        self.t = 0.0;
        self.state()
    }

    pub fn state(&self) -> EnvState {
        EnvState {
            obs: vec![self.q.cos(), self.q.sin(), self.omega(self.p)],
            canonical: vec![self.q, self.p],
            t: self.t,
        }
    }

    pub fn step(&mut self, a: &[f64]) -> Result<(EnvState, f64, bool)> {
        if a.len() != 1 {
            return Err(NodaError::Dim(format!("pendulum action has shape [1], got [{}]", a.len())));
        }
        if !a[0].is_finite() {
            return Err(NodaError::Domain("non-finite action".into()));
        }
        let torque = a[0].clamp(-self.params.torque_bound, self.params.torque_bound);
        // reward of (s_t, a_t), evaluated before the state advances
        let reward = -(wrap_angle(self.q).powi(2)
            + 0.1 * self.omega(self.p).powi(2)
            + 0.001 * torque * torque);

        let cfg = IntegratorConfig {
            method: Method::Rk4,
            t0: self.t,
            tau: self.params.dt,
            substeps: self.params.substeps,
        };
        let u = integrate_fn(|u, _a, _t| self.field(u, torque), &[self.q, self.p], &[], &cfg)?;
        self.q = u[0];
        // hard guard so observations stay inside the documented bounded set
        self.p = u[1].clamp(-self.p_max(), self.p_max());
        self.t += self.params.dt;
        Ok((self.state(), reward, false))
    }

    pub fn set_obs(&mut self, obs: &[f64]) -> Result<()> {
        let u = self.true_encode(obs)?;
        self.q = u[0];
        self.p = u[1];
        self.t = 0.0;
        Ok(())
    }

    pub fn hamiltonian(&self, u: &[f64]) -> f64 {
        let (q, p) = (u[0], u[1]);
        3.0 * p * p / (2.0 * self.ml2())
            + 0.5 * self.params.mass * self.params.g_grav * self.params.length * q.cos()
    }

    /// f*: [cos q, sin q, dq/dt] -> [q, p] with q wrapped to [-pi, pi).
    pub fn true_encode(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != 3 {
            return Err(NodaError::Dim(format!("pendulum obs has 3 entries, got {}", obs.len())));
        }
        let circle = obs[0] * obs[0] + obs[1] * obs[1];
        if (circle - 1.0).abs() > 1e-6 {
            return Err(NodaError::Domain(format!(
                "observation off the unit circle: cos^2+sin^2 = {circle}"
            )));
        }
        let q = wrap_angle(obs[1].atan2(obs[0]));
        let p = self.ml2() * obs[2] / 3.0;
        Ok(vec![q, p])
    }

    pub fn true_decode(&self, u: &[f64]) -> Vec<f64> {
        vec![u[0].cos(), u[0].sin(), self.omega(u[1])]
    }

    pub fn reward_from_obs(&self, obs: &[f64], a: &[f64]) -> Result<f64> {
        let u = self.true_encode(obs)?;
        let torque = a[0].clamp(-self.params.torque_bound, self.params.torque_bound);
        Ok(-(wrap_angle(u[0]).powi(2) + 0.1 * self.omega(u[1]).powi(2) + 0.001 * torque * torque))
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("env".into(), "pendulum".into()),
            ("mass".into(), format!("{:e}", self.params.mass)),
            ("length".into(), format!("{:e}", self.params.length)),
            ("g_grav".into(), format!("{:e}", self.params.g_grav)),
            ("dt".into(), format!("{:e}", self.params.dt)),
            ("torque_bound".into(), format!("{:e}", self.params.torque_bound)),
            ("omega_bound".into(), format!("{:e}", self.params.omega_bound)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn env() -> Pendulum {
        Pendulum::new(PendulumParams::default())
    }

    #[test]
    fn reset_is_deterministic_and_in_range() {
        let mut e = env();
        let a = e.reset(123);
        let b = e.reset(123);
        assert_eq!(a, b);
        for seed in 0..1000 {
            let s = e.reset(seed);
            assert!(s.canonical[0] >= -PI && s.canonical[0] < PI);
            let omega = s.obs[2];
            assert!((-1.0..1.0).contains(&omega));
            // observation equals [cos q, sin q, dq/dt] of the internal state
            assert_eq!(s.obs[0], s.canonical[0].cos());
            assert_eq!(s.obs[1], s.canonical[0].sin());
        }
    }

    #[test]
    fn upright_equilibrium_is_fixed_point() {
        let mut e = env();
        e.q = 0.0;
        e.p = 0.0;
        let (s, _, done) = e.step(&[0.0]).unwrap();
        assert_eq!(s.canonical, vec![0.0, 0.0]);
        assert!(!done);
    }

    #[test]
    fn torque_clips_to_bound() {
        let mut a = env();
        let mut b = env();
        a.reset(7);
        b.reset(7);
        for _ in 0..50 {
            let (sa, ra, _) = a.step(&[5.0]).unwrap();
            let (sb, rb, _) = b.step(&[2.0]).unwrap();
            assert_eq!(sa, sb);
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn energy_conserved_without_torque() {
        let mut e = env();
        e.reset(42);
        let mut prev_h = e.hamiltonian(&[e.q, e.p]);
        for _ in 0..500 {
            e.step(&[0.0]).unwrap();
            let h = e.hamiltonian(&[e.q, e.p]);
            assert!((h - prev_h).abs() < 1e-6, "energy drift {}", (h - prev_h).abs());
            prev_h = h;
        }
    }

    #[test]
    fn hamiltonian_reference_values() {
        let e = env();
        assert_eq!(e.hamiltonian(&[0.0, 0.0]), 5.0);
        assert!((e.hamiltonian(&[PI, 0.0]) + 5.0).abs() < 1e-12);
        // even in q (cosine) and p (square)
        assert_eq!(e.hamiltonian(&[0.7, 0.3]), e.hamiltonian(&[-0.7, -0.3]));
    }

    #[test]
    fn canonical_map_examples_and_roundtrip() {
        let e = env();
        assert_eq!(e.true_encode(&[1.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let u = e.true_encode(&[0.0, 1.0, 3.0]).unwrap();
        assert!((u[0] - PI / 2.0).abs() < 1e-12 && (u[1] - 1.0).abs() < 1e-12);
        let u = e.true_encode(&[-1.0, 0.0, 0.0]).unwrap();
        assert_eq!(u, vec![-PI, 0.0]);

        for seed in 0..50 {
            let mut e2 = env();
            let s = e2.reset(seed);
            let round = e.true_decode(&e.true_encode(&s.obs).unwrap());
            for (x, y) in round.iter().zip(&s.obs) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn off_circle_observation_rejected() {
        let e = env();
        assert!(matches!(
            e.true_encode(&[0.5, 0.5, 0.0]),
            Err(NodaError::Domain(_))
        ));
    }

    #[test]
    fn observations_stay_in_bounded_set() {
        let mut e = env();
        e.reset(3);
        let mut rng = rng_from(17);
        for _ in 0..10_000 {
            let torque = rng.gen_range(-2.0..2.0);
            let (s, _, _) = e.step(&[torque]).unwrap();
            assert!(s.obs[0].abs() <= 1.0 + 1e-12 && s.obs[1].abs() <= 1.0 + 1e-12);
            assert!(s.obs[2].abs() <= 8.0 + 1e-12, "omega {}", s.obs[2]);
        }
    }

    #[test]
    fn energy_work_identity_against_quadrature() {
        // with clips inactive, H(t+dt) - H(t) = integral of torque * dq/dt,
        // checked against a fine-substep trapezoidal quadrature
        let e0 = env();
        for seed in 0..10 {
            let mut e = env();
            e.reset(seed);
            let torque = (seed as f64 / 10.0) - 0.5;
            let (q0, p0) = (e.q, e.p);
            let h0 = e.hamiltonian(&[q0, p0]);
            e.step(&[torque]).unwrap();
            let h1 = e.hamiltonian(&[e.q, e.p]);

            // quadrature oracle on a fine grid of the same dynamics
            let fine = 2000usize;
            let h = e0.params.dt / fine as f64;
            let (mut q, mut p) = (q0, p0);
            let mut work = 0.0;
            for _ in 0..fine {
                let w0 = 3.0 * p / e0.ml2();
                let cfg = IntegratorConfig { method: Method::Rk4, t0: 0.0, tau: h, substeps: 1 };
                let u = integrate_fn(|u, _, _| e0.field(u, torque), &[q, p], &[], &cfg).unwrap();
                q = u[0];
                p = u[1];
                let w1 = 3.0 * p / e0.ml2();
                work += torque * 0.5 * (w0 + w1) * h;
            }
            assert!(
                ((h1 - h0) - work).abs() < 1e-5,
                "seed {seed}: dH {} vs work {work}",
                h1 - h0
            );
        }
    }
}
