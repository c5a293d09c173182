//! Fixed-step ODE integration of du/dt = field(u, a, t).
//!
//! Two entry points share the same stepping rules: `integrate_fn` works on
//! plain slices (analytic environment dynamics), `integrate_var` works on
//! tape variables so the solution is differentiable with respect to the
//! initial state, the action, and any field parameters
//! (discretize-then-differentiate through the unrolled steps).

use crate::diffcore::{Tape, Var};
use crate::error::{NodaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Euler,
    Rk4,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            other => Err(NodaError::Domain(format!("unknown integrator `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
        }
    }
}

/// Start time, horizon and substep count for one `integrate` call. The
/// action is held constant over the whole interval (zero-order hold).
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t0: f64,
    pub tau: f64,
    pub substeps: usize,
}

impl IntegratorConfig {
    pub fn new(method: Method, t0: f64, tau: f64, substeps: usize) -> Result<Self> {
        let cfg = IntegratorConfig { method, t0, tau, substeps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rk4(tau: f64, substeps: usize) -> Self {
        IntegratorConfig { method: Method::Rk4, t0: 0.0, tau, substeps }
    }

    pub fn validate(&self) -> Result<()> {
        if self.substeps < 1 {
            return Err(NodaError::Contract("substeps must be >= 1".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(NodaError::Contract(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Integrates a plain vector field and returns u(t0 + tau).
pub fn integrate_fn<F>(field: F, u0: &[f64], a: &[f64], cfg: &IntegratorConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64], f64) -> Vec<f64>,
{
    cfg.validate()?;
    let h = cfg.tau / cfg.substeps as f64;
    let mut u = u0.to_vec();
    for s in 0..cfg.substeps {
        let t = cfg.t0 + s as f64 * h;
        match cfg.method {
            Method::Euler => {
                let k1 = field(&u, a, t);
                axpy(&mut u, h, &k1);
            }
            Method::Rk4 => {
                let k1 = field(&u, a, t);
                let mut u2 = u.clone();
                axpy(&mut u2, 0.5 * h, &k1);
                let k2 = field(&u2, a, t + 0.5 * h);
                let mut u3 = u.clone();
                axpy(&mut u3, 0.5 * h, &k2);
                let k3 = field(&u3, a, t + 0.5 * h);
                let mut u4 = u.clone();
                axpy(&mut u4, h, &k3);
                let k4 = field(&u4, a, t + h);
                for i in 0..u.len() {
                    u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        if !u.iter().all(|x| x.is_finite()) {
            return Err(NodaError::Divergence { substep: s, detail: "non-finite state".into() });
        }
    }
    Ok(u)
}

/// Integrates a field built from tape operations. `u0` and `a` are
/// `[batch, dim]` variables; the result is on the tape.
pub fn integrate_var<F>(
    tape: &mut Tape,
    field: &mut F,
    u0: Var,
    a: Var,
    cfg: &IntegratorConfig,
) -> Result<Var>
where
    F: FnMut(&mut Tape, Var, Var, f64) -> Result<Var>,
{
    cfg.validate()?;
    let h = cfg.tau / cfg.substeps as f64;
    let mut u = u0;
    for s in 0..cfg.substeps {
        let t = cfg.t0 + s as f64 * h;
        let step = |e: NodaError| match e {
            NodaError::NonFinite(d) => NodaError::Divergence { substep: s, detail: d },
            other => other,
        };
        match cfg.method {
            Method::Euler => {
                let k1 = field(tape, u, a, t).map_err(step)?;
                let dk = tape.scale(k1, h).map_err(step)?;
                u = tape.add(u, dk).map_err(step)?;
            }
            Method::Rk4 => {
                let k1 = field(tape, u, a, t).map_err(step)?;
                let d1 = tape.scale(k1, 0.5 * h).map_err(step)?;
                let u2 = tape.add(u, d1).map_err(step)?;
                let k2 = field(tape, u2, a, t + 0.5 * h).map_err(step)?;
                let d2 = tape.scale(k2, 0.5 * h).map_err(step)?;
                let u3 = tape.add(u, d2).map_err(step)?;
                let k3 = field(tape, u3, a, t + 0.5 * h).map_err(step)?;
                let d3 = tape.scale(k3, h).map_err(step)?;
                let u4 = tape.add(u, d3).map_err(step)?;
                let k4 = field(tape, u4, a, t + h).map_err(step)?;
                // u += h/6 (k1 + 2 k2 + 2 k3 + k4)
                let k22 = tape.scale(k2, 2.0).map_err(step)?;
                let k32 = tape.scale(k3, 2.0).map_err(step)?;
                let sum = tape.add(k1, k22).map_err(step)?;
                let sum = tape.add(sum, k32).map_err(step)?;
                let sum = tape.add(sum, k4).map_err(step)?;
                let du = tape.scale(sum, h / 6.0).map_err(step)?;
                u = tape.add(u, du).map_err(step)?;
            }
        }
    }
    Ok(u)
}

/// Error of the discrete solution against a reference, per substep count.
/// Used to assert convergence order (Euler ~1, RK4 ~4).
pub fn convergence_order<F>(
    field: F,
    u0: &[f64],
    a: &[f64],
    method: Method,
    tau: f64,
    s_list: &[usize],
    reference: &[f64],
) -> Result<Vec<(usize, f64)>>
where
    F: Fn(&[f64], &[f64], f64) -> Vec<f64>,
{
    let mut out = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let cfg = IntegratorConfig { method, t0: 0.0, tau, substeps: s };
        let u = integrate_fn(&field, u0, a, &cfg)?;
        let err = u
            .iter()
            .zip(reference)
            .map(|(x, r)| (x - r) * (x - r))
            .sum::<f64>()
            .sqrt();
        out.push((s, err));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{grad_check, ParamSet, Tensor};

    fn decay(u: &[f64], _a: &[f64], _t: f64) -> Vec<f64> {
        u.iter().map(|x| -x).collect()
    }

    #[test]
    fn zero_field_is_identity() {
        let cfg = IntegratorConfig::rk4(1.0, 7);
        let u = integrate_fn(|u, _, _| vec![0.0; u.len()], &[1.5, -2.0], &[], &cfg).unwrap();
        assert_eq!(u, vec![1.5, -2.0]);
    }

    #[test]
    fn exponential_decay_closed_form() {
        let cfg = IntegratorConfig::rk4(1.0, 100);
        let u = integrate_fn(decay, &[1.0], &[], &cfg).unwrap();
        assert!((u[0] - (-1.0f64).exp()).abs() < 1e-8, "got {}", u[0]);
        assert!((u[0] - 0.36787944).abs() < 1e-8);
    }

    #[test]
    fn harmonic_oscillator_quarter_turn() {
        // dq/dt = p, dp/dt = -q rotates (1,0) to (0,-1) after tau = pi/2
        let field = |u: &[f64], _a: &[f64], _t: f64| vec![u[1], -u[0]];
        let cfg = IntegratorConfig::rk4(std::f64::consts::FRAC_PI_2, 100);
        let u = integrate_fn(field, &[1.0, 0.0], &[], &cfg).unwrap();
        assert!(u[0].abs() < 1e-6 && (u[1] + 1.0).abs() < 1e-6, "got {u:?}");
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let reference = vec![(-1.0f64).exp()];
        let errs = convergence_order(decay, &[1.0], &[], Method::Rk4, 1.0, &[10, 20], &reference).unwrap();
        let ratio = errs[0].1 / errs[1].1;
        assert!((12.0..=20.0).contains(&ratio), "rk4 ratio {ratio}");
    }

    #[test]
    fn euler_first_order_convergence() {
        let reference = vec![(-1.0f64).exp()];
        let errs =
            convergence_order(decay, &[1.0], &[], Method::Euler, 1.0, &[100, 200], &reference).unwrap();
        let ratio = errs[0].1 / errs[1].1;
        assert!((1.8..=2.2).contains(&ratio), "euler ratio {ratio}");
    }

    #[test]
    fn constant_field_exact_for_any_substeps() {
        // solution is degree-1 in t, integrated exactly by euler and rk4
        let field = |_u: &[f64], _a: &[f64], _t: f64| vec![2.0, -1.0];
        for method in [Method::Euler, Method::Rk4] {
            for s in [1, 3, 17] {
                let cfg = IntegratorConfig { method, t0: 0.0, tau: 0.5, substeps: s };
                let u = integrate_fn(field, &[0.0, 0.0], &[], &cfg).unwrap();
                assert!((u[0] - 1.0).abs() < 1e-12 && (u[1] + 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divergence_reports_substep() {
        // du/dt = u^3 from u = 3 blows up quickly under huge steps
        let field = |u: &[f64], _a: &[f64], _t: f64| u.iter().map(|x| x * x * x).collect();
        let cfg = IntegratorConfig { method: Method::Euler, t0: 0.0, tau: 1e6, substeps: 50 };
        match integrate_fn(field, &[3.0], &[], &cfg) {
            Err(NodaError::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn tape_and_fn_paths_agree_bitwise() {
        let cfg = IntegratorConfig::rk4(0.7, 13);
        let plain = integrate_fn(decay, &[0.9, -0.4], &[], &cfg).unwrap();

        let mut tape = Tape::new();
        let u0 = tape.constant(Tensor::new(vec![1, 2], vec![0.9, -0.4]).unwrap());
        let a = tape.constant(Tensor::new(vec![1, 0], vec![]).unwrap());
        let mut field = |tape: &mut Tape, u: Var, _a: Var, _t: f64| tape.scale(u, -1.0);
        let out = integrate_var(&mut tape, &mut field, u0, a, &cfg).unwrap();
        assert_eq!(tape.value(out).data(), plain.as_slice());
    }

    #[test]
    fn gradient_through_unrolled_rk4_matches_fd() {
        // d/du0 of || integrate(field, u0) ||^2 via the tape vs central differences
        let mut params = ParamSet::new();
        params.insert("u0", Tensor::new(vec![1, 2], vec![0.8, -0.3]).unwrap()).unwrap();
        params.insert("w", Tensor::new(vec![2, 2], vec![-0.5, 0.2, 0.1, -0.9]).unwrap()).unwrap();
        let report = grad_check(
            |tape, vars| {
                let cfg = IntegratorConfig::rk4(0.5, 5);
                let mut field = |tape: &mut Tape, u: Var, _a: Var, _t: f64| tape.matmul(u, vars["w"]);
                let a = tape.constant(Tensor::new(vec![1, 0], vec![]).unwrap());
                let u = integrate_var(tape, &mut field, vars["u0"], a, &cfg)?;
                let sq = tape.square(u)?;
                tape.sum(sq)
            },
            &params,
            1e-4,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn flow_composition_on_random_linear_fields() {
        // integrate tau1 then tau2 vs tau1+tau2 in one call, both against a
        // fine-step reference; composition must agree within 10x the
        // per-call error
        use rand::Rng;
        let mut rng = crate::rng::rng_from(31);
        for _ in 0..25 {
            let a_mat: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u0: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let field = |u: &[f64], _a: &[f64], _t: f64| {
                vec![
                    a_mat[0] * u[0] + a_mat[1] * u[1],
                    a_mat[2] * u[0] + a_mat[3] * u[1],
                ]
            };
            let (tau1, tau2) = (rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4));
            let mid = integrate_fn(field, &u0, &[], &IntegratorConfig::rk4(tau1, 19)).unwrap();
            let composed = integrate_fn(field, &mid, &[], &IntegratorConfig::rk4(tau2, 23)).unwrap();
            let direct = integrate_fn(field, &u0, &[], &IntegratorConfig::rk4(tau1 + tau2, 42)).unwrap();
            let reference =
                integrate_fn(field, &u0, &[], &IntegratorConfig::rk4(tau1 + tau2, 4000)).unwrap();
            let err_direct: f64 = direct
                .iter()
                .zip(&reference)
                .map(|(x, r)| (x - r) * (x - r))
                .sum::<f64>()
                .sqrt();
            let diff: f64 = composed
                .iter()
                .zip(&direct)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            assert!(
                diff <= 10.0 * (err_direct + 1e-13),
                "composition diff {diff} vs per-call error {err_direct}"
            );
        }
    }
}
