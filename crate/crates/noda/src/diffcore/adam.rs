//! Adam optimizer with bias correction.

use std::collections::BTreeMap;

use crate::error::{NodaError, Result};

use super::tape::Gradients;
use super::params::ParamSet;

/// Per-parameter moment estimates plus hyperparameters. The set of
/// parameter names is fixed at construction; `step` updates exactly that
/// set and nothing else.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, t) in params.iter() {
            m.insert(name.clone(), vec![0.0; t.len()]);
            v.insert(name.clone(), vec![0.0; t.len()]);
        }
        AdamState { m, v, step_count: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Restricts the optimizer to names with the given prefix (used when an
    /// update must leave other networks in the same ParamSet untouched).
    pub fn for_prefix(params: &ParamSet, prefix: &str, lr: f64) -> Self {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, t) in params.with_prefix(prefix) {
            m.insert(name.clone(), vec![0.0; t.len()]);
            v.insert(name.clone(), vec![0.0; t.len()]);
        }
        AdamState { m, v, step_count: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One Adam update over the optimizer's parameter set.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, m) in self.m.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| NodaError::Contract(format!("missing gradient for `{name}`")))?;
            let v = self.v.get_mut(name).expect("m and v share keys");
            let p = params
                .get_mut(name)
                .ok_or_else(|| NodaError::Contract(format!("missing parameter `{name}`")))?;
            if g.len() != p.len() {
                return Err(NodaError::Dim(format!(
                    "gradient for `{name}` has {} entries, parameter has {}",
                    g.len(),
                    p.len()
                )));
            }
            let gd = g.data();
            for ((pi, mi), (vi, &gi)) in p
                .data_mut()
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut().zip(gd))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::tensor::Tensor;

    fn single_param(x: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(x)).unwrap();
        p
    }

    fn grad_of(x: f64) -> Gradients {
        let mut g = Gradients::new();
        g.insert("x".into(), Tensor::scalar(x));
        g
    }

    #[test]
    fn zero_gradient_leaves_everything_unchanged() {
        let mut p = single_param(1.5);
        let mut s = AdamState::new(&p, 0.1);
        s.step(&mut p, &grad_of(0.0)).unwrap();
        assert_eq!(p.get("x").unwrap().data(), &[1.5]);
        assert_eq!(s.m["x"], vec![0.0]);
        assert_eq!(s.v["x"], vec![0.0]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_is_signed_lr() {
        // bias-corrected first step: m_hat = g, v_hat = g^2, so the update
        // is -lr * g / (|g| + eps) which is approximately -lr * sign(g)
        let mut p = single_param(0.0);
        let mut s = AdamState::new(&p, 0.01);
        s.step(&mut p, &grad_of(2.5)).unwrap();
        let x = p.get("x").unwrap().data()[0];
        assert!((x + 0.01).abs() < 1e-8, "x = {x}");

        let mut p = single_param(0.0);
        let mut s = AdamState::new(&p, 0.01);
        s.step(&mut p, &grad_of(-0.3)).unwrap();
        let x = p.get("x").unwrap().data()[0];
        assert!((x - 0.01).abs() < 1e-7, "x = {x}");
    }

    #[test]
    fn minimizes_quadratic() {
        // oracle: an independent scalar Adam loop for (x-3)^2 from x=0
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let (mut xo, mut mo, mut vo) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * (xo - 3.0);
            mo = b1 * mo + (1.0 - b1) * g;
            vo = b2 * vo + (1.0 - b2) * g * g;
            let mh = mo / (1.0 - b1.powi(t));
            let vh = vo / (1.0 - b2.powi(t));
            xo -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((xo - 3.0).abs() < 0.05, "oracle loop ended at {xo}");

        let mut p = single_param(0.0);
        let mut s = AdamState::new(&p, lr);
        for _ in 0..100 {
            let x = p.get("x").unwrap().data()[0];
            s.step(&mut p, &grad_of(2.0 * (x - 3.0))).unwrap();
        }
        let x = p.get("x").unwrap().data()[0];
        assert!((x - 3.0).abs() < 0.05, "x = {x}");
        assert_eq!(x, xo, "implementation must match the reference loop bit-for-bit");
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut p = single_param(0.0);
        let mut s = AdamState::new(&p, 0.1);
        let empty = Gradients::new();
        assert!(matches!(s.step(&mut p, &empty), Err(NodaError::Contract(_))));
    }
}
