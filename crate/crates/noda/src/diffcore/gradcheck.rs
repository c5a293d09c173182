//! Central-difference verification of reverse-mode gradients.

use std::collections::BTreeMap;

use crate::error::{NodaError, Result};

use super::params::ParamSet;
use super::tape::{Tape, Var};

pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub pass: bool,
    /// Parameter name and flat entry index of the worst disagreement.
    pub worst: Option<(String, usize)>,
}

/// Compares `backward()` output against central finite differences for
/// every parameter entry. The relative error denominator is
/// `max(|g_ad|, |g_fd|, 1e-8)` so zero gradients compare cleanly.
pub fn grad_check<F>(f: F, params: &ParamSet, fd_step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &BTreeMap<String, Var>) -> Result<Var>,
{
    if fd_step <= 0.0 {
        return Err(NodaError::Contract("fd_step must be positive".into()));
    }

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = p.register_frozen(&mut tape);
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).item()?;
        if !v.is_finite() {
            return Err(NodaError::Domain("non-finite function value".into()));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars = params.register(&mut tape)?;
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).item()?.is_finite() {
        return Err(NodaError::Domain("non-finite function value".into()));
    }
    let ad = tape.backward(out)?;

    let mut max_rel_err = 0.0f64;
    let mut worst = None;
    for (name, t) in params.iter() {
        let g_ad = &ad[name];
        for i in 0..t.len() {
            let mut plus = params.clone();
            plus.get_mut(name).unwrap().data_mut()[i] += fd_step;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap().data_mut()[i] -= fd_step;
            let g_fd = (eval(&plus)? - eval(&minus)?) / (2.0 * fd_step);
            let ga = g_ad.data()[i];
            let rel = (ga - g_fd).abs() / ga.abs().max(g_fd.abs()).max(1e-8);
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = Some((name.clone(), i));
            }
        }
    }

    Ok(GradCheckReport { max_rel_err, pass: max_rel_err <= tol, worst })
}
