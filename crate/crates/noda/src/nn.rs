//! Multilayer perceptrons evaluated through the diffcore tape.
//!
//! Networks are stored as named entries in a `ParamSet`
//! (`{prefix}.l{i}.w` / `{prefix}.l{i}.b`), so checkpointing, transfer and
//! optimizer bookkeeping all work on names rather than on structs.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{ParamSet, Tape, Tensor, Var};
use crate::error::Result;

/// Layer sizes from input to output, e.g. `[3, 32, 32, 2]`. Hidden layers
/// use tanh; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        MlpSpec { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_mlp(params: &mut ParamSet, prefix: &str, spec: &MlpSpec, rng: &mut ChaCha8Rng) -> Result<()> {
    for (i, w) in spec.sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        params.insert(&format!("{prefix}.l{i}.w"), Tensor::new(vec![fan_in, fan_out], data)?)?;
        params.insert(&format!("{prefix}.l{i}.b"), Tensor::zeros(&[fan_out]))?;
    }
    Ok(())
}

/// Forward pass for a `[batch, in] -> [batch, out]` network.
pub fn mlp_forward(
    tape: &mut Tape,
    vars: &BTreeMap<String, Var>,
    prefix: &str,
    spec: &MlpSpec,
    x: Var,
) -> Result<Var> {
    let mut h = x;
    for i in 0..spec.layer_count() {
        let w = vars[&format!("{prefix}.l{i}.w")];
        let b = vars[&format!("{prefix}.l{i}.b")];
        let hw = tape.matmul(h, w)?;
        h = tape.add(hw, b)?;
        if i + 1 < spec.layer_count() {
            h = tape.tanh(h)?;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn param_count_matches_init() {
        let spec = MlpSpec::new(vec![3, 32, 32, 2]);
        let mut p = ParamSet::new();
        init_mlp(&mut p, "net", &spec, &mut rng_from(0)).unwrap();
        assert_eq!(p.scalar_count(), spec.param_count());
        assert_eq!(spec.param_count(), 3 * 32 + 32 + 32 * 32 + 32 + 32 * 2 + 2);
    }

    #[test]
    fn forward_shape_and_determinism() {
        let spec = MlpSpec::new(vec![3, 8, 8, 2]);
        let mut p = ParamSet::new();
        init_mlp(&mut p, "net", &spec, &mut rng_from(1)).unwrap();

        let run = |p: &ParamSet| -> Vec<f64> {
            let mut tape = Tape::new();
            let vars = p.register_frozen(&mut tape);
            let x = tape.constant(Tensor::new(vec![4, 3], vec![0.1; 12]).unwrap());
            let y = mlp_forward(&mut tape, &vars, "net", &spec, x).unwrap();
            assert_eq!(tape.value(y).shape(), &[4, 2]);
            tape.value(y).data().to_vec()
        };
        assert_eq!(run(&p), run(&p));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let spec = MlpSpec::new(vec![4, 8, 1]);
        let mut a = ParamSet::new();
        let mut b = ParamSet::new();
        init_mlp(&mut a, "n", &spec, &mut rng_from(9)).unwrap();
        init_mlp(&mut b, "n", &spec, &mut rng_from(9)).unwrap();
        assert_eq!(a, b);
    }
}
