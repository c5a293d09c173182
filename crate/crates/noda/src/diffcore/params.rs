//! Named parameter bundles.

use std::collections::BTreeMap;

use crate::error::{NodaError, Result};

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Map from parameter path (e.g. `encoder.l0.w`) to tensor. Iteration is
/// lexicographic, so serialization and optimizer sweeps are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(NodaError::Contract(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        self.entries.insert(name.to_string(), t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn set(&mut self, name: &str, t: Tensor) {
        self.entries.insert(name.to_string(), t);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar entries across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Entries whose name starts with `prefix`.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a String, &'a Tensor)> {
        self.entries.iter().filter(move |(k, _)| k.starts_with(prefix))
    }

    /// Registers every entry on a tape as a trainable leaf and returns the
    /// name-to-var mapping used by network forward passes.
    pub fn register(&self, tape: &mut Tape) -> Result<BTreeMap<String, Var>> {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.entries {
            vars.insert(name.clone(), tape.param(name, t.clone())?);
        }
        Ok(vars)
    }

    /// Registers every entry as a non-trainable constant (no gradients).
    pub fn register_frozen(&self, tape: &mut Tape) -> BTreeMap<String, Var> {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.entries {
            vars.insert(name.clone(), tape.constant(t.clone()));
        }
        vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_iteration() {
        let mut p = ParamSet::new();
        p.insert("b", Tensor::scalar(2.0)).unwrap();
        p.insert("a", Tensor::scalar(1.0)).unwrap();
        p.insert("a.b", Tensor::scalar(3.0)).unwrap();
        let names: Vec<_> = p.names().cloned().collect();
        assert_eq!(names, vec!["a", "a.b", "b"]);
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(0.0)).unwrap();
        assert!(p.insert("w", Tensor::scalar(1.0)).is_err());
    }
}
