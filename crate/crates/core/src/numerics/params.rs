use std::collections::BTreeMap;

use crate::numerics::tensor::Tensor;
use crate::numerics::NumericsError;
use crate::scalar::Scalar;

/// One named parameter together with its gradient and Adam moments.
#[derive(Clone, Debug)]
pub struct ParamEntry<T> {
    pub value: Tensor<T>,
    pub trainable: bool,
    pub grad: Option<Tensor<T>>,
    pub(crate) first_moment: Option<Tensor<T>>,
    pub(crate) second_moment: Option<Tensor<T>>,
}

/// Named parameter collection. Iteration order is the lexicographic
/// order of names, which keeps every reduction over parameters
/// deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    entries: BTreeMap<String, ParamEntry<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Inserts (or replaces) a parameter, clearing any optimizer state.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) {
        self.entries.insert(
            name.into(),
            ParamEntry {
                value,
                trainable,
                grad: None,
                first_moment: None,
                second_moment: None,
            },
        );
    }

    pub fn remove(&mut self, name: &str) -> Option<ParamEntry<T>> {
        self.entries.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn entry(&self, name: &str) -> Result<&ParamEntry<T>, NumericsError> {
        self.entries
            .get(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, NumericsError> {
        self.entry(name).map(|e| &e.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>, NumericsError> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.trainable)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<(), NumericsError> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))?;
        e.trainable = trainable;
        Ok(())
    }

    /// Marks every parameter non-trainable.
    pub fn freeze_all(&mut self) {
        for e in self.entries.values_mut() {
            e.trainable = false;
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|(_, e)| e.trainable)
            .map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<T>)> {
        self.entries.iter().map(|(n, e)| (n.as_str(), e))
    }

    /// Total number of scalar values across all entries.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn set_grad(&mut self, name: &str, grad: Tensor<T>) -> Result<(), NumericsError> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))?;
        if grad.shape() != e.value.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "set_grad",
                left: e.value.shape().to_vec(),
                right: grad.shape().to_vec(),
            });
        }
        e.grad = Some(grad);
        Ok(())
    }

    /// Adds gradients onto any already stored.
    pub fn accumulate_grads(&mut self, grads: Vec<(String, Tensor<T>)>) -> Result<(), NumericsError> {
        for (name, g) in grads {
            let current = self.entry(&name)?.grad.clone();
            match current {
                Some(mut existing) => {
                    if existing.shape() != g.shape() {
                        return Err(NumericsError::ShapeMismatch {
                            op: "accumulate_grads",
                            left: existing.shape().to_vec(),
                            right: g.shape().to_vec(),
                        });
                    }
                    existing.add_assign(&g);
                    self.set_grad(&name, existing)?;
                }
                None => self.set_grad(&name, g)?,
            }
        }
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name).and_then(|e| e.grad.as_ref())
    }

    /// Gives every trainable entry without a gradient an all-zero one.
    /// Parameters a loss never touched then take a plain Adam step.
    pub fn fill_missing_grads(&mut self) {
        for e in self.entries.values_mut() {
            if e.trainable && e.grad.is_none() {
                e.grad = Some(Tensor::zeros(e.value.shape()));
            }
        }
    }

    pub fn clear_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad = None;
        }
    }

    pub(crate) fn entries_mut(&mut self) -> impl Iterator<Item = (&String, &mut ParamEntry<T>)> {
        self.entries.iter_mut()
    }

    /// Copies every entry of `other` in under `prefix`, with the given
    /// trainable flag.
    pub fn merge_prefixed(&mut self, prefix: &str, other: &ParamStore<T>, trainable: bool) {
        for (name, e) in &other.entries {
            self.insert(format!("{prefix}{name}"), e.value.clone(), trainable);
        }
    }

    /// Entries whose names start with `prefix`, with the prefix stripped.
    pub fn extract_prefixed(&self, prefix: &str) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, e) in &self.entries {
            if let Some(rest) = name.strip_prefix(prefix) {
                out.insert(rest, e.value.clone(), e.trainable);
            }
        }
        out
    }

    /// True when both stores hold the same names, flags and bitwise-equal values.
    pub fn values_equal(&self, other: &ParamStore<T>) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((na, a), (nb, b))| {
                na == nb && a.trainable == b.trainable && a.value == b.value
            })
    }
}
