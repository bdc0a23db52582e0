use indexmap::IndexMap;
use ssan_tensor::{Float, Graph, Tensor, Var};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Entry<T> {
    pub value: Tensor<T>,
    /// Learned by the optimizer; `false` for running statistics.
    pub trainable: bool,
}

/// Named model tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    entries: IndexMap<String, Entry<T>>,
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: IndexMap::new() }
    }

    pub fn insert_param(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.entries.insert(name.into(), Entry { value, trainable: true });
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.entries.insert(name.into(), Entry { value, trainable: false });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| Error::input(format!("missing model tensor {:?}", name)))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| Error::input(format!("missing model tensor {:?}", name)))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Entry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Entry<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries.values().filter(|e| e.trainable).map(|e| e.value.numel()).sum()
    }

    /// Sum of trainable scalars whose name starts with `prefix`.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|(k, e)| e.trainable && k.starts_with(prefix))
            .map(|(_, e)| e.value.numel())
            .sum()
    }

    /// Registers every trainable tensor as a differentiable leaf of `g`.
    pub fn bind(&self, g: &mut Graph<T>) -> Bindings {
        self.bind_as(g, true)
    }

    /// Registers trainable tensors as constants (no gradient tracking).
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Bindings {
        self.bind_as(g, false)
    }

    /// Like [`bind_frozen`](Self::bind_frozen) for names starting with `prefix`.
    pub fn bind_frozen_prefix(&self, g: &mut Graph<T>, prefix: &str) -> Bindings {
        self.bind_filtered(g, false, prefix)
    }

    fn bind_as(&self, g: &mut Graph<T>, tracked: bool) -> Bindings {
        self.bind_filtered(g, tracked, "")
    }

    fn bind_filtered(&self, g: &mut Graph<T>, tracked: bool, prefix: &str) -> Bindings {
        let vars = self
            .entries
            .iter()
            .filter(|(k, e)| e.trainable && k.starts_with(prefix))
            .map(|(k, e)| {
                let v = if tracked { g.param(e.value.clone()) } else { g.constant(e.value.clone()) };
                (k.clone(), v)
            })
            .collect();
        Bindings { vars }
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| (k.clone(), Entry { value: e.value.cast(), trainable: e.trainable }))
                .collect(),
        }
    }
}

/// Graph handles of the trainable tensors of a [`ParamStore`].
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    vars: IndexMap<String, Var>,
}

impl Bindings {
    /// Handles bound elsewhere, e.g. by a gradient checker.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, Var)>) -> Self {
        Self { vars: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::input(format!("model tensor {:?} is not bound", name)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
