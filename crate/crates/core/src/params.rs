//! Named trainable tensors and their per-example binding into a [`Graph`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmarnetError};
use crate::tensor::{Gradients, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

/// Insertion-ordered parameter collection.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(SmarnetError::invalid(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            trainable,
        });
        Ok(ParamId(self.entries.len() - 1))
    }

    /// Returns the existing parameter called `name` after checking its shape,
    /// or inserts the tensor produced by `init`.
    pub fn ensure(
        &mut self,
        name: &str,
        shape: &[usize],
        trainable: bool,
        init: impl FnOnce() -> Tensor,
    ) -> Result<ParamId> {
        match self.index.get(name) {
            Some(&i) => {
                let have = self.entries[i].value.shape();
                if have != shape {
                    return Err(SmarnetError::Checkpoint(format!(
                        "parameter `{name}` has shape {have:?}, architecture expects {shape:?}"
                    )));
                }
                Ok(ParamId(i))
            }
            None => {
                let t = init();
                debug_assert_eq!(t.shape(), shape);
                self.insert(name, t, trainable)
            }
        }
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn from_entries(entries: Vec<ParamEntry>) -> Result<Self> {
        let mut s = ParamStore::new();
        for e in entries {
            s.insert(&e.name, e.value, e.trainable)?;
        }
        Ok(s)
    }

    /// Sum of squares over trainable parameters.
    pub fn l2(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.sum_squares())
            .sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.len()).sum()
    }

    /// Creates one graph leaf per parameter. Gradients are tracked for
    /// trainable parameters only when `track` is set.
    pub fn bind(&self, g: &mut Graph, track: bool) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|e| g.leaf(e.value.clone(), track && e.trainable))
            .collect();
        Bound { vars }
    }
}

/// Graph leaves for every parameter of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Substitutes another node for a parameter, e.g. for gradient checks.
    pub fn set(&mut self, id: ParamId, v: Var) {
        self.vars[id.0] = v;
    }
}

impl std::ops::Index<ParamId> for Bound {
    type Output = Var;
    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

/// Dense gradient accumulator shaped like a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer {
    pub grads: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn zeros_like(store: &ParamStore) -> Self {
        GradBuffer {
            grads: store.entries().iter().map(|e| vec![0.0; e.value.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, bound: &Bound, grads: &Gradients) {
        for (buf, v) in self.grads.iter_mut().zip(&bound.vars) {
            if let Some(d) = grads.get(*v) {
                for (a, b) in buf.iter_mut().zip(d) {
                    *a += b;
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn clear(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }
}
