//! Named parameter tensors.
//!
//! Networks keep every tensor (weights, biases, batch-norm affines and running
//! statistics) in one closed, name-sorted directory. The ordering is what the
//! checkpoint format serializes, and the closed-set property is what checkpoint
//! loading validates against the architecture.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T: Element = f32> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        let name = name.into();
        let prev = self.map.insert(name.clone(), tensor);
        assert!(prev.is_none(), "duplicate parameter name `{name}`");
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::State(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.map
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("missing parameter `{name}`")))
    }

    /// Accumulate `grad` into the named slot, inserting zeros on first touch.
    pub fn accumulate(&mut self, name: &str, grad: Tensor<T>) {
        match self.map.get_mut(name) {
            Some(t) => t.add_assign_tensor(&grad),
            None => {
                self.map.insert(name.to_string(), grad);
            }
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(|t| t.all_finite())
    }

    pub fn cast<U: Element>(&self) -> ParamSet<U> {
        ParamSet {
            map: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Move every entry whose name starts with `prefix` into a new set.
    pub fn subset(&self, prefix: &str) -> ParamSet<T> {
        ParamSet {
            map: self
                .map
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn merge(&mut self, other: ParamSet<T>) {
        for (k, v) in other.map {
            let prev = self.map.insert(k.clone(), v);
            assert!(prev.is_none(), "duplicate parameter name `{k}` in merge");
        }
    }

    /// Check the directory exactly matches `expected` (closed set).
    pub fn check_directory<'a>(&self, expected: impl Iterator<Item = &'a str>) -> Result<()> {
        let want: Vec<&str> = expected.collect();
        let have: Vec<&str> = self.names().collect();
        let mut sorted = want.clone();
        sorted.sort_unstable();
        if sorted != have {
            for name in &sorted {
                if !self.contains(name) {
                    return Err(Error::State(format!(
                        "parameter directory missing `{name}`"
                    )));
                }
            }
            for name in &have {
                if !sorted.contains(name) {
                    return Err(Error::State(format!("unexpected parameter `{name}`")));
                }
            }
        }
        Ok(())
    }
}

impl<T: Element> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> FromIterator<(String, Tensor<T>)> for ParamSet<T> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<T>)>>(iter: I) -> Self {
        ParamSet {
            map: iter.into_iter().collect(),
        }
    }
}
