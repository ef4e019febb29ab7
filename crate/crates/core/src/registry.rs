//! Name → constructor tables for interchangeable components.
//!
//! Each component family (question encoders, attention mechanisms, fusion
//! operators) exposes a `registry()` holding its built-in variants. The
//! model builder resolves config strings through these tables, so adding a
//! variant means registering one more constructor.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct Registry<C> {
    family: &'static str,
    entries: BTreeMap<&'static str, C>,
}

impl<C: Clone> Registry<C> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, ctor: C) -> &mut Self {
        self.entries.insert(name, ctor);
        self
    }

    pub fn with(mut self, name: &'static str, ctor: C) -> Self {
        self.register(name, ctor);
        self
    }

    pub fn get(&self, name: &str) -> Result<C> {
        self.entries.get(name.trim()).cloned().ok_or_else(|| {
            Error::Config(format!(
                "unknown {} '{}' (available: {})",
                self.family,
                name,
                self.names().join(", ")
            ))
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name.trim())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}
