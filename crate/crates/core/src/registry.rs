//! Name-keyed registries for interchangeable strategies.
//!
//! Integrators, equilibrium solvers and servo plants are each selected by
//! name at runtime (CLI flags, config). Every strategy implements [`Named`]
//! and is stored behind an `Arc<dyn Trait>`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

pub trait Named {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
}

pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    default: Option<&'static str>,
    entries: BTreeMap<&'static str, Arc<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            default: None,
            entries: BTreeMap::new(),
        }
    }

    /// Registers a strategy, replacing any previous entry with the same name.
    /// The first registered entry becomes the default.
    pub fn register(&mut self, strategy: Arc<T>) -> &mut Self {
        let name = strategy.name();
        self.default.get_or_insert(name);
        self.entries.insert(name, strategy);
        self
    }

    pub fn set_default(&mut self, name: &str) -> Result<()> {
        let key = self.lookup(name)?.name();
        self.default = Some(key);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.lookup(name).cloned()
    }

    pub fn default_strategy(&self) -> Result<Arc<T>> {
        match self.default {
            Some(name) => self.get(name),
            None => Err(self.unknown("<default>")),
        }
    }

    /// Resolves `Some(name)` by name and `None` to the default.
    pub fn resolve(&self, name: Option<&str>) -> Result<Arc<T>> {
        match name {
            Some(n) => self.get(n),
            None => self.default_strategy(),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn describe(&self) -> Vec<(&'static str, &'static str)> {
        self.entries
            .values()
            .map(|s| (s.name(), s.description()))
            .collect()
    }

    fn lookup(&self, name: &str) -> Result<&Arc<T>> {
        self.entries.get(name).ok_or_else(|| self.unknown(name))
    }

    fn unknown(&self, name: &str) -> Error {
        Error::UnknownStrategy {
            kind: self.kind,
            name: name.to_string(),
            available: self.names().join(", "),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Named {
        fn greet(&self) -> String;
    }

    struct Hello;
    struct Hi;

    impl Named for Hello {
        fn name(&self) -> &'static str {
            "hello"
        }
        fn description(&self) -> &'static str {
            "formal"
        }
    }
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hello".into()
        }
    }
    impl Named for Hi {
        fn name(&self) -> &'static str {
            "hi"
        }
        fn description(&self) -> &'static str {
            "casual"
        }
    }
    impl Greeter for Hi {
        fn greet(&self) -> String {
            "hi".into()
        }
    }

    #[test]
    fn first_registered_is_default() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register(Arc::new(Hi)).register(Arc::new(Hello));
        assert_eq!(reg.default_strategy().unwrap().greet(), "hi");
        reg.set_default("hello").unwrap();
        assert_eq!(reg.resolve(None).unwrap().greet(), "hello");
        assert_eq!(reg.names(), vec!["hello", "hi"]);
    }

    #[test]
    fn unknown_name_lists_alternatives() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register(Arc::new(Hello));
        let err = reg.get("yo").err().unwrap().to_string();
        assert!(err.contains("unknown greeter `yo`"), "{err}");
        assert!(err.contains("hello"));
    }
}
