//! Name-keyed registry of trait-object strategies. Insertion order is kept so
//! registries that define column layouts stay stable.

use std::fmt;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<(&'static str, Box<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self { kind, entries: Vec::new() }
    }

    /// Adds a strategy. Panics on a duplicate name; registries are built
    /// from static tables so a duplicate is a programming error.
    pub fn register(&mut self, name: &'static str, strategy: Box<T>) -> &mut Self {
        assert!(
            self.get(name).is_none(),
            "{} {name:?} registered twice",
            self.kind
        );
        self.entries.push((name, strategy));
        self
    }

    pub fn get(&self, name: &str) -> Option<&T> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, s)| s.as_ref())
    }

    pub fn lookup(&self, name: &str) -> Result<&T, UnknownStrategy> {
        self.get(name).ok_or_else(|| UnknownStrategy {
            kind: self.kind,
            name: name.to_string(),
            known: self.names().map(str::to_string).collect(),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|(n, _)| *n)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &T)> + '_ {
        self.entries.iter().map(|(n, s)| (*n, s.as_ref()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownStrategy {
    pub kind: &'static str,
    pub name: String,
    pub known: Vec<String>,
}

impl fmt::Display for UnknownStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown {} {:?} (available: {})",
            self.kind,
            self.name,
            self.known.join(", ")
        )
    }
}

impl std::error::Error for UnknownStrategy {}
