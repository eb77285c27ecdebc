//! Embedded named-graph triple store.
//!
//! Each named graph is a set of ground triples. All mutations go through a single
//! write lock and bump one store-wide revision counter; reads either hold the
//! read lock for their whole duration or work on a cheap [`Snapshot`], so a reader
//! never sees half of an [`NamedGraphStore::atomic_update`].

mod graph;
mod query;
mod term;
pub mod turtle;

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use thiserror::Error;

pub use graph::Graph;
pub use query::{evaluate, Pattern, Solution};
pub use term::{Iri, Literal, Object, Term, Triple};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KgError {
    #[error("invalid term: {0}")]
    InvalidTerm(String),
    #[error("query must contain at least one pattern")]
    EmptyQuery,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
}

/// A graph frozen at one store revision.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub revision: u64,
    pub graph: Arc<Graph>,
}

impl std::ops::Deref for Snapshot {
    type Target = Graph;
    fn deref(&self) -> &Graph {
        &self.graph
    }
}

#[derive(Debug, Default)]
struct Inner {
    graphs: BTreeMap<Iri, Arc<Graph>>,
    revision: u64,
}

/// Shareable handle; clones refer to the same store.
#[derive(Clone, Debug, Default)]
pub struct NamedGraphStore {
    inner: Arc<RwLock<Inner>>,
}

impl NamedGraphStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn revision(&self) -> u64 {
        self.inner.read().expect("store lock poisoned").revision
    }

    pub fn graph_ids(&self) -> Vec<Iri> {
        self.inner.read().expect("store lock poisoned").graphs.keys().cloned().collect()
    }

    pub fn snapshot(&self, graph_id: &Iri) -> Snapshot {
        let inner = self.inner.read().expect("store lock poisoned");
        Snapshot {
            revision: inner.revision,
            graph: inner.graphs.get(graph_id).cloned().unwrap_or_default(),
        }
    }

    pub fn len(&self, graph_id: &Iri) -> usize {
        self.snapshot(graph_id).len()
    }

    pub fn contains(&self, graph_id: &Iri, t: &Triple) -> bool {
        self.snapshot(graph_id).contains(t)
    }

    /// Returns true iff the triple was absent. The revision moves only in that case.
    pub fn insert(&self, graph_id: &Iri, t: Triple) -> bool {
        let mut inner = self.inner.write().expect("store lock poisoned");
        if inner.graphs.get(graph_id).is_some_and(|g| g.contains(&t)) {
            return false;
        }
        Arc::make_mut(inner.graphs.entry(graph_id.clone()).or_default()).insert(t);
        inner.revision += 1;
        true
    }

    pub fn remove(&self, graph_id: &Iri, t: &Triple) -> bool {
        let mut inner = self.inner.write().expect("store lock poisoned");
        let Some(g) = inner.graphs.get_mut(graph_id) else { return false };
        if !g.contains(t) {
            return false;
        }
        Arc::make_mut(g).remove(t);
        inner.revision += 1;
        true
    }

    /// Unknown graphs yield no solutions.
    pub fn query(&self, graph_id: &Iri, patterns: &[Pattern]) -> Result<Vec<Solution>, KgError> {
        evaluate(&self.snapshot(graph_id), patterns)
    }

    /// Removals then insertions as one revision step. Both lists empty is a no-op.
    pub fn atomic_update(&self, graph_id: &Iri, removals: &[Triple], insertions: &[Triple]) -> u64 {
        self.atomic_update_with(graph_id, |_| (removals.to_vec(), insertions.to_vec()))
    }

    /// Like [`atomic_update`](Self::atomic_update) but computes the change set from the
    /// current graph content while holding the write lock.
    pub fn atomic_update_with<F>(&self, graph_id: &Iri, plan: F) -> u64
    where
        F: FnOnce(&Graph) -> (Vec<Triple>, Vec<Triple>),
    {
        let mut inner = self.inner.write().expect("store lock poisoned");
        let current = inner.graphs.get(graph_id).cloned().unwrap_or_default();
        let (removals, insertions) = plan(&current);
        if removals.is_empty() && insertions.is_empty() {
            return inner.revision;
        }
        let g = Arc::make_mut(inner.graphs.entry(graph_id.clone()).or_default());
        for t in &removals {
            g.remove(t);
        }
        for t in insertions {
            g.insert(t);
        }
        inner.revision += 1;
        inner.revision
    }

    /// Parse and insert a document. On a parse error nothing is inserted. Returns the
    /// number of distinct triples in the document.
    pub fn load_turtle(&self, graph_id: &Iri, text: &str) -> Result<usize, KgError> {
        let parsed: Graph = turtle::parse(text)?.into_iter().collect();
        let count = parsed.len();
        let new: Vec<Triple> = parsed.iter().collect();
        self.atomic_update_with(graph_id, |g| {
            (Vec::new(), new.into_iter().filter(|t| !g.contains(t)).collect())
        });
        Ok(count)
    }

    pub fn dump_turtle(&self, graph_id: &Iri) -> String {
        turtle::serialize(&self.snapshot(graph_id))
    }

    pub fn clear(&self, graph_id: &Iri) -> u64 {
        let mut inner = self.inner.write().expect("store lock poisoned");
        if inner.graphs.remove(graph_id).is_some_and(|g| !g.is_empty()) {
            inner.revision += 1;
        }
        inner.revision
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iri(s: &str) -> Iri {
        Iri::new(format!("http://kgmas.example/vocab#{s}")).unwrap()
    }

    #[test]
    fn insert_is_idempotent() {
        let store = NamedGraphStore::new();
        let g = iri("setup");
        let t = Triple::new(iri("Turtlebot"), iri("hasRealm"), iri("physical"));
        assert!(store.insert(&g, t.clone()));
        let rev = store.revision();
        assert!(!store.insert(&g, t));
        assert_eq!(store.revision(), rev);
        assert_eq!(store.len(&g), 1);
    }

    #[test]
    fn remove_then_query_is_empty() {
        let store = NamedGraphStore::new();
        let g = iri("g");
        let t = Triple::new(iri("a"), iri("p"), Literal::plain("x"));
        assert!(!store.remove(&g, &t));
        store.insert(&g, t.clone());
        assert!(store.remove(&g, &t));
        let q = [Pattern::new(iri("a"), iri("p"), Literal::plain("x"))];
        assert!(store.query(&g, &q).unwrap().is_empty());
    }

    #[test]
    fn unknown_graph_and_empty_query() {
        let store = NamedGraphStore::new();
        let q = [Pattern::new(Term::var("s"), Term::var("p"), Term::var("o"))];
        assert!(store.query(&iri("nothing"), &q).unwrap().is_empty());
        assert_eq!(store.query(&iri("nothing"), &[]), Err(KgError::EmptyQuery));
    }

    #[test]
    fn atomic_update_revisions() {
        let store = NamedGraphStore::new();
        let g = iri("data");
        let before = store.revision();
        assert_eq!(store.atomic_update(&g, &[], &[]), before);
        let old = Triple::new(iri("Turtlebot"), iri("atPosition"), Literal::plain("P1"));
        let new = Triple::new(iri("Turtlebot"), iri("atPosition"), Literal::plain("P2"));
        let r1 = store.atomic_update(&g, &[], &[old.clone()]);
        let r2 = store.atomic_update(&g, &[old.clone()], &[new.clone()]);
        assert_eq!(r2, r1 + 1);
        assert!(!store.contains(&g, &old));
        assert!(store.contains(&g, &new));
    }

    #[test]
    fn failed_load_changes_nothing() {
        let store = NamedGraphStore::new();
        let g = iri("g");
        let doc = "@prefix kgmas: <http://kgmas.example/vocab#> .\nkgmas:a kgmas:p kgmas:b .\nkgmas:a kgmas:p .\n";
        assert!(matches!(store.load_turtle(&g, doc), Err(KgError::Parse { line: 3, .. })));
        assert_eq!(store.len(&g), 0);
        assert_eq!(store.revision(), 0);
        assert_eq!(store.load_turtle(&g, "").unwrap(), 0);
    }

    #[test]
    fn snapshot_is_frozen() {
        let store = NamedGraphStore::new();
        let g = iri("g");
        store.insert(&g, Triple::new(iri("a"), iri("p"), iri("b")));
        let snap = store.snapshot(&g);
        store.insert(&g, Triple::new(iri("a"), iri("p"), iri("c")));
        assert_eq!(snap.len(), 1);
        assert_eq!(store.len(&g), 2);
    }
}
