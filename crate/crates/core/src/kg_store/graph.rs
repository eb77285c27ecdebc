use std::collections::{BTreeMap, BTreeSet};

use super::term::{Iri, Object, Triple};

type Index<A, B, C> = BTreeMap<A, BTreeMap<B, BTreeSet<C>>>;

/// A set of triples with subject-, predicate- and object-rooted indexes.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    spo: Index<Iri, Iri, Object>,
    pos: Index<Iri, Object, Iri>,
    osp: Index<Object, Iri, Iri>,
    len: usize,
}

fn index_insert<A: Ord, B: Ord, C: Ord>(idx: &mut Index<A, B, C>, a: A, b: B, c: C) -> bool {
    idx.entry(a).or_default().entry(b).or_default().insert(c)
}

fn index_remove<A: Ord, B: Ord, C: Ord>(idx: &mut Index<A, B, C>, a: &A, b: &B, c: &C) -> bool {
    let Some(inner) = idx.get_mut(a) else { return false };
    let Some(leaf) = inner.get_mut(b) else { return false };
    let removed = leaf.remove(c);
    if leaf.is_empty() {
        inner.remove(b);
        if inner.is_empty() {
            idx.remove(a);
        }
    }
    removed
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.spo
            .get(&t.subject)
            .and_then(|m| m.get(&t.predicate))
            .is_some_and(|s| s.contains(&t.object))
    }

    pub fn insert(&mut self, t: Triple) -> bool {
        if !index_insert(&mut self.spo, t.subject.clone(), t.predicate.clone(), t.object.clone()) {
            return false;
        }
        index_insert(&mut self.pos, t.predicate.clone(), t.object.clone(), t.subject.clone());
        index_insert(&mut self.osp, t.object, t.subject, t.predicate);
        self.len += 1;
        true
    }

    pub fn remove(&mut self, t: &Triple) -> bool {
        if !index_remove(&mut self.spo, &t.subject, &t.predicate, &t.object) {
            return false;
        }
        index_remove(&mut self.pos, &t.predicate, &t.object, &t.subject);
        index_remove(&mut self.osp, &t.object, &t.subject, &t.predicate);
        self.len -= 1;
        true
    }

    /// All triples in (subject, predicate, object) order.
    pub fn iter(&self) -> impl Iterator<Item = Triple> + '_ {
        self.spo.iter().flat_map(|(s, m)| {
            m.iter().flat_map(move |(p, os)| {
                os.iter().map(move |o| Triple::new(s.clone(), p.clone(), o.clone()))
            })
        })
    }

    /// Triples matching the given fixed positions; `None` is a wildcard.
    pub fn matching<'a>(
        &'a self,
        s: Option<&'a Iri>,
        p: Option<&'a Iri>,
        o: Option<&'a Object>,
    ) -> Box<dyn Iterator<Item = Triple> + 'a> {
        match (s, p, o) {
            (Some(s), _, _) => {
                let Some(by_p) = self.spo.get(s) else { return Box::new(std::iter::empty()) };
                let preds: Box<dyn Iterator<Item = (&Iri, &BTreeSet<Object>)>> = match p {
                    Some(p) => Box::new(by_p.get_key_value(p).into_iter()),
                    None => Box::new(by_p.iter()),
                };
                Box::new(preds.flat_map(move |(p, os)| {
                    let objs: Box<dyn Iterator<Item = &Object>> = match o {
                        Some(o) => Box::new(os.get(o).into_iter()),
                        None => Box::new(os.iter()),
                    };
                    objs.map(move |o| Triple::new(s.clone(), p.clone(), o.clone()))
                }))
            }
            (None, Some(p), _) => {
                let Some(by_o) = self.pos.get(p) else { return Box::new(std::iter::empty()) };
                let objs: Box<dyn Iterator<Item = (&Object, &BTreeSet<Iri>)>> = match o {
                    Some(o) => Box::new(by_o.get_key_value(o).into_iter()),
                    None => Box::new(by_o.iter()),
                };
                Box::new(objs.flat_map(move |(o, ss)| {
                    ss.iter().map(move |s| Triple::new(s.clone(), p.clone(), o.clone()))
                }))
            }
            (None, None, Some(o)) => {
                let Some(by_s) = self.osp.get(o) else { return Box::new(std::iter::empty()) };
                Box::new(by_s.iter().flat_map(move |(s, ps)| {
                    ps.iter().map(move |p| Triple::new(s.clone(), p.clone(), o.clone()))
                }))
            }
            (None, None, None) => Box::new(self.iter()),
        }
    }

    /// Objects of `(s, p, ?)`, in order.
    pub fn objects<'a>(&'a self, s: &Iri, p: &Iri) -> impl Iterator<Item = &'a Object> + 'a {
        self.spo.get(s).and_then(|m| m.get(p)).into_iter().flatten()
    }

    pub fn object(&self, s: &Iri, p: &Iri) -> Option<&Object> {
        self.objects(s, p).next()
    }

    /// Subjects of `(?, p, o)`, in order.
    pub fn subjects<'a>(&'a self, p: &Iri, o: &Object) -> impl Iterator<Item = &'a Iri> + 'a {
        self.pos.get(p).and_then(|m| m.get(o)).into_iter().flatten()
    }

    /// Distinct subjects carrying predicate `p`, in order.
    pub fn subjects_with(&self, p: &Iri) -> BTreeSet<Iri> {
        self.pos
            .get(p)
            .into_iter()
            .flat_map(|m| m.values().flatten().cloned())
            .collect()
    }
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.spo == other.spo
    }
}

impl Eq for Graph {}

impl FromIterator<Triple> for Graph {
    fn from_iter<T: IntoIterator<Item = Triple>>(iter: T) -> Self {
        let mut g = Graph::new();
        for t in iter {
            g.insert(t);
        }
        g
    }
}
