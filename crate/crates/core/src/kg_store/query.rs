//! Basic graph pattern evaluation: a conjunction of triple patterns joined on
//! shared variable names.

use std::collections::{BTreeMap, BTreeSet};

use super::graph::Graph;
use super::term::{Iri, Object, Term, Triple};
use super::KgError;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl Pattern {
    pub fn new(subject: impl Into<Term>, predicate: impl Into<Term>, object: impl Into<Term>) -> Self {
        Self { subject: subject.into(), predicate: predicate.into(), object: object.into() }
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        [&self.subject, &self.predicate, &self.object]
            .into_iter()
            .filter_map(|t| match t {
                Term::Variable(v) => Some(v.as_str()),
                _ => None,
            })
    }
}

/// Variable name → ground term.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Solution(pub BTreeMap<String, Object>);

impl Solution {
    pub fn get(&self, var: &str) -> Option<&Object> {
        self.0.get(var)
    }

    pub fn iri(&self, var: &str) -> Option<&Iri> {
        self.get(var).and_then(Object::as_iri)
    }
}

/// A position after substituting current bindings.
enum Slot<'a> {
    Fixed(Object),
    Free(&'a str),
}

fn resolve<'a>(term: &'a Term, sol: &Solution) -> Slot<'a> {
    match term {
        Term::Iri(i) => Slot::Fixed(Object::Iri(i.clone())),
        Term::Literal(l) => Slot::Fixed(Object::Literal(l.clone())),
        Term::Variable(v) => match sol.get(v) {
            Some(bound) => Slot::Fixed(bound.clone()),
            None => Slot::Free(v),
        },
    }
}

fn bind(sol: &mut Solution, slot: &Slot<'_>, value: &Object) -> bool {
    match slot {
        Slot::Fixed(_) => true,
        Slot::Free(v) => match sol.0.get(*v) {
            // same variable twice in one pattern
            Some(existing) => existing == value,
            None => {
                sol.0.insert((*v).to_string(), value.clone());
                true
            }
        },
    }
}

fn extend(graph: &Graph, pattern: &Pattern, sol: &Solution, out: &mut Vec<Solution>) {
    let s = resolve(&pattern.subject, sol);
    let p = resolve(&pattern.predicate, sol);
    let o = resolve(&pattern.object, sol);

    // Literals bound into subject or predicate position can never match.
    let s_fixed = match &s {
        Slot::Fixed(Object::Iri(i)) => Some(i),
        Slot::Fixed(Object::Literal(_)) => return,
        Slot::Free(_) => None,
    };
    let p_fixed = match &p {
        Slot::Fixed(Object::Iri(i)) => Some(i),
        Slot::Fixed(Object::Literal(_)) => return,
        Slot::Free(_) => None,
    };
    let o_fixed = match &o {
        Slot::Fixed(obj) => Some(obj),
        Slot::Free(_) => None,
    };

    for Triple { subject, predicate, object } in graph.matching(s_fixed, p_fixed, o_fixed) {
        let mut next = sol.clone();
        if bind(&mut next, &s, &Object::Iri(subject))
            && bind(&mut next, &p, &Object::Iri(predicate))
            && bind(&mut next, &o, &object)
        {
            out.push(next);
        }
    }
}

fn bound_positions(pattern: &Pattern, bound: &BTreeSet<&str>) -> usize {
    [&pattern.subject, &pattern.predicate, &pattern.object]
        .into_iter()
        .filter(|t| match t {
            Term::Variable(v) => bound.contains(v.as_str()),
            _ => true,
        })
        .count()
}

/// Evaluate a basic graph pattern. Result is deduplicated and sorted.
pub fn evaluate(graph: &Graph, patterns: &[Pattern]) -> Result<Vec<Solution>, KgError> {
    if patterns.is_empty() {
        return Err(KgError::EmptyQuery);
    }

    // Greedy join order: most constrained pattern first, ties by position in the query.
    let mut remaining: Vec<&Pattern> = patterns.iter().collect();
    let mut bound: BTreeSet<&str> = BTreeSet::new();
    let mut solutions = vec![Solution::default()];
    while !remaining.is_empty() {
        let (pick, _) = remaining
            .iter()
            .enumerate()
            .max_by_key(|(i, p)| (bound_positions(p, &bound), std::cmp::Reverse(*i)))
            .expect("non-empty");
        let pattern = remaining.remove(pick);
        let mut next = Vec::new();
        for sol in &solutions {
            extend(graph, pattern, sol, &mut next);
        }
        solutions = next;
        if solutions.is_empty() {
            break;
        }
        bound.extend(pattern.variables());
    }

    let unique: BTreeSet<Solution> = solutions.into_iter().collect();
    Ok(unique.into_iter().collect())
}
