//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use kgmas::acl::{AclMessage, Performative};
use kgmas::kg_store::{Graph, Iri, Literal, Object, Pattern, Solution, Term, Triple};
use kgmas::rami::Realm;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

pub const SETUP: &str = include_str!("../../../../fixtures/fig3_setup.ttl");
pub const SETUP_PLUS_ONE: &str = include_str!("../../../../fixtures/fig3_setup_plus_one.ttl");
pub const WORLD: &str = include_str!("../../../../fixtures/warehouse_world.json");

pub fn ex(local: &str) -> Iri {
    Iri::new(format!("http://example.org/g/{local}")).unwrap()
}

fn random_lexical(rng: &mut StdRng) -> String {
    const PIECES: [&str; 10] = ["a", "b", "P1", " ", "\"", "\\", "\n", "\t", "é", "#;.,"];
    (0..rng.gen_range(0..5)).map(|_| *PIECES.choose(rng).unwrap()).collect()
}

pub fn random_object(rng: &mut StdRng, pool: usize) -> Object {
    match rng.gen_range(0..4) {
        0 | 1 => Object::Iri(ex(&format!("n{}", rng.gen_range(0..pool)))),
        2 => Object::Literal(Literal::plain(random_lexical(rng))),
        _ => Object::Literal(Literal::typed(rng.gen_range(-5..50).to_string(), Iri::new("http://www.w3.org/2001/XMLSchema#integer").unwrap())),
    }
}

/// Up to `max` triples over small term pools, so joins find matches.
pub fn random_triples(rng: &mut StdRng, max: usize) -> Vec<Triple> {
    let nodes = rng.gen_range(2..25);
    let preds = rng.gen_range(1..6);
    (0..rng.gen_range(0..=max))
        .map(|_| {
            Triple::new(
                ex(&format!("n{}", rng.gen_range(0..nodes))),
                ex(&format!("p{}", rng.gen_range(0..preds))),
                random_object(rng, nodes),
            )
        })
        .collect()
}

/// 1–4 patterns mixing variables with terms drawn from `triples` (plus the odd absent term).
pub fn random_bgp(rng: &mut StdRng, triples: &[Triple]) -> Vec<Pattern> {
    const VARS: [&str; 4] = ["a", "b", "c", "d"];
    let pick = |rng: &mut StdRng| triples.choose(rng).cloned();
    (0..rng.gen_range(1..=4))
        .map(|_| {
            let t = pick(rng);
            let term = |rng: &mut StdRng, pos: usize| -> Term {
                if rng.gen_bool(0.55) {
                    return Term::var(*VARS.choose(rng).unwrap());
                }
                match (&t, pos) {
                    (Some(t), 0) => t.subject.clone().into(),
                    (Some(t), 1) => t.predicate.clone().into(),
                    (Some(t), _) => t.object.clone().into(),
                    (None, _) => ex("absent").into(),
                }
            };
            Pattern::new(term(rng, 0), term(rng, 1), term(rng, 2))
        })
        .collect()
}

/// Nested-loop enumeration: every pattern scans every triple.
pub fn oracle_bgp(triples: &[Triple], patterns: &[Pattern]) -> BTreeSet<Solution> {
    oracle_bgp_bounded(triples, patterns, usize::MAX).expect("unbounded")
}

/// As [`oracle_bgp`], but gives up once more than `max_partial` partial
/// bindings are alive.
pub fn oracle_bgp_bounded(triples: &[Triple], patterns: &[Pattern], max_partial: usize) -> Option<BTreeSet<Solution>> {
    fn unify(term: &Term, value: Object, binding: &mut BTreeMap<String, Object>) -> bool {
        match term {
            Term::Variable(v) => match binding.get(v) {
                Some(bound) => *bound == value,
                None => {
                    binding.insert(v.clone(), value);
                    true
                }
            },
            Term::Iri(i) => value == Object::Iri(i.clone()),
            Term::Literal(l) => value == Object::Literal(l.clone()),
        }
    }
    let distinct: BTreeSet<&Triple> = triples.iter().collect();
    let mut partial = vec![BTreeMap::new()];
    for p in patterns {
        let mut next = Vec::new();
        for binding in &partial {
            for t in &distinct {
                let mut b = binding.clone();
                if unify(&p.subject, Object::Iri(t.subject.clone()), &mut b)
                    && unify(&p.predicate, Object::Iri(t.predicate.clone()), &mut b)
                    && unify(&p.object, t.object.clone(), &mut b)
                {
                    next.push(b);
                    if next.len() > max_partial {
                        return None;
                    }
                }
            }
        }
        partial = next;
    }
    Some(partial.into_iter().map(Solution).collect())
}

const SCHEMES: [&str; 3] = ["ros+ws", "mqtt", "rest+http"];

/// Turtle for `k` valid assets aggregated by one system, with randomized
/// names, realms, schemes and triple order.
pub fn random_setup(rng: &mut StdRng, k: usize) -> String {
    let mut lines = Vec::new();
    let mut members = Vec::new();
    for i in 0..k {
        let a = format!("kgmas:Asset{i}x{}", rng.gen_range(0..1000));
        members.push(a.clone());
        let realm = if rng.gen_bool(0.5) { "physical" } else { "digital" };
        let scheme = SCHEMES.choose(rng).unwrap();
        lines.push(format!("{a} kgmas:hasAssetKind kgmas:Kind{} .", rng.gen_range(0..3)));
        lines.push(format!("{a} kgmas:hasRealm kgmas:{realm} ."));
        lines.push(format!("{a} kgmas:hasProtocol \"{scheme}\" ."));
        lines.push(format!("{a} kgmas:hasEndpoint \"host{i}:{}\" .", 9000 + i));
        lines.push(format!("{a} kgmas:hasCapability kgmas:Cap{} .", rng.gen_range(0..3)));
        lines.push(format!("{a} kgmas:hasCoordinationRole kgmas:role{} .", rng.gen_range(0..3)));
        for (dir, name) in [("subscribesTo", "in"), ("publishesOn", "out")] {
            let ch = format!("{a}_{name}");
            lines.push(format!("{a} kgmas:{dir} {ch} ."));
            lines.push(format!("{ch} kgmas:hasTopic \"/{i}/{name}\" ."));
            lines.push(format!("{ch} kgmas:hasMessageKind kgmas:Msg{name} ."));
        }
    }
    if k > 0 {
        for m in &members {
            lines.push(format!("kgmas:System kgmas:aggregates {m} ."));
        }
    }
    lines.shuffle(rng);
    let mut out = String::from("@prefix kgmas: <http://kgmas.example/vocab#> .\n");
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
    out
}

pub fn random_json(rng: &mut StdRng, depth: u32) -> Value {
    let leaf = depth == 0 || rng.gen_bool(0.4);
    if leaf {
        return match rng.gen_range(0..5) {
            0 => Value::Null,
            1 => json!(rng.gen_bool(0.5)),
            2 => json!(rng.gen_range(-1_000_000i64..1_000_000)),
            3 => json!(rng.gen_range(-1e6..1e6f64)),
            _ => json!(random_lexical(rng)),
        };
    }
    if rng.gen_bool(0.5) {
        Value::Array((0..rng.gen_range(0..4)).map(|_| random_json(rng, depth - 1)).collect())
    } else {
        Value::Object((0..rng.gen_range(0..4)).map(|i| (format!("k{i}{}", random_lexical(rng)), random_json(rng, depth - 1))).collect())
    }
}

pub fn random_message(rng: &mut StdRng) -> AclMessage {
    let perf = *Performative::ALL.choose(rng).unwrap();
    let content = if rng.gen_bool(0.5) {
        random_json(rng, 3)
    } else {
        Value::Object((0..rng.gen_range(0..4)).map(|i| (format!("f{i}"), random_json(rng, 2))).collect())
    };
    let mut m = AclMessage::new(perf, format!("a{}", rng.gen_range(0..5)), format!("b{}", rng.gen_range(0..5)), format!("conv{}", rng.gen_range(0..9)), content);
    if rng.gen_bool(0.5) {
        m = m.reply_with(format!("k{}", rng.gen_range(0..100)));
    }
    if rng.gen_bool(0.3) {
        m = m.in_reply_to(format!("k{}", rng.gen_range(0..100)));
    }
    m
}

/// Entities with realms and station positions, for the consistency oracle.
pub fn random_placements(rng: &mut StdRng) -> Vec<(String, Realm, String)> {
    let n = rng.gen_range(2..=6);
    (0..n)
        .map(|i| {
            let realm = if rng.gen_bool(0.5) { Realm::Physical } else { Realm::Digital };
            (format!("E{i}"), realm, format!("P{}", rng.gen_range(0..3)))
        })
        .collect()
}

/// All unordered pairs sharing a position, classified by realm.
pub fn pairwise_oracle(entities: &[(String, Realm, String)]) -> BTreeSet<(String, String, String, &'static str)> {
    let mut out = BTreeSet::new();
    for i in 0..entities.len() {
        for j in 0..entities.len() {
            let (a, ra, pa) = &entities[i];
            let (b, rb, pb) = &entities[j];
            if i == j || pa != pb {
                continue;
            }
            let rule = match (ra, rb) {
                (Realm::Physical, Realm::Physical) => "physical_colocation",
                (Realm::Digital, Realm::Digital) => continue,
                _ => "physical_digital_colocation",
            };
            let (x, y) = if kgmas::vocab::kgmas(a) < kgmas::vocab::kgmas(b) { (a, b) } else { (b, a) };
            out.insert((pa.clone(), x.clone(), y.clone(), rule));
        }
    }
    out
}

pub fn placements_graph(entities: &[(String, Realm, String)]) -> Graph {
    let mut g = Graph::new();
    for (name, realm, pos) in entities {
        g.insert(Triple::new(kgmas::vocab::kgmas(name), kgmas::vocab::has_realm(), realm.iri()));
        g.insert(Triple::new(kgmas::vocab::kgmas(name), kgmas::vocab::at_position(), Literal::plain(pos.clone())));
    }
    g
}
