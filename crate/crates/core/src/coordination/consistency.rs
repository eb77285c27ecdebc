//! World-consistency check over the data graph: no two entities that occupy
//! physical space may report the same position.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kg_store::{Graph, Iri, Object};
use crate::rami::Realm;
use crate::vocab;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyRule {
    PhysicalColocation,
    PhysicalDigitalColocation,
}

impl ConsistencyRule {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PhysicalColocation => "physical_colocation",
            Self::PhysicalDigitalColocation => "physical_digital_colocation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConsistencyViolation {
    pub position: String,
    /// Ordered so that `entities.0 < entities.1`.
    pub entities: (Iri, Iri),
    pub rule: ConsistencyRule,
}

impl fmt::Display for ConsistencyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{}", self.rule.as_str(), self.position, self.entities.0, self.entities.1)
    }
}

/// Pair rule for two realms; digital twins may overlap each other freely.
pub fn colocation_rule(a: Realm, b: Realm) -> Option<ConsistencyRule> {
    match (a, b) {
        (Realm::Physical, Realm::Physical) => Some(ConsistencyRule::PhysicalColocation),
        (Realm::Digital, Realm::Digital) => None,
        _ => Some(ConsistencyRule::PhysicalDigitalColocation),
    }
}

/// Violations sorted by (position, entities, rule). Entities are the subjects
/// carrying both a realm and a position.
pub fn check_world_consistency(data: &Graph) -> Vec<ConsistencyViolation> {
    let mut by_position: BTreeMap<String, Vec<(Iri, Realm)>> = BTreeMap::new();
    for entity in data.subjects_with(&vocab::has_realm()) {
        let Some(realm) = data.object(&entity, &vocab::has_realm()).and_then(Object::as_iri).and_then(Realm::from_iri) else {
            continue;
        };
        for pos in data.objects(&entity, &vocab::at_position()) {
            by_position.entry(pos.text().to_string()).or_default().push((entity.clone(), realm));
        }
    }
    let mut out = Vec::new();
    for (position, group) in by_position {
        for (i, (a, ra)) in group.iter().enumerate() {
            for (b, rb) in &group[i + 1..] {
                if let Some(rule) = colocation_rule(*ra, *rb) {
                    let entities = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                    out.push(ConsistencyViolation { position: position.clone(), entities, rule });
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}
