//! Agent generation: one [`AgentSpec`] per asset in the setup graph, run by a
//! single generic runtime. Nothing here is specific to any asset.

mod runtime;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acl::AclError;
use crate::environments::EnvError;
use crate::kg_store::{Graph, Iri, Object};
use crate::rami::{self, AgentBlueprint, RamiError, ValidationReport};
use crate::transports::{TransportError, TransportRegistry};
use crate::vocab;

pub use runtime::{instantiate, shutdown, AgentContext, AgentHandle, Lifecycle};

/// Which protocol role an agent plays.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorRef {
    pub protocol_id: Iri,
    pub role: Iri,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub agent_id: String,
    pub blueprint: AgentBlueprint,
    pub behavior: Option<BehaviorRef>,
}

impl AgentSpec {
    pub fn to_json(&self) -> String {
        crate::acl::canonical_json(&serde_json::to_value(self).expect("spec serializes"))
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error)]
pub enum FactoryError {
    #[error("setup graph is invalid:\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Rami(#[from] RamiError),
    #[error("agent id \"{0}\" is not unique")]
    DuplicateAgentId(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Acl(#[from] AclError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Lowercased local name of the asset IRI.
pub fn agent_id_for(asset_id: &Iri) -> String {
    asset_id.local_name().to_lowercase()
}

/// Generate against the schemes of the built-in transport registry.
pub fn generate_agents(setup: &Graph) -> Result<Vec<AgentSpec>, FactoryError> {
    generate_agents_with(setup, &TransportRegistry::new().schemes())
}

pub fn generate_agents_with(setup: &Graph, schemes: &BTreeSet<String>) -> Result<Vec<AgentSpec>, FactoryError> {
    let report = rami::validate_setup(setup, schemes);
    if !report.ok() {
        return Err(FactoryError::Invalid(report));
    }
    let protocols = crate::coordination::list_protocols(setup);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for asset in rami::list_assets(setup) {
        let blueprint = rami::extract_blueprint(setup, &asset)?;
        let agent_id = agent_id_for(&asset);
        if !seen.insert(agent_id.clone()) {
            return Err(FactoryError::DuplicateAgentId(agent_id));
        }
        let role = Object::Iri(blueprint.coordination_role.clone());
        let behavior = protocols
            .iter()
            .find(|p| setup.objects(p, &vocab::binds_role()).any(|r| *r == role))
            .map(|p| BehaviorRef { protocol_id: p.clone(), role: blueprint.coordination_role.clone() });
        out.push(AgentSpec { agent_id, blueprint, behavior });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg_store::turtle;

    fn fig3() -> Graph {
        turtle::parse(include_str!("../../../../fixtures/fig3_setup.ttl")).unwrap().into_iter().collect()
    }

    #[test]
    fn fig3_yields_two_specs() {
        let specs = generate_agents(&fig3()).unwrap();
        let summary: Vec<_> = specs
            .iter()
            .map(|s| (s.agent_id.as_str(), s.blueprint.binding.protocol_scheme.as_str(), s.blueprint.coordination_role.local_name()))
            .collect();
        assert_eq!(summary, vec![("roboticarm", "ros+ws", "placer"), ("turtlebot", "ros+ws", "mover")]);
        assert!(specs.iter().all(|s| s.behavior.is_some()));
    }

    #[test]
    fn empty_setup_yields_nothing() {
        assert!(generate_agents(&Graph::new()).unwrap().is_empty());
    }

    #[test]
    fn spec_json_round_trip() {
        for spec in generate_agents(&fig3()).unwrap() {
            assert_eq!(AgentSpec::from_json(&spec.to_json()).unwrap(), spec);
        }
    }
}
