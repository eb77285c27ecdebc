//! Fixed vocabulary IRIs, all in the `kgmas:` namespace.

use crate::kg_store::turtle::{KGMAS_NS, XSD_NS};
use crate::kg_store::{Iri, Literal};

/// `kgmas:<local>`. Panics on an invalid local name, so only use with trusted text.
pub fn kgmas(local: &str) -> Iri {
    Iri::new(format!("{KGMAS_NS}{local}")).expect("valid vocabulary IRI")
}

pub fn integer(value: impl std::fmt::Display) -> Literal {
    Literal::typed(value.to_string(), Iri::new(format!("{XSD_NS}integer")).expect("xsd IRI"))
}

macro_rules! terms {
    ($($name:ident => $local:literal),* $(,)?) => {
        $(
            pub fn $name() -> Iri {
                kgmas($local)
            }
        )*
    };
}

// asset / communication / information / functional / system layers
terms! {
    has_asset_kind => "hasAssetKind",
    has_realm => "hasRealm",
    physical => "physical",
    digital => "digital",
    has_protocol => "hasProtocol",
    has_endpoint => "hasEndpoint",
    publishes_on => "publishesOn",
    subscribes_to => "subscribesTo",
    has_topic => "hasTopic",
    has_message_kind => "hasMessageKind",
    has_capability => "hasCapability",
    aggregates => "aggregates",
    has_coordination_role => "hasCoordinationRole",
}

// coordination protocol
terms! {
    protocol_class => "Protocol",
    for_task => "forTask",
    has_step => "hasStep",
    step_index => "stepIndex",
    step_role => "stepRole",
    action_kind => "actionKind",
    target_role => "targetRole",
    content_template => "contentTemplate",
    requires_capability => "requiresCapability",
    binds_role => "bindsRole",
}

// data graph
terms! {
    has_status => "hasStatus",
    at_position => "atPosition",
    held_by => "heldBy",
    joint_state => "jointState",
    gripper_state => "gripperState",
    task_class => "Task",
    event_class => "Event",
    of_protocol => "ofProtocol",
    task_name => "taskName",
    task_status => "taskStatus",
    current_step => "currentStep",
    has_param => "hasParam",
    of_task => "ofTask",
    at_step => "atStep",
    event_name => "eventName",
    at_tick => "atTick",
    sequence => "sequence",
}

pub fn setup_graph() -> Iri {
    Iri::new("http://kgmas.example/graph/setup").expect("graph IRI")
}

pub fn data_graph() -> Iri {
    Iri::new("http://kgmas.example/graph/data").expect("graph IRI")
}

pub fn rdf_type() -> Iri {
    Iri::new("http://www.w3.org/1999/02/22-rdf-syntax-ns#type").expect("rdf IRI")
}
