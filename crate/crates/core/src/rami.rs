//! Five-layer asset model: Asset, Communication, Information, Functional and
//! System. Validates setup graphs and joins the layers of one asset into an
//! [`AgentBlueprint`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg_store::{Graph, Iri, Object};
use crate::vocab;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Realm {
    Physical,
    Digital,
}

impl Realm {
    pub fn from_iri(iri: &Iri) -> Option<Self> {
        if *iri == vocab::physical() {
            Some(Realm::Physical)
        } else if *iri == vocab::digital() {
            Some(Realm::Digital)
        } else {
            None
        }
    }

    pub fn iri(self) -> Iri {
        match self {
            Realm::Physical => vocab::physical(),
            Realm::Digital => vocab::digital(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Realm::Physical => "physical",
            Realm::Digital => "digital",
        }
    }
}

impl fmt::Display for Realm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetDescription {
    pub asset_id: Iri,
    pub asset_kind: Iri,
    pub realm: Realm,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CommunicationBinding {
    pub protocol_scheme: String,
    pub endpoint: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Publishes,
    Subscribes,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub topic: String,
    pub direction: Direction,
    pub message_kind: Iri,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Capability(pub Iri);

impl Capability {
    pub fn name(&self) -> &str {
        self.0.local_name()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemAggregate {
    pub system_id: Iri,
    pub member_asset_ids: Vec<Iri>,
}

/// Everything needed to build one agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentBlueprint {
    pub asset_id: Iri,
    pub asset_kind: Iri,
    pub realm: Realm,
    pub binding: CommunicationBinding,
    pub channels: Vec<Channel>,
    pub capabilities: Vec<Capability>,
    pub coordination_role: Iri,
}

impl AgentBlueprint {
    pub fn channel(&self, direction: Direction) -> Option<&Channel> {
        self.channels.iter().find(|c| c.direction == direction)
    }

    pub fn has_capability(&self, cap: &Iri) -> bool {
        self.capabilities.iter().any(|c| c.0 == *cap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    AssetKind,
    Realm,
    Communication,
    UnknownScheme,
    Channel,
    DuplicateChannel,
    OrphanChannel,
    Capability,
    CoordinationRole,
    SystemMembership,
    UnknownMember,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::AssetKind => "asset_kind",
            Rule::Realm => "realm",
            Rule::Communication => "communication",
            Rule::UnknownScheme => "unknown_scheme",
            Rule::Channel => "channel",
            Rule::DuplicateChannel => "duplicate_channel",
            Rule::OrphanChannel => "orphan_channel",
            Rule::Capability => "capability",
            Rule::CoordinationRole => "coordination_role",
            Rule::SystemMembership => "system_membership",
            Rule::UnknownMember => "unknown_member",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub subject: Iri,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}", self.subject.local_name(), self.rule.as_str(), self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Asset,
    Communication,
    Information,
    Functional,
    System,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RamiError {
    #[error("unknown asset {0}")]
    UnknownAsset(Iri),
    #[error("asset {asset} has an incomplete {layer:?} layer: {detail}")]
    IncompleteLayer { asset: Iri, layer: Layer, detail: String },
}

/// Predicates whose subject is an asset.
fn asset_predicates() -> [Iri; 8] {
    [
        vocab::has_asset_kind(),
        vocab::has_realm(),
        vocab::has_protocol(),
        vocab::has_endpoint(),
        vocab::publishes_on(),
        vocab::subscribes_to(),
        vocab::has_capability(),
        vocab::has_coordination_role(),
    ]
}

/// Assets: every subject with an asset kind, sorted.
pub fn list_assets(graph: &Graph) -> Vec<Iri> {
    graph.subjects_with(&vocab::has_asset_kind()).into_iter().collect()
}

pub fn list_systems(graph: &Graph) -> Vec<SystemAggregate> {
    let aggregates = vocab::aggregates();
    graph
        .subjects_with(&aggregates)
        .into_iter()
        .map(|system_id| {
            let member_asset_ids = graph.objects(&system_id, &aggregates).filter_map(|o| o.as_iri().cloned()).collect();
            SystemAggregate { system_id, member_asset_ids }
        })
        .collect()
}

fn literal_text(o: &Object) -> Option<&str> {
    o.as_literal().map(|l| l.lexical.as_str())
}

struct Check<'g> {
    graph: &'g Graph,
    out: Vec<Violation>,
}

impl<'g> Check<'g> {
    fn push(&mut self, subject: &Iri, rule: Rule, message: impl Into<String>) {
        self.out.push(Violation { subject: subject.clone(), rule, message: message.into() });
    }

    /// Exactly one object for `(subject, predicate)`.
    fn single(&mut self, subject: &Iri, predicate: &Iri, rule: Rule) -> Option<&'g Object> {
        let graph = self.graph;
        let mut values = graph.objects(subject, predicate);
        match (values.next(), values.count()) {
            (Some(o), 0) => Some(o),
            (None, _) => {
                self.push(subject, rule, format!("missing {}", predicate.local_name()));
                None
            }
            (Some(_), extra) => {
                self.push(subject, rule, format!("{} values for {}, expected one", extra + 1, predicate.local_name()));
                None
            }
        }
    }
}

/// Check every layer invariant. Violations come back sorted.
pub fn validate_setup(graph: &Graph, known_schemes: &BTreeSet<String>) -> ValidationReport {
    let mut check = Check { graph, out: Vec::new() };
    let assets: BTreeSet<Iri> = list_assets(graph).into_iter().collect();

    let mut asset_like: BTreeSet<Iri> = BTreeSet::new();
    for p in asset_predicates() {
        asset_like.extend(graph.subjects_with(&p));
    }
    for subject in asset_like.difference(&assets) {
        check.push(subject, Rule::AssetKind, "asset properties without hasAssetKind");
    }

    let mut referenced_channels: BTreeSet<Iri> = BTreeSet::new();
    for asset in &assets {
        check.single(asset, &vocab::has_asset_kind(), Rule::AssetKind);

        if let Some(realm) = check.single(asset, &vocab::has_realm(), Rule::Realm) {
            if realm.as_iri().and_then(Realm::from_iri).is_none() {
                check.push(asset, Rule::Realm, format!("realm {realm} is neither physical nor digital"));
            }
        }

        if let Some(proto) = check.single(asset, &vocab::has_protocol(), Rule::Communication) {
            match literal_text(proto) {
                Some(s) if s.is_empty() => check.push(asset, Rule::Communication, "empty protocol scheme"),
                Some(s) if !known_schemes.contains(s) => {
                    check.push(asset, Rule::UnknownScheme, format!("unknown protocol scheme \"{s}\""))
                }
                Some(_) => {}
                None => check.push(asset, Rule::Communication, "protocol scheme must be a literal"),
            }
        }
        if let Some(ep) = check.single(asset, &vocab::has_endpoint(), Rule::Communication) {
            if literal_text(ep).is_none_or(str::is_empty) {
                check.push(asset, Rule::Communication, "endpoint must be a non-empty literal");
            }
        }

        let mut seen: BTreeSet<(String, Direction)> = BTreeSet::new();
        let mut channel_count = 0;
        for (pred, direction) in [(vocab::publishes_on(), Direction::Publishes), (vocab::subscribes_to(), Direction::Subscribes)] {
            for node in graph.objects(asset, &pred) {
                channel_count += 1;
                let Some(node) = node.as_iri() else {
                    check.push(asset, Rule::Channel, "channel must be an IRI node");
                    continue;
                };
                referenced_channels.insert(node.clone());
                if let Some(topic) = check.single(node, &vocab::has_topic(), Rule::Channel) {
                    match literal_text(topic) {
                        Some(t) if !t.is_empty() => {
                            if !seen.insert((t.to_string(), direction)) {
                                check.push(asset, Rule::DuplicateChannel, format!("topic {t} declared twice for {direction:?}"));
                            }
                        }
                        _ => check.push(node, Rule::Channel, "topic must be a non-empty literal"),
                    }
                }
                if let Some(kind) = check.single(node, &vocab::has_message_kind(), Rule::Channel) {
                    if kind.as_iri().is_none() {
                        check.push(node, Rule::Channel, "message kind must be an IRI");
                    }
                }
            }
        }
        if channel_count == 0 {
            check.push(asset, Rule::Channel, "no publishesOn or subscribesTo channel");
        }

        if graph.objects(asset, &vocab::has_capability()).next().is_none() {
            check.push(asset, Rule::Capability, "no capability");
        }
        check.single(asset, &vocab::has_coordination_role(), Rule::CoordinationRole);
    }

    let channel_nodes = graph.subjects_with(&vocab::has_topic());
    for orphan in channel_nodes.difference(&referenced_channels) {
        check.push(orphan, Rule::OrphanChannel, "channel not attached to any asset");
    }

    let mut membership: BTreeMap<Iri, Vec<Iri>> = BTreeMap::new();
    for system in list_systems(graph) {
        for member in &system.member_asset_ids {
            if !assets.contains(member) {
                check.push(&system.system_id, Rule::UnknownMember, format!("member {} is not an asset", member.local_name()));
            }
            membership.entry(member.clone()).or_default().push(system.system_id.clone());
        }
    }
    for asset in &assets {
        match membership.get(asset).map_or(0, Vec::len) {
            1 => {}
            0 => check.push(asset, Rule::SystemMembership, "not aggregated by any system"),
            n => check.push(asset, Rule::SystemMembership, format!("aggregated by {n} systems")),
        }
    }

    let mut violations = check.out;
    violations.sort();
    violations.dedup();
    ValidationReport { violations }
}

fn incomplete(asset: &Iri, layer: Layer, detail: impl Into<String>) -> RamiError {
    RamiError::IncompleteLayer { asset: asset.clone(), layer, detail: detail.into() }
}

fn single_of<'g>(graph: &'g Graph, asset: &Iri, pred: &Iri, layer: Layer) -> Result<&'g Object, RamiError> {
    let mut it = graph.objects(asset, pred);
    match (it.next(), it.next()) {
        (Some(o), None) => Ok(o),
        (None, _) => Err(incomplete(asset, layer, format!("missing {}", pred.local_name()))),
        (Some(_), Some(_)) => Err(incomplete(asset, layer, format!("multiple {}", pred.local_name()))),
    }
}

/// Join the four layers of one asset plus its coordination role.
pub fn extract_blueprint(graph: &Graph, asset_id: &Iri) -> Result<AgentBlueprint, RamiError> {
    let asset_kind = graph
        .objects(asset_id, &vocab::has_asset_kind())
        .next()
        .and_then(Object::as_iri)
        .cloned()
        .ok_or_else(|| RamiError::UnknownAsset(asset_id.clone()))?;

    let realm = single_of(graph, asset_id, &vocab::has_realm(), Layer::Asset)?
        .as_iri()
        .and_then(Realm::from_iri)
        .ok_or_else(|| incomplete(asset_id, Layer::Asset, "realm is neither physical nor digital"))?;

    let scheme = single_of(graph, asset_id, &vocab::has_protocol(), Layer::Communication)?;
    let endpoint = single_of(graph, asset_id, &vocab::has_endpoint(), Layer::Communication)?;
    let binding = match (literal_text(scheme), literal_text(endpoint)) {
        (Some(s), Some(e)) if !s.is_empty() && !e.is_empty() => {
            CommunicationBinding { protocol_scheme: s.to_string(), endpoint: e.to_string() }
        }
        _ => return Err(incomplete(asset_id, Layer::Communication, "protocol and endpoint must be non-empty literals")),
    };

    let mut channels = Vec::new();
    for (pred, direction) in [(vocab::publishes_on(), Direction::Publishes), (vocab::subscribes_to(), Direction::Subscribes)] {
        for node in graph.objects(asset_id, &pred) {
            let node = node.as_iri().ok_or_else(|| incomplete(asset_id, Layer::Information, "channel is not an IRI"))?;
            let topic = literal_text(single_of(graph, node, &vocab::has_topic(), Layer::Information)?)
                .filter(|t| !t.is_empty())
                .ok_or_else(|| incomplete(asset_id, Layer::Information, "channel topic must be a non-empty literal"))?;
            let message_kind = single_of(graph, node, &vocab::has_message_kind(), Layer::Information)?
                .as_iri()
                .cloned()
                .ok_or_else(|| incomplete(asset_id, Layer::Information, "message kind must be an IRI"))?;
            channels.push(Channel { topic: topic.to_string(), direction, message_kind });
        }
    }
    if channels.is_empty() {
        return Err(incomplete(asset_id, Layer::Information, "no channels"));
    }
    channels.sort();

    let capabilities: Vec<Capability> = graph
        .objects(asset_id, &vocab::has_capability())
        .filter_map(|o| o.as_iri().cloned().map(Capability))
        .collect();
    if capabilities.is_empty() {
        return Err(incomplete(asset_id, Layer::Functional, "no capability"));
    }

    let coordination_role = single_of(graph, asset_id, &vocab::has_coordination_role(), Layer::Functional)?
        .as_iri()
        .cloned()
        .ok_or_else(|| incomplete(asset_id, Layer::Functional, "coordination role must be an IRI"))?;

    if graph.subjects(&vocab::aggregates(), &Object::Iri(asset_id.clone())).next().is_none() {
        return Err(incomplete(asset_id, Layer::System, "not aggregated by any system"));
    }

    Ok(AgentBlueprint {
        asset_id: asset_id.clone(),
        asset_kind,
        realm,
        binding,
        channels,
        capabilities,
        coordination_role,
    })
}

pub fn describe_asset(graph: &Graph, asset_id: &Iri) -> Result<AssetDescription, RamiError> {
    let bp = extract_blueprint(graph, asset_id)?;
    Ok(AssetDescription { asset_id: bp.asset_id, asset_kind: bp.asset_kind, realm: bp.realm })
}
