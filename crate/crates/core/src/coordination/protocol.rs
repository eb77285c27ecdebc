//! Graph-encoded coordination protocols, task state and the KG's answers.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::acl::Performative;
use crate::kg_store::{Graph, Iri, Literal, NamedGraphStore, Object, Triple};
use crate::vocab;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    QueryNext,
    /// The KG answering the preceding query of the same role.
    Respond,
    SendRequest,
    PerformAction,
    ReportEvent,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] =
        [Self::QueryNext, Self::Respond, Self::SendRequest, Self::PerformAction, Self::ReportEvent];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::QueryNext => "query_next",
            Self::Respond => "respond",
            Self::SendRequest => "send_request",
            Self::PerformAction => "perform_action",
            Self::ReportEvent => "report_event",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolStep {
    pub step_id: Iri,
    /// 1-based position in the protocol.
    pub index: usize,
    pub role: Iri,
    pub action_kind: ActionKind,
    pub target_role: Option<Iri>,
    pub content_template: Option<Value>,
    pub capability: Option<Iri>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolDefinition {
    pub protocol_id: Iri,
    pub task_name: String,
    pub steps: Vec<ProtocolStep>,
    /// Role → capability its agent must have.
    pub roles: BTreeMap<Iri, Iri>,
}

impl ProtocolDefinition {
    pub fn step(&self, index: usize) -> Option<&ProtocolStep> {
        index.checked_sub(1).and_then(|i| self.steps.get(i))
    }

    pub fn initiator(&self) -> Option<&Iri> {
        self.steps.first().map(|s| &s.role)
    }

    /// First step of `kind` for `role` at or after `from`.
    pub fn find(&self, role: &Iri, kind: ActionKind, from: usize) -> Option<&ProtocolStep> {
        self.steps.iter().find(|s| s.index >= from && s.role == *role && s.action_kind == kind)
    }

    /// First query_next step of `role` whose template asks `query`.
    pub fn query_step(&self, role: &Iri, query: &str) -> Option<&ProtocolStep> {
        self.steps.iter().find(|s| {
            s.role == *role
                && s.action_kind == ActionKind::QueryNext
                && s.content_template.as_ref().and_then(|t| t.get("query")).and_then(Value::as_str) == Some(query)
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("protocol {0} not found")]
    NotFound(Iri),
    #[error("step {step} has no {field}")]
    MissingField { step: Iri, field: &'static str },
    #[error("step {step}: {message}")]
    InvalidStep { step: Iri, message: String },
    #[error("step index {0} is missing")]
    MissingIndex(usize),
    #[error("step index {0} is used twice")]
    DuplicateIndex(usize),
    #[error("role {0} is not bound by the protocol")]
    DanglingRole(Iri),
    #[error("no asset with role {role} has capability {capability}")]
    UnknownCapability { role: Iri, capability: Iri },
}

pub fn list_protocols(setup: &Graph) -> Vec<Iri> {
    setup.subjects(&vocab::rdf_type(), &Object::Iri(vocab::protocol_class())).cloned().collect()
}

/// The protocol whose forTask is `task_name`.
pub fn protocol_for_task(setup: &Graph, task_name: &str) -> Option<Iri> {
    list_protocols(setup)
        .into_iter()
        .find(|p| setup.object(p, &vocab::for_task()).map(Object::text) == Some(task_name))
}

/// Capabilities held by the assets playing `role`.
fn role_capabilities(setup: &Graph, role: &Iri) -> BTreeSet<Iri> {
    setup
        .subjects(&vocab::has_coordination_role(), &Object::Iri(role.clone()))
        .flat_map(|a| setup.objects(a, &vocab::has_capability()).filter_map(Object::as_iri).cloned())
        .collect()
}

pub fn load_protocol(setup: &Graph, protocol_id: &Iri) -> Result<ProtocolDefinition, ProtocolError> {
    if !setup.contains(&Triple::new(protocol_id.clone(), vocab::rdf_type(), vocab::protocol_class())) {
        return Err(ProtocolError::NotFound(protocol_id.clone()));
    }
    let missing = |step: &Iri, field| ProtocolError::MissingField { step: step.clone(), field };
    let task_name = setup
        .object(protocol_id, &vocab::for_task())
        .map(|o| o.text().to_string())
        .ok_or_else(|| missing(protocol_id, "forTask"))?;
    let bound: BTreeSet<Iri> = setup.objects(protocol_id, &vocab::binds_role()).filter_map(Object::as_iri).cloned().collect();
    let mut roles = BTreeMap::new();
    for role in &bound {
        if let Some(cap) = setup.object(role, &vocab::requires_capability()).and_then(Object::as_iri) {
            roles.insert(role.clone(), cap.clone());
        }
    }
    let check_role = |role: &Iri| if bound.contains(role) { Ok(()) } else { Err(ProtocolError::DanglingRole(role.clone())) };

    let mut steps = Vec::new();
    for step_id in setup.objects(protocol_id, &vocab::has_step()).filter_map(Object::as_iri) {
        let index = setup
            .object(step_id, &vocab::step_index())
            .ok_or_else(|| missing(step_id, "stepIndex"))?
            .text()
            .parse::<usize>()
            .map_err(|_| ProtocolError::InvalidStep { step: step_id.clone(), message: "stepIndex is not a positive integer".into() })?;
        let role = setup.object(step_id, &vocab::step_role()).and_then(Object::as_iri).ok_or_else(|| missing(step_id, "stepRole"))?;
        check_role(role)?;
        let kind_text = setup.object(step_id, &vocab::action_kind()).ok_or_else(|| missing(step_id, "actionKind"))?.text();
        let action_kind = ActionKind::parse(kind_text).ok_or_else(|| ProtocolError::InvalidStep {
            step: step_id.clone(),
            message: format!("unknown action kind \"{kind_text}\""),
        })?;
        let target_role = setup.object(step_id, &vocab::target_role()).and_then(Object::as_iri).cloned();
        if let Some(t) = &target_role {
            check_role(t)?;
        } else if action_kind == ActionKind::SendRequest {
            return Err(missing(step_id, "targetRole"));
        }
        let content_template = match setup.object(step_id, &vocab::content_template()) {
            None => None,
            Some(o) => Some(serde_json::from_str(o.text()).map_err(|e| ProtocolError::InvalidStep {
                step: step_id.clone(),
                message: format!("content template is not JSON: {e}"),
            })?),
        };
        let mut capability = setup.object(step_id, &vocab::requires_capability()).and_then(Object::as_iri).cloned();
        if action_kind == ActionKind::PerformAction && capability.is_none() {
            capability = roles.get(role).cloned();
        }
        if let Some(cap) = &capability {
            if !role_capabilities(setup, role).contains(cap) {
                return Err(ProtocolError::UnknownCapability { role: role.clone(), capability: cap.clone() });
            }
        } else if action_kind == ActionKind::PerformAction {
            return Err(missing(step_id, "requiresCapability"));
        }
        steps.push(ProtocolStep { step_id: step_id.clone(), index, role: role.clone(), action_kind, target_role, content_template, capability });
    }
    steps.sort_by_key(|s| s.index);
    for (pos, s) in steps.iter().enumerate() {
        match s.index.cmp(&(pos + 1)) {
            std::cmp::Ordering::Greater => return Err(ProtocolError::MissingIndex(pos + 1)),
            std::cmp::Ordering::Less => return Err(ProtocolError::DuplicateIndex(s.index)),
            std::cmp::Ordering::Equal => {}
        }
    }
    for (role, cap) in &roles {
        if !role_capabilities(setup, role).contains(cap) {
            return Err(ProtocolError::UnknownCapability { role: role.clone(), capability: cap.clone() });
        }
    }
    Ok(ProtocolDefinition { protocol_id: protocol_id.clone(), task_name, steps, roles })
}

/// Replace `{name}` placeholders in every string of `template`.
pub fn fill_template(template: &Value, vars: &BTreeMap<String, String>) -> Value {
    match template {
        Value::String(s) => {
            let mut out = s.clone();
            for (k, v) in vars {
                out = out.replace(&format!("{{{k}}}"), v);
            }
            Value::String(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(|v| fill_template(v, vars)).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), fill_template(v, vars))).collect()),
        other => other.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskStatus {
    Pending,
    InProgress,
    Completed,
    Failed,
}

impl TaskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pending => "pending",
            Self::InProgress => "in_progress",
            Self::Completed => "completed",
            Self::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskState {
    pub task_id: Iri,
    pub protocol_id: Iri,
    /// 1-based index of the step in progress; one past the last step once completed.
    pub step: usize,
    pub status: TaskStatus,
    pub params: BTreeMap<String, String>,
    pub events: u64,
}

impl TaskState {
    pub fn new(task_id: Iri, protocol: &ProtocolDefinition, params: BTreeMap<String, String>) -> Self {
        Self { task_id, protocol_id: protocol.protocol_id.clone(), step: 1, status: TaskStatus::Pending, params, events: 0 }
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.status, TaskStatus::Completed | TaskStatus::Failed)
    }

    pub fn params_value(&self) -> Value {
        Value::Object(self.params.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect::<Map<_, _>>())
    }
}

/// Agent id playing each role.
pub type RoleBindings = BTreeMap<Iri, String>;

pub fn wait() -> Value {
    json!({"action": "wait"})
}

pub fn done() -> Value {
    json!({"action": "done"})
}

pub fn refuse(reason: &str) -> Value {
    json!({"action": "refuse", "reason": reason})
}

/// Performative the KG-agent uses to carry an instruction.
pub fn instruction_performative(instruction: &Value) -> Performative {
    match instruction.get("action").and_then(Value::as_str) {
        Some("refuse") => Performative::Refuse,
        _ => Performative::Inform,
    }
}

fn instruction_for(proto: &ProtocolDefinition, state: &TaskState, step: &ProtocolStep, bindings: &RoleBindings) -> Value {
    match step.action_kind {
        ActionKind::SendRequest => {
            let to = step.target_role.as_ref().and_then(|r| bindings.get(r)).cloned().unwrap_or_default();
            json!({"action": "send_request", "to": to, "task": proto.task_name})
        }
        ActionKind::PerformAction => json!({
            "action": "perform",
            "capability": step.capability.as_ref().map(|c| c.local_name()).unwrap_or_default(),
            "params": state.params_value(),
        }),
        ActionKind::ReportEvent => {
            let event = step.content_template.as_ref().and_then(|t| t.get("event")).cloned().unwrap_or(Value::Null);
            json!({"action": "report", "event": event})
        }
        ActionKind::QueryNext | ActionKind::Respond => wait(),
    }
}

/// Instruction for `requester_role` at the task's current step. Pure.
pub fn kg_next_action(proto: &ProtocolDefinition, state: &TaskState, requester_role: &Iri, bindings: &RoleBindings) -> Value {
    if state.status == TaskStatus::Completed {
        return done();
    }
    if state.status == TaskStatus::Failed {
        return wait();
    }
    match proto.step(state.step) {
        Some(current) if current.role == *requester_role => {}
        _ => return wait(),
    }
    let next = proto.steps[state.step - 1..]
        .iter()
        .find(|s| !matches!(s.action_kind, ActionKind::QueryNext | ActionKind::Respond));
    match next {
        None => done(),
        Some(s) if s.role != *requester_role => wait(),
        Some(s) => instruction_for(proto, state, s, bindings),
    }
}

/// Instruction for the recipient of a forwarded request. Pure.
pub fn kg_handle_request(proto: &ProtocolDefinition, state: &TaskState, recipient_role: &Iri, incoming: &Value) -> Value {
    if incoming.get("task").and_then(Value::as_str) != Some(proto.task_name.as_str()) {
        return refuse("task mismatch");
    }
    if state.status == TaskStatus::Completed {
        return done();
    }
    match proto.find(recipient_role, ActionKind::PerformAction, state.step) {
        Some(step) => instruction_for(proto, state, step, &RoleBindings::new()),
        None => refuse("no action for role"),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("event content has no \"event\" key")]
    MissingEvent,
    #[error("task is already {0}")]
    Finished(&'static str),
    #[error("event \"{event}\" does not match step {step}")]
    NotCurrent { event: String, step: usize },
}

/// Outcome of applying one event: the new state and the step it completed.
pub fn advance(proto: &ProtocolDefinition, state: &TaskState, content: &Value) -> Result<(TaskState, usize), EventError> {
    let name = content.get("event").and_then(Value::as_str).ok_or(EventError::MissingEvent)?;
    if state.is_finished() {
        return Err(EventError::Finished(state.status.as_str()));
    }
    let not_current = || EventError::NotCurrent { event: name.to_string(), step: state.step };
    let matched = if let Some(k) = content.get("step") {
        let k = k.as_u64().ok_or_else(not_current)? as usize;
        if k != state.step || proto.step(k).is_none() {
            return Err(not_current());
        }
        k
    } else {
        // a named event completes the next report step, along with any
        // perform_action steps of the same role leading up to it
        let mut found = None;
        for s in &proto.steps[state.step.saturating_sub(1).min(proto.steps.len())..] {
            match s.action_kind {
                ActionKind::ReportEvent => {
                    let expected = s.content_template.as_ref().and_then(|t| t.get("event")).and_then(Value::as_str);
                    if expected == Some(name) {
                        found = Some(s.index);
                    }
                    break;
                }
                ActionKind::PerformAction => continue,
                _ => break,
            }
        }
        found.ok_or_else(not_current)?
    };
    let mut next = state.clone();
    next.step = matched + 1;
    next.events += 1;
    if proto.steps[matched..].iter().all(|s| s.action_kind == ActionKind::QueryNext) {
        next.step = proto.steps.len() + 1;
    }
    next.status = if next.step > proto.steps.len() { TaskStatus::Completed } else { TaskStatus::InProgress };
    Ok((next, matched))
}

pub fn step_done(step: usize) -> Value {
    json!({"event": "step_done", "step": step})
}

fn task_triples(state: &TaskState) -> Vec<Triple> {
    vec![
        Triple::new(state.task_id.clone(), vocab::task_status(), Literal::plain(state.status.as_str())),
        Triple::new(state.task_id.clone(), vocab::current_step(), vocab::integer(state.step)),
    ]
}

fn replace_task_state(g: &Graph, task: &Iri) -> Vec<Triple> {
    [vocab::task_status(), vocab::current_step()]
        .into_iter()
        .flat_map(|p| g.objects(task, &p).map(move |o| Triple::new(task.clone(), p.clone(), o.clone())).collect::<Vec<_>>())
        .collect()
}

/// Write the task node for a fresh task.
pub fn start_task(store: &NamedGraphStore, data_graph: &Iri, proto: &ProtocolDefinition, state: &TaskState) -> u64 {
    let t = &state.task_id;
    let mut ins = vec![
        Triple::new(t.clone(), vocab::rdf_type(), vocab::task_class()),
        Triple::new(t.clone(), vocab::of_protocol(), proto.protocol_id.clone()),
        Triple::new(t.clone(), vocab::task_name(), Literal::plain(proto.task_name.clone())),
    ];
    ins.extend(state.params.iter().map(|(k, v)| Triple::new(t.clone(), vocab::has_param(), Literal::plain(format!("{k}={v}")))));
    ins.extend(task_triples(state));
    let task = t.clone();
    store.atomic_update_with(data_graph, move |g| (replace_task_state(g, &task), ins))
}

/// Apply an event and persist it; a rejected event leaves both `state` and the store untouched.
pub fn record_event(
    store: &NamedGraphStore,
    data_graph: &Iri,
    proto: &ProtocolDefinition,
    state: &mut TaskState,
    content: &Value,
    tick: u64,
) -> Result<u64, EventError> {
    let (next, matched) = advance(proto, state, content)?;
    let name = content.get("event").and_then(Value::as_str).unwrap_or_default();
    let node = vocab::kgmas(&format!("{}_event_{}", state.task_id.local_name(), next.events));
    let mut ins = vec![
        Triple::new(node.clone(), vocab::rdf_type(), vocab::event_class()),
        Triple::new(node.clone(), vocab::of_task(), state.task_id.clone()),
        Triple::new(node.clone(), vocab::at_step(), vocab::integer(matched)),
        Triple::new(node.clone(), vocab::event_name(), Literal::plain(name)),
        Triple::new(node.clone(), vocab::at_tick(), vocab::integer(tick)),
        Triple::new(node, vocab::sequence(), vocab::integer(next.events)),
    ];
    ins.extend(task_triples(&next));
    let task = state.task_id.clone();
    let rev = store.atomic_update_with(data_graph, move |g| (replace_task_state(g, &task), ins));
    *state = next;
    Ok(rev)
}

/// Events of `task` stored in the data graph, in recording order, in the form
/// `record_event` accepts.
pub fn recorded_events(data: &Graph, task: &Iri) -> Vec<Value> {
    let mut events: Vec<(u64, Value)> = data
        .subjects(&vocab::of_task(), &Object::Iri(task.clone()))
        .filter_map(|e| {
            let seq = data.object(e, &vocab::sequence())?.text().parse().ok()?;
            let name = data.object(e, &vocab::event_name())?.text().to_string();
            let step: u64 = data.object(e, &vocab::at_step())?.text().parse().ok()?;
            let content = if name == "step_done" { json!({"event": name, "step": step}) } else { json!({"event": name}) };
            Some((seq, content))
        })
        .collect();
    events.sort_by_key(|(s, _)| *s);
    events.into_iter().map(|(_, v)| v).collect()
}

/// Fold events over a fresh state, stopping at the first rejected one.
pub fn replay(proto: &ProtocolDefinition, initial: &TaskState, events: &[Value]) -> Result<TaskState, EventError> {
    events.iter().try_fold(initial.clone(), |st, e| advance(proto, &st, e).map(|(n, _)| n))
}

/// Read back a task's status and current step from the data graph.
pub fn stored_task_state(data: &Graph, task: &Iri) -> Option<(String, usize)> {
    let status = data.object(task, &vocab::task_status())?.text().to_string();
    let step = data.object(task, &vocab::current_step())?.text().parse().ok()?;
    Some((status, step))
}

/// Who is on one end of an expected message.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Party {
    Kg,
    Role(Iri),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpectedMessage {
    pub step: usize,
    pub performative: Performative,
    pub sender: Party,
    pub receiver: Party,
}

/// The message sequence a fault-free run of `proto` produces, derived from
/// the step kinds alone.
pub fn expected_skeleton(proto: &ProtocolDefinition) -> Vec<ExpectedMessage> {
    let mut out = Vec::new();
    for (i, s) in proto.steps.iter().enumerate() {
        let role = Party::Role(s.role.clone());
        let msg = |performative, sender: &Party, receiver: &Party| ExpectedMessage {
            step: s.index,
            performative,
            sender: sender.clone(),
            receiver: receiver.clone(),
        };
        match s.action_kind {
            ActionKind::QueryNext => {
                out.push(msg(Performative::Request, &role, &Party::Kg));
                let answered_later = proto
                    .steps
                    .get(i + 1)
                    .is_some_and(|n| n.action_kind == ActionKind::Respond && n.role == s.role);
                if !answered_later {
                    out.push(msg(Performative::Inform, &Party::Kg, &role));
                }
            }
            ActionKind::Respond => out.push(msg(Performative::Inform, &Party::Kg, &role)),
            ActionKind::SendRequest => {
                let target = Party::Role(s.target_role.clone().expect("send_request has a target"));
                out.push(msg(Performative::Request, &role, &target));
            }
            ActionKind::PerformAction => {}
            ActionKind::ReportEvent => out.push(msg(Performative::Inform, &role, &Party::Kg)),
        }
    }
    out
}

/// Role bindings from the setup graph: each asset's coordination role → agent id.
pub fn role_bindings(setup: &Graph, agent_id: impl Fn(&Iri) -> String) -> RoleBindings {
    let mut out = RoleBindings::new();
    for asset in crate::rami::list_assets(setup) {
        if let Some(role) = setup.object(&asset, &vocab::has_coordination_role()).and_then(Object::as_iri) {
            out.entry(role.clone()).or_insert_with(|| agent_id(&asset));
        }
    }
    out
}
