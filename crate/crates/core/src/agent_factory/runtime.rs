//! Generic agent runtime. Every agent runs the same code, parameterized by its
//! spec and the protocol role it plays.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde_json::{json, Value};

use super::{AgentSpec, FactoryError};
use crate::acl::{AclMessage, Bus, Performative};
use crate::coordination::{fill_template, ActionKind, ProtocolDefinition, KG_AGENT_ID};
use crate::environments::{
    invocation_message, publish_state, Cell, ConnectionComponent, EnvError, Observation, ObservationMessage,
    InvocationStatus, WarehouseWorld,
};
use crate::kg_store::{Iri, Literal, NamedGraphStore, Triple};
use crate::rami::Direction;
use crate::transports::{Adapter, Subscription, TransportRegistry};
use crate::vocab;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lifecycle {
    Created,
    Running,
    Stopped,
}

/// Shared services an agent is started against.
pub struct AgentContext<'a> {
    pub bus: &'a Bus,
    pub store: &'a NamedGraphStore,
    pub data_graph: &'a Iri,
    pub registry: &'a TransportRegistry,
    pub world: &'a WarehouseWorld,
    pub protocols: &'a BTreeMap<Iri, Arc<ProtocolDefinition>>,
}

struct Behavior {
    protocol: Arc<ProtocolDefinition>,
    role: Iri,
}

struct ActiveTask {
    task: String,
    params: BTreeMap<String, String>,
    finished: bool,
}

enum Continuation {
    SendRequest { to: String, content: Value },
    Report,
}

struct PendingInvocation {
    id: u64,
    conversation: String,
    capability: String,
    then: Continuation,
}

pub struct AgentHandle {
    agent_id: String,
    asset: Iri,
    state: Lifecycle,
    bus: Bus,
    store: NamedGraphStore,
    data_graph: Iri,
    stations: BTreeMap<String, Cell>,
    behavior: Option<Behavior>,
    adapter: Box<dyn Adapter>,
    command_topic: String,
    observations: Option<Subscription>,
    connection: Option<ConnectionComponent>,
    tasks: BTreeMap<String, ActiveTask>,
    pending: Option<PendingInvocation>,
    next_invocation: u64,
    next_key: u64,
}

/// Start an agent: connect its device, subscribe to its channels, register on
/// the bus and write its initial state to the data graph.
pub fn instantiate(spec: &AgentSpec, ctx: &AgentContext<'_>) -> Result<AgentHandle, FactoryError> {
    let bp = &spec.blueprint;
    if ctx.bus.is_registered(&spec.agent_id) {
        return Err(FactoryError::Acl(crate::acl::AclError::DuplicateAgent(spec.agent_id.clone())));
    }
    let missing = |d: &str| FactoryError::Env(EnvError::InvalidParams(format!("{} has no {d} channel", spec.agent_id)));
    let command_topic = bp.channel(Direction::Subscribes).ok_or_else(|| missing("subscribesTo"))?.topic.clone();
    let observation_topic = bp.channel(Direction::Publishes).ok_or_else(|| missing("publishesOn"))?.topic.clone();
    let device = bp.asset_id.local_name().to_string();

    let adapter = ctx.registry.resolve(&bp.binding)?;
    let connection = match ctx.world.device(&device) {
        Some(_) => {
            let caps: BTreeSet<String> = bp.capabilities.iter().map(|c| c.name().to_string()).collect();
            let device_side = ctx.registry.resolve(&bp.binding)?;
            Some(ConnectionComponent::connect(&device, caps, device_side, &command_topic, &observation_topic)?)
        }
        None => {
            log::info!("{}: no device \"{device}\" in the world, running without one", spec.agent_id);
            None
        }
    };
    let observations = adapter.subscribe(&observation_topic)?;
    ctx.bus.register(&spec.agent_id)?;

    let behavior = spec.behavior.as_ref().and_then(|b| {
        ctx.protocols.get(&b.protocol_id).map(|p| Behavior { protocol: Arc::clone(p), role: b.role.clone() })
    });
    let entity = bp.asset_id.clone();
    let mut ins = vec![
        Triple::new(entity.clone(), vocab::has_status(), Literal::plain("idle")),
        Triple::new(entity.clone(), vocab::has_realm(), bp.realm.iri()),
    ];
    if let Some(d) = ctx.world.device(&device) {
        ins.push(Triple::new(entity.clone(), vocab::at_position(), Literal::plain(ctx.world.position_label(d.cell()))));
    }
    ctx.store.atomic_update_with(ctx.data_graph, |g| {
        let rem = [vocab::has_status(), vocab::at_position()]
            .into_iter()
            .flat_map(|p| g.objects(&entity, &p).map(|o| Triple::new(entity.clone(), p.clone(), o.clone())).collect::<Vec<_>>())
            .collect();
        (rem, ins)
    });
    log::info!("{}: running on {}://{}", spec.agent_id, bp.binding.protocol_scheme, bp.binding.endpoint);

    Ok(AgentHandle {
        agent_id: spec.agent_id.clone(),
        asset: bp.asset_id.clone(),
        state: Lifecycle::Running,
        bus: ctx.bus.clone(),
        store: ctx.store.clone(),
        data_graph: ctx.data_graph.clone(),
        stations: ctx.world.stations.clone(),
        behavior,
        adapter,
        command_topic,
        observations: Some(observations),
        connection,
        tasks: BTreeMap::new(),
        pending: None,
        next_invocation: 0,
        next_key: 0,
    })
}

/// Stop an agent. Returns the data-graph revision afterwards; stopping twice is a no-op.
pub fn shutdown(handle: &mut AgentHandle) -> u64 {
    if handle.state == Lifecycle::Stopped {
        return handle.store.revision();
    }
    handle.observations = None;
    if let Some(c) = &mut handle.connection {
        c.disconnect();
    }
    let discarded = handle.bus.unregister(&handle.agent_id);
    if !discarded.is_empty() {
        log::debug!("{}: discarded {} undelivered messages", handle.agent_id, discarded.len());
    }
    handle.state = Lifecycle::Stopped;
    let entity = handle.asset.clone();
    handle.store.atomic_update_with(&handle.data_graph, |g| {
        let rem = g.objects(&entity, &vocab::has_status()).map(|o| Triple::new(entity.clone(), vocab::has_status(), o.clone())).collect();
        (rem, vec![Triple::new(entity.clone(), vocab::has_status(), Literal::plain("stopped"))])
    })
}

impl AgentHandle {
    pub fn agent_id(&self) -> &str {
        &self.agent_id
    }

    pub fn asset(&self) -> &Iri {
        &self.asset
    }

    pub fn state(&self) -> Lifecycle {
        self.state
    }

    pub fn role(&self) -> Option<&Iri> {
        self.behavior.as_ref().map(|b| &b.role)
    }

    /// Name of the simulated device this agent drives, if any.
    pub fn device(&self) -> Option<&str> {
        self.connection.as_ref().map(ConnectionComponent::device)
    }

    fn running(&self) -> bool {
        self.state == Lifecycle::Running
    }

    fn key(&mut self) -> String {
        self.next_key += 1;
        format!("{}-{}", self.agent_id, self.next_key)
    }

    fn send(&self, msg: AclMessage) -> bool {
        match self.bus.send(msg) {
            Ok(_) => true,
            Err(e) => {
                log::info!("{}: send failed: {e}", self.agent_id);
                false
            }
        }
    }

    fn vars(&self, conversation: &str) -> BTreeMap<String, String> {
        let mut vars = BTreeMap::new();
        if let Some(t) = self.tasks.get(conversation) {
            vars.extend(t.params.clone());
            vars.insert("task".to_string(), t.task.clone());
        }
        vars
    }

    fn query_content(&self, query: &str, vars: &BTreeMap<String, String>) -> Value {
        let template = self
            .behavior
            .as_ref()
            .and_then(|b| b.protocol.query_step(&b.role, query))
            .and_then(|s| s.content_template.clone())
            .unwrap_or_else(|| json!({"query": query, "task": "{task}"}));
        fill_template(&template, vars)
    }

    fn query_kg(&mut self, conversation: &str, query: &str, vars: &BTreeMap<String, String>, in_reply_to: Option<&str>) {
        let content = self.query_content(query, vars);
        let key = self.key();
        let mut msg = AclMessage::new(Performative::Request, &self.agent_id, KG_AGENT_ID, conversation, content).reply_with(key);
        if let Some(k) = in_reply_to {
            msg = msg.in_reply_to(k);
        }
        self.send(msg);
    }

    /// Start a task this agent initiates.
    pub fn begin_task(&mut self, conversation: &str, task: &str, params: &BTreeMap<String, String>) {
        if !self.running() {
            return;
        }
        self.tasks.insert(conversation.to_string(), ActiveTask { task: task.to_string(), params: params.clone(), finished: false });
        let vars = self.vars(conversation);
        self.query_kg(conversation, "next_action", &vars, None);
    }

    pub fn task_finished(&self, conversation: &str) -> bool {
        self.tasks.get(conversation).is_some_and(|t| t.finished)
    }

    /// Handle every queued bus message. Returns how many were handled.
    pub fn process_messages(&mut self) -> usize {
        if !self.running() {
            return 0;
        }
        let mut n = 0;
        while let Ok(Some(msg)) = self.bus.try_receive(&self.agent_id) {
            self.handle(&msg);
            n += 1;
        }
        n
    }

    fn finish(&mut self, conversation: &str) {
        if let Some(t) = self.tasks.get_mut(conversation) {
            t.finished = true;
        }
    }

    fn handle(&mut self, msg: &AclMessage) {
        let conv = msg.conversation_id.clone();
        if msg.sender == KG_AGENT_ID {
            if matches!(msg.performative, Performative::Refuse | Performative::Failure) {
                self.finish(&conv);
                return;
            }
            match msg.content.get("action").and_then(Value::as_str) {
                Some("send_request") => {
                    let to = msg.content.get("to").and_then(Value::as_str).unwrap_or_default().to_string();
                    self.on_send_request(&conv, to);
                }
                Some("perform") => {
                    let capability = msg.content.get("capability").and_then(Value::as_str).unwrap_or_default().to_string();
                    let params = msg.content.get("params").cloned().unwrap_or(Value::Null);
                    self.invoke(&conv, &capability, &params, Continuation::Report);
                }
                Some("report") => self.report(&conv),
                Some("done") => self.finish(&conv),
                _ => {}
            }
            return;
        }
        if msg.performative == Performative::Request {
            if let Some(task) = msg.content.get("task").and_then(Value::as_str) {
                let params = msg
                    .content
                    .as_object()
                    .map(|m| {
                        m.iter()
                            .filter(|(k, _)| k.as_str() != "task")
                            .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
                            .collect()
                    })
                    .unwrap_or_default();
                self.tasks.entry(conv.clone()).or_insert(ActiveTask { task: task.to_string(), params, finished: false });
                let mut vars = self.vars(&conv);
                vars.insert("requester".to_string(), msg.sender.clone());
                self.query_kg(&conv, "handle_request", &vars, msg.reply_with.as_deref());
                return;
            }
        }
        log::debug!("{}: ignoring {} from {}", self.agent_id, msg.performative, msg.sender);
    }

    fn on_send_request(&mut self, conv: &str, to: String) {
        let Some(b) = &self.behavior else { return };
        let step = b.protocol.find(&b.role, ActionKind::SendRequest, 1).cloned();
        let mut vars = self.vars(conv);
        vars.insert("target".to_string(), to.clone());
        let template = step.as_ref().and_then(|s| s.content_template.clone()).unwrap_or_else(|| json!({"task": "{task}"}));
        let content = fill_template(&template, &vars);
        match step.and_then(|s| s.capability) {
            Some(cap) => {
                let params = self.tasks.get(conv).map(|t| json!(t.params)).unwrap_or(Value::Null);
                self.invoke(conv, cap.local_name(), &params, Continuation::SendRequest { to, content });
            }
            None => self.continue_with(conv, Continuation::SendRequest { to, content }),
        }
    }

    fn invoke(&mut self, conv: &str, capability: &str, params: &Value, then: Continuation) {
        self.next_invocation += 1;
        let id = self.next_invocation;
        let payload = invocation_message(id, capability, params);
        match self.adapter.publish(&self.command_topic, payload) {
            Ok(()) => {
                self.pending = Some(PendingInvocation { id, conversation: conv.to_string(), capability: capability.to_string(), then });
            }
            Err(e) => self.invocation_failed(conv, capability, &e.to_string()),
        }
    }

    fn invocation_failed(&mut self, conv: &str, capability: &str, reason: &str) {
        log::info!("{}: {capability} failed: {reason}", self.agent_id);
        let msg = AclMessage::new(
            Performative::Failure,
            &self.agent_id,
            KG_AGENT_ID,
            conv,
            json!({"error": "action_failed", "capability": capability}),
        );
        self.send(msg);
        self.finish(conv);
    }

    fn continue_with(&mut self, conv: &str, then: Continuation) {
        match then {
            Continuation::SendRequest { to, content } => {
                let key = self.key();
                self.send(AclMessage::new(Performative::Request, &self.agent_id, to, conv, content).reply_with(key));
            }
            Continuation::Report => self.report(conv),
        }
    }

    fn report(&mut self, conv: &str) {
        let Some(b) = &self.behavior else { return };
        let Some(step) = b.protocol.find(&b.role, ActionKind::ReportEvent, 1).cloned() else { return };
        let follow_up = b.protocol.find(&b.role, ActionKind::QueryNext, step.index).is_some();
        let vars = self.vars(conv);
        let content = fill_template(&step.content_template.unwrap_or_else(|| json!({"event": "action_completed"})), &vars);
        self.send(AclMessage::new(Performative::Inform, &self.agent_id, KG_AGENT_ID, conv, content));
        if follow_up {
            self.query_kg(conv, "next_action", &vars, None);
        }
    }

    /// Device side: apply invocations waiting on the command topic.
    pub fn pump_commands(&mut self, world: &mut WarehouseWorld) -> usize {
        match &mut self.connection {
            Some(c) if self.state == Lifecycle::Running => c.pump_commands(world),
            _ => 0,
        }
    }

    /// Device side: publish this device's observation from `observations`.
    pub fn publish_observation(&mut self, observations: &[Observation]) {
        let Some(c) = &mut self.connection else { return };
        if self.state != Lifecycle::Running {
            return;
        }
        if let Some(obs) = observations.iter().find(|o| o.device == c.device()) {
            c.publish_observation(obs);
        }
    }

    /// Agent side: mirror received observations into the data graph and
    /// continue once the pending invocation settles.
    pub fn absorb_observations(&mut self) -> usize {
        let Some(sub) = &self.observations else { return 0 };
        let received = sub.drain();
        for raw in &received {
            let msg = match ObservationMessage::from_value(raw) {
                Ok(m) => m,
                Err(e) => {
                    log::debug!("{}: {e}", self.agent_id);
                    continue;
                }
            };
            publish_state(&self.store, &self.data_graph, &self.asset, &self.stations, &msg.observation);
            let settled = match (&self.pending, msg.invocation) {
                (Some(p), Some((id, status))) if p.id == id && status != InvocationStatus::Pending => Some(status),
                _ => None,
            };
            if let Some(status) = settled {
                let p = self.pending.take().expect("pending checked above");
                match status {
                    InvocationStatus::Done => self.continue_with(&p.conversation, p.then),
                    _ => self.invocation_failed(&p.conversation, &p.capability, "device reported failure"),
                }
            }
        }
        received.len()
    }
}
