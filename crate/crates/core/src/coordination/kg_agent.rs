//! The knowledge graph as a bus participant. It keeps one TaskState per
//! conversation and answers queries from the protocol stored in the setup graph.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};

use super::protocol::{
    kg_handle_request, kg_next_action, instruction_performative, record_event, refuse, start_task, step_done,
    ActionKind, ProtocolDefinition, RoleBindings, TaskState, TaskStatus,
};
use crate::acl::{AclError, AclMessage, Bus, Performative};
use crate::kg_store::{Iri, Literal, NamedGraphStore, Triple};
use crate::vocab;

pub const KG_AGENT_ID: &str = "kg";

struct TaskEntry {
    protocol: Arc<ProtocolDefinition>,
    state: TaskState,
}

pub struct KgAgent {
    bus: Bus,
    store: NamedGraphStore,
    data_graph: Iri,
    bindings: RoleBindings,
    roles: BTreeMap<String, Iri>,
    tasks: BTreeMap<String, TaskEntry>,
    tick: u64,
}

impl KgAgent {
    pub fn new(bus: Bus, store: NamedGraphStore, data_graph: Iri, bindings: RoleBindings) -> Result<Self, AclError> {
        bus.register(KG_AGENT_ID)?;
        let roles = bindings.iter().map(|(role, agent)| (agent.clone(), role.clone())).collect();
        Ok(Self { bus, store, data_graph, bindings, roles, tasks: BTreeMap::new(), tick: 0 })
    }

    pub fn bindings(&self) -> &RoleBindings {
        &self.bindings
    }

    pub fn set_tick(&mut self, tick: u64) {
        self.tick = tick;
    }

    pub fn start_task(&mut self, conversation: &str, protocol: Arc<ProtocolDefinition>, task_id: Iri, params: BTreeMap<String, String>) -> TaskState {
        let state = TaskState::new(task_id, &protocol, params);
        start_task(&self.store, &self.data_graph, &protocol, &state);
        self.tasks.insert(conversation.to_string(), TaskEntry { protocol, state: state.clone() });
        state
    }

    pub fn task(&self, conversation: &str) -> Option<&TaskState> {
        self.tasks.get(conversation).map(|e| &e.state)
    }

    /// Mark a task failed in memory and in the data graph.
    pub fn fail_task(&mut self, conversation: &str) {
        let Some(entry) = self.tasks.get_mut(conversation) else { return };
        if entry.state.is_finished() {
            return;
        }
        entry.state.status = TaskStatus::Failed;
        let task = entry.state.task_id.clone();
        self.store.atomic_update_with(&self.data_graph, |g| {
            let rem = g.objects(&task, &vocab::task_status()).map(|o| Triple::new(task.clone(), vocab::task_status(), o.clone())).collect();
            (rem, vec![Triple::new(task.clone(), vocab::task_status(), Literal::plain(TaskStatus::Failed.as_str()))])
        });
    }

    /// Handle every queued message. Returns how many were handled.
    pub fn process(&mut self) -> usize {
        let mut n = 0;
        while let Ok(Some(msg)) = self.bus.try_receive(KG_AGENT_ID) {
            self.handle(&msg);
            n += 1;
        }
        n
    }

    fn reply(&self, to: &AclMessage, performative: Performative, content: Value) {
        let mut out = AclMessage::new(performative, KG_AGENT_ID, &to.sender, &to.conversation_id, content);
        if let Some(key) = &to.reply_with {
            out = out.in_reply_to(key);
        }
        if let Err(e) = self.bus.send(out) {
            log::info!("kg: reply to {} not delivered: {e}", to.sender);
        }
    }

    fn record(&mut self, conversation: &str, content: &Value) -> bool {
        let tick = self.tick;
        let Some(entry) = self.tasks.get_mut(conversation) else { return false };
        match record_event(&self.store, &self.data_graph, &entry.protocol, &mut entry.state, content, tick) {
            Ok(_) => true,
            Err(e) => {
                log::debug!("kg: event rejected: {e}");
                false
            }
        }
    }

    fn current(&self, conversation: &str) -> Option<(ActionKind, Iri, Option<Iri>)> {
        let e = self.tasks.get(conversation)?;
        if e.state.is_finished() {
            return None;
        }
        e.protocol.step(e.state.step).map(|s| (s.action_kind, s.role.clone(), s.target_role.clone()))
    }

    fn handle(&mut self, msg: &AclMessage) {
        let conv = msg.conversation_id.as_str();
        if !self.tasks.contains_key(conv) {
            self.reply(msg, Performative::Failure, json!({"error": "unknown conversation"}));
            return;
        }
        let role = self.roles.get(&msg.sender).cloned();
        let query = msg.content.get("query").and_then(Value::as_str);
        match (msg.performative, query, role) {
            (Performative::Request, Some(_), None) => self.reply(msg, Performative::Refuse, refuse("unbound agent")),
            (Performative::Request, Some("next_action"), Some(role)) => {
                let entry = &self.tasks[conv];
                if msg.content.get("task").and_then(Value::as_str) != Some(entry.protocol.task_name.as_str()) {
                    self.reply(msg, Performative::Refuse, refuse("task mismatch"));
                    return;
                }
                if matches!(self.current(conv), Some((ActionKind::QueryNext, r, _)) if r == role) {
                    let step = self.tasks[conv].state.step;
                    self.record(conv, &step_done(step));
                    if matches!(self.current(conv), Some((ActionKind::Respond, r, _)) if r == role) {
                        let entry = &self.tasks[conv];
                        let instruction = kg_next_action(&entry.protocol, &entry.state, &role, &self.bindings);
                        let step = entry.state.step;
                        self.record(conv, &step_done(step));
                        self.reply(msg, instruction_performative(&instruction), instruction);
                        return;
                    }
                }
                let entry = &self.tasks[conv];
                let instruction = kg_next_action(&entry.protocol, &entry.state, &role, &self.bindings);
                self.reply(msg, instruction_performative(&instruction), instruction);
            }
            (Performative::Request, Some("handle_request"), Some(role)) => {
                let task_ok = msg.content.get("task").and_then(Value::as_str) == Some(self.tasks[conv].protocol.task_name.as_str());
                if task_ok {
                    if matches!(self.current(conv), Some((ActionKind::SendRequest, _, Some(t))) if t == role) {
                        let step = self.tasks[conv].state.step;
                        self.record(conv, &step_done(step));
                    }
                    if matches!(self.current(conv), Some((ActionKind::QueryNext, r, _)) if r == role) {
                        let step = self.tasks[conv].state.step;
                        self.record(conv, &step_done(step));
                    }
                }
                let entry = &self.tasks[conv];
                let instruction = kg_handle_request(&entry.protocol, &entry.state, &role, &msg.content);
                self.reply(msg, instruction_performative(&instruction), instruction);
            }
            (Performative::Inform, _, _) if msg.content.get("event").is_some() => {
                if !self.record(conv, &msg.content) {
                    self.reply(msg, Performative::Failure, json!({"error": "event rejected"}));
                }
            }
            (Performative::Failure, _, _) => self.fail_task(conv),
            _ => self.reply(msg, Performative::Refuse, refuse("not understood")),
        }
    }
}
