//! Protocol-driven coordination: the KG-agent, task state kept in the data
//! graph, the tick driver and the world-consistency check.

mod consistency;
mod kg_agent;
mod protocol;
mod runner;

pub use consistency::{check_world_consistency, colocation_rule, ConsistencyRule, ConsistencyViolation};
pub use kg_agent::{KgAgent, KG_AGENT_ID};
pub use protocol::{
    advance, done, expected_skeleton, fill_template, instruction_performative, kg_handle_request, kg_next_action,
    list_protocols, load_protocol, protocol_for_task, record_event, recorded_events, refuse, replay, role_bindings,
    start_task, step_done, stored_task_state, wait, ActionKind, EventError, ExpectedMessage, Party,
    ProtocolDefinition, ProtocolError, ProtocolStep, RoleBindings, TaskState, TaskStatus,
};
pub use runner::{run_task, System, SystemError, TaskReport, DEFAULT_STEP_DEADLINE_MS, TICK_MS};
