//! Composition root: the setup graph, the data graph, the bus, the agents and
//! the simulated world, advanced together by a deterministic tick driver.
//!
//! One tick is [`TICK_MS`] of logical time. Within a tick, bus traffic is handled
//! until quiet (the KG-agent first, then agents by id), then devices take their
//! invocations, the world steps, observations are published and absorbed into
//! the data graph, and the consistency check runs.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::consistency::{check_world_consistency, ConsistencyViolation};
use super::kg_agent::KgAgent;
use super::protocol::{list_protocols, load_protocol, protocol_for_task, role_bindings, ProtocolDefinition, ProtocolError, TaskState, TaskStatus};
use crate::acl::{AclError, AclMessage, Bus};
use crate::agent_factory::{self, agent_id_for, AgentContext, AgentHandle, AgentSpec, FactoryError, Lifecycle};
use crate::environments::{seed_pallets, WarehouseWorld};
use crate::kg_store::{Iri, NamedGraphStore};
use crate::transports::TransportRegistry;
use crate::vocab;

pub const TICK_MS: u64 = 10;
pub const DEFAULT_STEP_DEADLINE_MS: u64 = 2000;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error(transparent)]
    Factory(#[from] FactoryError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Acl(#[from] AclError),
    #[error("no protocol for task \"{0}\"")]
    UnknownTask(String),
    #[error("no agent \"{0}\"")]
    UnknownAgent(String),
}

/// Result of one task run.
#[derive(Clone, Debug)]
pub struct TaskReport {
    pub conversation_id: String,
    pub state: TaskState,
    /// Set when the task failed: the step that made no progress.
    pub stalled_step: Option<usize>,
    pub ticks: u64,
    /// Bus deliveries of the conversation, in sequence order.
    pub trace: Vec<(u64, AclMessage)>,
}

impl TaskReport {
    pub fn completed(&self) -> bool {
        self.state.status == TaskStatus::Completed
    }
}

pub struct System {
    pub store: NamedGraphStore,
    pub bus: Bus,
    pub world: WarehouseWorld,
    registry: TransportRegistry,
    setup_graph: Iri,
    data_graph: Iri,
    specs: Vec<AgentSpec>,
    protocols: BTreeMap<Iri, Arc<ProtocolDefinition>>,
    kg: KgAgent,
    agents: BTreeMap<String, AgentHandle>,
    tick: u64,
    deadline_ticks: u64,
    consistency: Vec<(u64, Vec<ConsistencyViolation>)>,
    next_task: u64,
}

impl System {
    /// Generate specs and load protocols from the setup graph already in `store`.
    /// No agent is started yet.
    pub fn new(store: NamedGraphStore, world: WarehouseWorld, registry: TransportRegistry) -> Result<Self, SystemError> {
        let setup_graph = vocab::setup_graph();
        let data_graph = vocab::data_graph();
        let setup = store.snapshot(&setup_graph);
        let specs = agent_factory::generate_agents_with(&setup, &registry.schemes())?;
        let mut protocols = BTreeMap::new();
        for id in list_protocols(&setup) {
            protocols.insert(id.clone(), Arc::new(load_protocol(&setup, &id)?));
        }
        let bus = Bus::new();
        let kg = KgAgent::new(bus.clone(), store.clone(), data_graph.clone(), role_bindings(&setup, agent_id_for))?;
        seed_pallets(&store, &data_graph, &world);
        Ok(Self {
            store,
            bus,
            world,
            registry,
            setup_graph,
            data_graph,
            specs,
            protocols,
            kg,
            agents: BTreeMap::new(),
            tick: 0,
            deadline_ticks: DEFAULT_STEP_DEADLINE_MS / TICK_MS,
            consistency: Vec::new(),
            next_task: 0,
        })
    }

    pub fn set_step_deadline_ms(&mut self, ms: u64) {
        self.deadline_ticks = ms.div_ceil(TICK_MS);
    }

    pub fn specs(&self) -> &[AgentSpec] {
        &self.specs
    }

    pub fn setup_graph(&self) -> &Iri {
        &self.setup_graph
    }

    pub fn data_graph(&self) -> &Iri {
        &self.data_graph
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn agent(&self, agent_id: &str) -> Option<&AgentHandle> {
        self.agents.get(agent_id)
    }

    /// Consistency check results, one entry per tick.
    pub fn consistency_log(&self) -> &[(u64, Vec<ConsistencyViolation>)] {
        &self.consistency
    }

    pub fn start_agent(&mut self, agent_id: &str) -> Result<(), SystemError> {
        let spec = self
            .specs
            .iter()
            .find(|s| s.agent_id == agent_id)
            .ok_or_else(|| SystemError::UnknownAgent(agent_id.to_string()))?;
        let ctx = AgentContext {
            bus: &self.bus,
            store: &self.store,
            data_graph: &self.data_graph,
            registry: &self.registry,
            world: &self.world,
            protocols: &self.protocols,
        };
        let handle = agent_factory::instantiate(spec, &ctx)?;
        self.agents.insert(agent_id.to_string(), handle);
        Ok(())
    }

    pub fn start_all(&mut self) -> Result<(), SystemError> {
        let ids: Vec<String> = self.specs.iter().map(|s| s.agent_id.clone()).collect();
        ids.iter().try_for_each(|id| self.start_agent(id))
    }

    pub fn stop_agent(&mut self, agent_id: &str) -> Option<u64> {
        self.agents.get_mut(agent_id).map(agent_factory::shutdown)
    }

    /// Stop every agent; returns the final data-graph revision.
    pub fn shutdown_all(&mut self) -> u64 {
        for handle in self.agents.values_mut() {
            agent_factory::shutdown(handle);
        }
        self.store.revision()
    }

    /// Handle bus traffic until no participant has anything left to read.
    fn settle_messages(&mut self) {
        loop {
            let mut handled = self.kg.process();
            for agent in self.agents.values_mut() {
                handled += agent.process_messages();
            }
            if handled == 0 {
                break;
            }
        }
    }

    /// Advance one logical tick.
    pub fn step(&mut self) {
        self.tick += 1;
        self.kg.set_tick(self.tick);
        self.settle_messages();
        for agent in self.agents.values_mut() {
            agent.pump_commands(&mut self.world);
        }
        let observations = self.world.step();
        for agent in self.agents.values_mut() {
            agent.publish_observation(&observations);
        }
        for agent in self.agents.values_mut() {
            agent.absorb_observations();
        }
        let violations = check_world_consistency(&self.store.snapshot(&self.data_graph));
        self.consistency.push((self.tick, violations));
    }

    pub fn task_state(&self, conversation: &str) -> Option<&TaskState> {
        self.kg.task(conversation)
    }

    /// Run `task_name` to completion or until a step makes no progress for the
    /// step deadline.
    pub fn run_task(&mut self, task_name: &str, params: &BTreeMap<String, String>) -> Result<TaskReport, SystemError> {
        let setup = self.store.snapshot(&self.setup_graph);
        let protocol_id = protocol_for_task(&setup, task_name).ok_or_else(|| SystemError::UnknownTask(task_name.to_string()))?;
        let protocol = Arc::clone(&self.protocols[&protocol_id]);
        self.next_task += 1;
        let conversation = format!("{task_name}#{}", self.next_task);
        let task_id = vocab::kgmas(&format!("task_{task_name}_{}", self.next_task));
        self.kg.start_task(&conversation, Arc::clone(&protocol), task_id, params.clone());

        let initiator = protocol.initiator().and_then(|r| self.kg.bindings().get(r)).cloned();
        if let Some(agent) = initiator.as_ref().and_then(|id| self.agents.get_mut(id)) {
            if agent.state() == Lifecycle::Running {
                agent.begin_task(&conversation, task_name, params);
            }
        }

        let start_tick = self.tick;
        let mut last_step = 0;
        let mut last_progress = self.tick;
        let stalled_step = loop {
            let state = self.kg.task(&conversation).expect("task registered above");
            if state.status == TaskStatus::Completed {
                break None;
            }
            if state.status == TaskStatus::Failed {
                break Some(state.step);
            }
            if state.step != last_step {
                last_step = state.step;
                last_progress = self.tick;
            }
            if self.tick - last_progress >= self.deadline_ticks {
                let step = state.step;
                self.kg.fail_task(&conversation);
                log::info!("{conversation}: no progress at step {step} for {} ms", self.deadline_ticks * TICK_MS);
                break Some(step);
            }
            self.step();
        };
        // let the final answers reach their receivers
        self.settle_messages();
        Ok(TaskReport {
            state: self.kg.task(&conversation).expect("task registered above").clone(),
            stalled_step,
            ticks: self.tick - start_tick,
            trace: self.bus.conversation(&conversation),
            conversation_id: conversation,
        })
    }
}

/// Convenience wrapper over [`System::run_task`].
pub fn run_task(system: &mut System, task_name: &str, params: &BTreeMap<String, String>) -> Result<TaskReport, SystemError> {
    system.run_task(task_name, params)
}
