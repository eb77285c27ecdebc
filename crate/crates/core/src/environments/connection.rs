//! Connection components: the device-side half of an agent. They turn abstract
//! capability invocations into native commands and publish device observations
//! on the asset's transport.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};
use thiserror::Error;

use super::world::{arm_pose, Cell, Device, NativeAction, NativeCommand, Observation, ObservationPayload, WarehouseWorld, WorldError};
use crate::kg_store::{Iri, Literal, NamedGraphStore, Triple};
use crate::transports::{Adapter, Subscription, TransportError};
use crate::vocab;

pub const MOTION_CONTROL: &str = "MotionControl";
pub const GRIPPER_CONTROL: &str = "GripperControl";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("device \"{device}\" has no capability \"{capability}\"")]
    UnknownCapability { device: String, capability: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("\"{label}\" is not within reach of \"{device}\"")]
    Unreachable { device: String, label: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Station label when `cell` is a station, else `cell:x,y`.
pub fn position_label(stations: &BTreeMap<String, Cell>, cell: Cell) -> String {
    stations.iter().find(|(_, c)| **c == cell).map_or_else(|| cell.to_string(), |(l, _)| l.clone())
}

fn param<'a>(params: &'a Value, key: &str) -> Option<&'a str> {
    params.get(key).and_then(Value::as_str)
}

/// Native command sequence for a capability invocation on `device`.
///
/// MotionControl (robots): `{"to"}`, `{"from","to"}` or `{"dx","dy"}`.
/// GripperControl (arms): `{"op":"grip"|"release"}`, `{"op":"pick"|"place","at"}`,
/// or `{"from","to"}` which picks at whichever end is in reach and puts down at `to`.
pub fn translate(world: &WarehouseWorld, device: &str, capability: &str, params: &Value) -> Result<Vec<NativeCommand>, EnvError> {
    let dev = world.device(device).ok_or_else(|| WorldError::UnknownDevice(device.to_string()))?;
    let unknown = || EnvError::UnknownCapability { device: device.to_string(), capability: capability.to_string() };
    let resolve = |label: &str| {
        world.resolve_label(label).ok_or_else(|| EnvError::InvalidParams(format!("unknown position \"{label}\"")))
    };
    let cmd = |action| NativeCommand::new(device, action);
    match (dev, capability) {
        (Device::Robot(_), MOTION_CONTROL) => {
            if let (Some(dx), Some(dy)) = (params.get("dx").and_then(Value::as_i64), params.get("dy").and_then(Value::as_i64)) {
                let (dx, dy) = (i32::try_from(dx).unwrap_or(i32::MAX), i32::try_from(dy).unwrap_or(i32::MAX));
                return Ok(vec![cmd(NativeAction::SetVelocity { dx, dy })]);
            }
            let to = param(params, "to").ok_or_else(|| EnvError::InvalidParams("missing \"to\"".into()))?;
            let mut out = Vec::new();
            if let Some(from) = param(params, "from") {
                out.push(cmd(NativeAction::GotoCell { cell: resolve(from)? }));
            }
            out.push(cmd(NativeAction::GotoCell { cell: resolve(to)? }));
            Ok(out)
        }
        (Device::Arm(arm), GRIPPER_CONTROL) => {
            let reachable = |label: &str| -> Result<Cell, EnvError> {
                let cell = resolve(label)?;
                if arm.reach.contains(&cell) {
                    Ok(cell)
                } else {
                    Err(EnvError::Unreachable { device: device.to_string(), label: label.to_string() })
                }
            };
            let pose = |c: Cell| cmd(NativeAction::SetJoints { angles: arm_pose(arm.base, c) });
            match param(params, "op") {
                Some("grip") => Ok(vec![cmd(NativeAction::Grip)]),
                Some("release") => Ok(vec![cmd(NativeAction::Release)]),
                Some(op @ ("pick" | "place")) => {
                    let at = param(params, "at").ok_or_else(|| EnvError::InvalidParams("missing \"at\"".into()))?;
                    let last = if op == "pick" { NativeAction::Grip } else { NativeAction::Release };
                    Ok(vec![pose(reachable(at)?), cmd(last)])
                }
                Some(other) => Err(EnvError::InvalidParams(format!("unknown op \"{other}\""))),
                None => {
                    let (from, to) = match (param(params, "from"), param(params, "to")) {
                        (Some(f), Some(t)) => (f, t),
                        _ => return Err(EnvError::InvalidParams("expected \"op\" or \"from\"/\"to\"".into())),
                    };
                    let dst = reachable(to)?;
                    let src = reachable(from).unwrap_or(dst);
                    let mut out = vec![pose(src), cmd(NativeAction::Grip)];
                    if dst != src {
                        out.push(pose(dst));
                    }
                    out.push(cmd(NativeAction::Release));
                    Ok(out)
                }
            }
        }
        _ => Err(unknown()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InvocationStatus {
    Pending,
    Done,
    Failed,
}

impl InvocationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            InvocationStatus::Pending => "pending",
            InvocationStatus::Done => "done",
            InvocationStatus::Failed => "failed",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "pending" => Some(Self::Pending),
            "done" => Some(Self::Done),
            "failed" => Some(Self::Failed),
            _ => None,
        }
    }
}

/// Wire form of an invocation sent on an asset's command topic.
pub fn invocation_message(id: u64, capability: &str, params: &Value) -> Value {
    json!({"invocation": id, "capability": capability, "params": params})
}

/// Decoded observation message: the observation plus the state of the latest invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationMessage {
    pub observation: Observation,
    pub invocation: Option<(u64, InvocationStatus)>,
}

impl ObservationMessage {
    pub fn to_value(&self) -> Value {
        let invocation = self.invocation.map(|(id, st)| json!({"id": id, "state": st.as_str()}));
        json!({"observation": self.observation, "invocation": invocation})
    }

    pub fn from_value(v: &Value) -> Result<Self, EnvError> {
        let bad = |m: &str| EnvError::InvalidParams(format!("observation message: {m}"));
        let observation = serde_json::from_value(v.get("observation").cloned().ok_or_else(|| bad("missing observation"))?)
            .map_err(|e| bad(&e.to_string()))?;
        let invocation = match v.get("invocation") {
            None | Some(Value::Null) => None,
            Some(inv) => {
                let id = inv.get("id").and_then(Value::as_u64).ok_or_else(|| bad("invocation id"))?;
                let st = inv.get("state").and_then(Value::as_str).and_then(InvocationStatus::parse);
                Some((id, st.ok_or_else(|| bad("invocation state"))?))
            }
        };
        Ok(Self { observation, invocation })
    }
}

struct Tracker {
    id: u64,
    status: InvocationStatus,
    baseline_failures: u64,
}

/// Device-side endpoint of one asset: consumes invocations from the command
/// topic, drives the device, publishes observations.
pub struct ConnectionComponent {
    device: String,
    capabilities: BTreeSet<String>,
    adapter: Box<dyn Adapter>,
    commands: Option<Subscription>,
    observation_topic: String,
    tracker: Option<Tracker>,
    publish_errors: u64,
}

impl ConnectionComponent {
    pub fn connect(
        device: &str,
        capabilities: BTreeSet<String>,
        adapter: Box<dyn Adapter>,
        command_topic: &str,
        observation_topic: &str,
    ) -> Result<Self, EnvError> {
        let commands = adapter.subscribe(command_topic)?;
        Ok(Self {
            device: device.to_string(),
            capabilities,
            adapter,
            commands: Some(commands),
            observation_topic: observation_topic.to_string(),
            tracker: None,
            publish_errors: 0,
        })
    }

    pub fn device(&self) -> &str {
        &self.device
    }

    pub fn publish_errors(&self) -> u64 {
        self.publish_errors
    }

    pub fn disconnect(&mut self) {
        self.commands = None;
    }

    /// Apply every invocation waiting on the command topic. Returns how many were taken.
    pub fn pump_commands(&mut self, world: &mut WarehouseWorld) -> usize {
        let Some(sub) = &self.commands else { return 0 };
        let pending = sub.drain();
        for msg in &pending {
            let id = msg.get("invocation").and_then(Value::as_u64).unwrap_or(0);
            let status = match self.execute(world, msg) {
                Ok(()) => InvocationStatus::Pending,
                Err(e) => {
                    log::info!("{}: invocation {id} failed: {e}", self.device);
                    InvocationStatus::Failed
                }
            };
            let baseline_failures = world.device(&self.device).map_or(0, Device::failures);
            self.tracker = Some(Tracker { id, status, baseline_failures });
        }
        pending.len()
    }

    fn execute(&self, world: &mut WarehouseWorld, msg: &Value) -> Result<(), EnvError> {
        let capability = msg.get("capability").and_then(Value::as_str).unwrap_or_default();
        if !self.capabilities.contains(capability) {
            return Err(EnvError::UnknownCapability { device: self.device.clone(), capability: capability.to_string() });
        }
        let params = msg.get("params").cloned().unwrap_or(Value::Null);
        for cmd in translate(world, &self.device, capability, &params)? {
            if !world.apply(&cmd)? {
                return Err(EnvError::InvalidParams(format!("{:?} rejected", cmd.action.verb())));
            }
        }
        Ok(())
    }

    /// Publish `obs` (which must belong to this device) with the invocation state.
    pub fn publish_observation(&mut self, obs: &Observation) {
        if let Some(t) = &mut self.tracker {
            if t.status == InvocationStatus::Pending {
                if obs.failures > t.baseline_failures {
                    t.status = InvocationStatus::Failed;
                } else if !obs.busy {
                    t.status = InvocationStatus::Done;
                }
            }
        }
        let msg = ObservationMessage { observation: obs.clone(), invocation: self.tracker.as_ref().map(|t| (t.id, t.status)) };
        if let Err(e) = self.adapter.publish(&self.observation_topic, msg.to_value()) {
            self.publish_errors += 1;
            log::debug!("{}: observation not delivered: {e}", self.device);
        }
    }
}

fn lit(s: impl Into<String>) -> Literal {
    Literal::plain(s)
}

/// Mirror an observation into the data graph in one atomic update: the device's
/// position, status and arm state, plus the position and holder of every sensed pallet.
pub fn publish_state(store: &NamedGraphStore, graph: &Iri, entity: &Iri, stations: &BTreeMap<String, Cell>, obs: &Observation) -> u64 {
    let entity = entity.clone();
    let mut ins = vec![
        Triple::new(entity.clone(), vocab::at_position(), lit(position_label(stations, obs.cell()))),
        Triple::new(entity.clone(), vocab::has_status(), lit(if obs.busy { "busy" } else { "idle" })),
    ];
    if let ObservationPayload::JointStates { joints, gripper, .. } = &obs.payload {
        let g = serde_json::to_value(gripper).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        ins.push(Triple::new(entity.clone(), vocab::joint_state(), lit(Value::from(joints.clone()).to_string())));
        ins.push(Triple::new(entity.clone(), vocab::gripper_state(), lit(g)));
    }
    let mut replaced: Vec<(Iri, Vec<Iri>)> = vec![(
        entity,
        vec![vocab::at_position(), vocab::has_status(), vocab::joint_state(), vocab::gripper_state()],
    )];
    for p in &obs.pallets {
        let pid = vocab::kgmas(&p.id);
        ins.push(Triple::new(pid.clone(), vocab::at_position(), lit(position_label(stations, p.cell))));
        if let Some(h) = &p.held_by {
            ins.push(Triple::new(pid.clone(), vocab::held_by(), vocab::kgmas(h)));
        }
        replaced.push((pid, vec![vocab::at_position(), vocab::held_by()]));
    }
    store.atomic_update_with(graph, move |g| {
        let mut rem = Vec::new();
        for (s, preds) in &replaced {
            for p in preds {
                rem.extend(g.objects(s, p).map(|o| Triple::new(s.clone(), p.clone(), o.clone())));
            }
        }
        (rem, ins)
    })
}

/// Initial pallet positions into the data graph.
pub fn seed_pallets(store: &NamedGraphStore, graph: &Iri, world: &WarehouseWorld) -> u64 {
    let ins: Vec<Triple> = world
        .pallets()
        .keys()
        .filter_map(|id| {
            let cell = world.pallet_cell(id)?;
            Some(Triple::new(vocab::kgmas(id), vocab::at_position(), lit(world.position_label(cell))))
        })
        .collect();
    store.atomic_update(graph, &[], &ins)
}
