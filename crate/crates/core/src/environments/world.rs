//! Discrete warehouse simulator: a grid with named stations, pallets, mobile
//! robots and fixed robotic arms, advanced one logical tick at a time.
//!
//! Movement rules:
//! * a robot moves at most one cell per tick, x axis first, then y;
//! * a robot that finishes a `goto_cell` on a cell holding a free pallet lifts it;
//! * an arm moves each joint at most [`JOINT_STEP`] radians per tick toward its target;
//! * `grip` takes the pallet at the arm's tool cell (from the floor or off a robot),
//!   `release` puts the held pallet down on the tool cell.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JOINT_STEP: f64 = 0.1;
pub const JOINT_LIMIT: f64 = std::f64::consts::PI;
pub const JOINT_COUNT: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    /// One greedy step toward `target`, x axis first.
    fn step_toward(self, target: Cell) -> Cell {
        if self.x != target.x {
            Cell::new(self.x + (target.x - self.x).signum(), self.y)
        } else {
            Cell::new(self.x, self.y + (target.y - self.y).signum())
        }
    }
}

impl From<[i32; 2]> for Cell {
    fn from([x, y]: [i32; 2]) -> Self {
        Cell::new(x, y)
    }
}

impl From<Cell> for [i32; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cell:{},{}", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    fn between(from: Cell, to: Cell) -> Option<Heading> {
        match (to.x - from.x, to.y - from.y) {
            (1, 0) => Some(Heading::East),
            (-1, 0) => Some(Heading::West),
            (0, 1) => Some(Heading::North),
            (0, -1) => Some(Heading::South),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gripper {
    Open,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    SetVelocity,
    GotoCell,
    SetJoints,
    Grip,
    Release,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case")]
pub enum NativeAction {
    SetVelocity { dx: i32, dy: i32 },
    GotoCell { cell: Cell },
    SetJoints { angles: Vec<f64> },
    Grip,
    Release,
}

impl NativeAction {
    pub fn verb(&self) -> Verb {
        match self {
            NativeAction::SetVelocity { .. } => Verb::SetVelocity,
            NativeAction::GotoCell { .. } => Verb::GotoCell,
            NativeAction::SetJoints { .. } => Verb::SetJoints,
            NativeAction::Grip => Verb::Grip,
            NativeAction::Release => Verb::Release,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NativeCommand {
    pub device: String,
    #[serde(flatten)]
    pub action: NativeAction,
}

impl NativeCommand {
    pub fn new(device: impl Into<String>, action: NativeAction) -> Self {
        Self { device: device.into(), action }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    MobileRobot,
    RoboticArm,
}

impl DeviceKind {
    pub fn accepts(self, verb: Verb) -> bool {
        match self {
            DeviceKind::MobileRobot => matches!(verb, Verb::SetVelocity | Verb::GotoCell),
            DeviceKind::RoboticArm => matches!(verb, Verb::SetJoints | Verb::Grip | Verb::Release),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PalletLocation {
    Cell(Cell),
    HeldBy(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MobileRobotSim {
    pub id: String,
    pub cell: Cell,
    pub heading: Heading,
    /// Cells per tick, in (0, 1].
    pub speed: f64,
    pub velocity: (i32, i32),
    pub carrying: Option<String>,
    progress: f64,
    queue: VecDeque<NativeAction>,
    failures: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoboticArmSim {
    pub id: String,
    pub base: Cell,
    pub joints: Vec<f64>,
    pub gripper: Gripper,
    pub reach: Vec<Cell>,
    pub holding: Option<String>,
    queue: VecDeque<NativeAction>,
    failures: u64,
}

/// Joint targets that put the tool over `cell`: waist toward the cell, the other
/// joints at a fixed reaching posture.
pub fn arm_pose(base: Cell, cell: Cell) -> Vec<f64> {
    let waist = f64::from(cell.y - base.y).atan2(f64::from(cell.x - base.x));
    vec![waist, 0.6, -0.4, -0.2]
}

pub fn arm_home() -> Vec<f64> {
    vec![0.0; JOINT_COUNT]
}

impl RoboticArmSim {
    /// The reach cell whose pose the joints currently hold, if any.
    pub fn tool_cell(&self) -> Option<Cell> {
        self.reach.iter().copied().find(|c| arm_pose(self.base, *c) == self.joints)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Device {
    Robot(MobileRobotSim),
    Arm(RoboticArmSim),
}

impl Device {
    pub fn id(&self) -> &str {
        match self {
            Device::Robot(r) => &r.id,
            Device::Arm(a) => &a.id,
        }
    }

    pub fn kind(&self) -> DeviceKind {
        match self {
            Device::Robot(_) => DeviceKind::MobileRobot,
            Device::Arm(_) => DeviceKind::RoboticArm,
        }
    }

    /// Where the device itself stands (an arm's base).
    pub fn cell(&self) -> Cell {
        match self {
            Device::Robot(r) => r.cell,
            Device::Arm(a) => a.base,
        }
    }

    pub fn busy(&self) -> bool {
        match self {
            Device::Robot(r) => !r.queue.is_empty() || r.velocity != (0, 0),
            Device::Arm(a) => !a.queue.is_empty(),
        }
    }

    pub fn failures(&self) -> u64 {
        match self {
            Device::Robot(r) => r.failures,
            Device::Arm(a) => a.failures,
        }
    }

    pub fn reach(&self) -> &[Cell] {
        match self {
            Device::Robot(_) => &[],
            Device::Arm(a) => &a.reach,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensedPallet {
    pub id: String,
    pub cell: Cell,
    pub held_by: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObservationPayload {
    Pose { cell: Cell, heading: Heading, carrying: Option<String> },
    JointStates { base: Cell, joints: Vec<f64>, gripper: Gripper, holding: Option<String>, tool_cell: Option<Cell> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub device: String,
    pub tick: u64,
    pub busy: bool,
    pub failures: u64,
    pub payload: ObservationPayload,
    pub pallets: Vec<SensedPallet>,
}

impl Observation {
    pub fn cell(&self) -> Cell {
        match &self.payload {
            ObservationPayload::Pose { cell, .. } => *cell,
            ObservationPayload::JointStates { base, .. } => *base,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("unknown device \"{0}\"")]
    UnknownDevice(String),
    #[error("invalid world: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceFixture {
    pub id: String,
    pub kind: DeviceKind,
    pub cell: Cell,
    #[serde(default)]
    pub heading: Option<Heading>,
    #[serde(default)]
    pub speed: Option<f64>,
    #[serde(default)]
    pub reach: Vec<Cell>,
}

/// On-disk world description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldFixture {
    pub width: i32,
    pub height: i32,
    #[serde(default)]
    pub seed: u64,
    pub stations: BTreeMap<String, Cell>,
    pub pallets: BTreeMap<String, Cell>,
    pub devices: Vec<DeviceFixture>,
}

impl WorldFixture {
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        serde_json::from_str(text).map_err(|e| WorldError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarehouseWorld {
    pub width: i32,
    pub height: i32,
    pub seed: u64,
    pub stations: BTreeMap<String, Cell>,
    pallets: BTreeMap<String, PalletLocation>,
    devices: Vec<Device>,
    tick: u64,
}

impl WarehouseWorld {
    pub fn from_fixture(fx: &WorldFixture) -> Result<Self, WorldError> {
        let invalid = |m: String| Err(WorldError::Invalid(m));
        if fx.width <= 0 || fx.height <= 0 {
            return invalid(format!("grid {}x{} is empty", fx.width, fx.height));
        }
        let in_grid = |c: Cell| c.x >= 0 && c.y >= 0 && c.x < fx.width && c.y < fx.height;
        let mut station_cells = BTreeMap::new();
        for (label, cell) in &fx.stations {
            if !in_grid(*cell) {
                return invalid(format!("station {label} at {cell} is outside the grid"));
            }
            if let Some(other) = station_cells.insert(*cell, label) {
                return invalid(format!("stations {other} and {label} share {cell}"));
            }
            if label.starts_with("cell:") {
                return invalid(format!("station label {label} collides with cell labels"));
            }
        }
        for (id, cell) in &fx.pallets {
            if !in_grid(*cell) {
                return invalid(format!("pallet {id} at {cell} is outside the grid"));
            }
        }
        let mut devices = Vec::new();
        for d in &fx.devices {
            if !in_grid(d.cell) {
                return invalid(format!("device {} at {} is outside the grid", d.id, d.cell));
            }
            if devices.iter().any(|x: &Device| x.id() == d.id) {
                return invalid(format!("duplicate device id {}", d.id));
            }
            devices.push(match d.kind {
                DeviceKind::MobileRobot => {
                    let speed = d.speed.unwrap_or(1.0);
                    if !(speed > 0.0 && speed <= 1.0) {
                        return invalid(format!("robot {} speed {speed} not in (0, 1]", d.id));
                    }
                    Device::Robot(MobileRobotSim {
                        id: d.id.clone(),
                        cell: d.cell,
                        heading: d.heading.unwrap_or(Heading::East),
                        speed,
                        velocity: (0, 0),
                        carrying: None,
                        progress: 0.0,
                        queue: VecDeque::new(),
                        failures: 0,
                    })
                }
                DeviceKind::RoboticArm => {
                    if let Some(c) = d.reach.iter().find(|c| !in_grid(**c)) {
                        return invalid(format!("arm {} reach cell {c} is outside the grid", d.id));
                    }
                    Device::Arm(RoboticArmSim {
                        id: d.id.clone(),
                        base: d.cell,
                        joints: arm_home(),
                        gripper: Gripper::Open,
                        reach: d.reach.clone(),
                        holding: None,
                        queue: VecDeque::new(),
                        failures: 0,
                    })
                }
            });
        }
        Ok(Self {
            width: fx.width,
            height: fx.height,
            seed: fx.seed,
            stations: fx.stations.clone(),
            pallets: fx.pallets.iter().map(|(id, c)| (id.clone(), PalletLocation::Cell(*c))).collect(),
            devices,
            tick: 0,
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn in_grid(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn device(&self, id: &str) -> Option<&Device> {
        self.devices.iter().find(|d| d.id() == id)
    }

    pub fn pallets(&self) -> &BTreeMap<String, PalletLocation> {
        &self.pallets
    }

    pub fn station_cell(&self, label: &str) -> Option<Cell> {
        self.stations.get(label).copied()
    }

    pub fn station_at(&self, cell: Cell) -> Option<&str> {
        self.stations.iter().find(|(_, c)| **c == cell).map(|(l, _)| l.as_str())
    }

    /// Station label when `cell` is a station, else `cell:x,y`.
    pub fn position_label(&self, cell: Cell) -> String {
        self.station_at(cell).map_or_else(|| cell.to_string(), str::to_string)
    }

    /// Resolve a station label or a `cell:x,y` label.
    pub fn resolve_label(&self, label: &str) -> Option<Cell> {
        if let Some(c) = self.station_cell(label) {
            return Some(c);
        }
        let (x, y) = label.strip_prefix("cell:")?.split_once(',')?;
        let c = Cell::new(x.trim().parse().ok()?, y.trim().parse().ok()?);
        self.in_grid(c).then_some(c)
    }

    fn holder_cell(&self, holder: &str) -> Option<Cell> {
        match self.device(holder)? {
            Device::Robot(r) => Some(r.cell),
            Device::Arm(a) => Some(a.tool_cell().unwrap_or(a.base)),
        }
    }

    pub fn pallet_cell(&self, pallet: &str) -> Option<Cell> {
        match self.pallets.get(pallet)? {
            PalletLocation::Cell(c) => Some(*c),
            PalletLocation::HeldBy(h) => self.holder_cell(h),
        }
    }

    /// A pallet lying on the floor of `cell` or riding a robot standing there.
    fn pallet_available_at(&self, cell: Cell) -> Option<String> {
        self.pallets.iter().find_map(|(id, loc)| {
            let here = match loc {
                PalletLocation::Cell(c) => *c == cell,
                PalletLocation::HeldBy(h) => {
                    matches!(self.device(h), Some(Device::Robot(r)) if r.cell == cell)
                }
            };
            here.then(|| id.clone())
        })
    }

    /// Queue a command. `Ok(false)` means the command would break an invariant and was dropped.
    pub fn apply(&mut self, cmd: &NativeCommand) -> Result<bool, WorldError> {
        let idx = self
            .devices
            .iter()
            .position(|d| d.id() == cmd.device)
            .ok_or_else(|| WorldError::UnknownDevice(cmd.device.clone()))?;
        if !self.devices[idx].kind().accepts(cmd.action.verb()) {
            return Ok(false);
        }
        let accepted = match (&self.devices[idx], &cmd.action) {
            (Device::Robot(_), NativeAction::GotoCell { cell }) => self.in_grid(*cell),
            (Device::Robot(_), NativeAction::SetVelocity { dx, dy }) => dx.abs() + dy.abs() <= 1,
            (Device::Arm(_), NativeAction::SetJoints { angles }) => {
                angles.len() == JOINT_COUNT && angles.iter().all(|a| a.is_finite() && a.abs() <= JOINT_LIMIT)
            }
            (Device::Arm(a), NativeAction::Grip) => {
                let queued_grip = a.queue.iter().any(|q| matches!(q, NativeAction::Grip));
                a.holding.is_none() && !queued_grip && a.reach.iter().any(|c| self.pallet_available_at(*c).is_some())
            }
            (Device::Arm(a), NativeAction::Release) => {
                a.holding.is_some() || a.queue.iter().any(|q| matches!(q, NativeAction::Grip))
            }
            _ => false,
        };
        if accepted {
            match &mut self.devices[idx] {
                Device::Robot(r) => r.queue.push_back(cmd.action.clone()),
                Device::Arm(a) => a.queue.push_back(cmd.action.clone()),
            }
        }
        Ok(accepted)
    }

    /// Advance one tick and observe every device.
    pub fn step(&mut self) -> Vec<Observation> {
        self.tick += 1;
        for idx in 0..self.devices.len() {
            match self.devices[idx].kind() {
                DeviceKind::MobileRobot => self.step_robot(idx),
                DeviceKind::RoboticArm => self.step_arm(idx),
            }
        }
        self.observe_all()
    }

    fn step_robot(&mut self, idx: usize) {
        let (width, height) = (self.width, self.height);
        let Device::Robot(r) = &mut self.devices[idx] else { unreachable!() };
        while let Some(NativeAction::SetVelocity { dx, dy }) = r.queue.front() {
            r.velocity = (*dx, *dy);
            r.queue.pop_front();
        }
        let arrived = match r.queue.front() {
            Some(NativeAction::GotoCell { cell }) => {
                let target = *cell;
                if r.cell != target {
                    r.progress += r.speed;
                    if r.progress >= 1.0 {
                        r.progress -= 1.0;
                        let next = r.cell.step_toward(target);
                        r.heading = Heading::between(r.cell, next).unwrap_or(r.heading);
                        r.cell = next;
                    }
                }
                if r.cell == target {
                    r.queue.pop_front();
                    r.progress = 0.0;
                    Some(target)
                } else {
                    None
                }
            }
            _ => {
                if r.velocity != (0, 0) {
                    let next = Cell::new(r.cell.x + r.velocity.0, r.cell.y + r.velocity.1);
                    if next.x >= 0 && next.y >= 0 && next.x < width && next.y < height {
                        r.heading = Heading::between(r.cell, next).unwrap_or(r.heading);
                        r.cell = next;
                    } else {
                        r.velocity = (0, 0);
                    }
                }
                None
            }
        };
        if let Some(cell) = arrived {
            let carrying = r.carrying.is_some();
            let robot_id = r.id.clone();
            if !carrying {
                let free = self
                    .pallets
                    .iter()
                    .find(|(_, loc)| **loc == PalletLocation::Cell(cell))
                    .map(|(id, _)| id.clone());
                if let Some(p) = free {
                    self.pallets.insert(p.clone(), PalletLocation::HeldBy(robot_id));
                    let Device::Robot(r) = &mut self.devices[idx] else { unreachable!() };
                    r.carrying = Some(p);
                }
            }
        }
    }

    fn step_arm(&mut self, idx: usize) {
        let Device::Arm(a) = &self.devices[idx] else { unreachable!() };
        let Some(action) = a.queue.front().cloned() else { return };
        let tool = a.tool_cell();
        match action {
            NativeAction::SetJoints { angles } => {
                let Device::Arm(a) = &mut self.devices[idx] else { unreachable!() };
                for (j, target) in a.joints.iter_mut().zip(&angles) {
                    let diff = target - *j;
                    *j = if diff.abs() <= JOINT_STEP { *target } else { *j + JOINT_STEP * diff.signum() };
                }
                if a.joints == angles {
                    a.queue.pop_front();
                }
            }
            NativeAction::Grip => {
                let candidate = tool.and_then(|c| self.pallet_available_at(c));
                let Device::Arm(a) = &self.devices[idx] else { unreachable!() };
                let ok = a.gripper == Gripper::Open && a.holding.is_none();
                match candidate.filter(|_| ok) {
                    Some(p) => {
                        if let Some(PalletLocation::HeldBy(prev)) = self.pallets.get(&p).cloned() {
                            if let Some(Device::Robot(r)) = self.devices.iter_mut().find(|d| d.id() == prev) {
                                r.carrying = None;
                            }
                        }
                        let Device::Arm(a) = &mut self.devices[idx] else { unreachable!() };
                        a.queue.pop_front();
                        a.gripper = Gripper::Closed;
                        a.holding = Some(p.clone());
                        let id = a.id.clone();
                        self.pallets.insert(p, PalletLocation::HeldBy(id));
                    }
                    None => self.fail_arm(idx),
                }
            }
            NativeAction::Release => {
                let Device::Arm(a) = &mut self.devices[idx] else { unreachable!() };
                match (a.holding.take(), tool) {
                    (Some(p), Some(cell)) => {
                        a.queue.pop_front();
                        a.gripper = Gripper::Open;
                        self.pallets.insert(p, PalletLocation::Cell(cell));
                    }
                    (held, _) => {
                        a.holding = held;
                        self.fail_arm(idx);
                    }
                }
            }
            _ => {
                let Device::Arm(a) = &mut self.devices[idx] else { unreachable!() };
                a.queue.pop_front();
            }
        }
    }

    fn fail_arm(&mut self, idx: usize) {
        let Device::Arm(a) = &mut self.devices[idx] else { unreachable!() };
        a.failures += 1;
        a.queue.clear();
    }

    pub fn observe_all(&self) -> Vec<Observation> {
        self.devices.iter().map(|d| self.observe_device(d)).collect()
    }

    pub fn observe(&self, device: &str) -> Option<Observation> {
        self.device(device).map(|d| self.observe_device(d))
    }

    fn observe_device(&self, d: &Device) -> Observation {
        let (payload, sensed_cells): (ObservationPayload, Vec<Cell>) = match d {
            Device::Robot(r) => (
                ObservationPayload::Pose { cell: r.cell, heading: r.heading, carrying: r.carrying.clone() },
                vec![r.cell],
            ),
            Device::Arm(a) => (
                ObservationPayload::JointStates {
                    base: a.base,
                    joints: a.joints.clone(),
                    gripper: a.gripper,
                    holding: a.holding.clone(),
                    tool_cell: a.tool_cell(),
                },
                a.reach.clone(),
            ),
        };
        let pallets = self
            .pallets
            .iter()
            .filter_map(|(id, loc)| {
                let cell = self.pallet_cell(id)?;
                let held_by = match loc {
                    PalletLocation::HeldBy(h) => Some(h.clone()),
                    PalletLocation::Cell(_) => None,
                };
                let sensed = held_by.as_deref() == Some(d.id()) || sensed_cells.contains(&cell);
                sensed.then(|| SensedPallet { id: id.clone(), cell, held_by })
            })
            .collect();
        Observation { device: d.id().to_string(), tick: self.tick, busy: d.busy(), failures: d.failures(), payload, pallets }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fixture() -> WarehouseWorld {
        let text = include_str!("../../../../fixtures/warehouse_world.json");
        WarehouseWorld::from_fixture(&WorldFixture::from_json(text).unwrap()).unwrap()
    }

    fn goto(dev: &str, x: i32, y: i32) -> NativeCommand {
        NativeCommand::new(dev, NativeAction::GotoCell { cell: Cell::new(x, y) })
    }

    #[test]
    fn idle_step_only_advances_tick() {
        let mut w = fixture();
        let before = w.observe_all();
        let after = w.step();
        assert_eq!(w.tick(), 1);
        for (b, a) in before.iter().zip(&after) {
            assert_eq!(Observation { tick: 1, ..b.clone() }, *a);
        }
    }

    #[test]
    fn adjacent_goal_arrives_in_one_step() {
        let mut w = fixture();
        assert!(w.apply(&goto("Turtlebot", 1, 0)).unwrap());
        w.step();
        assert_eq!(w.device("Turtlebot").unwrap().cell(), Cell::new(1, 0));
        assert!(!w.device("Turtlebot").unwrap().busy());
    }

    #[test]
    fn apply_rejections() {
        let mut w = fixture();
        assert!(w.apply(&goto("Turtlebot", 5, 3)).unwrap());
        assert!(!w.apply(&goto("Turtlebot", 6, 0)).unwrap());
        // nothing in the arm's reach yet
        assert!(!w.apply(&NativeCommand::new("RoboticArm", NativeAction::Grip)).unwrap());
        assert!(!w.apply(&NativeCommand::new("RoboticArm", NativeAction::Release)).unwrap());
        assert!(!w.apply(&NativeCommand::new("Turtlebot", NativeAction::Grip)).unwrap());
        assert!(!w.apply(&goto("RoboticArm", 1, 1)).unwrap());
        let bad = NativeCommand::new("RoboticArm", NativeAction::SetJoints { angles: vec![4.0, 0.0, 0.0, 0.0] });
        assert!(!w.apply(&bad).unwrap());
        assert_eq!(w.apply(&goto("Ghost", 0, 0)), Err(WorldError::UnknownDevice("Ghost".into())));
    }

    #[test]
    fn labels() {
        let w = fixture();
        assert_eq!(w.position_label(Cell::new(4, 2)), "P2");
        assert_eq!(w.position_label(Cell::new(0, 3)), "cell:0,3");
        assert_eq!(w.resolve_label("cell:0,3"), Some(Cell::new(0, 3)));
        assert_eq!(w.resolve_label("P1"), Some(Cell::new(1, 1)));
        assert_eq!(w.resolve_label("cell:9,9"), None);
    }

    #[test]
    fn joints_interpolate_in_fixed_steps() {
        let mut w = fixture();
        let target = vec![0.25, -0.05, 0.0, 0.0];
        w.apply(&NativeCommand::new("RoboticArm", NativeAction::SetJoints { angles: target.clone() })).unwrap();
        w.step();
        let Some(Device::Arm(a)) = w.device("RoboticArm") else { panic!() };
        assert_eq!(a.joints, vec![0.1, -0.05, 0.0, 0.0]);
        w.step();
        w.step();
        let Some(Device::Arm(a)) = w.device("RoboticArm") else { panic!() };
        assert_eq!(a.joints, target);
        assert!(a.queue.is_empty());
    }

    #[test]
    fn invalid_fixtures() {
        let text = include_str!("../../../../fixtures/warehouse_world.json");
        let mut fx = WorldFixture::from_json(text).unwrap();
        fx.stations.insert("P3".into(), Cell::new(1, 1));
        assert!(WarehouseWorld::from_fixture(&fx).is_err());
        let mut fx = WorldFixture::from_json(text).unwrap();
        fx.devices[0].speed = Some(2.0);
        assert!(WarehouseWorld::from_fixture(&fx).is_err());
    }
}
