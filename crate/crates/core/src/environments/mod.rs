//! Simulated warehouse environment and the connection components that link
//! agents to simulated devices.

pub mod connection;
pub mod world;

pub use connection::{
    invocation_message, position_label, publish_state, seed_pallets, translate, ConnectionComponent, EnvError,
    InvocationStatus, ObservationMessage, GRIPPER_CONTROL, MOTION_CONTROL,
};
pub use world::{
    Cell, Device, DeviceKind, NativeAction, NativeCommand, Observation, ObservationPayload, PalletLocation, Verb,
    WarehouseWorld, WorldError, WorldFixture,
};
