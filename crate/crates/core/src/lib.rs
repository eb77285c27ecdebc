//! Knowledge-graph mediated multi-agent system.
//!
//! A setup graph describes assets in five layers (asset, communication,
//! information, functional, system) plus a coordination protocol. Agents are
//! generated from it, talk FIPA-ACL over an in-process bus, drive simulated
//! devices through pluggable transports and keep a data graph in sync with
//! the simulated world.

pub mod kg_store;
pub mod rami;
pub mod vocab;
pub mod acl;
pub mod transports;
pub mod environments;
pub mod coordination;
pub mod agent_factory;
pub mod cli;
