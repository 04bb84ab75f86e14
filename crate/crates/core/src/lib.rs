//! Deterministic simulator for bandwidth-anomaly DDoS detection in virtualized
//! networks: an aging-based load predictor drives a three-level alert protocol
//! between per-VM agents and a central management server, which coordinates
//! signature mining, IDPS rule pushes and QoS-aware policing at the firewall.
//!
//! Everything is driven by a discrete one-second tick; runs are reproducible
//! byte-for-byte from a master seed.

pub mod agent;
pub mod bus;
pub mod cms;
pub mod firewall;
pub mod mining;
pub mod payload;
pub mod predictor;
pub mod sim;
pub mod traffic;
pub mod wire;

/// Simulation time, in one-second ticks.
pub type Tick = u64;

/// Identifies a subscriber across the whole deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u32);

/// Identifies a monitored virtual machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VmId(pub u16);

impl std::fmt::Display for UserId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl std::fmt::Display for VmId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "vm{}", self.0)
    }
}
