//! Control-plane message bus between the simulated components.
//!
//! The topology is a star: agents, firewall, mining and IDPS all talk to
//! the control center. Delivery takes one tick. Loss is decided per message
//! by hashing `(seed, send tick, sender, seq)`, so a run with the same seed
//! and loss rate drops exactly the same messages every time. Deliveries due
//! on one tick come out sorted by source code, sender and sequence number,
//! which pins a total order no matter how senders were scheduled.

use std::fmt;

use crate::wire::{ControlMessage, SourceId};
use crate::{Tick, VmId};

/// Addressable parties on the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Cms,
    Firewall,
    Mining,
    Idps,
    Agent(VmId),
}

impl Endpoint {
    /// Stable numeric identity used for key derivation and loss hashing.
    /// Agents start at 16 so fixed components can grow without collisions.
    pub fn ordinal(self) -> u64 {
        match self {
            Endpoint::Cms => 0,
            Endpoint::Firewall => 1,
            Endpoint::Mining => 2,
            Endpoint::Idps => 3,
            Endpoint::Agent(vm) => 16 + vm.0 as u64,
        }
    }

    pub fn source_id(self) -> SourceId {
        match self {
            Endpoint::Cms => SourceId::ControlCenter,
            Endpoint::Firewall => SourceId::Firewall,
            Endpoint::Mining => SourceId::MiningCenter,
            Endpoint::Idps => SourceId::Idps,
            Endpoint::Agent(_) => SourceId::Agent,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Cms => write!(f, "cms"),
            Endpoint::Firewall => write!(f, "firewall"),
            Endpoint::Mining => write!(f, "mining"),
            Endpoint::Idps => write!(f, "idps"),
            Endpoint::Agent(vm) => write!(f, "agent{}", vm.0),
        }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-endpoint authentication keys fanned out from one base secret.
#[derive(Debug, Clone, Copy)]
pub struct KeyTable {
    base: u64,
}

impl KeyTable {
    pub fn new(base: u64) -> Self {
        KeyTable { base }
    }

    pub fn key_for(&self, ep: Endpoint) -> u32 {
        splitmix64(self.base ^ splitmix64(ep.ordinal())) as u32
    }
}

/// A control message in transit.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub from: Endpoint,
    pub to: Endpoint,
    pub msg: ControlMessage,
}

/// One-tick-latency bus with seeded, per-message loss.
#[derive(Debug, Clone)]
pub struct Bus {
    seed: u64,
    loss_rate: f64,
    queue: Vec<(Tick, Envelope)>,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

impl Bus {
    pub fn new(seed: u64, loss_rate: f64) -> Self {
        assert!((0.0..=1.0).contains(&loss_rate), "loss rate outside 0..=1");
        Bus { seed, loss_rate, queue: Vec::new(), sent: 0, delivered: 0, dropped: 0 }
    }

    fn drops(&self, tick: Tick, env: &Envelope) -> bool {
        if self.loss_rate <= 0.0 {
            return false;
        }
        let mut h = splitmix64(self.seed);
        h = splitmix64(h ^ tick);
        h = splitmix64(h ^ env.from.ordinal());
        h = splitmix64(h ^ env.msg.seq as u64);
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        unit < self.loss_rate
    }

    /// Accepts a message sent during `tick` for delivery at `tick + 1`,
    /// unless the loss draw eats it.
    pub fn send(&mut self, tick: Tick, env: Envelope) {
        self.sent += 1;
        if self.drops(tick, &env) {
            self.dropped += 1;
            return;
        }
        self.queue.push((tick + 1, env));
    }

    /// Removes and returns everything due by `tick`, in a fixed total order.
    pub fn deliver(&mut self, tick: Tick) -> Vec<Envelope> {
        let mut due = Vec::new();
        let mut rest = Vec::with_capacity(self.queue.len());
        for (at, env) in self.queue.drain(..) {
            if at <= tick {
                due.push(env);
            } else {
                rest.push((at, env));
            }
        }
        self.queue = rest;
        due.sort_by_key(|e| (e.msg.source.code(), e.from.ordinal(), e.msg.seq));
        self.delivered += due.len() as u64;
        due
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}
