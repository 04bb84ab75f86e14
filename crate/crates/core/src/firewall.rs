//! Distributed firewall: DSCP classification, budget policing, and
//! signature-based filtering at the VM edge.
//!
//! Classification stamps registered users' packets AF41, control-designated
//! high consumers CS7, and everyone else best-effort. Policing squeezes a
//! VM's traffic toward a guaranteed target share while a clamp is active:
//! the byte budget for one tick is
//! `capacity * (target + (100 - target) * (1 - clamp)) / 100`, so clamp 1
//! cuts the link to the target share and clamp 0 leaves it untouched.
//! Admission is by DSCP precedence, arrival order breaking ties, and stops
//! once the running total reaches the budget (at most one packet of
//! overshoot). The filtering stage runs behind policing and drops packets
//! whose signature matches an installed rule.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::traffic::SimPacket;
use crate::{UserId, VmId};

/// Diffserv codepoints the simulator traffics in. Precedence 1 is admitted
/// first: AF41 is exempt from policing while budget remains, CS7 outlives
/// every other squeezed class, best-effort drains last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dscp {
    Af41,
    Cs7,
    Af42,
    Af43,
    Af31,
    Af32,
    Af33,
    Af21,
    Af22,
    Af23,
    Af11,
    Af12,
    Af13,
    Be,
}

impl Dscp {
    pub const ALL: [Dscp; 14] = [
        Dscp::Af41,
        Dscp::Cs7,
        Dscp::Af42,
        Dscp::Af43,
        Dscp::Af31,
        Dscp::Af32,
        Dscp::Af33,
        Dscp::Af21,
        Dscp::Af22,
        Dscp::Af23,
        Dscp::Af11,
        Dscp::Af12,
        Dscp::Af13,
        Dscp::Be,
    ];

    /// Standard 6-bit codepoint value.
    pub fn code(self) -> u8 {
        match self {
            Dscp::Af41 => 34,
            Dscp::Cs7 => 56,
            Dscp::Af42 => 36,
            Dscp::Af43 => 38,
            Dscp::Af31 => 26,
            Dscp::Af32 => 28,
            Dscp::Af33 => 30,
            Dscp::Af21 => 18,
            Dscp::Af22 => 20,
            Dscp::Af23 => 22,
            Dscp::Af11 => 10,
            Dscp::Af12 => 12,
            Dscp::Af13 => 14,
            Dscp::Be => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Dscp> {
        Self::ALL.into_iter().find(|d| d.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            Dscp::Af41 => "AF41",
            Dscp::Cs7 => "CS7",
            Dscp::Af42 => "AF42",
            Dscp::Af43 => "AF43",
            Dscp::Af31 => "AF31",
            Dscp::Af32 => "AF32",
            Dscp::Af33 => "AF33",
            Dscp::Af21 => "AF21",
            Dscp::Af22 => "AF22",
            Dscp::Af23 => "AF23",
            Dscp::Af11 => "AF11",
            Dscp::Af12 => "AF12",
            Dscp::Af13 => "AF13",
            Dscp::Be => "BE",
        }
    }

    /// Admission rank, 1 (first) through 14 (last).
    pub fn precedence(self) -> u8 {
        Self::ALL.iter().position(|d| *d == self).unwrap() as u8 + 1
    }
}

/// Class assignment for one user: registration wins over high-consumer
/// designation, everyone else rides best-effort.
pub fn classify_dscp(
    user: UserId,
    registered: &HashSet<UserId>,
    high_consumers: &BTreeSet<UserId>,
) -> Dscp {
    if registered.contains(&user) {
        Dscp::Af41
    } else if high_consumers.contains(&user) {
        Dscp::Cs7
    } else {
        Dscp::Be
    }
}

/// Active traffic squeeze on one VM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Policy {
    pub target_pct: f64,
    pub clamp: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoliceOutcome {
    pub admitted: Vec<SimPacket>,
    pub policed: Vec<SimPacket>,
    pub achieved_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub passed: Vec<SimPacket>,
    pub blocked: Vec<SimPacket>,
}

/// Edge firewall shared by all VMs of one deployment.
#[derive(Debug, Clone, Default)]
pub struct Firewall {
    registered: HashSet<UserId>,
    high_consumers: HashMap<VmId, BTreeSet<UserId>>,
    rules: BTreeSet<u32>,
    policies: HashMap<VmId, Policy>,
}

impl Firewall {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_user(&mut self, user: UserId) {
        self.registered.insert(user);
    }

    pub fn is_registered(&self, user: UserId) -> bool {
        self.registered.contains(&user)
    }

    /// Replaces the preservation list for one VM with a fresh report.
    pub fn set_high_consumers(&mut self, vm: VmId, users: impl IntoIterator<Item = UserId>) {
        self.high_consumers.insert(vm, users.into_iter().collect());
    }

    pub fn high_consumers(&self, vm: VmId) -> Option<&BTreeSet<UserId>> {
        self.high_consumers.get(&vm)
    }

    /// Stamps DSCP classes in place.
    pub fn classify(&self, vm: VmId, packets: &mut [SimPacket]) {
        static EMPTY: BTreeSet<UserId> = BTreeSet::new();
        let high = self.high_consumers.get(&vm).unwrap_or(&EMPTY);
        for p in packets.iter_mut() {
            p.dscp = classify_dscp(p.user, &self.registered, high);
        }
    }

    pub fn set_policy(&mut self, vm: VmId, target_pct: f64, clamp: f64) {
        self.policies.insert(vm, Policy { target_pct, clamp });
    }

    pub fn policy(&self, vm: VmId) -> Option<Policy> {
        self.policies.get(&vm).copied()
    }

    pub fn clamp(&self, vm: VmId) -> f64 {
        self.policies.get(&vm).map_or(0.0, |p| p.clamp)
    }

    /// Percentage of the link the current policy leaves open.
    pub fn effective_budget_pct(&self, vm: VmId) -> f64 {
        match self.policies.get(&vm) {
            Some(p) => p.target_pct + (100.0 - p.target_pct) * (1.0 - p.clamp),
            None => 100.0,
        }
    }

    fn budget_bytes(&self, vm: VmId, capacity: u64) -> u64 {
        (capacity as f64 * self.effective_budget_pct(vm) / 100.0).floor() as u64
    }

    /// Admits packets by precedence until the tick budget is spent.
    pub fn police(&self, vm: VmId, mut packets: Vec<SimPacket>, capacity: u64) -> PoliceOutcome {
        let budget = self.budget_bytes(vm, capacity);
        packets.sort_by_key(|p| p.dscp.precedence());
        let mut out = PoliceOutcome::default();
        let mut spent = 0u64;
        for p in packets {
            if spent < budget {
                spent += p.size as u64;
                out.admitted.push(p);
            } else {
                out.policed.push(p);
            }
        }
        out.achieved_pct = 100.0 * spent as f64 / capacity as f64;
        out
    }

    pub fn add_rule(&mut self, signature: u32) {
        if signature != 0 {
            self.rules.insert(signature);
        }
    }

    pub fn rules(&self) -> impl Iterator<Item = u32> + '_ {
        self.rules.iter().copied()
    }

    pub fn has_rule(&self, signature: u32) -> bool {
        self.rules.contains(&signature)
    }

    /// Drops packets whose signature matches an installed rule.
    pub fn idps_filter(&self, packets: Vec<SimPacket>) -> FilterOutcome {
        let mut out = FilterOutcome::default();
        for p in packets {
            if self.rules.contains(&p.signature) {
                out.blocked.push(p);
            } else {
                out.passed.push(p);
            }
        }
        out
    }
}
