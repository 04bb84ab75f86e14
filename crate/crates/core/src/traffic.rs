//! Workload synthesis for the simulated VMs.
//!
//! Each VM hosts a set of users whose per-tick demand is drawn from a
//! normal distribution and chopped into MTU-sized packets. Attack flows are
//! described separately as fixed-rate injections over a tick range. Every
//! packet carries a signature token standing in for payload content: the
//! legitimate ones are random draws from a wide range, while all packets of
//! one attack share the attack's token.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::firewall::Dscp;
use crate::{Tick, UserId, VmId};

/// Signature tokens below this value are reserved for configured attacks,
/// so a legitimate draw can never collide with an attack token.
pub const LEGIT_SIGNATURE_FLOOR: u32 = 1_000;

/// One packet inside the simulator. `is_attack` is ground truth used only by
/// metrics; detection logic never reads it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimPacket {
    pub user: UserId,
    pub vm: VmId,
    pub size: u32,
    pub dscp: Dscp,
    pub is_attack: bool,
    pub signature: u32,
}

/// Demand model for a single user on a VM. Demand is a percentage of the
/// VM's capacity per tick; `registered` marks accounting-service membership.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserProfile {
    pub id: UserId,
    pub registered: bool,
    pub mean_pct: f64,
    pub stddev_pct: f64,
}

/// Fixed-rate hostile flow aimed at one VM, spread evenly over a set of
/// attacker users.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub vm: VmId,
    pub users: Vec<UserId>,
    pub start: Tick,
    pub duration: u64,
    pub rate_pct: f64,
    pub signature: u32,
}

impl AttackSpec {
    pub fn active_at(&self, tick: Tick) -> bool {
        tick >= self.start && tick - self.start < self.duration
    }
}

/// Splits `bytes` of demand into packets of at most `mtu` bytes, the last
/// one carrying the remainder.
pub fn packetize(
    user: UserId,
    vm: VmId,
    bytes: u64,
    mtu: u32,
    signature: u32,
    is_attack: bool,
    out: &mut Vec<SimPacket>,
) {
    assert!(mtu > 0, "mtu must be positive");
    let mut left = bytes;
    while left > 0 {
        let size = left.min(mtu as u64) as u32;
        out.push(SimPacket { user, vm, size, dscp: Dscp::Be, is_attack, signature });
        left -= size as u64;
    }
}

fn pct_to_bytes(pct: f64, capacity: u64) -> u64 {
    (pct.max(0.0) / 100.0 * capacity as f64).round() as u64
}

/// Produces one tick of traffic for a VM: every user's demand in profile
/// order, then every active attack in declaration order. Legitimate bursts
/// get a fresh random signature; attack packets share their attack's token.
pub fn generate_tick<R: Rng>(
    tick: Tick,
    vm: VmId,
    users: &[UserProfile],
    attacks: &[AttackSpec],
    capacity: u64,
    mtu: u32,
    rng: &mut R,
) -> Vec<SimPacket> {
    let mut out = Vec::new();
    for u in users {
        let pct = if u.stddev_pct > 0.0 {
            let dist = Normal::new(u.mean_pct, u.stddev_pct)
                .expect("normal parameters validated by config");
            dist.sample(rng)
        } else {
            u.mean_pct
        };
        let bytes = pct_to_bytes(pct, capacity);
        if bytes > 0 {
            let sig = rng.gen_range(LEGIT_SIGNATURE_FLOOR..u32::MAX);
            packetize(u.id, vm, bytes, mtu, sig, false, &mut out);
        }
    }
    for a in attacks {
        if a.vm != vm || !a.active_at(tick) || a.users.is_empty() {
            continue;
        }
        let total = pct_to_bytes(a.rate_pct, capacity);
        let per = total / a.users.len() as u64;
        let rem = total % a.users.len() as u64;
        for (i, &user) in a.users.iter().enumerate() {
            let extra = if (i as u64) < rem { 1 } else { 0 };
            packetize(user, vm, per + extra, mtu, a.signature, true, &mut out);
        }
    }
    out
}

pub fn total_bytes(packets: &[SimPacket]) -> u64 {
    packets.iter().map(|p| p.size as u64).sum()
}

/// Offered load as a percentage of link capacity, clamped to the 0..=100
/// scale the predictor accepts.
pub fn offered_pct(bytes: u64, capacity: u64) -> f64 {
    assert!(capacity > 0, "capacity must be positive");
    (100.0 * bytes as f64 / capacity as f64).min(100.0)
}

/// The `n` heaviest users by cumulative bytes, descending; ties broken by
/// ascending user id so reports are deterministic.
pub fn top_consumers(usage: &HashMap<UserId, u64>, n: usize) -> Vec<(UserId, u64)> {
    let mut rows: Vec<(UserId, u64)> = usage.iter().map(|(&u, &b)| (u, b)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0 .0.cmp(&b.0 .0)));
    rows.truncate(n);
    rows
}
