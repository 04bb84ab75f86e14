//! Data mining center: offline pattern extraction from shipped traffic
//! buffers.
//!
//! The heuristic counts signature tokens across the buffered packets and
//! reports the most frequent one, provided its share of the buffer reaches
//! the support threshold. Legitimate bursts carry near-unique random tokens,
//! so a flood repeating one token stands out by count; a buffer of diverse
//! tokens yields no verdict. Analysis takes wall-clock time, modeled as a
//! fixed latency between receiving a buffer and the verdict becoming
//! available.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::traffic::SimPacket;
use crate::{Tick, UserId, VmId};

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_LATENCY: u64 = 15;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MiningError {
    #[error("cannot analyze an empty buffer")]
    EmptyBuffer,
    #[error("support threshold {0} outside (0, 1]")]
    BadTheta(f64),
}

/// Positive mining verdict: the dominant token, who sent it, and the share
/// of the buffer it covered.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSignature {
    pub token: u32,
    pub sources: BTreeSet<UserId>,
    pub support: f64,
}

/// Counts tokens and returns the dominant one if its share of `packets`
/// reaches `theta`. Ties break toward the smallest token so the verdict is
/// permutation-invariant.
pub fn analyze(packets: &[SimPacket], theta: f64) -> Result<Option<AttackSignature>, MiningError> {
    if packets.is_empty() {
        return Err(MiningError::EmptyBuffer);
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(MiningError::BadTheta(theta));
    }
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for p in packets {
        *counts.entry(p.signature).or_default() += 1;
    }
    let (&token, &count) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .expect("non-empty buffer");
    let support = count as f64 / packets.len() as f64;
    if support < theta {
        return Ok(None);
    }
    let sources =
        packets.iter().filter(|p| p.signature == token).map(|p| p.user).collect();
    Ok(Some(AttackSignature { token, sources, support }))
}

#[derive(Debug, Clone)]
struct Job {
    sample: Vec<SimPacket>,
    done_at: Tick,
}

/// Verdict for one finished job.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningOutcome {
    pub vm: VmId,
    pub verdict: Option<AttackSignature>,
}

/// Queue of per-VM analysis jobs with a fixed processing latency. A new
/// buffer for a VM replaces any job still in flight, so each VM has at most
/// one pending job and gets exactly one verdict per accepted buffer.
#[derive(Debug, Clone)]
pub struct MiningCenter {
    latency: u64,
    theta: f64,
    jobs: BTreeMap<VmId, Job>,
    completed: u64,
}

impl MiningCenter {
    pub fn new(latency: u64, theta: f64) -> Self {
        Self { latency, theta, jobs: BTreeMap::new(), completed: 0 }
    }

    pub fn receive(&mut self, now: Tick, vm: VmId, sample: Vec<SimPacket>) {
        self.jobs.insert(vm, Job { sample, done_at: now + self.latency });
    }

    /// Finished verdicts in VM order. Empty samples yield a negative verdict
    /// rather than an error so a quiet buffer ship still gets an answer.
    pub fn poll(&mut self, now: Tick) -> Vec<MiningOutcome> {
        let due: Vec<VmId> =
            self.jobs.iter().filter(|(_, j)| j.done_at <= now).map(|(&vm, _)| vm).collect();
        let mut out = Vec::new();
        for vm in due {
            let job = self.jobs.remove(&vm).expect("job present");
            let verdict = if job.sample.is_empty() {
                None
            } else {
                analyze(&job.sample, self.theta).expect("theta validated at construction")
            };
            self.completed += 1;
            out.push(MiningOutcome { vm, verdict });
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.jobs.len()
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }
}

impl Default for MiningCenter {
    fn default() -> Self {
        Self::new(DEFAULT_LATENCY, DEFAULT_THETA)
    }
}
