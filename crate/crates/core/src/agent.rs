//! Per-VM monitoring agent.
//!
//! Each tick the agent classifies the observed load against thresholds
//! built from its predictor's current estimate, then folds the observation
//! into the estimate. Escalation is immediate and announces only the level
//! actually reached; the agent captures packets while it is at least at the
//! first alert level, and entering the second or third band ships that
//! capture so the control center has material to mine. Stepping back down
//! is damped: it takes `hysteresis` consecutive ticks classified below the
//! current level to drop one level, and the capture is discarded once the
//! agent is back to normal.
//!
//! The agent saves its predictor state the moment it leaves normal and
//! reinstates it when the control center sends a restore directive, so an
//! attack never poisons the baseline it is judged against.
//!
//! Every outgoing message is stamped from the agent's own strictly
//! increasing sequence counter and its authentication key.

use std::collections::{HashMap, VecDeque};

use crate::payload::{AckOp, Body, MAX_PACKETS_PER_MESSAGE};
use crate::predictor::{classify, AgingPredictor, AlertLevel, AlertThresholds};
use crate::traffic::{self, SimPacket};
use crate::wire::{ControlMessage, MsgKind, SourceId, PROTO_TCP};
use crate::{Tick, UserId, VmId};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub x: f64,
    pub window: usize,
    pub hysteresis: u64,
    pub buffer_cap: usize,
    pub report_period: u64,
    pub report_top: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            x: crate::predictor::DEFAULT_X,
            window: crate::predictor::DEFAULT_WINDOW,
            hysteresis: 5,
            buffer_cap: 10_000,
            report_period: 30,
            report_top: 10,
        }
    }
}

/// What one tick of monitoring produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub level: AlertLevel,
    /// Prediction the tick was classified against; zero until seeded.
    pub alpha: f64,
    pub messages: Vec<ControlMessage>,
}

#[derive(Debug, Clone)]
pub struct Agent {
    vm: VmId,
    cfg: AgentConfig,
    auth_key: u32,
    seq: u16,
    predictor: AgingPredictor,
    level: AlertLevel,
    below_streak: u64,
    buffer: VecDeque<SimPacket>,
    consumption: HashMap<UserId, u64>,
    bandwidth_notices: u64,
}

fn one_below(level: AlertLevel) -> AlertLevel {
    match level {
        AlertLevel::Level3 => AlertLevel::Level2,
        AlertLevel::Level2 => AlertLevel::Level1,
        AlertLevel::Level1 | AlertLevel::Normal => AlertLevel::Normal,
    }
}

impl Agent {
    pub fn new(vm: VmId, cfg: AgentConfig, auth_key: u32) -> Self {
        let predictor = AgingPredictor::new(cfg.x, cfg.window).expect("config validated");
        Agent {
            vm,
            cfg,
            auth_key,
            seq: 0,
            predictor,
            level: AlertLevel::Normal,
            below_streak: 0,
            buffer: VecDeque::new(),
            consumption: HashMap::new(),
            bandwidth_notices: 0,
        }
    }

    pub fn vm(&self) -> VmId {
        self.vm
    }

    pub fn level(&self) -> AlertLevel {
        self.level
    }

    pub fn predictor(&self) -> &AgingPredictor {
        &self.predictor
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn bandwidth_notices(&self) -> u64 {
        self.bandwidth_notices
    }

    fn msg(&mut self, kind: MsgKind, body: &Body) -> ControlMessage {
        let seq = self.seq;
        self.seq = self.seq.wrapping_add(1);
        ControlMessage {
            source: SourceId::Agent,
            kind,
            seq,
            auth_key: self.auth_key,
            next_proto: PROTO_TCP,
            payload: body.encode().expect("agent bodies stay within wire limits"),
        }
    }

    fn thresholds(&self) -> Option<AlertThresholds> {
        let alpha = self.predictor.alpha().ok()?;
        let sigma = self.predictor.sigma().ok()?;
        Some(AlertThresholds::derive(alpha, sigma).expect("alpha stays on the load scale"))
    }

    fn ship_buffer(&mut self) -> ControlMessage {
        let skip = self.buffer.len().saturating_sub(MAX_PACKETS_PER_MESSAGE);
        let packets: Vec<SimPacket> = self.buffer.iter().skip(skip).copied().collect();
        let body = Body::Packets { vm: self.vm, packets };
        self.msg(MsgKind::TrafficBuffer, &body)
    }

    /// Observes one tick of traffic. `load_pct` is the load that reached the
    /// VM's link; `delivered` is the packet stream behind it.
    pub fn step(&mut self, tick: Tick, load_pct: f64, delivered: &[SimPacket]) -> StepOutcome {
        let mut messages = Vec::new();

        for p in delivered {
            *self.consumption.entry(p.user).or_insert(0) += p.size as u64;
        }

        let alpha = self.predictor.alpha().unwrap_or(0.0);
        let observed = match self.thresholds() {
            Some(t) => classify(load_pct, &t),
            None => AlertLevel::Normal,
        };

        let crossed = observed > self.level;
        if crossed {
            if self.level == AlertLevel::Normal || !self.predictor.has_snapshot() {
                let _ = self.predictor.snapshot_alpha();
            }
            self.level = observed;
            self.below_streak = 0;
        } else if observed < self.level {
            self.below_streak += 1;
            if self.below_streak >= self.cfg.hysteresis {
                self.level = one_below(self.level);
                self.below_streak = 0;
            }
        } else {
            self.below_streak = 0;
        }

        if self.level >= AlertLevel::Level1 {
            for p in delivered {
                self.buffer.push_back(*p);
            }
            while self.buffer.len() > self.cfg.buffer_cap {
                self.buffer.pop_front();
            }
        } else {
            self.buffer.clear();
        }

        if crossed {
            let alert = Body::Alert { vm: self.vm, load: load_pct, alpha };
            match self.level {
                AlertLevel::Level3 => {
                    // the capture goes out ahead of the top alert so the
                    // mining job is already open when the alarm lands
                    let ship = self.ship_buffer();
                    messages.push(ship);
                    messages.push(self.msg(MsgKind::Alert3, &alert));
                }
                AlertLevel::Level2 => {
                    messages.push(self.msg(MsgKind::Alert2, &alert));
                    let ship = self.ship_buffer();
                    messages.push(ship);
                }
                AlertLevel::Level1 => messages.push(self.msg(MsgKind::Alert1, &alert)),
                AlertLevel::Normal => unreachable!("crossings end above normal"),
            }
        }

        if (tick + 1) % self.cfg.report_period == 0 {
            let users = traffic::top_consumers(&self.consumption, self.cfg.report_top);
            let body = Body::HighUsers { vm: self.vm, users };
            messages.push(self.msg(MsgKind::HighUsersReport, &body));
            self.consumption.clear();
        }

        self.predictor.update(load_pct).expect("link load is clamped to the scale");
        StepOutcome { level: self.level, alpha, messages }
    }

    /// Applies a control-center message addressed to this agent, replying
    /// where the protocol calls for it.
    pub fn handle(&mut self, kind: MsgKind, body: &Body) -> Vec<ControlMessage> {
        match (kind, body) {
            (MsgKind::Alloha, _) => {
                let ack = Body::Ack { op: AckOp::Plain, vm: self.vm };
                vec![self.msg(MsgKind::Ack, &ack)]
            }
            (MsgKind::Ack, Body::Ack { op: AckOp::RestoreAlpha, .. }) => {
                let _ = self.predictor.restore_alpha();
                Vec::new()
            }
            (MsgKind::BandwidthChangeNotice, _) => {
                self.bandwidth_notices += 1;
                Vec::new()
            }
            _ => Vec::new(),
        }
    }
}
