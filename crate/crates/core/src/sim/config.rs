//! Run configuration: a flat `[section] key = value` text format plus the
//! two built-in demo scenarios.
//!
//! Sections `[sim]`, `[users]`, `[predictor]`, `[mining]` and `[cms]` each
//! appear at most once and override defaults key by key. `[attack]` and
//! `[pulse]` are repeatable; every occurrence opens a fresh entry and the
//! following keys fill it in. Blank lines and lines starting with `#` or
//! `;` are ignored.
//!
//! User identities are namespaced per VM: user `offset` on VM `v` is id
//! `v * 1000 + offset`, so offsets must stay below 1000.

use crate::cms::CmsConfig;
use crate::traffic::LEGIT_SIGNATURE_FLOOR;
use crate::{Tick, UserId, VmId};

pub const USER_NAMESPACE: u32 = 1_000;

/// Stable id for a user slot on one VM.
pub fn user_id(vm: VmId, offset: u32) -> UserId {
    UserId(vm.0 as u32 * USER_NAMESPACE + offset)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{field}: {msg}")]
    Invalid { field: &'static str, msg: String },
}

fn invalid(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, msg: msg.into() }
}

/// One hostile flow: `rate_pct` of the VM's capacity per tick, spread over
/// the listed user slots, every packet stamped with `signature`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackCfg {
    pub vm: u16,
    pub users: Vec<u32>,
    pub start: Tick,
    pub duration: u64,
    pub rate_pct: f64,
    pub signature: u32,
}

impl Default for AttackCfg {
    fn default() -> Self {
        AttackCfg { vm: 0, users: vec![900], start: 300, duration: 30, rate_pct: 40.0, signature: 7 }
    }
}

/// A deterministic periodic burst of legitimate demand on every VM: `pct`
/// extra load on ticks where `tick % period == phase`, until `until`.
/// Bursts keep the observation window's variance alive without random
/// noise, so runs stay exactly reproducible by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseCfg {
    pub user: u32,
    pub pct: f64,
    pub period: u64,
    pub phase: u64,
    pub until: Tick,
}

impl Default for PulseCfg {
    fn default() -> Self {
        PulseCfg { user: 990, pct: 2.0, period: 2, phase: 0, until: 299 }
    }
}

impl PulseCfg {
    pub fn active_at(&self, tick: Tick) -> bool {
        tick < self.until && tick % self.period == self.phase
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorCfg {
    pub x: f64,
    pub window: usize,
    pub hysteresis: u64,
    pub buffer: usize,
    pub report_period: u64,
    pub report_top: usize,
}

impl Default for PredictorCfg {
    fn default() -> Self {
        PredictorCfg { x: 0.99, window: 60, hysteresis: 5, buffer: 80, report_period: 30, report_top: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningCfg {
    pub theta: f64,
    pub latency: u64,
}

impl Default for MiningCfg {
    fn default() -> Self {
        MiningCfg { theta: crate::mining::DEFAULT_THETA, latency: crate::mining::DEFAULT_LATENCY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub vms: u16,
    pub duration: u64,
    pub seed: u64,
    /// Link capacity per VM, bytes per tick.
    pub capacity: u64,
    pub mtu: u32,
    pub loss: f64,
    pub users_per_vm: u32,
    pub user_mean_pct: f64,
    pub user_stddev_pct: f64,
    pub registered_per_vm: u32,
    pub predictor: PredictorCfg,
    pub mining: MiningCfg,
    pub cms: CmsConfig,
    pub pulses: Vec<PulseCfg>,
    pub attacks: Vec<AttackCfg>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            vms: 1,
            duration: 60,
            seed: 0,
            capacity: 1_000_000,
            mtu: 10_000,
            loss: 0.0,
            users_per_vm: 12,
            user_mean_pct: 2.5,
            user_stddev_pct: 0.0,
            registered_per_vm: 4,
            predictor: PredictorCfg::default(),
            mining: MiningCfg::default(),
            cms: CmsConfig::default(),
            pulses: Vec::new(),
            attacks: Vec::new(),
        }
    }
}

fn canonical_base() -> SimConfig {
    SimConfig {
        vms: 10,
        duration: 600,
        seed: 42,
        pulses: vec![PulseCfg::default()],
        ..SimConfig::default()
    }
}

/// Attack found within the mining deadline: a three-step escalation starting
/// at t = 300 reaching 40% aggregate, mined in 15 ticks, so the rule lands
/// and policing is cancelled early.
pub fn scenario_one() -> SimConfig {
    let mut cfg = canonical_base();
    cfg.mining.latency = 15;
    let base = AttackCfg::default();
    cfg.attacks = vec![
        AttackCfg { start: 300, duration: 45, rate_pct: 2.5, ..base.clone() },
        AttackCfg { start: 306, duration: 39, rate_pct: 1.2, ..base.clone() },
        AttackCfg { start: 312, duration: 33, rate_pct: 36.3, ..base },
    ];
    cfg
}

/// Attack not found within the mining deadline: one 40% wave at t = 300,
/// mined only after 45 ticks, so the firewall walks the full stepped
/// release before the rule arrives.
pub fn scenario_two() -> SimConfig {
    let mut cfg = canonical_base();
    cfg.mining.latency = 45;
    cfg.attacks = vec![AttackCfg { start: 300, duration: 31, rate_pct: 40.0, ..AttackCfg::default() }];
    cfg
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.vms == 0 {
            return Err(invalid("sim.vms", "at least one VM required"));
        }
        if self.duration == 0 {
            return Err(invalid("sim.duration", "must be positive"));
        }
        if self.capacity == 0 {
            return Err(invalid("sim.capacity", "must be positive"));
        }
        if self.mtu == 0 {
            return Err(invalid("sim.mtu", "must be positive"));
        }
        if !self.loss.is_finite() || !(0.0..=1.0).contains(&self.loss) {
            return Err(invalid("sim.loss", format!("{} outside 0..=1", self.loss)));
        }
        if self.users_per_vm > USER_NAMESPACE {
            return Err(invalid("users.per_vm", format!("at most {USER_NAMESPACE}")));
        }
        if !self.user_mean_pct.is_finite() || self.user_mean_pct < 0.0 {
            return Err(invalid("users.mean_pct", "must be finite and non-negative"));
        }
        if !self.user_stddev_pct.is_finite() || self.user_stddev_pct < 0.0 {
            return Err(invalid("users.stddev_pct", "must be finite and non-negative"));
        }
        if self.registered_per_vm > self.users_per_vm {
            return Err(invalid("users.registered", "more registered users than users"));
        }
        if !self.predictor.x.is_finite() || !(0.0..=1.0).contains(&self.predictor.x) {
            return Err(invalid("predictor.x", format!("{} outside 0..=1", self.predictor.x)));
        }
        if self.predictor.window < 2 {
            return Err(invalid("predictor.window", "needs at least two observations"));
        }
        if self.predictor.hysteresis == 0 {
            return Err(invalid("predictor.hysteresis", "must be positive"));
        }
        if self.predictor.buffer == 0 {
            return Err(invalid("predictor.buffer", "must be positive"));
        }
        if self.predictor.report_period == 0 {
            return Err(invalid("predictor.report_period", "must be positive"));
        }
        if self.predictor.report_top == 0 {
            return Err(invalid("predictor.report_top", "must be positive"));
        }
        if !self.mining.theta.is_finite() || !(self.mining.theta > 0.0 && self.mining.theta <= 1.0) {
            return Err(invalid("mining.theta", format!("{} outside (0, 1]", self.mining.theta)));
        }
        if self.cms.d_detect == 0 {
            return Err(invalid("cms.detect_deadline", "must be positive"));
        }
        if self.cms.release_step_ticks == 0 {
            return Err(invalid("cms.release_step", "must be positive"));
        }
        for (i, p) in self.pulses.iter().enumerate() {
            if p.user >= USER_NAMESPACE {
                return Err(invalid("pulse.user", format!("pulse {i}: offset past the VM namespace")));
            }
            if !p.pct.is_finite() || p.pct < 0.0 {
                return Err(invalid("pulse.pct", format!("pulse {i}: must be finite and non-negative")));
            }
            if p.period == 0 {
                return Err(invalid("pulse.period", format!("pulse {i}: must be positive")));
            }
            if p.phase >= p.period {
                return Err(invalid("pulse.phase", format!("pulse {i}: phase past the period")));
            }
        }
        for (i, a) in self.attacks.iter().enumerate() {
            if a.vm >= self.vms {
                return Err(invalid("attack.vm", format!("attack {i}: vm {} does not exist", a.vm)));
            }
            if a.users.is_empty() {
                return Err(invalid("attack.users", format!("attack {i}: needs at least one user")));
            }
            if let Some(&u) = a.users.iter().find(|&&u| u >= USER_NAMESPACE) {
                return Err(invalid("attack.users", format!("attack {i}: offset {u} past the VM namespace")));
            }
            if a.duration == 0 {
                return Err(invalid("attack.duration", format!("attack {i}: must be positive")));
            }
            if !a.rate_pct.is_finite() || a.rate_pct <= 0.0 {
                return Err(invalid("attack.rate_pct", format!("attack {i}: must be positive")));
            }
            if a.signature == 0 || a.signature >= LEGIT_SIGNATURE_FLOOR {
                return Err(invalid(
                    "attack.signature",
                    format!("attack {i}: must be in 1..{LEGIT_SIGNATURE_FLOOR} so no legitimate burst can carry it"),
                ));
            }
        }
        Ok(())
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Parse { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| parse_err(line, format!("bad value {raw:?} for {key}")))
}

fn parse_list(line: usize, key: &str, raw: &str) -> Result<Vec<u32>, ConfigError> {
    raw.split(',').map(|part| parse_num(line, key, part.trim())).collect()
}

/// Parses configuration text. The result still needs [`SimConfig::validate`]
/// before a run; `parse` only checks shape, not semantics.
pub fn parse(text: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    let mut section: Option<String> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line, "unterminated section header"))?
                .trim()
                .to_string();
            match name.as_str() {
                "sim" | "users" | "predictor" | "mining" | "cms" => {}
                "attack" => cfg.attacks.push(AttackCfg::default()),
                "pulse" => cfg.pulses.push(PulseCfg::default()),
                other => return Err(parse_err(line, format!("unknown section [{other}]"))),
            }
            section = Some(name);
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected key = value, got {trimmed:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let section = section
            .as_deref()
            .ok_or_else(|| parse_err(line, format!("key {key:?} before any [section]")))?;

        match (section, key) {
            ("sim", "vms") => cfg.vms = parse_num(line, key, value)?,
            ("sim", "duration") => cfg.duration = parse_num(line, key, value)?,
            ("sim", "seed") => cfg.seed = parse_num(line, key, value)?,
            ("sim", "capacity") => cfg.capacity = parse_num(line, key, value)?,
            ("sim", "mtu") => cfg.mtu = parse_num(line, key, value)?,
            ("sim", "loss") => cfg.loss = parse_num(line, key, value)?,
            ("users", "per_vm") => cfg.users_per_vm = parse_num(line, key, value)?,
            ("users", "mean_pct") => cfg.user_mean_pct = parse_num(line, key, value)?,
            ("users", "stddev_pct") => cfg.user_stddev_pct = parse_num(line, key, value)?,
            ("users", "registered") => cfg.registered_per_vm = parse_num(line, key, value)?,
            ("predictor", "x") => cfg.predictor.x = parse_num(line, key, value)?,
            ("predictor", "window") => cfg.predictor.window = parse_num(line, key, value)?,
            ("predictor", "hysteresis") => cfg.predictor.hysteresis = parse_num(line, key, value)?,
            ("predictor", "buffer") => cfg.predictor.buffer = parse_num(line, key, value)?,
            ("predictor", "report_period") => cfg.predictor.report_period = parse_num(line, key, value)?,
            ("predictor", "report_top") => cfg.predictor.report_top = parse_num(line, key, value)?,
            ("mining", "theta") => cfg.mining.theta = parse_num(line, key, value)?,
            ("mining", "latency") => cfg.mining.latency = parse_num(line, key, value)?,
            ("cms", "detect_deadline") => cfg.cms.d_detect = parse_num(line, key, value)?,
            ("cms", "release_step") => cfg.cms.release_step_ticks = parse_num(line, key, value)?,
            ("cms", "alloha_period") => cfg.cms.alloha_period = parse_num(line, key, value)?,
            ("attack", _) => {
                let a = cfg.attacks.last_mut().expect("attack section pushed an entry");
                match key {
                    "vm" => a.vm = parse_num(line, key, value)?,
                    "users" => a.users = parse_list(line, key, value)?,
                    "start" => a.start = parse_num(line, key, value)?,
                    "duration" => a.duration = parse_num(line, key, value)?,
                    "rate_pct" => a.rate_pct = parse_num(line, key, value)?,
                    "signature" => a.signature = parse_num(line, key, value)?,
                    other => return Err(parse_err(line, format!("unknown key {other:?} in [attack]"))),
                }
            }
            ("pulse", _) => {
                let p = cfg.pulses.last_mut().expect("pulse section pushed an entry");
                match key {
                    "user" => p.user = parse_num(line, key, value)?,
                    "pct" => p.pct = parse_num(line, key, value)?,
                    "period" => p.period = parse_num(line, key, value)?,
                    "phase" => p.phase = parse_num(line, key, value)?,
                    "until" => p.until = parse_num(line, key, value)?,
                    other => return Err(parse_err(line, format!("unknown key {other:?} in [pulse]"))),
                }
            }
            (section, key) => {
                return Err(parse_err(line, format!("unknown key {key:?} in [{section}]")));
            }
        }
    }
    Ok(cfg)
}
