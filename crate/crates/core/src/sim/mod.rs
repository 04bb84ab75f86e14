//! Deterministic discrete-event engine tying the components together.
//!
//! Each tick runs a fixed pipeline: (0) the bus delivers last tick's
//! messages, which are authenticated, decoded and routed to per-component
//! inboxes; (1) the firewall applies policing commands, rule updates and
//! consumption reports; (2) every VM generates traffic, runs it through
//! classify → police → IDPS filter, hands control messages to its agent
//! and steps the agent on the load that survived enforcement; (3) agent
//! output goes onto the bus in VM order; (4) the firewall reports budget
//! changes; (5) the management server handles its inbox and runs its
//! housekeeping; (6) the mining center ingests samples and publishes due
//! verdicts; (7) a metrics row is appended per VM.
//!
//! Stage 2 can run across VMs in parallel: every VM owns an independent
//! random stream and the results are merged back in VM order, so parallel
//! and sequential runs are byte-identical.

pub mod config;
pub mod metrics;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::agent::{Agent, AgentConfig};
use crate::bus::{Bus, Endpoint, Envelope, KeyTable};
use crate::cms::{Cms, CmsStats};
use crate::firewall::{Dscp, Firewall};
use crate::mining::MiningCenter;
use crate::payload::Body;
use crate::sim::config::{user_id, ConfigError, SimConfig};
use crate::sim::metrics::Row;
use crate::traffic::{self, AttackSpec, SimPacket, UserProfile};
use crate::wire::{authenticate, ControlMessage, MsgKind, SourceId, PROTO_TCP};
use crate::{Tick, VmId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

/// Byte-exact accounting for one (tick, vm) cell, kept alongside the
/// percentage-based metrics row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowRow {
    pub tick: Tick,
    pub vm: u16,
    pub offered: u64,
    /// Bytes that survived both policing and the IDPS filter.
    pub admitted: u64,
    pub policed: u64,
    pub blocked: u64,
    pub blocked_packets: u64,
    pub attack_admitted: u64,
    pub af41_offered: u64,
    pub af41_admitted: u64,
}

/// One message accepted onto the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    pub tick: Tick,
    pub from: Endpoint,
    pub to: Endpoint,
    pub kind: MsgKind,
    pub seq: u16,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<Row>,
    pub flows: Vec<FlowRow>,
    pub events: Vec<EventRecord>,
    pub sent_by_kind: BTreeMap<&'static str, u64>,
    pub bus_sent: u64,
    pub bus_delivered: u64,
    pub bus_dropped: u64,
    pub auth_failures: u64,
    pub decode_failures: u64,
    pub cms: CmsStats,
    pub mining_completed: u64,
}

impl RunOutput {
    pub fn to_csv(&self) -> String {
        metrics::to_csv(&self.rows)
    }

    /// Ticks at which `kind` went from `from` onto the bus.
    pub fn event_ticks(&self, from: Endpoint, kind: MsgKind) -> Vec<Tick> {
        self.events.iter().filter(|e| e.from == from && e.kind == kind).map(|e| e.tick).collect()
    }

    /// The series for one VM, tick-ordered.
    pub fn vm_rows(&self, vm: VmId) -> Vec<Row> {
        self.rows.iter().copied().filter(|r| r.vm == vm.0).collect()
    }
}

/// Runs `cfg` to completion. Equal configs produce equal outputs in either
/// execution mode.
pub fn run(cfg: &SimConfig, mode: ExecMode) -> Result<RunOutput, ConfigError> {
    Engine::new(cfg.clone(), mode)?.run()
}

struct VmTickResult {
    offered: u64,
    policed: u64,
    blocked: u64,
    passed: u64,
    blocked_packets: u64,
    attack_passed: u64,
    af41_offered: u64,
    af41_admitted: u64,
    clamp: f64,
    alpha: f64,
    level: u8,
    messages: Vec<ControlMessage>,
}

fn af41_bytes(packets: &[SimPacket]) -> u64 {
    packets.iter().filter(|p| p.dscp == Dscp::Af41).map(|p| p.size as u64).sum()
}

#[allow(clippy::too_many_arguments)]
fn vm_stage(
    tick: Tick,
    vm: VmId,
    cfg: &SimConfig,
    base_users: &[UserProfile],
    pulse_users: &[UserProfile],
    attacks: &[AttackSpec],
    firewall: &Firewall,
    agent: &mut Agent,
    rng: &mut ChaCha12Rng,
    inbox: &[(MsgKind, Body)],
) -> VmTickResult {
    let mut users = base_users.to_vec();
    for (pulse, profile) in cfg.pulses.iter().zip(pulse_users) {
        if pulse.active_at(tick) {
            users.push(*profile);
        }
    }

    let mut packets = traffic::generate_tick(tick, vm, &users, attacks, cfg.capacity, cfg.mtu, rng);
    firewall.classify(vm, &mut packets);
    let offered = traffic::total_bytes(&packets);
    let af41_offered = af41_bytes(&packets);

    let policed = firewall.police(vm, packets, cfg.capacity);
    let policed_bytes = traffic::total_bytes(&policed.policed);
    let filtered = firewall.idps_filter(policed.admitted);
    let blocked_bytes = traffic::total_bytes(&filtered.blocked);
    let passed_bytes = traffic::total_bytes(&filtered.passed);
    let attack_passed =
        filtered.passed.iter().filter(|p| p.is_attack).map(|p| p.size as u64).sum();

    let mut messages = Vec::new();
    for (kind, body) in inbox {
        messages.extend(agent.handle(*kind, body));
    }
    let outcome = agent.step(tick, traffic::offered_pct(passed_bytes, cfg.capacity), &filtered.passed);
    messages.extend(outcome.messages);

    VmTickResult {
        offered,
        policed: policed_bytes,
        blocked: blocked_bytes,
        passed: passed_bytes,
        blocked_packets: filtered.blocked.len() as u64,
        attack_passed,
        af41_offered,
        af41_admitted: af41_bytes(&filtered.passed),
        clamp: firewall.clamp(vm),
        alpha: outcome.alpha,
        level: outcome.level.as_u8(),
        messages,
    }
}

fn post(
    bus: &mut Bus,
    events: &mut Vec<EventRecord>,
    counts: &mut BTreeMap<&'static str, u64>,
    tick: Tick,
    from: Endpoint,
    to: Endpoint,
    msg: ControlMessage,
) {
    events.push(EventRecord { tick, from, to, kind: msg.kind, seq: msg.seq });
    *counts.entry(msg.kind.name()).or_insert(0) += 1;
    bus.send(tick, Envelope { from, to, msg });
}

pub struct Engine {
    cfg: SimConfig,
    mode: ExecMode,
    keys: KeyTable,
    bus: Bus,
    firewall: Firewall,
    cms: Cms,
    mining: MiningCenter,
    agents: Vec<Agent>,
    rngs: Vec<ChaCha12Rng>,
    base_users: Vec<Vec<UserProfile>>,
    pulse_users: Vec<Vec<UserProfile>>,
    attacks: Vec<AttackSpec>,
    fw_seq: u16,
    mining_seq: u16,
}

impl Engine {
    pub fn new(cfg: SimConfig, mode: ExecMode) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let keys = KeyTable::new(cfg.seed);
        let bus = Bus::new(cfg.seed, cfg.loss);

        let mut firewall = Firewall::new();
        let vm_ids: Vec<VmId> = (0..cfg.vms).map(VmId).collect();
        for &vm in &vm_ids {
            for i in 0..cfg.registered_per_vm {
                firewall.register_user(user_id(vm, i));
            }
        }

        let cms = Cms::new(cfg.cms.clone(), keys.key_for(Endpoint::Cms), vm_ids.clone());
        let mining = MiningCenter::new(cfg.mining.latency, cfg.mining.theta);

        let agent_cfg = AgentConfig {
            x: cfg.predictor.x,
            window: cfg.predictor.window,
            hysteresis: cfg.predictor.hysteresis,
            buffer_cap: cfg.predictor.buffer,
            report_period: cfg.predictor.report_period,
            report_top: cfg.predictor.report_top,
        };
        let agents = vm_ids
            .iter()
            .map(|&vm| Agent::new(vm, agent_cfg.clone(), keys.key_for(Endpoint::Agent(vm))))
            .collect();

        // every VM draws from its own stream of one master seed
        let rngs = vm_ids
            .iter()
            .map(|&vm| {
                let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
                rng.set_stream(vm.0 as u64 + 1);
                rng
            })
            .collect();

        let base_users = vm_ids
            .iter()
            .map(|&vm| {
                (0..cfg.users_per_vm)
                    .map(|i| UserProfile {
                        id: user_id(vm, i),
                        registered: i < cfg.registered_per_vm,
                        mean_pct: cfg.user_mean_pct,
                        stddev_pct: cfg.user_stddev_pct,
                    })
                    .collect()
            })
            .collect();
        let pulse_users = vm_ids
            .iter()
            .map(|&vm| {
                cfg.pulses
                    .iter()
                    .map(|p| UserProfile {
                        id: user_id(vm, p.user),
                        registered: false,
                        mean_pct: p.pct,
                        stddev_pct: 0.0,
                    })
                    .collect()
            })
            .collect();
        let attacks = cfg
            .attacks
            .iter()
            .map(|a| AttackSpec {
                vm: VmId(a.vm),
                users: a.users.iter().map(|&u| user_id(VmId(a.vm), u)).collect(),
                start: a.start,
                duration: a.duration,
                rate_pct: a.rate_pct,
                signature: a.signature,
            })
            .collect();

        Ok(Engine {
            cfg,
            mode,
            keys,
            bus,
            firewall,
            cms,
            mining,
            agents,
            rngs,
            base_users,
            pulse_users,
            attacks,
            fw_seq: 0,
            mining_seq: 0,
        })
    }

    fn component_msg(seq: &mut u16, source: SourceId, key: u32, kind: MsgKind, body: &Body) -> ControlMessage {
        let s = *seq;
        *seq = seq.wrapping_add(1);
        ControlMessage {
            source,
            kind,
            seq: s,
            auth_key: key,
            next_proto: PROTO_TCP,
            payload: body.encode().expect("component bodies stay within wire limits"),
        }
    }

    pub fn run(mut self) -> Result<RunOutput, ConfigError> {
        let vms = self.cfg.vms as usize;
        let duration = self.cfg.duration;
        let mut rows = Vec::with_capacity(vms * duration as usize);
        let mut flows = Vec::with_capacity(vms * duration as usize);
        let mut events = Vec::new();
        let mut sent_by_kind = BTreeMap::new();
        let mut auth_failures = 0u64;
        let mut decode_failures = 0u64;

        for tick in 0..duration {
            // stage 0: deliver, authenticate, decode, route
            let mut fw_inbox: Vec<(MsgKind, Body)> = Vec::new();
            let mut cms_inbox: Vec<(MsgKind, Body)> = Vec::new();
            let mut mining_inbox: Vec<(MsgKind, Body)> = Vec::new();
            let mut agent_inboxes: Vec<Vec<(MsgKind, Body)>> = vec![Vec::new(); vms];
            for env in self.bus.deliver(tick) {
                if !authenticate(&env.msg, self.keys.key_for(env.from)) {
                    auth_failures += 1;
                    continue;
                }
                let body = match Body::decode(env.msg.kind, &env.msg.payload) {
                    Ok(body) => body,
                    Err(_) => {
                        decode_failures += 1;
                        continue;
                    }
                };
                match env.to {
                    Endpoint::Firewall => fw_inbox.push((env.msg.kind, body)),
                    Endpoint::Cms => cms_inbox.push((env.msg.kind, body)),
                    Endpoint::Mining => mining_inbox.push((env.msg.kind, body)),
                    Endpoint::Idps => {}
                    Endpoint::Agent(vm) => {
                        if (vm.0 as usize) < vms {
                            agent_inboxes[vm.0 as usize].push((env.msg.kind, body));
                        }
                    }
                }
            }

            // stage 1: firewall control plane
            let mut budget_notices: Vec<(VmId, f64)> = Vec::new();
            for (kind, body) in &fw_inbox {
                match (kind, body) {
                    (MsgKind::PolicingCommand, Body::Policing { vm, target_pct, clamp }) => {
                        self.firewall.set_policy(*vm, *target_pct, *clamp);
                        budget_notices.push((*vm, self.firewall.effective_budget_pct(*vm)));
                    }
                    (MsgKind::RuleUpdate, Body::RuleUpdate { signature }) => {
                        self.firewall.add_rule(*signature);
                    }
                    (MsgKind::HighUsersReport, Body::HighUsers { vm, users }) => {
                        self.firewall.set_high_consumers(*vm, users.iter().map(|&(u, _)| u));
                    }
                    _ => {}
                }
            }

            // stage 2: per-VM data plane and agents
            let cfg = &self.cfg;
            let firewall = &self.firewall;
            let attacks = &self.attacks;
            let base_users = &self.base_users;
            let pulse_users = &self.pulse_users;
            let stage = |((v, agent), rng): ((usize, &mut Agent), &mut ChaCha12Rng)| {
                vm_stage(
                    tick,
                    VmId(v as u16),
                    cfg,
                    &base_users[v],
                    &pulse_users[v],
                    attacks,
                    firewall,
                    agent,
                    rng,
                    &agent_inboxes[v],
                )
            };
            let results: Vec<VmTickResult> = match self.mode {
                ExecMode::Sequential => {
                    self.agents.iter_mut().enumerate().zip(self.rngs.iter_mut()).map(stage).collect()
                }
                ExecMode::Parallel => self
                    .agents
                    .par_iter_mut()
                    .enumerate()
                    .zip(self.rngs.par_iter_mut())
                    .map(stage)
                    .collect(),
            };

            // stage 3: agent emissions, in VM order
            let mut results = results;
            for (v, result) in results.iter_mut().enumerate() {
                let from = Endpoint::Agent(VmId(v as u16));
                for msg in result.messages.drain(..) {
                    post(&mut self.bus, &mut events, &mut sent_by_kind, tick, from, Endpoint::Cms, msg);
                }
            }

            // stage 4: firewall notifies the control center of budget moves
            for (vm, budget_pct) in budget_notices {
                let body = Body::BandwidthChange { vm, budget_pct };
                let msg = Self::component_msg(
                    &mut self.fw_seq,
                    SourceId::Firewall,
                    self.keys.key_for(Endpoint::Firewall),
                    MsgKind::BandwidthChangeNotice,
                    &body,
                );
                post(&mut self.bus, &mut events, &mut sent_by_kind, tick, Endpoint::Firewall, Endpoint::Cms, msg);
            }

            // stage 5: management server
            for (kind, body) in cms_inbox {
                for (to, msg) in self.cms.handle(tick, kind, &body) {
                    post(&mut self.bus, &mut events, &mut sent_by_kind, tick, Endpoint::Cms, to, msg);
                }
            }
            for (to, msg) in self.cms.poll(tick) {
                post(&mut self.bus, &mut events, &mut sent_by_kind, tick, Endpoint::Cms, to, msg);
            }

            // stage 6: mining center
            for (kind, body) in mining_inbox {
                if let (MsgKind::PatternRequest, Body::Packets { vm, packets }) = (kind, body) {
                    self.mining.receive(tick, vm, packets);
                }
            }
            for outcome in self.mining.poll(tick) {
                let body = Body::PatternResult {
                    vm: outcome.vm,
                    verdict: outcome.verdict.map(|sig| sig.token),
                };
                let msg = Self::component_msg(
                    &mut self.mining_seq,
                    SourceId::MiningCenter,
                    self.keys.key_for(Endpoint::Mining),
                    MsgKind::PatternResult,
                    &body,
                );
                post(&mut self.bus, &mut events, &mut sent_by_kind, tick, Endpoint::Mining, Endpoint::Cms, msg);
            }

            // stage 7: metrics
            for (v, r) in results.iter().enumerate() {
                let vm = VmId(v as u16);
                let share = if r.passed == 0 {
                    0.0
                } else {
                    100.0 * r.attack_passed as f64 / r.passed as f64
                };
                rows.push(Row::new(
                    tick,
                    vm,
                    traffic::offered_pct(r.offered, self.cfg.capacity),
                    r.alpha,
                    r.level,
                    r.clamp,
                    traffic::offered_pct(r.passed, self.cfg.capacity),
                    share,
                    r.blocked_packets,
                ));
                flows.push(FlowRow {
                    tick,
                    vm: vm.0,
                    offered: r.offered,
                    admitted: r.passed,
                    policed: r.policed,
                    blocked: r.blocked,
                    blocked_packets: r.blocked_packets,
                    attack_admitted: r.attack_passed,
                    af41_offered: r.af41_offered,
                    af41_admitted: r.af41_admitted,
                });
            }
        }

        Ok(RunOutput {
            rows,
            flows,
            events,
            sent_by_kind,
            bus_sent: self.bus.sent,
            bus_delivered: self.bus.delivered,
            bus_dropped: self.bus.dropped,
            auth_failures,
            decode_failures,
            cms: self.cms.stats().clone(),
            mining_completed: self.mining.completed(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::{scenario_one, scenario_two};

    fn quiet_cfg() -> SimConfig {
        SimConfig { vms: 2, duration: 80, seed: 9, ..SimConfig::default() }
    }

    #[test]
    fn rows_cover_every_tick_and_vm_without_gaps() {
        let out = run(&quiet_cfg(), ExecMode::Sequential).unwrap();
        assert_eq!(out.rows.len(), 160);
        for (i, row) in out.rows.iter().enumerate() {
            assert_eq!(row.tick, (i / 2) as u64);
            assert_eq!(row.vm, (i % 2) as u16);
        }
        assert_eq!(out.flows.len(), out.rows.len());
    }

    #[test]
    fn zero_users_produce_an_all_zero_series_and_no_alerts() {
        let cfg = SimConfig {
            users_per_vm: 0,
            registered_per_vm: 0,
            duration: 50,
            ..SimConfig::default()
        };
        let out = run(&cfg, ExecMode::Sequential).unwrap();
        for row in &out.rows {
            assert_eq!(row.offered_pct, 0.0);
            assert_eq!(row.alpha, 0.0);
            assert_eq!(row.level, 0);
            assert_eq!(row.admitted_pct, 0.0);
            assert_eq!(row.blocked, 0);
        }
        for kind in [MsgKind::Alert1, MsgKind::Alert2, MsgKind::Alert3] {
            assert!(out.events.iter().all(|e| e.kind != kind), "{kind:?} fired");
        }
    }

    #[test]
    fn identical_configs_produce_identical_output() {
        let a = run(&quiet_cfg(), ExecMode::Sequential).unwrap();
        let b = run(&quiet_cfg(), ExecMode::Sequential).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.events, b.events);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn parallel_matches_sequential_byte_for_byte() {
        let cfg = SimConfig {
            vms: 4,
            duration: 120,
            seed: 31,
            user_stddev_pct: 0.4,
            ..SimConfig::default()
        };
        let seq = run(&cfg, ExecMode::Sequential).unwrap();
        let par = run(&cfg, ExecMode::Parallel).unwrap();
        assert_eq!(seq.to_csv(), par.to_csv());
        assert_eq!(seq.events, par.events);
    }

    #[test]
    fn byte_conservation_holds_under_noise_and_loss() {
        let mut cfg = scenario_one();
        cfg.duration = 380;
        cfg.user_stddev_pct = 0.5;
        cfg.loss = 0.05;
        let out = run(&cfg, ExecMode::Sequential).unwrap();
        for f in &out.flows {
            assert_eq!(
                f.offered,
                f.admitted + f.policed + f.blocked,
                "tick {} vm {}",
                f.tick,
                f.vm
            );
        }
        assert!(out.bus_dropped > 0);
    }

    #[test]
    fn total_loss_degrades_to_the_no_policing_baseline() {
        let mut cfg = scenario_two();
        cfg.loss = 1.0;
        cfg.duration = 360;
        let out = run(&cfg, ExecMode::Sequential).unwrap();
        assert_eq!(out.bus_delivered, 0);
        for row in &out.rows {
            assert_eq!(row.clamp, 0.0, "policing appeared at tick {}", row.tick);
            assert_eq!(row.blocked, 0);
        }
        assert!(out.bus_dropped > 0);
    }

    #[test]
    fn keepalives_fan_out_on_the_period_and_agents_answer() {
        let cfg = quiet_cfg();
        let out = run(&cfg, ExecMode::Sequential).unwrap();
        let alloha_ticks = out.event_ticks(Endpoint::Cms, MsgKind::Alloha);
        assert_eq!(alloha_ticks.len(), 2 * 2, "two vms, ticks 0 and 60");
        assert!(alloha_ticks.iter().all(|t| t % 60 == 0));
        let acks = out
            .events
            .iter()
            .filter(|e| e.kind == MsgKind::Ack && matches!(e.from, Endpoint::Agent(_)))
            .count();
        assert_eq!(acks, 4, "one answer per probe");
    }

    #[test]
    fn found_attack_timeline_runs_alerts_rule_and_restore_in_order() {
        let out = run(&scenario_one(), ExecMode::Sequential).unwrap();
        let vm0 = Endpoint::Agent(VmId(0));
        let a1 = out.event_ticks(vm0, MsgKind::Alert1)[0];
        let a2 = out.event_ticks(vm0, MsgKind::Alert2)[0];
        let a3 = out.event_ticks(vm0, MsgKind::Alert3)[0];
        assert!(a1 < a2 && a2 < a3, "{a1} {a2} {a3}");
        let rule = out.event_ticks(Endpoint::Cms, MsgKind::RuleUpdate)[0];
        assert!(rule > a3 && rule <= a2 + 30);
        assert_eq!(out.cms.policing_cancelled, 1);
        assert_eq!(out.cms.rules_sent, 1);
        assert_eq!(out.auth_failures, 0);
        assert_eq!(out.decode_failures, 0);
    }

    #[test]
    fn slow_mining_walks_the_stepped_release() {
        let out = run(&scenario_two(), ExecMode::Sequential).unwrap();
        assert_eq!(out.cms.jobs_expired, 1);
        assert_eq!(out.cms.policing_cancelled, 0);
        assert_eq!(out.cms.rules_sent, 1, "late verdict still lands a rule");
        let vm0 = out.vm_rows(VmId(0));
        let mut onsets = Vec::new();
        for pair in vm0.windows(2) {
            if pair[1].clamp != pair[0].clamp {
                onsets.push((pair[1].tick, pair[1].clamp));
            }
        }
        let clamps: Vec<f64> = onsets.iter().map(|&(_, c)| c).collect();
        assert_eq!(clamps, [1.0, 0.75, 0.5, 0.25, 0.0]);
    }

    #[test]
    fn budget_changes_are_announced_to_the_affected_agent() {
        let out = run(&scenario_two(), ExecMode::Sequential).unwrap();
        let notices: Vec<&EventRecord> = out
            .events
            .iter()
            .filter(|e| e.kind == MsgKind::BandwidthChangeNotice)
            .collect();
        assert!(!notices.is_empty());
        assert!(notices.iter().any(|e| e.from == Endpoint::Firewall && e.to == Endpoint::Cms));
        assert!(notices.iter().any(|e| e.from == Endpoint::Cms && e.to == Endpoint::Agent(VmId(0))));
    }

    #[test]
    fn attacks_on_one_vm_leave_the_others_untouched() {
        let quiet = run(&SimConfig { vms: 10, duration: 600, seed: 42, pulses: scenario_one().pulses, ..SimConfig::default() }, ExecMode::Sequential)
            .unwrap();
        let attacked = run(&scenario_one(), ExecMode::Sequential).unwrap();
        for vm in 1..10u16 {
            assert_eq!(
                quiet.vm_rows(VmId(vm)),
                attacked.vm_rows(VmId(vm)),
                "vm {vm} series diverged"
            );
        }
    }
}
