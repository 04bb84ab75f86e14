//! Central management server: the single coordinator between agents, the
//! mining center, and the firewall.
//!
//! The server keeps a ledger of alert episodes per VM. An alert's reported
//! prediction is remembered as the episode's baseline; a third-band alert
//! turns that baseline into a policing target with a full clamp, plus a
//! release schedule that relaxes the clamp one step every
//! `release_step_ticks` until the squeeze is gone. A shipped traffic
//! capture opens a mining job with a detection deadline: a positive verdict
//! arriving before the deadline produces a filter rule, lifts the policing
//! early, and restores the agent's prediction, while a verdict arriving
//! after the deadline still installs the rule and restores the baseline but
//! leaves the stepped release to finish on its own. The server also
//! originates the periodic keepalive probes and forwards consumption
//! reports to the firewall so heavy legitimate users keep their priority
//! under a squeeze.
//!
//! Every outgoing message is stamped from the server's own strictly
//! increasing sequence counter and its authentication key.

use std::collections::BTreeMap;

use crate::bus::Endpoint;
use crate::payload::{AckOp, Body};
use crate::predictor::AlertLevel;
use crate::wire::{ControlMessage, MsgKind, SourceId, PROTO_TCP};
use crate::{Tick, UserId, VmId};

/// Clamp fractions a release schedule walks through, full squeeze first.
pub const CLAMP_STEPS: [f64; 5] = [1.0, 0.75, 0.5, 0.25, 0.0];

pub const DEFAULT_DETECT_DEADLINE: u64 = 30;
pub const DEFAULT_RELEASE_STEP: u64 = 30;
pub const DEFAULT_ALLOHA_PERIOD: u64 = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct CmsConfig {
    /// Ticks the mining center gets before an episode is handled as the
    /// slow-detection case.
    pub d_detect: u64,
    /// Ticks between release steps once policing is in place.
    pub release_step_ticks: u64,
    /// Keepalive probe period; zero disables probes.
    pub alloha_period: u64,
}

impl Default for CmsConfig {
    fn default() -> Self {
        CmsConfig {
            d_detect: DEFAULT_DETECT_DEADLINE,
            release_step_ticks: DEFAULT_RELEASE_STEP,
            alloha_period: DEFAULT_ALLOHA_PERIOD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Episode {
    level: AlertLevel,
    alpha_snapshot: f64,
    opened_at: Tick,
    last_alert_at: Tick,
}

#[derive(Debug, Clone, PartialEq)]
struct MiningJob {
    deadline: Tick,
    expired: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Release {
    target_pct: f64,
    next_step: usize,
    next_at: Tick,
}

/// Counters the run summary reports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CmsStats {
    pub received: BTreeMap<&'static str, u64>,
    pub acks_received: u64,
    pub rules_sent: u64,
    pub restores_sent: u64,
    pub no_pattern_results: u64,
    pub jobs_expired: u64,
    pub policing_cancelled: u64,
    pub allohas_sent: u64,
}

#[derive(Debug, Clone)]
pub struct Cms {
    cfg: CmsConfig,
    auth_key: u32,
    seq: u16,
    agents: Vec<VmId>,
    ledger: BTreeMap<VmId, Episode>,
    jobs: BTreeMap<VmId, MiningJob>,
    releases: BTreeMap<VmId, Release>,
    high_consumers: BTreeMap<VmId, Vec<(UserId, u64)>>,
    stats: CmsStats,
}

impl Cms {
    pub fn new(cfg: CmsConfig, auth_key: u32, agents: Vec<VmId>) -> Self {
        Cms {
            cfg,
            auth_key,
            seq: 0,
            agents,
            ledger: BTreeMap::new(),
            jobs: BTreeMap::new(),
            releases: BTreeMap::new(),
            high_consumers: BTreeMap::new(),
            stats: CmsStats::default(),
        }
    }

    pub fn stats(&self) -> &CmsStats {
        &self.stats
    }

    pub fn episode_level(&self, vm: VmId) -> Option<AlertLevel> {
        self.ledger.get(&vm).map(|e| e.level)
    }

    pub fn episode_alpha(&self, vm: VmId) -> Option<f64> {
        self.ledger.get(&vm).map(|e| e.alpha_snapshot)
    }

    pub fn release_in_progress(&self, vm: VmId) -> bool {
        self.releases.contains_key(&vm)
    }

    pub fn job_open(&self, vm: VmId) -> bool {
        self.jobs.contains_key(&vm)
    }

    pub fn high_consumers(&self, vm: VmId) -> Option<&[(UserId, u64)]> {
        self.high_consumers.get(&vm).map(|v| v.as_slice())
    }

    fn msg(&mut self, kind: MsgKind, body: &Body) -> ControlMessage {
        let seq = self.seq;
        self.seq = self.seq.wrapping_add(1);
        ControlMessage {
            source: SourceId::ControlCenter,
            kind,
            seq,
            auth_key: self.auth_key,
            next_proto: PROTO_TCP,
            payload: body.encode().expect("cms bodies stay within wire limits"),
        }
    }

    fn note_alert(&mut self, now: Tick, vm: VmId, level: AlertLevel, alpha: f64) {
        let episode = self.ledger.entry(vm).or_insert(Episode {
            level,
            alpha_snapshot: alpha,
            opened_at: now,
            last_alert_at: now,
        });
        episode.level = episode.level.max(level);
        episode.last_alert_at = now;
        if level == AlertLevel::Level1 {
            // a first-band alert marks the trusted baseline for the episode
            episode.alpha_snapshot = alpha;
        }
    }

    fn start_policing(&mut self, now: Tick, vm: VmId) -> Vec<(Endpoint, ControlMessage)> {
        let target = self.ledger.get(&vm).map(|e| e.alpha_snapshot).unwrap_or(0.0);
        self.releases.insert(
            vm,
            Release {
                target_pct: target,
                next_step: 1,
                next_at: now + self.cfg.release_step_ticks,
            },
        );
        let body = Body::Policing { vm, target_pct: target, clamp: CLAMP_STEPS[0] };
        vec![(Endpoint::Firewall, self.msg(MsgKind::PolicingCommand, &body))]
    }

    /// Dispatches one authenticated, decoded message. Returns the messages
    /// the server sends in response.
    pub fn handle(
        &mut self,
        now: Tick,
        kind: MsgKind,
        body: &Body,
    ) -> Vec<(Endpoint, ControlMessage)> {
        *self.stats.received.entry(kind.name()).or_insert(0) += 1;
        match (kind, body) {
            (MsgKind::Ack, _) => {
                self.stats.acks_received += 1;
                Vec::new()
            }
            (MsgKind::Alert1, Body::Alert { vm, alpha, .. }) => {
                self.note_alert(now, *vm, AlertLevel::Level1, *alpha);
                Vec::new()
            }
            (MsgKind::Alert2, Body::Alert { vm, alpha, .. }) => {
                self.note_alert(now, *vm, AlertLevel::Level2, *alpha);
                Vec::new()
            }
            (MsgKind::Alert3, Body::Alert { vm, alpha, .. }) => {
                self.note_alert(now, *vm, AlertLevel::Level3, *alpha);
                self.start_policing(now, *vm)
            }
            (MsgKind::TrafficBuffer, Body::Packets { vm, packets }) => {
                // a fresh capture replaces the VM's job and resets its clock
                self.jobs
                    .insert(*vm, MiningJob { deadline: now + self.cfg.d_detect, expired: false });
                let body = Body::Packets { vm: *vm, packets: packets.clone() };
                vec![(Endpoint::Mining, self.msg(MsgKind::PatternRequest, &body))]
            }
            (MsgKind::PatternResult, Body::PatternResult { vm, verdict }) => {
                let job = self.jobs.remove(vm);
                match verdict {
                    Some(token) => {
                        let mut out = Vec::new();
                        let rule = Body::RuleUpdate { signature: *token };
                        out.push((Endpoint::Firewall, self.msg(MsgKind::RuleUpdate, &rule)));
                        self.stats.rules_sent += 1;
                        let timely = job.is_some_and(|j| !j.expired);
                        if timely {
                            if let Some(release) = self.releases.remove(vm) {
                                // detection beat the deadline: lift the squeeze
                                let lift = Body::Policing {
                                    vm: *vm,
                                    target_pct: release.target_pct,
                                    clamp: 0.0,
                                };
                                out.push((
                                    Endpoint::Firewall,
                                    self.msg(MsgKind::PolicingCommand, &lift),
                                ));
                                self.stats.policing_cancelled += 1;
                            }
                        }
                        let restore = Body::Ack { op: AckOp::RestoreAlpha, vm: *vm };
                        out.push((Endpoint::Agent(*vm), self.msg(MsgKind::Ack, &restore)));
                        self.stats.restores_sent += 1;
                        self.ledger.remove(vm);
                        out
                    }
                    None => {
                        self.stats.no_pattern_results += 1;
                        Vec::new()
                    }
                }
            }
            (MsgKind::HighUsersReport, Body::HighUsers { vm, users }) => {
                self.high_consumers.insert(*vm, users.clone());
                let body = Body::HighUsers { vm: *vm, users: users.clone() };
                vec![(Endpoint::Firewall, self.msg(MsgKind::HighUsersReport, &body))]
            }
            (MsgKind::BandwidthChangeNotice, Body::BandwidthChange { vm, budget_pct }) => {
                let body = Body::BandwidthChange { vm: *vm, budget_pct: *budget_pct };
                vec![(Endpoint::Agent(*vm), self.msg(MsgKind::BandwidthChangeNotice, &body))]
            }
            _ => Vec::new(),
        }
    }

    /// Housekeeping for one tick: expire mining deadlines, advance release
    /// schedules, and probe the agents.
    pub fn poll(&mut self, now: Tick) -> Vec<(Endpoint, ControlMessage)> {
        for job in self.jobs.values_mut() {
            if !job.expired && job.deadline <= now {
                job.expired = true;
                self.stats.jobs_expired += 1;
            }
        }

        let mut out = Vec::new();
        let due: Vec<VmId> = self
            .releases
            .iter()
            .filter(|(_, r)| r.next_at <= now)
            .map(|(&vm, _)| vm)
            .collect();
        for vm in due {
            let release = self.releases.get_mut(&vm).expect("due release present");
            let clamp = CLAMP_STEPS[release.next_step];
            let body = Body::Policing { vm, target_pct: release.target_pct, clamp };
            release.next_step += 1;
            release.next_at += self.cfg.release_step_ticks;
            let finished = release.next_step >= CLAMP_STEPS.len();
            out.push((Endpoint::Firewall, self.msg(MsgKind::PolicingCommand, &body)));
            if finished {
                self.releases.remove(&vm);
                self.ledger.remove(&vm);
            }
        }

        if self.cfg.alloha_period > 0 && now % self.cfg.alloha_period == 0 {
            let agents = self.agents.clone();
            for vm in agents {
                out.push((Endpoint::Agent(vm), self.msg(MsgKind::Alloha, &Body::Empty)));
                self.stats.allohas_sent += 1;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firewall::Dscp;
    use crate::traffic::SimPacket;

    fn cms() -> Cms {
        Cms::new(
            CmsConfig { d_detect: 30, release_step_ticks: 30, alloha_period: 0 },
            0xC0C0_A115,
            vec![VmId(0), VmId(1)],
        )
    }

    fn pkt(user: u32, sig: u32) -> SimPacket {
        SimPacket {
            user: UserId(user),
            vm: VmId(0),
            size: 1_000,
            dscp: Dscp::Be,
            is_attack: false,
            signature: sig,
        }
    }

    fn alert(vm: u16, load: f64, alpha: f64) -> Body {
        Body::Alert { vm: VmId(vm), load, alpha }
    }

    fn body(msg: &ControlMessage) -> Body {
        Body::decode(msg.kind, &msg.payload).unwrap()
    }

    fn kinds(out: &[(Endpoint, ControlMessage)]) -> Vec<(Endpoint, MsgKind)> {
        out.iter().map(|(ep, m)| (*ep, m.kind)).collect()
    }

    #[test]
    fn alerts_ratchet_the_episode_level() {
        let mut c = cms();
        c.handle(10, MsgKind::Alert1, &alert(0, 33.0, 31.0));
        assert_eq!(c.episode_level(VmId(0)), Some(AlertLevel::Level1));
        c.handle(12, MsgKind::Alert2, &alert(0, 34.0, 31.2));
        assert_eq!(c.episode_level(VmId(0)), Some(AlertLevel::Level2));
        // the baseline stays the first-band alpha, not the later one
        assert_eq!(c.episode_alpha(VmId(0)), Some(31.0));
        assert_eq!(c.episode_level(VmId(1)), None);
    }

    #[test]
    fn a_late_first_band_alert_refreshes_the_baseline() {
        let mut c = cms();
        c.handle(10, MsgKind::Alert2, &alert(0, 34.0, 31.2));
        c.handle(20, MsgKind::Alert1, &alert(0, 33.0, 30.5));
        assert_eq!(c.episode_level(VmId(0)), Some(AlertLevel::Level2), "level never drops");
        assert_eq!(c.episode_alpha(VmId(0)), Some(30.5));
    }

    #[test]
    fn level3_polices_to_the_first_alert_baseline() {
        let mut c = cms();
        c.handle(10, MsgKind::Alert1, &alert(0, 33.0, 31.0));
        c.handle(12, MsgKind::Alert2, &alert(0, 34.0, 31.2));
        let out = c.handle(14, MsgKind::Alert3, &alert(0, 70.0, 31.4));
        assert_eq!(kinds(&out), [(Endpoint::Firewall, MsgKind::PolicingCommand)]);
        match body(&out[0].1) {
            Body::Policing { vm, target_pct, clamp } => {
                assert_eq!(vm, VmId(0));
                assert_eq!(target_pct, 31.0);
                assert_eq!(clamp, 1.0);
            }
            other => panic!("wrong body: {other:?}"),
        }
        assert!(c.release_in_progress(VmId(0)));
    }

    #[test]
    fn jump_alert3_uses_its_own_alpha_as_baseline() {
        let mut c = cms();
        let out = c.handle(10, MsgKind::Alert3, &alert(3, 70.0, 30.5));
        match body(&out[0].1) {
            Body::Policing { target_pct, .. } => assert_eq!(target_pct, 30.5),
            other => panic!("wrong body: {other:?}"),
        }
    }

    #[test]
    fn capture_opens_a_job_and_forwards_to_mining() {
        let mut c = cms();
        let packets = vec![pkt(900, 7), pkt(1, 5_001)];
        let out = c.handle(
            10,
            MsgKind::TrafficBuffer,
            &Body::Packets { vm: VmId(0), packets: packets.clone() },
        );
        assert_eq!(kinds(&out), [(Endpoint::Mining, MsgKind::PatternRequest)]);
        match body(&out[0].1) {
            Body::Packets { vm, packets: p } => {
                assert_eq!(vm, VmId(0));
                assert_eq!(p, packets);
            }
            other => panic!("wrong body: {other:?}"),
        }
        assert!(c.job_open(VmId(0)));
    }

    #[test]
    fn timely_verdict_installs_rule_lifts_policing_and_restores() {
        let mut c = cms();
        c.handle(10, MsgKind::Alert3, &alert(0, 70.0, 31.0));
        c.handle(
            11,
            MsgKind::TrafficBuffer,
            &Body::Packets { vm: VmId(0), packets: vec![pkt(900, 7)] },
        );
        // deadline is 41; the verdict lands well before it
        let out = c.handle(
            25,
            MsgKind::PatternResult,
            &Body::PatternResult { vm: VmId(0), verdict: Some(7) },
        );
        assert_eq!(
            kinds(&out),
            [
                (Endpoint::Firewall, MsgKind::RuleUpdate),
                (Endpoint::Firewall, MsgKind::PolicingCommand),
                (Endpoint::Agent(VmId(0)), MsgKind::Ack),
            ]
        );
        match body(&out[0].1) {
            Body::RuleUpdate { signature } => assert_eq!(signature, 7),
            other => panic!("wrong body: {other:?}"),
        }
        match body(&out[1].1) {
            Body::Policing { clamp, .. } => assert_eq!(clamp, 0.0),
            other => panic!("wrong body: {other:?}"),
        }
        match body(&out[2].1) {
            Body::Ack { op, vm } => {
                assert_eq!(op, AckOp::RestoreAlpha);
                assert_eq!(vm, VmId(0));
            }
            other => panic!("wrong body: {other:?}"),
        }
        assert!(!c.release_in_progress(VmId(0)));
        assert_eq!(c.episode_level(VmId(0)), None);
        assert!(!c.job_open(VmId(0)));
        assert_eq!(c.stats().policing_cancelled, 1);
        // the release schedule is gone: nothing more comes out
        for t in 26..200 {
            assert!(c.poll(t).is_empty(), "tick {t}");
        }
    }

    #[test]
    fn late_verdict_keeps_the_release_running() {
        let mut c = cms();
        c.handle(10, MsgKind::Alert3, &alert(0, 70.0, 31.0));
        c.handle(
            11,
            MsgKind::TrafficBuffer,
            &Body::Packets { vm: VmId(0), packets: vec![pkt(900, 7)] },
        );
        // cross the deadline (41) before the verdict arrives
        let mut commands = Vec::new();
        for t in 12..=57 {
            commands.extend(c.poll(t));
        }
        assert_eq!(c.stats().jobs_expired, 1);
        let out = c.handle(
            58,
            MsgKind::PatternResult,
            &Body::PatternResult { vm: VmId(0), verdict: Some(7) },
        );
        // rule and restore, but no clamp-lifting command
        assert_eq!(
            kinds(&out),
            [
                (Endpoint::Firewall, MsgKind::RuleUpdate),
                (Endpoint::Agent(VmId(0)), MsgKind::Ack),
            ]
        );
        assert!(c.release_in_progress(VmId(0)));
        assert_eq!(c.stats().policing_cancelled, 0);
        // the schedule still walks the remaining steps to zero
        for t in 58..=135 {
            commands.extend(c.poll(t));
        }
        let clamps: Vec<f64> = commands
            .iter()
            .filter_map(|(_, m)| match body(m) {
                Body::Policing { clamp, .. } => Some(clamp),
                _ => None,
            })
            .collect();
        assert_eq!(clamps, [0.75, 0.5, 0.25, 0.0]);
        assert!(!c.release_in_progress(VmId(0)));
        assert_eq!(c.episode_level(VmId(0)), None);
    }

    #[test]
    fn release_steps_land_on_the_step_period() {
        let mut c = cms();
        c.handle(100, MsgKind::Alert3, &alert(0, 70.0, 31.0));
        let mut step_ticks = Vec::new();
        for t in 101..400 {
            for (_, m) in c.poll(t) {
                if let Body::Policing { clamp, .. } = body(&m) {
                    step_ticks.push((t, clamp));
                }
            }
        }
        assert_eq!(step_ticks, [(130, 0.75), (160, 0.5), (190, 0.25), (220, 0.0)]);
    }

    #[test]
    fn negative_verdict_changes_nothing_but_the_count() {
        let mut c = cms();
        c.handle(10, MsgKind::Alert3, &alert(0, 70.0, 31.0));
        c.handle(
            11,
            MsgKind::TrafficBuffer,
            &Body::Packets { vm: VmId(0), packets: vec![pkt(1, 5_001)] },
        );
        let out = c.handle(
            20,
            MsgKind::PatternResult,
            &Body::PatternResult { vm: VmId(0), verdict: None },
        );
        assert!(out.is_empty());
        assert_eq!(c.stats().no_pattern_results, 1);
        assert_eq!(c.stats().rules_sent, 0);
        assert!(c.release_in_progress(VmId(0)), "the squeeze stays");
        assert!(!c.job_open(VmId(0)), "the job is closed");
    }

    #[test]
    fn fresh_capture_resets_the_job_deadline() {
        let mut c = cms();
        c.handle(
            10,
            MsgKind::TrafficBuffer,
            &Body::Packets { vm: VmId(0), packets: vec![pkt(900, 7)] },
        );
        // without the refresh this would expire at 40
        c.handle(
            35,
            MsgKind::TrafficBuffer,
            &Body::Packets { vm: VmId(0), packets: vec![pkt(900, 7)] },
        );
        for t in 36..=64 {
            c.poll(t);
        }
        assert_eq!(c.stats().jobs_expired, 0);
        c.poll(65);
        assert_eq!(c.stats().jobs_expired, 1);
    }

    #[test]
    fn renewed_level3_restarts_the_full_clamp() {
        let mut c = cms();
        c.handle(10, MsgKind::Alert3, &alert(0, 70.0, 31.0));
        for t in 11..=75 {
            c.poll(t); // walks two release steps
        }
        let out = c.handle(76, MsgKind::Alert3, &alert(0, 80.0, 31.0));
        match body(&out[0].1) {
            Body::Policing { clamp, .. } => assert_eq!(clamp, 1.0),
            other => panic!("wrong body: {other:?}"),
        }
        // the restarted schedule walks all four steps again
        let mut clamps = Vec::new();
        for t in 77..300 {
            for (_, m) in c.poll(t) {
                if let Body::Policing { clamp, .. } = body(&m) {
                    clamps.push(clamp);
                }
            }
        }
        assert_eq!(clamps, [0.75, 0.5, 0.25, 0.0]);
    }

    #[test]
    fn due_releases_poll_in_vm_order() {
        let mut c = cms();
        c.handle(100, MsgKind::Alert3, &alert(5, 70.0, 30.0));
        c.handle(100, MsgKind::Alert3, &alert(1, 70.0, 30.0));
        let vms: Vec<VmId> = c
            .poll(130)
            .iter()
            .map(|(_, m)| match body(m) {
                Body::Policing { vm, .. } => vm,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(vms, [VmId(1), VmId(5)]);
    }

    #[test]
    fn consumption_reports_are_stored_and_forwarded() {
        let mut c = cms();
        let users = vec![(UserId(4), 900_000u64), (UserId(2), 500_000)];
        let out = c.handle(
            29,
            MsgKind::HighUsersReport,
            &Body::HighUsers { vm: VmId(1), users: users.clone() },
        );
        assert_eq!(kinds(&out), [(Endpoint::Firewall, MsgKind::HighUsersReport)]);
        assert_eq!(c.high_consumers(VmId(1)), Some(&users[..]));
        match body(&out[0].1) {
            Body::HighUsers { vm, users: u } => {
                assert_eq!(vm, VmId(1));
                assert_eq!(u, users);
            }
            other => panic!("wrong body: {other:?}"),
        }
    }

    #[test]
    fn bandwidth_notices_are_forwarded_to_the_affected_agent() {
        let mut c = cms();
        let out = c.handle(
            15,
            MsgKind::BandwidthChangeNotice,
            &Body::BandwidthChange { vm: VmId(1), budget_pct: 45.0 },
        );
        assert_eq!(kinds(&out), [(Endpoint::Agent(VmId(1)), MsgKind::BandwidthChangeNotice)]);
    }

    #[test]
    fn keepalives_probe_every_agent_on_the_period() {
        let mut c = Cms::new(
            CmsConfig { alloha_period: 60, ..CmsConfig::default() },
            1,
            vec![VmId(0), VmId(1), VmId(2)],
        );
        let out = c.poll(0);
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|(_, m)| m.kind == MsgKind::Alloha));
        for t in 1..60 {
            assert!(c.poll(t).is_empty(), "tick {t}");
        }
        let out = c.poll(60);
        let targets: Vec<Endpoint> = out.iter().map(|(ep, _)| *ep).collect();
        assert_eq!(
            targets,
            [Endpoint::Agent(VmId(0)), Endpoint::Agent(VmId(1)), Endpoint::Agent(VmId(2))]
        );
        assert_eq!(c.stats().allohas_sent, 6);
    }

    #[test]
    fn acks_are_counted() {
        let mut c = cms();
        c.handle(5, MsgKind::Ack, &Body::Ack { op: AckOp::Plain, vm: VmId(0) });
        c.handle(6, MsgKind::Ack, &Body::Ack { op: AckOp::Plain, vm: VmId(1) });
        assert_eq!(c.stats().acks_received, 2);
        assert_eq!(c.stats().received.get("ack"), Some(&2));
    }

    #[test]
    fn sequence_numbers_count_every_message_without_gaps() {
        let mut c = cms();
        let mut seqs = Vec::new();
        seqs.extend(c.handle(10, MsgKind::Alert3, &alert(0, 70.0, 31.0)).iter().map(|(_, m)| m.seq));
        seqs.extend(
            c.handle(
                11,
                MsgKind::TrafficBuffer,
                &Body::Packets { vm: VmId(0), packets: vec![pkt(900, 7)] },
            )
            .iter()
            .map(|(_, m)| m.seq),
        );
        seqs.extend(
            c.handle(
                20,
                MsgKind::PatternResult,
                &Body::PatternResult { vm: VmId(0), verdict: Some(7) },
            )
            .iter()
            .map(|(_, m)| m.seq),
        );
        let expected: Vec<u16> = (0..seqs.len() as u16).collect();
        assert_eq!(seqs, expected);
    }

    #[test]
    fn scripted_conversation_produces_the_expected_transcript() {
        // alert2, capture, timely verdict, ack: the classic exchange
        let mut c = cms();
        let mut transcript = Vec::new();
        transcript.extend(c.handle(306, MsgKind::Alert2, &alert(0, 33.7, 31.0)));
        transcript.extend(c.handle(
            306,
            MsgKind::TrafficBuffer,
            &Body::Packets { vm: VmId(0), packets: vec![pkt(900, 7), pkt(900, 7), pkt(1, 5_001)] },
        ));
        transcript.extend(c.handle(
            321,
            MsgKind::PatternResult,
            &Body::PatternResult { vm: VmId(0), verdict: Some(7) },
        ));
        transcript.extend(c.handle(322, MsgKind::Ack, &Body::Ack { op: AckOp::Plain, vm: VmId(0) }));
        assert_eq!(
            kinds(&transcript),
            [
                (Endpoint::Mining, MsgKind::PatternRequest),
                (Endpoint::Firewall, MsgKind::RuleUpdate),
                (Endpoint::Agent(VmId(0)), MsgKind::Ack),
            ]
        );
        let names: Vec<(&str, u64)> = c.stats().received.iter().map(|(&k, &v)| (k, v)).collect();
        assert_eq!(
            names,
            [("ack", 1), ("alert2", 1), ("pattern_result", 1), ("traffic_buffer", 1)]
        );
    }
}
