//! Fixed-step scenario engine.
//!
//! One tick is `dt` seconds. Within a tick: R's walk moves (on its own
//! clock), queued events for the tick run in the order they were queued
//! (message deliveries and verifier measurements), the verifier checks its
//! own speed for disturbances, then every vehicle picks a command and the
//! world advances one step. Measurements therefore see the positions at the
//! start of their tick.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acc::{compute_deadline_with_profile, AccParams};
use crate::challenge::{
    adjusted_time, generate_challenges, schedule, segment_deadline, ChallengeConfig, ChallengeEntry, ChallengeSet,
    StabilityDetector, VelocityTrace,
};
use crate::kinematics::{integrate_step, measure_range, ActuatorLimits, RangeSensor, VehicleState};
use crate::protocol::crypto::{CertificateAuthority, Credentials, CryptoProvider, PublicKey, SymbolicCrypto};
use crate::protocol::execution::{tick_of, ChallengeExecutor};
use crate::protocol::messages::{ChallengeMessage, JoinRequest, Message, ScheduleChange};
use crate::protocol::session::{sign_challenge, AbortReason, CandidateSession, Expectation, Outcome, VerifierSession};
use crate::protocol::verification::{physical_verification, RecordedSet, VerificationReport};
use crate::security::{RandomWalkModel, WalkSampler};

use super::config::{ScenarioConfig, ScenarioKind};
use super::HarnessError;

/// Origin of the verifier on the road; only differences matter.
const VERIFIER_START: f64 = 1000.0;

const STREAM_CHALLENGES: u64 = 0;
const STREAM_SENSOR: u64 = 1;
const STREAM_WALK: u64 = 2;
const STREAM_KEYS: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Verifier,
    Candidate,
    Adversary,
}

impl Party {
    pub fn name(self) -> &'static str {
        match self {
            Party::Verifier => "V",
            Party::Candidate => "C",
            Party::Adversary => "M",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub tick: i64,
    pub time: f64,
    pub vehicle: &'static str,
    pub lane: i32,
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
    /// Longitudinal distance behind the verifier; `None` for the verifier.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageRecord {
    pub tick: i64,
    pub from: Party,
    pub to: Party,
    pub kind: &'static str,
    pub delivered: bool,
    pub bytes: Vec<u8>,
}

/// One line of the deadline log: what was asked, when, and what the
/// sensor saw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChallengeRecord {
    pub index: usize,
    pub distance: f64,
    pub deadline: f64,
    pub original_time: f64,
    pub scheduled_time: f64,
    pub measured: Option<f64>,
    pub passed: bool,
    /// Time the ACC model needs to settle on this checkpoint given the
    /// verifier speed actually flown from the start of the challenge.
    pub model_completion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub outcome: Outcome,
    /// Outcome of the honest candidate's own session, if it ended early.
    pub candidate_outcome: Option<Outcome>,
    /// Identity the verifier admitted, if any.
    pub admitted: Option<String>,
    pub original_gamma: Option<ChallengeSet>,
    pub gamma: Option<ChallengeSet>,
    pub recorded: Option<RecordedSet>,
    pub report: Option<VerificationReport>,
    pub challenges: Vec<ChallengeRecord>,
    pub trace: Vec<TraceRow>,
    pub messages: Vec<MessageRecord>,
    pub verification_time: Option<f64>,
    pub end_tick: i64,
}

impl ScenarioResult {
    pub fn accepted(&self) -> bool {
        self.outcome == Outcome::Accepted
    }

    pub fn interior_passed(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.interior_passed())
    }
}

#[derive(Debug, Clone)]
enum Event {
    Deliver { from: Party, to: Party, bytes: Vec<u8> },
    Measure { index: usize, version: u64 },
}

#[derive(Debug)]
struct Queued {
    tick: i64,
    seq: u64,
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.tick, self.seq) == (other.tick, other.seq)
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.tick, self.seq).cmp(&(other.tick, other.seq))
    }
}

#[derive(Debug, Clone)]
struct Vehicle {
    name: &'static str,
    state: VehicleState,
    present: bool,
}

struct Walk {
    model: RandomWalkModel,
    sampler: WalkSampler,
    state: usize,
    step_ticks: i64,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    acc: AccParams,
    dt: f64,
    limits: ActuatorLimits,
    sensor: RangeSensor,
    crypto: SymbolicCrypto,
    m_creds: Credentials,
    verifier: VerifierSession,
    candidate: Option<CandidateSession>,
    adversary: Option<CandidateSession>,
    c_exec: ChallengeExecutor,
    m_exec: ChallengeExecutor,
    vehicles: Vec<Vehicle>,
    c_idx: Option<usize>,
    m_idx: Option<usize>,
    r_idx: Option<usize>,
    lead_idx: Option<usize>,
    verifier_prev_accel: f64,
    walk: Option<Walk>,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    rng_challenges: ChaCha8Rng,
    rng_sensor: ChaCha8Rng,
    rng_walk: ChaCha8Rng,
    intercepted: Option<JoinRequest>,
    original_gamma: Option<ChallengeSet>,
    schedule_ticks: Vec<i64>,
    recorded: Vec<Option<f64>>,
    version: u64,
    suspended: Option<usize>,
    rebaselined: Option<(usize, f64)>,
    v_hist: Vec<f64>,
    trace: Vec<TraceRow>,
    messages: Vec<MessageRecord>,
    report: Option<VerificationReport>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self, HarnessError> {
        let mut key_rng = stream_rng(cfg.seed, STREAM_KEYS);
        let mut crypto = SymbolicCrypto::new();
        let ca = CertificateAuthority::new(crypto.generate_keypair(&mut key_rng));
        let v_creds = Credentials::enroll(&mut crypto, &ca, "V", &mut key_rng);
        let c_creds = Credentials::enroll(&mut crypto, &ca, "C", &mut key_rng);
        let m_creds = Credentials::enroll(&mut crypto, &ca, "M", &mut key_rng);
        let ca_pk = ca.public_key();
        let known_v = Expectation::Known {
            id: v_creds.id.clone(),
            public_key: v_creds.public_key(),
        };

        let d_ref = cfg.d_ref();
        let acc = cfg.acc_params();
        let mut vehicles = vec![Vehicle {
            name: "V",
            state: VehicleState::new(VERIFIER_START, cfg.v_v, 0),
            present: true,
        }];
        let mut add = |name, pos, vel, lane, present| {
            vehicles.push(Vehicle {
                name,
                state: VehicleState::new(pos, vel, lane),
                present,
            });
            Some(vehicles.len() - 1)
        };
        let kind = cfg.scenario;
        let physical_candidate = matches!(
            kind,
            ScenarioKind::Honest | ScenarioKind::Traffic | ScenarioKind::MitmKnown | ScenarioKind::MitmUnknown
        );
        let remote = matches!(kind, ScenarioKind::RemoteNoFollower | ScenarioKind::RemoteWithR);
        let c_idx = if physical_candidate {
            add("C", VERIFIER_START - d_ref, cfg.v_c, 0, true)
        } else {
            None
        };
        // the remote adversary flies the challenges in the next lane over
        let m_idx = if remote {
            add("M", VERIFIER_START - d_ref, cfg.v_c, 1, true)
        } else {
            None
        };
        let mut rng_walk = stream_rng(cfg.seed, STREAM_WALK);
        let (walk, r_idx) = if kind == ScenarioKind::RemoteWithR {
            let model = cfg.walk_model()?;
            let sampler = WalkSampler::new(&model.transition_matrix());
            let state = sampler.uniform_start(&mut rng_walk);
            let idx = add("R", VERIFIER_START - model.distance(state), cfg.v_v, 0, true);
            (
                Some(Walk {
                    model,
                    sampler,
                    state,
                    step_ticks: cfg.walk_step_ticks()? as i64,
                }),
                idx,
            )
        } else {
            (None, None)
        };
        let lead_idx = if kind == ScenarioKind::Traffic {
            add("L", VERIFIER_START + cfg.lead_gap, cfg.lead_velocity, 0, false)
        } else {
            None
        };

        let candidate = physical_candidate.then(|| {
            let expectation = if kind == ScenarioKind::MitmUnknown {
                Expectation::Opportunistic
            } else {
                known_v.clone()
            };
            CandidateSession::new(c_creds.clone(), ca_pk, expectation)
        });
        let adversary = matches!(
            kind,
            ScenarioKind::RemoteNoFollower
                | ScenarioKind::RemoteWithR
                | ScenarioKind::MitmKnown
                | ScenarioKind::MitmUnknown
        )
        .then(|| CandidateSession::new(m_creds.clone(), ca_pk, known_v.clone()));

        Ok(Self {
            cfg,
            acc,
            dt: cfg.dt,
            limits: ActuatorLimits {
                max_accel: cfg.max_accel,
            },
            sensor: cfg.sensor()?,
            crypto,
            m_creds,
            verifier: VerifierSession::new(v_creds, ca_pk),
            candidate,
            adversary,
            c_exec: ChallengeExecutor::new(d_ref, acc),
            m_exec: ChallengeExecutor::new(d_ref, acc),
            vehicles,
            c_idx,
            m_idx,
            r_idx,
            lead_idx,
            verifier_prev_accel: 0.0,
            walk,
            queue: BinaryHeap::new(),
            seq: 0,
            rng_challenges: stream_rng(cfg.seed, STREAM_CHALLENGES),
            rng_sensor: stream_rng(cfg.seed, STREAM_SENSOR),
            rng_walk,
            intercepted: None,
            original_gamma: None,
            schedule_ticks: Vec::new(),
            recorded: Vec::new(),
            version: 0,
            suspended: None,
            rebaselined: None,
            v_hist: Vec::new(),
            trace: Vec::new(),
            messages: Vec::new(),
            report: None,
        })
    }

    fn push(&mut self, tick: i64, event: Event) {
        self.seq += 1;
        self.queue.push(Reverse(Queued {
            tick,
            seq: self.seq,
            event,
        }));
    }

    fn send(&mut self, now: i64, from: Party, to: Party, msg: &Message, jammed: bool) {
        let bytes = msg.encode();
        self.messages.push(MessageRecord {
            tick: now,
            from,
            to,
            kind: msg.kind(),
            delivered: !jammed,
            bytes: bytes.clone(),
        });
        if !jammed {
            let at = now + self.cfg.latency_ticks();
            self.push(at, Event::Deliver { from, to, bytes });
        }
    }

    fn gap_of(&self, idx: usize) -> f64 {
        self.vehicles[0].state.position - self.vehicles[idx].state.position
    }

    fn send_request(&mut self, now: i64) -> Result<(), HarnessError> {
        let crypto = &self.crypto;
        let mut outgoing = Vec::new();
        match self.cfg.scenario {
            ScenarioKind::Honest | ScenarioKind::Traffic => {
                let req = self.candidate.as_mut().expect("candidate").request(crypto)?;
                outgoing.push((Party::Candidate, req, false));
            }
            ScenarioKind::RemoteNoFollower | ScenarioKind::RemoteWithR => {
                let req = self.adversary.as_mut().expect("adversary").request(crypto)?;
                outgoing.push((Party::Adversary, req, false));
            }
            ScenarioKind::MitmKnown | ScenarioKind::MitmUnknown => {
                // C's request never reaches V: M jams it and keeps a copy
                let c_req = self.candidate.as_mut().expect("candidate").request(crypto)?;
                self.intercepted = Some(c_req.clone());
                outgoing.push((Party::Candidate, c_req, true));
                let m_req = self.adversary.as_mut().expect("adversary").request(crypto)?;
                outgoing.push((Party::Adversary, m_req, false));
            }
        }
        for (from, req, jammed) in outgoing {
            self.send(now, from, Party::Verifier, &Message::JoinRequest(req), jammed);
        }
        Ok(())
    }

    fn draw_challenges(&mut self, t0: f64) -> Result<ChallengeSet, HarnessError> {
        let cfg = self.cfg;
        let d_ref = cfg.d_ref();
        let v = self.vehicles[0].state.velocity;
        let set = match &cfg.checkpoints {
            Some(fixed) => {
                let mut distances = vec![d_ref];
                distances.extend(fixed);
                distances.push(d_ref);
                schedule(&distances, t0, v, cfg.epsilon, cfg.deadline_policy(), &self.acc)?
            }
            None => {
                let space = cfg.checkpoint_space()?;
                let (g_min, g_max) = cfg.time_gaps();
                let cc = ChallengeConfig {
                    k: cfg.k,
                    g_min,
                    g_max,
                    rho: cfg.rho,
                    gamma: cfg.gamma,
                    epsilon: cfg.epsilon,
                    deadline_policy: cfg.deadline_policy(),
                    rng_seed: cfg.seed,
                };
                generate_challenges(&space, &cc, d_ref, v, t0, &self.acc, &mut self.rng_challenges)?
            }
        };
        Ok(set)
    }

    fn install_schedule(&mut self, gamma: &ChallengeSet, from_index: usize, now: i64) {
        self.version += 1;
        self.schedule_ticks = gamma
            .entries
            .iter()
            .map(|e| tick_of(e.absolute_time, self.dt))
            .collect();
        for index in from_index..gamma.entries.len() {
            let at = self.schedule_ticks[index];
            debug_assert!(
                at > now || (index == 0 && at >= now),
                "measurement scheduled in the past"
            );
            let version = self.version;
            self.push(at, Event::Measure { index, version });
        }
    }

    fn on_deliver(&mut self, now: i64, from: Party, to: Party, bytes: &[u8]) -> Result<(), HarnessError> {
        let msg = Message::decode(bytes)?;
        match (to, msg) {
            (Party::Verifier, Message::JoinRequest(req)) => {
                if self.verifier.phase() != crate::protocol::Phase::Idle {
                    return Ok(());
                }
                self.verifier.handle_request(&self.crypto, &req)?;
                if self.verifier.outcome().is_some() {
                    return Ok(());
                }
                let t0_tick = now + tick_of(self.cfg.sync_delay, self.dt);
                debug_assert_eq!(t0_tick, self.cfg.t0_tick());
                let gamma = self.draw_challenges(t0_tick as f64 * self.dt)?;
                self.recorded = vec![None; gamma.entries.len()];
                self.original_gamma = Some(gamma.clone());
                let challenge = self.verifier.issue_challenge(&self.crypto, gamma.clone())?;
                self.install_schedule(&gamma, 0, now);
                self.send(now, Party::Verifier, from, &Message::Challenge(challenge), false);
            }
            (Party::Candidate, Message::Challenge(ch)) => {
                let session = self.candidate.as_mut().expect("candidate");
                if let Ok(opened) = session.receive_challenge(&self.crypto, &ch)? {
                    let gamma = opened.gamma.clone();
                    session.begin_executing()?;
                    self.c_exec.load(gamma);
                }
            }
            (Party::Adversary, Message::Challenge(ch)) => {
                let session = self.adversary.as_mut().expect("adversary");
                let Ok(opened) = session.receive_challenge(&self.crypto, &ch)? else {
                    return Ok(());
                };
                let gamma = opened.gamma.clone();
                match self.cfg.scenario {
                    ScenarioKind::MitmKnown | ScenarioKind::MitmUnknown => {
                        let victim = self.intercepted.clone().expect("intercepted request");
                        let relayed = self.relay(&victim.candidate_id, &victim.public_key, gamma);
                        self.send(
                            now,
                            Party::Adversary,
                            Party::Candidate,
                            &Message::Challenge(relayed),
                            false,
                        );
                    }
                    _ => {
                        session.begin_executing()?;
                        self.m_exec.load(gamma);
                    }
                }
            }
            (Party::Candidate, Message::Update(u)) => {
                let session = self.candidate.as_mut().expect("candidate");
                if let Ok(change) = session.receive_update(&self.crypto, &u) {
                    apply_change(&mut self.c_exec, change);
                }
            }
            (Party::Adversary, Message::Update(u)) => {
                let session = self.adversary.as_mut().expect("adversary");
                if let Ok(change) = session.receive_update(&self.crypto, &u) {
                    apply_change(&mut self.m_exec, change);
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// M re-signs V's challenge under its own identity for the victim.
    fn relay(&self, victim_id: &str, victim_pk: &PublicKey, gamma: ChallengeSet) -> ChallengeMessage {
        let body = sign_challenge(&self.crypto, &self.m_creds, victim_id, gamma);
        ChallengeMessage {
            candidate_id: victim_id.to_string(),
            sealed: self.crypto.encrypt(victim_pk, &body.encode()),
        }
    }

    fn on_measure(&mut self, index: usize, version: u64) -> Result<(), HarnessError> {
        if version != self.version || self.verifier.outcome().is_some() {
            return Ok(());
        }
        self.verifier.begin_measuring()?;
        let scene: Vec<VehicleState> = self.vehicles.iter().filter(|v| v.present).map(|v| v.state).collect();
        self.recorded[index] = measure_range(&self.vehicles[0].state, &scene, &self.sensor, &mut self.rng_sensor);
        let gamma = self.verifier.schedule().expect("schedule").clone();
        if index + 1 == gamma.entries.len() {
            let recorded = RecordedSet {
                times: gamma.entries.iter().map(|e| e.absolute_time).collect(),
                readings: self.recorded.clone(),
            };
            let report = physical_verification(&gamma, &recorded, self.cfg.gamma)?;
            self.verifier.decide(report.verdict)?;
            self.report = Some(report);
            if let Some(c) = self.candidate.as_mut() {
                let _ = c.finish();
            }
        }
        Ok(())
    }

    /// Watches the verifier's own speed during each challenge and re-times
    /// the schedule when it changes.
    fn monitor(&mut self, now: i64) -> Result<(), HarnessError> {
        let Some(policy) = self.cfg.adjust.policy() else {
            return Ok(());
        };
        if self.verifier.outcome().is_some() || self.schedule_ticks.is_empty() || now < self.schedule_ticks[0] {
            return Ok(());
        }
        let det = StabilityDetector {
            threshold: self.cfg.stability_threshold,
            window: self.cfg.stability_window,
        };
        let v_now = self.v_hist[now as usize];
        match self.suspended {
            None => {
                let Some(k) = (1..self.schedule_ticks.len()).find(|&k| self.schedule_ticks[k] > now) else {
                    return Ok(());
                };
                let baseline = match self.rebaselined {
                    Some((idx, v)) if idx == k => v,
                    _ => self.v_hist[self.schedule_ticks[k - 1] as usize],
                };
                if (v_now - baseline).abs() >= det.threshold {
                    self.suspended = Some(k);
                    self.version += 1;
                    let update = self
                        .verifier
                        .issue_update(&self.crypto, ScheduleChange::Suspend { index: k as u32 })?;
                    let peer = self.peer_party();
                    self.send(now, Party::Verifier, peer, &Message::Update(update), false);
                }
            }
            Some(k) => {
                let trace = VelocityTrace {
                    start: 0.0,
                    dt: self.dt,
                    samples: self.v_hist.clone(),
                };
                let t_now = now as f64 * self.dt;
                if !trace.is_stable_at(t_now, &det) {
                    return Ok(());
                }
                let gamma = self.verifier.schedule().expect("schedule").clone();
                let (from, to) = (gamma.entries[k - 1].distance, gamma.entries[k].distance);
                let start = gamma.entries[k - 1].absolute_time;
                let eps = self.cfg.epsilon;
                let new_time = adjusted_time(policy, from, to, start, t_now, &trace, eps, &self.acc)?;
                let earliest = now + 2 * self.cfg.latency_ticks() + 1;
                let new_tick = tick_of(new_time, self.dt).max(earliest);
                let mut entries: Vec<ChallengeEntry> = gamma.entries[..k].to_vec();
                let t_k = new_tick as f64 * self.dt;
                entries.push(ChallengeEntry {
                    distance: to,
                    deadline: t_k - start - eps,
                    absolute_time: t_k,
                });
                for j in k + 1..gamma.entries.len() {
                    let prev = entries[j - 1];
                    let d = gamma.entries[j].distance;
                    let deadline = segment_deadline(prev.distance, d, v_now, self.cfg.deadline_policy(), &self.acc)?;
                    entries.push(ChallengeEntry {
                        distance: d,
                        deadline,
                        absolute_time: prev.absolute_time + deadline + eps,
                    });
                }
                let new_gamma = ChallengeSet { entries, t0: gamma.t0 };
                let update = self.verifier.issue_update(
                    &self.crypto,
                    ScheduleChange::Reschedule {
                        gamma: new_gamma.clone(),
                    },
                )?;
                let peer = self.peer_party();
                self.send(now, Party::Verifier, peer, &Message::Update(update), false);
                self.install_schedule(&new_gamma, k, now);
                self.suspended = None;
                self.rebaselined = Some((k, v_now));
            }
        }
        Ok(())
    }

    fn peer_party(&self) -> Party {
        match self.verifier.peer() {
            Some((id, _)) if id == "C" => Party::Candidate,
            _ => Party::Adversary,
        }
    }

    fn record(&mut self, now: i64) {
        if !self.cfg.record_trace {
            return;
        }
        let time = now as f64 * self.dt;
        let v_pos = self.vehicles[0].state.position;
        for (i, v) in self.vehicles.iter().enumerate() {
            if !v.present {
                continue;
            }
            self.trace.push(TraceRow {
                tick: now,
                time,
                vehicle: v.name,
                lane: v.state.lane,
                position: v.state.position,
                velocity: v.state.velocity,
                acceleration: v.state.acceleration,
                gap: (i != 0).then_some(v_pos - v.state.position),
            });
        }
    }

    fn verifier_command(&mut self) -> f64 {
        let v = self.vehicles[0].state;
        let desired = match self.lead_idx {
            Some(l) if self.vehicles[l].present => {
                let lead = self.vehicles[l].state;
                let h = self.cfg.lead_headway;
                let gap = lead.position - v.position;
                (-((v.velocity - lead.velocity) + self.cfg.lambda * (h * v.velocity - gap)) / h).min(0.0)
            }
            _ => 0.0,
        };
        let beta = self.dt / (self.cfg.tau + self.dt);
        let a = beta * desired + (1.0 - beta) * self.verifier_prev_accel;
        self.verifier_prev_accel = a;
        a
    }

    fn follower_command(&mut self, now: i64, idx: usize, adversary: bool) -> Result<f64, HarnessError> {
        let gap = self.gap_of(idx);
        let v_c = self.vehicles[idx].state.velocity;
        let v_v = self.vehicles[0].state.velocity;
        if !adversary {
            let floor = self.cfg.g_min.min(self.cfg.time_gaps().0) * v_v - self.cfg.gamma;
            if gap < floor {
                self.abort_candidate(AbortReason::Maneuver(format!(
                    "gap {gap:.2} m below safety floor {floor:.2} m"
                )));
            }
        }
        let exec = if adversary { &mut self.m_exec } else { &mut self.c_exec };
        match exec.command(now, gap, v_c, v_v) {
            Ok(a) => Ok(a),
            Err(e) => {
                if !adversary {
                    self.abort_candidate(AbortReason::Maneuver(e.to_string()));
                }
                Ok(0.0)
            }
        }
    }

    fn abort_candidate(&mut self, reason: AbortReason) {
        if let Some(c) = self.candidate.as_mut() {
            if c.abort(reason).is_ok() {
                self.c_exec = ChallengeExecutor::new(self.cfg.d_ref(), self.acc);
            }
        }
    }

    fn advance(&mut self, now: i64) -> Result<(), HarnessError> {
        let a_v = self.verifier_command();
        let mut commands = vec![(0usize, a_v)];
        if let Some(c) = self.c_idx {
            commands.push((c, self.follower_command(now, c, false)?));
        }
        if let Some(m) = self.m_idx {
            commands.push((m, self.follower_command(now, m, true)?));
        }
        if let Some(l) = self.lead_idx {
            commands.push((l, 0.0));
        }
        for (idx, a) in commands {
            if self.vehicles[idx].present {
                self.vehicles[idx].state = integrate_step(&self.vehicles[idx].state, a, self.dt, self.limits)?;
            }
        }
        self.place_walker();
        Ok(())
    }

    fn place_walker(&mut self) {
        if let (Some(r), Some(w)) = (self.r_idx, self.walk.as_ref()) {
            let v = self.vehicles[0].state;
            self.vehicles[r].state.position = v.position - w.model.distance(w.state);
            self.vehicles[r].state.velocity = v.velocity;
            self.vehicles[r].state.acceleration = v.acceleration;
        }
    }

    fn run(mut self) -> Result<ScenarioResult, HarnessError> {
        let request_tick = self.cfg.request_tick();
        let t0_tick = self.cfg.t0_tick();
        let max_ticks = self.cfg.max_ticks();
        let mut now = 0i64;
        loop {
            if let Some(w) = self.walk.as_mut() {
                if now > 0 && now % w.step_ticks == 0 {
                    w.state = w.sampler.step(w.state, &mut self.rng_walk);
                }
            }
            self.place_walker();
            if let Some(l) = self.lead_idx {
                if now == t0_tick && !self.vehicles[l].present {
                    self.vehicles[l].present = true;
                    self.vehicles[l].state.position = self.vehicles[0].state.position + self.cfg.lead_gap;
                }
            }
            self.v_hist.push(self.vehicles[0].state.velocity);
            if now == request_tick {
                self.send_request(now)?;
            }
            while self.queue.peek().is_some_and(|Reverse(q)| q.tick <= now) {
                let Reverse(q) = self.queue.pop().expect("peeked");
                debug_assert_eq!(q.tick, now, "event left behind");
                match q.event {
                    Event::Deliver { from, to, bytes } => self.on_deliver(now, from, to, &bytes)?,
                    Event::Measure { index, version } => self.on_measure(index, version)?,
                }
            }
            self.monitor(now)?;
            self.record(now);
            if self.verifier.outcome().is_some() {
                break;
            }
            if now >= max_ticks {
                self.verifier.abort(AbortReason::Timeout)?;
                break;
            }
            self.advance(now)?;
            now += 1;
        }
        self.finish(now)
    }

    fn finish(self, end_tick: i64) -> Result<ScenarioResult, HarnessError> {
        let outcome = self.verifier.outcome().cloned().expect("terminal outcome");
        let gamma = self.verifier.schedule().cloned();
        let admitted = (outcome == Outcome::Accepted)
            .then(|| self.verifier.peer().map(|p| p.0.clone()))
            .flatten();
        let candidate_outcome = self.candidate.as_ref().and_then(|c| c.outcome().cloned());
        let mut challenges = Vec::new();
        if let (Some(g), Some(orig)) = (&gamma, &self.original_gamma) {
            let trace = VelocityTrace {
                start: 0.0,
                dt: self.dt,
                samples: self.v_hist.clone(),
            };
            for (i, e) in g.entries.iter().enumerate() {
                let model_completion = (i > 0)
                    .then(|| {
                        let start = g.entries[i - 1].absolute_time;
                        let v0 = trace.at(start);
                        compute_deadline_with_profile(
                            g.entries[i - 1].distance,
                            e.distance,
                            v0,
                            |n| trace.at(start + n as f64 * self.dt),
                            &self.acc,
                        )
                        .ok()
                        .map(|r| r.deadline)
                    })
                    .flatten();
                challenges.push(ChallengeRecord {
                    index: i,
                    distance: e.distance,
                    deadline: e.deadline,
                    original_time: orig.entries[i].absolute_time,
                    scheduled_time: e.absolute_time,
                    measured: self.recorded.get(i).copied().flatten(),
                    passed: self.report.as_ref().is_some_and(|r| r.passed[i]),
                    model_completion,
                });
            }
        }
        let recorded = gamma.as_ref().map(|g| RecordedSet {
            times: g.entries.iter().map(|e| e.absolute_time).collect(),
            readings: self.recorded.clone(),
        });
        let verification_time = match (&outcome, &gamma) {
            (Outcome::Accepted | Outcome::Rejected, Some(g)) => Some(g.end_time() - g.t0),
            _ => None,
        };
        Ok(ScenarioResult {
            kind: self.cfg.scenario,
            seed: self.cfg.seed,
            outcome,
            candidate_outcome,
            admitted,
            original_gamma: self.original_gamma,
            gamma,
            recorded,
            report: self.report,
            challenges,
            trace: self.trace,
            messages: self.messages,
            verification_time,
            end_tick,
        })
    }
}

fn apply_change(exec: &mut ChallengeExecutor, change: ScheduleChange) {
    match change {
        ScheduleChange::Suspend { index } => exec.suspend(index as usize),
        ScheduleChange::Reschedule { gamma } => exec.load(gamma),
    }
}

/// Runs one scenario to its verdict. Deterministic in `config.seed`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult, HarnessError> {
    config.validate()?;
    Sim::new(config)?.run()
}
