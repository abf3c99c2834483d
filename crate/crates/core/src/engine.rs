//! Deterministic token simulator over BPMN models.
//!
//! Time is virtual. Pending work sits in a queue ordered by (time, insertion
//! order) and every record takes the next sequence number when it is emitted,
//! so a log is ordered by time, then seq, and is a pure function of
//! (model, manifest, config).
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with `seed_from_u64`.
//! A uniform draw is `(next_u64 >> 11) * 2^-53`; a normal draw applies
//! Box-Muller to two uniform draws and is truncated at 0. Durations are rounded
//! to whole milliseconds. The log header names this scheme [`RNG_ID`].
//!
//! An activity invokes its bound services one after the other, then performs
//! its own work (if it has a profile). A `serviceInvoke` record is stamped
//! when the invocation completes. Subprocess containers emit no activity
//! records of their own.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpmn::{BpmnElement, BpmnKind, BpmnModel, Container, SequenceFlow};
use crate::deploy::DeploymentManifest;
use crate::mappings::Uid;

pub const LOG_VERSION: u32 = 1;
pub const RNG_ID: &str = "chacha8-u53-boxmuller";

const BRANCH_TOLERANCE: f64 = 1e-9;
const MAX_INSTANT_MOVES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationProfile {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, stddev: f64 },
}

impl DurationProfile {
    fn check(&self) -> Result<(), String> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match *self {
            DurationProfile::Fixed(v) if ok(v) => Ok(()),
            DurationProfile::Uniform { lo, hi } if ok(lo) && ok(hi) && lo <= hi => Ok(()),
            DurationProfile::Normal { mean, stddev } if ok(mean) && ok(stddev) => Ok(()),
            _ => Err(format!("invalid profile {self:?}")),
        }
    }

    fn sample(&self, rng: &mut SimRng) -> u64 {
        let v = match *self {
            DurationProfile::Fixed(v) => v,
            DurationProfile::Uniform { lo, hi } => lo + rng.uniform() * (hi - lo),
            DurationProfile::Normal { mean, stddev } => (mean + stddev * rng.standard_normal()).max(0.0),
        };
        v.round() as u64
    }
}

/// `sim.json`. `instance_count` and `seed` may be overridden from the command line.
///
/// `branch_probs` maps an exclusive gateway id to probabilities keyed by
/// outgoing flow id or target element id. A gateway without an entry takes
/// its `default` flow if it has one, otherwise each branch uniformly.
/// `fault_probs` is keyed by concept uid or element id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "one")]
    pub instance_count: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub profiles: BTreeMap<String, DurationProfile>,
    #[serde(default)]
    pub branch_probs: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub fault_probs: BTreeMap<String, f64>,
    /// Profile for elements without one from the manifest, e.g. technical additions.
    #[serde(default)]
    pub element_profiles: BTreeMap<String, String>,
    /// Fallback for services and technical tasks with no profile at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_profile: Option<String>,
    /// Gap between consecutive instance starts.
    #[serde(default)]
    pub arrival_interval_ms: u64,
}

fn one() -> u64 {
    1
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            instance_count: 1,
            seed: 0,
            profiles: BTreeMap::new(),
            branch_probs: BTreeMap::new(),
            fault_probs: BTreeMap::new(),
            element_profiles: BTreeMap::new(),
            default_profile: None,
            arrival_interval_ms: 0,
        }
    }
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RecordKind {
    ProcessStart,
    ProcessEnd,
    ActivityStart,
    ActivityEnd,
    ServiceInvoke,
    GatewayTaken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Fault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub log_version: u32,
    pub seed: u64,
    pub rng: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub ts_ms: u64,
    pub kind: RecordKind,
    pub process: String,
    pub instance: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_uid: Option<Uid>,
    pub element_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    /// Sequence flow taken, on `gatewayTaken`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<String>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub records: Vec<EventRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct LogError {
    pub line: usize,
    pub message: String,
}

impl EventLog {
    /// JSON Lines: the header, then one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(LogError { line: 1, message: "missing log header".into() })?;
        let header = parse_header(first).map_err(|message| LogError { line: 1, message })?;
        let mut records = Vec::new();
        for (i, line) in lines {
            let r = serde_json::from_str(line).map_err(|e| LogError { line: i + 1, message: e.to_string() })?;
            records.push(r);
        }
        Ok(EventLog { header, records })
    }
}

pub fn parse_header(line: &str) -> Result<LogHeader, String> {
    let h: LogHeader = serde_json::from_str(line).map_err(|e| format!("bad log header: {e}"))?;
    if h.log_version != LOG_VERSION {
        return Err(format!("unsupported log_version {}", h.log_version));
    }
    Ok(h)
}

/// Per-instance token accounting. Tokens are created by start events, forks
/// and subprocess entry, and absorbed by end events, joins and faults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenStats {
    pub created: u64,
    pub absorbed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub log: EventLog,
    /// Indexed by instance number minus one.
    pub tokens: Vec<TokenStats>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("no duration profile for {}", match .service { Some(s) => format!("service `{s}` of `{}`", .element), None => format!("`{}`", .element) })]
    MissingProfile { element: String, service: Option<String> },
    #[error("unknown duration profile `{0}`")]
    UnknownProfile(String),
    #[error("element `{element}` carries uid {uid}, which the manifest does not list")]
    NotInManifest { element: String, uid: Uid },
    #[error("manifest is for process `{manifest}`, model is `{model}`")]
    ProcessMismatch { model: String, manifest: String },
    #[error("scope `{0}` has no start event")]
    NoStartEvent(String),
    #[error("instance {instance} deadlocked waiting at {}", .gateways.join(", "))]
    Deadlock { instance: u64, gateways: Vec<String> },
    #[error("instance {instance} loops without advancing time")]
    Livelock { instance: u64 },
}

/// Run `cfg.instance_count` instances of `b`.
pub fn simulate(b: &BpmnModel, manifest: &DeploymentManifest, cfg: &SimulationConfig) -> Result<Simulation, SimError> {
    if manifest.process != b.process_id {
        return Err(SimError::ProcessMismatch { model: b.process_id.clone(), manifest: manifest.process.clone() });
    }
    let index = Index::build(b, manifest, cfg)?;
    let mut sim = Sim {
        ix: &index,
        process: &b.process_id,
        rng: SimRng::new(cfg.seed),
        now: 0,
        order: 0,
        queue: BTreeMap::new(),
        records: Vec::new(),
        insts: Vec::new(),
        scopes: Vec::new(),
        work: VecDeque::new(),
    };
    for i in 0..cfg.instance_count {
        sim.insts.push(Inst {
            start: 0,
            pending: 0,
            faulted: false,
            ended: false,
            root: 0,
            stats: TokenStats::default(),
        });
        sim.schedule(i as usize, i * cfg.arrival_interval_ms, Action::Begin);
    }
    sim.run()?;
    let tokens = sim.insts.iter().map(|i| i.stats).collect();
    Ok(Simulation {
        log: EventLog {
            header: LogHeader { log_version: LOG_VERSION, seed: cfg.seed, rng: RNG_ID.into() },
            records: sim.records,
        },
        tokens,
    })
}

struct SimRng(ChaCha8Rng);

impl SimRng {
    fn new(seed: u64) -> Self {
        SimRng(ChaCha8Rng::seed_from_u64(seed))
    }

    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

struct Plan<'a> {
    uid: Option<&'a Uid>,
    concept: Option<&'a str>,
    services: Vec<(&'a str, &'a DurationProfile)>,
    own: Option<&'a DurationProfile>,
    fault_p: f64,
}

struct Index<'a> {
    elements: HashMap<&'a str, &'a BpmnElement>,
    outgoing: HashMap<&'a str, Vec<&'a SequenceFlow>>,
    incoming: HashMap<&'a str, Vec<&'a str>>,
    starts: HashMap<&'a str, Vec<&'a str>>,
    root_starts: Vec<&'a str>,
    plans: HashMap<&'a str, Plan<'a>>,
    branches: HashMap<&'a str, Vec<(&'a str, f64)>>,
}

fn starts_of(c: &Container) -> Vec<&str> {
    c.elements.iter().filter(|e| e.kind == BpmnKind::StartEvent).map(|e| e.id.as_str()).collect()
}

impl<'a> Index<'a> {
    fn build(b: &'a BpmnModel, manifest: &'a DeploymentManifest, cfg: &'a SimulationConfig) -> Result<Self, SimError> {
        let invalid = |m: String| SimError::InvalidConfig(m);
        if cfg.instance_count == 0 {
            return Err(invalid("instance_count must be positive".into()));
        }
        for (name, p) in &cfg.profiles {
            p.check().map_err(|m| invalid(format!("profile `{name}`: {m}")))?;
        }
        let profile = |name: &str| cfg.profiles.get(name).ok_or_else(|| SimError::UnknownProfile(name.to_string()));

        let mut ix = Index {
            elements: HashMap::new(),
            outgoing: HashMap::new(),
            incoming: HashMap::new(),
            starts: HashMap::new(),
            root_starts: starts_of(&b.body),
            plans: HashMap::new(),
            branches: HashMap::new(),
        };
        if ix.root_starts.is_empty() {
            return Err(SimError::NoStartEvent(b.process_id.clone()));
        }
        for (_, c) in b.body.scopes() {
            for f in &c.sequence_flows {
                ix.outgoing.entry(f.source.as_str()).or_default().push(f);
                ix.incoming.entry(f.target.as_str()).or_default().push(f.id.as_str());
            }
            for e in &c.elements {
                ix.elements.insert(e.id.as_str(), e);
                if let Some(inner) = &e.inner {
                    let s = starts_of(inner);
                    if s.is_empty() {
                        return Err(SimError::NoStartEvent(e.id.clone()));
                    }
                    ix.starts.insert(e.id.as_str(), s);
                }
            }
        }

        for key in cfg.fault_probs.keys().chain(cfg.element_profiles.keys()) {
            let known = ix.elements.contains_key(key.as_str())
                || ix.elements.values().any(|e| e.concept_uid().is_some_and(|u| u.as_str() == key));
            if !known {
                return Err(invalid(format!("`{key}` names no element of `{}`", b.process_id)));
            }
        }
        for (key, p) in &cfg.fault_probs {
            if !(0.0..=1.0).contains(p) {
                return Err(invalid(format!("fault probability for `{key}` outside [0, 1]")));
            }
        }

        for e in b.all_elements().filter(|e| e.kind.is_task()) {
            let uid = e.concept_uid();
            let row = match uid {
                Some(u) => Some(
                    manifest.row(u).ok_or_else(|| SimError::NotInManifest { element: e.id.clone(), uid: u.clone() })?,
                ),
                None => None,
            };
            let mut services = Vec::new();
            for s in row.map(|r| r.services.as_slice()).unwrap_or_default() {
                let name = s.profile.as_deref().or(cfg.default_profile.as_deref()).ok_or_else(|| {
                    SimError::MissingProfile { element: e.id.clone(), service: Some(s.service.clone()) }
                })?;
                services.push((s.service.as_str(), profile(name)?));
            }
            let mut own =
                row.and_then(|r| r.profile.as_deref()).or(cfg.element_profiles.get(&e.id).map(String::as_str));
            if own.is_none() && services.is_empty() {
                own = Some(
                    cfg.default_profile
                        .as_deref()
                        .ok_or_else(|| SimError::MissingProfile { element: e.id.clone(), service: None })?,
                );
            }
            let fault_p = uid
                .and_then(|u| cfg.fault_probs.get(u.as_str()))
                .or(cfg.fault_probs.get(&e.id))
                .copied()
                .unwrap_or(0.0);
            ix.plans.insert(
                e.id.as_str(),
                Plan {
                    uid,
                    concept: row.map(|r| r.concept.as_str()),
                    services,
                    own: own.map(profile).transpose()?,
                    fault_p,
                },
            );
        }

        for gw in cfg.branch_probs.keys() {
            match ix.elements.get(gw.as_str()) {
                Some(e) if e.kind == BpmnKind::ExclusiveGateway => {}
                _ => return Err(invalid(format!("branch_probs: `{gw}` is not an exclusive gateway"))),
            }
        }
        for e in b.all_elements().filter(|e| e.kind == BpmnKind::ExclusiveGateway) {
            let outs = ix.outgoing.get(e.id.as_str()).map(Vec::as_slice).unwrap_or_default();
            if outs.len() < 2 {
                continue;
            }
            let probs: Vec<(&str, f64)> = match cfg.branch_probs.get(&e.id) {
                Some(given) => {
                    for key in given.keys() {
                        if !outs.iter().any(|f| &f.id == key || &f.target == key) {
                            return Err(invalid(format!("branch_probs: `{key}` is not a branch of `{}`", e.id)));
                        }
                    }
                    let probs: Vec<_> = outs
                        .iter()
                        .map(|f| (f.id.as_str(), given.get(&f.id).or(given.get(&f.target)).copied().unwrap_or(0.0)))
                        .collect();
                    if probs.iter().any(|(_, p)| !(0.0..=1.0).contains(p)) {
                        return Err(invalid(format!("branch_probs for `{}` outside [0, 1]", e.id)));
                    }
                    let sum: f64 = probs.iter().map(|(_, p)| p).sum();
                    if (sum - 1.0).abs() > BRANCH_TOLERANCE {
                        return Err(invalid(format!("branch_probs for `{}` sum to {sum}", e.id)));
                    }
                    probs
                }
                None => match e.attr("default").filter(|d| outs.iter().any(|f| f.id == *d)) {
                    Some(d) => outs.iter().map(|f| (f.id.as_str(), if f.id == d { 1.0 } else { 0.0 })).collect(),
                    None => outs.iter().map(|f| (f.id.as_str(), 1.0 / outs.len() as f64)).collect(),
                },
            };
            ix.branches.insert(e.id.as_str(), probs);
        }
        Ok(ix)
    }

    fn outgoing(&self, id: &str) -> &[&'a SequenceFlow] {
        self.outgoing.get(id).map(Vec::as_slice).unwrap_or_default()
    }
}

enum Action<'a> {
    Begin,
    Service { scope: usize, element: &'a str, service: &'a str, duration: u64 },
    Complete { scope: usize, element: &'a str, duration: u64, status: Status },
}

struct Inst {
    start: u64,
    /// Queued actions belonging to this instance.
    pending: usize,
    faulted: bool,
    ended: bool,
    root: usize,
    stats: TokenStats,
}

struct Scope<'a> {
    inst: usize,
    /// Tokens alive in this scope, including those parked at joins or inside a subprocess.
    live: u64,
    parent: Option<(usize, &'a str)>,
    /// Parallel join -> incoming flow -> tokens waiting.
    joins: BTreeMap<&'a str, BTreeMap<&'a str, u64>>,
}

struct Sim<'a, 'ix> {
    ix: &'ix Index<'a>,
    process: &'a str,
    rng: SimRng,
    now: u64,
    order: u64,
    queue: BTreeMap<(u64, u64), (usize, Action<'a>)>,
    records: Vec<EventRecord>,
    insts: Vec<Inst>,
    scopes: Vec<Scope<'a>>,
    /// Tokens moving instantly: (scope, target element, flow taken).
    work: VecDeque<(usize, &'a str, &'a str)>,
}

impl<'a> Sim<'a, '_> {
    fn schedule(&mut self, inst: usize, at: u64, action: Action<'a>) {
        self.order += 1;
        self.insts[inst].pending += 1;
        self.queue.insert((at, self.order), (inst, action));
    }

    fn emit(&mut self, kind: RecordKind, inst: usize, element_id: &str) -> &mut EventRecord {
        self.records.push(EventRecord {
            seq: self.records.len() as u64 + 1,
            ts_ms: self.now,
            kind,
            process: self.process.to_string(),
            instance: inst as u64 + 1,
            element_uid: None,
            element_id: element_id.to_string(),
            concept: None,
            service: None,
            flow: None,
            status: Status::Ok,
            duration_ms: None,
        });
        self.records.last_mut().expect("just pushed")
    }

    fn emit_activity(&mut self, kind: RecordKind, scope: usize, element: &str) -> &mut EventRecord {
        let inst = self.scopes[scope].inst;
        let plan = &self.ix.plans[element];
        let (uid, concept) = (plan.uid.cloned(), plan.concept.map(str::to_string));
        let r = self.emit(kind, inst, element);
        r.element_uid = uid;
        r.concept = concept;
        r
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(((at, _), (inst, action))) = self.queue.pop_first() {
            self.now = at;
            self.insts[inst].pending -= 1;
            match action {
                Action::Begin => self.begin(inst)?,
                Action::Service { scope, element, service, duration } => {
                    let r = self.emit_activity(RecordKind::ServiceInvoke, scope, element);
                    r.service = Some(service.to_string());
                    r.duration_ms = Some(duration);
                }
                Action::Complete { scope, element, duration, status } => {
                    let r = self.emit_activity(RecordKind::ActivityEnd, scope, element);
                    r.status = status;
                    r.duration_ms = Some(duration);
                    if status == Status::Fault {
                        self.insts[inst].faulted = true;
                    }
                    if self.insts[inst].faulted {
                        self.absorb(scope);
                    } else {
                        self.leave(scope, element);
                    }
                }
            }
            self.flush(inst)?;
            self.settle(inst)?;
        }
        Ok(())
    }

    fn begin(&mut self, inst: usize) -> Result<(), SimError> {
        self.insts[inst].start = self.now;
        self.emit(RecordKind::ProcessStart, inst, self.process);
        let root = self.new_scope(inst, None);
        self.insts[inst].root = root;
        for start in self.ix.root_starts.clone() {
            self.spawn(root, start);
        }
        Ok(())
    }

    fn new_scope(&mut self, inst: usize, parent: Option<(usize, &'a str)>) -> usize {
        self.scopes.push(Scope { inst, live: 0, parent, joins: BTreeMap::new() });
        self.scopes.len() - 1
    }

    fn spawn(&mut self, scope: usize, start: &'a str) {
        let inst = self.scopes[scope].inst;
        self.insts[inst].stats.created += 1;
        self.scopes[scope].live += 1;
        self.leave(scope, start);
    }

    /// Send the token at `element` along all its outgoing flows.
    fn leave(&mut self, scope: usize, element: &'a str) {
        let outs = self.ix.outgoing(element);
        if outs.is_empty() {
            self.absorb(scope);
            return;
        }
        self.fork(scope, outs.len());
        for f in outs {
            self.work.push_back((scope, f.target.as_str(), f.id.as_str()));
        }
    }

    fn fork(&mut self, scope: usize, n: usize) {
        let extra = n as u64 - 1;
        let inst = self.scopes[scope].inst;
        self.insts[inst].stats.created += extra;
        self.scopes[scope].live += extra;
    }

    fn absorb(&mut self, scope: usize) {
        let inst = self.scopes[scope].inst;
        self.insts[inst].stats.absorbed += 1;
        self.scopes[scope].live -= 1;
        if self.scopes[scope].live > 0 {
            return;
        }
        match self.scopes[scope].parent {
            None => self.end(inst),
            Some((parent, _)) if self.insts[inst].faulted => self.absorb(parent),
            Some((parent, element)) => self.leave(parent, element),
        }
    }

    fn end(&mut self, inst: usize) {
        let status = if self.insts[inst].faulted { Status::Fault } else { Status::Ok };
        let duration = self.now - self.insts[inst].start;
        let r = self.emit(RecordKind::ProcessEnd, inst, self.process);
        r.status = status;
        r.duration_ms = Some(duration);
        self.insts[inst].ended = true;
    }

    fn flush(&mut self, inst: usize) -> Result<(), SimError> {
        let mut moves = 0;
        while let Some((scope, element, flow)) = self.work.pop_front() {
            moves += 1;
            if moves > MAX_INSTANT_MOVES {
                return Err(SimError::Livelock { instance: inst as u64 + 1 });
            }
            self.arrive(scope, element, flow);
        }
        Ok(())
    }

    fn arrive(&mut self, scope: usize, element: &'a str, flow: &'a str) {
        let inst = self.scopes[scope].inst;
        let el = self.ix.elements[element];
        match &el.kind {
            BpmnKind::EndEvent => self.absorb(scope),
            k if k.is_task() => self.start_activity(scope, element),
            BpmnKind::SubProcess => {
                let child = self.new_scope(inst, Some((scope, element)));
                for start in self.ix.starts[element].clone() {
                    self.spawn(child, start);
                }
            }
            BpmnKind::ExclusiveGateway => {
                let outs = self.ix.outgoing(element);
                let taken = match outs.len() {
                    0 => return self.absorb(scope),
                    1 => outs[0],
                    _ => {
                        let probs = &self.ix.branches[element];
                        let u = self.rng.uniform();
                        let mut acc = 0.0;
                        let mut pick = probs.iter().rposition(|(_, p)| *p > 0.0).unwrap_or(0);
                        for (i, (_, p)) in probs.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                pick = i;
                                break;
                            }
                        }
                        outs[pick]
                    }
                };
                self.emit(RecordKind::GatewayTaken, inst, element).flow = Some(taken.id.clone());
                self.work.push_back((scope, taken.target.as_str(), taken.id.as_str()));
            }
            BpmnKind::ParallelGateway => {
                let incoming = self.ix.incoming.get(element).map(Vec::as_slice).unwrap_or_default();
                if incoming.len() > 1 {
                    let waiting = self.scopes[scope].joins.entry(element).or_default();
                    *waiting.entry(flow).or_default() += 1;
                    if !incoming.iter().all(|f| waiting.get(f).is_some_and(|n| *n > 0)) {
                        return;
                    }
                    for f in incoming {
                        *waiting.get_mut(f).expect("checked above") -= 1;
                    }
                    waiting.retain(|_, n| *n > 0);
                    let merged = incoming.len() as u64 - 1;
                    self.insts[inst].stats.absorbed += merged;
                    self.scopes[scope].live -= merged;
                }
                let outs = self.ix.outgoing(element);
                if outs.is_empty() {
                    return self.absorb(scope);
                }
                for f in outs {
                    self.emit(RecordKind::GatewayTaken, inst, element).flow = Some(f.id.clone());
                }
                self.leave(scope, element);
            }
            _ => self.leave(scope, element),
        }
    }

    fn start_activity(&mut self, scope: usize, element: &'a str) {
        let inst = self.scopes[scope].inst;
        self.emit_activity(RecordKind::ActivityStart, scope, element);
        let plan = &self.ix.plans[element];
        let mut t = self.now;
        for (service, profile) in &plan.services {
            let d = profile.sample(&mut self.rng);
            t += d;
            self.schedule(inst, t, Action::Service { scope, element, service, duration: d });
        }
        if let Some(own) = plan.own {
            t += own.sample(&mut self.rng);
        }
        let fault = plan.fault_p > 0.0 && self.rng.uniform() < plan.fault_p;
        let status = if fault { Status::Fault } else { Status::Ok };
        self.schedule(inst, t, Action::Complete { scope, element, duration: t - self.now, status });
    }

    /// Once an instance has no queued work, it must have ended; a faulted
    /// instance ends here, absorbing any tokens still parked at joins.
    fn settle(&mut self, inst: usize) -> Result<(), SimError> {
        let i = &self.insts[inst];
        if i.ended || i.pending > 0 {
            return Ok(());
        }
        let parked: Vec<String> = self
            .scopes
            .iter()
            .filter(|s| s.inst == inst)
            .flat_map(|s| s.joins.iter().filter(|(_, w)| !w.is_empty()).map(|(g, _)| g.to_string()))
            .collect();
        if !self.insts[inst].faulted {
            return Err(SimError::Deadlock { instance: inst as u64 + 1, gateways: parked });
        }
        let live: u64 = self.scopes.iter().filter(|s| s.inst == inst && s.parent.is_none()).map(|s| s.live).sum();
        let nested: u64 = self.scopes.iter().filter(|s| s.inst == inst && s.parent.is_some()).map(|s| s.live).sum();
        self.insts[inst].stats.absorbed += live + nested;
        for s in self.scopes.iter_mut().filter(|s| s.inst == inst) {
            s.live = 0;
        }
        self.end(inst);
        Ok(())
    }
}
