//! Concept probes and business process probes over an event log.
//!
//! Raw data collection routes each record by its element uid through `AM`:
//! activity records land in the probe of the activity's concept (BPMS layer),
//! service invocations in the same probe under the invoked abstract service
//! (SOA layer). Records of elements absent from `AM` land in a technical
//! bucket of their process and never reach a concept probe.
//!
//! Statistics are exact: sums are integer milliseconds, p95 is the
//! nearest-rank value.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, PoisonError, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Sla, SlaAssignment, SlaMetric, SlaSeverity, SlaUnit};
use crate::engine::{parse_header, EventLog, EventRecord, LogHeader, RecordKind, Status};
use crate::mappings::{ActivityMappings, ConceptMappings, Uid};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub duration_ms: u64,
    pub status: Status,
    pub process: String,
    pub instance: u64,
    pub ts_ms: u64,
}

impl Sample {
    fn of(r: &EventRecord, duration_ms: u64) -> Self {
        Sample { duration_ms, status: r.status, process: r.process.clone(), instance: r.instance, ts_ms: r.ts_ms }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptProbe {
    pub concept: String,
    pub bpms: Vec<Sample>,
    /// Abstract service -> invocations.
    pub soa: BTreeMap<String, Vec<Sample>>,
    pub slas: Vec<Sla>,
}

impl ConceptProbe {
    fn new(concept: &str, services: &[String]) -> Self {
        Self {
            concept: concept.to_string(),
            bpms: Vec::new(),
            soa: services.iter().map(|s| (s.clone(), Vec::new())).collect(),
            slas: Vec::new(),
        }
    }

    pub fn soa_samples(&self) -> impl Iterator<Item = &Sample> {
        self.soa.values().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceRecord {
    pub start_ms: u64,
    pub end_ms: Option<u64>,
    pub status: Option<Status>,
}

impl InstanceRecord {
    pub fn duration_ms(&self) -> Option<u64> {
        self.end_ms.map(|e| e - self.start_ms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessProbe {
    pub process: String,
    pub instances: BTreeMap<u64, InstanceRecord>,
    /// Concepts whose probes this process feeds.
    pub concepts: BTreeSet<String>,
    /// Every service invocation in this process, mapped or not.
    pub soa: Vec<Sample>,
    /// Technical bucket: activities of elements absent from `AM`.
    pub technical: Vec<Sample>,
    pub technical_soa: Vec<Sample>,
    pub technical_elements: BTreeSet<String>,
}

impl ProcessProbe {
    fn new(process: &str) -> Self {
        Self {
            process: process.to_string(),
            instances: BTreeMap::new(),
            concepts: BTreeSet::new(),
            soa: Vec::new(),
            technical: Vec::new(),
            technical_soa: Vec::new(),
            technical_elements: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonitorError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: process `{process}` has no activity mappings")]
    UnknownProcess { line: usize, process: String },
    #[error("line {line}: concept `{concept}` does not use service `{service}`")]
    ForeignService { line: usize, concept: String, service: String },
    #[error("no probe for `{0}`")]
    UnknownSubject(String),
}

fn malformed(line: usize, message: impl Into<String>) -> MonitorError {
    MonitorError::Malformed { line, message: message.into() }
}

/// All probes for one monitored log.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub concepts: BTreeMap<String, ConceptProbe>,
    pub processes: BTreeMap<String, ProcessProbe>,
    /// BPMS samples per mapped activity.
    pub nodes: BTreeMap<Uid, Vec<Sample>>,
    am: ActivityMappings,
    cm: HashMap<String, BTreeSet<String>>,
    header: Option<LogHeader>,
    last_seq: u64,
    /// Lines consumed, header included.
    lines: usize,
}

enum Route {
    ProcessStart,
    ProcessEnd,
    Activity(Option<Uid>, u64),
    Service(Option<Uid>, String, u64),
    Ignore,
}

impl ProbeSet {
    /// One concept probe per concept in `AM`, one process probe per process.
    pub fn new(am: &ActivityMappings, cm: &ConceptMappings) -> Self {
        let cm: HashMap<String, BTreeSet<String>> =
            cm.iter().map(|(c, s)| (c.to_string(), s.iter().cloned().collect())).collect();
        let mut concepts = BTreeMap::new();
        let mut processes: BTreeMap<String, ProcessProbe> =
            am.processes().iter().map(|p| (p.clone(), ProcessProbe::new(p))).collect();
        let mut nodes = BTreeMap::new();
        for (uid, e) in am.iter() {
            let services: Vec<String> = cm.get(&e.concept).map(|s| s.iter().cloned().collect()).unwrap_or_default();
            concepts.entry(e.concept.clone()).or_insert_with(|| ConceptProbe::new(&e.concept, &services));
            processes
                .entry(e.process.clone())
                .or_insert_with(|| ProcessProbe::new(&e.process))
                .concepts
                .insert(e.concept.clone());
            nodes.insert(uid.clone(), Vec::new());
        }
        Self { concepts, processes, nodes, am: am.clone(), cm, header: None, last_seq: 0, lines: 0 }
    }

    pub fn am(&self) -> &ActivityMappings {
        &self.am
    }

    pub fn header(&self) -> Option<&LogHeader> {
        self.header.as_ref()
    }

    /// Consume one line of a JSON Lines log. The first non-blank line must be the header.
    pub fn push_line(&mut self, line: &str) -> Result<(), MonitorError> {
        let n = self.lines + 1;
        if line.trim().is_empty() {
            self.lines = n;
            return Ok(());
        }
        if self.header.is_none() {
            self.header = Some(parse_header(line).map_err(|m| malformed(n, m))?);
            self.lines = n;
            return Ok(());
        }
        let r: EventRecord = serde_json::from_str(line).map_err(|e| malformed(n, e.to_string()))?;
        self.apply(n, &r)?;
        self.lines = n;
        Ok(())
    }

    /// Apply one record. Either the whole record is applied or nothing is.
    pub fn apply(&mut self, line: usize, r: &EventRecord) -> Result<(), MonitorError> {
        let route = self.route(line, r)?;
        self.last_seq = r.seq;
        let p = self.processes.get_mut(&r.process).expect("route checked the process");
        match route {
            Route::Ignore => {}
            Route::ProcessStart => {
                p.instances.insert(r.instance, InstanceRecord { start_ms: r.ts_ms, end_ms: None, status: None });
            }
            Route::ProcessEnd => {
                let i = p.instances.get_mut(&r.instance).expect("route checked the instance");
                i.end_ms = Some(r.ts_ms);
                i.status = Some(r.status);
            }
            Route::Activity(Some(uid), d) => {
                let concept = &self.am.get(&uid).expect("route checked the uid").concept;
                self.concepts.get_mut(concept).expect("probe per AM concept").bpms.push(Sample::of(r, d));
                self.nodes.get_mut(&uid).expect("node per AM uid").push(Sample::of(r, d));
            }
            Route::Activity(None, d) => {
                p.technical.push(Sample::of(r, d));
                p.technical_elements.insert(r.element_id.clone());
            }
            Route::Service(uid, service, d) => {
                p.soa.push(Sample::of(r, d));
                match uid {
                    Some(uid) => {
                        let concept = &self.am.get(&uid).expect("route checked the uid").concept;
                        let probe = self.concepts.get_mut(concept).expect("probe per AM concept");
                        probe.soa.entry(service).or_default().push(Sample::of(r, d));
                    }
                    None => p.technical_soa.push(Sample::of(r, d)),
                }
            }
        }
        Ok(())
    }

    fn route(&self, line: usize, r: &EventRecord) -> Result<Route, MonitorError> {
        if r.seq <= self.last_seq {
            return Err(malformed(line, format!("seq {} does not increase", r.seq)));
        }
        let Some(p) = self.processes.get(&r.process) else {
            return Err(MonitorError::UnknownProcess { line, process: r.process.clone() });
        };
        let duration = || r.duration_ms.ok_or_else(|| malformed(line, "missing duration_ms"));
        let mapped = || match &r.element_uid {
            Some(uid) => match self.am.get(uid) {
                Some(e) if e.process == r.process => Ok(Some(uid.clone())),
                Some(e) => Err(malformed(line, format!("uid {uid} belongs to process `{}`", e.process))),
                None => Ok(None),
            },
            None => Ok(None),
        };
        Ok(match r.kind {
            RecordKind::ProcessStart => {
                if p.instances.contains_key(&r.instance) {
                    return Err(malformed(line, format!("instance {} started twice", r.instance)));
                }
                Route::ProcessStart
            }
            RecordKind::ProcessEnd => {
                let d = duration()?;
                match p.instances.get(&r.instance) {
                    Some(i) if i.end_ms.is_none() && r.ts_ms >= i.start_ms && r.ts_ms - i.start_ms == d => {}
                    Some(i) if i.end_ms.is_none() => {
                        return Err(malformed(
                            line,
                            format!("duration_ms {d} disagrees with instance {} timestamps", r.instance),
                        ))
                    }
                    _ => {
                        return Err(malformed(
                            line,
                            format!("processEnd for instance {} without a running start", r.instance),
                        ))
                    }
                }
                Route::ProcessEnd
            }
            RecordKind::ActivityEnd => Route::Activity(mapped()?, duration()?),
            RecordKind::ServiceInvoke => {
                let service = r.service.clone().ok_or_else(|| malformed(line, "serviceInvoke without service"))?;
                let uid = mapped()?;
                if let Some(uid) = &uid {
                    let concept = &self.am.get(uid).expect("mapped").concept;
                    if !self.cm.get(concept).is_some_and(|s| s.contains(&service)) {
                        return Err(MonitorError::ForeignService { line, concept: concept.clone(), service });
                    }
                }
                Route::Service(uid, service, duration()?)
            }
            RecordKind::ActivityStart | RecordKind::GatewayTaken => Route::Ignore,
        })
    }

    /// Attach an SLA to a concept probe. Re-registering the same SLA is a no-op.
    pub fn register(&mut self, concept: &str, sla: &Sla) -> Result<(), MonitorError> {
        let probe = self.concepts.get_mut(concept).ok_or_else(|| MonitorError::UnknownSubject(concept.to_string()))?;
        if !probe.slas.contains(sla) {
            probe.slas.push(sla.clone());
            probe.slas.sort_by(|a, b| a.name.cmp(&b.name));
        }
        Ok(())
    }
}

/// Batch ingestion of a whole JSON Lines log.
pub fn ingest(log: &str, am: &ActivityMappings, cm: &ConceptMappings) -> Result<ProbeSet, MonitorError> {
    let mut probes = ProbeSet::new(am, cm);
    for line in log.lines() {
        probes.push_line(line)?;
    }
    if probes.header.is_none() {
        return Err(malformed(1, "missing log header"));
    }
    Ok(probes)
}

pub fn ingest_log(log: &EventLog, am: &ActivityMappings, cm: &ConceptMappings) -> Result<ProbeSet, MonitorError> {
    let mut probes = ProbeSet::new(am, cm);
    probes.header = Some(log.header.clone());
    for (i, r) in log.records.iter().enumerate() {
        probes.apply(i + 2, r)?;
    }
    Ok(probes)
}

/// Follow-stream ingestion. Writers apply whole records under a write lock,
/// so readers of [`LiveProbes::snapshot`] never see a half-applied record.
#[derive(Debug, Clone)]
pub struct LiveProbes {
    inner: Arc<RwLock<ProbeSet>>,
}

impl LiveProbes {
    pub fn new(am: &ActivityMappings, cm: &ConceptMappings) -> Self {
        Self { inner: Arc::new(RwLock::new(ProbeSet::new(am, cm))) }
    }

    pub fn push_line(&self, line: &str) -> Result<(), MonitorError> {
        self.inner.write().unwrap_or_else(PoisonError::into_inner).push_line(line)
    }

    pub fn snapshot(&self) -> ProbeSet {
        self.inner.read().unwrap_or_else(PoisonError::into_inner).clone()
    }

    pub fn read<T>(&self, f: impl FnOnce(&ProbeSet) -> T) -> T {
        f(&self.inner.read().unwrap_or_else(PoisonError::into_inner))
    }
}

/// Attach propagated SLAs to the probes of their concepts.
pub fn register_sla(probes: &mut ProbeSet, slas: &[SlaAssignment]) -> Result<(), MonitorError> {
    if let Some(missing) = slas.iter().find(|a| !probes.concepts.contains_key(&a.concept)) {
        return Err(MonitorError::UnknownSubject(missing.concept.clone()));
    }
    for a in slas {
        probes.register(&a.concept, &a.sla)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: u64,
    pub faults: u64,
    pub total_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p95_ms: Option<u64>,
}

impl Stats {
    pub fn of<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Self {
        let mut durations = Vec::new();
        let mut faults = 0;
        for s in samples {
            durations.push(s.duration_ms);
            faults += u64::from(s.status == Status::Fault);
        }
        Self::from_durations(durations, faults)
    }

    pub fn from_durations(mut durations: Vec<u64>, faults: u64) -> Self {
        let count = durations.len() as u64;
        let total: u64 = durations.iter().sum();
        if count == 0 {
            return Stats { faults, ..Stats::default() };
        }
        durations.sort_unstable();
        let rank = (95 * durations.len()).div_ceil(100);
        Stats {
            count,
            faults,
            total_ms: total,
            mean_ms: Some(total as f64 / count as f64),
            min_ms: durations.first().copied(),
            max_ms: durations.last().copied(),
            p95_ms: Some(durations[rank - 1]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectKind {
    Concept,
    Technical,
    Process,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeMetric {
    /// Concept name, or process name for technical and process subjects.
    pub subject: String,
    pub kind: SubjectKind,
    /// Activity durations; instance durations for a process.
    pub bpms: Stats,
    pub soa: Stats,
    /// Share of all activity time; absent for processes or when no activity time was recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contribution_pct: Option<f64>,
}

fn pct(part: u64, total: u64) -> Option<f64> {
    (total > 0).then(|| part as f64 / total as f64 * 100.0)
}

/// Sum of every activity duration, mapped or technical.
pub fn total_activity_ms(probes: &ProbeSet) -> u64 {
    let concepts: u64 = probes.concepts.values().flat_map(|c| &c.bpms).map(|s| s.duration_ms).sum();
    let technical: u64 = probes.processes.values().flat_map(|p| &p.technical).map(|s| s.duration_ms).sum();
    concepts + technical
}

/// Concepts, then technical buckets, then processes; each group by name.
pub fn composite_metrics(probes: &ProbeSet) -> Vec<CompositeMetric> {
    let total = total_activity_ms(probes);
    let mut out = Vec::new();
    for c in probes.concepts.values() {
        let bpms = Stats::of(&c.bpms);
        out.push(CompositeMetric {
            subject: c.concept.clone(),
            kind: SubjectKind::Concept,
            contribution_pct: pct(bpms.total_ms, total),
            bpms,
            soa: Stats::of(c.soa_samples()),
        });
    }
    for p in probes.processes.values() {
        let bpms = Stats::of(&p.technical);
        out.push(CompositeMetric {
            subject: p.process.clone(),
            kind: SubjectKind::Technical,
            contribution_pct: pct(bpms.total_ms, total),
            bpms,
            soa: Stats::of(&p.technical_soa),
        });
    }
    for p in probes.processes.values() {
        out.push(CompositeMetric {
            subject: p.process.clone(),
            kind: SubjectKind::Process,
            bpms: instance_stats(p),
            soa: Stats::of(&p.soa),
            contribution_pct: None,
        });
    }
    out
}

fn instance_stats(p: &ProcessProbe) -> Stats {
    let ended: Vec<_> = p.instances.values().filter(|i| i.end_ms.is_some()).collect();
    let faults = ended.iter().filter(|i| i.status == Some(Status::Fault)).count() as u64;
    Stats::from_durations(ended.iter().filter_map(|i| i.duration_ms()).collect(), faults)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceRef {
    pub process: String,
    pub instance: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub sla: String,
    pub subject: String,
    pub metric: SlaMetric,
    pub observed: f64,
    /// In the observed unit: milliseconds for durations, a ratio for fault rate.
    pub threshold: f64,
    pub unit: SlaUnit,
    pub severity: SlaSeverity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_violation_ts: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_violation_ts: Option<u64>,
    pub violating_instances: Vec<InstanceRef>,
}

/// Compare every registered SLA with its probe's samples. Ordered by
/// severity (most severe first), then subject, then SLA name.
pub fn evaluate_alerts(probes: &ProbeSet) -> Vec<Alert> {
    let mut out = Vec::new();
    for probe in probes.concepts.values() {
        for sla in &probe.slas {
            if let Some(a) = check(probe, sla) {
                out.push(a);
            }
        }
    }
    out.sort_by(|a, b| {
        b.severity.cmp(&a.severity).then_with(|| a.subject.cmp(&b.subject)).then_with(|| a.sla.cmp(&b.sla))
    });
    out
}

fn check(probe: &ConceptProbe, sla: &Sla) -> Option<Alert> {
    let limit = sla.limit();
    let samples = &probe.bpms;
    let stats = Stats::of(samples);
    let (observed, offending): (f64, Vec<&Sample>) = match sla.metric {
        SlaMetric::MaxDuration => {
            let over: Vec<_> = samples.iter().filter(|s| s.duration_ms as f64 > limit).collect();
            let worst = over.iter().map(|s| s.duration_ms).max()? as f64;
            (worst, over)
        }
        SlaMetric::MaxMeanDuration => {
            let mean = stats.mean_ms.filter(|m| *m > limit)?;
            (mean, samples.iter().filter(|s| s.duration_ms as f64 > limit).collect())
        }
        SlaMetric::MaxFaultRate => {
            if stats.count == 0 {
                return None;
            }
            let rate = stats.faults as f64 / stats.count as f64;
            if rate <= limit {
                return None;
            }
            (rate, samples.iter().filter(|s| s.status == Status::Fault).collect())
        }
    };
    let instances: BTreeSet<InstanceRef> =
        offending.iter().map(|s| InstanceRef { process: s.process.clone(), instance: s.instance }).collect();
    Some(Alert {
        sla: sla.name.clone(),
        subject: probe.concept.clone(),
        metric: sla.metric,
        observed,
        threshold: limit,
        unit: sla.unit,
        severity: sla.severity,
        first_violation_ts: offending.iter().map(|s| s.ts_ms).min(),
        last_violation_ts: offending.iter().map(|s| s.ts_ms).max(),
        violating_instances: instances.into_iter().collect(),
    })
}

/// Alerts as JSON Lines.
pub fn alerts_jsonl(alerts: &[Alert]) -> String {
    alerts.iter().map(|a| serde_json::to_string(a).expect("alert serializes") + "\n").collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringReport {
    pub total_activity_ms: u64,
    pub concepts: BTreeMap<String, ConceptReport>,
    pub processes: BTreeMap<String, ProcessReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptReport {
    pub bpms: Stats,
    pub soa: Stats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contribution_pct: Option<f64>,
    pub services: BTreeMap<String, ServiceReport>,
    pub slas: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceReport {
    #[serde(flatten)]
    pub stats: Stats,
    /// Share of the concept's activity time spent in this service.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contribution_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessReport {
    pub instances: Stats,
    /// Keyed by DSPML node path.
    pub nodes: BTreeMap<String, NodeReport>,
    pub technical: TechnicalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub uid: Uid,
    pub concept: String,
    pub bpms: Stats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contribution_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnicalReport {
    pub elements: Vec<String>,
    pub bpms: Stats,
    pub soa: Stats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contribution_pct: Option<f64>,
}

/// Domain-level view: concept nodes by DSPML path, technical work summarized
/// once per process.
pub fn build_report(probes: &ProbeSet) -> MonitoringReport {
    let total = total_activity_ms(probes);
    let concepts = probes
        .concepts
        .values()
        .map(|c| {
            let bpms = Stats::of(&c.bpms);
            let services = c
                .soa
                .iter()
                .map(|(s, samples)| {
                    let stats = Stats::of(samples);
                    let share = pct(stats.total_ms, bpms.total_ms);
                    (s.clone(), ServiceReport { stats, contribution_pct: share })
                })
                .collect();
            let report = ConceptReport {
                contribution_pct: pct(bpms.total_ms, total),
                soa: Stats::of(c.soa_samples()),
                bpms,
                services,
                slas: c.slas.iter().map(|s| s.name.clone()).collect(),
            };
            (c.concept.clone(), report)
        })
        .collect();
    let processes = probes
        .processes
        .values()
        .map(|p| {
            let nodes = probes
                .am
                .for_process(&p.process)
                .map(|(uid, e)| {
                    let bpms = Stats::of(&probes.nodes[uid]);
                    let node = NodeReport {
                        uid: uid.clone(),
                        concept: e.concept.clone(),
                        contribution_pct: pct(bpms.total_ms, total),
                        bpms,
                    };
                    (e.element.clone(), node)
                })
                .collect();
            let bpms = Stats::of(&p.technical);
            let technical = TechnicalReport {
                elements: p.technical_elements.iter().cloned().collect(),
                contribution_pct: pct(bpms.total_ms, total),
                bpms,
                soa: Stats::of(&p.technical_soa),
            };
            (p.process.clone(), ProcessReport { instances: instance_stats(p), nodes, technical })
        })
        .collect();
    MonitoringReport { total_activity_ms: total, concepts, processes }
}

impl MonitoringReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width table: one row per concept, per technical bucket and per process.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<32} {:>8} {:>7} {:>12} {:>10} {:>10} {:>10} {:>8}",
            "subject", "count", "faults", "mean_ms", "min_ms", "max_ms", "p95_ms", "share%"
        );
        let mut row = |name: String, s: &Stats, share: Option<f64>| {
            let opt = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());
            let _ = writeln!(
                out,
                "{:<32} {:>8} {:>7} {:>12} {:>10} {:>10} {:>10} {:>8}",
                name,
                s.count,
                s.faults,
                s.mean_ms.map_or("-".to_string(), |m| format!("{m:.1}")),
                opt(s.min_ms),
                opt(s.max_ms),
                opt(s.p95_ms),
                share.map_or("-".to_string(), |p| format!("{p:.2}")),
            );
        };
        for (name, c) in &self.concepts {
            row(name.clone(), &c.bpms, c.contribution_pct);
        }
        for (name, p) in &self.processes {
            row(format!("{name} (technical)"), &p.technical.bpms, p.technical.contribution_pct);
        }
        for (name, p) in &self.processes {
            row(format!("{name} (instances)"), &p.instances, None);
        }
        out
    }
}
