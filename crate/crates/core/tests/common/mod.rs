//! Shared fixtures for the property tests: a random structured process
//! generator, a small domain for it to draw concepts from, the full
//! generation pipeline, and a brute-force replay of raw event logs.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use proptest::prelude::*;
use serde_json::Value;

use dsml_core::bpmn::{generate_bpmn, parse_bpmn, BpmnElement, BpmnKind, BpmnModel, SequenceFlow};
use dsml_core::deploy::{bind_services, BindingTable, DeploymentManifest};
use dsml_core::engine::{DurationProfile, SimulationConfig};
use dsml_core::process::{Flow, GatewayKind, Node, NodeKind, ProcessBody, ProcessModel};
use dsml_core::{build_am, parse_domain, to_common, ActivityMappings, CommonModel, Domain, UidRegistry};

pub const GEN_DOMAIN: &str = r#"
domain Gen {
  service s0 { operation "receive" }
  service s1 { operation "check" }
  service s2 { operation "charge" }
  service s3 { operation "dispatch" }
  sla Fast { max_duration 2 d severity critical }
  concept Receive { label "Receive Order" services [s0] }
  concept Check { label "Check Order" version 2 services [s1] sla Fast }
  concept Pay { label "Pay" services [s1, s2] }
  concept Ship { label "Ship Goods" services [s3] sla Fast }
  concept Bundle {
    label "Bundle Items"
    subprocess {
      node a: concept Check
      node b: concept Ship
      start -> a
      a -> b
      b -> end
    }
  }
}
"#;

pub const CONCEPTS: [&str; 5] = ["Receive", "Check", "Pay", "Ship", "Bundle"];

pub fn gen_domain() -> Domain {
    parse_domain(GEN_DOMAIN).expect("generator domain parses")
}

/// Proptest settings without failure files (integration tests have no lib.rs to anchor them).
pub fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(n) }
}

/// Series-parallel block structure of a process body.
#[derive(Debug, Clone)]
pub enum Block {
    Task { concept: usize, exceptional: bool },
    Seq(Vec<Block>),
    Xor(Vec<Block>),
    And(Vec<Block>),
}

impl Block {
    /// DSPML nodes this block expands to (gateway pairs count twice).
    pub fn size(&self) -> usize {
        match self {
            Block::Task { .. } => 1,
            Block::Seq(bs) => bs.iter().map(Block::size).sum(),
            Block::Xor(bs) | Block::And(bs) => 2 + bs.iter().map(Block::size).sum::<usize>(),
        }
    }
}

pub fn block() -> impl Strategy<Value = Block> {
    let leaf = (0..CONCEPTS.len(), prop::bool::weighted(0.15))
        .prop_map(|(concept, exceptional)| Block::Task { concept, exceptional });
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Block::Seq),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Block::Xor),
            prop::collection::vec(inner, 2..=3).prop_map(Block::And),
        ]
    })
}

/// Valid process models of at most 20 nodes, start and end included.
pub fn process_model(name: &'static str) -> impl Strategy<Value = ProcessModel> {
    block().prop_filter("at most 20 nodes", |b| b.size() + 2 <= 20).prop_map(move |b| build_process(name, &b))
}

struct Builder {
    body: ProcessBody,
    next: usize,
    exceptional: Vec<String>,
}

impl Builder {
    fn node(&mut self, prefix: &str, kind: NodeKind) -> String {
        self.next += 1;
        let id = format!("{prefix}{}", self.next);
        self.body.nodes.push(Node { id: id.clone(), kind });
        id
    }

    fn flow(&mut self, from: &str, to: &str) {
        self.body.flows.push(Flow::new(from, to));
    }

    /// Returns the block's entry and exit node ids.
    fn emit(&mut self, b: &Block) -> (String, String) {
        match b {
            Block::Task { concept, exceptional } => {
                let id = self.node("t", NodeKind::Concept(CONCEPTS[*concept].to_string()));
                if *exceptional {
                    self.exceptional.push(id.clone());
                }
                (id.clone(), id)
            }
            Block::Seq(bs) => {
                let mut ends: Option<(String, String)> = None;
                for child in bs {
                    let (entry, exit) = self.emit(child);
                    ends = Some(match ends {
                        None => (entry, exit),
                        Some((first, prev)) => {
                            self.flow(&prev, &entry);
                            (first, exit)
                        }
                    });
                }
                ends.expect("sequence has children")
            }
            Block::Xor(bs) | Block::And(bs) => {
                let (prefix, kind) = match b {
                    Block::Xor(_) => ("x", GatewayKind::Exclusive),
                    _ => ("p", GatewayKind::Parallel),
                };
                let split = self.node(prefix, NodeKind::Gateway(kind));
                let join = self.node(prefix, NodeKind::Gateway(kind));
                for child in bs {
                    let (entry, exit) = self.emit(child);
                    self.flow(&split, &entry);
                    self.flow(&exit, &join);
                }
                (split, join)
            }
        }
    }
}

pub fn build_process(name: &str, b: &Block) -> ProcessModel {
    let mut builder = Builder { body: ProcessBody::default(), next: 0, exceptional: Vec::new() };
    builder.body.nodes.push(Node { id: "start".into(), kind: NodeKind::Start });
    let (entry, exit) = builder.emit(b);
    builder.body.nodes.push(Node { id: "end".into(), kind: NodeKind::End });
    builder.flow("start", &entry);
    builder.flow(&exit, "end");
    for id in std::mem::take(&mut builder.exceptional) {
        if builder.body.outgoing(&id).any(|f| f.to == "end") {
            continue;
        }
        let mut f = Flow::new(id, "end");
        f.condition = Some("rejected".into());
        f.exceptional = true;
        builder.body.flows.push(f);
    }
    ProcessModel { name: name.to_string(), domain_ref: "Gen".into(), body: builder.body }
}

/// Everything generation produces for one process.
pub struct Generated {
    pub common: CommonModel,
    pub xml: String,
    pub bpmn: BpmnModel,
    pub am: ActivityMappings,
    pub manifest: DeploymentManifest,
}

pub fn bindings() -> BindingTable {
    let mut t = BindingTable::default();
    for s in ["s0", "s1", "s2", "s3"] {
        t.bind(s, format!("https://{s}.example/api"), Some("svc"));
    }
    t
}

pub fn generate(p: &ProcessModel, d: &Domain, registry: &mut UidRegistry) -> Generated {
    let common = to_common(p, d, registry).expect("pivot");
    let (_, xml) = generate_bpmn(&common).expect("generate");
    let bpmn = parse_bpmn(&xml).expect("generated BPMN parses");
    let am = build_am(std::slice::from_ref(&common)).expect("AM");
    let manifest = bind_services(d, &bindings(), &am, &p.name).expect("bind");
    Generated { common, xml, bpmn, am, manifest }
}

pub fn sim_config(seed: u64, instances: u64, fault: f64, am: &ActivityMappings) -> SimulationConfig {
    let mut cfg = SimulationConfig {
        instance_count: instances,
        seed,
        default_profile: Some("tech".into()),
        arrival_interval_ms: 1_000,
        ..SimulationConfig::default()
    };
    cfg.profiles.insert("svc".into(), DurationProfile::Uniform { lo: 10.0, hi: 500.0 });
    cfg.profiles.insert("tech".into(), DurationProfile::Normal { mean: 300.0, stddev: 120.0 });
    if fault > 0.0 {
        for (uid, _) in am.iter() {
            cfg.fault_probs.insert(uid.to_string(), fault);
        }
    }
    cfg
}

/// Insert a technical task (no concept uid) after the start event.
pub fn add_technical_task(b: &mut BpmnModel, id: &str) {
    let start = b.body.elements.iter().find(|e| e.kind == BpmnKind::StartEvent).expect("start").id.clone();
    let flow = b.body.sequence_flows.iter_mut().find(|f| f.source == start).expect("start has a flow");
    let old_target = std::mem::replace(&mut flow.target, id.to_string());
    b.body.elements.push(BpmnElement::new(id, BpmnKind::OtherTask("userTask".into()), Some("Technical step".into())));
    b.body.sequence_flows.push(SequenceFlow::new(format!("Flow_{id}"), id, old_target));
}

/// Multiset of concept uids carried by a BPMN model, as sorted strings.
pub fn concept_uids(b: &BpmnModel) -> Vec<String> {
    let mut v: Vec<String> = b.all_elements().filter_map(|e| e.concept_uid().map(|u| u.to_string())).collect();
    v.sort();
    v
}

/// Duration and fault flag of one raw sample.
pub type Raw = (u64, bool);

/// Brute-force recomputation of the monitoring figures from raw log lines.
#[derive(Debug, Default)]
pub struct Replay {
    pub concept_bpms: BTreeMap<String, Vec<Raw>>,
    pub concept_soa: BTreeMap<String, Vec<Raw>>,
    pub technical: BTreeMap<String, Vec<Raw>>,
    pub technical_soa: BTreeMap<String, Vec<Raw>>,
    pub instances: BTreeMap<String, Vec<Raw>>,
    pub process_soa: BTreeMap<String, Vec<Raw>>,
    pub activity_ends: usize,
    pub total_activity_ms: u64,
}

pub fn replay(jsonl: &str, am: &ActivityMappings) -> Replay {
    let mut r = Replay::default();
    let mut starts: BTreeMap<(String, u64), u64> = BTreeMap::new();
    let concepts: HashMap<&str, &str> = am.iter().map(|(u, e)| (u.as_str(), e.concept.as_str())).collect();
    for line in jsonl.lines().skip(1) {
        let v: Value = serde_json::from_str(line).expect("log line is JSON");
        let process = v["process"].as_str().unwrap().to_string();
        let fault = v["status"] == "fault";
        let ts = v["ts_ms"].as_u64().unwrap();
        let instance = v["instance"].as_u64().unwrap();
        let concept = v["element_uid"].as_str().and_then(|u| concepts.get(u)).map(|c| c.to_string());
        let dur = || v["duration_ms"].as_u64().unwrap();
        match v["kind"].as_str().unwrap() {
            "processStart" => {
                starts.insert((process, instance), ts);
            }
            "processEnd" => {
                let start = starts[&(process.clone(), instance)];
                r.instances.entry(process).or_default().push((ts - start, fault));
            }
            "activityEnd" => {
                r.activity_ends += 1;
                r.total_activity_ms += dur();
                match concept {
                    Some(c) => r.concept_bpms.entry(c).or_default().push((dur(), fault)),
                    None => r.technical.entry(process).or_default().push((dur(), fault)),
                }
            }
            "serviceInvoke" => {
                r.process_soa.entry(process.clone()).or_default().push((dur(), fault));
                match concept {
                    Some(c) => r.concept_soa.entry(c).or_default().push((dur(), fault)),
                    None => r.technical_soa.entry(process).or_default().push((dur(), fault)),
                }
            }
            _ => {}
        }
    }
    r
}

/// Statistics by definition, without sharing code with the monitor.
#[derive(Debug, Clone, PartialEq)]
pub struct Brute {
    pub count: u64,
    pub faults: u64,
    pub mean: Option<f64>,
    pub min: Option<u64>,
    pub max: Option<u64>,
    pub p95: Option<u64>,
}

pub fn brute(samples: &[Raw]) -> Brute {
    let n = samples.len();
    let faults = samples.iter().filter(|s| s.1).count() as u64;
    if n == 0 {
        return Brute { count: 0, faults, mean: None, min: None, max: None, p95: None };
    }
    let mut sum = 0u128;
    let mut min = u64::MAX;
    let mut max = 0;
    for &(d, _) in samples {
        sum += d as u128;
        min = min.min(d);
        max = max.max(d);
    }
    // Nearest rank: the smallest value with at least 95% of samples at or below it.
    let mut sorted: Vec<u64> = samples.iter().map(|s| s.0).collect();
    sorted.sort_unstable();
    let p95 = (0..n).find(|&i| (i + 1) * 100 >= 95 * n).map(|i| sorted[i]);
    Brute { count: n as u64, faults, mean: Some(sum as f64 / n as f64), min: Some(min), max: Some(max), p95 }
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Compare monitor statistics with the brute-force figures.
pub fn stats_match(what: &str, s: &dsml_core::monitor::Stats, b: &Brute) -> Result<(), String> {
    let mean_ok = match (s.mean_ms, b.mean) {
        (Some(x), Some(y)) => close(x, y, 1e-9),
        (None, None) => true,
        _ => false,
    };
    if s.count != b.count
        || s.faults != b.faults
        || !mean_ok
        || s.min_ms != b.min
        || s.max_ms != b.max
        || s.p95_ms != b.p95
    {
        return Err(format!("{what}: monitor {s:?} vs replay {b:?}"));
    }
    Ok(())
}

/// Check every composite metric against the replay and the contribution sum.
pub fn check_oracle(metrics: &[dsml_core::monitor::CompositeMetric], r: &Replay) -> Result<(), String> {
    use dsml_core::monitor::SubjectKind;
    let empty = Vec::new();
    let mut pct_sum = 0.0;
    let mut seen_concepts = BTreeSet::new();
    for m in metrics {
        let (bpms, soa) = match m.kind {
            SubjectKind::Concept => {
                seen_concepts.insert(m.subject.clone());
                (r.concept_bpms.get(&m.subject), r.concept_soa.get(&m.subject))
            }
            SubjectKind::Technical => (r.technical.get(&m.subject), r.technical_soa.get(&m.subject)),
            SubjectKind::Process => (r.instances.get(&m.subject), r.process_soa.get(&m.subject)),
        };
        let bpms = bpms.unwrap_or(&empty);
        stats_match(&format!("{:?} {} bpms", m.kind, m.subject), &m.bpms, &brute(bpms))?;
        stats_match(&format!("{:?} {} soa", m.kind, m.subject), &m.soa, &brute(soa.unwrap_or(&empty)))?;
        if m.kind != SubjectKind::Process {
            let part: u64 = bpms.iter().map(|s| s.0).sum();
            let expected = (r.total_activity_ms > 0).then(|| part as f64 * 100.0 / r.total_activity_ms as f64);
            match (m.contribution_pct, expected) {
                (Some(x), Some(y)) if close(x, y, 1e-9) => pct_sum += x,
                (None, None) => {}
                other => return Err(format!("{} contribution {other:?}", m.subject)),
            }
        }
    }
    if let Some(c) = r.concept_bpms.keys().find(|c| !seen_concepts.contains(*c)) {
        return Err(format!("concept {c} has samples but no metric"));
    }
    if r.total_activity_ms > 0 && (pct_sum - 100.0).abs() > 1e-6 {
        return Err(format!("contributions sum to {pct_sum}"));
    }
    Ok(())
}
