//! Concept mappings (concept -> services), activity mappings (activity uid ->
//! concept), the persistent UID registry and the enrichment-preserving merge.
//!
//! Everything here is persisted in one `mappings.json` sidecar:
//!
//! ```json
//! { "domain": "Shop",
//!   "cm": { "HandlePayment": ["s1", "s2"] },
//!   "am": { "u000003": { "concept": "HandlePayment", "process": "Orders", "element": "pay" } },
//!   "uids": { "Orders::pay": "u000003" } }
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpmn::BpmnModel;
use crate::domain::Domain;
use crate::pivot::{CommonModel, ElementKind};

/// Opaque, persistent identifier of a generated model element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Uid(String);

impl Uid {
    pub fn new(s: impl Into<String>) -> Self {
        Uid(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Path-keyed UID allocator. Keys are `process::node` for top-level nodes
/// and `process::outer/inner` for nodes inside expanded subprocesses.
///
/// Allocation is injective and never reassigns a persisted key, including
/// keys whose node has since been deleted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UidRegistry {
    entries: BTreeMap<String, Uid>,
    used: HashSet<Uid>,
    next: u64,
    allocated: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum MappingError {
    #[error("uid {uid} is assigned to both `{first}` and `{second}`")]
    RegistryNotInjective { uid: Uid, first: String, second: String },
    #[error("uid {0} appears in more than one model")]
    DuplicateUid(Uid),
    #[error("malformed mappings file: {0}")]
    Format(String),
}

impl UidRegistry {
    pub fn new() -> Self {
        Self { next: 1, ..Self::default() }
    }

    pub fn key(process: &str, path: &str) -> String {
        format!("{process}::{path}")
    }

    pub fn from_entries(entries: BTreeMap<String, Uid>) -> Result<Self, MappingError> {
        let mut owner: BTreeMap<&Uid, &str> = BTreeMap::new();
        for (k, u) in &entries {
            if let Some(first) = owner.insert(u, k) {
                return Err(MappingError::RegistryNotInjective {
                    uid: u.clone(),
                    first: first.to_string(),
                    second: k.clone(),
                });
            }
        }
        let next =
            entries.values().filter_map(|u| u.0.strip_prefix('u')?.parse::<u64>().ok()).max().map_or(1, |m| m + 1);
        let used = entries.values().cloned().collect();
        Ok(Self { entries, used, next, allocated: 0 })
    }

    pub fn get(&self, key: &str) -> Option<&Uid> {
        self.entries.get(key)
    }

    /// The uid for `key`, allocating a fresh one on first use.
    pub fn uid_for(&mut self, key: &str) -> Uid {
        if let Some(u) = self.entries.get(key) {
            return u.clone();
        }
        let uid = loop {
            let candidate = Uid(format!("u{:06}", self.next));
            self.next += 1;
            if !self.used.contains(&candidate) {
                break candidate;
            }
        };
        self.used.insert(uid.clone());
        self.entries.insert(key.to_string(), uid.clone());
        self.allocated += 1;
        uid
    }

    /// Number of uids allocated since this registry was created or loaded.
    pub fn allocations(&self) -> usize {
        self.allocated
    }

    pub fn entries(&self) -> &BTreeMap<String, Uid> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Process names that own at least one key.
    pub fn processes(&self) -> BTreeSet<String> {
        self.entries.keys().filter_map(|k| k.split_once("::")).map(|(p, _)| p.to_string()).collect()
    }
}

/// `CM`: each concept with its ordered abstract-service list, in domain order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConceptMappings {
    entries: Vec<(String, Vec<String>)>,
}

impl ConceptMappings {
    pub fn services(&self, concept: &str) -> Option<&[String]> {
        self.entries.iter().find(|(c, _)| c == concept).map(|(_, s)| s.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(c, s)| (c.as_str(), s.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Build `CM` from a validated domain: one entry per concept that lists services.
pub fn build_cm(d: &Domain) -> ConceptMappings {
    ConceptMappings {
        entries: d
            .concepts
            .iter()
            .filter(|c| !c.service_refs.is_empty())
            .map(|c| (c.name.clone(), c.service_refs.clone()))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEntry {
    pub concept: String,
    pub process: String,
    /// Node path in the DSPML model (`pay`, or `ship/weigh` inside a subprocess).
    pub element: String,
}

/// `AM`: the union over processes of activity uid -> concept.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivityMappings {
    entries: BTreeMap<Uid, ActivityEntry>,
    processes: BTreeSet<String>,
}

impl ActivityMappings {
    pub fn get(&self, uid: &Uid) -> Option<&ActivityEntry> {
        self.entries.get(uid)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Uid, &ActivityEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `AM_k` for one process.
    pub fn for_process<'a>(&'a self, process: &'a str) -> impl Iterator<Item = (&'a Uid, &'a ActivityEntry)> + 'a {
        self.entries.iter().filter(move |(_, e)| e.process == process)
    }

    pub fn processes(&self) -> &BTreeSet<String> {
        &self.processes
    }

    pub fn has_process(&self, process: &str) -> bool {
        self.processes.contains(process)
    }

    pub fn register_process(&mut self, process: &str) {
        self.processes.insert(process.to_string());
    }

    pub fn insert(&mut self, uid: Uid, entry: ActivityEntry) -> Result<(), MappingError> {
        if self.entries.contains_key(&uid) {
            return Err(MappingError::DuplicateUid(uid));
        }
        self.processes.insert(entry.process.clone());
        self.entries.insert(uid, entry);
        Ok(())
    }

    /// Replace `AM_k` for the processes present in `other`, keeping the rest.
    pub fn replace_processes(&mut self, other: ActivityMappings) {
        self.entries.retain(|_, e| !other.processes.contains(&e.process));
        self.processes.extend(other.processes);
        self.entries.extend(other.entries);
    }
}

/// Whether subprocess containers themselves appear in `AM`.
///
/// By default they do: a `subProcess` is an activity carrying its own
/// `conceptRef`. The simulator records no timings for containers, so their
/// probes stay empty and nothing is counted twice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmPolicy {
    LeavesOnly,
    #[default]
    IncludeSubprocesses,
}

/// Build `AM = AM_1 ∪ ... ∪ AM_|P|` from pivot models.
pub fn build_am(models: &[CommonModel]) -> Result<ActivityMappings, MappingError> {
    build_am_with(models, AmPolicy::default())
}

pub fn build_am_with(models: &[CommonModel], policy: AmPolicy) -> Result<ActivityMappings, MappingError> {
    let mut am = ActivityMappings::default();
    for m in models {
        am.register_process(&m.name);
        collect(m, &m.name, policy, &mut am)?;
    }
    Ok(am)
}

fn collect(m: &CommonModel, process: &str, policy: AmPolicy, am: &mut ActivityMappings) -> Result<(), MappingError> {
    for e in &m.elements {
        let include = match &e.kind {
            ElementKind::Activity => true,
            ElementKind::SubProcess(_) => policy == AmPolicy::IncludeSubprocesses,
            _ => false,
        };
        if include {
            if let Some(concept) = m.concept_tags.get(&e.uid) {
                am.insert(
                    e.uid.clone(),
                    ActivityEntry {
                        concept: concept.clone(),
                        process: process.to_string(),
                        element: e.node_path.clone(),
                    },
                )?;
            }
        }
        if let ElementKind::SubProcess(inner) = &e.kind {
            collect(inner, process, policy, am)?;
        }
    }
    Ok(())
}

/// Reverse lookup of `AM`: the concept an activity was generated from, or
/// `None` for technical additions and unknown uids.
pub fn concept_for_activity<'a>(am: &'a ActivityMappings, uid: &Uid) -> Option<&'a str> {
    am.get(uid).map(|e| e.concept.as_str())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeResult {
    /// The edited model, unchanged. Nothing is restored silently.
    pub merged: BpmnModel,
    /// Element ids present only in the edited file and carrying no concept uid.
    pub technical_additions: Vec<String>,
    /// Uids mapped in `AM_k` that no longer appear in the edited file.
    pub broken: Vec<Uid>,
}

impl MergeResult {
    pub fn is_clean(&self) -> bool {
        self.broken.is_empty()
    }
}

/// Reconcile a hand-edited BPMN file with its generated skeleton.
pub fn merge_enriched(generated: &BpmnModel, edited: &BpmnModel, am: &ActivityMappings) -> MergeResult {
    let generated_ids: HashSet<&str> = generated.all_elements().map(|e| e.id.as_str()).collect();
    let mut technical_additions: Vec<String> = edited
        .all_elements()
        .filter(|e| e.concept.is_none() && !generated_ids.contains(e.id.as_str()))
        .map(|e| e.id.clone())
        .collect();
    technical_additions.sort();

    let present: HashSet<&Uid> = edited.all_elements().filter_map(|e| e.concept.as_ref().map(|c| &c.uid)).collect();
    let broken = am
        .for_process(&edited.process_id)
        .filter(|(uid, _)| !present.contains(uid))
        .map(|(uid, _)| uid.clone())
        .collect();

    MergeResult { merged: edited.clone(), technical_additions, broken }
}

/// The full persisted mapping state.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingStore {
    pub domain: String,
    pub cm: ConceptMappings,
    pub am: ActivityMappings,
    pub uids: UidRegistry,
}

#[derive(Serialize, Deserialize)]
struct MappingFile {
    domain: String,
    cm: BTreeMap<String, Vec<String>>,
    am: BTreeMap<Uid, ActivityEntry>,
    uids: BTreeMap<String, Uid>,
}

impl MappingStore {
    pub fn new(domain: &Domain) -> Self {
        Self {
            domain: domain.name.clone(),
            cm: build_cm(domain),
            am: ActivityMappings::default(),
            uids: UidRegistry::new(),
        }
    }

    /// Refresh `CM` from the domain and replace `AM_k` for `model`'s process.
    pub fn update(&mut self, domain: &Domain, model: &CommonModel) -> Result<(), MappingError> {
        self.domain = domain.name.clone();
        self.cm = build_cm(domain);
        let am = build_am(std::slice::from_ref(model))?;
        self.am.replace_processes(am);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = MappingFile {
            domain: self.domain.clone(),
            cm: self.cm.iter().map(|(c, s)| (c.to_string(), s.to_vec())).collect(),
            am: self.am.entries.clone(),
            uids: self.uids.entries.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("mapping file serializes");
        s.push('\n');
        s
    }

    /// Load a mappings file. `CM` order follows the file's sorted key order;
    /// callers that need domain order rebuild it with [`build_cm`].
    pub fn from_json(text: &str) -> Result<Self, MappingError> {
        let file: MappingFile = serde_json::from_str(text).map_err(|e| MappingError::Format(e.to_string()))?;
        let uids = UidRegistry::from_entries(file.uids)?;
        let mut processes = uids.processes();
        processes.extend(file.am.values().map(|e| e.process.clone()));
        Ok(Self {
            domain: file.domain,
            cm: ConceptMappings { entries: file.cm.into_iter().collect() },
            am: ActivityMappings { entries: file.am, processes },
            uids,
        })
    }
}
