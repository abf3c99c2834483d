//! The common pivot model and the DSPML -> pivot transformation.
//!
//! Element kinds are a flat sum (activity, subprocess, gateway, event); there
//! is no inheritance chain to walk. The BPMN generator consumes this model
//! and nothing else.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::Domain;
use crate::mappings::{Uid, UidRegistry};
use crate::process::{GatewayKind, NodeKind, ProcessBody, ProcessModel};

const MAX_EXPANSION_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct CommonModel {
    pub name: String,
    /// Domain the concepts in `concept_tags` belong to.
    pub domain: String,
    pub elements: Vec<CommonElement>,
    pub flows: Vec<CommonFlow>,
    /// Concept each concept-derived element (activity or subprocess) came from.
    pub concept_tags: BTreeMap<Uid, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommonElement {
    pub uid: Uid,
    pub kind: ElementKind,
    pub label: String,
    /// DSPML node path this element was generated from.
    pub node_path: String,
    /// Informational dependencies carried over from the concept.
    pub depends_on: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Activity,
    SubProcess(Box<CommonModel>),
    Gateway(GatewayKind),
    Event(EventKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommonFlow {
    pub from: Uid,
    pub to: Uid,
    pub condition: Option<String>,
    pub exceptional: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum PivotError {
    #[error("node `{node}` references unknown concept `{concept}`")]
    UnresolvedConcept { node: String, concept: String },
    #[error("flow references unknown node `{0}`")]
    UnresolvedNode(String),
    #[error("subprocess expansion deeper than {MAX_EXPANSION_DEPTH} levels at `{0}`")]
    ExpansionTooDeep(String),
}

impl CommonModel {
    pub fn element(&self, uid: &Uid) -> Option<&CommonElement> {
        self.elements.iter().find(|e| &e.uid == uid)
    }

    /// Depth-first walk over this model and every nested subprocess model.
    pub fn walk(&self) -> Vec<&CommonModel> {
        let mut out = vec![self];
        let mut i = 0;
        while i < out.len() {
            let m = out[i];
            for e in &m.elements {
                if let ElementKind::SubProcess(inner) = &e.kind {
                    out.push(inner);
                }
            }
            i += 1;
        }
        out
    }
}

/// Lower a validated process model to the pivot model. Uids come from
/// `registry`, keyed by process name and node path, so regenerating an
/// unchanged process allocates nothing.
pub fn to_common(p: &ProcessModel, d: &Domain, registry: &mut UidRegistry) -> Result<CommonModel, PivotError> {
    lower(&p.name, &p.name, &p.body, d, registry, "", 0)
}

fn lower(
    process: &str,
    name: &str,
    body: &ProcessBody,
    d: &Domain,
    registry: &mut UidRegistry,
    prefix: &str,
    depth: usize,
) -> Result<CommonModel, PivotError> {
    if depth > MAX_EXPANSION_DEPTH {
        return Err(PivotError::ExpansionTooDeep(prefix.trim_end_matches('/').to_string()));
    }
    let mut model = CommonModel {
        name: name.to_string(),
        domain: d.name.clone(),
        elements: Vec::with_capacity(body.nodes.len()),
        flows: Vec::with_capacity(body.flows.len()),
        concept_tags: BTreeMap::new(),
    };
    let mut uid_of: BTreeMap<&str, Uid> = BTreeMap::new();
    for node in &body.nodes {
        let path = format!("{prefix}{}", node.id);
        let uid = registry.uid_for(&UidRegistry::key(process, &path));
        uid_of.insert(node.id.as_str(), uid.clone());
        let (kind, label, depends_on) = match &node.kind {
            NodeKind::Start => (ElementKind::Event(EventKind::Start), "Start".to_string(), Vec::new()),
            NodeKind::End => (ElementKind::Event(EventKind::End), "End".to_string(), Vec::new()),
            NodeKind::Gateway(g) => (ElementKind::Gateway(*g), node.id.clone(), Vec::new()),
            NodeKind::Concept(c) => {
                let concept = d
                    .concept(c)
                    .ok_or_else(|| PivotError::UnresolvedConcept { node: path.clone(), concept: c.clone() })?;
                model.concept_tags.insert(uid.clone(), concept.name.clone());
                let kind = match &concept.subprocess {
                    Some(inner) => {
                        let inner_prefix = format!("{path}/");
                        let inner = lower(process, &concept.name, inner, d, registry, &inner_prefix, depth + 1)?;
                        ElementKind::SubProcess(Box::new(inner))
                    }
                    None => ElementKind::Activity,
                };
                (kind, concept.label.clone(), concept.depends_on.clone())
            }
        };
        model.elements.push(CommonElement { uid, kind, label, node_path: path, depends_on });
    }
    for f in &body.flows {
        let from = uid_of.get(f.from.as_str()).ok_or_else(|| PivotError::UnresolvedNode(f.from.clone()))?;
        let to = uid_of.get(f.to.as_str()).ok_or_else(|| PivotError::UnresolvedNode(f.to.clone()))?;
        model.flows.push(CommonFlow {
            from: from.clone(),
            to: to.clone(),
            condition: f.condition.clone(),
            exceptional: f.exceptional,
        });
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CommonStats {
    pub activities: usize,
    pub gateways: usize,
    pub flows: usize,
}

/// Activity, gateway and flow counts, including nested subprocess content.
/// Subprocess containers are not counted as activities.
pub fn common_stats(m: &CommonModel) -> CommonStats {
    let mut s = CommonStats::default();
    for level in m.walk() {
        s.flows += level.flows.len();
        for e in &level.elements {
            match e.kind {
                ElementKind::Activity => s.activities += 1,
                ElementKind::Gateway(_) => s.gateways += 1,
                _ => {}
            }
        }
    }
    s
}
