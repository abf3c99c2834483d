//! BPMN 2.0 model: generation from the pivot model, parsing of (possibly
//! hand-enriched) files, and structural validation.
//!
//! Generated activities carry their concept UID in an extension element:
//!
//! ```xml
//! <bpmn:serviceTask id="Activity_u000004" name="Approve Order">
//!   <bpmn:extensionElements>
//!     <dsml:conceptRef xmlns:dsml="urn:dsml:1" uid="u000004" concept="ApproveOrder" domain="Orders"/>
//!   </bpmn:extensionElements>
//! </bpmn:serviceTask>
//! ```
//!
//! Parsing keeps everything it does not understand (unknown element kinds,
//! attributes and children) so an enriched file re-serializes without loss.

mod generate;
mod parse;
pub mod xml;

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::diag::Diagnostic;
use crate::mappings::Uid;

pub use generate::generate_bpmn;
pub use parse::parse_bpmn;

use xml::{write_document, XmlNode};

pub const BPMN_NS: &str = "http://www.omg.org/spec/BPMN/20100524/MODEL";
pub const DSML_NS: &str = "urn:dsml:1";
/// Condition label on the branch an exceptional flow is lowered to.
pub const EXCEPTION_CONDITION: &str = "exception";

#[derive(Debug, Clone, PartialEq)]
pub struct BpmnModel {
    /// Attributes of `<definitions>`, namespace declarations included, in document order.
    pub definitions_attrs: Vec<(String, String)>,
    /// Prefix bound to the BPMN namespace (`bpmn`), or empty for the default namespace.
    pub prefix: String,
    pub process_id: String,
    pub process_name: Option<String>,
    pub process_attrs: Vec<(String, String)>,
    pub body: Container,
    /// Other children of `<definitions>` (collaborations, diagrams, ...), kept verbatim.
    pub root_extra: Vec<XmlNode>,
}

/// Flow elements of one scope (the process or a subprocess).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub elements: Vec<BpmnElement>,
    pub sequence_flows: Vec<SequenceFlow>,
    /// Children without an `id` (lane sets, documentation, ...), kept verbatim.
    pub opaque: Vec<XmlNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BpmnKind {
    StartEvent,
    EndEvent,
    ServiceTask,
    Task,
    SubProcess,
    ExclusiveGateway,
    ParallelGateway,
    /// userTask, scriptTask, manualTask, ...: executed like a plain task.
    OtherTask(String),
    /// Any other identified element; carried through untouched.
    Other(String),
}

impl BpmnKind {
    pub fn from_local(name: &str) -> Self {
        match name {
            "startEvent" => BpmnKind::StartEvent,
            "endEvent" => BpmnKind::EndEvent,
            "serviceTask" => BpmnKind::ServiceTask,
            "task" => BpmnKind::Task,
            "subProcess" => BpmnKind::SubProcess,
            "exclusiveGateway" => BpmnKind::ExclusiveGateway,
            "parallelGateway" => BpmnKind::ParallelGateway,
            "userTask" | "manualTask" | "scriptTask" | "businessRuleTask" | "sendTask" | "receiveTask" => {
                BpmnKind::OtherTask(name.to_string())
            }
            other => BpmnKind::Other(other.to_string()),
        }
    }

    pub fn local_name(&self) -> &str {
        match self {
            BpmnKind::StartEvent => "startEvent",
            BpmnKind::EndEvent => "endEvent",
            BpmnKind::ServiceTask => "serviceTask",
            BpmnKind::Task => "task",
            BpmnKind::SubProcess => "subProcess",
            BpmnKind::ExclusiveGateway => "exclusiveGateway",
            BpmnKind::ParallelGateway => "parallelGateway",
            BpmnKind::OtherTask(n) | BpmnKind::Other(n) => n,
        }
    }

    pub fn is_task(&self) -> bool {
        matches!(self, BpmnKind::ServiceTask | BpmnKind::Task | BpmnKind::OtherTask(_))
    }

    pub fn is_gateway(&self) -> bool {
        matches!(self, BpmnKind::ExclusiveGateway | BpmnKind::ParallelGateway)
            || matches!(self, BpmnKind::Other(n) if n.ends_with("Gateway"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptRef {
    pub uid: Uid,
    pub concept: String,
    pub domain: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpmnElement {
    pub id: String,
    pub kind: BpmnKind,
    pub name: Option<String>,
    pub concept: Option<ConceptRef>,
    pub documentation: Option<String>,
    /// Inner scope of a `subProcess`.
    pub inner: Option<Container>,
    pub extra_attrs: Vec<(String, String)>,
    /// Extension elements other than `conceptRef`.
    pub extensions: Vec<XmlNode>,
    pub extra_children: Vec<XmlNode>,
    /// Full original node for [`BpmnKind::Other`] elements.
    pub raw: Option<XmlNode>,
}

impl BpmnElement {
    pub fn new(id: impl Into<String>, kind: BpmnKind, name: Option<String>) -> Self {
        Self {
            id: id.into(),
            kind,
            name,
            concept: None,
            documentation: None,
            inner: None,
            extra_attrs: Vec::new(),
            extensions: Vec::new(),
            extra_children: Vec::new(),
            raw: None,
        }
    }

    pub fn concept_uid(&self) -> Option<&Uid> {
        self.concept.as_ref().map(|c| &c.uid)
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.extra_attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFlow {
    pub id: String,
    pub name: Option<String>,
    pub source: String,
    pub target: String,
    pub condition: Option<String>,
    pub condition_attrs: Vec<(String, String)>,
    pub extra_attrs: Vec<(String, String)>,
    pub extra_children: Vec<XmlNode>,
}

impl SequenceFlow {
    pub fn new(id: impl Into<String>, source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: None,
            source: source.into(),
            target: target.into(),
            condition: None,
            condition_attrs: Vec::new(),
            extra_attrs: Vec::new(),
            extra_children: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BpmnError {
    #[error("malformed XML at byte {offset}: {message}")]
    Malformed { offset: u64, message: String },
    #[error("root element is `{0}`, expected `definitions`")]
    NotDefinitions(String),
    #[error("document contains no process")]
    NoProcess,
    #[error("element without id: `{0}`")]
    MissingId(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("sequence flow `{flow}` references missing element `{target}`")]
    DanglingFlow { flow: String, target: String },
    #[error("sequence flow `{0}` lacks sourceRef or targetRef")]
    IncompleteFlow(String),
    #[error("concept uid {0} generated twice")]
    UidCollision(Uid),
}

impl Container {
    /// Elements of this scope and all nested scopes, depth-first.
    pub fn all_elements(&self) -> Box<dyn Iterator<Item = &BpmnElement> + '_> {
        Box::new(self.elements.iter().flat_map(|e| {
            let nested: Box<dyn Iterator<Item = &BpmnElement>> = match &e.inner {
                Some(c) => c.all_elements(),
                None => Box::new(std::iter::empty()),
            };
            std::iter::once(e).chain(nested)
        }))
    }

    pub fn element(&self, id: &str) -> Option<&BpmnElement> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a SequenceFlow> + 'a {
        self.sequence_flows.iter().filter(move |f| f.source == id)
    }

    pub fn incoming<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a SequenceFlow> + 'a {
        self.sequence_flows.iter().filter(move |f| f.target == id)
    }

    /// Every scope: this one, then nested subprocess scopes depth-first.
    pub fn scopes(&self) -> Vec<(&str, &Container)> {
        let mut out = Vec::new();
        fn rec<'a>(path: &'a str, c: &'a Container, out: &mut Vec<(&'a str, &'a Container)>) {
            out.push((path, c));
            for e in &c.elements {
                if let Some(inner) = &e.inner {
                    rec(&e.id, inner, out);
                }
            }
        }
        rec("", self, &mut out);
        out
    }
}

impl BpmnModel {
    pub fn all_elements(&self) -> impl Iterator<Item = &BpmnElement> {
        self.body.all_elements()
    }

    /// Serialize with the same writer the generator uses.
    pub fn to_xml(&self) -> String {
        write_document(&self.to_tree())
    }

    fn qname(&self, local: &str) -> String {
        if self.prefix.is_empty() {
            local.to_string()
        } else {
            format!("{}:{local}", self.prefix)
        }
    }

    fn to_tree(&self) -> XmlNode {
        let mut root = XmlNode::new(self.qname("definitions"));
        root.attrs = self.definitions_attrs.clone();
        let mut process = XmlNode::new(self.qname("process")).attr("id", &self.process_id);
        if let Some(n) = &self.process_name {
            process = process.attr("name", n);
        }
        process.attrs.extend(self.process_attrs.iter().cloned());
        self.write_container(&mut process, &self.body);
        root = root.child(process);
        for extra in &self.root_extra {
            root = root.child(extra.clone());
        }
        root
    }

    fn write_container(&self, parent: &mut XmlNode, c: &Container) {
        for e in &c.elements {
            parent.children.push(xml::XmlChild::Element(self.element_tree(e)));
        }
        for f in &c.sequence_flows {
            let mut node = XmlNode::new(self.qname("sequenceFlow")).attr("id", &f.id);
            if let Some(n) = &f.name {
                node = node.attr("name", n);
            }
            node = node.attr("sourceRef", &f.source).attr("targetRef", &f.target);
            node.attrs.extend(f.extra_attrs.iter().cloned());
            for extra in &f.extra_children {
                node = node.child(extra.clone());
            }
            if let Some(cond) = &f.condition {
                let mut ce = XmlNode::new(self.qname("conditionExpression"));
                ce.attrs = f.condition_attrs.clone();
                node = node.child(ce.text(cond));
            }
            parent.children.push(xml::XmlChild::Element(node));
        }
        for o in &c.opaque {
            parent.children.push(xml::XmlChild::Element(o.clone()));
        }
    }

    fn element_tree(&self, e: &BpmnElement) -> XmlNode {
        if let Some(raw) = &e.raw {
            return raw.clone();
        }
        let mut node = XmlNode::new(self.qname(e.kind.local_name())).attr("id", &e.id);
        if let Some(n) = &e.name {
            node = node.attr("name", n);
        }
        node.attrs.extend(e.extra_attrs.iter().cloned());
        if let Some(doc) = &e.documentation {
            node = node.child(XmlNode::new(self.qname("documentation")).text(doc));
        }
        if e.concept.is_some() || !e.extensions.is_empty() {
            let mut ext = XmlNode::new(self.qname("extensionElements"));
            if let Some(c) = &e.concept {
                ext = ext.child(
                    XmlNode::new("dsml:conceptRef")
                        .attr("xmlns:dsml", DSML_NS)
                        .attr("uid", c.uid.as_str())
                        .attr("concept", &c.concept)
                        .attr("domain", &c.domain),
                );
            }
            for x in &e.extensions {
                ext = ext.child(x.clone());
            }
            node = node.child(ext);
        }
        for extra in &e.extra_children {
            node = node.child(extra.clone());
        }
        if let Some(inner) = &e.inner {
            self.write_container(&mut node, inner);
        }
        node
    }
}

/// Structural checks: one start event per scope, reachability from it,
/// gateways with outgoing flows, NCName ids, unique ids and concept uids.
pub fn validate_bpmn(b: &BpmnModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    let mut uids = HashSet::new();
    for e in b.all_elements() {
        if !is_ncname(&e.id) {
            out.push(Diagnostic::error("invalid-id", format!("element {}", e.id), "id is not a valid XML NCName"));
        }
        if !ids.insert(e.id.as_str()) {
            out.push(Diagnostic::error(
                "duplicate-id",
                format!("element {}", e.id),
                format!("id `{}` used twice", e.id),
            ));
        }
        if let Some(c) = &e.concept {
            if !uids.insert(&c.uid) {
                out.push(Diagnostic::error(
                    "duplicate-concept-uid",
                    format!("element {}", e.id),
                    format!("concept uid {} carried by more than one element", c.uid),
                ));
            }
        }
    }

    for (scope, c) in b.body.scopes() {
        let scope_loc =
            if scope.is_empty() { format!("process {}", b.process_id) } else { format!("subProcess {scope}") };
        let starts: Vec<&BpmnElement> = c.elements.iter().filter(|e| e.kind == BpmnKind::StartEvent).collect();
        match starts.len() {
            0 => out.push(Diagnostic::error("missing-start", &scope_loc, "no startEvent")),
            1 => {}
            n => out.push(Diagnostic::error("multiple-start", &scope_loc, format!("{n} startEvents"))),
        }
        let local: HashSet<&str> = c.elements.iter().map(|e| e.id.as_str()).collect();
        let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
        for f in &c.sequence_flows {
            for endpoint in [&f.source, &f.target] {
                if !local.contains(endpoint.as_str()) {
                    out.push(Diagnostic::error(
                        "dangling-flow",
                        format!("sequenceFlow {}", f.id),
                        format!("references `{endpoint}`, which is not in the same scope"),
                    ));
                }
            }
            succ.entry(f.source.as_str()).or_default().push(f.target.as_str());
        }
        if let Some(start) = starts.first() {
            let mut seen: HashSet<&str> = HashSet::from([start.id.as_str()]);
            let mut queue = VecDeque::from([start.id.as_str()]);
            while let Some(v) = queue.pop_front() {
                for &w in succ.get(v).into_iter().flatten() {
                    if seen.insert(w) {
                        queue.push_back(w);
                    }
                }
            }
            for e in &c.elements {
                let flow_node =
                    !matches!(e.kind, BpmnKind::Other(ref n) if !n.ends_with("Event") && !n.ends_with("Gateway"));
                if flow_node && !seen.contains(e.id.as_str()) {
                    out.push(Diagnostic::error(
                        "unreachable-element",
                        format!("element {}", e.id),
                        "not reachable from the startEvent",
                    ));
                }
            }
        }
        for e in c.elements.iter().filter(|e| e.kind.is_gateway()) {
            if c.outgoing(&e.id).next().is_none() {
                out.push(Diagnostic::error(
                    "gateway-without-outgoing",
                    format!("element {}", e.id),
                    "gateway has no outgoing sequence flow",
                ));
            }
        }
    }
    out
}

pub fn is_ncname(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
}
