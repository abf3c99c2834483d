//! Domain-specific process models (`.dsproc`).
//!
//! ```text
//! process Orders uses Shop {
//!   node pay: concept HandlePayment
//!   node ok: exclusive
//!   start -> pay
//!   pay -> ok
//!   ok -> end when "paid"
//!   pay -> end when "card refused" exceptional
//! }
//! ```
//!
//! `start` and `end` are implicit nodes. Every `end` endpoint targets the same
//! end node.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::diag::{has_errors, Diagnostic};
use crate::domain::{summarize, Domain, SourceMap};
use crate::lexer::{is_identifier, quote, Cursor, SyntaxError, Tok};

pub const START: &str = "start";
pub const END: &str = "end";

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    pub name: String,
    pub domain_ref: String,
    pub body: ProcessBody,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProcessBody {
    pub nodes: Vec<Node>,
    pub flows: Vec<Flow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Start,
    End,
    Concept(String),
    Gateway(GatewayKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GatewayKind {
    Exclusive,
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub from: String,
    pub to: String,
    pub condition: Option<String>,
    pub exceptional: bool,
}

impl Flow {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self { from: from.into(), to: to.into(), condition: None, exceptional: false }
    }
}

impl ProcessBody {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Flow> + 'a {
        self.flows.iter().filter(move |f| f.from == id)
    }

    pub fn incoming<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Flow> + 'a {
        self.flows.iter().filter(move |f| f.to == id)
    }

    /// Concept names referenced by this body, in node order (not recursive).
    pub fn concept_refs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.nodes.iter().filter_map(|n| match &n.kind {
            NodeKind::Concept(c) => Some((n.id.as_str(), c.as_str())),
            _ => None,
        })
    }
}

impl ProcessModel {
    pub fn to_dsproc(&self) -> String {
        let mut out = format!("process {} uses {} {{\n", self.name, self.domain_ref);
        write_body(&mut out, &self.body, "  ");
        out.push_str("}\n");
        out
    }
}

pub(crate) fn write_body(out: &mut String, body: &ProcessBody, indent: &str) {
    for n in &body.nodes {
        match &n.kind {
            NodeKind::Start | NodeKind::End => {}
            NodeKind::Concept(c) => {
                let _ = writeln!(out, "{indent}node {}: concept {c}", n.id);
            }
            NodeKind::Gateway(GatewayKind::Exclusive) => {
                let _ = writeln!(out, "{indent}node {}: exclusive", n.id);
            }
            NodeKind::Gateway(GatewayKind::Parallel) => {
                let _ = writeln!(out, "{indent}node {}: parallel", n.id);
            }
        }
    }
    for f in &body.flows {
        let _ = write!(out, "{indent}{} -> {}", f.from, f.to);
        if let Some(c) = &f.condition {
            let _ = write!(out, " when {}", quote(c));
        }
        if f.exceptional {
            out.push_str(" exceptional");
        }
        out.push('\n');
    }
}

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("invalid process: {}", summarize(.0))]
    Invalid(Vec<Diagnostic>),
}

/// Parse a `.dsproc` source and validate it against `d`. Warnings do not fail
/// the parse; use [`check_process`] to see them.
pub fn parse_process(source: &str, d: &Domain) -> Result<ProcessModel, ProcessError> {
    let (model, diags) = check_process(source, d)?;
    if has_errors(&diags) {
        return Err(ProcessError::Invalid(diags));
    }
    Ok(model)
}

/// Parse and return every diagnostic with source positions. Only syntax
/// errors abort.
pub fn check_process(source: &str, d: &Domain) -> Result<(ProcessModel, Vec<Diagnostic>), SyntaxError> {
    let (model, map) = parse_syntax(source)?;
    let diags = validate_process(&model, d)
        .into_iter()
        .map(|diag| {
            let pos = map.get(&diag.location).copied();
            diag.at(pos)
        })
        .collect();
    Ok((model, diags))
}

fn parse_syntax(source: &str) -> Result<(ProcessModel, SourceMap), SyntaxError> {
    let mut cur = Cursor::new(source)?;
    let mut map = SourceMap::new();
    cur.keyword("process")?;
    let (name, pos) = cur.ident()?;
    map.insert(format!("process {name}"), pos);
    cur.keyword("uses")?;
    let (domain_ref, _) = cur.ident()?;
    cur.expect(Tok::LBrace)?;
    let body = parse_body(&mut cur, &mut map, "")?;
    cur.expect(Tok::RBrace)?;
    if *cur.peek() != Tok::Eof {
        return cur.unexpected("end of input");
    }
    Ok((ProcessModel { name, domain_ref, body }, map))
}

/// Parse `stmt*` up to (not including) the closing `}`.
///
/// Node order is canonical: `start` (if referenced), declared nodes in
/// declaration order, then `end` (if referenced).
pub(crate) fn parse_body(cur: &mut Cursor, map: &mut SourceMap, prefix: &str) -> Result<ProcessBody, SyntaxError> {
    let mut declared = Vec::new();
    let mut flows = Vec::new();
    let (mut has_start, mut has_end) = (false, false);
    loop {
        match cur.peek() {
            Tok::RBrace | Tok::Eof => break,
            Tok::Ident(kw) if kw == "node" => {
                cur.next();
                let (id, pos) = cur.ident()?;
                if matches!(id.as_str(), START | END | "node") {
                    return Err(SyntaxError { pos, message: format!("`{id}` is reserved and cannot name a node") });
                }
                cur.expect(Tok::Colon)?;
                let (kind_kw, kind_pos) = cur.ident()?;
                let kind = match kind_kw.as_str() {
                    "concept" => NodeKind::Concept(cur.ident()?.0),
                    "exclusive" => NodeKind::Gateway(GatewayKind::Exclusive),
                    "parallel" => NodeKind::Gateway(GatewayKind::Parallel),
                    other => {
                        return Err(SyntaxError {
                            pos: kind_pos,
                            message: format!("expected `concept`, `exclusive` or `parallel`, found `{other}`"),
                        })
                    }
                };
                map.entry(format!("{prefix}node {id}")).or_insert(pos);
                declared.push(Node { id, kind });
            }
            Tok::Ident(_) => {
                let (from, pos) = cur.ident()?;
                cur.expect(Tok::Arrow)?;
                let (to, to_pos) = cur.ident()?;
                for (endpoint, p) in [(&from, pos), (&to, to_pos)] {
                    if endpoint == START {
                        has_start = true;
                        map.entry(format!("{prefix}node {START}")).or_insert(p);
                    } else if endpoint == END {
                        has_end = true;
                        map.entry(format!("{prefix}node {END}")).or_insert(p);
                    }
                }
                let mut flow = Flow::new(from, to);
                if cur.is_keyword("when") {
                    cur.next();
                    flow.condition = Some(cur.string()?);
                }
                if cur.is_keyword("exceptional") {
                    cur.next();
                    flow.exceptional = true;
                }
                map.insert(format!("{prefix}flow #{}", flows.len()), pos);
                flows.push(flow);
            }
            _ => return cur.unexpected("`node`, a flow, or `}`"),
        }
    }
    let mut nodes = Vec::with_capacity(declared.len() + 2);
    if has_start {
        nodes.push(Node { id: START.into(), kind: NodeKind::Start });
    }
    nodes.extend(declared);
    if has_end {
        nodes.push(Node { id: END.into(), kind: NodeKind::End });
    }
    Ok(ProcessBody { nodes, flows })
}

/// Check every process invariant against the domain. Empty iff valid.
pub fn validate_process(p: &ProcessModel, d: &Domain) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if p.domain_ref != d.name {
        out.push(Diagnostic::error(
            "domain-mismatch",
            format!("process {}", p.name),
            format!("process uses domain `{}` but `{}` was supplied", p.domain_ref, d.name),
        ));
    }
    out.extend(validate_body(&p.body, Some(d), ""));
    out
}

/// Structural checks on a body. `prefix` is prepended to every location so
/// that subprocess bodies report `concept X: subprocess node n`.
pub(crate) fn validate_body(body: &ProcessBody, d: Option<&Domain>, prefix: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let node_loc = |id: &str| format!("{prefix}node {id}");
    let flow_loc = |i: usize| format!("{prefix}flow #{i}");

    let mut by_id: HashMap<&str, &Node> = HashMap::new();
    for n in &body.nodes {
        if !is_identifier(&n.id) {
            out.push(Diagnostic::error(
                "invalid-identifier",
                node_loc(&n.id),
                format!("`{}` is not an identifier", n.id),
            ));
        }
        if by_id.insert(n.id.as_str(), n).is_some() {
            out.push(Diagnostic::error("duplicate-node", node_loc(&n.id), format!("node `{}` declared twice", n.id)));
        }
        if let (NodeKind::Concept(c), Some(d)) = (&n.kind, d) {
            if d.concept(c).is_none() {
                out.push(Diagnostic::error(
                    "unknown-concept",
                    node_loc(&n.id),
                    format!("node `{}` references unknown concept `{c}`", n.id),
                ));
            }
        }
    }

    let starts: Vec<&Node> = body.nodes.iter().filter(|n| n.kind == NodeKind::Start).collect();
    let ends = body.nodes.iter().filter(|n| n.kind == NodeKind::End).count();
    match starts.len() {
        0 => out.push(Diagnostic::error("missing-start", format!("{prefix}body"), "no `start` node")),
        1 => {}
        _ => out.push(Diagnostic::error("multiple-start", node_loc(&starts[1].id), "more than one start node")),
    }
    if ends == 0 {
        out.push(Diagnostic::error("missing-end", format!("{prefix}body"), "no `end` node"));
    }

    let mut valid_flows = Vec::new();
    for (i, f) in body.flows.iter().enumerate() {
        let (from, to) = (by_id.get(f.from.as_str()), by_id.get(f.to.as_str()));
        for (endpoint, found) in [(&f.from, from), (&f.to, to)] {
            if found.is_none() {
                out.push(Diagnostic::error(
                    "unknown-node",
                    flow_loc(i),
                    format!("flow {} -> {} references undeclared node `{endpoint}`", f.from, f.to),
                ));
            }
        }
        let (Some(from), Some(to)) = (from, to) else { continue };
        if to.kind == NodeKind::Start {
            out.push(Diagnostic::error("flow-into-start", flow_loc(i), format!("flow {} -> start", f.from)));
        }
        if from.kind == NodeKind::End {
            out.push(Diagnostic::error("flow-from-end", flow_loc(i), format!("flow end -> {}", f.to)));
        }
        if f.condition.is_some() && !f.exceptional && from.kind != NodeKind::Gateway(GatewayKind::Exclusive) {
            out.push(Diagnostic::error(
                "misplaced-condition",
                flow_loc(i),
                format!(
                    "condition on flow {} -> {}: only exclusive-gateway and exceptional flows take conditions",
                    f.from, f.to
                ),
            ));
        }
        if f.condition.is_some() && f.exceptional {
            out.push(Diagnostic::info(
                "exceptional-condition",
                flow_loc(i),
                format!("condition on exceptional flow {} -> {} is kept as a label only", f.from, f.to),
            ));
        }
        valid_flows.push(f);
    }

    let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut pred: HashMap<&str, Vec<&str>> = HashMap::new();
    for f in &valid_flows {
        succ.entry(f.from.as_str()).or_default().push(f.to.as_str());
        pred.entry(f.to.as_str()).or_default().push(f.from.as_str());
    }

    let forward = starts.first().map(|s| reach(&[s.id.as_str()], &succ)).unwrap_or_default();
    let end_ids: Vec<&str> = body.nodes.iter().filter(|n| n.kind == NodeKind::End).map(|n| n.id.as_str()).collect();
    let backward = reach(&end_ids, &pred);

    let mut reported = HashSet::new();
    for n in &body.nodes {
        if !reported.insert(n.id.as_str()) {
            continue;
        }
        let outs = succ.get(n.id.as_str()).map_or(0, Vec::len);
        let ins = pred.get(n.id.as_str()).map_or(0, Vec::len);
        if !starts.is_empty() && !forward.contains(n.id.as_str()) {
            out.push(Diagnostic::error(
                "unreachable-node",
                node_loc(&n.id),
                format!("node `{}` is unreachable from start", n.id),
            ));
        } else if n.kind != NodeKind::End && outs == 0 {
            out.push(Diagnostic::error("dead-end", node_loc(&n.id), format!("node `{}` has no outgoing flow", n.id)));
        } else if ends > 0 && !backward.contains(n.id.as_str()) {
            out.push(Diagnostic::error(
                "no-path-to-end",
                node_loc(&n.id),
                format!("no path from `{}` to an end node", n.id),
            ));
        }
        if let NodeKind::Gateway(kind) = n.kind {
            if ins <= 1 && outs <= 1 {
                out.push(Diagnostic::warning(
                    "degenerate-gateway",
                    node_loc(&n.id),
                    format!("gateway `{}` neither splits nor joins", n.id),
                ));
            }
            if kind == GatewayKind::Parallel && outs > 1 && !has_matching_join(body, &n.id, &succ) {
                out.push(Diagnostic::warning(
                    "unmatched-parallel-split",
                    node_loc(&n.id),
                    format!("parallel split `{}` has no join reachable from all of its branches", n.id),
                ));
            }
        }
    }
    out
}

fn reach<'a>(roots: &[&'a str], edges: &HashMap<&'a str, Vec<&'a str>>) -> HashSet<&'a str> {
    let mut seen: HashSet<&str> = roots.iter().copied().collect();
    let mut queue: VecDeque<&str> = roots.iter().copied().collect();
    while let Some(v) = queue.pop_front() {
        for &w in edges.get(v).into_iter().flatten() {
            if seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    seen
}

fn has_matching_join(body: &ProcessBody, split: &str, succ: &HashMap<&str, Vec<&str>>) -> bool {
    let joins: HashSet<&str> = body
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Gateway(GatewayKind::Parallel) && body.incoming(&n.id).count() > 1)
        .map(|n| n.id.as_str())
        .collect();
    let mut common: Option<HashSet<&str>> = None;
    for &branch in succ.get(split).into_iter().flatten() {
        let reachable: HashSet<&str> = reach(&[branch], succ).intersection(&joins).copied().collect();
        common = Some(match common {
            None => reachable,
            Some(acc) => acc.intersection(&reachable).copied().collect(),
        });
    }
    common.is_some_and(|c| !c.is_empty())
}

/// Count of concept references per concept name, recursing into subprocess
/// bodies through the domain.
pub fn concept_usage(body: &ProcessBody, d: &Domain) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    fn walk(body: &ProcessBody, d: &Domain, out: &mut BTreeMap<String, usize>, depth: usize) {
        for (_, c) in body.concept_refs() {
            *out.entry(c.to_string()).or_insert(0) += 1;
            if let Some(inner) = d.concept(c).and_then(|c| c.subprocess.as_ref()) {
                if depth < 64 {
                    walk(inner, d, out, depth + 1);
                }
            }
        }
    }
    walk(body, d, &mut out, 0);
    out
}
