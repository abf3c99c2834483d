//! Domain meta-model: concepts, abstract services and SLAs.
//!
//! A `.dsml` file declares one [`Domain`]:
//!
//! ```text
//! domain Orders {
//!   service s1 { operation "authorize card" }
//!   sla PaymentTime { max_duration 1 h severity warning }
//!   concept HandlePayment {
//!     label "Handle Payment"
//!     version 2
//!     services [s1]
//!     sla PaymentTime
//!   }
//! }
//! ```
//!
//! Concepts may instead carry a `subprocess { ... }` body written in the
//! process statement syntax; such a concept expands to a BPMN sub-process.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{has_errors, Diagnostic, Pos};
use crate::lexer::{is_identifier, quote, Cursor, SyntaxError, Tok};
use crate::mappings::{ActivityMappings, Uid};
use crate::process::{self, NodeKind, ProcessBody};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Domain {
    pub name: String,
    pub concepts: Vec<DsConcept>,
    pub services: Vec<DsService>,
    pub slas: Vec<Sla>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsConcept {
    /// Verb+object identifier, e.g. `HandlePayment`.
    pub name: String,
    pub label: String,
    pub version: u32,
    pub service_refs: Vec<String>,
    pub sla_ref: Option<String>,
    pub depends_on: Vec<String>,
    pub subprocess: Option<ProcessBody>,
}

impl DsConcept {
    pub fn new(name: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            label: label.into(),
            version: 1,
            service_refs: Vec::new(),
            sla_ref: None,
            depends_on: Vec::new(),
            subprocess: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsService {
    pub name: String,
    pub operation: String,
    /// Services are abstract at domain level; concrete endpoints come from a binding table.
    pub is_abstract: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlaMetric {
    MaxDuration,
    MaxMeanDuration,
    MaxFaultRate,
}

impl SlaMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            SlaMetric::MaxDuration => "max_duration",
            SlaMetric::MaxMeanDuration => "max_mean_duration",
            SlaMetric::MaxFaultRate => "max_fault_rate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "max_duration" => SlaMetric::MaxDuration,
            "max_mean_duration" => SlaMetric::MaxMeanDuration,
            "max_fault_rate" => SlaMetric::MaxFaultRate,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlaUnit {
    Ms,
    S,
    Min,
    H,
    D,
    Ratio,
}

impl SlaUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            SlaUnit::Ms => "ms",
            SlaUnit::S => "s",
            SlaUnit::Min => "min",
            SlaUnit::H => "h",
            SlaUnit::D => "d",
            SlaUnit::Ratio => "ratio",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ms" => SlaUnit::Ms,
            "s" => SlaUnit::S,
            "min" => SlaUnit::Min,
            "h" => SlaUnit::H,
            "d" => SlaUnit::D,
            "ratio" => SlaUnit::Ratio,
            _ => return None,
        })
    }

    /// Milliseconds per unit; `None` for `ratio`.
    pub fn millis(self) -> Option<f64> {
        match self {
            SlaUnit::Ms => Some(1.0),
            SlaUnit::S => Some(1_000.0),
            SlaUnit::Min => Some(60_000.0),
            SlaUnit::H => Some(3_600_000.0),
            SlaUnit::D => Some(86_400_000.0),
            SlaUnit::Ratio => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlaSeverity {
    Info,
    Warning,
    Critical,
}

impl SlaSeverity {
    pub fn as_str(self) -> &'static str {
        match self {
            SlaSeverity::Info => "info",
            SlaSeverity::Warning => "warning",
            SlaSeverity::Critical => "critical",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "info" => SlaSeverity::Info,
            "warning" => SlaSeverity::Warning,
            "critical" => SlaSeverity::Critical,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sla {
    pub name: String,
    pub metric: SlaMetric,
    pub threshold: f64,
    pub unit: SlaUnit,
    pub severity: SlaSeverity,
}

impl Sla {
    /// Threshold in the unit the metric is observed in: milliseconds for the
    /// duration metrics, a plain ratio for `max_fault_rate`.
    pub fn limit(&self) -> f64 {
        match self.unit.millis() {
            Some(ms) => self.threshold * ms,
            None => self.threshold,
        }
    }
}

impl Domain {
    pub fn concept(&self, name: &str) -> Option<&DsConcept> {
        self.concepts.iter().find(|c| c.name == name)
    }

    pub fn service(&self, name: &str) -> Option<&DsService> {
        self.services.iter().find(|s| s.name == name)
    }

    pub fn sla(&self, name: &str) -> Option<&Sla> {
        self.slas.iter().find(|s| s.name == name)
    }

    /// Render back to `.dsml` text. Parsing the output yields an equal `Domain`.
    pub fn to_dsml(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "domain {} {{", self.name);
        for s in &self.services {
            let _ = writeln!(out, "  service {} {{ operation {} }}", s.name, quote(&s.operation));
        }
        for s in &self.slas {
            let _ = writeln!(
                out,
                "  sla {} {{ {} {} {} severity {} }}",
                s.name,
                s.metric.as_str(),
                s.threshold,
                s.unit.as_str(),
                s.severity.as_str()
            );
        }
        for c in &self.concepts {
            let _ = writeln!(out, "  concept {} {{", c.name);
            let _ = writeln!(out, "    label {}", quote(&c.label));
            let _ = writeln!(out, "    version {}", c.version);
            if !c.service_refs.is_empty() {
                let _ = writeln!(out, "    services [{}]", c.service_refs.join(", "));
            }
            if let Some(sla) = &c.sla_ref {
                let _ = writeln!(out, "    sla {sla}");
            }
            if !c.depends_on.is_empty() {
                let _ = writeln!(out, "    depends_on [{}]", c.depends_on.join(", "));
            }
            if let Some(body) = &c.subprocess {
                out.push_str("    subprocess {\n");
                process::write_body(&mut out, body, "      ");
                out.push_str("    }\n");
            }
            out.push_str("  }\n");
        }
        out.push_str("}\n");
        out
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_dsml())
    }
}

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("invalid domain: {}", summarize(.0))]
    Invalid(Vec<Diagnostic>),
}

pub(crate) fn summarize(diags: &[Diagnostic]) -> String {
    diags.iter().filter(|d| d.is_error()).map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Positions of named elements, keyed by the same location strings the
/// validators emit.
pub(crate) type SourceMap = HashMap<String, Pos>;

/// Parse and validate a `.dsml` source. Fails on syntax errors and on any
/// error-severity diagnostic.
pub fn parse_domain(source: &str) -> Result<Domain, DomainError> {
    let (domain, diags) = check_domain(source)?;
    if has_errors(&diags) {
        return Err(DomainError::Invalid(diags));
    }
    Ok(domain)
}

/// Parse a `.dsml` source and return the model with every diagnostic
/// (positions attached). Only syntax errors abort.
pub fn check_domain(source: &str) -> Result<(Domain, Vec<Diagnostic>), SyntaxError> {
    let (domain, map) = parse_syntax(source)?;
    let diags = validate_domain(&domain)
        .into_iter()
        .map(|d| {
            let pos = map.get(&d.location).copied();
            d.at(pos)
        })
        .collect();
    Ok((domain, diags))
}

fn parse_syntax(source: &str) -> Result<(Domain, SourceMap), SyntaxError> {
    let mut cur = Cursor::new(source)?;
    let mut map = SourceMap::new();
    cur.keyword("domain")?;
    let (name, name_pos) = cur.ident()?;
    map.insert(format!("domain {name}"), name_pos);
    cur.expect(Tok::LBrace)?;
    let mut domain = Domain { name, ..Domain::default() };
    loop {
        match cur.peek() {
            Tok::RBrace => {
                cur.next();
                break;
            }
            Tok::Ident(kw) if kw == "service" => {
                cur.next();
                let (name, pos) = cur.ident()?;
                cur.expect(Tok::LBrace)?;
                cur.keyword("operation")?;
                let operation = cur.string()?;
                cur.expect(Tok::RBrace)?;
                map.entry(format!("service {name}")).or_insert(pos);
                domain.services.push(DsService { name, operation, is_abstract: true });
            }
            Tok::Ident(kw) if kw == "sla" => {
                cur.next();
                let sla = parse_sla(&mut cur, &mut map)?;
                domain.slas.push(sla);
            }
            Tok::Ident(kw) if kw == "concept" => {
                cur.next();
                let concept = parse_concept(&mut cur, &mut map)?;
                domain.concepts.push(concept);
            }
            _ => return cur.unexpected("`concept`, `service`, `sla` or `}`"),
        }
    }
    if *cur.peek() != Tok::Eof {
        return cur.unexpected("end of input");
    }
    Ok((domain, map))
}

fn parse_sla(cur: &mut Cursor, map: &mut SourceMap) -> Result<Sla, SyntaxError> {
    let (name, pos) = cur.ident()?;
    map.entry(format!("sla {name}")).or_insert(pos);
    cur.expect(Tok::LBrace)?;
    let (metric_text, metric_pos) = cur.ident()?;
    let metric = SlaMetric::parse(&metric_text)
        .ok_or_else(|| SyntaxError { pos: metric_pos, message: format!("unknown SLA metric `{metric_text}`") })?;
    let (num, num_pos) = cur.number()?;
    let threshold: f64 =
        num.parse().map_err(|_| SyntaxError { pos: num_pos, message: format!("invalid number `{num}`") })?;
    let (unit_text, unit_pos) = cur.ident()?;
    let unit = SlaUnit::parse(&unit_text)
        .ok_or_else(|| SyntaxError { pos: unit_pos, message: format!("unknown unit `{unit_text}`") })?;
    cur.keyword("severity")?;
    let (sev_text, sev_pos) = cur.ident()?;
    let severity = SlaSeverity::parse(&sev_text)
        .ok_or_else(|| SyntaxError { pos: sev_pos, message: format!("unknown severity `{sev_text}`") })?;
    cur.expect(Tok::RBrace)?;
    Ok(Sla { name, metric, threshold, unit, severity })
}

fn parse_concept(cur: &mut Cursor, map: &mut SourceMap) -> Result<DsConcept, SyntaxError> {
    let (name, pos) = cur.ident()?;
    let loc = format!("concept {name}");
    map.entry(loc.clone()).or_insert(pos);
    cur.expect(Tok::LBrace)?;
    let mut concept = DsConcept::new(name, String::new());
    let mut seen: HashSet<String> = HashSet::new();
    let mut has_label = false;
    loop {
        let (tok, tok_pos) = cur.next();
        let kw = match tok {
            Tok::RBrace => break,
            Tok::Ident(kw) => kw,
            other => {
                return Err(SyntaxError { pos: tok_pos, message: format!("expected concept attribute, found {other}") })
            }
        };
        if !seen.insert(kw.clone()) {
            return Err(SyntaxError { pos: tok_pos, message: format!("attribute `{kw}` given twice") });
        }
        match kw.as_str() {
            "label" => {
                concept.label = cur.string()?;
                has_label = true;
            }
            "version" => {
                let (n, p) = cur.number()?;
                concept.version = n
                    .parse()
                    .map_err(|_| SyntaxError { pos: p, message: format!("version must be an integer, found `{n}`") })?;
                map.insert(format!("{loc}: version"), p);
            }
            "services" => {
                for (s, p) in cur.ident_list()? {
                    map.entry(format!("{loc}: service ref {s}")).or_insert(p);
                    concept.service_refs.push(s);
                }
            }
            "sla" => {
                let (s, p) = cur.ident()?;
                map.insert(format!("{loc}: sla ref {s}"), p);
                concept.sla_ref = Some(s);
            }
            "depends_on" => {
                for (s, p) in cur.ident_list()? {
                    map.entry(format!("{loc}: depends_on {s}")).or_insert(p);
                    concept.depends_on.push(s);
                }
            }
            "subprocess" => {
                cur.expect(Tok::LBrace)?;
                let body = process::parse_body(cur, map, &format!("{loc}: subprocess "))?;
                cur.expect(Tok::RBrace)?;
                concept.subprocess = Some(body);
            }
            other => {
                return Err(SyntaxError { pos: tok_pos, message: format!("unknown concept attribute `{other}`") });
            }
        }
    }
    if !has_label {
        return Err(SyntaxError { pos, message: format!("concept `{}` is missing `label`", concept.name) });
    }
    Ok(concept)
}

/// Check every domain invariant. Empty result iff the domain is valid.
pub fn validate_domain(d: &Domain) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if !is_identifier(&d.name) {
        out.push(Diagnostic::error(
            "invalid-identifier",
            format!("domain {}", d.name),
            "domain name is not an identifier",
        ));
    }

    let mut seen = HashSet::new();
    for s in &d.services {
        let loc = format!("service {}", s.name);
        if !is_identifier(&s.name) {
            out.push(Diagnostic::error("invalid-identifier", &loc, format!("`{}` is not an identifier", s.name)));
        }
        if !seen.insert(s.name.as_str()) {
            out.push(Diagnostic::error("duplicate-service", &loc, format!("service `{}` declared twice", s.name)));
        }
        if !s.is_abstract {
            out.push(Diagnostic::error("concrete-service", &loc, "domain-level services must be abstract"));
        }
    }

    let mut seen = HashSet::new();
    for s in &d.slas {
        let loc = format!("sla {}", s.name);
        if !seen.insert(s.name.as_str()) {
            out.push(Diagnostic::error("duplicate-sla", &loc, format!("SLA `{}` declared twice", s.name)));
        }
        if !s.threshold.is_finite() || s.threshold < 0.0 {
            out.push(Diagnostic::error("invalid-threshold", &loc, "threshold must be a non-negative number"));
        }
        match s.metric {
            SlaMetric::MaxFaultRate => {
                if s.unit != SlaUnit::Ratio {
                    out.push(Diagnostic::error("invalid-unit", &loc, "max_fault_rate takes the `ratio` unit"));
                }
                if s.threshold > 1.0 {
                    out.push(Diagnostic::error("invalid-threshold", &loc, "fault-rate threshold must be at most 1"));
                }
            }
            SlaMetric::MaxDuration | SlaMetric::MaxMeanDuration => {
                if s.unit == SlaUnit::Ratio {
                    out.push(Diagnostic::error(
                        "invalid-unit",
                        &loc,
                        format!("{} takes a duration unit (ms, s, min, h, d)", s.metric.as_str()),
                    ));
                }
            }
        }
    }

    let mut seen = HashSet::new();
    for c in &d.concepts {
        let loc = format!("concept {}", c.name);
        if !is_identifier(&c.name) {
            out.push(Diagnostic::error("invalid-identifier", &loc, format!("`{}` is not an identifier", c.name)));
        }
        if !seen.insert(c.name.as_str()) {
            out.push(Diagnostic::error("duplicate-concept", &loc, format!("concept `{}` declared twice", c.name)));
        }
        if c.version == 0 {
            out.push(Diagnostic::error("invalid-version", format!("{loc}: version"), "version must be at least 1"));
        }
        if c.service_refs.is_empty() && c.subprocess.is_none() {
            out.push(Diagnostic::error(
                "concept-without-services",
                &loc,
                format!("concept `{}` needs services or a subprocess", c.name),
            ));
        }
        for s in &c.service_refs {
            if d.service(s).is_none() {
                out.push(Diagnostic::error(
                    "unresolved-service",
                    format!("{loc}: service ref {s}"),
                    format!("concept `{}` references undeclared service `{s}`", c.name),
                ));
            }
        }
        if let Some(s) = &c.sla_ref {
            if d.sla(s).is_none() {
                out.push(Diagnostic::error(
                    "unresolved-sla",
                    format!("{loc}: sla ref {s}"),
                    format!("concept `{}` references undeclared SLA `{s}`", c.name),
                ));
            }
        }
        for dep in &c.depends_on {
            if d.concept(dep).is_none() {
                out.push(Diagnostic::error(
                    "unresolved-concept",
                    format!("{loc}: depends_on {dep}"),
                    format!("concept `{}` depends on undeclared concept `{dep}`", c.name),
                ));
            }
        }
        if let Some(body) = &c.subprocess {
            out.extend(process::validate_body(body, Some(d), &format!("{loc}: subprocess ")));
        }
    }

    for cycle in cycles(d, |c| c.depends_on.iter().map(String::as_str).collect()) {
        out.push(Diagnostic::error(
            "dependency-cycle",
            format!("concept {}", cycle[0]),
            format!("dependency cycle: {} -> {}", cycle.join(" -> "), cycle[0]),
        ));
    }
    for cycle in cycles(d, subprocess_refs) {
        out.push(Diagnostic::error(
            "subprocess-cycle",
            format!("concept {}", cycle[0]),
            format!("subprocess expansion never terminates: {} -> {}", cycle.join(" -> "), cycle[0]),
        ));
    }
    out
}

fn subprocess_refs(c: &DsConcept) -> Vec<&str> {
    c.subprocess
        .iter()
        .flat_map(|b| b.nodes.iter())
        .filter_map(|n| match &n.kind {
            NodeKind::Concept(name) => Some(name.as_str()),
            _ => None,
        })
        .collect()
}

/// Strongly connected components of the concept graph that contain a cycle,
/// each listed in declaration order. Edges to unknown concepts are ignored.
fn cycles<'a>(d: &'a Domain, edges: impl Fn(&'a DsConcept) -> Vec<&'a str>) -> Vec<Vec<&'a str>> {
    let index: HashMap<&str, usize> = d.concepts.iter().enumerate().map(|(i, c)| (c.name.as_str(), i)).collect();
    let adj: Vec<Vec<usize>> =
        d.concepts.iter().map(|c| edges(c).into_iter().filter_map(|n| index.get(n).copied()).collect()).collect();

    // Tarjan, iterative.
    let n = adj.len();
    let mut idx = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut counter = 0;
    let mut sccs: Vec<Vec<usize>> = Vec::new();
    for root in 0..n {
        if idx[root] != usize::MAX {
            continue;
        }
        let mut work = vec![(root, 0usize)];
        while let Some(&mut (v, ref mut ei)) = work.last_mut() {
            if *ei == 0 && idx[v] == usize::MAX {
                idx[v] = counter;
                low[v] = counter;
                counter += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *ei < adj[v].len() {
                let w = adj[v][*ei];
                *ei += 1;
                if idx[w] == usize::MAX {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(idx[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == idx[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                let cyclic = comp.len() > 1 || adj[v].contains(&v);
                if cyclic {
                    comp.sort_unstable();
                    sccs.push(comp);
                }
            }
        }
    }
    sccs.sort();
    sccs.into_iter().map(|comp| comp.into_iter().map(|i| d.concepts[i].name.as_str()).collect()).collect()
}

/// One SLA obligation attached to one generated activity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlaAssignment {
    pub activity_uid: Uid,
    pub concept: String,
    pub process: String,
    pub sla: Sla,
}

#[derive(Debug, Error, PartialEq)]
pub enum SlaError {
    #[error("activity {uid} maps to concept `{concept}`, which the domain does not declare")]
    UnknownConcept { uid: Uid, concept: String },
    #[error("concept `{concept}` references undeclared SLA `{sla}`")]
    UnknownSla { concept: String, sla: String },
}

/// Attach each concept's SLA to every activity mapped to that concept, in
/// every process. Activities whose concept has no SLA are omitted. Output is
/// ordered by activity uid.
pub fn propagate_sla(d: &Domain, am: &ActivityMappings) -> Result<Vec<SlaAssignment>, SlaError> {
    let mut out = Vec::new();
    for (uid, entry) in am.iter() {
        let concept = d
            .concept(&entry.concept)
            .ok_or_else(|| SlaError::UnknownConcept { uid: uid.clone(), concept: entry.concept.clone() })?;
        let Some(sla_name) = &concept.sla_ref else { continue };
        let sla = d
            .sla(sla_name)
            .ok_or_else(|| SlaError::UnknownSla { concept: concept.name.clone(), sla: sla_name.clone() })?;
        out.push(SlaAssignment {
            activity_uid: uid.clone(),
            concept: concept.name.clone(),
            process: entry.process.clone(),
            sla: sla.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAYMENT: &str = r#"
        # payment handling
        domain Shop {
          service s1 { operation "authorize" }
          service s2 { operation "capture" }
          sla Fast { max_duration 1 h severity warning }
          concept HandlePayment {
            label "Handle Payment"
            services [s1, s2]
            sla Fast
          }
        }
    "#;

    #[test]
    fn parses_concept_with_two_services() {
        let d = parse_domain(PAYMENT).unwrap();
        let c = d.concept("HandlePayment").unwrap();
        assert_eq!(c.service_refs, ["s1", "s2"]);
        assert_eq!(c.version, 1);
        assert_eq!(c.sla_ref.as_deref(), Some("Fast"));
        assert_eq!(d.sla("Fast").unwrap().limit(), 3_600_000.0);
    }

    #[test]
    fn empty_domain() {
        let d = parse_domain("domain Empty { }").unwrap();
        assert_eq!(d.name, "Empty");
        assert!(d.concepts.is_empty() && d.services.is_empty());
        assert!(validate_domain(&d).is_empty());
    }

    #[test]
    fn undeclared_service_is_one_error_with_position() {
        let src = "domain D {\n  concept A { label \"A\" services [nope] }\n}";
        let (_, diags) = check_domain(src).unwrap();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, "unresolved-service");
        assert_eq!(diags[0].pos, Some(Pos { line: 2, col: 35 }));
        assert!(matches!(parse_domain(src), Err(DomainError::Invalid(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let src = r#"domain D {
            service s { operation "x" }
            service s { operation "y" }
            concept A { label "A" services [s] }
            concept A { label "A2" services [s] }
        }"#;
        let (_, diags) = check_domain(src).unwrap();
        let codes: Vec<_> = diags.iter().map(|d| d.code).collect();
        assert_eq!(codes, ["duplicate-service", "duplicate-concept"]);
    }

    #[test]
    fn syntax_error_has_line_and_column() {
        let err = parse_domain("domain D {\n  concept { }\n}").unwrap_err();
        match err {
            DomainError::Syntax(e) => assert_eq!(e.pos, Pos { line: 2, col: 11 }),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sla_unit_must_match_metric() {
        let src = r#"domain D {
            sla A { max_fault_rate 2 ratio severity info }
            sla B { max_duration 3 ratio severity info }
            sla C { max_fault_rate 0.1 h severity info }
        }"#;
        let (_, diags) = check_domain(src).unwrap();
        let codes: Vec<_> = diags.iter().map(|d| (d.location.as_str(), d.code)).collect();
        assert_eq!(codes, [("sla A", "invalid-threshold"), ("sla B", "invalid-unit"), ("sla C", "invalid-unit")]);
    }

    #[test]
    fn concept_needs_services_or_subprocess() {
        let (_, diags) = check_domain("domain D { concept A { label \"A\" } }").unwrap();
        assert_eq!(diags[0].code, "concept-without-services");
    }

    #[test]
    fn subprocess_self_expansion_is_a_cycle() {
        let src = r#"domain D {
            service s { operation "x" }
            concept A { label "A" subprocess { node a: concept A start -> a a -> end } }
        }"#;
        let (_, diags) = check_domain(src).unwrap();
        assert!(diags.iter().any(|d| d.code == "subprocess-cycle"), "{diags:?}");
    }

    #[test]
    fn serialization_round_trips() {
        let d = parse_domain(PAYMENT).unwrap();
        assert_eq!(parse_domain(&d.to_dsml()).unwrap(), d);
    }
}
