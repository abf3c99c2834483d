use std::collections::HashSet;

use super::xml::{local, parse_document, XmlNode};
use super::{BpmnElement, BpmnError, BpmnKind, BpmnModel, ConceptRef, Container, SequenceFlow, BPMN_NS};
use crate::mappings::Uid;

/// Parse a BPMN 2.0 document, generated or hand-enriched.
///
/// Only the first `process` is interpreted; other root children are kept
/// verbatim. Elements without a `conceptRef` (technical additions) are
/// ordinary elements with `concept == None`.
pub fn parse_bpmn(xml: &str) -> Result<BpmnModel, BpmnError> {
    let root = parse_document(xml).map_err(|e| BpmnError::Malformed { offset: e.offset, message: e.message })?;
    if root.local_name() != "definitions" {
        return Err(BpmnError::NotDefinitions(root.name.clone()));
    }

    let mut ids = Vec::new();
    root.collect_ids(&mut ids);
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(BpmnError::DuplicateId(id.to_string()));
        }
    }

    let prefix = root
        .attrs
        .iter()
        .find(|(k, v)| v == BPMN_NS && (k == "xmlns" || k.starts_with("xmlns:")))
        .map(|(k, _)| k.strip_prefix("xmlns:").unwrap_or("").to_string())
        .unwrap_or_else(|| root.prefix().unwrap_or("").to_string());

    let mut process = None;
    let mut root_extra = Vec::new();
    for child in root.elements() {
        if process.is_none() && child.local_name() == "process" {
            process = Some(child);
        } else {
            root_extra.push(child.clone());
        }
    }
    let process = process.ok_or(BpmnError::NoProcess)?;
    let process_id = process.get("id").ok_or_else(|| BpmnError::MissingId(process.name.clone()))?.to_string();

    Ok(BpmnModel {
        definitions_attrs: root.attrs.clone(),
        prefix,
        process_id,
        process_name: process.get("name").map(str::to_string),
        process_attrs: process.attrs.iter().filter(|(k, _)| k != "id" && k != "name").cloned().collect(),
        body: container(process.elements())?,
        root_extra,
    })
}

fn container<'a>(children: impl Iterator<Item = &'a XmlNode>) -> Result<Container, BpmnError> {
    let mut c = Container::default();
    let mut flows = Vec::new();
    for child in children {
        match child.local_name() {
            "sequenceFlow" => flows.push(child),
            _ if child.get("id").is_some() => c.elements.push(element(child)?),
            _ => c.opaque.push(child.clone()),
        }
    }
    let ids: HashSet<&str> = c.elements.iter().map(|e| e.id.as_str()).collect();
    for f in flows {
        let flow = sequence_flow(f)?;
        for endpoint in [&flow.source, &flow.target] {
            if !ids.contains(endpoint.as_str()) {
                return Err(BpmnError::DanglingFlow { flow: flow.id.clone(), target: endpoint.clone() });
            }
        }
        c.sequence_flows.push(flow);
    }
    Ok(c)
}

fn element(node: &XmlNode) -> Result<BpmnElement, BpmnError> {
    let id = node.get("id").expect("caller checked id").to_string();
    let kind = BpmnKind::from_local(node.local_name());
    let mut el = BpmnElement::new(id, kind.clone(), node.get("name").map(str::to_string));
    if let BpmnKind::Other(_) = kind {
        el.raw = Some(node.clone());
        return Ok(el);
    }
    el.extra_attrs = node.attrs.iter().filter(|(k, _)| k != "id" && k != "name").cloned().collect();

    let mut inner_children = Vec::new();
    for child in node.elements() {
        match child.local_name() {
            "documentation" if el.documentation.is_none() => el.documentation = Some(child.text_content()),
            "extensionElements" => {
                for ext in child.elements() {
                    match (ext.local_name(), ext.get("uid")) {
                        ("conceptRef", Some(uid)) if el.concept.is_none() => {
                            el.concept = Some(ConceptRef {
                                uid: Uid::new(uid),
                                concept: ext.get("concept").unwrap_or_default().to_string(),
                                domain: ext.get("domain").unwrap_or_default().to_string(),
                            });
                        }
                        _ => el.extensions.push(ext.clone()),
                    }
                }
            }
            _ if el.kind == BpmnKind::SubProcess && is_flow_content(child) => inner_children.push(child),
            _ => el.extra_children.push(child.clone()),
        }
    }
    if el.kind == BpmnKind::SubProcess {
        el.inner = Some(container(inner_children.into_iter())?);
    }
    Ok(el)
}

/// Children of a subProcess that belong to its inner scope rather than to the
/// subProcess element itself.
fn is_flow_content(node: &XmlNode) -> bool {
    !matches!(
        node.local_name(),
        "incoming"
            | "outgoing"
            | "ioSpecification"
            | "property"
            | "dataInputAssociation"
            | "dataOutputAssociation"
            | "multiInstanceLoopCharacteristics"
            | "standardLoopCharacteristics"
    )
}

fn sequence_flow(node: &XmlNode) -> Result<SequenceFlow, BpmnError> {
    let id = node.get("id").ok_or_else(|| BpmnError::MissingId(node.name.clone()))?;
    let (Some(source), Some(target)) = (node.get("sourceRef"), node.get("targetRef")) else {
        return Err(BpmnError::IncompleteFlow(id.to_string()));
    };
    let mut flow = SequenceFlow::new(id, source, target);
    flow.name = node.get("name").map(str::to_string);
    flow.extra_attrs = node
        .attrs
        .iter()
        .filter(|(k, _)| !matches!(k.as_str(), "id" | "name" | "sourceRef" | "targetRef"))
        .cloned()
        .collect();
    for child in node.elements() {
        if local(&child.name) == "conditionExpression" && flow.condition.is_none() {
            flow.condition = Some(child.text_content());
            flow.condition_attrs = child.attrs.clone();
        } else {
            flow.extra_children.push(child.clone());
        }
    }
    Ok(flow)
}
