use std::collections::HashSet;

use super::{
    BpmnElement, BpmnError, BpmnKind, BpmnModel, ConceptRef, Container, SequenceFlow, BPMN_NS, EXCEPTION_CONDITION,
};
use crate::mappings::Uid;
use crate::pivot::{CommonModel, ElementKind, EventKind};
use crate::process::GatewayKind;

/// Generate the BPMN skeleton for a pivot model.
///
/// Concept activities become `serviceTask`s carrying a `conceptRef`, concept
/// subprocesses become `subProcess`es. An exceptional flow leaving an
/// exclusive gateway becomes one more branch conditioned on `exception`;
/// leaving anything else, an exclusive gateway is inserted after the source
/// whose default branch continues the normal path and whose `exception`
/// branch takes the exceptional one.
///
/// Output is a pure function of `m`.
pub fn generate_bpmn(m: &CommonModel) -> Result<(BpmnModel, String), BpmnError> {
    let mut gen = Generator { domain: &m.domain, flow_counter: 0, uids: HashSet::new() };
    let body = gen.container(m)?;
    let model = BpmnModel {
        definitions_attrs: vec![
            ("xmlns:bpmn".into(), BPMN_NS.into()),
            ("id".into(), format!("Definitions_{}", m.name)),
            ("targetNamespace".into(), format!("urn:dsml:{}", m.domain)),
        ],
        prefix: "bpmn".into(),
        process_id: m.name.clone(),
        process_name: Some(m.name.clone()),
        process_attrs: vec![("isExecutable".into(), "true".into())],
        body,
        root_extra: Vec::new(),
    };
    let xml = model.to_xml();
    Ok((model, xml))
}

struct Generator<'a> {
    domain: &'a str,
    flow_counter: usize,
    uids: HashSet<Uid>,
}

fn element_id(kind: &ElementKind, uid: &Uid) -> String {
    let prefix = match kind {
        ElementKind::Activity => "Activity",
        ElementKind::SubProcess(_) => "SubProcess",
        ElementKind::Gateway(_) => "Gateway",
        ElementKind::Event(EventKind::Start) => "StartEvent",
        ElementKind::Event(EventKind::End) => "EndEvent",
    };
    format!("{prefix}_{uid}")
}

impl Generator<'_> {
    fn next_flow(&mut self, source: &str, target: &str) -> SequenceFlow {
        self.flow_counter += 1;
        SequenceFlow::new(format!("Flow_{}", self.flow_counter), source, target)
    }

    fn container(&mut self, m: &CommonModel) -> Result<Container, BpmnError> {
        let mut c = Container::default();
        let id_of =
            |uid: &Uid| m.element(uid).map(|e| element_id(&e.kind, uid)).unwrap_or_else(|| format!("Missing_{uid}"));

        for e in &m.elements {
            if !self.uids.insert(e.uid.clone()) {
                return Err(BpmnError::UidCollision(e.uid.clone()));
            }
            let id = element_id(&e.kind, &e.uid);
            let concept = m.concept_tags.get(&e.uid).map(|name| ConceptRef {
                uid: e.uid.clone(),
                concept: name.clone(),
                domain: self.domain.to_string(),
            });
            let (kind, name) = match &e.kind {
                ElementKind::Activity if concept.is_some() => (BpmnKind::ServiceTask, Some(e.label.clone())),
                ElementKind::Activity => (BpmnKind::Task, Some(e.label.clone())),
                ElementKind::SubProcess(_) => (BpmnKind::SubProcess, Some(e.label.clone())),
                ElementKind::Gateway(GatewayKind::Exclusive) => (BpmnKind::ExclusiveGateway, Some(e.label.clone())),
                ElementKind::Gateway(GatewayKind::Parallel) => (BpmnKind::ParallelGateway, Some(e.label.clone())),
                ElementKind::Event(EventKind::Start) => (BpmnKind::StartEvent, Some(e.label.clone())),
                ElementKind::Event(EventKind::End) => (BpmnKind::EndEvent, Some(e.label.clone())),
            };
            let mut el = BpmnElement::new(id, kind, name);
            el.concept = concept;
            if !e.depends_on.is_empty() {
                el.documentation = Some(format!("depends on: {}", e.depends_on.join(", ")));
            }
            if let ElementKind::SubProcess(inner) = &e.kind {
                el.inner = Some(self.container(inner)?);
            }
            c.elements.push(el);
        }

        // Flows grouped by source so exceptional branches can be lowered
        // alongside the normal ones. Source order follows first appearance.
        let mut sources: Vec<&Uid> = Vec::new();
        for f in &m.flows {
            if !sources.contains(&&f.from) {
                sources.push(&f.from);
            }
        }
        for src in sources {
            let outs: Vec<_> = m.flows.iter().filter(|f| &f.from == src).collect();
            let src_id = id_of(src);
            let src_is_exclusive =
                matches!(m.element(src).map(|e| &e.kind), Some(ElementKind::Gateway(GatewayKind::Exclusive)));
            let has_exceptional = outs.iter().any(|f| f.exceptional);

            if !has_exceptional || src_is_exclusive {
                for f in outs {
                    let mut flow = self.next_flow(&src_id, &id_of(&f.to));
                    if f.exceptional {
                        flow.name = f.condition.clone();
                        flow.condition = Some(EXCEPTION_CONDITION.into());
                    } else {
                        flow.condition = f.condition.clone();
                    }
                    c.sequence_flows.push(flow);
                }
                continue;
            }

            let gateway_id = format!("Gateway_{src}_exception");
            let mut gateway = BpmnElement::new(&gateway_id, BpmnKind::ExclusiveGateway, Some("exception?".into()));
            let pos = c.elements.iter().position(|e| e.id == src_id).map_or(c.elements.len(), |p| p + 1);
            let into_gateway = self.next_flow(&src_id, &gateway_id);
            c.sequence_flows.push(into_gateway);

            let normal: Vec<_> = outs.iter().filter(|f| !f.exceptional).collect();
            let mut inserted = vec![];
            match normal.as_slice() {
                [] => {}
                [only] => {
                    let flow = self.next_flow(&gateway_id, &id_of(&only.to));
                    gateway.extra_attrs.push(("default".into(), flow.id.clone()));
                    c.sequence_flows.push(flow);
                }
                many => {
                    let fork_id = format!("Gateway_{src}_fork");
                    let to_fork = self.next_flow(&gateway_id, &fork_id);
                    gateway.extra_attrs.push(("default".into(), to_fork.id.clone()));
                    c.sequence_flows.push(to_fork);
                    for f in many {
                        let flow = self.next_flow(&fork_id, &id_of(&f.to));
                        c.sequence_flows.push(flow);
                    }
                    inserted.push(BpmnElement::new(fork_id, BpmnKind::ParallelGateway, Some("fork".into())));
                }
            }
            for f in outs.iter().filter(|f| f.exceptional) {
                let mut flow = self.next_flow(&gateway_id, &id_of(&f.to));
                flow.name = f.condition.clone();
                flow.condition = Some(EXCEPTION_CONDITION.into());
                c.sequence_flows.push(flow);
            }
            inserted.insert(0, gateway);
            for (i, el) in inserted.into_iter().enumerate() {
                c.elements.insert(pos + i, el);
            }
        }
        Ok(c)
    }
}
