mod common;

use std::collections::{BTreeSet, HashMap, VecDeque};

use proptest::prelude::*;

use dsml_core::domain::{SlaMetric, SlaSeverity, SlaUnit};
use dsml_core::process::{concept_usage, NodeKind, ProcessBody};
use dsml_core::{
    build_am, parse_domain, parse_process, propagate_sla, to_common, validate_domain, validate_process, Domain,
    DsConcept, DsService, Sla, UidRegistry,
};

use common::{cases, gen_domain, process_model};

fn label() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 \"\\\\#{}]{1,16}"
}

/// Domains with acyclic dependencies and resolvable references.
fn domain() -> impl Strategy<Value = Domain> {
    let sla = (
        prop_oneof![Just(SlaMetric::MaxDuration), Just(SlaMetric::MaxMeanDuration)],
        0u32..10_000,
        prop_oneof![Just(SlaUnit::Ms), Just(SlaUnit::S), Just(SlaUnit::Min), Just(SlaUnit::H), Just(SlaUnit::D)],
        prop_oneof![Just(SlaSeverity::Info), Just(SlaSeverity::Warning), Just(SlaSeverity::Critical)],
    );
    let concept =
        (label(), 1u32..5, prop::collection::btree_set(0usize..4, 1..=3), prop::option::of(0usize..3), any::<u8>());
    (
        prop::collection::vec(label(), 4),
        prop::collection::vec(sla, 3),
        0.0f64..=1.0,
        prop::collection::vec(concept, 1..7),
    )
        .prop_map(|(ops, slas, rate, concepts)| {
            let mut d = Domain { name: "Random".into(), ..Domain::default() };
            for (i, op) in ops.into_iter().enumerate() {
                d.services.push(DsService { name: format!("svc{i}"), operation: op, is_abstract: true });
            }
            for (i, (metric, threshold, unit, severity)) in slas.into_iter().enumerate() {
                d.slas.push(Sla { name: format!("Sla{i}"), metric, threshold: f64::from(threshold), unit, severity });
            }
            d.slas.push(Sla {
                name: "Faults".into(),
                metric: SlaMetric::MaxFaultRate,
                threshold: rate,
                unit: SlaUnit::Ratio,
                severity: SlaSeverity::Warning,
            });
            for (i, (label, version, services, sla, deps)) in concepts.into_iter().enumerate() {
                let mut c = DsConcept::new(format!("Concept{i}"), label);
                c.version = version;
                c.service_refs = services.into_iter().map(|s| format!("svc{s}")).collect();
                c.sla_ref = sla.map(|s| format!("Sla{s}"));
                c.depends_on = (0..i).filter(|j| deps & (1 << j) != 0).map(|j| format!("Concept{j}")).collect();
                d.concepts.push(c);
            }
            d
        })
}

/// Nodes reachable from `from` following flows forward (or backward).
fn reach(body: &ProcessBody, from: &str, forward: bool) -> BTreeSet<String> {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for f in &body.flows {
        let (a, b) = if forward { (&f.from, &f.to) } else { (&f.to, &f.from) };
        adj.entry(a.as_str()).or_default().push(b.as_str());
    }
    let mut seen = BTreeSet::from([from.to_string()]);
    let mut queue = VecDeque::from([from]);
    while let Some(n) = queue.pop_front() {
        for &m in adj.get(n).into_iter().flatten() {
            if seen.insert(m.to_string()) {
                queue.push_back(m);
            }
        }
    }
    seen
}

proptest! {
    #![proptest_config(cases(128))]

    #[test]
    fn domain_text_round_trips(d in domain()) {
        prop_assert!(validate_domain(&d).is_empty(), "{:?}", validate_domain(&d));
        let text = d.to_dsml();
        let back = parse_domain(&text).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn process_text_round_trips(p in process_model("Orders")) {
        let d = gen_domain();
        let text = p.to_dsproc();
        let back = parse_process(&text, &d).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn accepted_models_are_connected_and_resolved(p in process_model("Orders")) {
        let d = gen_domain();
        let diags = validate_process(&p, &d);
        prop_assert!(!dsml_core::diag::has_errors(&diags), "{:?}", diags);
        let from_start = reach(&p.body, "start", true);
        let to_end = reach(&p.body, "end", false);
        for n in &p.body.nodes {
            prop_assert!(from_start.contains(&n.id) && to_end.contains(&n.id), "{} not on a start-end path", n.id);
            if let NodeKind::Concept(c) = &n.kind {
                prop_assert!(d.concept(c).is_some());
            }
        }
    }

    #[test]
    fn sla_output_counts_only_concepts_with_slas(p in process_model("Orders"), q in process_model("Returns")) {
        let d = gen_domain();
        let mut reg = UidRegistry::new();
        let models = [to_common(&p, &d, &mut reg).unwrap(), to_common(&q, &d, &mut reg).unwrap()];
        let am = build_am(&models).unwrap();
        let expected = am.iter().filter(|(_, e)| d.concept(&e.concept).unwrap().sla_ref.is_some()).count();
        prop_assert_eq!(propagate_sla(&d, &am).unwrap().len(), expected);
    }

    #[test]
    fn sla_change_is_local_to_its_concept(p in process_model("Orders"), hours in 1u32..100) {
        let d = gen_domain();
        let am = build_am(&[to_common(&p, &d, &mut UidRegistry::new()).unwrap()]).unwrap();
        let before = propagate_sla(&d, &am).unwrap();

        let mut changed = d.clone();
        changed.slas.push(Sla {
            name: "Slow".into(),
            metric: SlaMetric::MaxDuration,
            threshold: f64::from(hours),
            unit: SlaUnit::H,
            severity: SlaSeverity::Info,
        });
        changed.concepts.iter_mut().find(|c| c.name == "Ship").unwrap().sla_ref = Some("Slow".into());
        let after = propagate_sla(&changed, &am).unwrap();

        let key = |a: &dsml_core::domain::SlaAssignment| (a.activity_uid.clone(), a.sla.name.clone(), a.sla.threshold.to_bits());
        let b: BTreeSet<_> = before.iter().map(key).collect();
        let a: BTreeSet<_> = after.iter().map(key).collect();
        let touched: BTreeSet<_> = b.symmetric_difference(&a).map(|k| k.0.clone()).collect();
        let ship: BTreeSet<_> = am.iter().filter(|(_, e)| e.concept == "Ship").map(|(u, _)| u.clone()).collect();
        prop_assert_eq!(touched, ship);
    }
}

#[test]
fn generator_domain_round_trips() {
    let d = gen_domain();
    assert!(validate_domain(&d).is_empty());
    assert_eq!(parse_domain(&d.to_dsml()).unwrap(), d);
}

#[test]
fn concept_usage_counts_nested_references() {
    let d = gen_domain();
    let p = parse_process(
        "process P uses Gen { node a: concept Bundle node b: concept Check start -> a a -> b b -> end }",
        &d,
    )
    .unwrap();
    let usage = concept_usage(&p.body, &d);
    assert_eq!(usage["Check"], 2);
    assert_eq!(usage["Ship"], 1);
    assert_eq!(usage["Bundle"], 1);
}
