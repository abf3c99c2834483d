mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use dsml_core::domain::{SlaMetric, SlaSeverity, SlaUnit};
use dsml_core::engine::simulate;
use dsml_core::monitor::{composite_metrics, evaluate_alerts, ingest, InstanceRef, LiveProbes, ProbeSet};
use dsml_core::{build_am, build_cm, to_common, Sla, UidRegistry};

use common::{add_technical_task, cases, check_oracle, gen_domain, generate, process_model, replay, sim_config};

fn simulated_log(p: &dsml_core::ProcessModel, seed: u64, fault: f64) -> (String, dsml_core::ActivityMappings) {
    let d = gen_domain();
    let g = generate(p, &d, &mut UidRegistry::new());
    let mut bpmn = g.bpmn.clone();
    add_technical_task(&mut bpmn, "Tech1");
    let cfg = sim_config(seed, 30, fault, &g.am);
    (simulate(&bpmn, &g.manifest, &cfg).unwrap().log.to_jsonl(), g.am)
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn statistics_match_brute_force_replay(p in process_model("Orders"), seed in any::<u64>(), fault in 0.0f64..0.2) {
        let (log, am) = simulated_log(&p, seed, fault);
        let probes = ingest(&log, &am, &build_cm(&gen_domain())).unwrap();
        let r = replay(&log, &am);
        check_oracle(&composite_metrics(&probes), &r).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn every_activity_end_lands_in_exactly_one_bucket(p in process_model("Orders"), seed in any::<u64>()) {
        let (log, am) = simulated_log(&p, seed, 0.05);
        let probes = ingest(&log, &am, &build_cm(&gen_domain())).unwrap();
        let r = replay(&log, &am);
        let concept: usize = probes.concepts.values().map(|c| c.bpms.len()).sum();
        let technical: usize = probes.processes.values().map(|p| p.technical.len()).sum();
        prop_assert_eq!(concept + technical, r.activity_ends);
        let by_node: usize = probes.nodes.values().map(Vec::len).sum();
        prop_assert_eq!(by_node, concept);
        prop_assert!(probes.processes["Orders"].technical_elements.iter().eq(["Tech1"]));
    }

    #[test]
    fn streaming_matches_batch(p in process_model("Orders"), seed in any::<u64>(), cut in any::<prop::sample::Index>()) {
        let (log, am) = simulated_log(&p, seed, 0.05);
        let cm = build_cm(&gen_domain());
        let batch = ingest(&log, &am, &cm).unwrap();
        let lines: Vec<&str> = log.lines().collect();
        let k = cut.index(lines.len()) + 1;

        let live = LiveProbes::new(&am, &cm);
        for line in &lines[..k] {
            live.push_line(line).unwrap();
        }
        let mut prefix = ProbeSet::new(&am, &cm);
        for line in &lines[..k] {
            prefix.push_line(line).unwrap();
        }
        prop_assert_eq!(live.snapshot(), prefix);
        for line in &lines[k..] {
            live.push_line(line).unwrap();
        }
        prop_assert_eq!(live.snapshot(), batch);
    }

    #[test]
    fn alerts_agree_with_raw_threshold_checks(p in process_model("Orders"), seed in any::<u64>(), limit in 200u64..1500) {
        let (log, am) = simulated_log(&p, seed, 0.0);
        let mut probes = ingest(&log, &am, &build_cm(&gen_domain())).unwrap();
        let sla = Sla {
            name: "Tight".into(),
            metric: SlaMetric::MaxDuration,
            threshold: limit as f64,
            unit: SlaUnit::Ms,
            severity: SlaSeverity::Warning,
        };
        let target = am.iter().next().unwrap().1.concept.clone();
        probes.register(&target, &sla).unwrap();
        let alerts = evaluate_alerts(&probes);

        let mut expected = BTreeSet::new();
        for line in log.lines().skip(1) {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let mapped = v["element_uid"].as_str().and_then(|u| am.iter().find(|(k, _)| k.as_str() == u)).is_some_and(|(_, e)| e.concept == target);
            if v["kind"] == "activityEnd" && mapped && v["duration_ms"].as_u64().unwrap() > limit {
                expected.insert(InstanceRef { process: "Orders".into(), instance: v["instance"].as_u64().unwrap() });
            }
        }
        if expected.is_empty() {
            prop_assert!(alerts.is_empty());
        } else {
            prop_assert_eq!(alerts.len(), 1);
            prop_assert_eq!(alerts[0].violating_instances.iter().cloned().collect::<BTreeSet<_>>(), expected);
        }
    }

    #[test]
    fn shared_concept_has_one_probe_across_processes(p in process_model("Orders"), q in process_model("Returns"), seed in any::<u64>()) {
        let d = gen_domain();
        let cm = build_cm(&d);
        let mut reg = UidRegistry::new();
        let gp = generate(&p, &d, &mut reg);
        let gq = generate(&q, &d, &mut reg);
        let am = build_am(&[to_common(&p, &d, &mut reg).unwrap(), to_common(&q, &d, &mut reg).unwrap()]).unwrap();

        let lp = simulate(&gp.bpmn, &gp.manifest, &sim_config(seed, 15, 0.0, &gp.am)).unwrap().log.to_jsonl();
        let lq = simulate(&gq.bpmn, &gq.manifest, &sim_config(seed ^ 1, 15, 0.0, &gq.am)).unwrap().log.to_jsonl();
        let only_p = ingest(&lp, &gp.am, &cm).unwrap();
        let only_q = ingest(&lq, &gq.am, &cm).unwrap();

        let mut both = ProbeSet::new(&am, &cm);
        let mut seq = 0;
        for line in lp.lines().chain(lq.lines().skip(1)) {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            if v.get("seq").is_some() {
                seq += 1;
                v["seq"] = seq.into();
            }
            both.push_line(&v.to_string()).unwrap();
        }
        for (name, probe) in &both.concepts {
            let count = |probes: &ProbeSet| probes.concepts.get(name).map_or(0, |c| c.bpms.len());
            prop_assert_eq!(probe.bpms.len(), count(&only_p) + count(&only_q));
        }
    }
}
