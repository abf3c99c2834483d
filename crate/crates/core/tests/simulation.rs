mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use dsml_core::engine::{simulate, EventLog, RecordKind, Status};
use dsml_core::UidRegistry;

use common::{add_technical_task, cases, gen_domain, generate, process_model, sim_config};

/// Per-instance checks that hold for any log.
fn check_log(log: &EventLog, instances: u64) -> Result<(), TestCaseError> {
    let mut last_seq = 0;
    let mut open: BTreeMap<(u64, String), Vec<u64>> = BTreeMap::new();
    let mut starts: BTreeMap<(u64, String), usize> = BTreeMap::new();
    let mut ends: BTreeMap<(u64, String), usize> = BTreeMap::new();
    let mut process_ends = BTreeMap::new();
    for r in &log.records {
        prop_assert!(r.seq > last_seq);
        last_seq = r.seq;
        let key = (r.instance, r.element_id.clone());
        match r.kind {
            RecordKind::ActivityStart => {
                open.entry(key.clone()).or_default().push(r.ts_ms);
                *starts.entry(key).or_default() += 1;
            }
            RecordKind::ActivityEnd => {
                let started = open.get_mut(&key).and_then(Vec::pop);
                prop_assert!(started.is_some_and(|s| s <= r.ts_ms), "unmatched end {:?}", r);
                prop_assert_eq!(r.duration_ms, Some(r.ts_ms - started.unwrap()));
                *ends.entry(key).or_default() += 1;
            }
            RecordKind::ProcessEnd => {
                prop_assert!(process_ends.insert(r.instance, r.status).is_none());
            }
            _ => {}
        }
    }
    prop_assert_eq!(starts, ends);
    prop_assert_eq!(process_ends.len() as u64, instances);
    Ok(())
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn tokens_are_conserved_and_events_pair(p in process_model("Orders"), seed in any::<u64>(), fault in prop_oneof![Just(0.0), 0.0f64..0.3]) {
        let d = gen_domain();
        let g = generate(&p, &d, &mut UidRegistry::new());
        let cfg = sim_config(seed, 20, fault, &g.am);
        let sim = simulate(&g.bpmn, &g.manifest, &cfg).unwrap();
        prop_assert_eq!(sim.tokens.len(), 20);
        for t in &sim.tokens {
            prop_assert_eq!(t.created, t.absorbed);
        }
        check_log(&sim.log, 20)?;
    }

    #[test]
    fn same_inputs_give_identical_logs(p in process_model("Orders"), seed in any::<u64>()) {
        let d = gen_domain();
        let g = generate(&p, &d, &mut UidRegistry::new());
        let cfg = sim_config(seed, 10, 0.1, &g.am);
        let a = simulate(&g.bpmn, &g.manifest, &cfg).unwrap().log.to_jsonl();
        let b = simulate(&g.bpmn, &g.manifest, &cfg).unwrap().log.to_jsonl();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(EventLog::from_jsonl(&a).unwrap().to_jsonl(), a);
    }

    #[test]
    fn zero_fault_probability_means_no_faults(p in process_model("Orders"), seed in any::<u64>()) {
        let d = gen_domain();
        let g = generate(&p, &d, &mut UidRegistry::new());
        let mut bpmn = g.bpmn.clone();
        add_technical_task(&mut bpmn, "Tech1");
        let cfg = sim_config(seed, 20, 0.0, &g.am);
        let sim = simulate(&bpmn, &g.manifest, &cfg).unwrap();
        prop_assert!(sim.log.records.iter().all(|r| r.status == Status::Ok));
        check_log(&sim.log, 20)?;
    }

    #[test]
    fn certain_fault_fails_every_instance_that_reaches_it(p in process_model("Orders"), seed in any::<u64>()) {
        let d = gen_domain();
        let g = generate(&p, &d, &mut UidRegistry::new());
        let cfg = sim_config(seed, 10, 1.0, &g.am);
        let sim = simulate(&g.bpmn, &g.manifest, &cfg).unwrap();
        // Every top-level path passes a mapped activity, so every instance faults.
        for r in sim.log.records.iter().filter(|r| r.kind == RecordKind::ProcessEnd) {
            prop_assert_eq!(r.status, Status::Fault);
        }
        check_log(&sim.log, 10)?;
    }
}
