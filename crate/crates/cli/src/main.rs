//! `dsml`: domain-specific process modelling from the command line.
//!
//! Exit codes: 0 success, 1 diagnostics or errors, 2 broken concept mappings.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use dsml_core::bpmn::{generate_bpmn, parse_bpmn, validate_bpmn};
use dsml_core::deploy::{bind_services, emit_manifest, BindingTable, DeploymentManifest};
use dsml_core::domain::{check_domain, propagate_sla, Domain};
use dsml_core::engine::{simulate, SimulationConfig};
use dsml_core::mappings::{merge_enriched, MappingStore};
use dsml_core::monitor::{alerts_jsonl, build_report, evaluate_alerts, ingest, register_sla};
use dsml_core::pivot::{common_stats, to_common};
use dsml_core::process::{check_process, ProcessModel};
use dsml_core::{Diagnostic, SyntaxError};

#[derive(Parser)]
#[command(name = "dsml", version, about = "Domain-specific process modelling toolchain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a domain and, optionally, processes using it.
    Check { domain: PathBuf, processes: Vec<PathBuf> },
    /// Generate a BPMN skeleton and update the mappings file.
    Gen {
        process: PathBuf,
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Reconcile a hand-enriched BPMN file with the concept mappings.
    Sync {
        process: PathBuf,
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        edited: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Resolve abstract services to endpoints for one process.
    Bind {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        bindings: PathBuf,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        process: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Simulate a BPMN model and write the event log.
    Run {
        bpmn: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        instances: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Aggregate an event log into concept-level metrics and SLA alerts.
    Monitor {
        events: PathBuf,
        #[arg(long)]
        mappings: PathBuf,
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        alert_out: PathBuf,
    },
}

enum Outcome {
    Ok,
    Diagnostics,
    Broken,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Diagnostics) => ExitCode::from(1),
        Ok(Outcome::Broken) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Check { domain, processes } => check(&domain, &processes),
        Command::Gen { process, domain, mappings, output } => gen(&process, &domain, &mappings, &output),
        Command::Sync { process, domain, mappings, edited, output } => {
            sync(&process, &domain, &mappings, &edited, &output)
        }
        Command::Bind { domain, bindings, mappings, process, output } => {
            bind(&domain, &bindings, &mappings, &process, &output)
        }
        Command::Run { bpmn, manifest, sim, instances, seed, output } => {
            run_sim(&bpmn, &manifest, &sim, instances, seed, &output)
        }
        Command::Monitor { events, mappings, domain, report, alert_out } => {
            monitor(&events, &mappings, &domain, &report, &alert_out)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn syntax(path: &Path, e: SyntaxError) -> anyhow::Error {
    anyhow!("{}:{}: syntax error: {}", path.display(), e.pos, e.message)
}

/// Print diagnostics to stderr; true if any is an error.
fn report(path: &Path, diags: &[Diagnostic]) -> bool {
    for d in diags {
        eprintln!("{}:{d}", path.display());
    }
    dsml_core::diag::has_errors(diags)
}

fn load_domain(path: &Path) -> Result<Domain> {
    let (d, diags) = check_domain(&read(path)?).map_err(|e| syntax(path, e))?;
    if report(path, &diags) {
        bail!("{}: invalid domain", path.display());
    }
    Ok(d)
}

fn load_process(path: &Path, d: &Domain) -> Result<ProcessModel> {
    let (p, diags) = check_process(&read(path)?, d).map_err(|e| syntax(path, e))?;
    if report(path, &diags) {
        bail!("{}: invalid process", path.display());
    }
    Ok(p)
}

fn load_mappings(path: &Path) -> Result<MappingStore> {
    MappingStore::from_json(&read(path)?).with_context(|| format!("loading {}", path.display()))
}

fn check(domain: &Path, processes: &[PathBuf]) -> Result<Outcome> {
    let (d, diags) = check_domain(&read(domain)?).map_err(|e| syntax(domain, e))?;
    let mut failed = report(domain, &diags);
    for path in processes {
        match check_process(&read(path)?, &d) {
            Ok((_, diags)) => failed |= report(path, &diags),
            Err(e) => {
                eprintln!("{}", syntax(path, e));
                failed = true;
            }
        }
    }
    if failed {
        return Ok(Outcome::Diagnostics);
    }
    println!("ok: domain {} ({} concepts), {} process(es)", d.name, d.concepts.len(), processes.len());
    Ok(Outcome::Ok)
}

fn gen(process: &Path, domain: &Path, mappings: &Path, output: &Path) -> Result<Outcome> {
    let d = load_domain(domain)?;
    let p = load_process(process, &d)?;
    let mut store = if mappings.exists() { load_mappings(mappings)? } else { MappingStore::new(&d) };
    if store.domain != d.name {
        bail!("{} belongs to domain `{}`, not `{}`", mappings.display(), store.domain, d.name);
    }
    let before = store.uids.allocations();
    let model = to_common(&p, &d, &mut store.uids)?;
    store.update(&d, &model)?;
    let (_, xml) = generate_bpmn(&model)?;
    write(output, &xml)?;
    write(mappings, &store.to_json())?;
    let stats = common_stats(&model);
    println!(
        "generated {}: {} activities, {} gateways, {} flows, {} new uid(s)",
        output.display(),
        stats.activities,
        stats.gateways,
        stats.flows,
        store.uids.allocations() - before
    );
    Ok(Outcome::Ok)
}

fn sync(process: &Path, domain: &Path, mappings: &Path, edited: &Path, output: &Path) -> Result<Outcome> {
    let d = load_domain(domain)?;
    let p = load_process(process, &d)?;
    let store = load_mappings(mappings)?;
    if !store.am.has_process(&p.name) {
        bail!("{} has no mappings for process `{}`; run `dsml gen` first", mappings.display(), p.name);
    }
    let mut uids = store.uids.clone();
    let model = to_common(&p, &d, &mut uids)?;
    let (generated, _) = generate_bpmn(&model)?;
    let edited_model = parse_bpmn(&read(edited)?).with_context(|| format!("parsing {}", edited.display()))?;
    if report(edited, &validate_bpmn(&edited_model)) {
        return Ok(Outcome::Diagnostics);
    }
    let result = merge_enriched(&generated, &edited_model, &store.am);
    write(output, &result.merged.to_xml())?;
    for id in &result.technical_additions {
        println!("technical addition: {id}");
    }
    for uid in &result.broken {
        let e = store.am.get(uid).expect("broken uids come from AM");
        eprintln!("broken: {uid} (concept {} at node {})", e.concept, e.element);
    }
    if result.is_clean() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::Broken)
    }
}

fn bind(domain: &Path, bindings: &Path, mappings: &Path, process: &str, output: &Path) -> Result<Outcome> {
    let d = load_domain(domain)?;
    let table = BindingTable::from_json(&read(bindings)?).with_context(|| format!("loading {}", bindings.display()))?;
    let store = load_mappings(mappings)?;
    let manifest = bind_services(&d, &table, &store.am, process)?;
    write(output, &emit_manifest(&manifest))?;
    println!("bound {} activities of {process}", manifest.rows.len());
    Ok(Outcome::Ok)
}

fn run_sim(
    bpmn: &Path,
    manifest: &Path,
    sim: &Path,
    instances: Option<u64>,
    seed: Option<u64>,
    output: &Path,
) -> Result<Outcome> {
    let b = parse_bpmn(&read(bpmn)?).with_context(|| format!("parsing {}", bpmn.display()))?;
    if report(bpmn, &validate_bpmn(&b)) {
        return Ok(Outcome::Diagnostics);
    }
    let manifest =
        DeploymentManifest::from_json(&read(manifest)?).with_context(|| format!("loading {}", manifest.display()))?;
    let mut cfg = SimulationConfig::from_json(&read(sim)?).with_context(|| format!("loading {}", sim.display()))?;
    if let Some(n) = instances {
        cfg.instance_count = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let result = simulate(&b, &manifest, &cfg)?;
    write(output, &result.log.to_jsonl())?;
    println!("simulated {} instance(s), {} records", cfg.instance_count, result.log.records.len());
    Ok(Outcome::Ok)
}

fn monitor(events: &Path, mappings: &Path, domain: &Path, report_path: &Path, alert_out: &Path) -> Result<Outcome> {
    let d = load_domain(domain)?;
    let store = load_mappings(mappings)?;
    let mut probes =
        ingest(&read(events)?, &store.am, &store.cm).with_context(|| format!("ingesting {}", events.display()))?;
    register_sla(&mut probes, &propagate_sla(&d, &store.am)?)?;
    let alerts = evaluate_alerts(&probes);
    let report = build_report(&probes);
    write(report_path, &report.to_json())?;
    write(alert_out, &alerts_jsonl(&alerts))?;
    print!("{}", report.to_text());
    println!("{} alert(s)", alerts.len());
    Ok(Outcome::Ok)
}
