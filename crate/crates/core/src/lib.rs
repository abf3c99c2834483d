//! Toolchain for domain-specific process modelling.
//!
//! Business concepts are declared in a domain file (`.dsml`) and composed into
//! processes (`.dsproc`). Processes are lowered to a small pivot model, then to
//! BPMN 2.0 XML whose generated elements carry persistent concept UIDs. The
//! same UIDs drive service binding, the built-in token simulator and the
//! concept-level monitoring probes.
//!
//! Pipeline:
//!
//! ```text
//! parse_domain / parse_process -> to_common -> generate_bpmn
//!        |                                          |
//!   build_cm / build_am  <--------------------------+
//!        |
//!   bind_services -> simulate -> ingest -> composite_metrics / evaluate_alerts
//! ```

pub mod bpmn;
pub mod deploy;
pub mod diag;
pub mod domain;
pub mod engine;
mod lexer;
pub mod mappings;
pub mod monitor;
pub mod pivot;
pub mod process;

pub use diag::{Diagnostic, Pos, Severity};
pub use domain::{parse_domain, propagate_sla, validate_domain, Domain, DsConcept, DsService, Sla};
pub use lexer::SyntaxError;
pub use mappings::{build_am, build_cm, ActivityMappings, ConceptMappings, MappingStore, Uid, UidRegistry};
pub use pivot::{common_stats, to_common, CommonModel};
pub use process::{parse_process, validate_process, ProcessBody, ProcessModel};
