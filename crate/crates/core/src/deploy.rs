//! Two-step service binding: concept -> abstract services (from the domain),
//! then abstract service -> concrete endpoint (from a binding table).
//!
//! `bindings.json`:
//!
//! ```json
//! { "bindings": { "s1": { "endpoint": "https://pay.example/authorize", "profile": "fast" } },
//!   "activities": { "ApproveOrder": "manual_review" } }
//! ```
//!
//! `activities` is optional and gives a concept's own work a duration profile,
//! on top of the time spent in its services.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Domain;
use crate::mappings::{ActivityMappings, Uid};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingTable {
    pub bindings: BTreeMap<String, Endpoint>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub activities: BTreeMap<String, String>,
}

impl BindingTable {
    pub fn from_json(text: &str) -> Result<Self, DeployError> {
        serde_json::from_str(text).map_err(|e| DeployError::Format(e.to_string()))
    }

    pub fn bind(
        &mut self,
        service: impl Into<String>,
        endpoint: impl Into<String>,
        profile: Option<&str>,
    ) -> &mut Self {
        self.bindings
            .insert(service.into(), Endpoint { endpoint: endpoint.into(), profile: profile.map(str::to_string) });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundService {
    pub service: String,
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
}

/// One activity's full chain: uid -> concept -> abstract services -> endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub uid: Uid,
    pub concept: String,
    pub element: String,
    pub services: Vec<BoundService>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentManifest {
    pub process: String,
    pub rows: Vec<ManifestRow>,
}

impl DeploymentManifest {
    pub fn row(&self, uid: &Uid) -> Option<&ManifestRow> {
        self.rows.iter().find(|r| &r.uid == uid)
    }

    pub fn from_json(text: &str) -> Result<Self, DeployError> {
        serde_json::from_str(text).map_err(|e| DeployError::Format(e.to_string()))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DeployError {
    #[error("abstract services without a binding: {}", .0.join(", "))]
    Unbound(Vec<String>),
    #[error("binding table names services the domain does not declare: {}", .0.join(", "))]
    UnknownService(Vec<String>),
    #[error("unknown process `{0}`")]
    UnknownProcess(String),
    #[error("activity {uid} maps to concept `{concept}`, which the domain does not declare")]
    UnknownConcept { uid: Uid, concept: String },
    #[error("malformed JSON: {0}")]
    Format(String),
}

/// Resolve every `AM_k` activity of `process` to its concrete endpoints.
pub fn bind_services(
    d: &Domain,
    table: &BindingTable,
    am: &ActivityMappings,
    process: &str,
) -> Result<DeploymentManifest, DeployError> {
    if !am.has_process(process) {
        return Err(DeployError::UnknownProcess(process.to_string()));
    }
    let unknown: Vec<String> = table.bindings.keys().filter(|s| d.service(s).is_none()).cloned().collect();
    if !unknown.is_empty() {
        return Err(DeployError::UnknownService(unknown));
    }

    let mut rows = Vec::new();
    let mut unbound = BTreeSet::new();
    for (uid, entry) in am.for_process(process) {
        let concept = d
            .concept(&entry.concept)
            .ok_or_else(|| DeployError::UnknownConcept { uid: uid.clone(), concept: entry.concept.clone() })?;
        let mut services = Vec::with_capacity(concept.service_refs.len());
        for s in &concept.service_refs {
            match table.bindings.get(s) {
                Some(ep) => services.push(BoundService {
                    service: s.clone(),
                    endpoint: ep.endpoint.clone(),
                    profile: ep.profile.clone(),
                }),
                None => {
                    unbound.insert(s.clone());
                }
            }
        }
        rows.push(ManifestRow {
            uid: uid.clone(),
            concept: concept.name.clone(),
            element: entry.element.clone(),
            services,
            profile: table.activities.get(&concept.name).cloned(),
        });
    }
    if !unbound.is_empty() {
        return Err(DeployError::Unbound(unbound.into_iter().collect()));
    }
    Ok(DeploymentManifest { process: process.to_string(), rows })
}

/// Deterministic JSON: rows ordered by uid, struct fields in declaration order.
pub fn emit_manifest(m: &DeploymentManifest) -> String {
    let mut sorted = m.clone();
    sorted.rows.sort_by(|a, b| a.uid.cmp(&b.uid));
    let mut s = serde_json::to_string_pretty(&sorted).expect("manifest serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::parse_domain;
    use crate::mappings::ActivityEntry;

    fn fixture() -> (Domain, ActivityMappings) {
        let d = parse_domain(
            r#"domain Shop {
                service s1 { operation "authorize" }
                service s2 { operation "capture" }
                service s3 { operation "label" }
                concept HandlePayment { label "Handle Payment" services [s1, s2] }
                concept Ship { label "Ship" services [s3] }
            }"#,
        )
        .unwrap();
        let mut am = ActivityMappings::default();
        for (uid, concept, process) in
            [("u1", "HandlePayment", "Orders"), ("u2", "Ship", "Orders"), ("u3", "HandlePayment", "Refunds")]
        {
            am.insert(
                Uid::new(uid),
                ActivityEntry { concept: concept.into(), process: process.into(), element: uid.into() },
            )
            .unwrap();
        }
        am.register_process("Empty");
        (d, am)
    }

    fn full_table() -> BindingTable {
        let mut t = BindingTable::default();
        t.bind("s1", "https://pay/auth", Some("fast")).bind("s2", "https://pay/capture", None).bind(
            "s3",
            "https://ship",
            None,
        );
        t
    }

    #[test]
    fn handle_payment_lists_two_endpoints() {
        let (d, am) = fixture();
        let m = bind_services(&d, &full_table(), &am, "Orders").unwrap();
        assert_eq!(m.rows.len(), 2);
        let row = m.row(&Uid::new("u1")).unwrap();
        let endpoints: Vec<_> = row.services.iter().map(|s| s.endpoint.as_str()).collect();
        assert_eq!(endpoints, ["https://pay/auth", "https://pay/capture"]);
    }

    #[test]
    fn empty_process_gives_empty_manifest() {
        let (d, am) = fixture();
        assert!(bind_services(&d, &full_table(), &am, "Empty").unwrap().rows.is_empty());
        assert_eq!(bind_services(&d, &full_table(), &am, "Nope"), Err(DeployError::UnknownProcess("Nope".into())));
    }

    #[test]
    fn unbound_service_named_exactly() {
        let (d, am) = fixture();
        let mut t = full_table();
        t.bindings.remove("s2");
        assert_eq!(bind_services(&d, &t, &am, "Orders"), Err(DeployError::Unbound(vec!["s2".into()])));
        // Refunds only needs s1 and s2 as well.
        assert_eq!(bind_services(&d, &t, &am, "Refunds"), Err(DeployError::Unbound(vec!["s2".into()])));
    }

    #[test]
    fn binding_of_undeclared_service_rejected() {
        let (d, am) = fixture();
        let mut t = full_table();
        t.bind("ghost", "x", None);
        assert_eq!(bind_services(&d, &t, &am, "Orders"), Err(DeployError::UnknownService(vec!["ghost".into()])));
    }

    #[test]
    fn emit_is_stable_and_parses_back() {
        let (d, am) = fixture();
        let m = bind_services(&d, &full_table(), &am, "Orders").unwrap();
        let text = emit_manifest(&m);
        assert_eq!(text, emit_manifest(&m));
        assert_eq!(DeploymentManifest::from_json(&text).unwrap(), m);
    }

    #[test]
    fn endpoint_change_is_local() {
        let (d, am) = fixture();
        let before = bind_services(&d, &full_table(), &am, "Orders").unwrap();
        let mut t = full_table();
        t.bind("s3", "https://ship-v2", None);
        let after = bind_services(&d, &t, &am, "Orders").unwrap();
        let changed: Vec<_> =
            before.rows.iter().zip(&after.rows).filter(|(a, b)| a != b).map(|(a, _)| a.concept.as_str()).collect();
        assert_eq!(changed, ["Ship"]);
    }
}
