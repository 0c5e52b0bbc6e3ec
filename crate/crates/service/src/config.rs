use std::net::SocketAddr;
use std::path::PathBuf;

use ipnet::IpNet;
use radsearch_core::schema::names;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Networks allowed to reach the service at all. Empty allows every address.
    pub allowlist: Vec<IpNet>,
    /// Deploy-time credential for `/audit`; the endpoint is closed while unset.
    pub admin_token: Option<String>,
    pub session_ttl_hours: u32,
    /// Fields replaced by surrogates on export. An empty list disables export.
    pub phi_fields: Vec<String>,
    /// Image viewer link, with `{accession}` and `{doc_id}` placeholders.
    pub viewer_url_template: Option<String>,
    pub audit_path: PathBuf,
    pub users_path: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            allowlist: vec!["127.0.0.0/8".parse().unwrap(), "::1/128".parse().unwrap()],
            admin_token: None,
            session_ttl_hours: 12,
            phi_fields: [names::PATIENT_ID, names::PATIENT_NAME, names::PATIENT_DOB].map(String::from).into(),
            viewer_url_template: None,
            audit_path: PathBuf::from("audit.jsonl"),
            users_path: PathBuf::from("users.json"),
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.session_ttl_hours == 0 {
            return Err("session_ttl_hours must be positive".into());
        }
        if self.admin_token.as_ref().is_some_and(|t| t.len() < 16) {
            return Err("admin_token must be at least 16 characters".into());
        }
        Ok(())
    }
}
