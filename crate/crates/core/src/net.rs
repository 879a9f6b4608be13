//! Minimal HTTP transport abstraction.
//!
//! Network-facing operations (rating lookups, the HTTP tagger, the live
//! redirect resolver) all go through [`HttpTransport`], so tests swap in
//! recorded fixtures and never touch the network.

use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport failure: {0}")]
    Failed(String),
}

pub trait HttpTransport: Send + Sync {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<HttpResponse, TransportError>;

    fn post_json(
        &self,
        url: &str,
        body: &serde_json::Value,
        headers: &[(String, String)],
    ) -> Result<HttpResponse, TransportError>;

    /// HEAD request returning the `Location` header, if any. Used by the
    /// live redirect resolver.
    fn head_location(&self, url: &str) -> Option<String>;
}

/// Blocking transport backed by `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .max_redirects(0)
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl HttpTransport for UreqTransport {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<HttpResponse, TransportError> {
        let mut req = self.agent.get(url);
        for (k, v) in headers {
            req = req.header(k, v);
        }
        let mut resp = req
            .call()
            .map_err(|e| TransportError::Failed(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Failed(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }

    fn post_json(
        &self,
        url: &str,
        body: &serde_json::Value,
        headers: &[(String, String)],
    ) -> Result<HttpResponse, TransportError> {
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.header(k, v);
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| TransportError::Failed(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Failed(e.to_string()))?;
        Ok(HttpResponse { status, body: text })
    }

    fn head_location(&self, url: &str) -> Option<String> {
        let resp = self.agent.head(url).call().ok()?;
        resp.headers()
            .get("location")
            .and_then(|v| v.to_str().ok())
            .map(String::from)
    }
}
