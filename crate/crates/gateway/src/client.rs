//! Blocking HTTP client for the gateway.

use std::time::Duration;

use ureq::Agent;

/// Raw response; non-2xx statuses are not errors at this level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn json(&self) -> Option<serde_json::Value> {
        serde_json::from_str(&self.body).ok()
    }
}

#[derive(Debug, thiserror::Error)]
#[error("cannot reach {endpoint}: {reason}")]
pub struct TransportError {
    pub endpoint: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Client {
    endpoint: String,
    agent: Agent,
}

impl Client {
    pub fn new(endpoint: &str) -> Client {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_connect(Some(Duration::from_secs(5)))
            .build()
            .into();
        Client {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.endpoint)
    }

    fn transport(&self, e: ureq::Error) -> TransportError {
        TransportError {
            endpoint: self.endpoint.clone(),
            reason: e.to_string(),
        }
    }

    fn finish(&self, res: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<Reply, TransportError> {
        let mut resp = res.map_err(|e| self.transport(e))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_string()
            .map_err(|e| self.transport(e))?;
        Ok(Reply { status, body })
    }

    pub fn get(&self, path: &str) -> Result<Reply, TransportError> {
        let res = self.agent.get(&self.url(path)).call();
        self.finish(res)
    }

    pub fn post(&self, path: &str, body: &str, accept: Option<&str>) -> Result<Reply, TransportError> {
        let mut req = self.agent.post(&self.url(path));
        if let Some(a) = accept {
            req = req.header("Accept", a);
        }
        let res = req.send(body);
        self.finish(res)
    }

    pub fn query(&self, text: &str, json: bool) -> Result<Reply, TransportError> {
        self.post("/bigdawg/query", text, json.then_some("application/json"))
    }

    pub fn explain(&self, text: &str) -> Result<Reply, TransportError> {
        self.post("/bigdawg/explain", text, None)
    }

    pub fn status(&self) -> Result<Reply, TransportError> {
        self.get("/status")
    }

    /// `action` is `start` or `stop`.
    pub fn engine(&self, action: &str, name: &str) -> Result<Reply, TransportError> {
        self.post(&format!("/admin/engine/{name}/{action}"), "", None)
    }

    pub fn load(&self, body: &serde_json::Value) -> Result<Reply, TransportError> {
        self.post("/admin/load", &body.to_string(), Some("application/json"))
    }
}
