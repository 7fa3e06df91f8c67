//! Minimal JSON-over-HTTP client shared by the remote masker and outpainter.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Largest response body accepted from the sidecar.
const MAX_RESPONSE_BYTES: u64 = 512 * 1024 * 1024;

#[derive(Clone, Debug)]
pub struct ClientConfig {
    /// Base URL, e.g. `http://127.0.0.1:8765`.
    pub endpoint: String,
    pub timeout: Duration,
}

impl ClientConfig {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        ClientConfig {
            endpoint: endpoint.into(),
            timeout,
        }
    }

    pub(crate) fn url(&self, route: &str) -> String {
        format!("{}/{}", self.endpoint.trim_end_matches('/'), route)
    }
}

/// Thread-safe client; one instance may serve many scene workers.
#[derive(Clone)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    cfg: ClientConfig,
}

impl JsonClient {
    pub(crate) fn new(cfg: ClientConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        JsonClient { agent, cfg }
    }

    pub(crate) fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    /// POSTs `body` to `route`; any transport or protocol problem is an `Err(message)`.
    pub(crate) fn post<Req: Serialize, Resp: DeserializeOwned>(&self, route: &str, body: &Req) -> Result<Resp, String> {
        let url = self.cfg.url(route);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| format!("POST {url}: {e}"))?;
        let status = resp.status();
        if status.as_u16() != 200 {
            return Err(format!("POST {url}: HTTP {}", status.as_u16()));
        }
        resp.body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_json::<Resp>()
            .map_err(|e| format!("POST {url}: bad response: {e}"))
    }
}
