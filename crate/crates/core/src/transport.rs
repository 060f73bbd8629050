//! Blocking JSON-over-HTTP POST with a global timeout and bounded retries,
//! shared by the remote embedding and VLM adapters.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after the first failure.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    5_000
}

fn default_retries() -> u32 {
    2
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }

    /// `http://` or `https://` followed by a non-empty host.
    pub fn validate(&self) -> Result<(), String> {
        let rest = self
            .url
            .strip_prefix("http://")
            .or_else(|| self.url.strip_prefix("https://"))
            .ok_or_else(|| format!("url {:?} must start with http:// or https://", self.url))?;
        if rest.split('/').next().unwrap_or("").is_empty() {
            return Err(format!("url {:?} has no host", self.url));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct JsonEndpoint {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl JsonEndpoint {
    pub fn new(config: EndpointConfig) -> Result<Self, String> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, String> {
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            match self.post_once(body) {
                Ok(r) => return Ok(r),
                Err(e) => last = format!("attempt {}: {e}", attempt + 1),
            }
        }
        Err(format!("{}: {last}", self.config.url))
    }

    fn post_once<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, String> {
        let resp = self
            .agent
            .post(&self.config.url)
            .send_json(body)
            .map_err(|e| e.to_string())?;
        resp.into_body().read_json::<Resp>().map_err(|e| e.to_string())
    }
}
