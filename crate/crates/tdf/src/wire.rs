//! JSON-over-HTTP evaluator contracts and the blocking clients that speak them.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tdf_core::{Embedder, Error, KnowledgeItem, LanguageModelClient, NliClient, NliScores};
use ureq::Agent;

pub const CONFIDENCE_ROUTE: &str = "/v1/confidence";
pub const NLI_ROUTE: &str = "/v1/nli";
pub const EMBED_ROUTE: &str = "/v1/embed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceRequest {
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceResponse {
    pub label: u8,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NliRequest {
    pub premise: String,
    pub hypothesis: String,
}

pub type NliResponse = NliScores;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vector: Vec<f64>,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Shared connection pool and base URL for the three clients.
#[derive(Debug, Clone)]
pub struct Endpoint {
    agent: Agent,
    base: String,
}

impl Endpoint {
    pub fn new(base: &str, timeout: Duration) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent, base: base.trim_end_matches('/').to_owned() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn post_raw(&self, route: &str, body: &impl Serialize) -> tdf_core::Result<String> {
        let url = format!("{}{route}", self.base);
        let payload = serde_json::to_string(body).map_err(|e| Error::Transport(e.to_string()))?;
        let mut response = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(payload)
            .map_err(|e| Error::Transport(format!("{url}: {e}")))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(format!("{url}: {e}")))?;
        match status {
            200..=299 => Ok(text),
            500..=599 => Err(Error::Transport(format!("{url}: status {status}"))),
            _ => {
                let detail = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
                Err(Error::OracleMisuse(format!("{url}: status {status}: {detail}")))
            }
        }
    }

    fn post<T: DeserializeOwned>(&self, route: &str, body: &impl Serialize) -> tdf_core::Result<T> {
        let text = self.post_raw(route, body)?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedVerdict(format!("{route}: {e}")))
    }
}

/// Confidence evaluation served remotely. The raw reply body is handed back
/// for the usual structured-output parsing.
#[derive(Debug, Clone)]
pub struct HttpLanguageModel(pub Endpoint);

impl LanguageModelClient for HttpLanguageModel {
    fn complete(&self, prompt: &str, _item: &KnowledgeItem) -> tdf_core::Result<String> {
        self.0.post_raw(CONFIDENCE_ROUTE, &ConfidenceRequest { prompt: prompt.to_owned() })
    }
}

#[derive(Debug, Clone)]
pub struct HttpNli(pub Endpoint);

impl NliClient for HttpNli {
    fn infer(&self, premise: &KnowledgeItem, hypothesis: &KnowledgeItem) -> tdf_core::Result<NliScores> {
        let request = NliRequest { premise: premise.text().to_owned(), hypothesis: hypothesis.text().to_owned() };
        self.0.post(NLI_ROUTE, &request)
    }
}

#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    endpoint: Endpoint,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(endpoint: Endpoint, dim: usize) -> Self {
        Self { endpoint, dim }
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, text: &str) -> tdf_core::Result<Vec<f64>> {
        let reply: EmbedResponse = self.endpoint.post(EMBED_ROUTE, &EmbedRequest { text: text.to_owned() })?;
        if reply.dim != reply.vector.len() {
            return Err(Error::MalformedVerdict(format!(
                "embedding reply declares dim {} but carries {} values",
                reply.dim,
                reply.vector.len()
            )));
        }
        Ok(reply.vector)
    }
}
