//! Local HTTP service answering the evaluator contracts with the seeded mock
//! oracles. Statements are recognized by exact text against the label files
//! it was started with.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tdf_core::{Embedder, HashEmbedder, KnowledgeItem, MockConfidenceOracle, MockNliOracle, NliClient, PromptTemplate};
use tokio::sync::oneshot;

use crate::wire::{
    ConfidenceRequest, ConfidenceResponse, EmbedRequest, EmbedResponse, ErrorBody, NliRequest, CONFIDENCE_ROUTE,
    EMBED_ROUTE, NLI_ROUTE,
};

/// Oracles derived from one top-level seed, shared by the service and by
/// in-process runs so both give identical answers.
pub fn mock_oracles(seed: u64, conf_accuracy: f64, nli_accuracy: f64) -> (MockConfidenceOracle, MockNliOracle) {
    use tdf_core::seed::derive_seed;
    (
        MockConfidenceOracle::new(conf_accuracy, derive_seed(seed, "mock-confidence")),
        MockNliOracle::new(nli_accuracy, derive_seed(seed, "mock-nli")),
    )
}

pub struct MockState {
    confidence: MockConfidenceOracle,
    nli: MockNliOracle,
    embedder: HashEmbedder,
    template: PromptTemplate,
    by_text: HashMap<String, KnowledgeItem>,
    requests: AtomicU64,
}

impl MockState {
    pub fn new(seed: u64, conf_accuracy: f64, nli_accuracy: f64, labels: Vec<KnowledgeItem>) -> anyhow::Result<Self> {
        anyhow::ensure!((0.0..=1.0).contains(&conf_accuracy), "confidence accuracy {conf_accuracy} outside [0, 1]");
        anyhow::ensure!((0.0..=1.0).contains(&nli_accuracy), "NLI accuracy {nli_accuracy} outside [0, 1]");
        let mut by_text: HashMap<String, KnowledgeItem> = HashMap::with_capacity(labels.len());
        for item in labels {
            if let Some(prev) = by_text.get(item.text()) {
                anyhow::ensure!(
                    prev.id() == item.id() && prev.gold_flag() == item.gold_flag(),
                    "statement text shared by {:?} and {:?}",
                    prev.id(),
                    item.id()
                );
                continue;
            }
            by_text.insert(item.text().to_owned(), item);
        }
        let (confidence, nli) = mock_oracles(seed, conf_accuracy, nli_accuracy);
        Ok(Self {
            confidence,
            nli,
            embedder: HashEmbedder::default(),
            template: PromptTemplate::default(),
            by_text,
            requests: AtomicU64::new(0),
        })
    }

    pub fn known_statements(&self) -> usize {
        self.by_text.len()
    }

    pub fn requests_served(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn lookup(&self, text: &str) -> Result<&KnowledgeItem, Reply> {
        self.by_text
            .get(text)
            .ok_or_else(|| Reply::error(StatusCode::UNPROCESSABLE_ENTITY, format!("unknown statement {text:?}")))
    }

    fn confidence(&self, body: &str) -> Result<Reply, Reply> {
        let request: ConfidenceRequest = decode(body)?;
        let statement = self.template.extract_statement(&request.prompt).ok_or_else(|| {
            Reply::error(StatusCode::UNPROCESSABLE_ENTITY, "prompt does not follow the serving template".into())
        })?;
        let item = self.lookup(statement)?;
        let (label, confidence) = self.confidence.judge(item).map_err(Reply::oracle)?;
        Ok(Reply::ok(&ConfidenceResponse { label, confidence }))
    }

    fn nli(&self, body: &str) -> Result<Reply, Reply> {
        let request: NliRequest = decode(body)?;
        let premise = self.lookup(&request.premise)?;
        let hypothesis = self.lookup(&request.hypothesis)?;
        let scores = self.nli.infer(premise, hypothesis).map_err(Reply::oracle)?;
        Ok(Reply::ok(&scores))
    }

    fn embed(&self, body: &str) -> Result<Reply, Reply> {
        let request: EmbedRequest = decode(body)?;
        if request.text.trim().is_empty() {
            return Err(Reply::error(StatusCode::UNPROCESSABLE_ENTITY, "empty text".into()));
        }
        let vector = self.embedder.embed_raw(&request.text).map_err(Reply::oracle)?;
        Ok(Reply::ok(&EmbedResponse { dim: vector.len(), vector }))
    }
}

struct Reply {
    status: StatusCode,
    body: serde_json::Value,
}

impl Reply {
    fn ok(value: &impl serde::Serialize) -> Self {
        Self { status: StatusCode::OK, body: serde_json::to_value(value).expect("wire types serialize") }
    }

    fn error(status: StatusCode, error: String) -> Self {
        Self { status, body: serde_json::to_value(ErrorBody { error }).expect("wire types serialize") }
    }

    fn oracle(e: tdf_core::Error) -> Self {
        Self::error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }
}

fn decode<T: DeserializeOwned>(body: &str) -> Result<T, Reply> {
    serde_json::from_str(body).map_err(|e| Reply::error(StatusCode::BAD_REQUEST, format!("contract violation: {e}")))
}

fn respond(state: &MockState, route: &str, outcome: Result<Reply, Reply>) -> Response {
    let id = state.requests.fetch_add(1, Ordering::Relaxed) + 1;
    let reply = outcome.unwrap_or_else(|e| e);
    log::info!("request {id} {route} -> {}", reply.status.as_u16());
    (reply.status, Json(reply.body)).into_response()
}

pub fn router(state: Arc<MockState>) -> Router {
    Router::new()
        .route(CONFIDENCE_ROUTE, post(|State(s): State<Arc<MockState>>, body: String| async move {
            respond(&s, CONFIDENCE_ROUTE, s.confidence(&body))
        }))
        .route(NLI_ROUTE, post(|State(s): State<Arc<MockState>>, body: String| async move {
            respond(&s, NLI_ROUTE, s.nli(&body))
        }))
        .route(EMBED_ROUTE, post(|State(s): State<Arc<MockState>>, body: String| async move {
            respond(&s, EMBED_ROUTE, s.embed(&body))
        }))
        .with_state(state)
}

/// A service running on a background thread; dropping the handle stops it.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl MockServer {
    /// Binds synchronously, so a busy port is reported here.
    pub fn spawn(addr: SocketAddr, state: MockState) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(state);
        let app = router(state.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .thread_name("tdf-mock")
            .enable_all()
            .build()?;
        let thread = std::thread::Builder::new().name("tdf-mock-main".into()).spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        let _ = rx.await;
                    })
                    .await
            })
        })?;
        Ok(Self { addr, state, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &MockState {
        &self.state
    }

    /// Blocks until the service exits.
    pub fn wait(mut self) -> io::Result<()> {
        let _keep_running = self.shutdown.take();
        match self.thread.take().map(JoinHandle::join) {
            Some(Ok(result)) => result,
            Some(Err(_)) => Err(io::Error::other("mock service thread panicked")),
            None => Ok(()),
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}
