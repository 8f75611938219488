//! A local chat-completions server for tests and offline runs.
//!
//! It answers with a fixed SQL string, echoes the gold SQL of the question it
//! finds in the prompt, or fails with a chosen status. It also serves
//! `/v1/embeddings` using small hashed trigram vectors.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::selector::TrigramEmbedder;

#[derive(Debug, Clone)]
pub enum StubMode {
    /// Always answer with this text.
    Fixed(String),
    /// Answer with the gold SQL of the last `Q: ` line, inside a code fence.
    GoldEcho(HashMap<String, String>),
    /// Always fail with this HTTP status.
    Fail(u16),
}

#[derive(Debug, Clone)]
pub struct StubConfig {
    pub mode: StubMode,
    pub delay: Duration,
    /// The first `n` requests get a 503 before normal service resumes.
    pub fail_first: usize,
}

impl StubConfig {
    pub fn new(mode: StubMode) -> Self {
        StubConfig {
            mode,
            delay: Duration::ZERO,
            fail_first: 0,
        }
    }
}

struct Shared {
    config: StubConfig,
    requests: AtomicUsize,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl StubServer {
    /// Binds an ephemeral port on localhost.
    pub async fn start(config: StubConfig) -> std::io::Result<Self> {
        Self::bind(config, SocketAddr::from(([127, 0, 0, 1], 0))).await
    }

    pub async fn bind(config: StubConfig, addr: SocketAddr) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            config,
            requests: AtomicUsize::new(0),
        });
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(shared.clone());
        let task = tokio::spawn(async move {
            let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = serve.await {
                tracing::error!("stub server stopped: {e}");
            }
        });
        Ok(StubServer {
            addr,
            shared,
            shutdown: Some(tx),
            task,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Chat requests received so far.
    pub fn request_count(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }

    /// Serves until the process is stopped.
    pub async fn wait(self) {
        let _ = self.task.await;
    }
}

fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/embeddings", post(embeddings))
        .with_state(shared)
}

#[derive(Deserialize)]
struct ChatIn {
    #[serde(default)]
    model: String,
    messages: Vec<MessageIn>,
}

#[derive(Deserialize)]
struct MessageIn {
    #[serde(default)]
    content: String,
}

async fn chat(State(shared): State<Arc<Shared>>, Json(req): Json<ChatIn>) -> Response {
    let n = shared.requests.fetch_add(1, Ordering::SeqCst);
    let cfg = &shared.config;
    if !cfg.delay.is_zero() {
        tokio::time::sleep(cfg.delay).await;
    }
    if n < cfg.fail_first {
        return (StatusCode::SERVICE_UNAVAILABLE, "warming up").into_response();
    }
    let prompt = req.messages.last().map(|m| m.content.as_str()).unwrap_or_default();
    let content = match &cfg.mode {
        StubMode::Fixed(text) => text.clone(),
        StubMode::GoldEcho(golds) => match last_question(prompt).and_then(|q| golds.get(q)) {
            Some(sql) => format!("```sql\n{sql}\n```"),
            None => "I could not find that question.".to_string(),
        },
        StubMode::Fail(status) => {
            let code = StatusCode::from_u16(*status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            return (code, "injected failure").into_response();
        }
    };
    Json(json!({
        "id": format!("stub-{n}"),
        "object": "chat.completion",
        "model": req.model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }]
    }))
    .into_response()
}

fn last_question(prompt: &str) -> Option<&str> {
    prompt.lines().rev().find_map(|l| l.strip_prefix("Q: ")).map(str::trim)
}

#[derive(Deserialize)]
struct EmbedIn {
    input: Vec<String>,
}

async fn embeddings(Json(req): Json<EmbedIn>) -> Json<Value> {
    let e = TrigramEmbedder { dim: 64 };
    let data: Vec<Value> = req
        .input
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let mut dense = vec![0.0f64; 64];
            for (d, x) in e.vector(text).entries {
                dense[d as usize] = x;
            }
            json!({"object": "embedding", "index": i, "embedding": dense})
        })
        .collect();
    Json(json!({"object": "list", "data": data}))
}
