use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::error::{Error, Result};
use crate::protocol::{build_prompt, stimulus_registry, Strategy};

/// Canned answer for one `(model, stimulus, strategy, rep)`.
///
/// Each status in `failures` is served on successive attempts before the
/// response. Without a response the last failure is final.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockFixture {
    pub model: String,
    pub stimulus: String,
    pub strategy: Strategy,
    pub rep: u32,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<u16>,
    /// Wait before answering the final response.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub delay_ms: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

impl MockFixture {
    pub fn ok(model: &str, stimulus: &str, strategy: Strategy, rep: u32, response: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            stimulus: stimulus.into(),
            strategy,
            rep,
            response: Some(response.into()),
            failures: Vec::new(),
            delay_ms: 0,
        }
    }

    fn script_len(&self) -> usize {
        match (&self.response, self.failures.is_empty()) {
            (None, false) => self.failures.len(),
            _ => self.failures.len() + 1,
        }
    }
}

/// Reads a JSON array of fixtures.
pub fn load_fixtures(path: &Path) -> Result<Vec<MockFixture>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))
}

type CellKey = (String, String, Strategy);

struct MockState {
    fixtures: HashMap<(String, String, Strategy, u32), MockFixture>,
    prompts: HashMap<(String, String), (Strategy, String)>,
    // (rep being served, step within its script)
    progress: Mutex<HashMap<CellKey, (u32, usize)>>,
    requests: AtomicUsize,
}

fn json_response(status: StatusCode, body: serde_json::Value) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body.to_string()).into_response()
}

fn not_found(message: String) -> Response {
    json_response(
        StatusCode::NOT_FOUND,
        serde_json::json!({"error": {"type": "fixture_not_found", "message": message}}),
    )
}

fn message_text(messages: &[serde_json::Value], role: &str) -> String {
    messages
        .iter()
        .find(|m| m.get("role").and_then(|r| r.as_str()) == Some(role))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .unwrap_or_default()
        .to_string()
}

/// Finds the fixture for the cell's current rep and advances the cell's
/// script position.
#[allow(clippy::result_large_err)]
fn next_step(
    state: &MockState,
    model: &str,
    stimulus: &str,
    strategy: Strategy,
) -> std::result::Result<(u32, (usize, MockFixture)), Response> {
    let cell = (model.to_string(), stimulus.to_string(), strategy);
    let mut progress = state.progress.lock().unwrap_or_else(|e| e.into_inner());
    let (rep, step) = *progress.entry(cell.clone()).or_insert((1, 0));
    let Some(fixture) = state.fixtures.get(&(cell.0.clone(), cell.1.clone(), strategy, rep)) else {
        return Err(not_found(format!(
            "no fixture for {model} / {stimulus} / {strategy} / rep {rep}"
        )));
    };
    let next = if step + 1 >= fixture.script_len() { (rep + 1, 0) } else { (rep, step + 1) };
    progress.insert(cell, next);
    Ok((rep, (step, fixture.clone())))
}

async fn completions(State(state): State<Arc<MockState>>, body: String) -> Response {
    state.requests.fetch_add(1, Ordering::SeqCst);
    let request: serde_json::Value = match serde_json::from_str(&body) {
        Ok(v) => v,
        Err(_) => {
            return json_response(
                StatusCode::BAD_REQUEST,
                serde_json::json!({"error": {"type": "invalid_request", "message": "body is not JSON"}}),
            )
        }
    };
    let model = request.get("model").and_then(|m| m.as_str()).unwrap_or_default().to_string();
    let messages = request
        .get("messages")
        .and_then(|m| m.as_array())
        .cloned()
        .unwrap_or_default();
    let prompt = (message_text(&messages, "system"), message_text(&messages, "user"));
    let Some((strategy, stimulus)) = state.prompts.get(&prompt).cloned() else {
        return not_found("request matches no known prompt".into());
    };
    let (rep, fixture) = match next_step(&state, &model, &stimulus, strategy) {
        Ok(found) => found,
        Err(response) => return response,
    };
    let (step, fixture) = fixture;
    if let Some(&code) = fixture.failures.get(step) {
        let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return json_response(
            status,
            serde_json::json!({"error": {"type": "mock_failure", "code": code}}),
        );
    }
    if fixture.delay_ms > 0 {
        tokio::time::sleep(std::time::Duration::from_millis(fixture.delay_ms)).await;
    }
    let content = fixture.response.unwrap_or_default();
    json_response(
        StatusCode::OK,
        serde_json::json!({
            "id": format!("mock-{model}-{stimulus}-{strategy}-{rep}"),
            "object": "chat.completion",
            "model": model,
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": content},
                "finish_reason": "stop",
            }],
        }),
    )
}

/// A running mock server. Dropping it without [`MockServer::shutdown`]
/// leaves the task running until the runtime stops.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to put in a run config.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.state.requests.load(Ordering::SeqCst)
    }

    /// Forgets which repetition each cell is on.
    pub fn reset(&self) {
        self.state.progress.lock().unwrap_or_else(|e| e.into_inner()).clear();
        self.state.requests.store(0, Ordering::SeqCst);
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = self.task.await;
    }

    /// Serves until the task ends.
    pub async fn wait(self) {
        let _ = self.task.await;
    }
}

/// Serves the chat-completions protocol on `127.0.0.1:port` (0 picks a free
/// port), answering from `fixtures`.
///
/// Requests are matched to a stimulus and strategy by their prompt text and
/// to a repetition by counting per model and cell. Anything unmatched gets
/// a 404 with a JSON error body.
pub async fn mock_endpoint(fixtures: Vec<MockFixture>, port: u16) -> Result<MockServer> {
    if fixtures.is_empty() {
        return Err(Error::Mock("no fixtures given".into()));
    }
    let mut prompts = HashMap::new();
    for stimulus in stimulus_registry() {
        for strategy in Strategy::ALL {
            let p = build_prompt(strategy, &stimulus.statement)?;
            prompts.insert((p.system, p.user), (strategy, stimulus.id.clone()));
        }
    }
    let fixtures = fixtures
        .into_iter()
        .map(|f| ((f.model.clone(), f.stimulus.clone(), f.strategy, f.rep), f))
        .collect();
    let state = Arc::new(MockState {
        fixtures,
        prompts,
        progress: Mutex::new(HashMap::new()),
        requests: AtomicUsize::new(0),
    });
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .route("/chat/completions", post(completions))
        .with_state(Arc::clone(&state));
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
        .await
        .map_err(|e| Error::Mock(format!("cannot bind 127.0.0.1:{port}: {e}")))?;
    let addr = listener
        .local_addr()
        .map_err(|e| Error::Mock(e.to_string()))?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let served = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
        if let Err(e) = served {
            tracing::error!("mock endpoint stopped: {e}");
        }
    });
    Ok(MockServer {
        addr,
        state,
        shutdown: Some(tx),
        task,
    })
}
