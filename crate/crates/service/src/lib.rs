//! HTTP/JSON front end for interactive acquisition sessions.
//!
//! | method | path                      | body / result                        |
//! |--------|---------------------------|--------------------------------------|
//! | POST   | `/sessions`               | `{problem \| builtin, method, guide}` → `{id, phase, stats}` |
//! | GET    | `/sessions/{id}`          | phase, stats, tensors                |
//! | GET    | `/sessions/{id}/query`    | pending query                        |
//! | POST   | `/sessions/{id}/answer`   | `{query_id, answer}` → new phase     |
//! | GET    | `/sessions/{id}/learned`  | learned constraints                  |
//! | GET    | `/sessions/{id}/snapshot` | problem document + learned network   |
//! | DELETE | `/sessions/{id}`          | closes the session                   |
//!
//! Errors are `{code, message}` with `code` one of `NOT_FOUND`, `CONFLICT`,
//! `STALE_QUERY`, `PARSE_ERROR`, `VALIDATION_ERROR`, `BAD_REQUEST`,
//! `CAPACITY_EXCEEDED`.

mod session;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::Rng;
use serde::{Deserialize, Serialize};

use guidacq::acquisition::{AcquisitionConfig, GuidedLayers, Layer, DEFAULT_CUTOFF};
use guidacq::benchmarks::{generate_benchmark, BenchmarkSpec};
use guidacq::harness::Method;
use guidacq::problem::{parse_problem, ConstraintDef, Problem, ProblemDocument, VarRef};
use guidacq::{ConstraintSet, Domain, ModelError};

pub use session::{AnswerError, Phase, Session, Stats};

pub const DEFAULT_MAX_SESSIONS: usize = 32;
/// How long a request waits for the loop to post its next query.
pub const SETTLE_TIMEOUT: Duration = Duration::from_secs(120);

pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    max_sessions: usize,
    settle_timeout: Duration,
}

impl AppState {
    pub fn new(max_sessions: usize) -> Arc<Self> {
        Arc::new(AppState { sessions: RwLock::new(HashMap::new()), max_sessions, settle_timeout: SETTLE_TIMEOUT })
    }

    fn get(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", format!("no session `{id}`")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", message)
    }

    fn conflict(phase: Phase) -> Self {
        ApiError::new(StatusCode::CONFLICT, "CONFLICT", format!("session is {phase:?}, not awaiting an answer"))
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Parse { .. } => ApiError::new(StatusCode::BAD_REQUEST, "PARSE_ERROR", e.to_string()),
            ModelError::Validation(_) => ApiError::new(StatusCode::BAD_REQUEST, "VALIDATION_ERROR", e.to_string()),
            ModelError::Reject(_) => ApiError::bad_request(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ModelError::Parse { line: e.line(), column: e.column(), message: e.to_string() }.into()
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    /// A problem document, inline or as JSON text.
    #[serde(default)]
    pub problem: Option<serde_json::Value>,
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub guide: Option<GuidedLayers>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Query-generation cutoff; 0 searches to optimality.
    #[serde(default)]
    pub cutoff_seconds: Option<f64>,
    /// Node budget without improvement before settling for the incumbent;
    /// 0 disables it.
    #[serde(default)]
    pub stall_nodes: Option<u64>,
    /// Constraints already known, e.g. from a snapshot.
    #[serde(default)]
    pub known: Option<Vec<ConstraintDef>>,
}

#[derive(Debug, Serialize)]
pub struct Created {
    pub id: String,
    pub phase: Phase,
    pub stats: Stats,
}

#[derive(Debug, Serialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub domain: Domain,
}

#[derive(Debug, Serialize)]
pub struct SessionInfo {
    pub id: String,
    pub phase: Phase,
    pub method: Method,
    pub guide: GuidedLayers,
    pub stats: Stats,
    pub pending_query_id: Option<u64>,
    pub error: Option<String>,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub tensor: String,
    pub index: Vec<usize>,
    pub value: i64,
}

#[derive(Debug, Serialize)]
pub struct QueryView {
    pub query_id: u64,
    pub layer: Layer,
    pub bindings: Vec<Binding>,
    pub stats: Stats,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Bool(bool),
    Word(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub query_id: u64,
    pub answer: AnswerValue,
}

#[derive(Debug, Serialize)]
pub struct AnswerResponse {
    pub phase: Phase,
    pub stats: Stats,
    /// Candidates refuted by this answer and whatever followed it.
    pub removed: u64,
    /// Constraints learned meanwhile.
    pub learned: usize,
    pub next_query_id: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct LearnedConstraint {
    #[serde(flatten)]
    pub constraint: ConstraintDef,
    pub text: String,
    pub probability: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct LearnedView {
    pub phase: Phase,
    pub constraints: Vec<LearnedConstraint>,
}

#[derive(Debug, Serialize)]
pub struct Snapshot {
    pub problem: ProblemDocument,
    pub learned: Vec<ConstraintDef>,
    pub phase: Phase,
    pub method: Method,
    pub guide: GuidedLayers,
    pub seed: u64,
    pub stats: Stats,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/query", get(get_query))
        .route("/sessions/{id}/answer", post(post_answer))
        .route("/sessions/{id}/learned", get(get_learned))
        .route("/sessions/{id}/snapshot", get(get_snapshot))
        .with_state(state)
}

fn load_problem(req: &CreateRequest) -> Result<Problem, ApiError> {
    let mut problem = match (&req.problem, &req.builtin) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(ApiError::bad_request("give exactly one of `problem` and `builtin`"))
        }
        (Some(serde_json::Value::String(text)), None) => parse_problem(text)?,
        (Some(value), None) => {
            let doc: ProblemDocument = serde_json::from_value(value.clone())
                .map_err(|e| ModelError::Parse { line: 0, column: 0, message: format!("problem: {e}") })?;
            doc.into_problem()?
        }
        (None, Some(name)) => generate_benchmark(&name.parse::<BenchmarkSpec>()?)?,
    };
    // the user plays the oracle; a bundled target is never consulted
    problem.target = None;
    Ok(problem)
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateRequest = parse_body(&body)?;
    let problem = load_problem(&req)?;
    let method = req.method.unwrap_or(Method::Base);
    let cutoff = match req.cutoff_seconds {
        None => Some(DEFAULT_CUTOFF),
        Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
        Some(s) if s == 0.0 => None,
        Some(s) => return Err(ApiError::bad_request(format!("cutoff_seconds must be non-negative, got {s}"))),
    };
    let config = AcquisitionConfig {
        classifier: method.classifier(),
        layers: req.guide.unwrap_or(GuidedLayers::Qgen),
        seed: req.seed.unwrap_or(0),
        cutoff,
        stall_nodes: match req.stall_nodes {
            None => Some(guidacq::solver::DEFAULT_STALL_NODES),
            Some(0) => None,
            Some(n) => Some(n),
        },
    };
    let mut known = ConstraintSet::new();
    for def in req.known.iter().flatten() {
        known.insert(def.resolve(&problem.vocabulary)?);
    }

    let session = {
        let mut sessions = state.sessions.write().unwrap_or_else(|p| p.into_inner());
        if sessions.len() >= state.max_sessions {
            return Err(ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "CAPACITY_EXCEEDED",
                format!("all {} session slots are in use", state.max_sessions),
            ));
        }
        let id = loop {
            let id = format!("{:016x}", rand::thread_rng().gen::<u64>());
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        let session = Session::start(id.clone(), problem.vocabulary, problem.language, config, known);
        sessions.insert(id, Arc::clone(&session));
        session
    };
    let phase = session.settled(state.settle_timeout).await;
    let stats = session.view().stats.clone();
    Ok((StatusCode::CREATED, Json(Created { id: session.id.clone(), phase, stats })))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionInfo>, ApiError> {
    let s = state.get(&id)?;
    let view = s.view();
    let voc = &s.vocabulary;
    Ok(Json(SessionInfo {
        id: s.id.clone(),
        phase: view.phase,
        method: method_of(&s.config),
        guide: s.config.layers,
        stats: view.stats.clone(),
        pending_query_id: view.pending.as_ref().map(|p| p.query_id),
        error: view.error.clone(),
        tensors: voc
            .tensors()
            .iter()
            .map(|t| TensorInfo {
                name: t.name.clone(),
                shape: t.shape.clone(),
                domain: voc.domain(guidacq::VarId(t.offset)).clone(),
            })
            .collect(),
    }))
}

fn method_of(config: &AcquisitionConfig) -> Method {
    use guidacq::learning::ClassifierKind;
    match config.classifier {
        None => Method::Base,
        Some(ClassifierKind::Counting) => Method::Count,
        Some(ClassifierKind::Gnb) => Method::Gnb,
        Some(ClassifierKind::Rf) => Method::Rf,
    }
}

async fn get_query(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<QueryView>, ApiError> {
    let s = state.get(&id)?;
    let view = s.view();
    let pending = match (&view.phase, &view.pending) {
        (Phase::AwaitingAnswer, Some(p)) => p,
        (phase, _) => return Err(ApiError::conflict(*phase)),
    };
    let voc = &s.vocabulary;
    let bindings = pending
        .assignment
        .bindings()
        .map(|(v, value)| Binding { tensor: voc.tensor_of(v).name.clone(), index: voc.index_of(v), value })
        .collect();
    Ok(Json(QueryView { query_id: pending.query_id, layer: pending.layer, bindings, stats: view.stats.clone() }))
}

async fn post_answer(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<AnswerResponse>, ApiError> {
    let s = state.get(&id)?;
    let req: AnswerRequest = parse_body(&body)?;
    let answer = match &req.answer {
        AnswerValue::Bool(b) => *b,
        AnswerValue::Word(w) => match w.trim().to_ascii_lowercase().as_str() {
            "yes" => true,
            "no" => false,
            other => return Err(ApiError::bad_request(format!("answer must be yes or no, got `{other}`"))),
        },
    };
    let before = s.view().stats.clone();
    s.answer(req.query_id, answer).map_err(|e| match e {
        AnswerError::Stale { pending } => ApiError::new(
            StatusCode::CONFLICT,
            "STALE_QUERY",
            format!("query {} is not pending; the pending query is {pending}", req.query_id),
        ),
        AnswerError::NotAwaiting(phase) => ApiError::conflict(phase),
        AnswerError::Closed => ApiError::new(StatusCode::CONFLICT, "CONFLICT", "the session is closed"),
    })?;
    let phase = s.settled(state.settle_timeout).await;
    let view = s.view();
    Ok(Json(AnswerResponse {
        phase,
        stats: view.stats.clone(),
        removed: view.stats.removed - before.removed,
        learned: view.stats.learned_size.saturating_sub(before.learned_size),
        next_query_id: view.pending.as_ref().map(|p| p.query_id),
    }))
}

async fn get_learned(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<LearnedView>, ApiError> {
    let s = state.get(&id)?;
    let view = s.view();
    let voc = &s.vocabulary;
    let constraints = view
        .learned
        .iter()
        .map(|(c, p)| LearnedConstraint { constraint: ConstraintDef::of(voc, c), text: c.render(voc), probability: *p })
        .collect();
    Ok(Json(LearnedView { phase: view.phase, constraints }))
}

async fn get_snapshot(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Snapshot>, ApiError> {
    let s = state.get(&id)?;
    let view = s.view();
    let voc = &s.vocabulary;
    let problem = Problem { vocabulary: voc.clone(), language: s.language.clone(), target: None };
    Ok(Json(Snapshot {
        problem: ProblemDocument::from_problem(&problem),
        learned: view.learned.iter().map(|(c, _)| ConstraintDef::of(voc, c)).collect(),
        phase: view.phase,
        method: method_of(&s.config),
        guide: s.config.layers,
        seed: s.config.seed,
        stats: view.stats.clone(),
    }))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let removed = state.sessions.write().unwrap_or_else(|p| p.into_inner()).remove(&id);
    match removed {
        Some(s) => {
            s.close();
            Ok(StatusCode::NO_CONTENT)
        }
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", format!("no session `{id}`"))),
    }
}

/// Resolves a binding list back to variables, for clients that echo queries.
pub fn resolve_bindings(voc: &guidacq::Vocabulary, bindings: &[Binding]) -> Result<guidacq::Assignment, ModelError> {
    let mut e = guidacq::Assignment::empty(voc.len());
    for b in bindings {
        let var = VarRef { tensor: b.tensor.clone(), index: b.index.clone() }.resolve(voc)?;
        e.bind(voc, var, b.value)?;
    }
    Ok(e)
}

/// Serves the API on `addr` until the process is stopped.
pub fn serve(addr: &str, max_sessions: usize) -> std::io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(AppState::new(max_sessions))).await
    })
}
