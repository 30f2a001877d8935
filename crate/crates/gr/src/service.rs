//! HTTP service: session creation, live step events over SSE, artifact
//! retrieval and follow-up questions.

use std::collections::HashMap;
use std::convert::Infallible;
use std::panic::AssertUnwindSafe;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::Stream;
use guided_reasoning::export::{render_dot, render_json, render_svg};
use guided_reasoning::gateway::{Model, Transcript};
use guided_reasoning::guide::{Guide, GuideConfig, GuideError, GuideKind, GuideSession, SessionState};
use guided_reasoning::prompts::PromptTemplates;
use guided_reasoning::protocol::Stage;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::watch;
use tower_http::cors::CorsLayer;

use crate::backend::{self, CLIENT, EXPERT};
use crate::config::Config;
use crate::store::{SessionStore, StoredSession};

/// One notification on a session's event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub session_id: String,
    /// Gapless, starting at 1.
    pub seq: u64,
    pub stage: Stage,
    pub payload: Value,
}

/// Creates fresh client and expert models for a new session.
pub type BackendFactory = Arc<dyn Fn(GuideKind) -> Result<(Model, Model), String> + Send + Sync>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    stage: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            stage: None,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown session {id}"))
    }

    fn conflict(state: SessionState) -> Self {
        Self::new(StatusCode::CONFLICT, format!("session is {state}; it has not finished yet"))
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn bad_gateway(stage: &str, message: impl Into<String>) -> Self {
        ApiError {
            stage: Some(stage.into()),
            ..Self::new(StatusCode::BAD_GATEWAY, message)
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(stage) = self.stage {
            body["stage"] = stage.into();
        }
        (self.status, Json(body)).into_response()
    }
}

/// JSON body whose every rejection is reported as 422.
pub struct JsonBody<T>(pub T);

impl<S, T> FromRequest<S> for JsonBody<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(JsonBody(v)),
            Err(e) => Err(ApiError::unprocessable(e.body_text())),
        }
    }
}

struct Live {
    state: SessionState,
    events: Vec<StepEvent>,
    /// Set once the session has finished.
    session: Option<GuideSession>,
    guide: Option<Arc<Guide>>,
    transcript: Transcript,
}

struct Handle {
    id: String,
    kind: GuideKind,
    live: Mutex<Live>,
    notify: watch::Sender<u64>,
    followups: tokio::sync::Mutex<()>,
}

impl Handle {
    fn lock(&self) -> std::sync::MutexGuard<'_, Live> {
        self.live.lock().expect("session lock")
    }

    fn push(&self, live: &mut Live, stage: Stage, payload: Value) {
        let seq = live.events.len() as u64 + 1;
        live.events.push(StepEvent {
            session_id: self.id.clone(),
            seq,
            stage,
            payload,
        });
        self.notify.send_replace(seq);
    }

    fn emit(&self, stage: Stage, payload: Value) {
        let mut live = self.lock();
        if let Some(s) = state_after(stage) {
            live.state = s;
        }
        self.push(&mut live, stage, payload);
    }

    fn event(&self, seq: u64) -> Option<StepEvent> {
        let live = self.lock();
        seq.checked_sub(1).and_then(|i| live.events.get(i as usize).cloned())
    }

    fn finished(&self) -> bool {
        self.lock().session.is_some()
    }

    fn stored(&self) -> Option<StoredSession> {
        let live = self.lock();
        Some(StoredSession {
            session: live.session.clone()?,
            events: live.events.clone(),
            exchanges: live.transcript.exchanges(),
        })
    }
}

/// Session state reached once `stage` has completed.
fn state_after(stage: Stage) -> Option<SessionState> {
    match stage {
        Stage::Brainstorm | Stage::Solve => Some(SessionState::Brainstormed),
        Stage::Mapping => Some(SessionState::Mapped),
        Stage::Evaluation | Stage::Consistency => Some(SessionState::Evaluated),
        Stage::Draft => Some(SessionState::Drafted),
        Stage::Delivered => Some(SessionState::Delivered),
        Stage::Failed => Some(SessionState::Failed),
        Stage::Issue | Stage::ProsCons | Stage::Relevance | Stage::Paraphrase => None,
    }
}

struct Inner {
    sessions: RwLock<HashMap<String, Arc<Handle>>>,
    backends: BackendFactory,
    templates: PromptTemplates,
    config: GuideConfig,
    store: Option<SessionStore>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("the suspension guide needs at least 2 paraphrases, got {0}")]
    Paraphrases(usize),
    #[error(transparent)]
    Backend(#[from] backend::BackendError),
    #[error("session store: {0}")]
    Store(#[from] std::io::Error),
}

impl AppState {
    /// Builds the service state, loading previously stored sessions.
    pub fn new(
        backends: BackendFactory,
        templates: PromptTemplates,
        config: GuideConfig,
        store: Option<SessionStore>,
    ) -> Result<Self, ServiceError> {
        if config.n_paraphrases < 2 {
            return Err(ServiceError::Paraphrases(config.n_paraphrases));
        }
        let mut sessions = HashMap::new();
        if let Some(store) = &store {
            for stored in store.load_all()? {
                if !stored.session.state.is_terminal() {
                    log::warn!("skipping unfinished stored session {}", stored.session.id);
                    continue;
                }
                let transcript = Transcript::new();
                for ex in stored.exchanges {
                    transcript.push(ex);
                }
                let last = stored.events.len() as u64;
                let handle = Handle {
                    id: stored.session.id.clone(),
                    kind: stored.session.guide,
                    live: Mutex::new(Live {
                        state: stored.session.state,
                        events: stored.events,
                        session: Some(stored.session),
                        guide: None,
                        transcript,
                    }),
                    notify: watch::Sender::new(last),
                    followups: tokio::sync::Mutex::new(()),
                };
                sessions.insert(handle.id.clone(), Arc::new(handle));
            }
        }
        Ok(AppState(Arc::new(Inner {
            sessions: RwLock::new(sessions),
            backends,
            templates,
            config,
            store,
        })))
    }

    /// Service state whose sessions talk to the backends named in `cfg`.
    pub fn from_config(cfg: &Config, store: Option<SessionStore>) -> Result<Self, ServiceError> {
        let templates = backend::templates(cfg)?;
        let c = cfg.clone();
        let factory: BackendFactory = Arc::new(move |_| backend::connect(&c).map_err(|e| e.to_string()));
        Self::new(factory, templates, cfg.guide_config(), store)
    }

    pub fn session_count(&self) -> usize {
        self.0.sessions.read().expect("sessions lock").len()
    }

    fn handle(&self, id: &str) -> Result<Arc<Handle>, ApiError> {
        self.0
            .sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn guide(&self, kind: GuideKind, transcript: &Transcript) -> Result<Guide, String> {
        let (client, expert) = (self.0.backends)(kind)?;
        Ok(Guide::new(
            backend::record(&client, CLIENT, transcript),
            backend::record(&expert, EXPERT, transcript),
            self.0.templates.clone(),
            self.0.config.clone(),
        ))
    }

    fn persist(&self, handle: &Handle) {
        if let Some(stored) = handle.stored() {
            self.save(&handle.id, &stored);
        }
    }

    fn save(&self, id: &str, stored: &StoredSession) {
        if let Some(store) = &self.0.store {
            if let Err(e) = store.save(stored) {
                log::error!("cannot persist session {id}: {e}");
            }
        }
    }

    pub fn router(self) -> Router {
        Router::new()
            .route("/v1/sessions", post(create))
            .route("/v1/sessions/{id}", get(status))
            .route("/v1/sessions/{id}/events", get(events))
            .route("/v1/sessions/{id}/protocol", get(protocol))
            .route("/v1/sessions/{id}/map.svg", get(map_svg))
            .route("/v1/sessions/{id}/map.dot", get(map_dot))
            .route("/v1/sessions/{id}/map.json", get(map_json))
            .route("/v1/sessions/{id}/followup", post(followup))
            .layer(CorsLayer::permissive())
            .with_state(self)
    }
}

/// Runs a session to completion on the current (blocking) thread.
fn drive(app: AppState, handle: Arc<Handle>, guide: Arc<Guide>, mut session: GuideSession) {
    let mut terminal = None;
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| {
        guide.run(&mut session, &mut |stage, payload| {
            if matches!(stage, Stage::Delivered | Stage::Failed) {
                terminal = Some((stage, payload));
            } else {
                handle.emit(stage, payload);
            }
        })
    }));
    let (stage, payload) = match (outcome, terminal) {
        (Ok(Ok(())), Some(t)) => t,
        (Ok(Err(e)), _) => (Stage::Failed, json!({ "stage": null, "cause": e.to_string() })),
        _ => (Stage::Failed, json!({ "stage": null, "cause": "internal error" })),
    };
    let state = if session.state.is_terminal() {
        session.state
    } else {
        SessionState::Failed
    };
    // Persist before publishing so that a terminal event implies a stored
    // session.
    let stored = {
        let live = handle.lock();
        let mut events = live.events.clone();
        events.push(StepEvent {
            session_id: handle.id.clone(),
            seq: events.len() as u64 + 1,
            stage,
            payload: payload.clone(),
        });
        StoredSession {
            session: session.clone(),
            events,
            exchanges: live.transcript.exchanges(),
        }
    };
    app.save(&handle.id, &stored);
    let mut live = handle.lock();
    live.state = state;
    live.session = Some(session);
    handle.push(&mut live, stage, payload);
}

#[derive(Deserialize)]
struct CreateRequest {
    problem: String,
    #[serde(default)]
    guide: GuideKind,
}

async fn create(
    State(app): State<AppState>,
    JsonBody(req): JsonBody<CreateRequest>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let id = uuid::Uuid::new_v4().to_string();
    let session = GuideSession::new(id.clone(), req.guide, req.problem).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let transcript = Transcript::new();
    let guide = Arc::new(
        app.guide(req.guide, &transcript)
            .map_err(|e| ApiError::bad_gateway("Connect", e))?,
    );
    let handle = Arc::new(Handle {
        id: id.clone(),
        kind: req.guide,
        live: Mutex::new(Live {
            state: SessionState::Received,
            events: Vec::new(),
            session: None,
            guide: Some(guide.clone()),
            transcript,
        }),
        notify: watch::Sender::new(0),
        followups: tokio::sync::Mutex::new(()),
    });
    app.0
        .sessions
        .write()
        .expect("sessions lock")
        .insert(id.clone(), handle.clone());
    tokio::task::spawn_blocking(move || drive(app, handle, guide, session));
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn status(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let handle = app.handle(&id)?;
    let live = handle.lock();
    let mut body = json!({
        "session_id": id,
        "guide": handle.kind,
        "state": live.state,
        "events": live.events.len(),
    });
    if let Some(s) = &live.session {
        if let Some(a) = &s.answer {
            body["answer"] = a.clone().into();
        }
        if let Some(f) = &s.failure {
            body["failure"] = serde_json::to_value(f).expect("failure serializes");
        }
    }
    Ok(Json(body))
}

struct Cursor {
    handle: Arc<Handle>,
    rx: watch::Receiver<u64>,
    next: u64,
    done: bool,
}

async fn next_event(mut c: Cursor) -> Option<(Result<Event, Infallible>, Cursor)> {
    loop {
        if c.done {
            return None;
        }
        c.rx.borrow_and_update();
        if let Some(ev) = c.handle.event(c.next) {
            c.next += 1;
            c.done = matches!(ev.stage, Stage::Delivered | Stage::Failed);
            let event = Event::default()
                .id(ev.seq.to_string())
                .json_data(&ev)
                .expect("step event serializes");
            return Some((Ok(event), c));
        }
        if c.handle.finished() || c.rx.changed().await.is_err() {
            return None;
        }
    }
}

/// Backlog from `Last-Event-ID` onwards, then live events until the
/// terminal one.
async fn events(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let handle = app.handle(&id)?;
    let after = match headers.get("last-event-id") {
        None => 0,
        Some(v) => v
            .to_str()
            .ok()
            .and_then(|s| s.trim().parse::<u64>().ok())
            .ok_or_else(|| ApiError::unprocessable("Last-Event-ID must be a non-negative integer"))?,
    };
    let cursor = Cursor {
        rx: handle.notify.subscribe(),
        handle,
        next: after + 1,
        done: false,
    };
    Ok(Sse::new(futures::stream::unfold(cursor, next_event)).keep_alive(KeepAlive::default()))
}

fn finished(app: &AppState, id: &str) -> Result<GuideSession, ApiError> {
    let handle = app.handle(id)?;
    let live = handle.lock();
    live.session.clone().ok_or_else(|| ApiError::conflict(live.state))
}

async fn protocol(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = finished(&app, &id)?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], s.protocol_text()).into_response())
}

fn map_export(
    app: &AppState,
    id: &str,
    content_type: &'static str,
    render: fn(&guided_reasoning::argmap::ArgumentMap) -> String,
) -> Result<Response, ApiError> {
    let s = finished(app, id)?;
    let map = s
        .map
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("session {id} has no argument map")))?;
    Ok(([(header::CONTENT_TYPE, content_type)], render(map)).into_response())
}

async fn map_svg(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    map_export(&app, &id, "image/svg+xml", render_svg)
}

async fn map_dot(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    map_export(&app, &id, "text/vnd.graphviz; charset=utf-8", render_dot)
}

async fn map_json(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    map_export(&app, &id, "application/json", render_json)
}

#[derive(Deserialize)]
struct FollowupRequest {
    question: String,
}

async fn followup(
    State(app): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<FollowupRequest>,
) -> Result<Json<Value>, ApiError> {
    let handle = app.handle(&id)?;
    if req.question.trim().is_empty() {
        return Err(ApiError::unprocessable("question must not be empty"));
    }
    let _turn = handle.followups.lock().await;
    let (mut session, guide) = {
        let mut live = handle.lock();
        let session = live.session.clone().ok_or_else(|| ApiError::conflict(live.state))?;
        let guide = match &live.guide {
            Some(g) => g.clone(),
            None => {
                let g = Arc::new(
                    app.guide(handle.kind, &live.transcript)
                        .map_err(|e| ApiError::bad_gateway("Connect", e))?,
                );
                live.guide = Some(g.clone());
                g
            }
        };
        (session, guide)
    };
    let (session, result) = tokio::task::spawn_blocking(move || {
        let r = guide.answer_followup(&mut session, &req.question);
        (session, r)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    match result {
        Ok(resp) => {
            handle.lock().session = Some(session);
            app.persist(&handle);
            Ok(Json(json!({ "answer": resp.content })))
        }
        Err(GuideError::NotReady(state)) => Err(ApiError::conflict(state)),
        Err(GuideError::Gateway(e)) => Err(ApiError::bad_gateway("Followup", e.to_string())),
        Err(e) => Err(ApiError::unprocessable(e.to_string())),
    }
}

/// Serves `app` on `listener` until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, app: AppState) -> std::io::Result<()> {
    axum::serve(listener, app.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
