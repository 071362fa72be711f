//! HTTP API over a triage session.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use contract_lineage::diff::changed_regions;
use contract_lineage::triage::{Card, CardState, TriageError, TriageSession};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

/// Lines of unchanged context around each changed region in card views.
pub const CARD_CONTEXT: usize = 3;

/// The session plus the file it is persisted to after every mutation.
pub struct AppState {
    pub session: TriageSession,
    pub path: Option<PathBuf>,
}

pub type Shared = Arc<Mutex<AppState>>;

pub fn shared(session: TriageSession, path: Option<PathBuf>) -> Shared {
    Arc::new(Mutex::new(AppState { session, path }))
}

pub fn router(state: Shared, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", get(get_session))
        .route("/api/cards", get(list_cards))
        .route("/api/cards/{id}", get(get_card))
        .route("/api/cards/{id}/label", post(label))
        .route("/api/cards/{id}/exclude", post(exclude))
        .route("/api/categories", post(create_category))
        .route("/api/phase/advance", post(advance))
        .route("/api/report", get(report))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async { ApiError::not_found("no such resource") }),
    }
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn not_found(message: &str) -> ApiError {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message: message.to_string(),
        }
    }
}

impl From<TriageError> for ApiError {
    fn from(e: TriageError) -> ApiError {
        use TriageError::*;
        let (status, code) = match &e {
            UnknownCard(_) => (StatusCode::NOT_FOUND, "unknown_card"),
            UnknownCategory(_) => (StatusCode::NOT_FOUND, "unknown_category"),
            StaleRevision { .. } => (StatusCode::CONFLICT, "stale_revision"),
            PhaseViolation { .. } => (StatusCode::CONFLICT, "phase_violation"),
            SessionComplete => (StatusCode::CONFLICT, "session_complete"),
            UnresolvedCards(_) => (StatusCode::CONFLICT, "unresolved_cards"),
            SessionIncomplete => (StatusCode::CONFLICT, "session_incomplete"),
            EmptyReason => (StatusCode::UNPROCESSABLE_ENTITY, "empty_reason"),
            EmptyTitle => (StatusCode::UNPROCESSABLE_ENTITY, "empty_title"),
            DuplicateTitle(_) => (StatusCode::UNPROCESSABLE_ENTITY, "duplicate_title"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "message": self.message })),
        )
            .into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

#[derive(Serialize)]
struct CardSummary<'a> {
    id: &'a str,
    predecessor: String,
    successor: String,
    similarity: f64,
    successor_destructed: bool,
    iteration: u8,
    #[serde(flatten)]
    state: &'a CardState,
}

fn summary(card: &Card) -> CardSummary<'_> {
    CardSummary {
        id: &card.id,
        predecessor: card.pair.predecessor.to_string(),
        successor: card.pair.successor.to_string(),
        similarity: card.pair.similarity,
        successor_destructed: card.pair.successor_destructed,
        iteration: card.iteration,
        state: &card.state,
    }
}

fn session_json(s: &TriageSession) -> Value {
    json!({
        "phase": s.phase,
        "revision": s.revision,
        "counts": s.counts(),
        "categories": s.categories,
        "sample_fraction": s.sample_fraction,
        "seed": s.seed,
    })
}

async fn get_session(State(state): State<Shared>) -> ApiResult {
    Ok(Json(session_json(&state.lock().unwrap().session)))
}

#[derive(Deserialize)]
struct CardFilter {
    state: Option<String>,
    iteration: Option<u8>,
}

async fn list_cards(State(state): State<Shared>, Query(filter): Query<CardFilter>) -> ApiResult {
    let guard = state.lock().unwrap();
    let cards: Vec<CardSummary> = guard
        .session
        .cards
        .iter()
        .filter(|c| filter.state.as_deref().is_none_or(|s| s == c.state.name()))
        .filter(|c| filter.iteration.is_none_or(|i| i == c.iteration))
        .map(summary)
        .collect();
    Ok(Json(json!(cards)))
}

async fn get_card(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let guard = state.lock().unwrap();
    let card = guard
        .session
        .card(&id)
        .ok_or_else(|| ApiError::from(TriageError::UnknownCard(id.clone())))?;
    let mut body = serde_json::to_value(summary(card)).expect("card summary serializes");
    if let Some(ev) = &card.evidence {
        let regions: Vec<Value> = changed_regions(&ev.diff.hunks, CARD_CONTEXT)
            .into_iter()
            .map(|r| {
                json!({
                    "pred_start": r.pred_range.start + 1,
                    "pred_lines": ev.pred_lines[r.pred_range.clone()],
                    "succ_start": r.succ_range.start + 1,
                    "succ_lines": ev.succ_lines[r.succ_range.clone()],
                })
            })
            .collect();
        let extra = json!({
            "pred_source": ev.pred_source,
            "succ_source": ev.succ_source,
            "granularity": ev.diff.granularity,
            "hunks": ev.diff.hunks,
            "regions": regions,
            "delta": ev.delta,
        });
        if let (Value::Object(b), Value::Object(e)) = (&mut body, extra) {
            b.extend(e);
        }
    }
    Ok(Json(body))
}

/// Applies a mutation, persists the session, and rolls back if saving fails.
fn mutate<T>(
    state: &Shared,
    revision: Option<u64>,
    op: impl FnOnce(&mut TriageSession) -> Result<T, TriageError>,
) -> Result<(T, u64), ApiError> {
    let mut guard = state.lock().unwrap();
    guard.session.check_revision(revision)?;
    let before = guard.session.clone();
    let out = op(&mut guard.session)?;
    if let Some(path) = guard.path.clone() {
        if let Err(e) = guard.session.save(&path) {
            guard.session = before;
            return Err(e.into());
        }
    }
    Ok((out, guard.session.revision))
}

#[derive(Deserialize)]
struct LabelBody {
    category_id: String,
    actor: String,
    revision: Option<u64>,
}

async fn label(State(state): State<Shared>, Path(id): Path<String>, Json(b): Json<LabelBody>) -> ApiResult {
    let (_, revision) = mutate(&state, b.revision, |s| s.label_card(&id, &b.category_id, &b.actor))?;
    Ok(Json(json!({ "revision": revision, "card_id": id })))
}

#[derive(Deserialize)]
struct ExcludeBody {
    reason: String,
    actor: String,
    revision: Option<u64>,
}

async fn exclude(State(state): State<Shared>, Path(id): Path<String>, Json(b): Json<ExcludeBody>) -> ApiResult {
    let (_, revision) = mutate(&state, b.revision, |s| s.exclude_card(&id, &b.reason, &b.actor))?;
    Ok(Json(json!({ "revision": revision, "card_id": id })))
}

#[derive(Deserialize)]
struct CategoryBody {
    title: String,
    #[serde(default)]
    description: String,
    actor: String,
    revision: Option<u64>,
}

async fn create_category(State(state): State<Shared>, Json(b): Json<CategoryBody>) -> ApiResult {
    let (id, revision) = mutate(&state, b.revision, |s| {
        s.create_category(&b.title, &b.description, &b.actor)
    })?;
    Ok(Json(json!({ "revision": revision, "category_id": id })))
}

#[derive(Deserialize, Default)]
struct AdvanceBody {
    actor: Option<String>,
    revision: Option<u64>,
}

async fn advance(State(state): State<Shared>, body: Option<Json<AdvanceBody>>) -> ApiResult {
    let b = body.map(|Json(b)| b).unwrap_or_default();
    let actor = b.actor.unwrap_or_else(|| "anonymous".to_string());
    let (phase, revision) = mutate(&state, b.revision, |s| s.advance_phase(&actor))?;
    Ok(Json(json!({ "revision": revision, "phase": phase })))
}

#[derive(Deserialize)]
struct ReportQuery {
    #[serde(default)]
    draft: bool,
}

async fn report(State(state): State<Shared>, Query(q): Query<ReportQuery>) -> ApiResult {
    let report = state.lock().unwrap().session.export_report(q.draft)?;
    Ok(Json(serde_json::to_value(report).expect("report serializes")))
}
