//! HTTP API over one audit state directory.
//!
//! Reads are served from the latest committed state. Mutations take the
//! single writer slot (a busy slot answers 409), work on a copy, persist it,
//! then publish it. Mutating routes need `Authorization: Bearer <token>`.
//!
//! | route | method | body / query |
//! |---|---|---|
//! | `/api/state` | GET | |
//! | `/api/contests` | GET | |
//! | `/api/assertions` | GET | |
//! | `/api/rounds` | POST | `{"targets": {contest: size}}`, optional |
//! | `/api/rounds/{k}/retrieval-list` | GET | `?format=csv` for CSV |
//! | `/api/mvrs` | POST | array of manual records |
//! | `/api/measure` | POST | closes the open round |
//! | `/api/contests/{id}/escalate` | POST | |
//! | `/api/report` | GET | `?threshold=0.001` |

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use crate::engine::{AuditState, ImportSummary, ReportFormat, Store};
use crate::error::Error;
use crate::ingest::ManualRecord;
use crate::model::ContestStatus;

pub struct Shared {
    current: RwLock<Arc<AuditState>>,
    writer: tokio::sync::Mutex<Store>,
    token: String,
}

impl Shared {
    pub fn new(store: Store, state: AuditState, token: impl Into<String>) -> Arc<Self> {
        Arc::new(Shared {
            current: RwLock::new(Arc::new(state)),
            writer: tokio::sync::Mutex::new(store),
            token: token.into(),
        })
    }

    pub fn current(&self) -> Arc<AuditState> {
        self.current.read().expect("state lock poisoned").clone()
    }

    fn authorize(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        let expected = format!("Bearer {}", self.token);
        match headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
        {
            Some(v) if v == expected => Ok(()),
            _ => Err(ApiError::new(
                StatusCode::UNAUTHORIZED,
                "missing or wrong bearer token",
            )),
        }
    }

    /// Run `op` on a copy of the state; persist and publish it on success.
    fn mutate<T>(
        &self,
        headers: &HeaderMap,
        op: impl FnOnce(&mut AuditState) -> crate::Result<T>,
    ) -> Result<T, ApiError> {
        self.authorize(headers)?;
        let mut store = self
            .writer
            .try_lock()
            .map_err(|_| ApiError::new(StatusCode::CONFLICT, "another change is in progress"))?;
        let mut next = (*self.current()).clone();
        let out = op(&mut next)?;
        store
            .save(&mut next)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        *self.current.write().expect("state lock poisoned") = Arc::new(next);
        Ok(out)
    }
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    card_ids: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        ApiError {
            status,
            error: error.into(),
            card_ids: Vec::new(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::UnknownCards(ids) | Error::UnselectedCards(ids) => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                error: message,
                card_ids: ids,
            },
            Error::UnknownContest(_) | Error::UnknownRound(_) => {
                ApiError::new(StatusCode::NOT_FOUND, message)
            }
            Error::Io { .. } | Error::Serde(_) | Error::Locked(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message)
            }
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/api/state", get(get_state))
        .route("/api/contests", get(get_contests))
        .route("/api/assertions", get(get_assertions))
        .route("/api/rounds", post(post_round))
        .route("/api/rounds/{k}/retrieval-list", get(get_retrieval_list))
        .route("/api/mvrs", post(post_mvrs))
        .route("/api/measure", post(post_measure))
        .route("/api/contests/{id}/escalate", post(post_escalate))
        .route("/api/report", get(get_report))
        .layer(CorsLayer::permissive())
        .with_state(shared)
}

/// Serve until interrupted.
pub async fn serve(shared: Arc<Shared>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(shared))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ContestSummary {
    pub id: String,
    pub status: ContestStatus,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StateSummary {
    pub seed_set: bool,
    pub round: usize,
    pub open_round: Option<usize>,
    pub closed_rounds: usize,
    pub cards: usize,
    pub manual_records: usize,
    pub open_assertions: usize,
    pub contests: Vec<ContestSummary>,
}

async fn get_state(State(shared): State<Arc<Shared>>) -> Json<StateSummary> {
    let s = shared.current();
    Json(StateSummary {
        seed_set: s.seed_is_set(),
        round: s.rounds.len(),
        open_round: s.open_round().map(|r| r.round),
        closed_rounds: s.closed_rounds,
        cards: s.cards.iter().filter(|c| !c.phantom).count(),
        manual_records: s.mvrs.len(),
        open_assertions: s.assertions.iter().filter(|a| a.is_open()).count(),
        contests: s
            .contests
            .iter()
            .map(|c| ContestSummary {
                id: c.id.clone(),
                status: c.status,
            })
            .collect(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ContestView {
    #[serde(flatten)]
    pub row: crate::engine::report::ContestRow,
    /// Cards still to hand count; zero unless the contest is being hand counted.
    pub hand_count_outstanding: usize,
}

async fn get_contests(State(shared): State<Arc<Shared>>) -> Json<Vec<ContestView>> {
    let s = shared.current();
    let report = s.report(None);
    Json(
        report
            .contests
            .into_iter()
            .map(|row| ContestView {
                hand_count_outstanding: if row.status == ContestStatus::HandCount {
                    s.hand_count_outstanding(&row.contest).len()
                } else {
                    0
                },
                row,
            })
            .collect(),
    )
}

async fn get_assertions(
    State(shared): State<Arc<Shared>>,
) -> Json<Vec<crate::engine::report::AssertionRow>> {
    Json(shared.current().report(None).assertions)
}

#[derive(Debug, Default, Deserialize)]
pub struct RoundRequest {
    #[serde(default)]
    pub targets: BTreeMap<String, u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RoundView {
    pub round: usize,
    pub targets: BTreeMap<String, u64>,
    pub estimated_total: f64,
    pub selected: BTreeSet<String>,
}

async fn post_round(
    State(shared): State<Arc<Shared>>,
    headers: HeaderMap,
    body: Option<Json<RoundRequest>>,
) -> ApiResult<RoundView> {
    let request = body.map(|Json(b)| b).unwrap_or_default();
    let view = shared.mutate(&headers, |s| {
        let plan = s.next_round(&request.targets)?;
        Ok(RoundView {
            round: plan.round,
            targets: plan.targets.clone(),
            estimated_total: plan.estimated_total,
            selected: plan.selected.clone(),
        })
    })?;
    Ok(Json(view))
}

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    pub format: Option<String>,
}

async fn get_retrieval_list(
    State(shared): State<Arc<Shared>>,
    Path(k): Path<usize>,
    Query(q): Query<ListQuery>,
) -> Result<Response, ApiError> {
    let list = shared.current().retrieval_list(k)?;
    Ok(match q.format.as_deref() {
        Some("csv") => ([(header::CONTENT_TYPE, "text/csv")], list.to_csv()).into_response(),
        _ => Json(list).into_response(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MvrResponse {
    #[serde(flatten)]
    pub summary: ImportSummary,
    /// Sample-order cards measured so far, per contest.
    pub consumed: BTreeMap<String, u64>,
    pub p_values: Vec<f64>,
}

async fn post_mvrs(
    State(shared): State<Arc<Shared>>,
    headers: HeaderMap,
    Json(records): Json<Vec<ManualRecord>>,
) -> ApiResult<MvrResponse> {
    let response = shared.mutate(&headers, |s| {
        let summary = s.import_mvrs(records, None, true)?;
        if s.open_round().is_some() {
            s.measure(false)?;
        }
        Ok(MvrResponse {
            summary,
            consumed: s.consumed.clone(),
            p_values: s.assertions.iter().map(|a| a.p_value()).collect(),
        })
    })?;
    Ok(Json(response))
}

async fn post_measure(
    State(shared): State<Arc<Shared>>,
    headers: HeaderMap,
) -> ApiResult<StateSummary> {
    shared.mutate(&headers, |s| s.measure(true))?;
    Ok(get_state(State(shared)).await)
}

async fn post_escalate(
    State(shared): State<Arc<Shared>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<ContestSummary> {
    let status = shared.mutate(&headers, |s| {
        s.escalate(&id)?;
        Ok(s.contest(&id)?.status)
    })?;
    Ok(Json(ContestSummary { id, status }))
}

#[derive(Debug, Deserialize)]
pub struct ReportQuery {
    pub threshold: Option<f64>,
}

async fn get_report(State(shared): State<Arc<Shared>>, Query(q): Query<ReportQuery>) -> Response {
    let body = shared
        .current()
        .report(q.threshold)
        .render(ReportFormat::Structured);
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

#[cfg(test)]
mod tests {
    use super::*;
    use axum::body::Body;
    use axum::http::Request;
    use tower::ServiceExt;

    use crate::model::{CardRecord, Contest, SocialChoice};

    fn shared(dir: &std::path::Path) -> Arc<Shared> {
        let contest = Contest {
            id: "c".into(),
            name: "c".into(),
            social_choice: SocialChoice::Plurality,
            candidates: vec!["A".into(), "B".into()],
            reported_winners: vec!["A".into()],
            cards_upper_bound: 100,
            risk_limit: 0.05,
            status: ContestStatus::Active,
        };
        let cards = (0..100)
            .map(|i| {
                CardRecord::new(format!("x-{i}")).with_votes("c", &[if i < 70 { "A" } else { "B" }])
            })
            .collect();
        let spec = crate::model::AuditSpec {
            seed: "srv".into(),
            ..Default::default()
        };
        let mut state =
            AuditState::initialize(spec, vec![contest], BTreeMap::new(), cards, None).unwrap();
        let store = Store::create(dir, &mut state).unwrap();
        Shared::new(store, state, "tok")
    }

    #[tokio::test]
    async fn busy_writer_answers_conflict() {
        let dir = tempfile::tempdir().unwrap();
        let shared = shared(dir.path());
        let _held = shared.writer.try_lock().unwrap();
        let response = router(shared.clone())
            .oneshot(
                Request::post("/api/rounds")
                    .header(header::AUTHORIZATION, "Bearer tok")
                    .body(Body::empty())
                    .unwrap(),
            )
            .await
            .unwrap();
        assert_eq!(response.status(), StatusCode::CONFLICT);
        assert!(shared.current().rounds.is_empty());
    }
}
