//! JSON HTTP API over a loaded corpus.
//!
//! The corpus is fixed for the lifetime of the server. Lexicons and the
//! components extracted with them live together in one immutable snapshot
//! that is swapped whole on every edit, stamped with a generation number,
//! so a reader never sees components from one lexicon set mixed with
//! another. Session mutations are serialized per session id.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::aggregate::{aggregate, contrast_report, render_table, table_json, FrequencyTable, TableFormat};
use crate::clustering::{cluster_components, KMeansParams};
use crate::coding::{export_codebook, open_session, CodebookFormat, CodingError, CodingSession, SessionStore};
use crate::corpus::{corpus_stats, Corpus};
use crate::embedding::VectorStore;
use crate::extraction::FramingComponent;
use crate::lexicon::{build_lexicon, to_config, ConfigEntry, EntityLexicon, KeywordMatch};
use crate::pipeline::{extract, summarize};
use crate::{Error, Result};

pub const DEFAULT_PAGE_SIZE: usize = 200;

/// Everything the server needs at startup.
pub struct ServerConfig {
    pub corpus: Corpus,
    pub lexicons: Vec<EntityLexicon>,
    pub sessions: SessionStore,
    pub vectors: Option<VectorStore>,
    pub ui: Option<PathBuf>,
}

/// Lexicons together with the components they produced.
pub struct Snapshot {
    pub generation: u64,
    pub lexicons: Vec<EntityLexicon>,
    pub components: Vec<FramingComponent>,
    pub table: FrequencyTable,
}

impl Snapshot {
    fn build(generation: u64, corpus: &Corpus, lexicons: Vec<EntityLexicon>) -> Snapshot {
        let components = extract(corpus, &lexicons);
        let table = aggregate(&components);
        Snapshot {
            generation,
            lexicons,
            components,
            table,
        }
    }
}

pub struct AppState {
    corpus: Arc<Corpus>,
    snapshot: RwLock<Arc<Snapshot>>,
    /// Serializes lexicon edits and re-extractions.
    edit: tokio::sync::Mutex<()>,
    sessions: SessionStore,
    session_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    vectors: Option<Arc<VectorStore>>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> AppState {
        let snapshot = Snapshot::build(0, &config.corpus, config.lexicons);
        AppState {
            corpus: Arc::new(config.corpus),
            snapshot: RwLock::new(Arc::new(snapshot)),
            edit: tokio::sync::Mutex::new(()),
            sessions: config.sessions,
            session_locks: Mutex::new(HashMap::new()),
            vectors: config.vectors.map(Arc::new),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.session_locks
            .lock()
            .expect("session lock table")
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    /// Re-extracts with `lexicons` and publishes the result as the next
    /// generation. Caller must hold `edit`.
    async fn publish(self: &Arc<Self>, lexicons: Vec<EntityLexicon>) -> Result<Arc<Snapshot>, ApiError> {
        let generation = self.snapshot().generation + 1;
        let corpus = self.corpus.clone();
        let next = tokio::task::spawn_blocking(move || Snapshot::build(generation, &corpus, lexicons))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let next = Arc::new(next);
        *self.snapshot.write().expect("snapshot lock") = next.clone();
        Ok(next)
    }
}

/// The `{"error": {"code", "message"}}` envelope.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

/// `UnknownEntity("x")` becomes `unknown_entity`.
fn variant_code(debug: &str) -> String {
    let name = debug.split(['(', ' ', '{']).next().unwrap_or(debug);
    let mut out = String::new();
    for (i, ch) in name.chars().enumerate() {
        if ch.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(ch.to_ascii_lowercase());
        } else {
            out.push(ch);
        }
    }
    out
}

impl From<Error> for ApiError {
    fn from(e: Error) -> ApiError {
        use crate::aggregate::AggregateError as A;
        use crate::clustering::ClusterError as K;
        use crate::lexicon::LexiconError as L;
        let (status, code) = match &e {
            Error::Coding(c) => (
                match c {
                    CodingError::NotFound(_)
                    | CodingError::UnknownGroup(_)
                    | CodingError::UnknownPair { .. }
                    | CodingError::NoComponents(_) => StatusCode::NOT_FOUND,
                    CodingError::DuplicateLabel(_) => StatusCode::CONFLICT,
                    CodingError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
                    _ => StatusCode::BAD_REQUEST,
                },
                variant_code(&format!("{c:?}")),
            ),
            Error::Lexicon(l) => (
                if matches!(l, L::UnknownEntity(_)) { StatusCode::NOT_FOUND } else { StatusCode::BAD_REQUEST },
                variant_code(&format!("{l:?}")),
            ),
            Error::Aggregate(a) => (
                if matches!(a, A::UnknownEntity(_)) { StatusCode::NOT_FOUND } else { StatusCode::BAD_REQUEST },
                variant_code(&format!("{a:?}")),
            ),
            Error::Cluster(k) => (
                if matches!(k, K::UnknownEntity(_)) { StatusCode::NOT_FOUND } else { StatusCode::BAD_REQUEST },
                variant_code(&format!("{k:?}")),
            ),
            Error::Json(_) => (StatusCode::BAD_REQUEST, "invalid_json".to_string()),
            Error::Io { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "io".to_string()),
            other => (StatusCode::BAD_REQUEST, variant_code(&format!("{other:?}"))),
        };
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

macro_rules! impl_from_module_error {
    ($($t:ty),*) => {$(
        impl From<$t> for ApiError {
            fn from(e: $t) -> ApiError {
                Error::from(e).into()
            }
        }
    )*};
}
impl_from_module_error!(
    CodingError,
    crate::lexicon::LexiconError,
    crate::aggregate::AggregateError,
    crate::clustering::ClusterError
);

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", r.body_text())
    }
}

type Shared = State<Arc<AppState>>;
type ApiResult<T = Response> = std::result::Result<T, ApiError>;

pub fn router(state: Arc<AppState>, ui: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/stats", get(stats))
        .route("/lexicons", get(lexicons))
        .route("/lexicons/{entity}", put(put_lexicon).patch(put_lexicon))
        .route("/extract", post(re_extract))
        .route("/components", get(components))
        .route("/sentences/{doc_id}/{sent_id}", get(sentence))
        .route("/tables/{entity}", get(table))
        .route("/contrast/{entity}", get(contrast))
        .route("/cluster", post(cluster))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/assign", post(assign))
        .route("/sessions/{id}/unassign", post(unassign))
        .route("/sessions/{id}/merge", post(merge))
        .route("/sessions/{id}/note", post(note))
        .route("/sessions/{id}/codebook", get(codebook))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api.fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") }),
    }
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn stats(State(s): Shared) -> Json<Value> {
    Json(serde_json::to_value(corpus_stats(&s.corpus)).expect("stats serialize"))
}

async fn lexicons(State(s): Shared) -> Json<Value> {
    Json(to_config(&s.snapshot().lexicons))
}

#[derive(Deserialize)]
struct LexiconBody {
    keywords: Vec<String>,
    relations: Vec<String>,
    #[serde(default)]
    keyword_match: Option<KeywordMatch>,
}

/// Creates or replaces one entity's lexicon and re-extracts.
async fn put_lexicon(
    State(s): Shared,
    Path(entity): Path<String>,
    body: std::result::Result<Json<LexiconBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    let _edit = s.edit.lock().await;
    let mut lexicons = s.snapshot().lexicons.clone();
    let existing = lexicons.iter().position(|l| l.entity == entity.to_lowercase());
    let mut warnings = Vec::new();
    let lex = build_lexicon(
        ConfigEntry {
            entity,
            keywords: body.keywords,
            relations: body.relations,
            keyword_match: body
                .keyword_match
                .or(existing.map(|i| lexicons[i].keyword_match))
                .unwrap_or_default(),
        },
        &mut warnings,
    )?;
    let entry = ConfigEntry::from(&lex);
    match existing {
        Some(i) => lexicons[i] = lex,
        None => lexicons.push(lex),
    }
    let snap = s.publish(lexicons).await?;
    Ok(Json(json!({
        "generation": snap.generation,
        "lexicon": entry,
        "warnings": warnings,
        "summary": summarize(&snap.components),
    })))
}

async fn re_extract(State(s): Shared) -> ApiResult<Json<Value>> {
    let _edit = s.edit.lock().await;
    let lexicons = s.snapshot().lexicons.clone();
    let snap = s.publish(lexicons).await?;
    Ok(Json(json!({"generation": snap.generation, "summary": summarize(&snap.components)})))
}

#[derive(Deserialize, Default)]
struct ComponentQuery {
    entity: Option<String>,
    outlet: Option<String>,
    relation: Option<String>,
    modifier: Option<String>,
    page: Option<usize>,
    per_page: Option<usize>,
}

#[derive(Serialize)]
struct ComponentPage<'a> {
    generation: u64,
    total: usize,
    page: usize,
    per_page: usize,
    pages: usize,
    components: Vec<&'a FramingComponent>,
}

/// Filtered components, 1-based pages.
async fn components(State(s): Shared, q: std::result::Result<Query<ComponentQuery>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    let page = q.page.unwrap_or(1);
    let per_page = q.per_page.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 || per_page == 0 {
        return Err(ApiError::bad_request("page and per_page start at 1"));
    }
    let snap = s.snapshot();
    let keep = |field: &str, want: &Option<String>| want.as_deref().is_none_or(|w| w == field);
    let matching: Vec<&FramingComponent> = snap
        .components
        .iter()
        .filter(|c| {
            keep(&c.entity, &q.entity)
                && keep(&c.outlet, &q.outlet)
                && keep(&c.relation, &q.relation)
                && keep(&c.modifier, &q.modifier)
        })
        .collect();
    let total = matching.len();
    let body = ComponentPage {
        generation: snap.generation,
        total,
        page,
        per_page,
        pages: total.div_ceil(per_page),
        components: matching.into_iter().skip((page - 1) * per_page).take(per_page).collect(),
    };
    Ok(Json(body).into_response())
}

/// Source sentence of a component, for provenance display.
async fn sentence(State(s): Shared, Path((doc_id, sent_id)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    let sentence = s
        .corpus
        .document(&doc_id)
        .and_then(|d| d.sentence(&sent_id))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_sentence", format!("{doc_id}/{sent_id}")))?;
    Ok(Json(serde_json::to_value(sentence).expect("sentence serializes")))
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

fn text_response(content_type: &'static str, body: String) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

/// JSON by default; `md` and `csv` come back as text.
async fn table(
    State(s): Shared,
    Path(entity): Path<String>,
    q: std::result::Result<Query<FormatQuery>, QueryRejection>,
) -> ApiResult {
    let Query(q) = q?;
    let format: TableFormat = q.format.as_deref().unwrap_or("json").parse()?;
    let snap = s.snapshot();
    Ok(match format {
        TableFormat::Json => Json(table_json(&snap.table, &entity)?).into_response(),
        TableFormat::Markdown => text_response("text/markdown; charset=utf-8", render_table(&snap.table, &entity, format)?),
        TableFormat::Csv => text_response("text/csv; charset=utf-8", render_table(&snap.table, &entity, format)?),
    })
}

async fn contrast(State(s): Shared, Path(entity): Path<String>) -> ApiResult<Json<Value>> {
    let rows = contrast_report(&s.snapshot().table, &entity)?;
    Ok(Json(serde_json::to_value(rows).expect("rows serialize")))
}

#[derive(Deserialize)]
struct ClusterBody {
    entity: String,
    k: usize,
    seed: u64,
    #[serde(default)]
    relation: Option<String>,
}

async fn cluster(State(s): Shared, body: std::result::Result<Json<ClusterBody>, JsonRejection>) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    let store = s.vectors.clone().ok_or_else(|| {
        ApiError::new(StatusCode::CONFLICT, "no_vectors", "server was started without a vector file")
    })?;
    let snap = s.snapshot();
    let report = tokio::task::spawn_blocking(move || {
        cluster_components(
            &snap.components,
            &store,
            &body.entity,
            body.relation.as_deref(),
            KMeansParams::new(body.k, body.seed),
        )
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(serde_json::to_value(report).expect("report serializes")))
}

async fn list_sessions(State(s): Shared) -> ApiResult<Json<Value>> {
    let mut ids = Vec::new();
    let entries = std::fs::read_dir(s.sessions.dir()).map_err(|e| Error::io(s.sessions.dir(), e))?;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix(".json") {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(Json(json!({"sessions": ids})))
}

#[derive(Deserialize)]
struct NewSession {
    entity: String,
    #[serde(default)]
    session_id: Option<String>,
}

async fn create_session(State(s): Shared, body: std::result::Result<Json<NewSession>, JsonRejection>) -> ApiResult<Response> {
    let Json(body) = body?;
    let id = match body.session_id {
        Some(id) => id,
        None => {
            let base = format!("{}-{}", body.entity, chrono::Utc::now().format("%Y%m%d%H%M%S"));
            let mut id = base.clone();
            let mut n = 1;
            while s.sessions.exists(&id) {
                n += 1;
                id = format!("{base}-{n}");
            }
            id
        }
    };
    let lock = s.session_lock(&id);
    let _guard = lock.lock().await;
    if s.sessions.exists(&id) {
        return Err(ApiError::new(StatusCode::CONFLICT, "session_exists", format!("session {id} already exists")));
    }
    let session = open_session(&s.snapshot().components, &body.entity, &id)?;
    let store = s.sessions.clone();
    let saved = session.clone();
    tokio::task::spawn_blocking(move || store.save(&saved))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

/// The stored session, flagged stale when the current components differ
/// from the ones it was opened against.
async fn get_session(State(s): Shared, Path(id): Path<String>) -> ApiResult<Json<CodingSession>> {
    let mut session = s.sessions.load(&id)?;
    session.reopen(&s.snapshot().components);
    Ok(Json(session))
}

/// Applies one mutation under the per-session lock and the file lock.
async fn mutate(
    s: Arc<AppState>,
    id: String,
    f: impl FnOnce(&mut CodingSession) -> std::result::Result<(), CodingError> + Send + 'static,
) -> ApiResult<Json<CodingSession>> {
    let lock = s.session_lock(&id);
    let _guard = lock.lock().await;
    let store = s.sessions.clone();
    let snap = s.snapshot();
    let (session, ()) = tokio::task::spawn_blocking(move || {
        store.update(&id, |session| {
            session.reopen(&snap.components);
            f(session)
        })
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(session))
}

#[derive(Deserialize)]
struct PairBody {
    modifier: String,
    relation: String,
    label: String,
}

async fn assign(
    State(s): Shared,
    Path(id): Path<String>,
    body: std::result::Result<Json<PairBody>, JsonRejection>,
) -> ApiResult<Json<CodingSession>> {
    let Json(b) = body?;
    mutate(s, id, move |session| session.assign(&b.modifier, &b.relation, &b.label)).await
}

async fn unassign(
    State(s): Shared,
    Path(id): Path<String>,
    body: std::result::Result<Json<PairBody>, JsonRejection>,
) -> ApiResult<Json<CodingSession>> {
    let Json(b) = body?;
    mutate(s, id, move |session| session.unassign(&b.modifier, &b.relation, &b.label)).await
}

#[derive(Deserialize)]
struct MergeBody {
    a: String,
    b: String,
    new_label: String,
}

async fn merge(
    State(s): Shared,
    Path(id): Path<String>,
    body: std::result::Result<Json<MergeBody>, JsonRejection>,
) -> ApiResult<Json<CodingSession>> {
    let Json(b) = body?;
    mutate(s, id, move |session| session.merge_groups(&b.a, &b.b, &b.new_label)).await
}

#[derive(Deserialize)]
struct NoteBody {
    label: String,
    note: String,
}

async fn note(
    State(s): Shared,
    Path(id): Path<String>,
    body: std::result::Result<Json<NoteBody>, JsonRejection>,
) -> ApiResult<Json<CodingSession>> {
    let Json(b) = body?;
    mutate(s, id, move |session| session.set_note(&b.label, &b.note)).await
}

async fn codebook(
    State(s): Shared,
    Path(id): Path<String>,
    q: std::result::Result<Query<FormatQuery>, QueryRejection>,
) -> ApiResult {
    let Query(q) = q?;
    let session = s.sessions.load(&id)?;
    let table = &s.snapshot().table;
    match q.format.as_deref().unwrap_or("json") {
        "json" => {
            let text = export_codebook(&session, table, CodebookFormat::Json);
            let value: Value = serde_json::from_str(&text).map_err(Error::from)?;
            Ok(Json(value).into_response())
        }
        "md" | "markdown" => Ok(text_response(
            "text/markdown; charset=utf-8",
            export_codebook(&session, table, CodebookFormat::Markdown),
        )),
        other => Err(ApiError::bad_request(format!("unknown codebook format {other:?}"))),
    }
}

/// A server running on its own runtime thread; stops when dropped.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))
}

fn bind_std(bind: &str) -> Result<std::net::TcpListener> {
    let listener = std::net::TcpListener::bind(bind).map_err(|e| Error::io(bind, e))?;
    listener.set_nonblocking(true).map_err(|e| Error::io(bind, e))?;
    Ok(listener)
}

/// Binds `bind` (port 0 picks a free one) and serves in the background.
pub fn spawn(config: ServerConfig, bind: &str) -> Result<RunningServer> {
    let listener = bind_std(bind)?;
    let addr = listener.local_addr().map_err(|e| Error::io(bind, e))?;
    let ui = config.ui.clone();
    let state = Arc::new(AppState::new(config));
    let app = router(state.clone(), ui);
    let rt = runtime()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener registers");
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        })
    });
    Ok(RunningServer {
        addr,
        state,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Serves until interrupted.
pub fn run(config: ServerConfig, bind: &str) -> Result<()> {
    let listener = bind_std(bind)?;
    let addr = listener.local_addr().map_err(|e| Error::io(bind, e))?;
    let ui = config.ui.clone();
    let app = router(Arc::new(AppState::new(config)), ui);
    log::info!("listening on http://{addr}");
    eprintln!("listening on http://{addr}");
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener).map_err(|e| Error::io(bind, e))?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Error::io(bind, e))
    })
}
