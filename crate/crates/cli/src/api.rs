//! HTTP+JSON API. All endpoints live under `/api`; everything else is the
//! workbench's static assets.
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | GET | `/api/catalog` | `?query=&scope=` | `{entries, truncated}` |
//! | POST | `/api/query` | `{query}` | `{result: {kind, columns, rows, total_rows, next_cursor}, profile, subqueries, diagnostics}` |
//! | GET | `/api/query/rows` | `?cursor=` | `{rows, total_rows, next_cursor}` |
//! | GET | `/api/store` | | the store document |
//! | PUT | `/api/store/queries/{name}` | `{query, description?}` | the stored query |
//! | DELETE | `/api/store/queries/{name}` | | 204 |
//! | GET | `/api/store/history` | | `{history}` |
//! | POST | `/api/assistant/generate` | `{instruction}` | assistant outcome |
//! | POST | `/api/assistant/explain` | `{query}` | assistant outcome |
//! | POST | `/api/assistant/fix` | `{query, error}` | assistant outcome |
//! | GET | `/api/meta` | | dataset summary, grammar word lists, version |
//!
//! Errors are `{"error": {"kind", "message", "span"?, ...}}` with status 400
//! (malformed request), 404, 410 (expired cursor), 422 (parse/evaluation),
//! 502 (assistant provider), 503 (no provider configured) or 500 (opaque id).

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value as Json_};
use sha2::{Digest, Sha256};
use tempoql::dataset::{search_concepts, Dataset};
use tempoql::eval::{evaluate, EvalError, StoreBindings};
use tempoql::export::header;
use tempoql::lang::{self, parse, ParseError};
use tempoql::profile::profile_result;
use tempoql::series::Data;
use tempoql::store::{QueryStore, StoreError};
use tempoql_assistant::{run_tool_loop, Flow, Provider, ProviderConfig};
use tokio::sync::Semaphore;
use tower_http::catch_panic::CatchPanicLayer;
use tower_http::services::ServeDir;

pub const PAGE_SIZE: usize = 200;
pub const CURSOR_TTL: Duration = Duration::from_secs(600);
pub const ASSISTANT_SESSIONS: usize = 4;

const PLACEHOLDER: &str = include_str!("../assets/index.html");

pub struct AssistantState {
    pub provider: Arc<dyn Provider>,
    pub config: ProviderConfig,
    sessions: Semaphore,
}

impl AssistantState {
    pub fn new(config: ProviderConfig, provider: Arc<dyn Provider>) -> Self {
        AssistantState { provider, config, sessions: Semaphore::new(ASSISTANT_SESSIONS) }
    }
}

/// Shared, read-mostly service state. The dataset never changes; store
/// mutations go through one async mutex, which queues them in order.
pub struct AppState {
    pub dataset: Arc<Dataset>,
    store_path: Option<PathBuf>,
    store: tokio::sync::Mutex<QueryStore>,
    cache: Mutex<HashMap<String, (Arc<Data>, Instant)>>,
    assistant: Option<AssistantState>,
    assets: Option<PathBuf>,
}

impl AppState {
    pub fn new(dataset: Dataset, store: QueryStore, store_path: Option<PathBuf>) -> Self {
        AppState {
            dataset: Arc::new(dataset),
            store_path,
            store: tokio::sync::Mutex::new(store),
            cache: Mutex::new(HashMap::new()),
            assistant: None,
            assets: None,
        }
    }

    pub fn with_assistant(mut self, assistant: AssistantState) -> Self {
        self.assistant = Some(assistant);
        self
    }

    pub fn with_assets(mut self, dir: PathBuf) -> Self {
        self.assets = Some(dir);
        self
    }
}

type Shared = Arc<AppState>;

// ---- errors -------------------------------------------------------------------------------

pub struct ApiError {
    status: StatusCode,
    body: Json_,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: json!({"kind": kind, "message": message.into()}) }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    /// Logs the detail server-side and returns only an id.
    fn internal(detail: impl std::fmt::Display) -> Self {
        let id = uuid::Uuid::new_v4().simple().to_string();
        eprintln!("error {id}: {detail}");
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, body: json!({"kind": "internal", "message": "internal error", "id": id}) }
    }
}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({"kind": "parse", "message": e.message, "span": e.span, "expected": e.expected, "hint": e.hint}),
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({"kind": e.kind, "message": e.message, "span": e.span}),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Parse { error, .. } => error.into(),
            StoreError::InvalidName(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_name", e.to_string()),
            StoreError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            other => Self::internal(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.body}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Request bodies are parsed by hand so that every malformed body,
/// including a missing field, is a 400.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)
}

// ---- catalog / meta -----------------------------------------------------------------------

#[derive(Deserialize)]
struct CatalogParams {
    #[serde(default)]
    query: String,
    scope: Option<String>,
}

async fn catalog(State(s): State<Shared>, Query(p): Query<CatalogParams>) -> ApiResult<Json<Json_>> {
    let scope = p.scope.as_deref().filter(|s| !s.is_empty());
    let r = search_concepts(&s.dataset.catalog, &p.query, scope)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "search", e.to_string()))?;
    Ok(Json(json!(r)))
}

async fn meta(State(s): State<Shared>) -> Json<Json_> {
    Json(json!({
        "version": env!("CARGO_PKG_VERSION"),
        "dataset": s.dataset.summary(),
        "keywords": lang::KEYWORDS,
        "aggregation_functions": lang::AGGREGATION_FUNCTIONS,
        "builtin_functions": lang::BUILTIN_FUNCTIONS,
        "interval_modes": lang::INTERVAL_MODES,
        "markers": lang::MARKERS,
        "assistant": s.assistant.is_some(),
    }))
}

// ---- query ---------------------------------------------------------------------------------

#[derive(Deserialize)]
struct QueryBody {
    query: String,
}

fn cache_key(query: &str, bindings: &StoreBindings, fingerprint: &str) -> String {
    let mut h = Sha256::new();
    for part in [query, &serde_json::to_string(bindings).unwrap_or_default(), fingerprint] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    hex::encode(&h.finalize()[..16])
}

fn page(data: &Data, key: &str, offset: usize) -> Json_ {
    let end = (offset + PAGE_SIZE).min(data.len());
    json!({
        "rows": crate::rows::json_rows(data, offset.min(end)..end),
        "total_rows": data.len(),
        "next_cursor": (end < data.len()).then(|| format!("{key}.{end}")),
    })
}

impl AppState {
    fn cache_put(&self, key: &str, data: Arc<Data>) {
        let mut cache = self.cache.lock().unwrap();
        let now = Instant::now();
        cache.retain(|_, (_, at)| now.duration_since(*at) < CURSOR_TTL);
        cache.insert(key.to_string(), (data, now));
    }

    fn cache_get(&self, key: &str) -> Option<Arc<Data>> {
        let cache = self.cache.lock().unwrap();
        cache.get(key).filter(|(_, at)| at.elapsed() < CURSOR_TTL).map(|(d, _)| d.clone())
    }

    async fn record(&self, query: &str, ok: bool) -> ApiResult<()> {
        let mut store = self.store.lock().await;
        store.record_history(query, ok);
        self.persist(&store)
    }

    fn persist(&self, store: &QueryStore) -> ApiResult<()> {
        match &self.store_path {
            Some(p) => store.save(p).map_err(ApiError::internal),
            None => Ok(()),
        }
    }
}

async fn run_query(State(s): State<Shared>, bytes: Bytes) -> ApiResult<Json<Json_>> {
    let QueryBody { query } = body(&bytes)?;
    let ast = match parse(&query) {
        Ok(ast) => ast,
        Err(e) => {
            s.record(&query, false).await?;
            return Err(e.into());
        }
    };
    let bindings = s.store.lock().await.bindings();
    let key = cache_key(&query, &bindings, &s.dataset.fingerprint);
    let ds = s.dataset.clone();
    let outcome = blocking(move || evaluate(&ast, &ds, &bindings)).await?;
    s.record(&query, outcome.is_ok()).await?;
    let mut qr = outcome?;
    let bundle = profile_result(&qr);
    let data = Arc::new(std::mem::replace(&mut qr.result, Data::Scalar(Default::default())));
    s.cache_put(&key, data.clone());
    let mut result = page(&data, &key, 0);
    result["kind"] = json!(data.kind());
    result["columns"] = json!(header(&data));
    Ok(Json(json!({
        "result": result,
        "profile": bundle.result,
        "subqueries": bundle.subqueries,
        "diagnostics": qr.diagnostics,
    })))
}

#[derive(Deserialize)]
struct RowsParams {
    cursor: String,
}

async fn more_rows(State(s): State<Shared>, Query(p): Query<RowsParams>) -> ApiResult<Json<Json_>> {
    let (key, offset) = p
        .cursor
        .split_once('.')
        .and_then(|(k, o)| Some((k, o.parse::<usize>().ok()?)))
        .ok_or_else(|| ApiError::bad_request("malformed cursor"))?;
    let data = s
        .cache_get(key)
        .ok_or_else(|| ApiError::new(StatusCode::GONE, "expired_cursor", "cursor expired or unknown; run the query again"))?;
    Ok(Json(page(&data, key, offset)))
}

// ---- store ---------------------------------------------------------------------------------

async fn get_store(State(s): State<Shared>) -> Json<Json_> {
    let store = s.store.lock().await;
    Json(json!({"version": store.version, "queries": store.queries}))
}

async fn get_history(State(s): State<Shared>) -> Json<Json_> {
    Json(json!({"history": s.store.lock().await.history}))
}

#[derive(Deserialize)]
struct PutBody {
    query: String,
    description: Option<String>,
}

async fn put_query(State(s): State<Shared>, Path(name): Path<String>, bytes: Bytes) -> ApiResult<Json<Json_>> {
    let PutBody { query, description } = body(&bytes)?;
    let mut store = s.store.lock().await;
    store.upsert(&name, &query, description)?;
    s.persist(&store)?;
    Ok(Json(json!(store.get(&name))))
}

async fn delete_query(State(s): State<Shared>, Path(name): Path<String>) -> ApiResult<StatusCode> {
    let mut store = s.store.lock().await;
    store.remove(&name)?;
    s.persist(&store)?;
    Ok(StatusCode::NO_CONTENT)
}

// ---- assistant -----------------------------------------------------------------------------

#[derive(Deserialize)]
struct GenerateBody {
    instruction: String,
}

#[derive(Deserialize)]
struct ExplainBody {
    query: String,
}

#[derive(Deserialize)]
struct FixBody {
    query: String,
    error: String,
}

async fn assist(s: Shared, flow: Flow) -> ApiResult<Json<Json_>> {
    let Some(a) = &s.assistant else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_provider", "no assistant provider is configured"));
    };
    let _permit = a.sessions.acquire().await.map_err(ApiError::internal)?;
    let (provider, model, cap) = (a.provider.clone(), a.config.model.clone(), a.config.max_iterations);
    let ds = s.dataset.clone();
    let outcome = blocking(move || run_tool_loop(&flow, &ds.spec, &ds.catalog, provider.as_ref(), &model, cap)).await?;
    let outcome = outcome.map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, "provider", e.to_string()))?;
    Ok(Json(json!(outcome)))
}

async fn generate(State(s): State<Shared>, bytes: Bytes) -> ApiResult<Json<Json_>> {
    let GenerateBody { instruction } = body(&bytes)?;
    assist(s, Flow::Generate { instruction }).await
}

async fn explain(State(s): State<Shared>, bytes: Bytes) -> ApiResult<Json<Json_>> {
    let ExplainBody { query } = body(&bytes)?;
    assist(s, Flow::Explain { query }).await
}

async fn fix(State(s): State<Shared>, bytes: Bytes) -> ApiResult<Json<Json_>> {
    let FixBody { query, error } = body(&bytes)?;
    assist(s, Flow::Fix { query, error }).await
}

// ---- router --------------------------------------------------------------------------------

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

fn panic_response(_: Box<dyn std::any::Any + Send + 'static>) -> Response {
    ApiError::internal("handler panicked").into_response()
}

pub fn router(state: AppState) -> Router {
    let assets = state.assets.clone();
    let api = Router::new()
        .route("/catalog", get(catalog))
        .route("/meta", get(meta))
        .route("/query", post(run_query))
        .route("/query/rows", get(more_rows))
        .route("/store", get(get_store))
        .route("/store/history", get(get_history))
        .route("/store/queries/{name}", put(put_query).delete(delete_query))
        .route("/assistant/generate", post(generate))
        .route("/assistant/explain", post(explain))
        .route("/assistant/fix", post(fix))
        .fallback(api_not_found);
    let app = Router::new().nest("/api", api);
    let app = match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
    };
    app.layer(CatchPanicLayer::custom(panic_response)).with_state(Arc::new(state))
}

pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("tempoql listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
