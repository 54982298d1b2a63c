//! HTTP JSON API over a knowledge base and an on-disk image index: KB
//! inspection, image tagging and fuzzy emotion search.

pub mod index;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query as UrlQuery, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chromaffect::color::{BasicColorMapping, FuzzyColor, FuzzyColorSpace};
use chromaffect::config::{fingerprint, MappingConfig, PartitionConfig};
use chromaffect::corpus::{sha256_hex, FetchClient};
use chromaffect::emotion::EmotionLabel;
use chromaffect::kb::{load_kb, KnowledgeBase};
use chromaffect::palette::{decode, dominant_palette, image_histogram, normalize, FuzzyPalette, ResizeFilter};
use chromaffect::scoring::{match_query, score_emotions, Query, QueryIntensity};
use chromaffect::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use index::{IndexDir, IndexEntry, IndexError};

pub const MAX_UPLOAD_BYTES: usize = 64 << 20;
pub const DEFAULT_LIMIT: usize = 20;

/// Fixed color semantics shared by every request.
pub struct Engine {
    pub space: FuzzyColorSpace,
    pub mapping: BasicColorMapping,
    pub query_intensity: QueryIntensity,
    pub fingerprint: String,
    pub filter: ResizeFilter,
}

impl Engine {
    pub fn new(partitions: &PartitionConfig, mapping: &MappingConfig) -> chromaffect::Result<Self> {
        Ok(Self {
            space: FuzzyColorSpace::from_config(partitions)?,
            mapping: BasicColorMapping::from_config(mapping)?,
            query_intensity: QueryIntensity::from_config(partitions)?,
            fingerprint: fingerprint(partitions, mapping),
            filter: ResizeFilter::default(),
        })
    }

    /// Palette of encoded image bytes under this engine.
    pub fn palette(&self, bytes: &[u8], k: usize) -> chromaffect::Result<FuzzyPalette> {
        let img = normalize(decode(bytes)?, self.filter)?;
        dominant_palette(&image_histogram(img.as_rgb(), &self.space), k)
    }

    /// Display color of a fuzzy color: its kernel point in RGB.
    pub fn swatch(&self, c: FuzzyColor) -> String {
        let p = self.space.representative_rgb(c);
        format!("#{:02x}{:02x}{:02x}", p.r, p.g, p.b)
    }
}

/// Stable digest of a knowledge base's content.
pub fn kb_digest(kb: &KnowledgeBase) -> String {
    format!(
        "sha256:{}",
        sha256_hex(&serde_json::to_vec(kb).expect("knowledge base serializes"))
    )
}

/// Everything a request reads, swapped as one unit.
#[derive(Clone, Default)]
pub struct Snapshot {
    pub kb: Option<Arc<KnowledgeBase>>,
    pub kb_digest: String,
    pub entries: Arc<BTreeMap<String, IndexEntry>>,
}

pub struct AppState {
    pub engine: Engine,
    pub index: IndexDir,
    pub kb_path: Option<PathBuf>,
    pub fetch: Option<FetchClient>,
    snapshot: RwLock<Arc<Snapshot>>,
    writes: tokio::sync::Mutex<()>,
}

#[derive(Clone, Debug, Default)]
pub struct ServiceOptions {
    pub kb_path: Option<PathBuf>,
    pub index_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

impl AppState {
    /// Open the index, load the KB if a path is given, and bring stored
    /// scores up to date with it.
    pub fn open(engine: Engine, opts: &ServiceOptions) -> Result<Arc<Self>, ServiceError> {
        let index = IndexDir::open(&opts.index_dir)?;
        let entries = index.load_all()?;
        let fetch = match &opts.cache_dir {
            Some(dir) => Some(FetchClient::new(dir)?),
            None => None,
        };
        let state = Arc::new(Self {
            engine,
            index,
            kb_path: opts.kb_path.clone(),
            fetch,
            snapshot: RwLock::new(Arc::new(Snapshot {
                entries: Arc::new(entries),
                ..Snapshot::default()
            })),
            writes: tokio::sync::Mutex::new(()),
        });
        if let Some(path) = &opts.kb_path {
            let kb = load_kb(path, Some(&state.engine.fingerprint))?;
            state.install_kb(kb)?;
        }
        Ok(state)
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap().clone()
    }

    fn swap(&self, s: Snapshot) {
        *self.snapshot.write().unwrap() = Arc::new(s);
    }

    fn entry_for(&self, id: &str, source: String, palette: FuzzyPalette, kb: &KnowledgeBase, digest: &str) -> IndexEntry {
        let scores = score_emotions(&palette, kb);
        IndexEntry {
            id: id.to_string(),
            source,
            predicted: scores.predicted().map(|e| e.to_string()),
            swatches: palette.colors().map(|c| self.engine.swatch(c)).collect(),
            palette,
            scores,
            kb_digest: digest.to_string(),
            thumbnail: format!("/thumbnails/{id}.png"),
        }
    }

    /// Replace the KB, rescoring every entry computed under another one.
    /// Returns the number of rescored entries. Callers serialize writes.
    fn install_kb(&self, kb: KnowledgeBase) -> Result<usize, ServiceError> {
        if kb.fingerprint != self.engine.fingerprint {
            return Err(CoreError::FingerprintMismatch {
                expected: self.engine.fingerprint.clone(),
                found: kb.fingerprint,
            }
            .into());
        }
        let digest = kb_digest(&kb);
        let old = self.snapshot();
        let mut entries = (*old.entries).clone();
        let mut rescored = 0;
        for e in entries.values_mut() {
            if e.kb_digest != digest {
                *e = self.entry_for(&e.id, e.source.clone(), e.palette.clone(), &kb, &digest);
                self.index.write_entry(e)?;
                rescored += 1;
            }
        }
        self.swap(Snapshot {
            kb: Some(Arc::new(kb)),
            kb_digest: digest,
            entries: Arc::new(entries),
        });
        Ok(rescored)
    }

    pub async fn reload(&self, kb: KnowledgeBase) -> Result<usize, ServiceError> {
        let _guard = self.writes.lock().await;
        self.install_kb(kb)
    }

    /// Tag and index an encoded image.
    pub async fn add_image(&self, bytes: Vec<u8>, source: String) -> Result<IndexEntry, ServiceError> {
        let snap = self.snapshot();
        if snap.kb.is_none() {
            return Err(ServiceError::NoKb);
        }
        let id = sha256_hex(&bytes);
        if snap.entries.contains_key(&id) {
            return Err(ServiceError::Duplicate(id));
        }
        let img = decode(&bytes).map_err(ServiceError::BadImage)?;
        let normalized = normalize(img.clone(), self.engine.filter).map_err(ServiceError::BadImage)?;

        let _guard = self.writes.lock().await;
        // the KB may have been swapped while we waited
        let snap = self.snapshot();
        let kb = snap.kb.clone().ok_or(ServiceError::NoKb)?;
        if snap.entries.contains_key(&id) {
            return Err(ServiceError::Duplicate(id));
        }
        let hist = image_histogram(normalized.as_rgb(), &self.engine.space);
        let palette = dominant_palette(&hist, kb.params.k_image)?;
        let entry = self.entry_for(&id, source, palette, &kb, &snap.kb_digest);
        self.index.write_original(&id, &bytes)?;
        self.index.write_thumbnail(&id, &img)?;
        self.index.write_entry(&entry)?;
        let mut entries = (*snap.entries).clone();
        entries.insert(id, entry.clone());
        self.swap(Snapshot {
            kb: snap.kb.clone(),
            kb_digest: snap.kb_digest.clone(),
            entries: Arc::new(entries),
        });
        Ok(entry)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("no knowledge base loaded")]
    NoKb,
    #[error("image {0} is already indexed")]
    Duplicate(String),
    #[error("undecodable image: {0}")]
    BadImage(CoreError),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let msg = self.to_string();
        let (status, body) = match &self {
            ServiceError::NoKb => (StatusCode::SERVICE_UNAVAILABLE, json!({ "error": msg })),
            ServiceError::Duplicate(id) => (StatusCode::CONFLICT, json!({ "error": msg, "id": id })),
            ServiceError::BadImage(_) | ServiceError::BadRequest(_) => {
                (StatusCode::BAD_REQUEST, json!({ "error": msg }))
            }
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, json!({ "error": msg })),
            ServiceError::Core(CoreError::Query { token, reason }) => (
                StatusCode::BAD_REQUEST,
                json!({ "error": msg, "token": token, "reason": reason }),
            ),
            ServiceError::Core(CoreError::FingerprintMismatch { expected, found }) => (
                StatusCode::CONFLICT,
                json!({ "error": msg, "expected": expected, "found": found }),
            ),
            ServiceError::Core(
                CoreError::Malformed { .. } | CoreError::VersionMismatch { .. } | CoreError::Fetch { .. },
            ) => (StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": msg })),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": msg })),
        };
        if status.is_server_error() {
            tracing::error!("{msg}");
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Router {
    let cors = match cors_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => CorsLayer::new().allow_origin(AllowOrigin::exact(o)),
        None => CorsLayer::new().allow_origin(AllowOrigin::any()),
    }
    .allow_methods(tower_http::cors::Any)
    .allow_headers(tower_http::cors::Any);
    Router::new()
        .route("/health", get(health))
        .route("/images", post(post_image).get(list_images))
        .route("/images/{id}", get(get_image))
        .route("/emotions", get(list_emotions))
        .route("/emotions/{name}/palette", get(emotion_palette))
        .route("/search", get(search))
        .route("/kb/reload", post(reload_kb))
        .route("/thumbnails/{file}", get(thumbnail))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .layer(cors)
        .with_state(state)
}

async fn health(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let snap = st.snapshot();
    Json(json!({
        "status": "ok",
        "kb_loaded": snap.kb.is_some(),
        "fingerprint": st.engine.fingerprint,
        "kb_digest": snap.kb_digest,
        "images": snap.entries.len(),
    }))
}

#[derive(Deserialize)]
struct UrlBody {
    url: String,
}

async fn post_image(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<IndexEntry>)> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let (bytes, source) = if is_json {
        let req: UrlBody = serde_json::from_slice(&body)
            .map_err(|e| ServiceError::BadRequest(format!("expected {{\"url\": ...}}: {e}")))?;
        if st.snapshot().kb.is_none() {
            return Err(ServiceError::NoKb);
        }
        let st2 = st.clone();
        let url = req.url.clone();
        let bytes = tokio::task::spawn_blocking(move || match &st2.fetch {
            Some(f) => f.get(&url),
            None => FetchClient::new(FetchClient::default_cache_dir())?.get(&url),
        })
        .await
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        (bytes, req.url)
    } else {
        if body.is_empty() {
            return Err(ServiceError::BadRequest("empty body".into()));
        }
        (body.to_vec(), "upload".to_string())
    };
    let entry = st.add_image(bytes, source).await?;
    Ok((StatusCode::CREATED, Json(entry)))
}

#[derive(Serialize)]
struct ImageSummary<'a> {
    id: &'a str,
    source: &'a str,
    predicted: Option<&'a str>,
    thumbnail: &'a str,
}

async fn list_images(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let snap = st.snapshot();
    let items: Vec<_> = snap
        .entries
        .values()
        .map(|e| ImageSummary {
            id: &e.id,
            source: &e.source,
            predicted: e.predicted.as_deref(),
            thumbnail: &e.thumbnail,
        })
        .collect();
    Json(json!({ "images": items }))
}

async fn get_image(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<IndexEntry>> {
    st.snapshot()
        .entries
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ServiceError::NotFound(format!("no image {id}")))
}

fn loaded_kb(snap: &Snapshot) -> ApiResult<Arc<KnowledgeBase>> {
    snap.kb.clone().ok_or(ServiceError::NoKb)
}

async fn list_emotions(State(st): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    let kb = loaded_kb(&st.snapshot())?;
    let emotions: Vec<_> = kb
        .emotions
        .iter()
        .map(|(e, rec)| {
            json!({
                "emotion": e,
                "image_count": rec.palette.image_count,
                "palette_size": rec.palette.entries.len(),
                "basic_colors": rec.basic_colors,
            })
        })
        .collect();
    Ok(Json(json!({
        "fingerprint": kb.fingerprint,
        "basic_colors": chromaffect::color::BasicColor::ALL,
        "emotions": emotions,
    })))
}

async fn emotion_palette(
    State(st): State<Arc<AppState>>,
    Path(name): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let kb = loaded_kb(&st.snapshot())?;
    let unknown = || ServiceError::NotFound(format!("unknown emotion `{name}`"));
    let e: EmotionLabel = name.parse().map_err(|_| unknown())?;
    let rec = kb.emotions.get(&e).ok_or_else(unknown)?;
    let swatches: Vec<String> = rec.palette.colors().map(|c| st.engine.swatch(c)).collect();
    Ok(Json(json!({
        "emotion": e,
        "palette": rec.palette,
        "basic_colors": rec.basic_colors,
        "swatches": swatches,
    })))
}

#[derive(Debug, Default, Deserialize)]
pub struct SearchParams {
    pub q: Option<String>,
    pub emotion: Option<String>,
    pub intensity: Option<String>,
    pub hedges: Option<String>,
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

impl SearchParams {
    pub fn query(&self) -> chromaffect::Result<Query> {
        match (&self.q, &self.emotion) {
            (Some(q), _) => Query::parse(q),
            (None, Some(e)) => Query::from_parts(
                e,
                self.intensity.as_deref().unwrap_or(""),
                self.hedges.as_deref().unwrap_or(""),
            ),
            (None, None) => Err(CoreError::Query {
                token: String::new(),
                reason: "give either q or emotion and intensity".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
    pub degree: f64,
    pub predicted: Option<String>,
    pub thumbnail: String,
    pub palette: FuzzyPalette,
    pub swatches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: String,
    pub kb_digest: String,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub results: Vec<SearchHit>,
}

/// Rank the snapshot's images for a query.
pub fn run_search(engine: &Engine, snap: &Snapshot, params: &SearchParams) -> ApiResult<SearchResponse> {
    let query = params.query()?;
    let limit = params.limit.unwrap_or(DEFAULT_LIMIT);
    let offset = params.offset.unwrap_or(0);
    let ranked = match_query(
        &query,
        &engine.query_intensity,
        snap.entries.values().map(|e| (e.id.as_str(), &e.scores)),
    )?;
    let total = ranked.len();
    let results = ranked
        .into_iter()
        .skip(offset)
        .take(limit)
        .map(|m| {
            let e = &snap.entries[&m.id];
            SearchHit {
                predicted: e.predicted.clone(),
                thumbnail: e.thumbnail.clone(),
                palette: e.palette.clone(),
                swatches: e.swatches.clone(),
                id: m.id,
                score: m.score,
                degree: m.degree,
            }
        })
        .collect();
    Ok(SearchResponse {
        query: query.to_string(),
        kb_digest: snap.kb_digest.clone(),
        total,
        offset,
        limit,
        results,
    })
}

async fn search(
    State(st): State<Arc<AppState>>,
    UrlQuery(params): UrlQuery<SearchParams>,
) -> ApiResult<Json<SearchResponse>> {
    let snap = st.snapshot();
    Ok(Json(run_search(&st.engine, &snap, &params)?))
}

#[derive(Default, Deserialize)]
struct ReloadBody {
    path: Option<PathBuf>,
}

async fn reload_kb(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let req: ReloadBody = if body.is_empty() {
        ReloadBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(e.to_string()))?
    };
    let path = req
        .path
        .or_else(|| st.kb_path.clone())
        .ok_or_else(|| ServiceError::BadRequest("no knowledge base path configured".into()))?;
    let kb = load_kb(&path, Some(&st.engine.fingerprint))?;
    let rescored = st.reload(kb).await?;
    let snap = st.snapshot();
    Ok(Json(json!({
        "status": "reloaded",
        "fingerprint": st.engine.fingerprint,
        "kb_digest": snap.kb_digest,
        "rescored": rescored,
    })))
}

async fn thumbnail(State(st): State<Arc<AppState>>, Path(file): Path<String>) -> ApiResult<Response> {
    let id = file
        .strip_suffix(".png")
        .filter(|id| !id.is_empty() && id.bytes().all(|b| b.is_ascii_hexdigit()))
        .ok_or_else(|| ServiceError::NotFound(format!("no thumbnail {file}")))?;
    let path = st.index.thumbnail_path(id);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ServiceError::NotFound(format!("no thumbnail {file}")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

/// Serve until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr, cors_origin: Option<&str>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, cors_origin))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
