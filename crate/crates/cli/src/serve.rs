//! Annotation backend: assigns individuals to annotators and appends their labels to a
//! JSONL sink.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use skintone_core::data::load_label_file;
use skintone_core::{DatasetManifest, LabelRecord, MstLabel, NUM_CLASSES};
use tower_http::services::ServeDir;

use crate::palette::{Palette, Swatch};

const SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    pub sink: PathBuf,
    /// Individuals per class to serve; all individuals when `None`.
    pub stratified: Option<usize>,
    pub seed: u64,
    pub ui_dir: Option<PathBuf>,
    pub guidance: Option<String>,
}

/// One annotator's progress during this server run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct AnnotationSession {
    pub annotator_id: String,
    /// Individuals served, in order.
    pub assigned: Vec<String>,
    pub completed: BTreeSet<String>,
    #[serde(skip)]
    assigned_set: HashSet<String>,
    #[serde(skip)]
    outstanding: Option<String>,
    #[serde(skip)]
    tally: [usize; NUM_CLASSES],
}

impl AnnotationSession {
    fn assign(&mut self, individual: &str) {
        if self.assigned_set.insert(individual.to_string()) {
            self.assigned.push(individual.to_string());
        }
    }

    fn complete(&mut self, individual: &str, label: MstLabel) {
        self.assign(individual);
        if self.completed.insert(individual.to_string()) {
            self.tally[label.index()] += 1;
        }
        if self.outstanding.as_deref() == Some(individual) {
            self.outstanding = None;
        }
    }
}

struct Assignments {
    /// Service order.
    pool: Vec<String>,
    /// Individuals already served to, or labeled by, anyone.
    claimed: HashSet<String>,
    sessions: HashMap<String, AnnotationSession>,
    sink: File,
}

impl Assignments {
    fn session(&mut self, annotator: &str) -> &mut AnnotationSession {
        self.sessions.entry(annotator.to_string()).or_insert_with(|| AnnotationSession {
            annotator_id: annotator.to_string(),
            ..Default::default()
        })
    }

    /// The annotator's open individual; else one nobody has seen; else one this annotator
    /// has not seen.
    fn next(&mut self, annotator: &str) -> Option<String> {
        let session = self.sessions.entry(annotator.to_string()).or_insert_with(|| AnnotationSession {
            annotator_id: annotator.to_string(),
            ..Default::default()
        });
        if let Some(open) = &session.outstanding {
            return Some(open.clone());
        }
        let unseen = |i: &&String| !session.assigned_set.contains(*i);
        let pick = self
            .pool
            .iter()
            .filter(unseen)
            .find(|i| !self.claimed.contains(*i))
            .or_else(|| self.pool.iter().find(unseen))
            .cloned()?;
        session.assign(&pick);
        session.outstanding = Some(pick.clone());
        self.claimed.insert(pick.clone());
        Some(pick)
    }
}

struct Shared {
    manifest: DatasetManifest,
    palette: Palette,
    options: ServeOptions,
    inner: Mutex<Assignments>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

fn service_order(manifest: &DatasetManifest, stratified: Option<usize>, seed: u64) -> Vec<String> {
    let Some(n) = stratified else {
        return manifest.individuals.keys().cloned().collect();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_class: Vec<Vec<String>> = manifest
        .individuals_by_class()
        .iter()
        .enumerate()
        .map(|(c, inds)| {
            let mut ids: Vec<String> = inds.iter().map(|i| i.individual_id.clone()).collect();
            ids.shuffle(&mut rng);
            if ids.len() < n {
                log::warn!("tone {} has only {} individuals for --stratified {n}", c + 1, ids.len());
            }
            ids.truncate(n);
            ids
        })
        .collect();
    // Round-robin across tones so an interrupted session stays balanced.
    (0..n).flat_map(|r| per_class.iter().filter_map(move |ids| ids.get(r).cloned())).collect()
}

impl AppState {
    pub fn new(manifest: DatasetManifest, palette: Palette, options: ServeOptions) -> Result<Self> {
        let existing = if options.sink.exists() {
            load_label_file(&options.sink).with_context(|| format!("reading label sink {}", options.sink.display()))?
        } else {
            Vec::new()
        };
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&options.sink)
            .with_context(|| format!("opening label sink {}", options.sink.display()))?;
        let mut inner = Assignments {
            pool: service_order(&manifest, options.stratified, options.seed),
            claimed: HashSet::new(),
            sessions: HashMap::new(),
            sink,
        };
        for rec in existing {
            inner.claimed.insert(rec.individual_id.clone());
            inner.session(&rec.annotator_id).complete(&rec.individual_id, rec.label);
        }
        Ok(Self(Arc::new(Shared {
            manifest,
            palette,
            options,
            inner: Mutex::new(inner),
        })))
    }

    /// Snapshot of one annotator's session.
    pub fn session(&self, annotator: &str) -> Option<AnnotationSession> {
        self.0.inner.lock().expect("assignment lock").sessions.get(annotator).cloned()
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/individuals/next", get(next_individual))
        .route("/api/images/{image_id}", get(image))
        .route("/api/exemplars", get(exemplars))
        .route("/api/exemplars/{mst}/{index}", get(exemplar_image))
        .route("/api/labels", post(submit_label))
        .route("/api/progress", get(progress))
        .route("/api/guidance", get(guidance));
    let api = match &state.0.options.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    api.with_state(state)
}

pub fn run(state: AppState, host: &str, port: u16) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port} (port in use?)"))?;
        log::info!("serving on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

#[derive(Debug, Deserialize)]
struct AnnotatorQuery {
    annotator: String,
}

fn image_url(image_id: &str) -> String {
    format!("/api/images/{}", utf8_percent_encode(image_id, SEGMENT))
}

async fn next_individual(State(state): State<AppState>, Query(q): Query<AnnotatorQuery>) -> Response {
    if q.annotator.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "annotator must not be empty");
    }
    let picked = state.0.inner.lock().expect("assignment lock").next(&q.annotator);
    match picked {
        None => StatusCode::NO_CONTENT.into_response(),
        Some(id) => {
            let urls: Vec<String> = state.0.manifest.individuals[&id].image_ids.iter().map(|i| image_url(i)).collect();
            Json(json!({ "individual_id": id, "image_urls": urls })).into_response()
        }
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

async fn file_response(path: PathBuf) -> Response {
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], Body::from(bytes)).into_response(),
        Err(e) => {
            log::warn!("{}: {e}", path.display());
            error(StatusCode::NOT_FOUND, "image file unavailable")
        }
    }
}

async fn image(State(state): State<AppState>, UrlPath(image_id): UrlPath<String>) -> Response {
    let manifest = &state.0.manifest;
    match manifest.images.get(&image_id) {
        Some(rec) => file_response(manifest.image_path(rec)).await,
        None => error(StatusCode::NOT_FOUND, format!("unknown image {image_id}")),
    }
}

#[derive(Serialize)]
struct ExemplarPanel<'a> {
    swatches: &'a [Swatch],
    exemplar_images: BTreeMap<String, Vec<String>>,
}

async fn exemplars(State(state): State<AppState>) -> Response {
    let palette = &state.0.palette;
    let exemplar_images = palette
        .exemplar_images
        .iter()
        .map(|(mst, paths)| (mst.to_string(), (0..paths.len()).map(|i| format!("/api/exemplars/{mst}/{i}")).collect()))
        .collect();
    Json(ExemplarPanel { swatches: &palette.swatches, exemplar_images }).into_response()
}

async fn exemplar_image(State(state): State<AppState>, UrlPath((mst, index)): UrlPath<(u8, usize)>) -> Response {
    match state.0.palette.exemplar_images.get(&mst).and_then(|v| v.get(index)) {
        Some(path) => file_response(path.clone()).await,
        None => error(StatusCode::NOT_FOUND, "no such exemplar"),
    }
}

#[derive(Debug, Deserialize)]
struct Submission {
    individual_id: String,
    annotator_id: String,
    label: serde_json::Value,
}

async fn submit_label(State(state): State<AppState>, Json(sub): Json<Submission>) -> Response {
    let label = match sub.label.as_i64().map(MstLabel::new) {
        Some(Ok(l)) => l,
        _ => return error(StatusCode::UNPROCESSABLE_ENTITY, format!("label must be an integer 1..10, got {}", sub.label)),
    };
    if sub.annotator_id.trim().is_empty() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "annotator_id must not be empty");
    }
    if !state.0.manifest.individuals.contains_key(&sub.individual_id) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, format!("unknown individual {}", sub.individual_id));
    }
    let record = LabelRecord {
        individual_id: sub.individual_id,
        annotator_id: sub.annotator_id,
        label,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs() as i64).unwrap_or(0),
    };
    let mut inner = state.0.inner.lock().expect("assignment lock");
    let done = inner
        .sessions
        .get(&record.annotator_id)
        .is_some_and(|s| s.completed.contains(&record.individual_id));
    if done {
        return error(
            StatusCode::CONFLICT,
            format!("{} already labeled {}", record.annotator_id, record.individual_id),
        );
    }
    let mut line = serde_json::to_string(&record).expect("record serializes");
    line.push('\n');
    // One write per record on an append-mode handle, synced before acknowledging.
    let written = inner.sink.write_all(line.as_bytes()).and_then(|_| inner.sink.sync_data());
    if let Err(e) = written {
        log::error!("label sink write failed: {e}");
        return error(StatusCode::INTERNAL_SERVER_ERROR, "label could not be stored");
    }
    inner.claimed.insert(record.individual_id.clone());
    inner.session(&record.annotator_id).complete(&record.individual_id, label);
    (StatusCode::CREATED, Json(record)).into_response()
}

async fn progress(State(state): State<AppState>, Query(q): Query<AnnotatorQuery>) -> Response {
    let inner = state.0.inner.lock().expect("assignment lock");
    let (assigned, completed, tally) = match inner.sessions.get(&q.annotator) {
        Some(s) => (s.assigned.len(), s.completed.len(), s.tally),
        None => (0, 0, [0; NUM_CLASSES]),
    };
    Json(json!({
        "annotator_id": q.annotator,
        "assigned": assigned,
        "completed": completed,
        "pool": inner.pool.len(),
        "per_class": tally,
    }))
    .into_response()
}

async fn guidance(State(state): State<AppState>) -> Response {
    Json(json!({ "text": state.0.options.guidance })).into_response()
}
