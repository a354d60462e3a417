use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::Json;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use hodgeflow_core::hhd::{edit_region_with, ComponentMask, EditRequest};
use hodgeflow_core::io::{decode_field_with_precision, decode_pgm, encode_field, encode_pgm, Precision};
use hodgeflow_core::metrics::{cme, cs, evaluate, Metric, MetricReport};
use hodgeflow_core::sim::{density_frame, step_smoke, Inflow, SmokeState};
use hodgeflow_core::sketch::{parse_strokes, rasterize_strokes, SketchImage, SketchInput};
use hodgeflow_core::{Rect, VectorField};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::state::{field_hash, AppState, Frame, HistoryEntry, Session, Snapshot};

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<T, ApiError>;

const DEFAULT_SIDE: usize = 256;

/// Runs numerics on the blocking pool so the accept loop stays free.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> hodgeflow_core::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

fn decode_b64(what: &str, text: &str) -> ApiResult<Vec<u8>> {
    B64.decode(text.trim())
        .map_err(|e| ApiError::bad_request("Base64", format!("{what}: {e}")))
}

fn decode_field_b64(what: &str, text: &str) -> ApiResult<(VectorField, Precision)> {
    Ok(decode_field_with_precision(&decode_b64(what, text)?)?)
}

fn lock_writer(session: &Session) -> ApiResult<tokio::sync::OwnedMutexGuard<()>> {
    session
        .writer
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::conflict("Busy", format!("session `{}` is processing another request", session.id)))
}

#[derive(Serialize)]
pub struct FieldResponse {
    pub id: String,
    pub version: u64,
    pub width: usize,
    pub height: usize,
    pub precision: &'static str,
    pub hash: String,
    /// Base64 `.vf2`.
    pub field: String,
}

impl FieldResponse {
    fn new(id: &str, snapshot: &Snapshot, precision: Precision) -> Self {
        let f = snapshot.current();
        Self {
            id: id.to_string(),
            version: snapshot.version,
            width: f.width(),
            height: f.height(),
            precision: precision.name(),
            hash: snapshot.current_hash().to_string(),
            field: B64.encode(encode_field(f, precision)),
        }
    }
}

pub async fn health() -> &'static str {
    "ok"
}

pub async fn providers(State(app): Shared) -> Json<Vec<String>> {
    Json(app.provider_names())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Base64 `.vf2`.
    pub field: Option<String>,
    /// Base64 binary PGM, 256x256.
    pub sketch: Option<String>,
    /// Stroke text, one polyline per line.
    pub strokes: Option<String>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub provider: Option<String>,
}

pub async fn create_session(State(app): Shared, body: Option<Json<CreateSession>>) -> ApiResult<Json<FieldResponse>> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let sketch_given = req.sketch.is_some() || req.strokes.is_some();
    if req.field.is_some() && sketch_given {
        return Err(ApiError::bad_request("Payload", "send either a field or a sketch, not both"));
    }
    let width = req.width.unwrap_or(DEFAULT_SIDE);
    let height = req.height.unwrap_or(DEFAULT_SIDE);
    let (field, precision, sketch) = if let Some(text) = &req.field {
        let (f, p) = decode_field_b64("field", text)?;
        (f, p, None)
    } else if sketch_given {
        let strokes = req.strokes.as_deref().map(parse_strokes).transpose()?;
        let image = match (&req.sketch, &strokes) {
            (Some(text), _) => SketchImage::from_gray(&decode_pgm(&decode_b64("sketch", text)?)?)?,
            (None, Some(s)) => rasterize_strokes(s),
            (None, None) => unreachable!(),
        };
        let provider = app.provider(req.provider.as_deref())?;
        let input = SketchInput {
            image: image.clone(),
            strokes,
            width,
            height,
        };
        let job = tokio::task::spawn_blocking(move || provider.generate(&input));
        let field = match tokio::time::timeout(app.config.provider_timeout, job).await {
            Ok(joined) => joined.map_err(|e| ApiError::internal(format!("provider failed: {e}")))??,
            Err(_) => {
                return Err(ApiError::new(
                    StatusCode::GATEWAY_TIMEOUT,
                    "ProviderTimeout",
                    format!("provider gave no field within {:?}", app.config.provider_timeout),
                ))
            }
        };
        (field, Precision::F64, Some(image))
    } else {
        (VectorField::zeros(width, height)?, Precision::F64, None)
    };
    let session = app.create(field, precision, sketch)?;
    let snapshot = session.snapshot();
    Ok(Json(FieldResponse::new(&session.id, &snapshot, precision)))
}

#[derive(Deserialize)]
pub struct FieldQuery {
    pub precision: Option<String>,
}

pub async fn get_field(
    State(app): Shared,
    Path(id): Path<String>,
    Query(q): Query<FieldQuery>,
) -> ApiResult<Json<FieldResponse>> {
    let session = app.session(&id)?;
    let snapshot = session.snapshot();
    let precision = match q.precision {
        Some(p) => p.parse().map_err(|m: String| ApiError::bad_request("Query", m))?,
        None => snapshot.precision,
    };
    Ok(Json(FieldResponse::new(&id, &snapshot, precision)))
}

pub async fn delete_session(State(app): Shared, Path(id): Path<String>) -> ApiResult<StatusCode> {
    app.session(&id)?;
    app.remove(&id);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Serialize)]
pub struct HistoryItem {
    pub region: Rect,
    pub mask: ComponentMask,
    pub hash: String,
}

#[derive(Serialize)]
pub struct HistoryResponse {
    pub version: u64,
    pub initial_hash: String,
    pub edits: Vec<HistoryItem>,
}

pub async fn get_history(State(app): Shared, Path(id): Path<String>) -> ApiResult<Json<HistoryResponse>> {
    let snapshot = app.session(&id)?.snapshot();
    Ok(Json(HistoryResponse {
        version: snapshot.version,
        initial_hash: snapshot.initial_hash.clone(),
        edits: snapshot
            .history
            .iter()
            .map(|e| HistoryItem {
                region: e.edit.region,
                mask: e.edit.mask,
                hash: e.hash.clone(),
            })
            .collect(),
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditBody {
    pub region: Rect,
    pub mask: ComponentMask,
    /// Version the client last saw; anything else is rejected with 409.
    pub version: u64,
}

#[derive(Serialize)]
pub struct RegionMetrics {
    pub cme: f64,
    pub cs: f64,
}

#[derive(Serialize)]
pub struct EditResponse {
    #[serde(flatten)]
    pub field: FieldResponse,
    pub region_metrics: RegionMetrics,
}

pub async fn post_edit(
    State(app): Shared,
    Path(id): Path<String>,
    Json(body): Json<EditBody>,
) -> ApiResult<Json<EditResponse>> {
    let session = app.session(&id)?;
    let _guard = lock_writer(&session)?;
    let snapshot = session.snapshot();
    if body.version != snapshot.version {
        return Err(ApiError::conflict(
            "StaleVersion",
            format!("edit was based on version {}, session is at {}", body.version, snapshot.version),
        ));
    }
    let edit = EditRequest {
        region: body.region,
        mask: body.mask,
    };
    let current = snapshot.current().clone();
    let opts = app.config.hhd;
    let (field, metrics) = blocking(move || {
        let out = edit_region_with(&current, edit.region, edit.mask, &opts)?;
        let inside = out.extract(edit.region)?;
        let metrics = RegionMetrics {
            cme: cme(&inside),
            cs: cs(&inside),
        };
        Ok((out, metrics))
    })
    .await?;
    let mut next = (*snapshot).clone();
    next.version += 1;
    next.history.push(HistoryEntry {
        edit,
        hash: field_hash(&field),
        field: Arc::new(field),
    });
    app.persist(&session, &next)?;
    let response = FieldResponse::new(&id, &next, next.precision);
    session.publish(next);
    Ok(Json(EditResponse {
        field: response,
        region_metrics: metrics,
    }))
}

pub async fn post_undo(State(app): Shared, Path(id): Path<String>) -> ApiResult<Json<FieldResponse>> {
    let session = app.session(&id)?;
    let _guard = lock_writer(&session)?;
    let snapshot = session.snapshot();
    if snapshot.history.is_empty() {
        return Err(ApiError::conflict("EmptyHistory", "nothing to undo"));
    }
    let mut next = (*snapshot).clone();
    next.version += 1;
    next.history.pop();
    app.persist(&session, &next)?;
    let response = FieldResponse::new(&id, &next, next.precision);
    session.publish(next);
    Ok(Json(response))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsBody {
    /// Base64 `.vf2` reference.
    pub a: String,
    /// Base64 `.vf2` candidate.
    pub b: String,
    /// Defaults to every metric.
    pub metrics: Option<Vec<Metric>>,
}

pub async fn post_metrics(Json(body): Json<MetricsBody>) -> ApiResult<Json<MetricReport>> {
    let (a, _) = decode_field_b64("a", &body.a)?;
    let (b, _) = decode_field_b64("b", &body.b)?;
    let metrics = body.metrics.unwrap_or_else(|| Metric::ALL.to_vec());
    Ok(Json(blocking(move || evaluate(&a, &b, &metrics)).await?))
}

fn default_dt() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBody {
    pub steps: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub inflows: Vec<Inflow>,
    /// Multiplier on the session field used as force.
    #[serde(default = "one")]
    pub force_scale: f64,
    /// Density mapped to white in the frames.
    #[serde(default = "one")]
    pub density_scale: f64,
}

#[derive(Serialize)]
pub struct SimulateResponse {
    pub frames: usize,
    pub dt: f64,
    /// Interior mean squared divergence of each frame's velocity.
    pub cs: Vec<f64>,
}

pub async fn post_simulate(
    State(app): Shared,
    Path(id): Path<String>,
    Json(body): Json<SimulateBody>,
) -> ApiResult<Json<SimulateResponse>> {
    if body.steps > app.config.max_sim_steps {
        return Err(ApiError::unprocessable(
            "InvalidParameter",
            format!("at most {} steps per request", app.config.max_sim_steps),
        ));
    }
    let finite_positive = |v: f64| v.is_finite() && v > 0.0;
    if !finite_positive(body.dt) || !finite_positive(body.density_scale) || !body.force_scale.is_finite() {
        return Err(ApiError::unprocessable(
            "InvalidParameter",
            "dt and density_scale must be positive and force_scale finite",
        ));
    }
    for inflow in &body.inflows {
        inflow.validate()?;
    }
    let session = app.session(&id)?;
    let _guard = lock_writer(&session)?;
    let snapshot = session.snapshot();
    let force = snapshot.current().scale(body.force_scale);
    let frames = blocking(move || {
        let (w, h) = force.dims();
        let mut state = SmokeState::still(w, h)?;
        let mut frames = Vec::with_capacity(body.steps);
        for _ in 0..body.steps {
            state = step_smoke(&state, &force, body.dt, &body.inflows)?;
            frames.push(Frame {
                pgm: Arc::new(encode_pgm(&density_frame(&state.density, body.density_scale))),
                cs: cs(&state.velocity),
            });
        }
        Ok(frames)
    })
    .await?;
    let response = SimulateResponse {
        frames: frames.len(),
        dt: body.dt,
        cs: frames.iter().map(|f| f.cs).collect(),
    };
    // Re-read so an edit can never be lost, though the writer lock already
    // excludes one.
    let mut next = (*session.snapshot()).clone();
    next.frames = Arc::new(frames);
    session.publish(next);
    Ok(Json(response))
}

pub async fn get_frame(State(app): Shared, Path((id, k)): Path<(String, usize)>) -> ApiResult<impl IntoResponse> {
    let snapshot = app.session(&id)?.snapshot();
    let frame = snapshot
        .frames
        .get(k)
        .ok_or_else(|| ApiError::not_found("UnknownFrame", format!("frame {k} of {}", snapshot.frames.len())))?;
    Ok(([(header::CONTENT_TYPE, "image/x-portable-graymap")], (*frame.pgm).clone()))
}

pub async fn get_sketch(State(app): Shared, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let snapshot = app.session(&id)?.snapshot();
    let sketch = snapshot
        .sketch
        .as_ref()
        .ok_or_else(|| ApiError::not_found("NoSketch", "session was not created from a sketch"))?;
    Ok(([(header::CONTENT_TYPE, "image/x-portable-graymap")], encode_pgm(&sketch.to_gray())))
}
