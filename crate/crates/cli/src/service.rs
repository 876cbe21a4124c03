//! HTTP/WebSocket service: scene description, live classification
//! sessions and session export.
//!
//! Each WebSocket connection owns one [`LiveSession`]. Gesture messages are
//! recorded as gaze samples (closed at the start, open at the end) so the
//! exported log replays to exactly the predictions streamed live.

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::io::Cursor;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use base64::Engine;
use gazeintent_core::interaction::{SelectionSession, SessionOutput};
use gazeintent_core::model::{GazeSample, ObjectId, SceneFrame};
use gazeintent_core::patch::{GrayPatch, PatchLibrary};
use gazeintent_core::replay::{Method, PipelineConfig};
use gazeintent_core::sessionlog::{round_time, BoxRecord, Record, SessionLog};
use gazeintent_core::simulator::Scene;
use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub label: String,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub patch: String,
    /// `data:image/png;base64,...`
    pub thumbnail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneDescription {
    pub frame_width: u32,
    pub frame_height: u32,
    pub objects: Vec<SceneObject>,
}

/// Immutable scene plus the registry of open sessions (for export).
pub struct AppState {
    pub scene: Scene,
    pub library: Arc<PatchLibrary>,
    pub pipeline: PipelineConfig,
    pub description: SceneDescription,
    next_id: AtomicU64,
    sessions: Mutex<HashMap<u64, Arc<Mutex<LiveSession>>>>,
}

fn png_data_url(patch: &GrayPatch) -> CliResult<String> {
    let (w, h) = (patch.width() as u32, patch.height() as u32);
    let img: image::DynamicImage = match patch.color() {
        Some(_) => image::RgbImage::from_raw(w, h, patch.to_interleaved_rgb()).map(Into::into),
        None => image::GrayImage::from_raw(w, h, patch.pixels().to_vec()).map(Into::into),
    }
    .ok_or_else(|| CliError::new(1, "patch buffer size mismatch"))?;
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png).map_err(|e| CliError::new(1, e.to_string()))?;
    Ok(format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(buf.into_inner())))
}

impl AppState {
    pub fn new(scene: Scene, pipeline: PipelineConfig) -> CliResult<Arc<Self>> {
        pipeline.validate()?;
        let objects = scene
            .template
            .objects
            .iter()
            .map(|b| {
                let name = scene.template.patch_refs[&b.object_id].clone();
                let patch = scene.library.get(&name).ok_or_else(|| CliError::new(1, format!("missing patch {name}")))?;
                Ok(SceneObject {
                    id: b.object_id,
                    label: b.label.clone(),
                    cx: b.cx,
                    cy: b.cy,
                    w: b.w,
                    h: b.h,
                    patch: name,
                    thumbnail: png_data_url(patch)?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let description = SceneDescription { frame_width: scene.spec.frame_width, frame_height: scene.spec.frame_height, objects };
        Ok(Arc::new(Self {
            library: Arc::new(scene.library.clone()),
            scene,
            pipeline,
            description,
            next_id: AtomicU64::new(1),
            sessions: Mutex::new(HashMap::new()),
        }))
    }

    fn open_session(&self) -> CliResult<(u64, Arc<Mutex<LiveSession>>)> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let session = Arc::new(Mutex::new(LiveSession::new(self)?));
        self.sessions.lock().expect("session registry poisoned").insert(id, Arc::clone(&session));
        Ok((id, session))
    }

    fn close_session(&self, id: u64) {
        self.sessions.lock().expect("session registry poisoned").remove(&id);
    }

    fn session(&self, id: Option<u64>) -> Result<Arc<Mutex<LiveSession>>, String> {
        let sessions = self.sessions.lock().expect("session registry poisoned");
        match id {
            Some(id) => sessions.get(&id).cloned().ok_or_else(|| format!("no open session {id}")),
            None if sessions.len() == 1 => Ok(sessions.values().next().cloned().expect("one session")),
            None if sessions.is_empty() => Err("no open session".into()),
            None => Err("several sessions are open; pass ?id=".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureState {
    Start,
    End,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    Gaze {
        t: f64,
        x: f64,
        y: f64,
        #[serde(default = "one")]
        conf: f64,
    },
    Gesture {
        state: GestureState,
        #[serde(default)]
        t: Option<f64>,
    },
    Intend {
        label: Option<String>,
    },
    Export,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Hello {
        session_id: u64,
    },
    Prediction {
        t: f64,
        label: Option<String>,
        #[serde(deserialize_with = "id_keyed")]
        scores: BTreeMap<ObjectId, f64>,
    },
    Selection {
        t: f64,
        predicted: Option<String>,
        intended: Option<String>,
        correct: bool,
    },
    /// A gesture that ended outside the accepted closure band.
    Attempt {
        t: f64,
        intended: Option<String>,
        outcome: String,
        duration: f64,
    },
    Error {
        reason: String,
    },
    Export {
        log: String,
    },
}

/// Internally tagged enums hand map keys over as strings.
fn id_keyed<'de, D: serde::Deserializer<'de>>(d: D) -> Result<BTreeMap<ObjectId, f64>, D::Error> {
    BTreeMap::<String, f64>::deserialize(d)?
        .into_iter()
        .map(|(k, v)| k.parse().map(|id| (id, v)).map_err(|_| serde::de::Error::custom(format!("object id `{k}`"))))
        .collect()
}

fn error(reason: impl Into<String>) -> Vec<ServerMessage> {
    vec![ServerMessage::Error { reason: reason.into() }]
}

/// Per-connection state: classifier, gesture tracking and the session log.
#[derive(Debug)]
pub struct LiveSession {
    selection: SelectionSession,
    frame: SceneFrame,
    boxes: Vec<BoxRecord>,
    log: SessionLog,
    frame_logged: bool,
    /// `(t, x, y)` of the last accepted sample.
    last: Option<(f64, f64, f64)>,
    last_received: Instant,
    closed: Option<(f64, Instant)>,
}

impl LiveSession {
    pub fn new(state: &AppState) -> CliResult<Self> {
        let cfg = state.pipeline.classifier_for(Method::Emd);
        let frame = state.scene.template.clone();
        Ok(Self {
            selection: SelectionSession::new(cfg, state.pipeline.gesture, Arc::clone(&state.library))?,
            boxes: frame.objects.iter().map(|b| BoxRecord { id: b.object_id, cx: b.cx, cy: b.cy, w: b.w, h: b.h }).collect(),
            frame,
            log: SessionLog::new(state.scene.meta()),
            frame_logged: false,
            last: None,
            last_received: Instant::now(),
            closed: None,
        })
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn export(&self) -> String {
        self.log.to_jsonl()
    }

    /// Parses and applies one client text message.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => error(format!("malformed message: {e}")),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::Gaze { t, x, y, conf } => {
                if !(t.is_finite() && x.is_finite() && y.is_finite() && conf.is_finite()) {
                    return error("gaze fields must be finite numbers");
                }
                // Eyes are closed while the gesture is held.
                let conf = if self.closed.is_some() { 0.0 } else { conf };
                self.push(GazeSample::new(round_time(t), x, y, conf))
            }
            ClientMessage::Gesture { state: GestureState::Start, t } => {
                if self.closed.is_some() {
                    return error("gesture already started");
                }
                let Some((last_t, x, y)) = self.last else {
                    return error("gesture before any gaze sample");
                };
                let elapsed = self.last_received.elapsed().as_secs_f64().max(1e-6);
                let t = round_time(t.unwrap_or(last_t + elapsed));
                // The closure begins strictly after the last open sample.
                if t <= last_t {
                    return error(format!("gesture start t={t} must follow the last gaze sample t={last_t}"));
                }
                let out = self.push(GazeSample::new(t, x, y, 0.0));
                if !matches!(out.first(), Some(ServerMessage::Error { .. })) {
                    self.closed = Some((t, Instant::now()));
                }
                out
            }
            ClientMessage::Gesture { state: GestureState::End, t } => {
                let Some((start, wall)) = self.closed else {
                    return error("gesture end without a start");
                };
                let (last_t, x, y) = self.last.expect("a gesture start follows a sample");
                let t = round_time(t.unwrap_or_else(|| last_t.max(start + wall.elapsed().as_secs_f64())));
                let mut out = self.push(GazeSample::new(t, x, y, 1.0));
                if matches!(out.first(), Some(ServerMessage::Error { .. })) {
                    return out;
                }
                self.closed = None;
                let intended = self.selection.intended().map(str::to_string);
                self.log.push(Record::Selection { t, intended: intended.clone() });
                if !out.iter().any(|m| matches!(m, ServerMessage::Selection { .. })) {
                    out.insert(0, ServerMessage::Attempt { t, intended, outcome: "missed".into(), duration: t - start });
                }
                out
            }
            ClientMessage::Intend { label } => {
                if let Some(l) = &label {
                    if self.frame.objects_labelled(l).next().is_none() {
                        return error(format!("unknown label `{l}`"));
                    }
                }
                self.selection.set_intended(label);
                Vec::new()
            }
            ClientMessage::Export => vec![ServerMessage::Export { log: self.export() }],
        }
    }

    fn push(&mut self, sample: GazeSample) -> Vec<ServerMessage> {
        if !self.frame_logged {
            self.frame.t = sample.t;
        }
        let outputs = match self.selection.push(sample, &self.frame) {
            Ok(o) => o,
            Err(e) => return error(e.to_string()),
        };
        if !self.frame_logged {
            self.log.push(Record::Frame { t: sample.t, boxes: self.boxes.clone() });
            self.frame_logged = true;
        }
        self.log.push(Record::Gaze { t: sample.t, x: sample.x, y: sample.y, conf: sample.confidence });
        self.last = Some((sample.t, sample.x, sample.y));
        self.last_received = Instant::now();
        outputs
            .into_iter()
            .map(|o| match o {
                SessionOutput::Prediction(p) => ServerMessage::Prediction { t: p.t, label: p.label, scores: p.scores },
                SessionOutput::Selection(s) => ServerMessage::Selection {
                    t: s.t,
                    correct: s.predicted.is_some() && s.predicted == s.intended,
                    predicted: s.predicted,
                    intended: s.intended,
                },
            })
            .collect()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scene", get(scene))
        .route("/session", get(session_ws))
        .route("/session/export", get(export))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn scene(State(state): State<Arc<AppState>>) -> Json<SceneDescription> {
    Json(state.description.clone())
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    id: Option<u64>,
}

async fn export(State(state): State<Arc<AppState>>, Query(q): Query<ExportQuery>) -> Response {
    match state.session(q.id) {
        Ok(s) => {
            let body = s.lock().expect("session poisoned").export();
            ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
        }
        Err(reason) => (StatusCode::NOT_FOUND, Json(ServerMessage::Error { reason })).into_response(),
    }
}

async fn session_ws(State(state): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| run_socket(socket, state))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    let text = serde_json::to_string(msg).expect("server messages serialize");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn run_socket(mut socket: WebSocket, state: Arc<AppState>) {
    let (id, session) = match state.open_session() {
        Ok(s) => s,
        Err(e) => {
            send(&mut socket, &ServerMessage::Error { reason: e.to_string() }).await;
            return;
        }
    };
    info!("session {id} opened");
    if send(&mut socket, &ServerMessage::Hello { session_id: id }).await {
        while let Some(Ok(msg)) = socket.recv().await {
            let replies = match msg {
                Message::Text(text) => session.lock().expect("session poisoned").handle_text(text.as_str()),
                Message::Binary(_) => error("binary messages are not supported"),
                Message::Close(_) => break,
                _ => continue,
            };
            let mut open = true;
            for r in &replies {
                if !send(&mut socket, r).await {
                    open = false;
                    break;
                }
            }
            if !open {
                break;
            }
        }
    }
    debug!("session {id} closed");
    state.close_session(id);
}
