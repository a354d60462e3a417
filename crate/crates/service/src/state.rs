use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use hodgeflow_core::hhd::{
    apply_edit_sequence_with, format_edit_script, parse_edit_script, EditRequest, HhdOptions,
};
use hodgeflow_core::io::{decode_field_with_precision, encode_field, Precision};
use hodgeflow_core::sketch::{BaselineProvider, FieldProvider, SketchImage};
use hodgeflow_core::VectorField;
use sha2::{Digest, Sha256};
use tokio::sync::Mutex as AsyncMutex;

use crate::error::ApiError;

const INITIAL_FILE: &str = "initial.vf2";
const EDITS_FILE: &str = "edits.txt";

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Idle time after which a session is dropped.
    pub session_ttl: Duration,
    /// Sessions are mirrored here (initial field + edit log) when set.
    pub persist_dir: Option<PathBuf>,
    /// Provider used when a request does not name one.
    pub provider: String,
    pub provider_timeout: Duration,
    pub hhd: HhdOptions,
    pub max_sim_steps: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            session_ttl: Duration::from_secs(3600),
            persist_dir: None,
            provider: "baseline".into(),
            provider_timeout: Duration::from_secs(60),
            hhd: HhdOptions::default(),
            max_sim_steps: 2000,
        }
    }
}

/// SHA-256 of the f64 encoding, hex.
pub fn field_hash(f: &VectorField) -> String {
    hex::encode(Sha256::digest(encode_field(f, Precision::F64)))
}

#[derive(Clone, Debug)]
pub struct HistoryEntry {
    pub edit: EditRequest,
    pub hash: String,
    pub field: Arc<VectorField>,
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub pgm: Arc<Vec<u8>>,
    pub cs: f64,
}

/// Immutable view of a session. Readers clone the `Arc` and never wait on
/// a running edit.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub version: u64,
    pub precision: Precision,
    pub initial: Arc<VectorField>,
    pub initial_hash: String,
    pub history: Vec<HistoryEntry>,
    pub sketch: Option<Arc<SketchImage>>,
    pub frames: Arc<Vec<Frame>>,
}

impl Snapshot {
    pub fn current(&self) -> &Arc<VectorField> {
        self.history.last().map(|e| &e.field).unwrap_or(&self.initial)
    }

    pub fn current_hash(&self) -> &str {
        self.history.last().map(|e| e.hash.as_str()).unwrap_or(&self.initial_hash)
    }

    pub fn edits(&self) -> Vec<EditRequest> {
        self.history.iter().map(|e| e.edit).collect()
    }
}

pub struct Session {
    pub id: String,
    snapshot: RwLock<Arc<Snapshot>>,
    /// Held for the whole of a mutating request.
    pub writer: Arc<AsyncMutex<()>>,
    last_access: Mutex<Instant>,
}

impl Session {
    fn new(id: String, snapshot: Snapshot) -> Self {
        Self {
            id,
            snapshot: RwLock::new(Arc::new(snapshot)),
            writer: Arc::new(AsyncMutex::new(())),
            last_access: Mutex::new(Instant::now()),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap().clone()
    }

    pub fn publish(&self, next: Snapshot) {
        *self.snapshot.write().unwrap() = Arc::new(next);
    }

    fn touch(&self) {
        *self.last_access.lock().unwrap() = Instant::now();
    }

    fn idle(&self) -> Duration {
        self.last_access.lock().unwrap().elapsed()
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    providers: HashMap<String, Arc<dyn FieldProvider>>,
}

impl AppState {
    /// State with the baseline provider registered.
    pub fn new(config: ServiceConfig) -> Self {
        let mut state = Self {
            config,
            sessions: RwLock::new(HashMap::new()),
            providers: HashMap::new(),
        };
        state.register_provider(Arc::new(BaselineProvider));
        state
    }

    pub fn register_provider(&mut self, provider: Arc<dyn FieldProvider>) {
        self.providers.insert(provider.name().to_string(), provider);
    }

    pub fn provider(&self, name: Option<&str>) -> Result<Arc<dyn FieldProvider>, ApiError> {
        let name = name.unwrap_or(&self.config.provider);
        self.providers
            .get(name)
            .cloned()
            .ok_or_else(|| ApiError::unprocessable("UnknownProvider", format!("no provider named `{name}`")))
    }

    pub fn provider_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.providers.keys().cloned().collect();
        names.sort();
        names
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        let found = self.sessions.read().unwrap().get(id).cloned();
        match found {
            Some(s) if s.idle() <= self.config.session_ttl => {
                s.touch();
                Ok(s)
            }
            Some(_) => {
                self.remove(id);
                Err(unknown_session(id))
            }
            None => Err(unknown_session(id)),
        }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn create(
        &self,
        field: VectorField,
        precision: Precision,
        sketch: Option<SketchImage>,
    ) -> Result<Arc<Session>, ApiError> {
        let id = hex::encode(rand::random::<[u8; 16]>());
        let snapshot = Snapshot {
            version: 0,
            precision,
            initial_hash: field_hash(&field),
            initial: Arc::new(field),
            history: Vec::new(),
            sketch: sketch.map(Arc::new),
            frames: Arc::new(Vec::new()),
        };
        if let Some(dir) = self.session_dir(&id) {
            std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
            let path = dir.join(INITIAL_FILE);
            std::fs::write(&path, encode_field(&snapshot.initial, precision)).map_err(|e| io_error(&path, e))?;
            write_edits(&dir, &[])?;
        }
        let session = Arc::new(Session::new(id.clone(), snapshot));
        self.sessions.write().unwrap().insert(id, session.clone());
        Ok(session)
    }

    /// Mirrors the edit log of `snapshot` to disk.
    pub fn persist(&self, session: &Session, snapshot: &Snapshot) -> Result<(), ApiError> {
        match self.session_dir(&session.id) {
            Some(dir) => write_edits(&dir, &snapshot.edits()),
            None => Ok(()),
        }
    }

    pub fn remove(&self, id: &str) -> bool {
        let removed = self.sessions.write().unwrap().remove(id).is_some();
        if let Some(dir) = self.session_dir(id) {
            if dir.exists() {
                if let Err(e) = std::fs::remove_dir_all(&dir) {
                    tracing::warn!("could not remove {}: {e}", dir.display());
                }
            }
        }
        removed
    }

    /// Drops sessions idle for longer than the TTL; returns how many.
    pub fn purge_expired(&self) -> usize {
        let expired: Vec<String> = self
            .sessions
            .read()
            .unwrap()
            .values()
            .filter(|s| s.idle() > self.config.session_ttl)
            .map(|s| s.id.clone())
            .collect();
        for id in &expired {
            self.remove(id);
        }
        expired.len()
    }

    /// Rebuilds every session found in the persistence directory by replaying
    /// its edit log. Returns the number of sessions restored.
    pub fn recover(&self) -> Result<usize, ApiError> {
        let Some(root) = &self.config.persist_dir else {
            return Ok(0);
        };
        if !root.exists() {
            return Ok(0);
        }
        let mut restored = 0;
        let entries = std::fs::read_dir(root).map_err(|e| io_error(root, e))?;
        for entry in entries {
            let dir = entry.map_err(|e| io_error(root, e))?.path();
            let Some(id) = dir.file_name().and_then(|n| n.to_str()).map(str::to_string) else {
                continue;
            };
            match self.load(&dir) {
                Ok(snapshot) => {
                    let session = Arc::new(Session::new(id.clone(), snapshot));
                    self.sessions.write().unwrap().insert(id, session);
                    restored += 1;
                }
                Err(e) => tracing::warn!("skipping {}: {}", dir.display(), e.message),
            }
        }
        Ok(restored)
    }

    fn load(&self, dir: &Path) -> Result<Snapshot, ApiError> {
        let path = dir.join(INITIAL_FILE);
        let bytes = std::fs::read(&path).map_err(|e| io_error(&path, e))?;
        let (initial, precision) = decode_field_with_precision(&bytes)?;
        let path = dir.join(EDITS_FILE);
        let script = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        let edits = parse_edit_script(&script, initial.width(), initial.height())?;
        let mut history = Vec::with_capacity(edits.len());
        let mut current = initial.clone();
        for edit in edits {
            current = apply_edit_sequence_with(&current, &[edit], &self.config.hhd)?;
            history.push(HistoryEntry {
                edit,
                hash: field_hash(&current),
                field: Arc::new(current.clone()),
            });
        }
        Ok(Snapshot {
            version: history.len() as u64,
            precision,
            initial_hash: field_hash(&initial),
            initial: Arc::new(initial),
            history,
            sketch: None,
            frames: Arc::new(Vec::new()),
        })
    }

    fn session_dir(&self, id: &str) -> Option<PathBuf> {
        self.config.persist_dir.as_ref().map(|d| d.join(id))
    }
}

fn unknown_session(id: &str) -> ApiError {
    ApiError::not_found("UnknownSession", format!("no session `{id}`"))
}

fn io_error(path: &Path, e: std::io::Error) -> ApiError {
    ApiError::internal(format!("{}: {e}", path.display()))
}

fn write_edits(dir: &Path, edits: &[EditRequest]) -> Result<(), ApiError> {
    let tmp = dir.join(format!("{EDITS_FILE}.tmp"));
    let path = dir.join(EDITS_FILE);
    std::fs::write(&tmp, format_edit_script(edits)).map_err(|e| io_error(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| io_error(&path, e))
}
