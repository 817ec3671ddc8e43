//! Blind pairwise human evaluation.
//!
//! Annotators see reference/generated pairs one at a time, in a per-annotator
//! shuffled order, without the producing system. Every judgment is appended
//! to a JSON-lines log; the effective label for an (annotator, pair) is the
//! last one written. Aggregates report, per system, the mean, min and max of
//! annotator accuracy (share of judged pairs labelled 1).
//!
//! On disk, a store root holds one directory per session:
//!
//! ```text
//! <root>/<session_id>/session.json     pairs + annotators, written once
//! <root>/<session_id>/judgments.jsonl  append-only judgment log
//! ```

pub mod server;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::eval::EvalPair;
use crate::io::IoError;
use crate::rng;

const SESSION_FILE: &str = "session.json";
const LOG_FILE: &str = "judgments.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum HumanEvalError {
    #[error("invalid pairs: {0}")]
    InvalidPairsFile(String),
    #[error("session {0} already exists with different contents")]
    DuplicateSessionId(String),
    #[error("invalid session id {0:?}: use letters, digits, '-' or '_'")]
    InvalidSessionId(String),
    #[error("invalid annotators: {0}")]
    InvalidAnnotators(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),
    #[error("unknown pair {0}")]
    UnknownPair(String),
    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(String),
    #[error("corrupt session file {path}: {message}")]
    CorruptSession { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub pairs: Vec<EvalPair>,
    pub annotator_ids: Vec<String>,
}

impl Session {
    pub fn expected_judgments(&self) -> usize {
        self.pairs.len() * self.annotator_ids.len()
    }

    /// The annotator's fixed presentation order, as indices into `pairs`.
    pub fn order_for(&self, annotator_id: &str) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        rng::shuffle(
            &mut order,
            rng::seed_from_parts(&[&self.session_id, annotator_id]),
        );
        order
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub annotator_id: String,
    pub pair_id: String,
    pub label: u8,
    /// Milliseconds since the Unix epoch.
    pub submitted_at: u64,
}

/// A pair as shown to an annotator. Carries no system name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServedPair {
    pub pair_id: String,
    pub reference_text: String,
    pub generated_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub judged: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextPair {
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<ServedPair>,
    pub progress: Progress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n_annotators: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorSystemStats {
    pub judged: usize,
    pub positive: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub session_id: String,
    pub systems: BTreeMap<String, SystemStats>,
    pub per_annotator: BTreeMap<String, BTreeMap<String, AnnotatorSystemStats>>,
    /// annotator → system → judged pair count.
    pub completion: BTreeMap<String, BTreeMap<String, usize>>,
    pub judged_total: usize,
    pub expected_total: usize,
}

fn validate_session_id(id: &str) -> Result<(), HumanEvalError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(HumanEvalError::InvalidSessionId(id.to_string()))
    }
}

pub fn validate_session(session: &Session) -> Result<(), HumanEvalError> {
    validate_session_id(&session.session_id)?;
    if session.pairs.is_empty() {
        return Err(HumanEvalError::InvalidPairsFile("no pairs".into()));
    }
    let mut ids = HashSet::new();
    for p in &session.pairs {
        if p.pair_id.is_empty() || p.system.is_empty() {
            return Err(HumanEvalError::InvalidPairsFile(
                "empty pair_id or system".into(),
            ));
        }
        if !ids.insert(p.pair_id.as_str()) {
            return Err(HumanEvalError::InvalidPairsFile(format!(
                "duplicate pair_id {}",
                p.pair_id
            )));
        }
    }
    if session.annotator_ids.is_empty() {
        return Err(HumanEvalError::InvalidAnnotators(
            "at least one annotator is required".into(),
        ));
    }
    let mut seen = HashSet::new();
    for a in &session.annotator_ids {
        if a.trim().is_empty() {
            return Err(HumanEvalError::InvalidAnnotators(
                "empty annotator id".into(),
            ));
        }
        if !seen.insert(a.as_str()) {
            return Err(HumanEvalError::InvalidAnnotators(format!(
                "duplicate annotator {a}"
            )));
        }
    }
    Ok(())
}

pub fn parse_label(raw: &serde_json::Value) -> Result<u8, HumanEvalError> {
    match raw.as_u64() {
        Some(0) => Ok(0),
        Some(1) => Ok(1),
        _ => Err(HumanEvalError::InvalidLabel(raw.to_string())),
    }
}

/// In-memory effective state of one session, rebuilt by replaying its log.
#[derive(Debug, Clone)]
pub struct SessionState {
    session: Arc<Session>,
    pair_index: Arc<HashMap<String, usize>>,
    orders: Arc<HashMap<String, Vec<usize>>>,
    effective: HashMap<(String, String), u8>,
    log_entries: usize,
}

impl SessionState {
    pub fn new(session: Session) -> Result<Self, HumanEvalError> {
        validate_session(&session)?;
        let pair_index = session
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| (p.pair_id.clone(), i))
            .collect();
        let orders = session
            .annotator_ids
            .iter()
            .map(|a| (a.clone(), session.order_for(a)))
            .collect();
        Ok(Self {
            session: Arc::new(session),
            pair_index: Arc::new(pair_index),
            orders: Arc::new(orders),
            effective: HashMap::new(),
            log_entries: 0,
        })
    }

    pub fn replay<'a>(
        session: Session,
        log: impl IntoIterator<Item = &'a Judgment>,
    ) -> Result<Self, HumanEvalError> {
        let mut state = Self::new(session)?;
        for j in log {
            state.check(&j.annotator_id, &j.pair_id, j.label)?;
            state.apply(j);
        }
        Ok(state)
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn log_entries(&self) -> usize {
        self.log_entries
    }

    fn check(&self, annotator_id: &str, pair_id: &str, label: u8) -> Result<(), HumanEvalError> {
        if !self.orders.contains_key(annotator_id) {
            return Err(HumanEvalError::UnknownAnnotator(annotator_id.to_string()));
        }
        if !self.pair_index.contains_key(pair_id) {
            return Err(HumanEvalError::UnknownPair(pair_id.to_string()));
        }
        if label > 1 {
            return Err(HumanEvalError::InvalidLabel(label.to_string()));
        }
        Ok(())
    }

    fn apply(&mut self, j: &Judgment) {
        self.effective
            .insert((j.annotator_id.clone(), j.pair_id.clone()), j.label);
        self.log_entries += 1;
    }

    pub fn effective_label(&self, annotator_id: &str, pair_id: &str) -> Option<u8> {
        self.effective
            .get(&(annotator_id.to_string(), pair_id.to_string()))
            .copied()
    }

    pub fn progress(&self, annotator_id: &str) -> Result<Progress, HumanEvalError> {
        if !self.orders.contains_key(annotator_id) {
            return Err(HumanEvalError::UnknownAnnotator(annotator_id.to_string()));
        }
        let judged = self
            .session
            .pairs
            .iter()
            .filter(|p| self.effective_label(annotator_id, &p.pair_id).is_some())
            .count();
        Ok(Progress {
            judged,
            total: self.session.pairs.len(),
        })
    }

    pub fn next_pair(&self, annotator_id: &str) -> Result<NextPair, HumanEvalError> {
        let order = self
            .orders
            .get(annotator_id)
            .ok_or_else(|| HumanEvalError::UnknownAnnotator(annotator_id.to_string()))?;
        let progress = self.progress(annotator_id)?;
        let pair = order
            .iter()
            .map(|&i| &self.session.pairs[i])
            .find(|p| self.effective_label(annotator_id, &p.pair_id).is_none())
            .map(|p| ServedPair {
                pair_id: p.pair_id.clone(),
                reference_text: p.reference_text.clone(),
                generated_text: p.generated_text.clone(),
            });
        Ok(NextPair {
            done: pair.is_none(),
            pair,
            progress,
        })
    }

    pub fn aggregate(&self) -> Stats {
        let systems: Vec<&str> = {
            let mut s: Vec<&str> = self
                .session
                .pairs
                .iter()
                .map(|p| p.system.as_str())
                .collect();
            s.sort();
            s.dedup();
            s
        };
        let mut per_annotator: BTreeMap<String, BTreeMap<String, AnnotatorSystemStats>> =
            BTreeMap::new();
        let mut completion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for a in &self.session.annotator_ids {
            let mut counts: BTreeMap<String, (usize, usize)> =
                systems.iter().map(|s| (s.to_string(), (0, 0))).collect();
            for p in &self.session.pairs {
                if let Some(label) = self.effective_label(a, &p.pair_id) {
                    let c = counts.get_mut(&p.system).expect("system listed");
                    c.0 += 1;
                    c.1 += usize::from(label);
                }
            }
            completion.insert(
                a.clone(),
                counts.iter().map(|(s, c)| (s.clone(), c.0)).collect(),
            );
            per_annotator.insert(
                a.clone(),
                counts
                    .into_iter()
                    .map(|(s, (judged, positive))| {
                        let accuracy = (judged > 0).then(|| positive as f64 / judged as f64);
                        (
                            s,
                            AnnotatorSystemStats {
                                judged,
                                positive,
                                accuracy,
                            },
                        )
                    })
                    .collect(),
            );
        }

        let mut system_stats = BTreeMap::new();
        for s in &systems {
            let mut accs: Vec<f64> = per_annotator
                .values()
                .filter_map(|m| m.get(*s).and_then(|x| x.accuracy))
                .collect();
            if accs.is_empty() {
                continue;
            }
            accs.sort_by(f64::total_cmp);
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            system_stats.insert(
                s.to_string(),
                SystemStats {
                    mean,
                    min: accs[0],
                    max: accs[accs.len() - 1],
                    n_annotators: accs.len(),
                },
            );
        }
        Stats {
            session_id: self.session.session_id.clone(),
            systems: system_stats,
            per_annotator,
            completion,
            judged_total: self.effective.len(),
            expected_total: self.session.expected_judgments(),
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// A live session: a single log writer plus a readable snapshot that is
/// replaced after every append.
pub struct SessionHandle {
    log_path: PathBuf,
    writer: Mutex<File>,
    snapshot: RwLock<Arc<SessionState>>,
}

impl SessionHandle {
    pub fn snapshot(&self) -> Arc<SessionState> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    pub fn next_pair(&self, annotator_id: &str) -> Result<NextPair, HumanEvalError> {
        self.snapshot().next_pair(annotator_id)
    }

    pub fn aggregate(&self) -> Stats {
        self.snapshot().aggregate()
    }

    pub fn submit_judgment(
        &self,
        annotator_id: &str,
        pair_id: &str,
        label: u8,
    ) -> Result<Progress, HumanEvalError> {
        self.snapshot().check(annotator_id, pair_id, label)?;
        let judgment = Judgment {
            annotator_id: annotator_id.to_string(),
            pair_id: pair_id.to_string(),
            label,
            submitted_at: now_ms(),
        };
        let mut line = serde_json::to_string(&judgment).expect("judgment serializes");
        line.push('\n');

        let mut writer = self.writer.lock().expect("log writer lock");
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.flush())
            .map_err(|e| IoError::io(&self.log_path, e))?;
        let mut next = (*self.snapshot()).clone();
        next.apply(&judgment);
        let progress = next.progress(annotator_id)?;
        *self.snapshot.write().expect("snapshot lock") = Arc::new(next);
        Ok(progress)
    }

    /// The raw judgment log, history included.
    pub fn export(&self) -> Result<String, HumanEvalError> {
        let _guard = self.writer.lock().expect("log writer lock");
        fs::read_to_string(&self.log_path).map_err(|e| IoError::io(&self.log_path, e).into())
    }
}

/// Reads a judgment log. A torn final line (crash mid-append) is ignored;
/// damage anywhere else is an error.
pub fn read_log(path: &Path) -> Result<Vec<Judgment>, HumanEvalError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(IoError::io(path, e).into()),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(j) => out.push(j),
            Err(_) if i == last => {
                tracing::warn!(path = %path.display(), "ignoring torn final log line")
            }
            Err(e) => {
                return Err(HumanEvalError::CorruptSession {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", i + 1),
                })
            }
        }
    }
    Ok(out)
}

/// Cuts a partial final line so the next append starts on a fresh line.
fn truncate_torn_tail(path: &Path) -> Result<(), HumanEvalError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(IoError::io(path, e).into()),
    };
    if bytes.last().is_none_or(|b| *b == b'\n') {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    let file = OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(|e| IoError::io(path, e))?;
    file.set_len(keep as u64)
        .map_err(|e| IoError::io(path, e))?;
    Ok(())
}

/// Directory-backed collection of sessions.
pub struct SessionStore {
    root: PathBuf,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

impl SessionStore {
    /// Opens the store and reloads every session found under `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, HumanEvalError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| IoError::io(&root, e))?;
        let store = Self {
            root,
            sessions: RwLock::new(HashMap::new()),
        };
        let entries = fs::read_dir(&store.root).map_err(|e| IoError::io(&store.root, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| IoError::io(&store.root, e))?;
            if entry.path().join(SESSION_FILE).is_file() {
                let handle = store.load(&entry.path())?;
                let id = handle.snapshot().session().session_id.clone();
                store
                    .sessions
                    .write()
                    .expect("sessions lock")
                    .insert(id, Arc::new(handle));
            }
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn load(&self, dir: &Path) -> Result<SessionHandle, HumanEvalError> {
        let session_path = dir.join(SESSION_FILE);
        let bytes = fs::read(&session_path).map_err(|e| IoError::io(&session_path, e))?;
        let session: Session =
            serde_json::from_slice(&bytes).map_err(|e| HumanEvalError::CorruptSession {
                path: session_path.clone(),
                message: e.to_string(),
            })?;
        let log_path = dir.join(LOG_FILE);
        let log = read_log(&log_path)?;
        truncate_torn_tail(&log_path)?;
        let state = SessionState::replay(session, &log)?;
        self.handle(log_path, state)
    }

    fn handle(
        &self,
        log_path: PathBuf,
        state: SessionState,
    ) -> Result<SessionHandle, HumanEvalError> {
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| IoError::io(&log_path, e))?;
        Ok(SessionHandle {
            log_path,
            writer: Mutex::new(writer),
            snapshot: RwLock::new(Arc::new(state)),
        })
    }

    pub fn create_session(&self, session: Session) -> Result<Arc<SessionHandle>, HumanEvalError> {
        let state = SessionState::new(session.clone())?;
        let mut sessions = self.sessions.write().expect("sessions lock");
        if sessions.contains_key(&session.session_id) {
            return Err(HumanEvalError::DuplicateSessionId(session.session_id));
        }
        let dir = self.root.join(&session.session_id);
        if dir.join(SESSION_FILE).exists() {
            return Err(HumanEvalError::DuplicateSessionId(session.session_id));
        }
        fs::create_dir_all(&dir).map_err(|e| IoError::io(&dir, e))?;
        let session_path = dir.join(SESSION_FILE);
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| IoError::io(&dir, e))?;
        serde_json::to_writer(&mut tmp, &session).expect("session serializes");
        tmp.as_file()
            .sync_all()
            .map_err(|e| IoError::io(&session_path, e))?;
        tmp.persist(&session_path)
            .map_err(|e| IoError::io(&session_path, e.error))?;

        let log_path = dir.join(LOG_FILE);
        File::create(&log_path).map_err(|e| IoError::io(&log_path, e))?;
        let handle = Arc::new(self.handle(log_path, state)?);
        sessions.insert(session.session_id.clone(), handle.clone());
        Ok(handle)
    }

    /// Returns the existing session if it has identical contents, otherwise
    /// creates it.
    pub fn open_or_create(&self, session: Session) -> Result<Arc<SessionHandle>, HumanEvalError> {
        if let Ok(existing) = self.get(&session.session_id) {
            if *existing.snapshot().session() == session {
                return Ok(existing);
            }
            return Err(HumanEvalError::DuplicateSessionId(session.session_id));
        }
        self.create_session(session)
    }

    pub fn get(&self, session_id: &str) -> Result<Arc<SessionHandle>, HumanEvalError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(session_id)
            .cloned()
            .ok_or_else(|| HumanEvalError::UnknownSession(session_id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self
            .sessions
            .read()
            .expect("sessions lock")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }
}

/// Parses a comma-separated annotator list, trimming entries.
pub fn parse_annotator_csv(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}
