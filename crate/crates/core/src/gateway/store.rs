//! Append-only session logs under `<data_dir>/sessions/<id>.jsonl`.
//!
//! Line 1 is the session header, every further line one completed turn.
//! A final line without its newline is a write torn by a crash and is
//! ignored on load; any other unreadable content moves the whole file
//! aside as `<id>.jsonl.corrupt`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::rag::{ChatTurn, Session};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    session_id: String,
    created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub turn_count: usize,
}

/// Outcome of scanning the session directory at startup.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    pub quarantined: Vec<PathBuf>,
    pub torn_tails: usize,
}

pub type SessionHandle = Arc<Mutex<Session>>;

pub struct SessionStore {
    dir: PathBuf,
    sessions: Mutex<HashMap<String, SessionHandle>>,
}

/// Ids are generated as UUIDs; anything else could escape the directory.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

impl SessionStore {
    pub fn open(dir: &Path) -> Result<(Self, LoadReport), GatewayError> {
        std::fs::create_dir_all(dir)?;
        let mut report = LoadReport::default();
        let mut sessions = HashMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            match read_log(&path) {
                Ok((session, torn)) => {
                    if torn {
                        report.torn_tails += 1;
                    }
                    report.loaded += 1;
                    sessions.insert(session.session_id.clone(), Arc::new(Mutex::new(session)));
                }
                Err(reason) => {
                    let target = quarantine_path(&path);
                    tracing::warn!(path = %path.display(), %reason, "quarantining session log");
                    std::fs::rename(&path, &target)?;
                    report.quarantined.push(target);
                }
            }
        }
        Ok((
            Self {
                dir: dir.to_path_buf(),
                sessions: Mutex::new(sessions),
            },
            report,
        ))
    }

    fn path_for(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    pub fn create(&self) -> Result<Session, GatewayError> {
        let session = Session::new();
        let header = Header {
            session_id: session.session_id.clone(),
            created_at: session.created_at,
        };
        let mut line = serde_json::to_string(&header).map_err(std::io::Error::from)?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(self.path_for(&session.session_id))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        self.lock()
            .insert(session.session_id.clone(), Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        if !valid_session_id(id) {
            return None;
        }
        self.lock().get(id).cloned()
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        let handles: Vec<SessionHandle> = self.lock().values().cloned().collect();
        let mut out: Vec<SessionSummary> = handles
            .iter()
            .map(|h| {
                let s = h.lock().unwrap_or_else(|p| p.into_inner());
                SessionSummary {
                    session_id: s.session_id.clone(),
                    created_at: s.created_at,
                    turn_count: s.turns.len(),
                }
            })
            .collect();
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.session_id.cmp(&b.session_id)));
        out
    }

    /// Durably append one turn. Callers hold the session's lock so appends
    /// to one log never interleave.
    pub fn append_turn(&self, id: &str, turn: &ChatTurn) -> Result<(), GatewayError> {
        let mut line = serde_json::to_string(turn).map_err(std::io::Error::from)?;
        line.push('\n');
        let mut f = OpenOptions::new().append(true).open(self.path_for(id))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, SessionHandle>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }
}

fn quarantine_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".corrupt");
    let mut target = path.with_file_name(&name);
    let mut n = 1;
    while target.exists() {
        target = path.with_file_name(format!("{}.{n}", name.to_string_lossy()));
        n += 1;
    }
    target
}

/// Parse one log; `Ok((session, torn_tail))` or the reason it is unusable.
fn read_log(path: &Path) -> Result<(Session, bool), String> {
    let mut text = String::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_string(&mut text))
        .map_err(|e| e.to_string())?;
    let complete = text.ends_with('\n');
    let mut lines: Vec<&str> = text.lines().collect();
    let mut torn = false;
    if !complete && !lines.is_empty() {
        lines.pop();
        torn = true;
    }
    let mut iter = lines.into_iter().enumerate();
    let header: Header = match iter.next() {
        Some((_, l)) => serde_json::from_str(l).map_err(|e| format!("line 1: {e}"))?,
        None => return Err("empty log".into()),
    };
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    if header.session_id != stem {
        return Err(format!("header id `{}` does not match file name", header.session_id));
    }
    let mut session = Session {
        session_id: header.session_id,
        created_at: header.created_at,
        turns: Vec::new(),
    };
    for (i, line) in iter {
        if line.trim().is_empty() {
            continue;
        }
        let turn: ChatTurn = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        session.push(turn);
    }
    Ok((session, torn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rag::Citation;

    fn turn(q: &str) -> ChatTurn {
        ChatTurn {
            user_query: q.into(),
            response: format!("re: {q}"),
            citations: vec![Citation {
                chunk_id: "d#0".into(),
                doc_id: "d".into(),
                score: 0.5,
            }],
            timestamp: Utc::now(),
        }
    }

    #[test]
    fn reopen_restores_turns() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = SessionStore::open(dir.path()).unwrap();
        let s = store.create().unwrap();
        store.append_turn(&s.session_id, &turn("one")).unwrap();
        store.append_turn(&s.session_id, &turn("two")).unwrap();
        drop(store);

        let (store, report) = SessionStore::open(dir.path()).unwrap();
        assert_eq!(report.loaded, 1);
        let h = store.get(&s.session_id).unwrap();
        let back = h.lock().unwrap();
        assert_eq!(back.turns.len(), 2);
        assert_eq!(back.turns[1].user_query, "two");
        assert_eq!(back.created_at, s.created_at);
    }

    #[test]
    fn torn_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = SessionStore::open(dir.path()).unwrap();
        let s = store.create().unwrap();
        store.append_turn(&s.session_id, &turn("kept")).unwrap();
        let path = dir.path().join(format!("{}.jsonl", s.session_id));
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"user_query\":\"half").unwrap();
        drop(store);

        let (store, report) = SessionStore::open(dir.path()).unwrap();
        assert_eq!(report.torn_tails, 1);
        assert_eq!(store.get(&s.session_id).unwrap().lock().unwrap().turns.len(), 1);
    }

    #[test]
    fn corrupt_log_is_quarantined() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.jsonl"), "not json\n").unwrap();
        let (store, report) = SessionStore::open(dir.path()).unwrap();
        assert_eq!(report.loaded, 0);
        assert_eq!(report.quarantined.len(), 1);
        assert!(dir.path().join("bad.jsonl.corrupt").exists());
        assert!(store.list().is_empty());
    }

    #[test]
    fn path_like_ids_are_rejected() {
        assert!(!valid_session_id("../etc/passwd"));
        assert!(!valid_session_id(""));
        assert!(valid_session_id("0b6f6a4e-2f8e-4c3b-9c1d-2f7f3f0b9a11"));
    }
}
