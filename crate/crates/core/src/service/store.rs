use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use crate::engine::{read_jsonl, LogError, ReplayError, Session, TraceEvent};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: LogError,
    },
    #[error("{path}: {source}")]
    Replay {
        path: PathBuf,
        #[source]
        source: ReplayError,
    },
    #[error("{0} already exists")]
    Exists(PathBuf),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One append-only JSON Lines log per session under a root directory.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, session_id: &str) -> PathBuf {
        self.root.join(format!("{session_id}.jsonl"))
    }

    /// Creates the log for a new session and writes its events.
    pub fn create(&self, session: &Session) -> Result<(), StoreError> {
        let path = self.path_for(&session.id);
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => StoreError::Exists(path.clone()),
                _ => StoreError::Io {
                    path: path.clone(),
                    source: e,
                },
            })?;
        write_durably(file, &path, &session.events)?;
        // make the new directory entry durable too
        if let Ok(dir) = File::open(&self.root) {
            let _ = dir.sync_all();
        }
        Ok(())
    }

    /// Appends events and syncs them to disk before returning.
    pub fn append(&self, session_id: &str, events: &[TraceEvent]) -> Result<(), StoreError> {
        if events.is_empty() {
            return Ok(());
        }
        let path = self.path_for(session_id);
        let file = OpenOptions::new().append(true).open(&path).map_err(io(&path))?;
        write_durably(file, &path, events)
    }

    pub fn load(&self, path: &Path) -> Result<Session, StoreError> {
        let file = File::open(path).map_err(io(path))?;
        let events = read_jsonl(BufReader::new(file)).map_err(|source| StoreError::Log {
            path: path.to_path_buf(),
            source,
        })?;
        Session::replay(events).map_err(|source| StoreError::Replay {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Every `*.jsonl` file under the root, sorted by name.
    pub fn logs(&self) -> Result<Vec<PathBuf>, StoreError> {
        let mut logs: Vec<PathBuf> = fs::read_dir(&self.root)
            .map_err(io(&self.root))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "jsonl"))
            .collect();
        logs.sort();
        Ok(logs)
    }

    /// Moves an unreadable log aside as `<name>.corrupt` (or
    /// `<name>.corrupt.N` if that is taken) and returns the new path.
    pub fn quarantine(&self, path: &Path) -> Result<PathBuf, StoreError> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let mut target = path.with_file_name(format!("{name}.corrupt"));
        let mut n = 1;
        while target.exists() {
            target = path.with_file_name(format!("{name}.corrupt.{n}"));
            n += 1;
        }
        fs::rename(path, &target).map_err(io(path))?;
        Ok(target)
    }
}

fn write_durably(mut file: File, path: &Path, events: &[TraceEvent]) -> Result<(), StoreError> {
    let mut buf = Vec::new();
    crate::engine::write_jsonl(&mut buf, events).map_err(io(path))?;
    file.write_all(&buf).map_err(io(path))?;
    file.sync_data().map_err(io(path))
}
