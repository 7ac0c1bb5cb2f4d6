//! Durable storage for instance records.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::StoredInstance;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("store record {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// Map from instance id to its serialized record.
pub trait InstanceStore: Send + Sync {
    fn put(&self, record: &StoredInstance) -> Result<(), StoreError>;
    fn get(&self, id: &str) -> Result<Option<StoredInstance>, StoreError>;
    fn remove(&self, id: &str) -> Result<(), StoreError>;
    fn all(&self) -> Result<Vec<StoredInstance>, StoreError>;
}

#[derive(Default)]
pub struct MemoryStore {
    records: Mutex<BTreeMap<String, String>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn decode(text: &str, line: usize) -> Result<StoredInstance, StoreError> {
    serde_json::from_str(text).map_err(|e| StoreError::Corrupt { line, message: e.to_string() })
}

impl InstanceStore for MemoryStore {
    fn put(&self, record: &StoredInstance) -> Result<(), StoreError> {
        let text = serde_json::to_string(record).expect("records serialize");
        self.records.lock().insert(record.instance.instance_id.clone(), text);
        Ok(())
    }

    fn get(&self, id: &str) -> Result<Option<StoredInstance>, StoreError> {
        self.records.lock().get(id).map(|t| decode(t, 0)).transpose()
    }

    fn remove(&self, id: &str) -> Result<(), StoreError> {
        self.records.lock().remove(id);
        Ok(())
    }

    fn all(&self) -> Result<Vec<StoredInstance>, StoreError> {
        self.records.lock().values().map(|t| decode(t, 0)).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum LogEntry {
    Put { record: Box<StoredInstance> },
    Del { id: String },
}

struct FileState {
    file: File,
    live: BTreeMap<String, StoredInstance>,
    entries: usize,
}

/// Single-file append log, compacted when dead entries outnumber live ones.
pub struct FileStore {
    path: PathBuf,
    state: Mutex<FileState>,
}

impl FileStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut live = BTreeMap::new();
        let mut entries = 0;
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
            let last = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<LogEntry>(line) {
                    Ok(LogEntry::Put { record }) => {
                        live.insert(record.instance.instance_id.clone(), *record);
                    }
                    Ok(LogEntry::Del { id }) => {
                        live.remove(&id);
                    }
                    // a torn final write from a crash is dropped
                    Err(_) if i + 1 == last => break,
                    Err(e) => return Err(StoreError::Corrupt { line: i + 1, message: e.to_string() }),
                }
                entries += 1;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let store = FileStore { path, state: Mutex::new(FileState { file, live, entries }) };
        store.compact()?;
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append(&self, st: &mut FileState, entry: &LogEntry) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(entry).expect("entries serialize");
        line.push('\n');
        st.file.write_all(line.as_bytes())?;
        st.file.flush()?;
        st.entries += 1;
        Ok(())
    }

    /// Rewrites the log with one entry per live record.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut st = self.state.lock();
        self.compact_locked(&mut st)
    }

    fn compact_locked(&self, st: &mut FileState) -> Result<(), StoreError> {
        let tmp = self.path.with_extension("compact");
        {
            let mut out = File::create(&tmp)?;
            for record in st.live.values() {
                let entry = LogEntry::Put { record: Box::new(record.clone()) };
                let mut line = serde_json::to_string(&entry).expect("entries serialize");
                line.push('\n');
                out.write_all(line.as_bytes())?;
            }
            out.sync_all()?;
        }
        std::fs::rename(&tmp, &self.path)?;
        st.file = OpenOptions::new().append(true).open(&self.path)?;
        st.entries = st.live.len();
        Ok(())
    }

    fn maybe_compact(&self, st: &mut FileState) -> Result<(), StoreError> {
        if st.entries > 64 && st.entries > 2 * st.live.len() {
            self.compact_locked(st)?;
        }
        Ok(())
    }
}

impl InstanceStore for FileStore {
    fn put(&self, record: &StoredInstance) -> Result<(), StoreError> {
        let mut st = self.state.lock();
        self.append(&mut st, &LogEntry::Put { record: Box::new(record.clone()) })?;
        st.live.insert(record.instance.instance_id.clone(), record.clone());
        self.maybe_compact(&mut st)
    }

    fn get(&self, id: &str) -> Result<Option<StoredInstance>, StoreError> {
        Ok(self.state.lock().live.get(id).cloned())
    }

    fn remove(&self, id: &str) -> Result<(), StoreError> {
        let mut st = self.state.lock();
        if st.live.remove(id).is_some() {
            self.append(&mut st, &LogEntry::Del { id: id.to_string() })?;
            self.maybe_compact(&mut st)?;
        }
        Ok(())
    }

    fn all(&self) -> Result<Vec<StoredInstance>, StoreError> {
        Ok(self.state.lock().live.values().cloned().collect())
    }
}
