//! Managed engine instances. A handle stands in for one engine container on
//! the cluster network: it can be stopped (snapshotted and unloaded) and
//! started again (reloaded), and every call through it fails fast while it
//! is down.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::time::Duration;

use parking_lot::RwLock;

use crate::array::ArrayEngine;
use crate::error::{Error, Result};
use crate::lang::Island;
use crate::rel::RelEngine;
use crate::text::TextEngine;

/// How long `stop` waits for in-flight operations before forcing down.
pub const STOP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug)]
pub enum EngineInstance {
    Rel(RelEngine),
    Arr(ArrayEngine),
    Text(TextEngine),
}

impl EngineInstance {
    pub fn new(kind: Island) -> EngineInstance {
        match kind {
            Island::Relational => EngineInstance::Rel(RelEngine::new()),
            Island::Array => EngineInstance::Arr(ArrayEngine::new()),
            Island::Text => EngineInstance::Text(TextEngine::new()),
        }
    }

    pub fn kind(&self) -> Island {
        match self {
            EngineInstance::Rel(_) => Island::Relational,
            EngineInstance::Arr(_) => Island::Array,
            EngineInstance::Text(_) => Island::Text,
        }
    }

    pub fn rel(&self) -> Result<&RelEngine> {
        match self {
            EngineInstance::Rel(e) => Ok(e),
            other => Err(Error::KindMismatch(format!("expected relational engine, found {}", other.kind()))),
        }
    }

    pub fn arr(&self) -> Result<&ArrayEngine> {
        match self {
            EngineInstance::Arr(e) => Ok(e),
            other => Err(Error::KindMismatch(format!("expected array engine, found {}", other.kind()))),
        }
    }

    pub fn text(&self) -> Result<&TextEngine> {
        match self {
            EngineInstance::Text(e) => Ok(e),
            other => Err(Error::KindMismatch(format!("expected text engine, found {}", other.kind()))),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        match self {
            EngineInstance::Rel(e) => e.contains(name),
            EngineInstance::Arr(e) => e.contains(name),
            EngineInstance::Text(e) => e.contains(name),
        }
    }

    pub fn object_names(&self) -> Vec<String> {
        match self {
            EngineInstance::Rel(e) => e.table_names(),
            EngineInstance::Arr(e) => e.array_names(),
            EngineInstance::Text(e) => e.table_names(),
        }
    }

    /// Rows, cells or entries held by `name`.
    pub fn count(&self, name: &str) -> Result<usize> {
        match self {
            EngineInstance::Rel(e) => e.row_count(name),
            EngineInstance::Arr(e) => e.cell_count(name),
            EngineInstance::Text(e) => e.entry_count(name),
        }
    }

    pub fn drop_object(&self, name: &str) -> Result<()> {
        match self {
            EngineInstance::Rel(e) => e.drop_table(name),
            EngineInstance::Arr(e) => e.drop_array(name),
            EngineInstance::Text(e) => e.drop_kv(name),
        }
    }

    /// Full snapshot text of one object.
    pub fn snapshot_text(&self, name: &str) -> Result<String> {
        match self {
            EngineInstance::Rel(e) => e.snapshot_text(name),
            EngineInstance::Arr(e) => e.snapshot_text(name),
            EngineInstance::Text(e) => e.snapshot_text(name),
        }
    }

    pub fn restore_text(&self, name: &str, text: &str) -> Result<()> {
        match self {
            EngineInstance::Rel(e) => e.restore_text(name, text),
            EngineInstance::Arr(e) => e.restore_text(name, text),
            EngineInstance::Text(e) => e.restore_text(name, text),
        }
    }

    pub fn flush(&self, dir: &std::path::Path) -> Result<()> {
        match self {
            EngineInstance::Rel(e) => e.flush(dir),
            EngineInstance::Arr(e) => e.flush(dir),
            EngineInstance::Text(e) => e.flush(dir),
        }
    }

    pub fn load(&self, dir: &std::path::Path) -> Result<()> {
        match self {
            EngineInstance::Rel(e) => e.load(dir),
            EngineInstance::Arr(e) => e.load(dir),
            EngineInstance::Text(e) => e.load(dir),
        }
    }

    pub fn clear(&self) {
        match self {
            EngineInstance::Rel(e) => e.clear(),
            EngineInstance::Arr(e) => e.clear(),
            EngineInstance::Text(e) => e.clear(),
        }
    }
}

#[derive(Debug)]
pub struct EngineHandle {
    pub name: String,
    pub kind: Island,
    pub address: String,
    pub data_dir: Option<PathBuf>,
    eid: AtomicI64,
    up: AtomicBool,
    /// Readers are in-flight operations; `stop` takes it exclusively.
    gate: RwLock<()>,
    instance: EngineInstance,
}

impl EngineHandle {
    /// A running engine with no data.
    pub fn new(name: &str, kind: Island, address: &str, data_dir: Option<PathBuf>) -> EngineHandle {
        EngineHandle {
            name: name.to_ascii_lowercase(),
            kind,
            address: address.to_string(),
            data_dir,
            eid: AtomicI64::new(0),
            up: AtomicBool::new(true),
            gate: RwLock::new(()),
            instance: EngineInstance::new(kind),
        }
    }

    /// Loads the snapshot directory, if configured.
    pub fn open(&self) -> Result<()> {
        let _g = self.gate.write();
        if let Some(dir) = &self.data_dir {
            self.instance.load(dir)?;
        }
        Ok(())
    }

    pub fn eid(&self) -> i64 {
        self.eid.load(Ordering::SeqCst)
    }

    pub(crate) fn set_eid(&self, eid: i64) {
        self.eid.store(eid, Ordering::SeqCst);
    }

    pub fn is_up(&self) -> bool {
        self.up.load(Ordering::SeqCst)
    }

    /// Runs `f` against the engine, failing fast when it is down.
    pub fn with<R>(&self, f: impl FnOnce(&EngineInstance) -> Result<R>) -> Result<R> {
        let _g = self.gate.read_recursive();
        if !self.is_up() {
            return Err(Error::unavailable(&self.name));
        }
        f(&self.instance)
    }

    /// Marks the engine down. With a data directory the contents are
    /// flushed and unloaded. Returns whether the state changed.
    pub fn stop(&self) -> Result<bool> {
        let guard = self.gate.try_write_for(STOP_TIMEOUT);
        if guard.is_none() {
            log::warn!("engine {} did not drain within {:?}; forcing down", self.name, STOP_TIMEOUT);
        }
        if !self.up.swap(false, Ordering::SeqCst) {
            return Ok(false);
        }
        if let Some(dir) = &self.data_dir {
            self.instance.flush(dir)?;
            self.instance.clear();
        }
        Ok(true)
    }

    /// Marks the engine up, reloading its snapshot directory first.
    pub fn start(&self) -> Result<bool> {
        let _g = self.gate.write();
        if self.is_up() {
            return Ok(false);
        }
        if let Some(dir) = &self.data_dir {
            self.instance.load(dir)?;
        }
        self.up.store(true, Ordering::SeqCst);
        Ok(true)
    }

    /// Drops `name` if present, even while the engine is down.
    pub fn purge(&self, name: &str) -> Result<()> {
        let _g = self.gate.read_recursive();
        if self.instance.contains(name) {
            self.instance.drop_object(name)?;
        }
        Ok(())
    }

    /// Names of temp objects held in memory, whatever the engine state.
    pub fn temp_objects(&self) -> Vec<String> {
        let _g = self.gate.read_recursive();
        self.instance
            .object_names()
            .into_iter()
            .filter(|n| n.starts_with(crate::snapshot::TEMP_PREFIX))
            .collect()
    }

    /// Writes snapshots without changing state.
    pub fn flush(&self) -> Result<()> {
        match &self.data_dir {
            Some(dir) => self.with(|i| i.flush(dir)),
            None => Ok(()),
        }
    }
}
