//! Embedded sorted cell store for free-form text.
//!
//! Cells are keyed by (row, colfam, colqual, timestamp) and kept ordered by
//! row, family and qualifier ascending with the newest timestamp first.

use std::cmp::{Ordering, Reverse};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;

use crate::csv::{parse_csv, render_csv};
use crate::error::{Error, Result};
use crate::snapshot::{self, TEMP_PREFIX};
use crate::value::{check_identifier, Field, ResultSet, Schema, Value, ValueKind};

pub const SNAPSHOT_HEADER: &str = "POLYGATE-KV v1";
const SNAPSHOT_EXT: &str = "kv";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KvEntry {
    pub row: String,
    pub colfam: String,
    pub colqual: String,
    pub timestamp: i64,
    pub value: String,
}

impl KvEntry {
    pub fn new(row: &str, colfam: &str, colqual: &str, timestamp: i64, value: &str) -> KvEntry {
        KvEntry {
            row: row.into(),
            colfam: colfam.into(),
            colqual: colqual.into(),
            timestamp,
            value: value.into(),
        }
    }

    fn key(&self) -> KvKey {
        KvKey {
            row: self.row.clone(),
            colfam: self.colfam.clone(),
            colqual: self.colqual.clone(),
            timestamp: Reverse(self.timestamp),
        }
    }

    pub fn to_row(&self) -> Vec<Value> {
        vec![
            Value::Text(self.row.clone()),
            Value::Text(self.colfam.clone()),
            Value::Text(self.colqual.clone()),
            Value::Int(self.timestamp),
            Value::Text(self.value.clone()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct KvKey {
    row: String,
    colfam: String,
    colqual: String,
    timestamp: Reverse<i64>,
}

/// Canonical key order of two entries.
pub fn key_order(a: &KvEntry, b: &KvEntry) -> Ordering {
    a.key().cmp(&b.key())
}

/// Schema of every text scan: (row, colfam, colqual, ts, value).
pub fn kv_schema() -> Schema {
    Schema::new(vec![
        Field::new("row", ValueKind::Text),
        Field::new("colfam", ValueKind::Text),
        Field::new("colqual", ValueKind::Text),
        Field::new("ts", ValueKind::Int64),
        Field::new("value", ValueKind::Text),
    ])
    .expect("static schema")
}

/// Parameters of one scan. Row bounds are half-open and byte-wise.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanSpec {
    pub table: String,
    pub start: Option<String>,
    pub end: Option<String>,
    pub pattern: Option<String>,
    pub latest_only: bool,
}

impl ScanSpec {
    pub fn table(name: &str) -> ScanSpec {
        ScanSpec {
            table: name.to_string(),
            ..ScanSpec::default()
        }
    }
}

/// Copy-on-write entry map behind a per-table lock.
type Table = Arc<RwLock<Arc<BTreeMap<KvKey, String>>>>;

#[derive(Debug, Default)]
pub struct TextEngine {
    tables: RwLock<BTreeMap<String, Table>>,
}

fn key(name: &str) -> String {
    name.to_ascii_lowercase()
}

impl TextEngine {
    pub fn new() -> Self {
        Self::default()
    }

    fn table(&self, name: &str) -> Result<Table> {
        self.tables
            .read()
            .get(&key(name))
            .cloned()
            .ok_or_else(|| Error::NoSuchObject(name.to_string()))
    }

    pub fn create_kv(&self, name: &str) -> Result<()> {
        check_identifier(name)?;
        let mut tables = self.tables.write();
        if tables.contains_key(&key(name)) {
            return Err(Error::DuplicateObject(name.to_string()));
        }
        tables.insert(key(name), Arc::default());
        Ok(())
    }

    pub fn drop_kv(&self, name: &str) -> Result<()> {
        self.tables
            .write()
            .remove(&key(name))
            .map(|_| ())
            .ok_or_else(|| Error::NoSuchObject(name.to_string()))
    }

    /// Inserts entries; an existing full key has its value replaced.
    pub fn put(&self, name: &str, entries: Vec<KvEntry>) -> Result<usize> {
        let table = self.table(name)?;
        let mut t = table.write();
        let map = Arc::make_mut(&mut t);
        let n = entries.len();
        for e in entries {
            map.insert(e.key(), e.value);
        }
        Ok(n)
    }

    pub fn entry_count(&self, name: &str) -> Result<usize> {
        Ok(self.table(name)?.read().len())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tables.read().contains_key(&key(name))
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.read().keys().cloned().collect()
    }

    pub fn entries(&self, name: &str) -> Result<Vec<KvEntry>> {
        let snapshot = self.table(name)?.read().clone();
        Ok(snapshot
            .iter()
            .map(|(k, v)| KvEntry {
                row: k.row.clone(),
                colfam: k.colfam.clone(),
                colqual: k.colqual.clone(),
                timestamp: k.timestamp.0,
                value: v.clone(),
            })
            .collect())
    }

    pub fn scan(&self, spec: &ScanSpec) -> Result<ResultSet> {
        if let (Some(s), Some(e)) = (&spec.start, &spec.end) {
            if s.as_bytes() > e.as_bytes() {
                return Err(Error::InvalidRange {
                    start: s.clone(),
                    end: e.clone(),
                });
            }
        }
        let snapshot = self.table(&spec.table)?.read().clone();
        let lower = KvKey {
            row: spec.start.clone().unwrap_or_default(),
            colfam: String::new(),
            colqual: String::new(),
            timestamp: Reverse(i64::MAX),
        };
        let mut rows = Vec::new();
        let mut last_group: Option<&KvKey> = None;
        for (k, v) in snapshot.range(lower..) {
            if let Some(end) = &spec.end {
                if k.row.as_bytes() >= end.as_bytes() {
                    break;
                }
            }
            if let Some(p) = &spec.pattern {
                if !v.contains(p.as_str()) {
                    continue;
                }
            }
            if spec.latest_only {
                // Newest entry of each (row, colfam, colqual) comes first.
                let same = last_group.is_some_and(|g| g.row == k.row && g.colfam == k.colfam && g.colqual == k.colqual);
                last_group = Some(k);
                if same {
                    continue;
                }
            }
            rows.push(vec![
                Value::Text(k.row.clone()),
                Value::Text(k.colfam.clone()),
                Value::Text(k.colqual.clone()),
                Value::Int(k.timestamp.0),
                Value::Text(v.clone()),
            ]);
        }
        Ok(ResultSet {
            schema: kv_schema(),
            rows,
        })
    }

    pub fn snapshot_text(&self, name: &str) -> Result<String> {
        let rs = self.scan(&ScanSpec::table(name))?;
        Ok(format!("{SNAPSHOT_HEADER}\n{}", render_csv(&rs)))
    }

    pub fn restore_text(&self, name: &str, text: &str) -> Result<()> {
        let file = format!("{name}.{SNAPSHOT_EXT}");
        let csv = snapshot::expect_header(text, SNAPSHOT_HEADER, &file)?;
        let rs = parse_csv(csv, &kv_schema()).map_err(snapshot::annotate(&file))?;
        let mut entries = Vec::with_capacity(rs.rows.len());
        for row in rs.rows {
            match row.as_slice() {
                [Value::Text(r), Value::Text(f), Value::Text(q), Value::Int(ts), Value::Text(v)] => {
                    entries.push(KvEntry::new(r, f, q, *ts, v));
                }
                _ => {
                    return Err(Error::Snapshot {
                        file,
                        reason: "null field in entry".into(),
                    })
                }
            }
        }
        self.create_kv(name)?;
        self.put(name, entries)?;
        Ok(())
    }

    pub fn flush(&self, dir: &Path) -> Result<()> {
        let mut objects = Vec::new();
        for name in self.table_names() {
            if !name.starts_with(TEMP_PREFIX) {
                objects.push((name.clone(), self.snapshot_text(&name)?));
            }
        }
        snapshot::write_dir(dir, SNAPSHOT_EXT, &objects)
    }

    pub fn load(&self, dir: &Path) -> Result<()> {
        self.clear();
        for (name, text) in snapshot::read_dir(dir, SNAPSHOT_EXT)? {
            self.restore_text(&name, &text)?;
        }
        Ok(())
    }

    pub fn clear(&self) {
        self.tables.write().clear();
    }
}
