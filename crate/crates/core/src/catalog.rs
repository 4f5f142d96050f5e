//! Middleware metadata kept in reserved tables of one relational engine.
//! Every read goes through the engine's query path; the only state held
//! here is the id allocator.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::Serialize;

use crate::engine::EngineHandle;
use crate::error::{Error, Result};
use crate::lang::Island;
use crate::rel::{RelEngine, RelPlan};
use crate::snapshot::TEMP_PREFIX;
use crate::value::{check_identifier, Row, Schema, Value};

pub const ENGINES_TABLE: &str = "__bd_engines";
pub const OBJECTS_TABLE: &str = "__bd_objects";
pub const ISLANDS_TABLE: &str = "__bd_islands";
pub const RESERVED_PREFIX: &str = "__bd";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Up,
    Down,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Up => "up",
            Status::Down => "down",
        }
    }

    fn parse(s: &str) -> Result<Status> {
        match s {
            "up" => Ok(Status::Up),
            "down" => Ok(Status::Down),
            _ => Err(corrupt(format!("bad status {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EngineEntry {
    pub eid: i64,
    pub name: String,
    pub kind: Island,
    pub address: String,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObjectEntry {
    pub oid: i64,
    pub name: String,
    /// Comma-joined field names.
    pub fields: String,
    pub engine_id: i64,
    pub island: Island,
    pub is_temp: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IslandEntry {
    pub iid: i64,
    pub scope_name: String,
    pub kind: Island,
}

fn corrupt(msg: String) -> Error {
    Error::Plan(format!("catalog corrupt: {msg}"))
}

fn text(v: &Value) -> Result<&str> {
    match v {
        Value::Text(s) => Ok(s),
        other => Err(corrupt(format!("expected text, found {other:?}"))),
    }
}

fn int(v: &Value) -> Result<i64> {
    match v {
        Value::Int(i) => Ok(*i),
        other => Err(corrupt(format!("expected integer, found {other:?}"))),
    }
}

fn island(v: &Value) -> Result<Island> {
    text(v)?.parse().map_err(corrupt)
}

fn engine_row(row: &Row) -> Result<EngineEntry> {
    Ok(EngineEntry {
        eid: int(&row[0])?,
        name: text(&row[1])?.to_string(),
        kind: island(&row[2])?,
        address: text(&row[3])?.to_string(),
        status: Status::parse(text(&row[4])?)?,
    })
}

fn object_row(row: &Row) -> Result<ObjectEntry> {
    Ok(ObjectEntry {
        oid: int(&row[0])?,
        name: text(&row[1])?.to_string(),
        fields: text(&row[2])?.to_string(),
        engine_id: int(&row[3])?,
        island: island(&row[4])?,
        is_temp: int(&row[5])? != 0,
    })
}

#[derive(Debug, Default)]
struct Counters {
    next_eid: i64,
    next_oid: i64,
}

#[derive(Debug)]
pub struct Catalog {
    engine: Arc<EngineHandle>,
    /// Single writer; also owns the id counters.
    writer: Mutex<Counters>,
}

impl Catalog {
    pub fn new(engine: Arc<EngineHandle>) -> Result<Catalog> {
        if engine.kind != Island::Relational {
            return Err(Error::KindMismatch(format!("catalog engine {} is not relational", engine.name)));
        }
        Ok(Catalog {
            engine,
            writer: Mutex::new(Counters::default()),
        })
    }

    pub fn engine_name(&self) -> &str {
        &self.engine.name
    }

    fn rel<R>(&self, f: impl FnOnce(&RelEngine) -> Result<R>) -> Result<R> {
        self.engine.with(|i| f(i.rel()?))
    }

    fn scan(&self, table: &str) -> Result<Vec<Row>> {
        self.rel(|r| Ok(r.execute(&RelPlan::scan(table))?.rows))
    }

    /// Creates the reserved tables if absent, fixes the island rows and
    /// drops temp rows left by an unclean shutdown. Idempotent.
    pub fn bootstrap(&self) -> Result<()> {
        let mut counters = self.writer.lock();
        self.rel(|r| {
            for (name, schema) in [
                (ENGINES_TABLE, "eid:Int64,name:Text,kind:Text,address:Text,status:Text"),
                (OBJECTS_TABLE, "oid:Int64,name:Text,fields:Text,engine_id:Int64,island:Text,is_temp:Int64"),
                (ISLANDS_TABLE, "iid:Int64,scope_name:Text,kind:Text"),
            ] {
                if !r.contains(name) {
                    r.create_table(name, Schema::parse(schema)?)?;
                }
            }
            let islands: Vec<Row> = Island::ALL
                .iter()
                .zip(1..)
                .map(|(i, iid)| {
                    vec![
                        Value::Int(iid),
                        Value::Text(i.scope_keyword().into()),
                        Value::Text(i.name().into()),
                    ]
                })
                .collect();
            if r.read_table(ISLANDS_TABLE)?.1.as_slice() != islands.as_slice() {
                r.delete_where(ISLANDS_TABLE, |_| true)?;
                r.insert(ISLANDS_TABLE, islands)?;
            }
            r.delete_where(OBJECTS_TABLE, |row| row[5] == Value::Int(1))?;
            Ok(())
        })?;
        let max = |rows: Vec<Row>| rows.iter().filter_map(|r| r[0].as_i64()).max().unwrap_or(0);
        counters.next_eid = counters.next_eid.max(max(self.scan(ENGINES_TABLE)?) + 1);
        counters.next_oid = counters.next_oid.max(max(self.scan(OBJECTS_TABLE)?) + 1);
        Ok(())
    }

    pub fn islands(&self) -> Result<Vec<IslandEntry>> {
        self.scan(ISLANDS_TABLE)?
            .iter()
            .map(|r| {
                Ok(IslandEntry {
                    iid: int(&r[0])?,
                    scope_name: text(&r[1])?.to_string(),
                    kind: island(&r[2])?,
                })
            })
            .collect()
    }

    /// Registers an engine, or refreshes the address and status of one with
    /// the same name and kind. Returns its eid.
    pub fn register_engine(&self, name: &str, kind: Island, address: &str, status: Status) -> Result<i64> {
        check_identifier(name).map_err(|e| Error::Config(e.to_string()))?;
        let name = name.to_ascii_lowercase();
        let mut counters = self.writer.lock();
        if let Some(existing) = self.engines()?.into_iter().find(|e| e.name == name) {
            if existing.kind != kind {
                return Err(Error::KindMismatch(format!(
                    "engine {name} is registered as {}, not {kind}",
                    existing.kind
                )));
            }
            let (addr, st) = (address.to_string(), status.name());
            self.rel(|r| {
                r.update_where(
                    ENGINES_TABLE,
                    |row| row[1] == Value::Text(name.clone()),
                    |row| {
                        row[3] = Value::Text(addr.clone());
                        row[4] = Value::Text(st.into());
                    },
                )
            })?;
            return Ok(existing.eid);
        }
        if self.engines()?.iter().any(|e| e.address == address) {
            return Err(Error::Config(format!("address {address} is already in use")));
        }
        let eid = counters.next_eid.max(1);
        counters.next_eid = eid + 1;
        self.rel(|r| {
            r.insert(
                ENGINES_TABLE,
                vec![vec![
                    Value::Int(eid),
                    Value::Text(name.clone()),
                    Value::Text(kind.name().into()),
                    Value::Text(address.into()),
                    Value::Text(status.name().into()),
                ]],
            )
        })?;
        Ok(eid)
    }

    pub fn set_engine_status(&self, name: &str, status: Status) -> Result<()> {
        let _w = self.writer.lock();
        let key = Value::Text(name.to_ascii_lowercase());
        let n = self.rel(|r| {
            r.update_where(ENGINES_TABLE, |row| row[1] == key, |row| row[4] = Value::Text(status.name().into()))
        })?;
        if n == 0 {
            return Err(Error::NoSuchEngine(name.to_string()));
        }
        Ok(())
    }

    /// All engines ordered by eid.
    pub fn engines(&self) -> Result<Vec<EngineEntry>> {
        let mut out: Vec<EngineEntry> = self.scan(ENGINES_TABLE)?.iter().map(engine_row).collect::<Result<_>>()?;
        out.sort_by_key(|e| e.eid);
        Ok(out)
    }

    pub fn engine(&self, name: &str) -> Result<EngineEntry> {
        let name = name.to_ascii_lowercase();
        self.engines()?
            .into_iter()
            .find(|e| e.name == name)
            .ok_or(Error::NoSuchEngine(name))
    }

    pub fn engine_by_id(&self, eid: i64) -> Result<EngineEntry> {
        self.engines()?
            .into_iter()
            .find(|e| e.eid == eid)
            .ok_or_else(|| Error::NoSuchEngine(format!("#{eid}")))
    }

    pub fn register_object(
        &self,
        name: &str,
        fields: &str,
        engine: &str,
        island: Island,
        is_temp: bool,
    ) -> Result<i64> {
        check_identifier(name).map_err(|e| Error::Plan(e.to_string()))?;
        let name = name.to_ascii_lowercase();
        if is_temp != name.starts_with(TEMP_PREFIX) || (!is_temp && name.starts_with(RESERVED_PREFIX)) {
            return Err(Error::Plan(format!("{name}: names starting with {RESERVED_PREFIX} are reserved")));
        }
        let mut counters = self.writer.lock();
        let engine = self.engine(engine)?;
        if engine.kind != island {
            return Err(Error::IslandKindMismatch(format!(
                "{name}: engine {} of kind {} cannot host a {island} object",
                engine.name, engine.kind
            )));
        }
        if self.objects()?.iter().any(|o| o.name == name) {
            return Err(Error::DuplicateObject(name));
        }
        let oid = counters.next_oid.max(1);
        counters.next_oid = oid + 1;
        self.rel(|r| {
            r.insert(
                OBJECTS_TABLE,
                vec![vec![
                    Value::Int(oid),
                    Value::Text(name.clone()),
                    Value::Text(fields.into()),
                    Value::Int(engine.eid),
                    Value::Text(island.name().into()),
                    Value::Int(is_temp as i64),
                ]],
            )
        })?;
        Ok(oid)
    }

    pub fn deregister_object(&self, name: &str) -> Result<()> {
        let _w = self.writer.lock();
        let key = Value::Text(name.to_ascii_lowercase());
        let n = self.rel(|r| r.delete_where(OBJECTS_TABLE, |row| row[1] == key))?;
        if n == 0 {
            return Err(Error::NoSuchObject(name.to_string()));
        }
        Ok(())
    }

    /// All objects ordered by oid.
    pub fn objects(&self) -> Result<Vec<ObjectEntry>> {
        let mut out: Vec<ObjectEntry> = self.scan(OBJECTS_TABLE)?.iter().map(object_row).collect::<Result<_>>()?;
        out.sort_by_key(|o| o.oid);
        Ok(out)
    }

    pub fn resolve(&self, name: &str) -> Result<(ObjectEntry, EngineEntry)> {
        let name = name.to_ascii_lowercase();
        let obj = self
            .objects()?
            .into_iter()
            .find(|o| o.name == name)
            .ok_or(Error::NoSuchObject(name))?;
        let engine = self.engine_by_id(obj.engine_id)?;
        Ok((obj, engine))
    }

    /// Objects whose island differs from their engine's kind. Always empty
    /// unless the reserved tables were edited behind the catalog's back.
    pub fn check_consistency(&self) -> Result<Vec<String>> {
        let engines = self.engines()?;
        Ok(self
            .objects()?
            .into_iter()
            .filter(|o| !engines.iter().any(|e| e.eid == o.engine_id && e.kind == o.island))
            .map(|o| o.name)
            .collect())
    }
}
