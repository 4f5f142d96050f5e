//! The middleware: engine handles, the catalog, and query entry points.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value as Json;

use crate::array::{Coord, Dim};
use crate::catalog::{Catalog, Status};
use crate::config::ClusterConfig;
use crate::engine::EngineHandle;
use crate::error::{Error, Result};
use crate::lang::{parse, Island};
use crate::migrate::object_fields;
use crate::planner::{plan, run, QueryContext, QueryPlan};
use crate::text::KvEntry;
use crate::value::{ResultSet, Row, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EngineStatus {
    pub name: String,
    pub kind: Island,
    pub status: Status,
    pub objects: usize,
    pub address: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatusReport {
    pub engines: Vec<EngineStatus>,
    pub uptime_s: f64,
    pub queries_served: u64,
}

#[derive(Debug)]
pub struct Cluster {
    handles: Vec<Arc<EngineHandle>>,
    catalog: Catalog,
    started: Instant,
    queries_served: AtomicU64,
}

impl Cluster {
    /// Loads engine snapshots, bootstraps the catalog and registers every
    /// engine in configuration order.
    pub fn start(config: &ClusterConfig) -> Result<Cluster> {
        config.validate()?;
        let handles: Vec<Arc<EngineHandle>> = config
            .engines
            .iter()
            .map(|e| Arc::new(EngineHandle::new(&e.name, e.kind, &e.address, e.data_dir.clone())))
            .collect();
        for h in &handles {
            h.open()?;
        }
        let catalog_handle = handles
            .iter()
            .find(|h| h.name.eq_ignore_ascii_case(&config.catalog))
            .cloned()
            .ok_or_else(|| Error::Config(format!("catalog engine {} is not configured", config.catalog)))?;
        let catalog = Catalog::new(catalog_handle)?;
        catalog.bootstrap()?;
        for h in &handles {
            let eid = catalog.register_engine(&h.name, h.kind, &h.address, Status::Up)?;
            h.set_eid(eid);
            log::info!("- engine_ready name={} kind={} address={} eid={eid}", h.name, h.kind, h.address);
        }
        Ok(Cluster {
            handles,
            catalog,
            started: Instant::now(),
            queries_served: AtomicU64::new(0),
        })
    }

    /// The demo layout with no persistence.
    pub fn in_memory() -> Cluster {
        Cluster::start(&ClusterConfig::demo(None)).expect("demo config is valid")
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn handles(&self) -> &[Arc<EngineHandle>] {
        &self.handles
    }

    pub fn handle(&self, name: &str) -> Result<Arc<EngineHandle>> {
        self.handles
            .iter()
            .find(|h| h.name.eq_ignore_ascii_case(name))
            .cloned()
            .ok_or_else(|| Error::NoSuchEngine(name.to_string()))
    }

    /// Lowest-eid engine of an island.
    pub fn first_engine(&self, island: Island) -> Result<Arc<EngineHandle>> {
        self.handles
            .iter()
            .filter(|h| h.kind == island)
            .min_by_key(|h| h.eid())
            .cloned()
            .ok_or(Error::NoUpEngineForIsland {
                island: island.name().into(),
                engine: None,
            })
    }

    pub fn query(&self, text: &str) -> Result<ResultSet> {
        self.query_with(text, &mut QueryContext::new())
    }

    pub fn query_with(&self, text: &str, ctx: &mut QueryContext) -> Result<ResultSet> {
        self.queries_served.fetch_add(1, Ordering::Relaxed);
        let ms = |a: Instant, b: Instant| b.duration_since(a).as_secs_f64() * 1000.0;
        let t0 = Instant::now();
        let planned = parse(text).map_err(Error::from).and_then(|ast| {
            let t1 = Instant::now();
            plan(&ast, self, ctx).map(|p| (p, ms(t0, t1), ms(t1, Instant::now())))
        });
        let (plan, parse_ms, plan_ms) = match planned {
            Ok(p) => p,
            Err(e) => {
                log::info!("{} query_rejected error={:?}", ctx.query_id, e.to_string());
                return Err(e);
            }
        };
        let t2 = Instant::now();
        let result = run(&plan, self, ctx);
        log::info!(
            "{} query parse_ms={parse_ms:.3} plan_ms={plan_ms:.3} execute_ms={:.3} steps={} ok={}",
            ctx.query_id,
            ms(t2, Instant::now()),
            plan.steps.len(),
            result.is_ok()
        );
        result
    }

    pub fn plan(&self, text: &str) -> Result<QueryPlan> {
        plan(&parse(text)?, self, &mut QueryContext::new())
    }

    pub fn explain(&self, text: &str) -> Result<Json> {
        Ok(self.plan(text)?.explain())
    }

    /// Returns whether the engine changed state.
    pub fn stop_engine(&self, name: &str) -> Result<bool> {
        let h = self.handle(name)?;
        if h.name == self.catalog.engine_name() {
            return Err(Error::Refused(format!("{} holds the catalog and cannot be stopped", h.name)));
        }
        let changed = h.stop()?;
        self.catalog.set_engine_status(&h.name, Status::Down)?;
        log::info!("- engine_stop name={} changed={changed}", h.name);
        Ok(changed)
    }

    pub fn start_engine(&self, name: &str) -> Result<bool> {
        let h = self.handle(name)?;
        let changed = h.start()?;
        self.catalog.set_engine_status(&h.name, Status::Up)?;
        log::info!("- engine_start name={} changed={changed}", h.name);
        Ok(changed)
    }

    pub fn status(&self) -> Result<StatusReport> {
        let objects = self.catalog.objects()?;
        let engines = self
            .handles
            .iter()
            .map(|h| EngineStatus {
                name: h.name.clone(),
                kind: h.kind,
                status: if h.is_up() { Status::Up } else { Status::Down },
                objects: objects.iter().filter(|o| o.engine_id == h.eid() && !o.is_temp).count(),
                address: h.address.clone(),
            })
            .collect();
        Ok(StatusReport {
            engines,
            uptime_s: self.started.elapsed().as_secs_f64(),
            queries_served: self.queries_served.load(Ordering::Relaxed),
        })
    }

    /// Records an object already present on `engine` in the catalog.
    fn register(&self, engine: &EngineHandle, name: &str) -> Result<()> {
        let fields = engine.with(|i| object_fields(i, name))?;
        if let Err(e) = self.catalog.register_object(name, &fields.join(","), &engine.name, engine.kind, false) {
            let _ = engine.with(|i| i.drop_object(name));
            return Err(e);
        }
        Ok(())
    }

    fn check_new(&self, name: &str) -> Result<()> {
        match self.catalog.resolve(name) {
            Ok(_) => Err(Error::DuplicateObject(name.to_string())),
            Err(Error::NoSuchObject(_)) => Ok(()),
            Err(e) => Err(e),
        }
    }

    pub fn create_table(&self, engine: &str, name: &str, schema: Schema, rows: Vec<Row>) -> Result<()> {
        self.check_new(name)?;
        let h = self.handle(engine)?;
        h.with(|i| {
            let r = i.rel()?;
            r.create_table(name, schema)?;
            if let Err(e) = r.insert(name, rows) {
                let _ = r.drop_table(name);
                return Err(e);
            }
            Ok(())
        })?;
        self.register(&h, name)
    }

    pub fn create_array(
        &self,
        engine: &str,
        name: &str,
        dims: Vec<Dim>,
        attrs: Schema,
        cells: Vec<(Coord, Row)>,
    ) -> Result<()> {
        self.check_new(name)?;
        let h = self.handle(engine)?;
        h.with(|i| {
            let a = i.arr()?;
            a.create_array(name, dims, attrs)?;
            if let Err(e) = a.put_cells(name, cells) {
                let _ = a.drop_array(name);
                return Err(e);
            }
            Ok(())
        })?;
        self.register(&h, name)
    }

    pub fn create_kv(&self, engine: &str, name: &str, entries: Vec<KvEntry>) -> Result<()> {
        self.check_new(name)?;
        let h = self.handle(engine)?;
        h.with(|i| {
            let t = i.text()?;
            t.create_kv(name)?;
            t.put(name, entries)?;
            Ok(())
        })?;
        self.register(&h, name)
    }

    /// Removes a user object from its engine and the catalog.
    pub fn drop_object(&self, name: &str) -> Result<()> {
        let (obj, eng) = self.catalog.resolve(name)?;
        self.handle(&eng.name)?.with(|i| i.drop_object(&obj.name))?;
        self.catalog.deregister_object(&obj.name)
    }

    /// Temp objects visible anywhere: catalog rows and engine contents.
    pub fn leftover_temps(&self) -> Result<Vec<String>> {
        let mut out: Vec<String> = self
            .catalog
            .objects()?
            .into_iter()
            .filter(|o| o.is_temp)
            .map(|o| o.name)
            .collect();
        for h in &self.handles {
            out.extend(h.temp_objects());
        }
        Ok(out)
    }

    /// Writes snapshots of every running engine.
    pub fn flush(&self) -> Result<()> {
        for h in &self.handles {
            if h.is_up() {
                h.flush()?;
            }
        }
        Ok(())
    }
}
