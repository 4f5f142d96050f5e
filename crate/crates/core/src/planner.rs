//! Turns a polystore query into an ordered list of execute/migrate steps
//! and runs them against the cluster's engines.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value as Json};

use crate::catalog::Status;
use crate::cluster::Cluster;
use crate::engine::EngineInstance;
use crate::error::{Error, Result};
use crate::lang::{compile_arr, compile_rel, compile_text, Island, MappingSpec, ScopedQuery, Source};
use crate::migrate::{copy_same_island, migrate, object_fields};
use crate::snapshot::TEMP_PREFIX;
use crate::value::ResultSet;

static NEXT_QUERY: AtomicU64 = AtomicU64::new(1);

/// Per-query state: identity, temp naming and the shared timestamp used
/// by casts into the text island.
#[derive(Debug, Clone)]
pub struct QueryContext {
    pub query_id: String,
    temp_counter: u64,
    pub created_temps: Vec<String>,
    pub timestamp: i64,
}

impl QueryContext {
    pub fn new() -> QueryContext {
        let micros = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as i64)
            .unwrap_or(0);
        QueryContext::with_timestamp(micros)
    }

    pub fn with_timestamp(timestamp: i64) -> QueryContext {
        let n = NEXT_QUERY.fetch_add(1, Ordering::Relaxed);
        QueryContext {
            query_id: format!("q{n}"),
            temp_counter: 0,
            created_temps: Vec::new(),
            timestamp,
        }
    }

    fn next_temp(&mut self) -> String {
        self.temp_counter += 1;
        format!("{TEMP_PREFIX}{}_{}", self.query_id, self.temp_counter)
    }
}

impl Default for QueryContext {
    fn default() -> Self {
        QueryContext::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MigrateSource {
    /// Output of an earlier Execute step.
    Binding(usize),
    /// A stored object on another engine of the same island.
    Object { engine: String, name: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Execute {
        engine: String,
        query: ScopedQuery,
        output: usize,
    },
    Migrate {
        source: MigrateSource,
        dest_engine: String,
        dest_island: Island,
        spec: MappingSpec,
        temp: String,
        /// Column family for casts into the text island.
        colfam: String,
    },
    Cleanup {
        temps: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub steps: Vec<Step>,
    /// Binding produced by the final Execute.
    pub output: usize,
}

impl QueryPlan {
    /// Temp names and the engine each one is created on.
    pub fn temps(&self) -> Vec<(&str, &str)> {
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Migrate { temp, dest_engine, .. } => Some((temp.as_str(), dest_engine.as_str())),
                _ => None,
            })
            .collect()
    }

    /// Structured description with temp names replaced by `$tempN`.
    pub fn explain(&self) -> Json {
        let temps: Vec<&str> = self.temps().into_iter().map(|(t, _)| t).collect();
        let redact = |s: &str| {
            let mut out = s.to_string();
            // Longest first so that `..._1` never clobbers `..._10`.
            let mut order: Vec<(usize, &str)> = temps.iter().copied().enumerate().collect();
            order.sort_by_key(|(_, t)| std::cmp::Reverse(t.len()));
            for (i, t) in order {
                out = out.replace(t, &format!("$temp{}", i + 1));
            }
            out
        };
        let mut steps = Vec::new();
        let mut cleanup = Json::Array(vec![]);
        for step in &self.steps {
            match step {
                Step::Execute { engine, query, output } => steps.push(json!({
                    "kind": "execute",
                    "engine": engine,
                    "island": query.island(),
                    "query": redact(&query.to_string()),
                    "binding": output,
                })),
                Step::Migrate {
                    source,
                    dest_engine,
                    dest_island,
                    spec,
                    temp,
                    ..
                } => {
                    let source = match source {
                        MigrateSource::Binding(b) => json!({ "binding": b }),
                        MigrateSource::Object { engine, name } => json!({ "object": name, "engine": engine }),
                    };
                    steps.push(json!({
                        "kind": "migrate",
                        "source": source,
                        "dest_engine": dest_engine,
                        "dest_island": dest_island,
                        "spec": spec.to_string(),
                        "temp": redact(temp),
                    }))
                }
                Step::Cleanup { temps } => {
                    cleanup = temps.iter().map(|t| Json::String(redact(t))).collect();
                }
            }
        }
        json!({ "steps": steps, "cleanup": cleanup })
    }
}

struct Planner<'a> {
    cluster: &'a Cluster,
    ctx: &'a mut QueryContext,
    steps: Vec<Step>,
    bindings: usize,
}

pub fn plan(q: &ScopedQuery, cluster: &Cluster, ctx: &mut QueryContext) -> Result<QueryPlan> {
    let mut p = Planner {
        cluster,
        ctx,
        steps: Vec::new(),
        bindings: 0,
    };
    let output = p.scope(q)?;
    let temps = p.steps.iter().filter_map(|s| match s {
        Step::Migrate { temp, .. } => Some(temp.clone()),
        _ => None,
    });
    let temps = temps.collect();
    p.steps.push(Step::Cleanup { temps });
    Ok(QueryPlan { steps: p.steps, output })
}

impl Planner<'_> {
    /// Plans one scope; returns the binding holding its result.
    fn scope(&mut self, q: &ScopedQuery) -> Result<usize> {
        let island = q.island();
        let catalog = self.cluster.catalog();

        let mut casts = Vec::new();
        let mut named: Vec<(String, i64, String)> = Vec::new();
        for src in q.sources() {
            match src {
                Source::Cast(c) => {
                    let b = self.scope(&c.inner)?;
                    casts.push((b, c.spec.clone(), c.dest_name.clone()));
                }
                Source::Named(n) => {
                    if named.iter().any(|(m, _, _)| m == n) {
                        continue;
                    }
                    let (obj, eng) = catalog.resolve(n)?;
                    if obj.island != island {
                        return Err(Error::Plan(format!(
                            "{n} is a {} object; use bdcast to read it from a {island} query",
                            obj.island
                        )));
                    }
                    named.push((obj.name, eng.eid, eng.name));
                }
            }
        }

        let anchor = self.anchor(island, &named)?;

        let mut renames: HashMap<String, String> = HashMap::new();
        let mut cast_temps = Vec::new();
        for (binding, spec, dest_name) in casts {
            let temp = self.ctx.next_temp();
            self.steps.push(Step::Migrate {
                source: MigrateSource::Binding(binding),
                dest_engine: anchor.clone(),
                dest_island: island,
                spec,
                temp: temp.clone(),
                colfam: dest_name,
            });
            cast_temps.push(temp);
        }
        for (name, _, engine) in &named {
            if *engine != anchor {
                let temp = self.ctx.next_temp();
                self.steps.push(Step::Migrate {
                    source: MigrateSource::Object {
                        engine: engine.clone(),
                        name: name.clone(),
                    },
                    dest_engine: anchor.clone(),
                    dest_island: island,
                    spec: MappingSpec::Star,
                    temp: temp.clone(),
                    colfam: name.clone(),
                });
                renames.insert(name.clone(), temp);
            }
        }

        let mut query = q.clone();
        let mut cast_iter = cast_temps.into_iter();
        query.substitute(&mut |src| match src {
            Source::Cast(_) => cast_iter.next(),
            Source::Named(n) => renames.get(n).cloned(),
        });
        let output = self.bindings;
        self.bindings += 1;
        self.steps.push(Step::Execute {
            engine: anchor,
            query,
            output,
        });
        Ok(output)
    }

    /// Engine that runs a scope: where the largest referenced object lives
    /// (ties to lowest eid), or the lowest-eid up engine of the island when
    /// the scope reads only casts.
    fn anchor(&self, island: Island, named: &[(String, i64, String)]) -> Result<String> {
        let engines = self.cluster.catalog().engines()?;
        let up: Vec<_> = engines.iter().filter(|e| e.kind == island && e.status == Status::Up).collect();
        let mut distinct: Vec<(i64, &str)> = named.iter().map(|(_, eid, e)| (*eid, e.as_str())).collect();
        distinct.sort();
        distinct.dedup();
        let chosen = match distinct.as_slice() {
            [] => {
                // With every engine of the island down, name the one that would have run it.
                return up.first().map(|e| e.name.clone()).ok_or_else(|| Error::NoUpEngineForIsland {
                    island: island.name().into(),
                    engine: engines.iter().find(|e| e.kind == island).map(|e| e.name.clone()),
                });
            }
            [(_, only)] => only.to_string(),
            _ => {
                let mut best: Option<(usize, i64, &str)> = None;
                for (name, eid, engine) in named {
                    let count = self.cluster.handle(engine)?.with(|i| i.count(name))?;
                    let better = match best {
                        None => true,
                        Some((c, e, _)) => count > c || (count == c && *eid < e),
                    };
                    if better {
                        best = Some((count, *eid, engine));
                    }
                }
                best.expect("at least two objects").2.to_string()
            }
        };
        if !self.cluster.handle(&chosen)?.is_up() {
            if up.is_empty() {
                return Err(Error::NoUpEngineForIsland {
                    island: island.name().into(),
                    engine: Some(chosen),
                });
            }
            return Err(Error::unavailable(&chosen));
        }
        Ok(chosen)
    }
}

/// Runs one compiled scope on the engine instance.
pub fn execute_scope(inst: &EngineInstance, q: &ScopedQuery) -> Result<ResultSet> {
    match (q, inst) {
        (ScopedQuery::Rel(s), EngineInstance::Rel(e)) => {
            let plan = compile_rel(s, &|n| e.schema(n))?;
            e.execute(&plan)
        }
        (ScopedQuery::Arr(a), EngineInstance::Arr(e)) => {
            let plan = compile_arr(a, &|n| e.describe(n))?;
            e.execute(&plan)
        }
        (ScopedQuery::Text(t), EngineInstance::Text(e)) => e.scan(&compile_text(t)?),
        (q, inst) => Err(Error::KindMismatch(format!(
            "{} query sent to {} engine",
            q.island(),
            inst.kind()
        ))),
    }
}

/// Executes the steps in order. Cleanup always runs; its failures are
/// logged, not returned. Step failures carry the step index.
pub fn run(plan: &QueryPlan, cluster: &Cluster, ctx: &mut QueryContext) -> Result<ResultSet> {
    let mut results: Vec<Option<ResultSet>> = Vec::new();
    let mut failure = None;
    for (i, step) in plan.steps.iter().enumerate() {
        if failure.is_some() && !matches!(step, Step::Cleanup { .. }) {
            continue;
        }
        let outcome = match step {
            Step::Execute { engine, query, output } => cluster
                .handle(engine)
                .and_then(|h| h.with(|inst| execute_scope(inst, query)))
                .map(|rs| {
                    if results.len() <= *output {
                        results.resize(*output + 1, None);
                    }
                    results[*output] = Some(rs);
                }),
            Step::Migrate {
                source,
                dest_engine,
                dest_island,
                spec,
                temp,
                colfam,
            } => run_migrate(cluster, ctx, &results, source, dest_engine, *dest_island, spec, temp, colfam),
            Step::Cleanup { temps } => {
                cleanup(cluster, plan, ctx, temps);
                Ok(())
            }
        };
        if let Err(e) = outcome {
            failure = Some(e.at_step(i));
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    results
        .get_mut(plan.output)
        .and_then(Option::take)
        .ok_or_else(|| Error::Plan("plan produced no output".into()))
}

#[allow(clippy::too_many_arguments)]
fn run_migrate(
    cluster: &Cluster,
    ctx: &mut QueryContext,
    results: &[Option<ResultSet>],
    source: &MigrateSource,
    dest_engine: &str,
    dest_island: Island,
    spec: &MappingSpec,
    temp: &str,
    colfam: &str,
) -> Result<()> {
    let dest = cluster.handle(dest_engine)?;
    if dest.kind != dest_island {
        return Err(Error::KindMismatch(format!("{dest_engine} is not a {dest_island} engine")));
    }
    ctx.created_temps.push(temp.to_string());
    let fields = match source {
        MigrateSource::Binding(b) => {
            let rs = results
                .get(*b)
                .and_then(Option::as_ref)
                .ok_or_else(|| Error::Plan(format!("binding {b} is not available")))?;
            migrate(rs, spec, &dest, temp, colfam, ctx.timestamp)?.1
        }
        MigrateSource::Object { engine, name } => {
            copy_same_island(&*cluster.handle(engine)?, name, &dest, temp)?;
            dest.with(|i| object_fields(i, temp))?
        }
    };
    cluster
        .catalog()
        .register_object(temp, &fields.join(","), dest_engine, dest_island, true)?;
    Ok(())
}

fn cleanup(cluster: &Cluster, plan: &QueryPlan, ctx: &mut QueryContext, temps: &[String]) {
    let placed: HashMap<&str, &str> = plan.temps().into_iter().collect();
    for temp in temps {
        if let Some(handle) = placed.get(temp.as_str()).and_then(|e| cluster.handle(e).ok()) {
            if let Err(e) = handle.purge(temp) {
                log::warn!("{} cleanup drop {temp}: {e}", ctx.query_id);
            }
        }
        match cluster.catalog().deregister_object(temp) {
            Ok(()) | Err(Error::NoSuchObject(_)) => {}
            Err(e) => log::warn!("{} cleanup deregister {temp}: {e}", ctx.query_id),
        }
    }
    ctx.created_temps.clear();
}
