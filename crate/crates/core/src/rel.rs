//! Embedded relational engine: named tables with bag semantics and a
//! pull-based (volcano) executor over [`RelPlan`] operator trees.
//!
//! Row storage is an `Arc<Vec<Row>>` per table. Readers clone the `Arc`
//! under a short read lock and iterate without holding it; writers copy on
//! write. Unordered output follows insertion order, with joins iterating the
//! right input once per left row.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;

use crate::agg::{AggFunc, Accumulator};
use crate::csv::{parse_csv, render_csv};
use crate::error::{Error, Result};
use crate::expr::{bind_predicate, bind_value, BoundExpr, ColumnRef, Expr, Scope, ScopeColumn};
use crate::snapshot::{self, TEMP_PREFIX};
use crate::value::{check_identifier, compare, Field, ResultSet, Row, Schema, Value};

pub const SNAPSHOT_HEADER: &str = "POLYGATE-REL v1";
const SNAPSHOT_EXT: &str = "rel";

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectItem {
    pub expr: Expr,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggCall {
    pub func: AggFunc,
    /// `None` for `count(*)`.
    pub arg: Option<Expr>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub column: ColumnRef,
    pub descending: bool,
}

/// Logical operator tree executed by [`RelEngine::execute`].
#[derive(Debug, Clone, PartialEq)]
pub enum RelPlan {
    Scan {
        table: String,
        alias: Option<String>,
    },
    Filter {
        input: Box<RelPlan>,
        predicate: Expr,
    },
    Project {
        input: Box<RelPlan>,
        items: Vec<ProjectItem>,
    },
    /// Inner equi-join on pairs of (left column, right column).
    Join {
        left: Box<RelPlan>,
        right: Box<RelPlan>,
        on: Vec<(ColumnRef, ColumnRef)>,
    },
    Aggregate {
        input: Box<RelPlan>,
        group_by: Vec<ColumnRef>,
        aggs: Vec<AggCall>,
    },
    Sort {
        input: Box<RelPlan>,
        keys: Vec<SortKey>,
    },
    Limit {
        input: Box<RelPlan>,
        n: u64,
    },
}

impl RelPlan {
    pub fn scan(table: &str) -> RelPlan {
        RelPlan::Scan {
            table: table.to_string(),
            alias: None,
        }
    }

    pub fn filter(self, predicate: Expr) -> RelPlan {
        RelPlan::Filter {
            input: Box::new(self),
            predicate,
        }
    }

    pub fn limit(self, n: u64) -> RelPlan {
        RelPlan::Limit {
            input: Box::new(self),
            n,
        }
    }

    /// Names of all scanned tables, in plan order.
    pub fn tables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_tables(&mut out);
        out
    }

    fn collect_tables<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            RelPlan::Scan { table, .. } => out.push(table),
            RelPlan::Join { left, right, .. } => {
                left.collect_tables(out);
                right.collect_tables(out);
            }
            RelPlan::Filter { input, .. }
            | RelPlan::Project { input, .. }
            | RelPlan::Aggregate { input, .. }
            | RelPlan::Sort { input, .. }
            | RelPlan::Limit { input, .. } => input.collect_tables(out),
        }
    }

    /// Renames scanned tables (used when the planner substitutes temps).
    pub fn rename_tables(&mut self, f: &dyn Fn(&str) -> Option<String>) {
        match self {
            RelPlan::Scan { table, alias } => {
                if let Some(new) = f(table) {
                    if alias.is_none() {
                        *alias = Some(table.clone());
                    }
                    *table = new;
                }
            }
            RelPlan::Join { left, right, .. } => {
                left.rename_tables(f);
                right.rename_tables(f);
            }
            RelPlan::Filter { input, .. }
            | RelPlan::Project { input, .. }
            | RelPlan::Aggregate { input, .. }
            | RelPlan::Sort { input, .. }
            | RelPlan::Limit { input, .. } => input.rename_tables(f),
        }
    }

    /// Output schema given the schemas of the scanned tables.
    pub fn output_schema(&self, schemas: &dyn Fn(&str) -> Result<Schema>) -> Result<Schema> {
        let bound = bind_plan(self, schemas)?;
        Ok(output_schema(&bound.scope))
    }

    /// Qualified columns visible above this plan.
    pub fn output_scope(&self, schemas: &dyn Fn(&str) -> Result<Schema>) -> Result<Scope> {
        Ok(bind_plan(self, schemas)?.scope)
    }
}

/// A plan with every name resolved to a position.
#[derive(Debug, Clone)]
struct BoundRel {
    node: BoundNode,
    scope: Scope,
}

#[derive(Debug, Clone)]
enum BoundNode {
    Scan(String),
    Filter(Box<BoundRel>, BoundExpr),
    Project(Box<BoundRel>, Vec<BoundExpr>),
    Join(Box<BoundRel>, Box<BoundRel>, Vec<(usize, usize)>),
    Aggregate(Box<BoundRel>, Vec<usize>, Vec<(AggFunc, Option<BoundExpr>)>),
    Sort(Box<BoundRel>, Vec<(usize, bool)>),
    Limit(Box<BoundRel>, u64),
}

fn bind_plan(plan: &RelPlan, schemas: &dyn Fn(&str) -> Result<Schema>) -> Result<BoundRel> {
    Ok(match plan {
        RelPlan::Scan { table, alias } => {
            let schema = schemas(table)?;
            let qualifier = alias.as_deref().unwrap_or(table);
            BoundRel {
                node: BoundNode::Scan(table.clone()),
                scope: Scope::with_qualifier(schema.fields(), qualifier),
            }
        }
        RelPlan::Filter { input, predicate } => {
            let input = bind_plan(input, schemas)?;
            let pred = bind_predicate(predicate, &input.scope)?;
            let scope = input.scope.clone();
            BoundRel {
                node: BoundNode::Filter(Box::new(input), pred),
                scope,
            }
        }
        RelPlan::Project { input, items } => {
            let input = bind_plan(input, schemas)?;
            let mut exprs = Vec::with_capacity(items.len());
            let mut columns = Vec::with_capacity(items.len());
            for item in items {
                check_identifier(&item.name).map_err(|e| Error::Plan(e.to_string()))?;
                let (b, kind) = bind_value(&item.expr, &input.scope)?;
                let qualifier = match (&item.expr, &b) {
                    (Expr::Column(c), BoundExpr::Column(i)) if c.name.eq_ignore_ascii_case(&item.name) => {
                        input.scope.columns[*i].qualifier.clone()
                    }
                    _ => None,
                };
                exprs.push(b);
                columns.push(ScopeColumn {
                    qualifier,
                    name: item.name.clone(),
                    kind,
                });
            }
            BoundRel {
                node: BoundNode::Project(Box::new(input), exprs),
                scope: Scope::new(columns),
            }
        }
        RelPlan::Join { left, right, on } => {
            let left = bind_plan(left, schemas)?;
            let right = bind_plan(right, schemas)?;
            let mut keys = Vec::with_capacity(on.len());
            for (lc, rc) in on {
                // Accept the pair written in either order.
                let pair = match (left.scope.resolve(lc), right.scope.resolve(rc)) {
                    (Ok(l), Ok(r)) => (l, r),
                    (el, er) => match (left.scope.resolve(rc), right.scope.resolve(lc)) {
                        (Ok(l), Ok(r)) => (l, r),
                        _ => return Err(el.and(er).unwrap_err()),
                    },
                };
                let (lk, rk) = (left.scope.columns[pair.0].kind, right.scope.columns[pair.1].kind);
                if !(lk == rk || (lk.is_numeric() && rk.is_numeric())) {
                    return Err(Error::Plan(format!("cannot join {lc} ({lk}) with {rc} ({rk})")));
                }
                keys.push(pair);
            }
            let scope = left.scope.concat(&right.scope);
            BoundRel {
                node: BoundNode::Join(Box::new(left), Box::new(right), keys),
                scope,
            }
        }
        RelPlan::Aggregate { input, group_by, aggs } => {
            let input = bind_plan(input, schemas)?;
            let mut keys = Vec::with_capacity(group_by.len());
            let mut columns = Vec::new();
            for c in group_by {
                let i = input.scope.resolve(c)?;
                keys.push(i);
                columns.push(input.scope.columns[i].clone());
            }
            let mut calls = Vec::with_capacity(aggs.len());
            for call in aggs {
                check_identifier(&call.name).map_err(|e| Error::Plan(e.to_string()))?;
                let (arg, arg_kind) = match &call.arg {
                    None => (None, None),
                    Some(e) => {
                        let (b, k) = bind_value(e, &input.scope)?;
                        (Some(b), Some(k))
                    }
                };
                let kind = call.func.output_kind(arg_kind)?;
                calls.push((call.func, arg));
                columns.push(ScopeColumn {
                    qualifier: None,
                    name: call.name.clone(),
                    kind,
                });
            }
            BoundRel {
                node: BoundNode::Aggregate(Box::new(input), keys, calls),
                scope: Scope::new(columns),
            }
        }
        RelPlan::Sort { input, keys } => {
            let input = bind_plan(input, schemas)?;
            let keys = keys
                .iter()
                .map(|k| Ok((input.scope.resolve(&k.column)?, k.descending)))
                .collect::<Result<Vec<_>>>()?;
            let scope = input.scope.clone();
            BoundRel {
                node: BoundNode::Sort(Box::new(input), keys),
                scope,
            }
        }
        RelPlan::Limit { input, n } => {
            let input = bind_plan(input, schemas)?;
            let scope = input.scope.clone();
            BoundRel {
                node: BoundNode::Limit(Box::new(input), *n),
                scope,
            }
        }
    })
}

fn output_schema(scope: &Scope) -> Schema {
    Schema::dedup(
        scope
            .columns
            .iter()
            .map(|c| Field::new(c.name.clone(), c.kind))
            .collect(),
    )
}

type Snapshots = HashMap<String, Arc<Vec<Row>>>;
type RowIter<'a> = Box<dyn Iterator<Item = Row> + 'a>;

fn open<'a>(plan: &'a BoundRel, data: &'a Snapshots) -> RowIter<'a> {
    match &plan.node {
        BoundNode::Scan(t) => Box::new(data[t].iter().cloned()),
        BoundNode::Filter(input, pred) => Box::new(open(input, data).filter(move |r| pred.test(r))),
        BoundNode::Project(input, exprs) => {
            Box::new(open(input, data).map(move |r| exprs.iter().map(|e| e.eval(&r)).collect()))
        }
        BoundNode::Join(left, right, keys) => {
            let right_rows: Vec<Row> = open(right, data).collect();
            let same_kinds = keys.iter().all(|(l, r)| {
                let lk = left.scope.columns[*l].kind;
                lk == right.scope.columns[*r].kind && lk != crate::value::ValueKind::Float64
            });
            if same_kinds {
                let mut index: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
                for (i, row) in right_rows.iter().enumerate() {
                    let key: Vec<Value> = keys.iter().map(|(_, r)| row[*r].clone()).collect();
                    if key.iter().any(Value::is_null) {
                        continue;
                    }
                    index.entry(key).or_default().push(i);
                }
                Box::new(open(left, data).flat_map(move |l| {
                    let key: Vec<Value> = keys.iter().map(|(li, _)| l[*li].clone()).collect();
                    index
                        .get(&key)
                        .map(|hits| {
                            hits.iter()
                                .map(|i| {
                                    let mut out = l.clone();
                                    out.extend(right_rows[*i].iter().cloned());
                                    out
                                })
                                .collect::<Vec<_>>()
                        })
                        .unwrap_or_default()
                }))
            } else {
                Box::new(open(left, data).flat_map(move |l| {
                    right_rows
                        .iter()
                        .filter(|r| {
                            keys.iter().all(|(li, ri)| l[*li].predicate_cmp(&r[*ri]).is_some_and(|o| o.is_eq()))
                        })
                        .map(|r| {
                            let mut out = l.clone();
                            out.extend(r.iter().cloned());
                            out
                        })
                        .collect::<Vec<_>>()
                }))
            }
        }
        BoundNode::Aggregate(input, keys, calls) => {
            let mut groups: Vec<(Row, Vec<Accumulator>)> = Vec::new();
            let mut index: HashMap<Row, usize> = HashMap::new();
            let fresh = || calls.iter().map(|(f, _)| Accumulator::new(*f)).collect::<Vec<_>>();
            if keys.is_empty() {
                groups.push((Vec::new(), fresh()));
                index.insert(Vec::new(), 0);
            }
            for row in open(input, data) {
                let key: Row = keys.iter().map(|k| row[*k].clone()).collect();
                let slot = *index.entry(key.clone()).or_insert_with(|| {
                    groups.push((key, fresh()));
                    groups.len() - 1
                });
                for ((_, arg), acc) in calls.iter().zip(groups[slot].1.iter_mut()) {
                    match arg {
                        None => acc.update(None),
                        Some(e) => acc.update(Some(&e.eval(&row))),
                    }
                }
            }
            Box::new(groups.into_iter().map(|(mut key, accs)| {
                key.extend(accs.iter().map(Accumulator::finish));
                key
            }))
        }
        BoundNode::Sort(input, keys) => {
            let mut rows: Vec<Row> = open(input, data).collect();
            rows.sort_by(|a, b| {
                keys.iter()
                    .map(|(i, desc)| {
                        let o = compare(&a[*i], &b[*i]);
                        if *desc {
                            o.reverse()
                        } else {
                            o
                        }
                    })
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            Box::new(rows.into_iter())
        }
        BoundNode::Limit(input, n) => Box::new(open(input, data).take(usize::try_from(*n).unwrap_or(usize::MAX))),
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub schema: Schema,
    rows: Arc<Vec<Row>>,
    version: u64,
}

impl Table {
    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn version(&self) -> u64 {
        self.version
    }
}

#[derive(Debug, Default)]
pub struct RelEngine {
    tables: RwLock<BTreeMap<String, Arc<RwLock<Table>>>>,
}

fn key(name: &str) -> String {
    name.to_ascii_lowercase()
}

impl RelEngine {
    pub fn new() -> Self {
        Self::default()
    }

    fn table(&self, name: &str) -> Result<Arc<RwLock<Table>>> {
        self.tables
            .read()
            .get(&key(name))
            .cloned()
            .ok_or_else(|| Error::NoSuchObject(name.to_string()))
    }

    pub fn create_table(&self, name: &str, schema: Schema) -> Result<()> {
        check_identifier(name)?;
        let mut tables = self.tables.write();
        if tables.contains_key(&key(name)) {
            return Err(Error::DuplicateObject(name.to_string()));
        }
        tables.insert(
            key(name),
            Arc::new(RwLock::new(Table {
                schema,
                rows: Arc::new(Vec::new()),
                version: 0,
            })),
        );
        Ok(())
    }

    pub fn drop_table(&self, name: &str) -> Result<()> {
        self.tables
            .write()
            .remove(&key(name))
            .map(|_| ())
            .ok_or_else(|| Error::NoSuchObject(name.to_string()))
    }

    pub fn insert(&self, name: &str, rows: Vec<Row>) -> Result<usize> {
        let table = self.table(name)?;
        let mut t = table.write();
        for row in &rows {
            t.schema.check_row(row)?;
        }
        let n = rows.len();
        Arc::make_mut(&mut t.rows).extend(rows);
        t.version += 1;
        Ok(n)
    }

    /// Removes rows matching `pred`; returns how many were removed.
    pub fn delete_where(&self, name: &str, pred: impl Fn(&Row) -> bool) -> Result<usize> {
        let table = self.table(name)?;
        let mut t = table.write();
        let before = t.rows.len();
        Arc::make_mut(&mut t.rows).retain(|r| !pred(r));
        let removed = before - t.rows.len();
        if removed > 0 {
            t.version += 1;
        }
        Ok(removed)
    }

    /// Applies `f` to rows matching `pred`; the result must still conform.
    pub fn update_where(&self, name: &str, pred: impl Fn(&Row) -> bool, f: impl Fn(&mut Row)) -> Result<usize> {
        let table = self.table(name)?;
        let mut t = table.write();
        let mut rows = (*t.rows).clone();
        let mut n = 0;
        for row in rows.iter_mut().filter(|r| pred(r)) {
            f(row);
            t.schema.check_row(row)?;
            n += 1;
        }
        if n > 0 {
            t.rows = Arc::new(rows);
            t.version += 1;
        }
        Ok(n)
    }

    pub fn schema(&self, name: &str) -> Result<Schema> {
        Ok(self.table(name)?.read().schema.clone())
    }

    pub fn row_count(&self, name: &str) -> Result<usize> {
        Ok(self.table(name)?.read().rows.len())
    }

    pub fn version(&self, name: &str) -> Result<u64> {
        Ok(self.table(name)?.read().version)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tables.read().contains_key(&key(name))
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.read().keys().cloned().collect()
    }

    /// Consistent copy of one table's schema and rows.
    pub fn read_table(&self, name: &str) -> Result<(Schema, Arc<Vec<Row>>)> {
        let table = self.table(name)?;
        let t = table.read();
        Ok((t.schema.clone(), t.rows.clone()))
    }

    pub fn execute(&self, plan: &RelPlan) -> Result<ResultSet> {
        let mut data = Snapshots::new();
        let mut schemas = HashMap::new();
        for t in plan.tables() {
            if !data.contains_key(t) {
                let (schema, rows) = self.read_table(t)?;
                data.insert(t.to_string(), rows);
                schemas.insert(t.to_string(), schema);
            }
        }
        let bound = bind_plan(plan, &|t| {
            schemas.get(t).cloned().ok_or_else(|| Error::NoSuchObject(t.to_string()))
        })?;
        let rows: Vec<Row> = open(&bound, &data).collect();
        Ok(ResultSet {
            schema: output_schema(&bound.scope),
            rows,
        })
    }

    pub fn snapshot_text(&self, name: &str) -> Result<String> {
        let (schema, rows) = self.read_table(name)?;
        let rs = ResultSet {
            schema,
            rows: (*rows).clone(),
        };
        Ok(format!("{SNAPSHOT_HEADER}\n{}\n{}", rs.schema, render_csv(&rs)))
    }

    pub fn restore_text(&self, name: &str, text: &str) -> Result<()> {
        let file = format!("{name}.{SNAPSHOT_EXT}");
        let body = snapshot::expect_header(text, SNAPSHOT_HEADER, &file)?;
        let (schema_line, csv) = snapshot::take_line(body, &file)?;
        let schema = Schema::parse(schema_line).map_err(snapshot::annotate(&file))?;
        let rs = parse_csv(csv, &schema).map_err(snapshot::annotate(&file))?;
        self.create_table(name, schema)?;
        self.insert(name, rs.rows)?;
        Ok(())
    }

    /// Writes every non-temp table to `dir`.
    pub fn flush(&self, dir: &Path) -> Result<()> {
        let mut objects = Vec::new();
        for name in self.table_names() {
            if !name.starts_with(TEMP_PREFIX) {
                objects.push((name.clone(), self.snapshot_text(&name)?));
            }
        }
        snapshot::write_dir(dir, SNAPSHOT_EXT, &objects)
    }

    /// Replaces the engine's contents with the snapshots in `dir`.
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
