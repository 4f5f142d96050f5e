//! Embedded n-dimensional sparse array engine.
//!
//! Arrays store cells in a coordinate-ordered map, so every operator emits
//! cells in lexicographic coordinate order. Results flatten to tuples of
//! (dims..., attrs...).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;

use crate::agg::{AggFunc, Accumulator};
use crate::csv::{parse_csv, render_csv};
use crate::error::{Error, Result};
use crate::expr::{bind_predicate, bind_value, BoundExpr, Expr, Scope};
use crate::snapshot::{self, TEMP_PREFIX};
use crate::value::{check_identifier, Field, ResultSet, Row, Schema, Value, ValueKind};

pub const SNAPSHOT_HEADER: &str = "POLYGATE-ARR v1";
const SNAPSHOT_EXT: &str = "arr";

/// A named dimension with inclusive bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dim {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

impl Dim {
    pub fn new(name: impl Into<String>, lo: i64, hi: i64) -> Dim {
        Dim {
            name: name.into(),
            lo,
            hi,
        }
    }

    fn contains(&self, c: i64) -> bool {
        self.lo <= c && c <= self.hi
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.name, self.lo, self.hi)
    }
}

fn parse_dims(line: &str) -> Result<Vec<Dim>> {
    line.split(',')
        .map(|part| {
            let mut it = part.split(':');
            let bad = || Error::InvalidSchema(format!("bad dimension {part:?}"));
            let name = it.next().ok_or_else(bad)?;
            let lo = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let hi = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if it.next().is_some() {
                return Err(bad());
            }
            Ok(Dim::new(name, lo, hi))
        })
        .collect()
}

pub type Coord = Vec<i64>;

#[derive(Debug, Clone)]
pub struct ArrayObject {
    pub dims: Vec<Dim>,
    pub attrs: Schema,
    cells: Arc<BTreeMap<Coord, Row>>,
}

impl ArrayObject {
    pub fn cells(&self) -> &BTreeMap<Coord, Row> {
        &self.cells
    }

    /// Flattened schema: dims as Int64 columns followed by the attributes.
    pub fn flat_schema(&self) -> Schema {
        flat_schema(&self.dims, self.attrs.fields())
    }
}

fn flat_schema(dims: &[Dim], attrs: &[Field]) -> Schema {
    let mut fields: Vec<Field> = dims.iter().map(|d| Field::new(d.name.clone(), ValueKind::Int64)).collect();
    fields.extend(attrs.iter().cloned());
    Schema::dedup(fields)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrPlan {
    Scan {
        array: String,
    },
    Filter {
        input: Box<ArrPlan>,
        predicate: Expr,
    },
    /// Inclusive (lo, hi) per dimension.
    Subarray {
        input: Box<ArrPlan>,
        bounds: Vec<(i64, i64)>,
    },
    Project {
        input: Box<ArrPlan>,
        attrs: Vec<String>,
    },
    Apply {
        input: Box<ArrPlan>,
        name: String,
        expr: Expr,
    },
    Aggregate {
        input: Box<ArrPlan>,
        func: AggFunc,
        /// `None` for `count(*)`.
        attr: Option<String>,
        dims: Vec<String>,
    },
}

impl ArrPlan {
    pub fn scan(array: &str) -> ArrPlan {
        ArrPlan::Scan {
            array: array.to_string(),
        }
    }

    pub fn filter(self, predicate: Expr) -> ArrPlan {
        ArrPlan::Filter {
            input: Box::new(self),
            predicate,
        }
    }

    pub fn subarray(self, bounds: Vec<(i64, i64)>) -> ArrPlan {
        ArrPlan::Subarray {
            input: Box::new(self),
            bounds,
        }
    }

    pub fn array(&self) -> &str {
        match self {
            ArrPlan::Scan { array } => array,
            ArrPlan::Filter { input, .. }
            | ArrPlan::Subarray { input, .. }
            | ArrPlan::Project { input, .. }
            | ArrPlan::Apply { input, .. }
            | ArrPlan::Aggregate { input, .. } => input.array(),
        }
    }

    pub fn rename_array(&mut self, new: &str) {
        match self {
            ArrPlan::Scan { array } => *array = new.to_string(),
            ArrPlan::Filter { input, .. }
            | ArrPlan::Subarray { input, .. }
            | ArrPlan::Project { input, .. }
            | ArrPlan::Apply { input, .. }
            | ArrPlan::Aggregate { input, .. } => input.rename_array(new),
        }
    }

    /// Flattened output schema given the scanned array's flattened schema
    /// and dimension count.
    pub fn output_schema(&self, dim_names: &[String], attrs: &Schema) -> Result<Schema> {
        let dims: Vec<Dim> = dim_names.iter().map(|n| Dim::new(n.clone(), 0, 0)).collect();
        let bound = bind_arr(self, &|_| Ok((dims.clone(), attrs.clone())))?;
        Ok(flat_schema(&bound.dims, &bound.attrs))
    }
}

/// Resolved operator with the shape (dims, attrs) of its output.
#[derive(Debug, Clone)]
struct BoundArr {
    node: ArrNode,
    dims: Vec<Dim>,
    attrs: Vec<Field>,
}

#[derive(Debug, Clone)]
enum ArrNode {
    Scan,
    Filter(Box<BoundArr>, BoundExpr),
    Subarray(Box<BoundArr>),
    Project(Box<BoundArr>, Vec<usize>),
    Apply(Box<BoundArr>, BoundExpr),
    Aggregate(Box<BoundArr>, AggFunc, Option<usize>, Vec<usize>),
}

impl BoundArr {
    fn scope(&self) -> Scope {
        let mut fields: Vec<Field> = self.dims.iter().map(|d| Field::new(d.name.clone(), ValueKind::Int64)).collect();
        fields.extend(self.attrs.iter().cloned());
        Scope::unqualified(&fields)
    }

    fn has_name(&self, name: &str) -> bool {
        self.dims.iter().any(|d| d.name.eq_ignore_ascii_case(name))
            || self.attrs.iter().any(|a| a.name.eq_ignore_ascii_case(name))
    }

    fn attr_index(&self, name: &str) -> Result<usize> {
        self.attrs
            .iter()
            .position(|a| a.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Plan(format!("unknown attribute {name}")))
    }
}

type ShapeFn<'a> = dyn Fn(&str) -> Result<(Vec<Dim>, Schema)> + 'a;

fn bind_arr(plan: &ArrPlan, shape: &ShapeFn<'_>) -> Result<BoundArr> {
    Ok(match plan {
        ArrPlan::Scan { array } => {
            let (dims, attrs) = shape(array)?;
            BoundArr {
                node: ArrNode::Scan,
                dims,
                attrs: attrs.fields().to_vec(),
            }
        }
        ArrPlan::Filter { input, predicate } => {
            let input = bind_arr(input, shape)?;
            let pred = bind_predicate(predicate, &input.scope())?;
            let (dims, attrs) = (input.dims.clone(), input.attrs.clone());
            BoundArr {
                node: ArrNode::Filter(Box::new(input), pred),
                dims,
                attrs,
            }
        }
        ArrPlan::Subarray { input, bounds } => {
            let input = bind_arr(input, shape)?;
            if bounds.len() != input.dims.len() {
                return Err(Error::Plan(format!(
                    "subarray expects {} bound pairs, got {}",
                    input.dims.len(),
                    bounds.len()
                )));
            }
            let dims = input
                .dims
                .iter()
                .zip(bounds)
                .map(|(d, (lo, hi))| Dim::new(d.name.clone(), d.lo.max(*lo), d.hi.min(*hi)))
                .collect();
            let attrs = input.attrs.clone();
            BoundArr {
                node: ArrNode::Subarray(Box::new(input)),
                dims,
                attrs,
            }
        }
        ArrPlan::Project { input, attrs } => {
            let input = bind_arr(input, shape)?;
            let idx = attrs.iter().map(|a| input.attr_index(a)).collect::<Result<Vec<_>>>()?;
            let out: Vec<Field> = idx.iter().map(|i| input.attrs[*i].clone()).collect();
            if Schema::new(out.clone()).is_err() {
                return Err(Error::Plan("project lists an attribute twice".into()));
            }
            let dims = input.dims.clone();
            BoundArr {
                node: ArrNode::Project(Box::new(input), idx),
                dims,
                attrs: out,
            }
        }
        ArrPlan::Apply { input, name, expr } => {
            let input = bind_arr(input, shape)?;
            check_identifier(name).map_err(|e| Error::Plan(e.to_string()))?;
            if input.has_name(name) {
                return Err(Error::Plan(format!("apply target {name} already exists")));
            }
            let (b, kind) = bind_value(expr, &input.scope())?;
            let dims = input.dims.clone();
            let mut attrs = input.attrs.clone();
            attrs.push(Field::new(name.clone(), kind));
            BoundArr {
                node: ArrNode::Apply(Box::new(input), b),
                dims,
                attrs,
            }
        }
        ArrPlan::Aggregate { input, func, attr, dims } => {
            let input = bind_arr(input, shape)?;
            let (arg, arg_kind, out_name) = match attr {
                None => (None, None, func.name().to_string()),
                Some(a) => {
                    let i = input.attr_index(a)?;
                    (Some(i), Some(input.attrs[i].kind), format!("{}_{}", func.name(), input.attrs[i].name))
                }
            };
            let kind = func.output_kind(arg_kind)?;
            let mut group = Vec::with_capacity(dims.len());
            for d in dims {
                let i = input
                    .dims
                    .iter()
                    .position(|x| x.name.eq_ignore_ascii_case(d))
                    .ok_or_else(|| Error::Plan(format!("unknown dimension {d}")))?;
                if group.contains(&i) {
                    return Err(Error::Plan(format!("dimension {d} listed twice")));
                }
                group.push(i);
            }
            let out_dims: Vec<Dim> = group.iter().map(|i| input.dims[*i].clone()).collect();
            if out_dims.iter().any(|d| d.name.eq_ignore_ascii_case(&out_name)) {
                return Err(Error::Plan(format!("aggregate output {out_name} clashes with a dimension")));
            }
            BoundArr {
                node: ArrNode::Aggregate(Box::new(input), *func, arg, group),
                dims: out_dims,
                attrs: vec![Field::new(out_name, kind)],
            }
        }
    })
}

type Cells = Vec<(Coord, Row)>;

fn run(plan: &BoundArr, source: &BTreeMap<Coord, Row>) -> Cells {
    match &plan.node {
        ArrNode::Scan => source.iter().map(|(c, r)| (c.clone(), r.clone())).collect(),
        ArrNode::Filter(input, pred) => run(input, source)
            .into_iter()
            .filter(|(c, r)| pred.test(&flat_row(c, r)))
            .collect(),
        ArrNode::Subarray(input) => run(input, source)
            .into_iter()
            .filter(|(c, _)| c.iter().zip(&plan.dims).all(|(x, d)| d.contains(*x)))
            .collect(),
        ArrNode::Project(input, idx) => run(input, source)
            .into_iter()
            .map(|(c, r)| {
                let out = idx.iter().map(|i| r[*i].clone()).collect();
                (c, out)
            })
            .collect(),
        ArrNode::Apply(input, expr) => run(input, source)
            .into_iter()
            .map(|(c, mut r)| {
                let v = expr.eval(&flat_row(&c, &r));
                r.push(v);
                (c, r)
            })
            .collect(),
        ArrNode::Aggregate(input, func, arg, group) => {
            let mut groups: BTreeMap<Coord, Accumulator> = BTreeMap::new();
            if group.is_empty() {
                groups.insert(Vec::new(), Accumulator::new(*func));
            }
            for (c, r) in run(input, source) {
                let key: Coord = group.iter().map(|i| c[*i]).collect();
                let acc = groups.entry(key).or_insert_with(|| Accumulator::new(*func));
                acc.update(arg.map(|i| &r[i]));
            }
            groups.into_iter().map(|(k, acc)| (k, vec![acc.finish()])).collect()
        }
    }
}

fn flat_row(c: &[i64], r: &[Value]) -> Row {
    c.iter().map(|x| Value::Int(*x)).chain(r.iter().cloned()).collect()
}

#[derive(Debug, Default)]
pub struct ArrayEngine {
    arrays: RwLock<BTreeMap<String, Arc<RwLock<ArrayObject>>>>,
}

fn key(name: &str) -> String {
    name.to_ascii_lowercase()
}

impl ArrayEngine {
    pub fn new() -> Self {
        Self::default()
    }

    fn array(&self, name: &str) -> Result<Arc<RwLock<ArrayObject>>> {
        self.arrays
            .read()
            .get(&key(name))
            .cloned()
            .ok_or_else(|| Error::NoSuchObject(name.to_string()))
    }

    pub fn create_array(&self, name: &str, dims: Vec<Dim>, attrs: Schema) -> Result<()> {
        check_identifier(name)?;
        if dims.is_empty() {
            return Err(Error::InvalidSchema("an array needs at least one dimension".into()));
        }
        for d in &dims {
            if d.lo > d.hi {
                return Err(Error::InvalidSchema(format!("dimension {} has lo > hi", d.name)));
            }
        }
        let mut all: Vec<Field> = dims.iter().map(|d| Field::new(d.name.clone(), ValueKind::Int64)).collect();
        all.extend(attrs.fields().iter().cloned());
        Schema::new(all)?;
        let mut arrays = self.arrays.write();
        if arrays.contains_key(&key(name)) {
            return Err(Error::DuplicateObject(name.to_string()));
        }
        arrays.insert(
            key(name),
            Arc::new(RwLock::new(ArrayObject {
                dims,
                attrs,
                cells: Arc::new(BTreeMap::new()),
            })),
        );
        Ok(())
    }

    pub fn drop_array(&self, name: &str) -> Result<()> {
        self.arrays
            .write()
            .remove(&key(name))
            .map(|_| ())
            .ok_or_else(|| Error::NoSuchObject(name.to_string()))
    }

    /// Upserts cells; all are validated before any is written.
    pub fn put_cells(&self, name: &str, cells: Vec<(Coord, Row)>) -> Result<usize> {
        let array = self.array(name)?;
        let mut a = array.write();
        for (c, row) in &cells {
            if c.len() != a.dims.len() || !c.iter().zip(&a.dims).all(|(x, d)| d.contains(*x)) {
                return Err(Error::CoordOutOfBounds(format!(
                    "{:?} outside {}",
                    c,
                    a.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
                )));
            }
            a.attrs.check_row(row)?;
        }
        let n = cells.len();
        Arc::make_mut(&mut a.cells).extend(cells);
        Ok(n)
    }

    pub fn describe(&self, name: &str) -> Result<(Vec<Dim>, Schema)> {
        let array = self.array(name)?;
        let a = array.read();
        Ok((a.dims.clone(), a.attrs.clone()))
    }

    pub fn cell_count(&self, name: &str) -> Result<usize> {
        Ok(self.array(name)?.read().cells.len())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.read().contains_key(&key(name))
    }

    pub fn array_names(&self) -> Vec<String> {
        self.arrays.read().keys().cloned().collect()
    }

    pub fn read_array(&self, name: &str) -> Result<ArrayObject> {
        Ok(self.array(name)?.read().clone())
    }

    pub fn execute(&self, plan: &ArrPlan) -> Result<ResultSet> {
        let obj = self.read_array(plan.array())?;
        let bound = bind_arr(plan, &|_| Ok((obj.dims.clone(), obj.attrs.clone())))?;
        let rows = run(&bound, &obj.cells)
            .into_iter()
            .map(|(c, r)| flat_row(&c, &r))
            .collect();
        Ok(ResultSet {
            schema: flat_schema(&bound.dims, &bound.attrs),
            rows,
        })
    }

    pub fn snapshot_text(&self, name: &str) -> Result<String> {
        let obj = self.read_array(name)?;
        let rs = ResultSet {
            schema: obj.flat_schema(),
            rows: obj.cells.iter().map(|(c, r)| flat_row(c, r)).collect(),
        };
        let dims: Vec<String> = obj.dims.iter().map(|d| d.to_string()).collect();
        Ok(format!("{SNAPSHOT_HEADER}\n{}\n{}\n{}", dims.join(","), obj.attrs, render_csv(&rs)))
    }

    pub fn restore_text(&self, name: &str, text: &str) -> Result<()> {
        let file = format!("{name}.{SNAPSHOT_EXT}");
        let body = snapshot::expect_header(text, SNAPSHOT_HEADER, &file)?;
        let (dims_line, body) = snapshot::take_line(body, &file)?;
        let (attrs_line, csv) = snapshot::take_line(body, &file)?;
        let dims = parse_dims(dims_line).map_err(snapshot::annotate(&file))?;
        let attrs = Schema::parse(attrs_line).map_err(snapshot::annotate(&file))?;
        let nd = dims.len();
        let flat = flat_schema(&dims, attrs.fields());
        let rs = parse_csv(csv, &flat).map_err(snapshot::annotate(&file))?;
        let mut cells = Vec::with_capacity(rs.rows.len());
        for mut row in rs.rows {
            let attrs_part = row.split_off(nd);
            let coord = row
                .iter()
                .map(|v| v.as_i64())
                .collect::<Option<Coord>>()
                .ok_or_else(|| Error::Snapshot {
                    file: file.clone(),
                    reason: "null coordinate".into(),
                })?;
            cells.push((coord, attrs_part));
        }
        self.create_array(name, dims, attrs)?;
        self.put_cells(name, cells)?;
        Ok(())
    }

    pub fn flush(&self, dir: &Path) -> Result<()> {
        let mut objects = Vec::new();
        for name in self.array_names() {
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
        self.arrays.write().clear();
    }
}
