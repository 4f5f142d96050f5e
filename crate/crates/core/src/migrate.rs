//! Cast layer: converts a result set into an object of another island and
//! copies objects between engines of one island.
//!
//! Every source is first in flat relational form (array results are already
//! flattened to dims then attrs; text results are entry tuples), so all nine
//! island pairs reduce to three target transforms.

use std::collections::BTreeSet;

use crate::array::{Coord, Dim};
use crate::engine::{EngineHandle, EngineInstance};
use crate::error::{Error, Result};
use crate::lang::MappingSpec;
use crate::text::KvEntry;
use crate::value::{ResultSet, Row, Schema, Value, ValueKind};

fn column(schema: &Schema, name: &str) -> Result<usize> {
    schema
        .index_of(name)
        .ok_or_else(|| Error::SpecMismatch(format!("no column {name} in ({schema})")))
}

/// Table schema and rows for a cast into the relational island.
pub fn to_relational(rs: &ResultSet, spec: &MappingSpec) -> Result<(Schema, Vec<Row>)> {
    let cols = match spec {
        MappingSpec::Star => return Ok((rs.schema.clone(), rs.rows.clone())),
        MappingSpec::Columns(cols) => cols,
        other => return Err(Error::SpecMismatch(format!("{other} is not a relational spec"))),
    };
    let idx = cols.iter().map(|c| column(&rs.schema, c)).collect::<Result<Vec<_>>>()?;
    let schema = Schema::new(idx.iter().map(|&i| rs.schema.fields()[i].clone()).collect())
        .map_err(|e| Error::SpecMismatch(e.to_string()))?;
    let rows = rs.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
    Ok((schema, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayData {
    pub dims: Vec<Dim>,
    pub attrs: Schema,
    pub cells: Vec<(Coord, Row)>,
}

/// Array shape and cells for a cast into the array island. The box is the
/// tight extent of the observed coordinates.
pub fn to_array(rs: &ResultSet, spec: &MappingSpec) -> Result<ArrayData> {
    let (dim_idx, attr_idx): (Vec<usize>, Vec<usize>) = match spec {
        MappingSpec::Star => {
            if rs.schema.is_empty() {
                return Err(Error::SpecMismatch("cannot cast an empty schema to an array".into()));
            }
            (vec![0], (1..rs.schema.len()).collect())
        }
        MappingSpec::Array { attrs, dims } => (
            dims.iter().map(|c| column(&rs.schema, c)).collect::<Result<_>>()?,
            attrs.iter().map(|c| column(&rs.schema, c)).collect::<Result<_>>()?,
        ),
        other => return Err(Error::SpecMismatch(format!("{other} is not an array spec"))),
    };
    let fields = rs.schema.fields();
    let mut names = BTreeSet::new();
    for &i in dim_idx.iter().chain(&attr_idx) {
        if !names.insert(i) {
            return Err(Error::SpecMismatch(format!("column {} is used twice", fields[i].name)));
        }
    }
    for &i in &dim_idx {
        if fields[i].kind != ValueKind::Int64 {
            return Err(Error::SpecMismatch(format!(
                "dimension column {} is {}, not Int64",
                fields[i].name, fields[i].kind
            )));
        }
    }
    let attrs = Schema::new(attr_idx.iter().map(|&i| fields[i].clone()).collect())
        .map_err(|e| Error::SpecMismatch(e.to_string()))?;
    let mut bounds: Vec<Option<(i64, i64)>> = vec![None; dim_idx.len()];
    let mut seen = BTreeSet::new();
    let mut cells = Vec::with_capacity(rs.rows.len());
    for row in &rs.rows {
        let mut coord: Coord = Vec::with_capacity(dim_idx.len());
        for (d, &i) in dim_idx.iter().enumerate() {
            let Value::Int(c) = row[i] else {
                return Err(Error::NullCoordinate(fields[i].name.clone()));
            };
            bounds[d] = Some(match bounds[d] {
                None => (c, c),
                Some((lo, hi)) => (lo.min(c), hi.max(c)),
            });
            coord.push(c);
        }
        if !seen.insert(coord.clone()) {
            return Err(Error::DuplicateCoordinate(format!("{coord:?}")));
        }
        cells.push((coord, attr_idx.iter().map(|&i| row[i].clone()).collect()));
    }
    let dims = dim_idx
        .iter()
        .zip(bounds)
        .map(|(&i, b)| {
            let (lo, hi) = b.unwrap_or((0, 0));
            Dim::new(fields[i].name.clone(), lo, hi)
        })
        .collect();
    Ok(ArrayData { dims, attrs, cells })
}

/// Entries for a cast into the text island: one per (row, value column),
/// keyed by the rendered row column. Null values become empty strings.
pub fn to_text(rs: &ResultSet, spec: &MappingSpec, colfam: &str, ts: i64) -> Result<Vec<KvEntry>> {
    let (row_idx, value_idx): (usize, Vec<usize>) = match spec {
        MappingSpec::Star => {
            if rs.schema.is_empty() {
                return Err(Error::SpecMismatch("cannot cast an empty schema to text".into()));
            }
            (0, (1..rs.schema.len()).collect())
        }
        MappingSpec::Text { row_col, value_cols } => (
            column(&rs.schema, row_col)?,
            value_cols.iter().map(|c| column(&rs.schema, c)).collect::<Result<_>>()?,
        ),
        other => return Err(Error::SpecMismatch(format!("{other} is not a text spec"))),
    };
    let fields = rs.schema.fields();
    let mut quals = BTreeSet::new();
    for &i in &value_idx {
        if i == row_idx || !quals.insert(i) {
            return Err(Error::SpecMismatch(format!("column {} is used twice", fields[i].name)));
        }
    }
    let mut keys = BTreeSet::new();
    let mut out = Vec::with_capacity(rs.rows.len() * value_idx.len());
    for row in &rs.rows {
        let key = row[row_idx]
            .render()
            .ok_or_else(|| Error::NullCoordinate(fields[row_idx].name.clone()))?;
        if !keys.insert(key.clone()) {
            return Err(Error::DuplicateCoordinate(key));
        }
        for &i in &value_idx {
            let value = row[i].render().unwrap_or_default();
            out.push(KvEntry::new(&key, colfam, &fields[i].name, ts, &value));
        }
    }
    Ok(out)
}

/// Materializes `rs` as object `dest_name` on `dest`. Returns the number of
/// rows, cells or entries written.
pub fn migrate(
    rs: &ResultSet,
    spec: &MappingSpec,
    dest: &EngineHandle,
    dest_name: &str,
    colfam: &str,
    ts: i64,
) -> Result<(usize, Vec<String>)> {
    dest.with(|inst| match inst {
        EngineInstance::Rel(e) => {
            let (schema, rows) = to_relational(rs, spec)?;
            let fields = schema.names().map(str::to_string).collect();
            e.create_table(dest_name, schema)?;
            Ok((e.insert(dest_name, rows)?, fields))
        }
        EngineInstance::Arr(e) => {
            let data = to_array(rs, spec)?;
            let fields = data
                .dims
                .iter()
                .map(|d| d.name.clone())
                .chain(data.attrs.names().map(str::to_string))
                .collect();
            e.create_array(dest_name, data.dims, data.attrs)?;
            Ok((e.put_cells(dest_name, data.cells)?, fields))
        }
        EngineInstance::Text(e) => {
            let entries = to_text(rs, spec, colfam, ts)?;
            e.create_kv(dest_name)?;
            Ok((e.put(dest_name, entries)?, text_fields()))
        }
    })
}

fn text_fields() -> Vec<String> {
    crate::text::kv_schema().names().map(str::to_string).collect()
}

/// Field names of an object as recorded in the catalog.
pub fn object_fields(inst: &EngineInstance, name: &str) -> Result<Vec<String>> {
    Ok(match inst {
        EngineInstance::Rel(e) => e.schema(name)?.names().map(str::to_string).collect(),
        EngineInstance::Arr(e) => {
            let (dims, attrs) = e.describe(name)?;
            dims.into_iter()
                .map(|d| d.name)
                .chain(attrs.names().map(str::to_string))
                .collect()
        }
        EngineInstance::Text(e) => {
            e.entry_count(name)?;
            text_fields()
        }
    })
}

/// Copies `object` from `src` to `dest` as `dest_name` through the snapshot
/// format, so both copies serialize identically.
pub fn copy_same_island(src: &EngineHandle, object: &str, dest: &EngineHandle, dest_name: &str) -> Result<()> {
    if src.kind != dest.kind {
        return Err(Error::KindMismatch(format!(
            "cannot copy from {} engine {} to {} engine {}",
            src.kind, src.name, dest.kind, dest.name
        )));
    }
    let text = src.with(|i| i.snapshot_text(object))?;
    dest.with(|i| {
        if i.contains(dest_name) {
            return Err(Error::DuplicateObject(dest_name.to_string()));
        }
        i.restore_text(dest_name, &text)
    })
}
