//! Scalar values, schemas and result sets shared by every engine.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

pub const MAX_IDENT_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ValueKind {
    Int64,
    Float64,
    Text,
}

impl ValueKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueKind::Int64 | ValueKind::Float64)
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Int64 => "Int64",
            ValueKind::Float64 => "Float64",
            ValueKind::Text => "Text",
        })
    }
}

impl FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Int64" => Ok(ValueKind::Int64),
            "Float64" => Ok(ValueKind::Float64),
            "Text" => Ok(ValueKind::Text),
            other => Err(Error::InvalidSchema(format!("unknown type {other:?}"))),
        }
    }
}

/// A typed scalar. Timestamps are Int64 epoch milliseconds by convention.
#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Int(i64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn kind(&self) -> Option<ValueKind> {
        match self {
            Value::Null => None,
            Value::Int(_) => Some(ValueKind::Int64),
            Value::Float(_) => Some(ValueKind::Float64),
            Value::Text(_) => Some(ValueKind::Text),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Int(_) => 1,
            Value::Float(_) => 2,
            Value::Text(_) => 3,
        }
    }

    /// Comparison used by predicates: numeric kinds compare with each other,
    /// anything involving Null (or Text against a number) is `None`.
    pub fn predicate_cmp(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Float(a), Value::Float(b)) => a.partial_cmp(b),
            (Value::Int(a), Value::Float(b)) => cmp_int_float(*a, *b),
            (Value::Float(a), Value::Int(b)) => cmp_int_float(*b, *a).map(Ordering::reverse),
            (Value::Text(a), Value::Text(b)) => Some(a.as_bytes().cmp(b.as_bytes())),
            _ => None,
        }
    }

    /// Canonical text rendering: integers in decimal, floats in shortest
    /// round-trip form (always with a `.` or exponent), text verbatim.
    pub fn render(&self) -> Option<String> {
        match self {
            Value::Null => None,
            Value::Int(i) => Some(i.to_string()),
            Value::Float(f) => Some(render_float(*f)),
            Value::Text(s) => Some(s.clone()),
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

pub fn render_float(f: f64) -> String {
    format!("{f:?}")
}

fn cmp_int_float(i: i64, f: f64) -> Option<Ordering> {
    if f.is_nan() {
        return None;
    }
    // 2^63 as f64; anything at or beyond it is outside i64.
    const LIMIT: f64 = 9_223_372_036_854_775_808.0;
    if f >= LIMIT {
        return Some(Ordering::Less);
    }
    if f < -LIMIT {
        return Some(Ordering::Greater);
    }
    let whole = f.trunc();
    match i.cmp(&(whole as i64)) {
        Ordering::Equal => 0.0f64.partial_cmp(&(f - whole)),
        ord => Some(ord),
    }
}

/// Total order: Null < Int64 < Float64 < Text across kinds, natural order
/// within a kind (floats by IEEE total order, text byte-wise).
pub fn compare(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Null, Value::Null) => Ordering::Equal,
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Float(x), Value::Float(y)) => x.total_cmp(y),
        (Value::Text(x), Value::Text(y)) => x.as_bytes().cmp(y.as_bytes()),
        _ => a.rank().cmp(&b.rank()),
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        compare(self, other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        compare(self, other)
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Null => {}
            Value::Int(i) => i.hash(state),
            Value::Float(f) => f.to_bits().hash(state),
            Value::Text(s) => s.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.render() {
            Some(s) => f.write_str(&s),
            None => f.write_str("NULL"),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// Converts `v` to `target`. Float to Int truncates toward zero.
pub fn coerce(v: &Value, target: ValueKind) -> Result<Value> {
    let fail = || Error::Coerce {
        value: v.to_string(),
        target,
    };
    Ok(match (v, target) {
        (Value::Null, _) => Value::Null,
        (Value::Int(i), ValueKind::Int64) => Value::Int(*i),
        (Value::Int(i), ValueKind::Float64) => Value::Float(*i as f64),
        (Value::Float(f), ValueKind::Float64) => Value::Float(*f),
        (Value::Float(f), ValueKind::Int64) => {
            let t = f.trunc();
            if !(-9_223_372_036_854_775_808.0..9_223_372_036_854_775_808.0).contains(&t) {
                return Err(fail());
            }
            Value::Int(t as i64)
        }
        (Value::Text(s), ValueKind::Text) => Value::Text(s.clone()),
        (v, ValueKind::Text) => Value::Text(v.render().unwrap_or_default()),
        (Value::Text(s), ValueKind::Int64) => Value::Int(s.parse().map_err(|_| fail())?),
        (Value::Text(s), ValueKind::Float64) => Value::Float(parse_float(s).ok_or_else(fail)?),
    })
}

/// Decimal float parsing that rejects Rust-specific spellings such as `+inf`.
pub(crate) fn parse_float(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "NaN" => Some(f64::NAN),
        _ if s.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'))
            && s.bytes().any(|b| b.is_ascii_digit()) =>
        {
            s.parse().ok()
        }
        _ => None,
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut bytes = s.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_alphabetic() || b == b'_' => {}
        _ => return false,
    }
    s.len() <= MAX_IDENT_LEN && bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

pub(crate) fn check_identifier(s: &str) -> Result<()> {
    if is_identifier(s) {
        Ok(())
    } else {
        Err(Error::InvalidSchema(format!("invalid identifier {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Field {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: ValueKind,
}

impl Field {
    pub fn new(name: impl Into<String>, kind: ValueKind) -> Self {
        Field {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered list of uniquely named, typed fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Schema {
    fields: Vec<Field>,
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Result<Schema> {
        for (i, f) in fields.iter().enumerate() {
            check_identifier(&f.name)?;
            if fields[..i].iter().any(|g| g.name.eq_ignore_ascii_case(&f.name)) {
                return Err(Error::InvalidSchema(format!("duplicate field {:?}", f.name)));
            }
        }
        Ok(Schema { fields })
    }

    /// Builds a schema from possibly clashing output names, suffixing
    /// repeats with `_2`, `_3`, ...
    pub fn dedup(fields: Vec<Field>) -> Schema {
        let mut out: Vec<Field> = Vec::with_capacity(fields.len());
        for f in fields {
            let taken = |n: &str, out: &[Field]| out.iter().any(|g| g.name.eq_ignore_ascii_case(n));
            let mut name = f.name.clone();
            let mut n = 2;
            while taken(&name, &out) {
                name = format!("{}_{n}", f.name);
                n += 1;
            }
            out.push(Field::new(name, f.kind));
        }
        Schema { fields: out }
    }

    pub fn parse(spec: &str) -> Result<Schema> {
        if spec.is_empty() {
            return Ok(Schema::default());
        }
        let fields = spec
            .split(',')
            .map(|part| {
                let (name, kind) = part
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidSchema(format!("expected name:type, got {part:?}")))?;
                Ok(Field::new(name, kind.parse()?))
            })
            .collect::<Result<Vec<_>>>()?;
        Schema::new(fields)
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name.eq_ignore_ascii_case(name))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }

    /// Whether `row` has the right arity and each value matches its field or is Null.
    pub fn conforms(&self, row: &[Value]) -> bool {
        row.len() == self.fields.len()
            && row
                .iter()
                .zip(&self.fields)
                .all(|(v, f)| v.kind().is_none_or(|k| k == f.kind))
    }

    pub(crate) fn check_row(&self, row: &[Value]) -> Result<()> {
        if self.conforms(row) {
            Ok(())
        } else {
            Err(Error::SchemaMismatch(format!(
                "row ({}) does not conform to ({})",
                row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "),
                self
            )))
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, field) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", field.name, field.kind)?;
        }
        Ok(())
    }
}

pub type Row = Vec<Value>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultSet {
    pub schema: Schema,
    pub rows: Vec<Row>,
}

impl ResultSet {
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<ResultSet> {
        for row in &rows {
            schema.check_row(row)?;
        }
        Ok(ResultSet { schema, rows })
    }

    pub fn empty(schema: Schema) -> ResultSet {
        ResultSet {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
