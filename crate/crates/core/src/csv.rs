//! CSV rendering of result sets, and the matching reader used for snapshots.
//!
//! Output is LF-terminated with a header line always present. Text fields are
//! quoted when they are empty or contain `,`, `"`, CR or LF; Null renders as an
//! empty unquoted field. The reader therefore maps an empty unquoted field to
//! Null and `""` to the empty string.

use crate::error::{Error, Result};
use crate::value::{parse_float, ResultSet, Row, Schema, Value, ValueKind};

pub fn render_csv(rs: &ResultSet) -> String {
    let mut out = String::new();
    let header: Vec<&str> = rs.schema.names().collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in &rs.rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            push_field(&mut out, v);
        }
        out.push('\n');
    }
    out
}

fn push_field(out: &mut String, v: &Value) {
    match v {
        Value::Null => {}
        Value::Text(s) => {
            if s.is_empty() || s.contains([',', '"', '\r', '\n']) {
                out.push('"');
                out.push_str(&s.replace('"', "\"\""));
                out.push('"');
            } else {
                out.push_str(s);
            }
        }
        other => out.push_str(&other.render().unwrap_or_default()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvField {
    pub text: String,
    pub quoted: bool,
}

/// Splits LF-terminated CSV text into records. A trailing record without a
/// final LF is accepted.
pub fn parse_records(input: &str) -> Result<Vec<Vec<CsvField>>> {
    let bad = |msg: &str| Error::Snapshot {
        file: "<csv>".into(),
        reason: msg.to_string(),
    };
    let mut records = Vec::new();
    let mut record = Vec::new();
    let mut chars = input.chars().peekable();
    if input.is_empty() {
        return Ok(records);
    }
    loop {
        let mut field = CsvField {
            text: String::new(),
            quoted: false,
        };
        if chars.peek() == Some(&'"') {
            chars.next();
            field.quoted = true;
            loop {
                match chars.next() {
                    None => return Err(bad("unterminated quoted field")),
                    Some('"') if chars.peek() == Some(&'"') => {
                        chars.next();
                        field.text.push('"');
                    }
                    Some('"') => break,
                    Some(c) => field.text.push(c),
                }
            }
            if !matches!(chars.peek(), None | Some(',') | Some('\n')) {
                return Err(bad("characters after closing quote"));
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c == ',' || c == '\n' {
                    break;
                }
                if c == '"' {
                    return Err(bad("quote inside unquoted field"));
                }
                field.text.push(c);
                chars.next();
            }
        }
        record.push(field);
        match chars.next() {
            Some(',') => continue,
            Some('\n') => {
                records.push(std::mem::take(&mut record));
                if chars.peek().is_none() {
                    break;
                }
            }
            None => {
                records.push(std::mem::take(&mut record));
                break;
            }
            Some(_) => unreachable!(),
        }
    }
    Ok(records)
}

pub fn field_value(field: &CsvField, kind: ValueKind) -> Result<Value> {
    if field.text.is_empty() && !field.quoted {
        return Ok(Value::Null);
    }
    let bad = || Error::Snapshot {
        file: "<csv>".into(),
        reason: format!("{:?} is not a valid {kind}", field.text),
    };
    Ok(match kind {
        ValueKind::Text => Value::Text(field.text.clone()),
        _ if field.quoted => return Err(bad()),
        ValueKind::Int64 => Value::Int(field.text.parse().map_err(|_| bad())?),
        ValueKind::Float64 => Value::Float(parse_float(&field.text).ok_or_else(bad)?),
    })
}

/// Reads CSV produced by [`render_csv`] back into a result set with the
/// given schema. The header line must list the schema's field names.
pub fn parse_csv(input: &str, schema: &Schema) -> Result<ResultSet> {
    let mut records = parse_records(input)?.into_iter();
    let header = records.next().ok_or_else(|| Error::Snapshot {
        file: "<csv>".into(),
        reason: "missing header".into(),
    })?;
    let names: Vec<&str> = schema.names().collect();
    let header_names: Vec<&str> = header.iter().map(|f| f.text.as_str()).collect();
    let header_ok = if names.is_empty() {
        header_names == [""]
    } else {
        header_names == names
    };
    if !header_ok {
        return Err(Error::Snapshot {
            file: "<csv>".into(),
            reason: format!("header {header_names:?} does not match schema {schema}"),
        });
    }
    let mut rows: Vec<Row> = Vec::new();
    for rec in records {
        if schema.is_empty() {
            rows.push(Vec::new());
            continue;
        }
        if rec.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "record has {} fields, expected {}",
                rec.len(),
                schema.len()
            )));
        }
        rows.push(
            rec.iter()
                .zip(schema.fields())
                .map(|(f, field)| field_value(f, field.kind))
                .collect::<Result<_>>()?,
        );
    }
    ResultSet::new(schema.clone(), rows)
}
