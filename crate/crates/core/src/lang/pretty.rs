//! Canonical rendering. `parse(q.to_string()) == q` for every parsed `q`.

use std::fmt::{self, Display, Formatter};

use super::ast::*;

fn join<T: Display>(f: &mut Formatter<'_>, items: &[T], sep: &str) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(sep)?;
        }
        write!(f, "{item}")?;
    }
    Ok(())
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

impl Display for ScopedQuery {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.island().scope_keyword())?;
        match self {
            ScopedQuery::Rel(s) => write!(f, "{s}")?,
            ScopedQuery::Arr(a) => write!(f, "{a}")?,
            ScopedQuery::Text(t) => write!(f, "{t}")?,
        }
        f.write_str(")")
    }
}

impl Display for Source {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Source::Named(n) => f.write_str(n),
            Source::Cast(c) => write!(f, "{c}"),
        }
    }
}

impl Display for Cast {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "bdcast({}, {}, {}, {})", self.inner, self.dest_name, self.spec, self.dest_island)
    }
}

impl Display for MappingSpec {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            MappingSpec::Star => f.write_str("*"),
            MappingSpec::Columns(cols) => {
                f.write_str("(")?;
                join(f, cols, ", ")?;
                f.write_str(")")
            }
            MappingSpec::Array { attrs, dims } => {
                f.write_str("<")?;
                join(f, attrs, ", ")?;
                f.write_str(">[")?;
                join(f, dims, ", ")?;
                f.write_str("]")
            }
            MappingSpec::Text { row_col, value_cols } => {
                write!(f, "{{{row_col}: ")?;
                join(f, value_cols, ", ")?;
                f.write_str("}")
            }
        }
    }
}

impl Display for SelectItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        let alias = match self {
            SelectItem::Wildcard => return f.write_str("*"),
            SelectItem::Expr { expr, alias } => {
                write!(f, "{expr}")?;
                alias
            }
            SelectItem::Agg { func, arg, alias } => {
                match arg {
                    Some(a) => write!(f, "{func}({a})")?,
                    None => write!(f, "{func}(*)")?,
                }
                alias
            }
        };
        if let Some(a) = alias {
            write!(f, " AS {a}")?;
        }
        Ok(())
    }
}

impl Display for TableRef {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)?;
        if let Some(a) = &self.alias {
            write!(f, " AS {a}")?;
        }
        Ok(())
    }
}

impl Display for OrderItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.column, if self.descending { "DESC" } else { "ASC" })
    }
}

impl Display for Select {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        join(f, &self.items, ", ")?;
        write!(f, " FROM {}", self.from)?;
        for j in &self.joins {
            write!(f, " JOIN {} ON {} = {}", j.table, j.left, j.right)?;
        }
        if let Some(w) = &self.filter {
            write!(f, " WHERE {w}")?;
        }
        if !self.group_by.is_empty() {
            f.write_str(" GROUP BY ")?;
            join(f, &self.group_by, ", ")?;
        }
        if !self.order_by.is_empty() {
            f.write_str(" ORDER BY ")?;
            join(f, &self.order_by, ", ")?;
        }
        if let Some(n) = self.limit {
            write!(f, " LIMIT {n}")?;
        }
        Ok(())
    }
}

impl Display for Afl {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Afl::Scan(s) => write!(f, "scan({s})"),
            Afl::Filter(i, e) => write!(f, "filter({i}, {e})"),
            Afl::Subarray(i, b) => {
                write!(f, "subarray({i}, ")?;
                join(f, b, ", ")?;
                f.write_str(")")
            }
            Afl::Project(i, attrs) => {
                write!(f, "project({i}, ")?;
                join(f, attrs, ", ")?;
                f.write_str(")")
            }
            Afl::Apply(i, n, e) => write!(f, "apply({i}, {n}, {e})"),
            Afl::Aggregate {
                input,
                func,
                attr,
                dims,
            } => {
                write!(f, "aggregate({input}, {func}({})", attr.as_deref().unwrap_or("*"))?;
                for d in dims {
                    write!(f, ", {d}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl Display for TextScan {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("{\"op\": \"scan\", \"table\": ")?;
        match &self.table {
            Source::Named(n) => f.write_str(&json_str(n))?,
            Source::Cast(c) => write!(f, "{c}")?,
        }
        if let Some(r) = &self.range {
            f.write_str(", \"range\": {")?;
            let parts: Vec<String> = [("start", &r.start), ("end", &r.end)]
                .into_iter()
                .filter_map(|(k, v)| v.as_ref().map(|v| format!("\"{k}\": {}", json_str(v))))
                .collect();
            f.write_str(&parts.join(", "))?;
            f.write_str("}")?;
        }
        if let Some(p) = &self.pattern {
            write!(f, ", \"pattern\": {}", json_str(p))?;
        }
        if self.latest_only {
            f.write_str(", \"latest_only\": true")?;
        }
        f.write_str("}")
    }
}
