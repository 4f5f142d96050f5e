use std::fmt;
use std::str::FromStr;

use crate::agg::AggFunc;
use crate::expr::{ColumnRef, Expr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Island {
    Relational,
    Array,
    Text,
}

impl Island {
    pub const ALL: [Island; 3] = [Island::Relational, Island::Array, Island::Text];

    pub fn name(self) -> &'static str {
        match self {
            Island::Relational => "relational",
            Island::Array => "array",
            Island::Text => "text",
        }
    }

    /// Scope keyword that opens a query on this island.
    pub fn scope_keyword(self) -> &'static str {
        match self {
            Island::Relational => "bdrel",
            Island::Array => "bdarray",
            Island::Text => "bdtext",
        }
    }

    pub fn from_scope_keyword(kw: &str) -> Option<Island> {
        Island::ALL.into_iter().find(|i| i.scope_keyword().eq_ignore_ascii_case(kw))
    }
}

impl fmt::Display for Island {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Island {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Island::ALL
            .into_iter()
            .find(|i| i.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown island {s:?}"))
    }
}

/// A query scoped to one island, possibly containing casts.
#[derive(Debug, Clone, PartialEq)]
pub enum ScopedQuery {
    Rel(Select),
    Arr(Afl),
    Text(TextScan),
}

impl ScopedQuery {
    pub fn island(&self) -> Island {
        match self {
            ScopedQuery::Rel(_) => Island::Relational,
            ScopedQuery::Arr(_) => Island::Array,
            ScopedQuery::Text(_) => Island::Text,
        }
    }

    /// Every object or cast read by this query (not descending into casts).
    pub fn sources(&self) -> Vec<&Source> {
        match self {
            ScopedQuery::Rel(s) => std::iter::once(&s.from.source)
                .chain(s.joins.iter().map(|j| &j.table.source))
                .collect(),
            ScopedQuery::Arr(a) => vec![a.source()],
            ScopedQuery::Text(t) => vec![&t.table],
        }
    }

    /// Replaces sources in place. `f` receives each source and returns the
    /// replacement object name, if any. In SQL the original name (or cast
    /// destination) stays visible as the table qualifier.
    pub fn substitute(&mut self, f: &mut dyn FnMut(&Source) -> Option<String>) {
        match self {
            ScopedQuery::Rel(s) => {
                for t in std::iter::once(&mut s.from).chain(s.joins.iter_mut().map(|j| &mut j.table)) {
                    if let Some(new) = f(&t.source) {
                        if t.alias.is_none() {
                            t.alias = Some(t.source.visible_name().to_string());
                        }
                        t.source = Source::Named(new);
                    }
                }
            }
            ScopedQuery::Arr(a) => {
                let src = a.source_mut();
                if let Some(new) = f(src) {
                    *src = Source::Named(new);
                }
            }
            ScopedQuery::Text(t) => {
                if let Some(new) = f(&t.table) {
                    t.table = Source::Named(new);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Named(String),
    Cast(Box<Cast>),
}

impl Source {
    /// Name under which the source is referenced inside its query.
    pub fn visible_name(&self) -> &str {
        match self {
            Source::Named(n) => n,
            Source::Cast(c) => &c.dest_name,
        }
    }
}

/// `bdcast(inner, dest_name, dest_spec, dest_island)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cast {
    pub inner: ScopedQuery,
    pub dest_name: String,
    pub spec: MappingSpec,
    pub dest_island: Island,
}

/// Target shape of a cast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MappingSpec {
    /// Default mapping derived from the source schema.
    Star,
    /// Relational: output column names, one per source column.
    Columns(Vec<String>),
    /// Array: `<attrs>[dims]`, naming source columns.
    Array { attrs: Vec<String>, dims: Vec<String> },
    /// Text: `{row_col: value_cols}`, naming source columns.
    Text { row_col: String, value_cols: Vec<String> },
}

impl MappingSpec {
    pub fn fits(&self, island: Island) -> bool {
        matches!(
            (self, island),
            (MappingSpec::Star, _)
                | (MappingSpec::Columns(_), Island::Relational)
                | (MappingSpec::Array { .. }, Island::Array)
                | (MappingSpec::Text { .. }, Island::Text)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub items: Vec<SelectItem>,
    pub from: TableRef,
    pub joins: Vec<Join>,
    pub filter: Option<Expr>,
    pub group_by: Vec<ColumnRef>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Wildcard,
    Expr { expr: Expr, alias: Option<String> },
    /// `arg` is `None` for `count(*)`.
    Agg { func: AggFunc, arg: Option<Expr>, alias: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRef {
    pub source: Source,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Join {
    pub table: TableRef,
    pub left: ColumnRef,
    pub right: ColumnRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderItem {
    pub column: ColumnRef,
    pub descending: bool,
}

/// Array functional language operator tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Afl {
    Scan(Source),
    Filter(Box<Afl>, Expr),
    /// Flat list lo1, hi1, lo2, hi2, ...
    Subarray(Box<Afl>, Vec<i64>),
    Project(Box<Afl>, Vec<String>),
    Apply(Box<Afl>, String, Expr),
    Aggregate {
        input: Box<Afl>,
        func: AggFunc,
        attr: Option<String>,
        dims: Vec<String>,
    },
}

impl Afl {
    pub fn source(&self) -> &Source {
        match self {
            Afl::Scan(s) => s,
            Afl::Filter(i, _)
            | Afl::Subarray(i, _)
            | Afl::Project(i, _)
            | Afl::Apply(i, _, _)
            | Afl::Aggregate { input: i, .. } => i.source(),
        }
    }

    fn source_mut(&mut self) -> &mut Source {
        match self {
            Afl::Scan(s) => s,
            Afl::Filter(i, _)
            | Afl::Subarray(i, _)
            | Afl::Project(i, _)
            | Afl::Apply(i, _, _)
            | Afl::Aggregate { input: i, .. } => i.source_mut(),
        }
    }
}

/// JSON scan request on a key-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct TextScan {
    pub table: Source,
    pub range: Option<TextRange>,
    pub pattern: Option<String>,
    pub latest_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextRange {
    pub start: Option<String>,
    pub end: Option<String>,
}
