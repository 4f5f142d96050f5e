//! The expression grammar shared by the relational and array islands:
//! literals, column references, comparisons, boolean connectives and
//! arithmetic. Expressions are type-checked against an input scope before
//! evaluation, so evaluation itself never fails.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::value::{render_float, Value, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub name: String,
}

impl ColumnRef {
    pub fn new(name: impl Into<String>) -> Self {
        ColumnRef {
            qualifier: None,
            name: name.into(),
        }
    }

    pub fn qualified(qualifier: impl Into<String>, name: impl Into<String>) -> Self {
        ColumnRef {
            qualifier: Some(qualifier.into()),
            name: name.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{q}.{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Literal(Value),
    Column(ColumnRef),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
}

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Column(ColumnRef::new(name))
    }

    pub fn lit(v: impl Into<Value>) -> Expr {
        Expr::Literal(v.into())
    }

    pub fn cmp(op: CmpOp, l: Expr, r: Expr) -> Expr {
        Expr::Compare(op, Box::new(l), Box::new(r))
    }

    pub fn and(l: Expr, r: Expr) -> Expr {
        Expr::And(Box::new(l), Box::new(r))
    }

    pub fn arith(op: ArithOp, l: Expr, r: Expr) -> Expr {
        Expr::Arith(op, Box::new(l), Box::new(r))
    }

    pub fn columns(&self) -> Vec<&ColumnRef> {
        let mut out = Vec::new();
        self.visit_columns(&mut out);
        out
    }

    fn visit_columns<'a>(&'a self, out: &mut Vec<&'a ColumnRef>) {
        match self {
            Expr::Literal(_) => {}
            Expr::Column(c) => out.push(c),
            Expr::Not(e) | Expr::Neg(e) => e.visit_columns(out),
            Expr::Compare(_, l, r) | Expr::And(l, r) | Expr::Or(l, r) | Expr::Arith(_, l, r) => {
                l.visit_columns(out);
                r.visit_columns(out);
            }
        }
    }
}

pub(crate) fn write_literal(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Null => f.write_str("NULL"),
        Value::Int(i) => write!(f, "{i}"),
        Value::Float(x) => f.write_str(&render_float(*x)),
        Value::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
    }
}

/// Fully parenthesized rendering; parsing it back yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(v) => write_literal(f, v),
            Expr::Column(c) => write!(f, "{c}"),
            Expr::Compare(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::And(l, r) => write!(f, "({l} AND {r})"),
            Expr::Or(l, r) => write!(f, "({l} OR {r})"),
            Expr::Not(e) => write!(f, "(NOT {e})"),
            Expr::Arith(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Neg(e) => write!(f, "-({e})"),
        }
    }
}

/// One column visible to an expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopeColumn {
    pub qualifier: Option<String>,
    pub name: String,
    pub kind: ValueKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scope {
    pub columns: Vec<ScopeColumn>,
}

impl Scope {
    pub fn new(columns: Vec<ScopeColumn>) -> Scope {
        Scope { columns }
    }

    pub fn unqualified(fields: &[crate::value::Field]) -> Scope {
        Scope {
            columns: fields
                .iter()
                .map(|f| ScopeColumn {
                    qualifier: None,
                    name: f.name.clone(),
                    kind: f.kind,
                })
                .collect(),
        }
    }

    pub fn with_qualifier(fields: &[crate::value::Field], qualifier: &str) -> Scope {
        let mut s = Scope::unqualified(fields);
        for c in &mut s.columns {
            c.qualifier = Some(qualifier.to_string());
        }
        s
    }

    pub fn concat(&self, other: &Scope) -> Scope {
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        Scope { columns }
    }

    pub fn resolve(&self, c: &ColumnRef) -> Result<usize> {
        let mut hits = self.columns.iter().enumerate().filter(|(_, sc)| {
            sc.name.eq_ignore_ascii_case(&c.name)
                && match (&c.qualifier, &sc.qualifier) {
                    (Some(q), Some(sq)) => q.eq_ignore_ascii_case(sq),
                    (Some(_), None) => false,
                    (None, _) => true,
                }
        });
        match (hits.next(), hits.next()) {
            (Some((i, _)), None) => Ok(i),
            (None, _) => Err(Error::Plan(format!("unknown column {c}"))),
            (Some(_), Some(_)) => Err(Error::Plan(format!("ambiguous column {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExprType {
    Bool,
    /// `None` for an untyped NULL literal.
    Value(Option<ValueKind>),
}

/// An expression with column references resolved to positions.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundExpr {
    Literal(Value),
    Column(usize),
    Compare(CmpOp, Box<BoundExpr>, Box<BoundExpr>),
    And(Box<BoundExpr>, Box<BoundExpr>),
    Or(Box<BoundExpr>, Box<BoundExpr>),
    Not(Box<BoundExpr>),
    Arith(ArithOp, Box<BoundExpr>, Box<BoundExpr>),
    Neg(Box<BoundExpr>),
}

pub fn bind(expr: &Expr, scope: &Scope) -> Result<(BoundExpr, ExprType)> {
    Ok(match expr {
        Expr::Literal(v) => (BoundExpr::Literal(v.clone()), ExprType::Value(v.kind())),
        Expr::Column(c) => {
            let i = scope.resolve(c)?;
            (BoundExpr::Column(i), ExprType::Value(Some(scope.columns[i].kind)))
        }
        Expr::Compare(op, l, r) => {
            let (bl, tl) = bind(l, scope)?;
            let (br, tr) = bind(r, scope)?;
            let comparable = match (tl, tr) {
                (ExprType::Value(None), ExprType::Value(_)) | (ExprType::Value(_), ExprType::Value(None)) => true,
                (ExprType::Value(Some(a)), ExprType::Value(Some(b))) => {
                    (a.is_numeric() && b.is_numeric()) || a == b
                }
                _ => false,
            };
            if !comparable {
                return Err(Error::Plan(format!("cannot compare {l} with {r}")));
            }
            (BoundExpr::Compare(*op, Box::new(bl), Box::new(br)), ExprType::Bool)
        }
        Expr::And(l, r) | Expr::Or(l, r) => {
            let bl = bind_predicate(l, scope)?;
            let br = bind_predicate(r, scope)?;
            let e = if matches!(expr, Expr::And(..)) {
                BoundExpr::And(Box::new(bl), Box::new(br))
            } else {
                BoundExpr::Or(Box::new(bl), Box::new(br))
            };
            (e, ExprType::Bool)
        }
        Expr::Not(e) => (BoundExpr::Not(Box::new(bind_predicate(e, scope)?)), ExprType::Bool),
        Expr::Arith(op, l, r) => {
            let (bl, tl) = bind(l, scope)?;
            let (br, tr) = bind(r, scope)?;
            let numeric = |t: ExprType, e: &Expr| match t {
                ExprType::Value(None) => Ok(None),
                ExprType::Value(Some(k)) if k.is_numeric() => Ok(Some(k)),
                _ => Err(Error::Plan(format!("arithmetic on non-numeric operand {e}"))),
            };
            let kind = match (numeric(tl, l)?, numeric(tr, r)?) {
                (Some(ValueKind::Int64), Some(ValueKind::Int64)) => Some(ValueKind::Int64),
                (None, None) => None,
                (Some(ValueKind::Float64), _) | (_, Some(ValueKind::Float64)) => Some(ValueKind::Float64),
                (Some(k), None) | (None, Some(k)) => Some(k),
                _ => unreachable!(),
            };
            (BoundExpr::Arith(*op, Box::new(bl), Box::new(br)), ExprType::Value(kind))
        }
        Expr::Neg(e) => {
            let (b, t) = bind(e, scope)?;
            match t {
                ExprType::Value(None) => {}
                ExprType::Value(Some(k)) if k.is_numeric() => {}
                _ => return Err(Error::Plan(format!("cannot negate {e}"))),
            }
            (BoundExpr::Neg(Box::new(b)), t)
        }
    })
}

/// Binds an expression that must be boolean-valued.
pub fn bind_predicate(expr: &Expr, scope: &Scope) -> Result<BoundExpr> {
    match bind(expr, scope)? {
        (b, ExprType::Bool) => Ok(b),
        _ => Err(Error::Plan(format!("expected a predicate, found {expr}"))),
    }
}

/// Binds an expression that must produce a value of known kind.
pub fn bind_value(expr: &Expr, scope: &Scope) -> Result<(BoundExpr, ValueKind)> {
    match bind(expr, scope)? {
        (b, ExprType::Value(Some(k))) => Ok((b, k)),
        (_, ExprType::Value(None)) => Err(Error::Plan(format!("cannot infer a type for {expr}"))),
        (_, ExprType::Bool) => Err(Error::Plan(format!("boolean expression {expr} used as a value"))),
    }
}

impl BoundExpr {
    /// Boolean evaluation; comparisons involving Null are false.
    pub fn test(&self, row: &[Value]) -> bool {
        match self {
            BoundExpr::Compare(op, l, r) => {
                let (a, b) = (l.eval(row), r.eval(row));
                a.predicate_cmp(&b).is_some_and(|o| op.holds(o))
            }
            BoundExpr::And(l, r) => l.test(row) && r.test(row),
            BoundExpr::Or(l, r) => l.test(row) || r.test(row),
            BoundExpr::Not(e) => !e.test(row),
            _ => false,
        }
    }

    /// Value evaluation. Division by zero and integer overflow yield Null.
    pub fn eval(&self, row: &[Value]) -> Value {
        match self {
            BoundExpr::Literal(v) => v.clone(),
            BoundExpr::Column(i) => row[*i].clone(),
            BoundExpr::Arith(op, l, r) => arith(*op, &l.eval(row), &r.eval(row)),
            BoundExpr::Neg(e) => match e.eval(row) {
                Value::Int(i) => i.checked_neg().map_or(Value::Null, Value::Int),
                Value::Float(f) => Value::Float(-f),
                _ => Value::Null,
            },
            _ => Value::Null,
        }
    }
}

fn arith(op: ArithOp, a: &Value, b: &Value) -> Value {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => {
            let r = match op {
                ArithOp::Add => x.checked_add(*y),
                ArithOp::Sub => x.checked_sub(*y),
                ArithOp::Mul => x.checked_mul(*y),
                ArithOp::Div => x.checked_div(*y),
            };
            r.map_or(Value::Null, Value::Int)
        }
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => {
            let x = as_f64(a);
            let y = as_f64(b);
            match op {
                ArithOp::Add => Value::Float(x + y),
                ArithOp::Sub => Value::Float(x - y),
                ArithOp::Mul => Value::Float(x * y),
                ArithOp::Div if y == 0.0 => Value::Null,
                ArithOp::Div => Value::Float(x / y),
            }
        }
        _ => Value::Null,
    }
}

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(f) => *f,
        _ => f64::NAN,
    }
}
