//! Independent brute-force evaluators and random case generators shared by
//! the integration tests and the acceptance runner. Nothing here calls into
//! the engines' own evaluation code: expressions, joins, grouping, array
//! boxes and key ranges are re-derived from first principles.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::HashMap;

use polygate_core::agg::AggFunc;
use polygate_core::array::{ArrPlan, ArrayEngine, Coord, Dim};
use polygate_core::expr::{ArithOp, CmpOp, ColumnRef, Expr};
use polygate_core::rel::{AggCall, ProjectItem, RelEngine, RelPlan, SortKey};
use polygate_core::text::{KvEntry, ScanSpec, TextEngine};
use polygate_core::{Field, ResultSet, Row, Schema, Value, ValueKind};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng8 = ChaCha8Rng;

pub fn rng(stream: u64, case: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(stream.wrapping_mul(1_000_003) ^ case)
}

// ---------------------------------------------------------------- values

/// Predicate comparison: numbers across kinds, text byte-wise, Null never.
pub fn o_cmp(a: &Value, b: &Value) -> Option<Ordering> {
    fn num(v: &Value) -> Option<(i128, f64, bool)> {
        match v {
            Value::Int(i) => Some((*i as i128, 0.0, true)),
            Value::Float(f) => Some((0, *f, false)),
            _ => None,
        }
    }
    match (a, b) {
        (Value::Text(x), Value::Text(y)) => Some(x.as_bytes().cmp(y.as_bytes())),
        _ => {
            let (x, y) = (num(a)?, num(b)?);
            match (x.2, y.2) {
                (true, true) => Some(x.0.cmp(&y.0)),
                (false, false) => x.1.partial_cmp(&y.1),
                (true, false) => int_vs_float(x.0, y.1),
                (false, true) => int_vs_float(y.0, x.1).map(Ordering::reverse),
            }
        }
    }
}

/// Exact comparison of an integer with a float via floor and fraction.
fn int_vs_float(i: i128, f: f64) -> Option<Ordering> {
    if f.is_nan() {
        return None;
    }
    if f.is_infinite() {
        return Some(if f > 0.0 { Ordering::Less } else { Ordering::Greater });
    }
    let fl = f.floor();
    if fl.abs() > 1e30 {
        return Some(if f > 0.0 { Ordering::Less } else { Ordering::Greater });
    }
    let fl_i = fl as i128;
    match i.cmp(&fl_i) {
        Ordering::Equal if f > fl => Some(Ordering::Less),
        o => Some(o),
    }
}

fn rank(v: &Value) -> u8 {
    match v {
        Value::Null => 0,
        Value::Int(_) => 1,
        Value::Float(_) => 2,
        Value::Text(_) => 3,
    }
}

/// Total order used for sorting and min/max.
pub fn o_total(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Float(x), Value::Float(y)) => x.total_cmp(y),
        (Value::Text(x), Value::Text(y)) => x.as_bytes().cmp(y.as_bytes()),
        _ => rank(a).cmp(&rank(b)),
    }
}

/// Bit-level identity, the grouping equivalence.
pub fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Float(x), Value::Float(y)) => x.to_bits() == y.to_bits(),
        (Value::Text(x), Value::Text(y)) => x == y,
        _ => false,
    }
}

pub fn same_rows(a: &[Row], b: &[Row]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| same(p, q)))
}

fn o_arith(op: ArithOp, a: &Value, b: &Value) -> Value {
    let int = |r: Option<i64>| r.map_or(Value::Null, Value::Int);
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => match op {
            ArithOp::Add => int(x.checked_add(*y)),
            ArithOp::Sub => int(x.checked_sub(*y)),
            ArithOp::Mul => int(x.checked_mul(*y)),
            ArithOp::Div if *y == 0 || (*x == i64::MIN && *y == -1) => Value::Null,
            ArithOp::Div => Value::Int(x / y),
        },
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => {
            let f = |v: &Value| match v {
                Value::Int(i) => *i as f64,
                Value::Float(x) => *x,
                _ => unreachable!(),
            };
            let (x, y) = (f(a), f(b));
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

/// Named columns visible to an expression: (qualifier, name).
pub type Env = [(Option<String>, String)];

fn lookup(env: &Env, c: &ColumnRef) -> usize {
    let hits: Vec<usize> = env
        .iter()
        .enumerate()
        .filter(|(_, (q, n))| {
            n.eq_ignore_ascii_case(&c.name)
                && match &c.qualifier {
                    None => true,
                    Some(cq) => q.as_deref().is_some_and(|q| q.eq_ignore_ascii_case(cq)),
                }
        })
        .map(|(i, _)| i)
        .collect();
    assert_eq!(hits.len(), 1, "oracle could not resolve {c} in {env:?}");
    hits[0]
}

pub fn o_eval(e: &Expr, env: &Env, row: &[Value]) -> Value {
    match e {
        Expr::Literal(v) => v.clone(),
        Expr::Column(c) => row[lookup(env, c)].clone(),
        Expr::Arith(op, l, r) => o_arith(*op, &o_eval(l, env, row), &o_eval(r, env, row)),
        Expr::Neg(x) => match o_eval(x, env, row) {
            Value::Int(i) if i == i64::MIN => Value::Null,
            Value::Int(i) => Value::Int(-i),
            Value::Float(f) => Value::Float(-f),
            _ => Value::Null,
        },
        _ => panic!("boolean expression in value position: {e}"),
    }
}

pub fn o_test(e: &Expr, env: &Env, row: &[Value]) -> bool {
    match e {
        Expr::Compare(op, l, r) => {
            let ord = o_cmp(&o_eval(l, env, row), &o_eval(r, env, row));
            match (op, ord) {
                (_, None) => false,
                (CmpOp::Eq, Some(o)) => o == Ordering::Equal,
                (CmpOp::Ne, Some(o)) => o != Ordering::Equal,
                (CmpOp::Lt, Some(o)) => o == Ordering::Less,
                (CmpOp::Le, Some(o)) => o != Ordering::Greater,
                (CmpOp::Gt, Some(o)) => o == Ordering::Greater,
                (CmpOp::Ge, Some(o)) => o != Ordering::Less,
            }
        }
        Expr::And(l, r) => o_test(l, env, row) && o_test(r, env, row),
        Expr::Or(l, r) => o_test(l, env, row) || o_test(r, env, row),
        Expr::Not(x) => !o_test(x, env, row),
        _ => false,
    }
}

/// One aggregate over the listed inputs (`None` = count(*) row marker).
pub fn o_agg(func: AggFunc, inputs: &[Option<Value>]) -> Value {
    if func == AggFunc::Count {
        return Value::Int(inputs.iter().filter(|v| !matches!(v, Some(Value::Null))).count() as i64);
    }
    let vals: Vec<&Value> = inputs.iter().flatten().filter(|v| !v.is_null()).collect();
    if vals.is_empty() {
        return Value::Null;
    }
    let floats = vals.iter().any(|v| matches!(v, Value::Float(_)));
    let isum: i128 = vals.iter().filter_map(|v| v.as_i64()).map(i128::from).sum();
    let fsum = || {
        let mut s = 0.0;
        for v in &vals {
            if let Value::Float(f) = v {
                s += f;
            }
        }
        s
    };
    match func {
        AggFunc::Sum if floats => Value::Float(fsum()),
        AggFunc::Sum => i64::try_from(isum).map_or(Value::Null, Value::Int),
        AggFunc::Avg if floats => Value::Float(fsum() / vals.len() as f64),
        AggFunc::Avg => Value::Float(isum as f64 / vals.len() as f64),
        AggFunc::Min => (*vals.iter().min_by(|a, b| o_total(a, b)).unwrap()).clone(),
        AggFunc::Max => {
            // First of the maxima, matching a strict-greater replacement.
            let mut best = vals[0];
            for v in &vals[1..] {
                if o_total(v, best) == Ordering::Greater {
                    best = v;
                }
            }
            best.clone()
        }
        AggFunc::Count => unreachable!(),
    }
}

// ---------------------------------------------------------------- relational

pub struct Named {
    pub env: Vec<(Option<String>, String)>,
    pub rows: Vec<Row>,
}

pub type Tables = HashMap<String, (Schema, Vec<Row>)>;

pub fn rel_oracle(plan: &RelPlan, tables: &Tables) -> Named {
    match plan {
        RelPlan::Scan { table, alias } => {
            let (schema, rows) = &tables[table];
            let q = alias.clone().unwrap_or_else(|| table.clone());
            Named {
                env: schema.names().map(|n| (Some(q.clone()), n.to_string())).collect(),
                rows: rows.clone(),
            }
        }
        RelPlan::Filter { input, predicate } => {
            let n = rel_oracle(input, tables);
            let rows = n.rows.iter().filter(|r| o_test(predicate, &n.env, r)).cloned().collect();
            Named { env: n.env, rows }
        }
        RelPlan::Project { input, items } => {
            let n = rel_oracle(input, tables);
            let rows = n
                .rows
                .iter()
                .map(|r| items.iter().map(|i| o_eval(&i.expr, &n.env, r)).collect())
                .collect();
            Named {
                env: items.iter().map(|i| (None, i.name.clone())).collect(),
                rows,
            }
        }
        RelPlan::Join { left, right, on } => {
            let (l, r) = (rel_oracle(left, tables), rel_oracle(right, tables));
            let keys: Vec<(usize, usize)> = on.iter().map(|(a, b)| (lookup(&l.env, a), lookup(&r.env, b))).collect();
            let mut rows = Vec::new();
            for lr in &l.rows {
                for rr in &r.rows {
                    if keys.iter().all(|(a, b)| o_cmp(&lr[*a], &rr[*b]) == Some(Ordering::Equal)) {
                        rows.push(lr.iter().chain(rr).cloned().collect());
                    }
                }
            }
            let mut env = l.env;
            env.extend(r.env);
            Named { env, rows }
        }
        RelPlan::Aggregate { input, group_by, aggs } => {
            let n = rel_oracle(input, tables);
            let key_idx: Vec<usize> = group_by.iter().map(|c| lookup(&n.env, c)).collect();
            let mut groups: Vec<(Row, Vec<usize>)> = Vec::new();
            if key_idx.is_empty() {
                groups.push((vec![], vec![]));
            }
            for (i, r) in n.rows.iter().enumerate() {
                let key: Row = key_idx.iter().map(|k| r[*k].clone()).collect();
                match groups.iter_mut().find(|(k, _)| k.iter().zip(&key).all(|(a, b)| same(a, b))) {
                    Some(g) => g.1.push(i),
                    None => groups.push((key, vec![i])),
                }
            }
            let rows = groups
                .into_iter()
                .map(|(mut key, members)| {
                    for call in aggs {
                        let inputs: Vec<Option<Value>> = members
                            .iter()
                            .map(|m| call.arg.as_ref().map(|e| o_eval(e, &n.env, &n.rows[*m])))
                            .collect();
                        key.push(o_agg(call.func, &inputs));
                    }
                    key
                })
                .collect();
            let mut env: Vec<_> = key_idx.iter().map(|k| n.env[*k].clone()).collect();
            env.extend(aggs.iter().map(|a| (None, a.name.clone())));
            Named { env, rows }
        }
        RelPlan::Sort { input, keys } => {
            let mut n = rel_oracle(input, tables);
            let idx: Vec<(usize, bool)> = keys.iter().map(|k| (lookup(&n.env, &k.column), k.descending)).collect();
            // Insertion sort: stable by construction.
            let mut sorted: Vec<Row> = Vec::with_capacity(n.rows.len());
            for r in n.rows.drain(..) {
                let before = |x: &Row| {
                    for (i, desc) in &idx {
                        let o = o_total(&r[*i], &x[*i]);
                        let o = if *desc { o.reverse() } else { o };
                        if o != Ordering::Equal {
                            return o == Ordering::Less;
                        }
                    }
                    false
                };
                let pos = sorted.iter().position(before).unwrap_or(sorted.len());
                sorted.insert(pos, r);
            }
            Named { env: n.env, rows: sorted }
        }
        RelPlan::Limit { input, n } => {
            let mut x = rel_oracle(input, tables);
            x.rows.truncate(*n as usize);
            x
        }
    }
}

fn pick<'a, T>(r: &mut Rng8, xs: &'a [T]) -> &'a T {
    xs.choose(r).expect("non-empty choice")
}

pub fn rand_value(r: &mut Rng8, kind: ValueKind) -> Value {
    if r.random_bool(0.15) {
        return Value::Null;
    }
    match kind {
        ValueKind::Int64 => {
            if r.random_bool(0.05) {
                Value::Int(*pick(r, &[i64::MAX, i64::MIN, i64::MAX - 1]))
            } else {
                Value::Int(r.random_range(-3..=3))
            }
        }
        ValueKind::Float64 => Value::Float(*pick(r, &[-1.5, 0.0, -0.0, 0.5, 1.0, 2.25, 3.0, 1e300])),
        ValueKind::Text => Value::Text(pick(r, &["", "a", "b", "ab", "B", "a,b", "q\"x"]).to_string()),
    }
}

fn rand_literal(r: &mut Rng8, kind: ValueKind) -> Expr {
    loop {
        let v = rand_value(r, kind);
        if !v.is_null() {
            return Expr::Literal(v);
        }
    }
}

pub type TypedCols = [(ColumnRef, ValueKind)];

fn cols_of(cols: &TypedCols, pred: impl Fn(ValueKind) -> bool) -> Vec<&(ColumnRef, ValueKind)> {
    cols.iter().filter(|(_, k)| pred(*k)).collect()
}

/// A numeric-valued expression over the numeric columns.
pub fn rand_num_expr(r: &mut Rng8, cols: &TypedCols, depth: u32) -> (Expr, ValueKind) {
    let nums = cols_of(cols, ValueKind::is_numeric);
    if depth == 0 || r.random_bool(0.5) {
        if !nums.is_empty() && r.random_bool(0.7) {
            let (c, k) = *pick(r, &nums);
            return (Expr::Column(c.clone()), *k);
        }
        let k = *pick(r, &[ValueKind::Int64, ValueKind::Float64]);
        return (rand_literal(r, k), k);
    }
    if r.random_bool(0.15) {
        let (e, k) = rand_num_expr(r, cols, depth - 1);
        return (Expr::Neg(Box::new(e)), k);
    }
    let op = *pick(r, &[ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div]);
    let (a, ka) = rand_num_expr(r, cols, depth - 1);
    let (b, kb) = rand_num_expr(r, cols, depth - 1);
    let k = if ka == ValueKind::Int64 && kb == ValueKind::Int64 {
        ValueKind::Int64
    } else {
        ValueKind::Float64
    };
    (Expr::arith(op, a, b), k)
}

pub fn rand_pred(r: &mut Rng8, cols: &TypedCols, depth: u32) -> Expr {
    if depth > 0 && r.random_bool(0.4) {
        let a = rand_pred(r, cols, depth - 1);
        return match r.random_range(0..3) {
            0 => Expr::and(a, rand_pred(r, cols, depth - 1)),
            1 => Expr::Or(Box::new(a), Box::new(rand_pred(r, cols, depth - 1))),
            _ => Expr::Not(Box::new(a)),
        };
    }
    let op = *pick(r, &[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge]);
    let texts = cols_of(cols, |k| k == ValueKind::Text);
    if !texts.is_empty() && r.random_bool(0.3) {
        let (c, _) = *pick(r, &texts);
        let rhs = match texts.len() > 1 && r.random_bool(0.3) {
            true => Expr::Column(pick(r, &texts).0.clone()),
            false => rand_literal(r, ValueKind::Text),
        };
        return Expr::cmp(op, Expr::Column(c.clone()), rhs);
    }
    let (a, _) = rand_num_expr(r, cols, 1);
    let (b, _) = rand_num_expr(r, cols, 1);
    Expr::cmp(op, a, b)
}

fn rand_rows(r: &mut Rng8, schema: &Schema, max: usize) -> Vec<Row> {
    let n = r.random_range(0..=max);
    (0..n)
        .map(|_| schema.fields().iter().map(|f| rand_value(r, f.kind)).collect())
        .collect()
}

fn qualified(q: &str, schema: &Schema) -> Vec<(ColumnRef, ValueKind)> {
    schema.fields().iter().map(|f| (ColumnRef::qualified(q, f.name.clone()), f.kind)).collect()
}

/// One random relational instance: engine output vs the oracle.
pub fn rel_case(case: u64) -> Result<(), String> {
    let r = &mut rng(1, case);
    let t_schema = Schema::parse("a:Int64,b:Float64,c:Text,d:Int64").unwrap();
    let u_schema = Schema::parse("a:Int64,e:Text,f:Float64").unwrap();
    let mut tables = Tables::new();
    tables.insert("t".into(), (t_schema.clone(), rand_rows(r, &t_schema, 12)));
    tables.insert("u".into(), (u_schema.clone(), rand_rows(r, &u_schema, 10)));

    let mut cols = qualified("t", &t_schema);
    let mut plan = RelPlan::scan("t");
    if r.random_bool(0.5) {
        let on = match r.random_range(0..3) {
            0 => (ColumnRef::qualified("t", "a"), ColumnRef::qualified("u", "a")),
            1 => (ColumnRef::qualified("t", "b"), ColumnRef::qualified("u", "f")),
            _ => (ColumnRef::qualified("t", "d"), ColumnRef::qualified("u", "f")),
        };
        plan = RelPlan::Join {
            left: Box::new(plan),
            right: Box::new(RelPlan::scan("u")),
            on: vec![on],
        };
        cols.extend(qualified("u", &u_schema));
    }
    if r.random_bool(0.6) {
        plan = plan.filter(rand_pred(r, &cols, 2));
    }
    // Output columns visible to ORDER BY after the shaping step.
    let out_cols: Vec<ColumnRef>;
    let mut names: Option<Vec<String>> = None;
    match r.random_range(0..3) {
        0 => {
            let n = r.random_range(1..=4);
            let items: Vec<ProjectItem> = (0..n)
                .map(|i| {
                    let expr = if r.random_bool(0.5) {
                        Expr::Column(pick(r, &cols).0.clone())
                    } else {
                        rand_num_expr(r, &cols, 2).0
                    };
                    ProjectItem {
                        expr,
                        name: format!("p{i}"),
                    }
                })
                .collect();
            out_cols = items.iter().map(|i| ColumnRef::new(i.name.clone())).collect();
            names = Some(items.iter().map(|i| i.name.clone()).collect());
            plan = RelPlan::Project {
                input: Box::new(plan),
                items,
            };
        }
        1 => {
            let mut group_by: Vec<ColumnRef> = Vec::new();
            for _ in 0..r.random_range(0..=2) {
                let c = pick(r, &cols).0.clone();
                if !group_by.iter().any(|g| g.name == c.name) {
                    group_by.push(c);
                }
            }
            let n = r.random_range(1..=3);
            let aggs: Vec<AggCall> = (0..n)
                .map(|i| {
                    let func = *pick(r, &[AggFunc::Count, AggFunc::Sum, AggFunc::Avg, AggFunc::Min, AggFunc::Max]);
                    let arg = match func {
                        AggFunc::Count if r.random_bool(0.5) => None,
                        AggFunc::Count | AggFunc::Min | AggFunc::Max => Some(Expr::Column(pick(r, &cols).0.clone())),
                        _ => Some(rand_num_expr(r, &cols, 1).0),
                    };
                    AggCall {
                        func,
                        arg,
                        name: format!("g{i}"),
                    }
                })
                .collect();
            let mut n: Vec<String> = group_by.iter().map(|c| c.name.clone()).collect();
            n.extend(aggs.iter().map(|a| a.name.clone()));
            let mut oc = group_by.clone();
            oc.extend(aggs.iter().map(|a| ColumnRef::new(a.name.clone())));
            out_cols = oc;
            names = Some(n);
            plan = RelPlan::Aggregate {
                input: Box::new(plan),
                group_by,
                aggs,
            };
        }
        _ => out_cols = cols.iter().map(|(c, _)| c.clone()).collect(),
    }
    if r.random_bool(0.5) {
        let keys = (0..r.random_range(1..=2))
            .map(|_| SortKey {
                column: pick(r, &out_cols).clone(),
                descending: r.random_bool(0.5),
            })
            .collect();
        plan = RelPlan::Sort {
            input: Box::new(plan),
            keys,
        };
    }
    if r.random_bool(0.3) {
        plan = plan.limit(r.random_range(0..15));
    }

    let engine = RelEngine::new();
    for (name, (schema, rows)) in &tables {
        engine.create_table(name, schema.clone()).map_err(|e| e.to_string())?;
        engine.insert(name, rows.clone()).map_err(|e| e.to_string())?;
    }
    let got = engine.execute(&plan).map_err(|e| format!("case {case}: {e} for {plan:?}"))?;
    let want = rel_oracle(&plan, &tables);
    if !same_rows(&got.rows, &want.rows) {
        return Err(format!("case {case}: rows differ for {plan:?}\n got {:?}\nwant {:?}", got.rows, want.rows));
    }
    if let Some(names) = names {
        let got_names: Vec<&str> = got.schema.names().collect();
        if got_names != names {
            return Err(format!("case {case}: names {got_names:?} != {names:?}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- array

pub struct ArrState {
    pub dims: Vec<(String, i64, i64)>,
    pub attrs: Vec<String>,
    pub cells: Vec<(Coord, Row)>,
}

/// Every coordinate of an inclusive box in row-major order.
pub fn box_coords(dims: &[(String, i64, i64)]) -> Vec<Coord> {
    let mut out: Vec<Coord> = vec![vec![]];
    for (_, lo, hi) in dims {
        let mut next = Vec::new();
        for prefix in &out {
            for x in *lo..=*hi {
                let mut c = prefix.clone();
                c.push(x);
                next.push(c);
            }
        }
        out = next;
    }
    out
}

fn arr_env(s: &ArrState) -> Vec<(Option<String>, String)> {
    s.dims.iter().map(|d| (None, d.0.clone())).chain(s.attrs.iter().map(|a| (None, a.clone()))).collect()
}

fn flat(c: &[i64], r: &[Value]) -> Row {
    c.iter().map(|x| Value::Int(*x)).chain(r.iter().cloned()).collect()
}

pub fn arr_oracle(plan: &ArrPlan, dims: &[Dim], attrs: &Schema, cells: &HashMap<Coord, Row>) -> ArrState {
    match plan {
        ArrPlan::Scan { .. } => {
            let d: Vec<(String, i64, i64)> = dims.iter().map(|d| (d.name.clone(), d.lo, d.hi)).collect();
            let cells = box_coords(&d)
                .into_iter()
                .filter_map(|c| cells.get(&c).map(|r| (c, r.clone())))
                .collect();
            ArrState {
                dims: d,
                attrs: attrs.names().map(str::to_string).collect(),
                cells,
            }
        }
        ArrPlan::Filter { input, predicate } => {
            let mut s = arr_oracle(input, dims, attrs, cells);
            let env = arr_env(&s);
            s.cells.retain(|(c, r)| o_test(predicate, &env, &flat(c, r)));
            s
        }
        ArrPlan::Subarray { input, bounds } => {
            let mut s = arr_oracle(input, dims, attrs, cells);
            s.cells.retain(|(c, _)| c.iter().zip(bounds).all(|(x, (lo, hi))| lo <= x && x <= hi));
            for (d, (lo, hi)) in s.dims.iter_mut().zip(bounds) {
                d.1 = d.1.max(*lo);
                d.2 = d.2.min(*hi);
            }
            s
        }
        ArrPlan::Project { input, attrs: keep } => {
            let s = arr_oracle(input, dims, attrs, cells);
            let idx: Vec<usize> = keep.iter().map(|k| s.attrs.iter().position(|a| a == k).unwrap()).collect();
            ArrState {
                cells: s
                    .cells
                    .iter()
                    .map(|(c, r)| (c.clone(), idx.iter().map(|i| r[*i].clone()).collect()))
                    .collect(),
                dims: s.dims,
                attrs: keep.clone(),
            }
        }
        ArrPlan::Apply { input, name, expr } => {
            let mut s = arr_oracle(input, dims, attrs, cells);
            let env = arr_env(&s);
            for (c, r) in s.cells.iter_mut() {
                let v = o_eval(expr, &env, &flat(c, r));
                r.push(v);
            }
            s.attrs.push(name.clone());
            s
        }
        ArrPlan::Aggregate {
            input,
            func,
            attr,
            dims: group,
        } => {
            let s = arr_oracle(input, dims, attrs, cells);
            let gi: Vec<usize> = group.iter().map(|g| s.dims.iter().position(|d| &d.0 == g).unwrap()).collect();
            let ai = attr.as_ref().map(|a| s.attrs.iter().position(|x| x == a).unwrap());
            let mut keys: Vec<Coord> = s.cells.iter().map(|(c, _)| gi.iter().map(|i| c[*i]).collect()).collect();
            keys.sort();
            keys.dedup();
            if gi.is_empty() {
                keys = vec![vec![]];
            }
            let out = keys
                .into_iter()
                .map(|k| {
                    let inputs: Vec<Option<Value>> = s
                        .cells
                        .iter()
                        .filter(|(c, _)| gi.iter().map(|i| c[*i]).eq(k.iter().copied()))
                        .map(|(_, r)| ai.map(|i| r[i].clone()))
                        .collect();
                    (k, vec![o_agg(*func, &inputs)])
                })
                .collect();
            let name = match attr {
                Some(a) => format!("{}_{a}", func.name()),
                None => func.name().to_string(),
            };
            ArrState {
                dims: gi.iter().map(|i| s.dims[*i].clone()).collect(),
                attrs: vec![name],
                cells: out,
            }
        }
    }
}

pub fn arr_case(case: u64) -> Result<(), String> {
    let r = &mut rng(2, case);
    let names = ["i", "j"];
    let ndims = r.random_range(1..=2);
    let dims: Vec<Dim> = (0..ndims)
        .map(|d| {
            let lo = r.random_range(-2..=1);
            Dim::new(names[d], lo, lo + r.random_range(0..=4))
        })
        .collect();
    let attrs = Schema::parse("x:Int64,y:Float64,s:Text").unwrap();
    let density = r.random_range(0.0..1.0);
    let d3: Vec<(String, i64, i64)> = dims.iter().map(|d| (d.name.clone(), d.lo, d.hi)).collect();
    let mut cells = HashMap::new();
    let mut listed = Vec::new();
    for c in box_coords(&d3) {
        if r.random_bool(density) {
            let row: Row = attrs.fields().iter().map(|f| rand_value(r, f.kind)).collect();
            cells.insert(c.clone(), row.clone());
            listed.push((c, row));
        }
    }
    // Insertion order must not matter.
    listed.reverse();

    let mut cols: Vec<(ColumnRef, ValueKind)> = dims.iter().map(|d| (ColumnRef::new(d.name.clone()), ValueKind::Int64)).collect();
    let mut attr_names: Vec<(String, ValueKind)> = attrs.fields().iter().map(|f| (f.name.clone(), f.kind)).collect();
    cols.extend(attr_names.iter().map(|(n, k)| (ColumnRef::new(n.clone()), *k)));
    let mut plan = ArrPlan::scan("a");
    if r.random_bool(0.5) {
        let bounds = dims
            .iter()
            .map(|_| {
                let lo = r.random_range(-4..=3);
                (lo, lo + r.random_range(-1..=5))
            })
            .collect();
        plan = plan.subarray(bounds);
    }
    if r.random_bool(0.5) {
        plan = plan.filter(rand_pred(r, &cols, 2));
    }
    if r.random_bool(0.4) {
        let (expr, kind) = rand_num_expr(r, &cols, 2);
        plan = ArrPlan::Apply {
            input: Box::new(plan),
            name: "w".into(),
            expr,
        };
        attr_names.push(("w".into(), kind));
    }
    if r.random_bool(0.4) {
        let mut keep: Vec<(String, ValueKind)> = attr_names.iter().filter(|_| r.random_bool(0.6)).cloned().collect();
        if keep.is_empty() {
            keep.push(attr_names[0].clone());
        }
        if r.random_bool(0.5) {
            keep.reverse();
        }
        plan = ArrPlan::Project {
            input: Box::new(plan),
            attrs: keep.iter().map(|k| k.0.clone()).collect(),
        };
        attr_names = keep;
    }
    if r.random_bool(0.4) {
        let func = *pick(r, &[AggFunc::Count, AggFunc::Sum, AggFunc::Avg, AggFunc::Min, AggFunc::Max]);
        let attr = match func {
            AggFunc::Count if r.random_bool(0.4) => None,
            AggFunc::Sum | AggFunc::Avg => {
                let nums: Vec<&(String, ValueKind)> = attr_names.iter().filter(|a| a.1.is_numeric()).collect();
                if nums.is_empty() {
                    None
                } else {
                    Some(pick(r, &nums).0.clone())
                }
            }
            _ => Some(pick(r, &attr_names).0.clone()),
        };
        let func = if attr.is_none() { AggFunc::Count } else { func };
        let mut group: Vec<String> = dims.iter().filter(|_| r.random_bool(0.5)).map(|d| d.name.clone()).collect();
        if r.random_bool(0.3) {
            group.reverse();
        }
        plan = ArrPlan::Aggregate {
            input: Box::new(plan),
            func,
            attr,
            dims: group,
        };
    }

    let engine = ArrayEngine::new();
    engine.create_array("a", dims.clone(), attrs.clone()).map_err(|e| e.to_string())?;
    engine.put_cells("a", listed).map_err(|e| e.to_string())?;
    let got = engine.execute(&plan).map_err(|e| format!("case {case}: {e} for {plan:?}"))?;
    let want = arr_oracle(&plan, &dims, &attrs, &cells);
    let want_rows: Vec<Row> = want.cells.iter().map(|(c, r)| flat(c, r)).collect();
    if !same_rows(&got.rows, &want_rows) {
        return Err(format!("case {case}: rows differ for {plan:?}\n got {:?}\nwant {:?}", got.rows, want_rows));
    }
    let want_names: Vec<String> = want.dims.iter().map(|d| d.0.clone()).chain(want.attrs.iter().cloned()).collect();
    let got_names: Vec<String> = got.schema.names().map(str::to_string).collect();
    if got_names != want_names {
        return Err(format!("case {case}: names {got_names:?} != {want_names:?}"));
    }
    Ok(())
}

// ---------------------------------------------------------------- text

/// Entries after last-write-wins on the full key, in key order (row, colfam,
/// colqual ascending, timestamp descending), then range, pattern and
/// latest-only in that order.
pub fn text_oracle(puts: &[KvEntry], spec: &ScanSpec) -> Vec<KvEntry> {
    let mut live: Vec<KvEntry> = Vec::new();
    for e in puts {
        match live
            .iter_mut()
            .find(|x| x.row == e.row && x.colfam == e.colfam && x.colqual == e.colqual && x.timestamp == e.timestamp)
        {
            Some(x) => x.value = e.value.clone(),
            None => live.push(e.clone()),
        }
    }
    live.sort_by(|a, b| {
        a.row
            .as_bytes()
            .cmp(b.row.as_bytes())
            .then(a.colfam.as_bytes().cmp(b.colfam.as_bytes()))
            .then(a.colqual.as_bytes().cmp(b.colqual.as_bytes()))
            .then(b.timestamp.cmp(&a.timestamp))
    });
    let in_range = |e: &KvEntry| {
        spec.start.as_ref().is_none_or(|s| e.row.as_bytes() >= s.as_bytes())
            && spec.end.as_ref().is_none_or(|x| e.row.as_bytes() < x.as_bytes())
    };
    let mut out: Vec<KvEntry> = Vec::new();
    for e in live.into_iter().filter(in_range) {
        if spec.pattern.as_ref().is_some_and(|p| !e.value.contains(p.as_str())) {
            continue;
        }
        if spec.latest_only
            && out
                .iter()
                .any(|x| x.row == e.row && x.colfam == e.colfam && x.colqual == e.colqual)
        {
            continue;
        }
        out.push(e);
    }
    out
}

pub fn text_case(case: u64) -> Result<(), String> {
    let r = &mut rng(3, case);
    let rows = ["", "a", "ab", "b", "ba", "c", "é"];
    let puts: Vec<KvEntry> = (0..r.random_range(0..25))
        .map(|_| {
            let len = r.random_range(0..4);
            let value: String = (0..len).map(|_| *pick(r, &['a', 'b', ' '])).collect();
            KvEntry::new(
                pick(r, &rows),
                pick(r, &["f", "g"]),
                pick(r, &["q", "r"]),
                r.random_range(0..4),
                &value,
            )
        })
        .collect();
    let bound = |r: &mut Rng8| r.random_bool(0.5).then(|| pick(r, &rows).to_string());
    let spec = ScanSpec {
        table: "k".into(),
        start: bound(r),
        end: bound(r),
        pattern: r.random_bool(0.4).then(|| pick(r, &["a", "b", "ab", " ", ""]).to_string()),
        latest_only: r.random_bool(0.5),
    };
    let engine = TextEngine::new();
    engine.create_kv("k").map_err(|e| e.to_string())?;
    // Several batches, so overwrites cross put calls.
    for chunk in puts.chunks(7) {
        engine.put("k", chunk.to_vec()).map_err(|e| e.to_string())?;
    }
    let got = engine.scan(&spec);
    if let (Some(s), Some(e)) = (&spec.start, &spec.end) {
        if s.as_bytes() > e.as_bytes() {
            return match got {
                Err(polygate_core::Error::InvalidRange { .. }) => Ok(()),
                other => Err(format!("case {case}: expected InvalidRange, got {other:?}")),
            };
        }
    }
    let got = got.map_err(|e| format!("case {case}: {e}"))?;
    let want: Vec<Row> = text_oracle(&puts, &spec).iter().map(KvEntry::to_row).collect();
    if !same_rows(&got.rows, &want) {
        return Err(format!("case {case}: {spec:?}\n got {:?}\nwant {:?}", got.rows, want));
    }
    Ok(())
}

// ---------------------------------------------------------------- casts

/// Sorted copy under the total order, for multiset comparison.
pub fn multiset(rows: &[Row]) -> Vec<Row> {
    let mut v = rows.to_vec();
    v.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| o_total(x, y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal));
    v
}

/// Canonical text of a value as stored by a text cast; Null is empty.
pub fn o_render(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Int(i) => i.to_string(),
        Value::Float(f) => format!("{f:?}"),
        Value::Text(s) => s.clone(),
    }
}

/// A table with unique non-null keys `k1` (and `k2` when `two_keys`),
/// suitable as a cast source.
pub fn cast_source(r: &mut Rng8, two_keys: bool) -> (Schema, Vec<Row>) {
    let schema = if two_keys {
        Schema::parse("k1:Int64,k2:Int64,x:Int64,y:Float64,s:Text").unwrap()
    } else {
        Schema::parse("k1:Int64,x:Int64,y:Float64,s:Text").unwrap()
    };
    let mut keys: Vec<Vec<i64>> = Vec::new();
    let n = r.random_range(0..20);
    while keys.len() < n {
        let k: Vec<i64> = (0..if two_keys { 2 } else { 1 }).map(|_| r.random_range(-50..50)).collect();
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let rows = keys
        .into_iter()
        .map(|k| {
            let mut row: Row = k.into_iter().map(Value::Int).collect();
            row.push(rand_value(r, ValueKind::Int64));
            row.push(rand_value(r, ValueKind::Float64));
            row.push(rand_value(r, ValueKind::Text));
            row
        })
        .collect();
    (schema, rows)
}

pub fn field_names(s: &Schema) -> Vec<String> {
    s.fields().iter().map(|f: &Field| f.name.clone()).collect()
}

/// The result set shape of an engine result, for error messages.
pub fn describe(rs: &ResultSet) -> String {
    format!("({}) x {}", rs.schema, rs.rows.len())
}

// ---------------------------------------------------------------- grammar

const IDENTS: &[&str] = &["a", "b", "pid", "Hr", "t", "vitals", "patients", "x1", "note_s", "Ward", "los"];

fn ident(r: &mut Rng8) -> String {
    pick(r, IDENTS).to_string()
}

fn number_text(r: &mut Rng8) -> String {
    match r.random_range(0..6) {
        0 => r.random_range(0..1000).to_string(),
        1 => format!("{}.{}", r.random_range(0..100), r.random_range(0..100)),
        2 => format!("{}e{}", r.random_range(1..10), r.random_range(0..5)),
        3 => "9223372036854775807".into(),
        4 => "0.5".into(),
        _ => "1.0E-3".into(),
    }
}

fn string_lit(r: &mut Rng8) -> String {
    let body = pick(r, &["", "abc", "it''s", "a b", "é", "x,y"]);
    format!("'{body}'")
}

/// Expression text and its binding level: 0 atom, 2 product, 3 sum,
/// 4 comparison, 5 negation, 6 conjunction, 7 disjunction.
fn g_expr_lvl(r: &mut Rng8, depth: u32, qualified: bool) -> (String, u8) {
    if depth == 0 || r.random_bool(0.3) {
        let t = match r.random_range(0..6) {
            0 => number_text(r),
            1 => format!("-{}", number_text(r)),
            2 => string_lit(r),
            3 => "NULL".into(),
            4 if qualified => format!("{}.{}", ident(r), ident(r)),
            _ => ident(r),
        };
        return (t, 0);
    }
    // Operand at most `max` binds loosely enough; otherwise parenthesize.
    let sub = |r: &mut Rng8, max: u8| {
        let (t, l) = g_expr_lvl(r, depth - 1, qualified);
        if l > max || r.random_bool(0.1) {
            format!("({t})")
        } else {
            t
        }
    };
    match r.random_range(0..7) {
        0 => {
            let op = *pick(r, &["*", "/"]);
            (format!("{} {op} {}", sub(r, 2), sub(r, 0)), 2)
        }
        1 => {
            let op = *pick(r, &["+", "-"]);
            (format!("{} {op} {}", sub(r, 3), sub(r, 2)), 3)
        }
        2 => {
            let op = *pick(r, &["=", "!=", "<>", "<", "<=", ">", ">="]);
            (format!("{} {op} {}", sub(r, 3), sub(r, 3)), 4)
        }
        3 => (format!("NOT {}", sub(r, 5)), 5),
        4 => (format!("{} AND {}", sub(r, 6), sub(r, 5)), 6),
        5 => (format!("{} or {}", sub(r, 7), sub(r, 6)), 7),
        _ => (format!("- ({})", sub(r, 7)), 0),
    }
}

fn g_expr(r: &mut Rng8, depth: u32, qualified: bool) -> String {
    g_expr_lvl(r, depth, qualified).0
}

fn alias(r: &mut Rng8) -> String {
    if r.random_bool(0.3) {
        format!(" AS {}", ident(r))
    } else {
        String::new()
    }
}

fn g_spec(r: &mut Rng8, island: &str) -> String {
    let list = |r: &mut Rng8, hi: usize| {
        let n = r.random_range(1..hi);
        (0..n).map(|_| ident(r)).collect::<Vec<_>>().join(", ")
    };
    if r.random_bool(0.25) {
        return "*".into();
    }
    match island {
        "relational" => format!("({})", list(r, 4)),
        "array" => {
            let attrs = match r.random_range(0..3) {
                0 => String::new(),
                _ => list(r, 3),
            };
            format!("<{attrs}>[{}]", list(r, 3))
        }
        _ => format!("{{{}: {}}}", ident(r), list(r, 3)),
    }
}

fn g_cast(r: &mut Rng8, island: &str, depth: u32) -> String {
    let inner = g_query(r, depth - 1);
    let name = pick(r, &["v_tmp", "casted", "c1"]);
    format!("bdcast({inner}, {name}, {}, {island})", g_spec(r, island))
}

fn g_select(r: &mut Rng8, depth: u32) -> String {
    let mut items = Vec::new();
    for _ in 0..r.random_range(1..4) {
        items.push(match r.random_range(0..4) {
            0 => "*".to_string(),
            1 => {
                let f = pick(r, &["count", "sum", "avg", "min", "max", "COUNT"]);
                let arg = if f.eq_ignore_ascii_case("count") && r.random_bool(0.5) {
                    "*".to_string()
                } else {
                    g_expr(r, 1, true)
                };
                format!("{f}({arg}){}", alias(r))
            }
            _ => format!("{}{}", g_expr(r, 2, true), alias(r)),
        });
    }
    let table = |r: &mut Rng8| {
        let src = if depth > 0 && r.random_bool(0.3) {
            g_cast(r, "relational", depth)
        } else {
            ident(r)
        };
        match r.random_range(0..3) {
            0 => src,
            1 => format!("{src} {}", pick(r, &["p", "a", "q"])),
            _ => format!("{src} AS {}", pick(r, &["p", "a", "q"])),
        }
    };
    let mut q = format!("SELECT {} FROM {}", items.join(", "), table(r));
    for _ in 0..r.random_range(0..3) {
        let kw = pick(r, &["JOIN", "inner join"]);
        q.push_str(&format!(" {kw} {} ON {}.{} = {}", table(r), ident(r), ident(r), ident(r)));
    }
    if r.random_bool(0.5) {
        q.push_str(&format!(" WHERE {}", g_expr(r, 3, true)));
    }
    if r.random_bool(0.3) {
        q.push_str(&format!(" GROUP BY {}, {}", ident(r), ident(r)));
    }
    if r.random_bool(0.3) {
        let dir = pick(r, &["", " ASC", " desc"]);
        q.push_str(&format!(" ORDER BY {}{dir}, p.{}", ident(r), ident(r)));
    }
    if r.random_bool(0.3) {
        q.push_str(&format!(" LIMIT {}", r.random_range(0..100)));
    }
    q
}

fn g_afl(r: &mut Rng8, depth: u32, cast_depth: u32) -> String {
    if depth == 0 || r.random_bool(0.25) {
        let src = if cast_depth > 0 && r.random_bool(0.3) {
            g_cast(r, "array", cast_depth)
        } else {
            ident(r)
        };
        return format!("scan({src})");
    }
    let input = g_afl(r, depth - 1, cast_depth);
    match r.random_range(0..5) {
        0 => format!("filter({input}, {})", g_expr(r, 3, false)),
        1 => {
            let n = r.random_range(1..5);
            let b: Vec<String> = (0..n).map(|_| r.random_range(-20..1000).to_string()).collect();
            format!("subarray({input}, {})", b.join(", "))
        }
        2 => format!("project({input}, {}, {})", ident(r), ident(r)),
        3 => format!("apply({input}, {}, {})", ident(r), g_expr(r, 2, false)),
        _ => {
            let f = pick(r, &["count", "sum", "avg", "min", "max"]);
            let arg = if *f == "count" && r.random_bool(0.5) { "*".to_string() } else { ident(r) };
            let dims: String = (0..r.random_range(0..3)).map(|_| format!(", {}", ident(r))).collect();
            format!("aggregate({input}, {f}({arg}){dims})")
        }
    }
}

fn json_str(r: &mut Rng8) -> String {
    pick(r, &["\"p1\"", "\"a\\\"b\"", "\"\\u00e9\"", "\"\"", "\"tab\\tx\"", "\"\\ud83d\\ude00\""]).to_string()
}

fn g_text(r: &mut Rng8, depth: u32) -> String {
    let table = if depth > 0 && r.random_bool(0.3) {
        g_cast(r, "text", depth)
    } else {
        format!("\"{}\"", ident(r))
    };
    let mut fields = vec!["\"op\": \"scan\"".to_string(), format!("\"table\": {table}")];
    if r.random_bool(0.5) {
        let mut parts = Vec::new();
        if r.random_bool(0.7) {
            parts.push(format!("\"start\": {}", if r.random_bool(0.2) { "null".into() } else { json_str(r) }));
        }
        if r.random_bool(0.7) {
            parts.push(format!("\"end\": {}", json_str(r)));
        }
        fields.push(format!("\"range\": {{{}}}", parts.join(", ")));
    }
    if r.random_bool(0.5) {
        fields.push(format!("\"pattern\": {}", if r.random_bool(0.2) { "null".into() } else { json_str(r) }));
    }
    if r.random_bool(0.5) {
        fields.push(format!("\"latest_only\": {}", pick(r, &["true", "false"])));
    }
    // Field order is free.
    for i in (1..fields.len()).rev() {
        let j = r.random_range(0..=i);
        fields.swap(i, j);
    }
    format!("{{{}}}", fields.join(", "))
}

/// A syntactically valid polystore query.
pub fn g_query(r: &mut Rng8, depth: u32) -> String {
    match r.random_range(0..3) {
        0 => format!("bdrel({})", g_select(r, depth)),
        1 => format!("BDARRAY({})", g_afl(r, 3, depth)),
        _ => format!("bdtext({})", g_text(r, depth)),
    }
}

/// Structural round trip: parse, pretty-print, reparse.
pub fn roundtrip_case(case: u64) -> Result<(), String> {
    let r = &mut rng(4, case);
    let src = g_query(r, 2);
    let ast = polygate_core::lang::parse(&src).map_err(|e| format!("generated query rejected: {src}\n{e}"))?;
    let printed = ast.to_string();
    let again = polygate_core::lang::parse(&printed).map_err(|e| format!("printed query rejected: {printed}\n{e}"))?;
    if ast != again {
        return Err(format!("round trip changed the tree:\n{src}\n{printed}"));
    }
    if again.to_string() != printed {
        return Err(format!("printing is not a fixed point: {printed}"));
    }
    Ok(())
}

const SOUP: &[&str] = &[
    "bdrel(", "bdarray(", "bdtext(", "bdcast(", "SELECT", "FROM", "WHERE", "JOIN", "ON", "GROUP", "BY", "ORDER",
    "LIMIT", "AS", "*", ",", ")", "(", "{", "}", "[", "]", "<", ">", "=", "<>", "!", "'", "\"", ":", ".", "-", "1",
    "1e", "9999999999999999999999", "x", "scan", "filter", "\"op\"", "\"scan\"", "\\u", "é", "\u{0}", "\n",
];

/// An arbitrary input: mutated valid query, token soup, or random chars.
pub fn fuzz_input(case: u64) -> String {
    let r = &mut rng(5, case);
    match case % 3 {
        0 => {
            let mut chars: Vec<char> = g_query(r, 2).chars().collect();
            for _ in 0..r.random_range(1..6) {
                if chars.is_empty() {
                    break;
                }
                let i = r.random_range(0..chars.len());
                match r.random_range(0..4) {
                    0 => {
                        chars.remove(i);
                    }
                    1 => chars.insert(i, *pick(r, &['(', ')', '\'', '"', ',', '{', '-', 'é', '\\'])),
                    2 => chars[i] = r.random_range(' '..='~'),
                    _ => chars.truncate(i),
                }
            }
            chars.into_iter().collect()
        }
        1 => (0..r.random_range(0..30)).map(|_| *pick(r, SOUP)).collect::<Vec<_>>().join(" "),
        _ => (0..r.random_range(0..40))
            .map(|_| match r.random_range(0..10) {
                0 => char::from_u32(r.random_range(0x80..0x3000)).unwrap_or('?'),
                _ => r.random_range(' '..='~'),
            })
            .collect(),
    }
}

/// Parsing never panics and error positions lie inside the input.
pub fn fuzz_case(case: u64) -> Result<(), String> {
    let src = fuzz_input(case);
    let out = std::panic::catch_unwind(|| polygate_core::lang::parse(&src))
        .map_err(|_| format!("parser panicked on {src:?}"))?;
    if let Err(e) = out {
        let p = e.position;
        let lines = src.split('\n').count().max(1);
        if p.line < 1 || p.column < 1 || p.line > lines || p.offset > src.len() {
            return Err(format!("position {p:?} outside input {src:?}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- cast round trips

/// rel -> array -> rel (even cases) or rel -> text -> rel (odd cases) through
/// the full planner; the result multiset must equal the one derived from the
/// source rows.
pub fn cast_case(case: u64) -> Result<(), String> {
    use polygate_core::planner::QueryContext;
    use polygate_core::Cluster;

    let r = &mut rng(6, case);
    let to_array = case.is_multiple_of(2);
    let two_keys = to_array && r.random_bool(0.5);
    let (schema, rows) = cast_source(r, two_keys);
    let cluster = Cluster::in_memory();
    cluster
        .create_table("rel1", "src", schema.clone(), rows.clone())
        .map_err(|e| e.to_string())?;
    let mut attrs: Vec<&str> = ["x", "y", "s"].into_iter().filter(|_| r.random_bool(0.7)).collect();
    if attrs.is_empty() {
        attrs.push("s");
    }
    if r.random_bool(0.5) {
        attrs.reverse();
    }
    let col = |n: &str| schema.index_of(n).unwrap();
    let ts = r.random_range(0..1_000_000_000i64);
    let mut ctx = QueryContext::with_timestamp(ts);

    let (query, want): (String, Vec<Row>) = if to_array {
        let keys: Vec<&str> = if two_keys { vec!["k1", "k2"] } else { vec!["k1"] };
        let q = format!(
            "bdrel(SELECT * FROM bdcast(bdarray(scan(bdcast(bdrel(SELECT * FROM src), ta, <{}>[{}], array))), tr, *, relational))",
            attrs.join(", "),
            keys.join(", ")
        );
        let want = rows
            .iter()
            .map(|row| keys.iter().chain(&attrs).map(|n| row[col(n)].clone()).collect())
            .collect();
        (q, want)
    } else {
        let q = format!(
            "bdrel(SELECT * FROM bdcast(bdtext({{\"op\": \"scan\", \"table\": bdcast(bdrel(SELECT * FROM src), tt, {{k1: {}}}, text)}}), back, *, relational))",
            attrs.join(", ")
        );
        let mut want = Vec::new();
        for row in &rows {
            for a in &attrs {
                want.push(vec![
                    Value::Text(o_render(&row[col("k1")])),
                    Value::Text("tt".into()),
                    Value::Text(a.to_string()),
                    Value::Int(ts),
                    Value::Text(o_render(&row[col(a)])),
                ]);
            }
        }
        (q, want)
    };
    let got = cluster
        .query_with(&query, &mut ctx)
        .map_err(|e| format!("case {case}: {e}\n{query}"))?;
    if !same_rows(&multiset(&got.rows), &multiset(&want)) {
        return Err(format!("case {case}: multisets differ\n{query}\n got {:?}\nwant {:?}", got.rows, want));
    }
    if !to_array {
        // Declared coercion back from text: numeric values parse to the
        // original, with the empty string standing for Null.
        for g in &got.rows {
            let (Value::Text(key), Value::Text(q), Value::Text(v)) = (&g[0], &g[2], &g[4]) else {
                return Err(format!("case {case}: unexpected entry {g:?}"));
            };
            let src = rows.iter().find(|row| &o_render(&row[0]) == key).ok_or("unknown row key")?;
            let orig = &src[col(q)];
            let back = match (orig, v.as_str()) {
                (_, "") if q != "s" => Value::Null,
                (Value::Int(_), t) => t.parse::<i64>().map(Value::Int).map_err(|e| e.to_string())?,
                (Value::Float(_), t) => t.parse::<f64>().map(Value::Float).map_err(|e| e.to_string())?,
                (_, t) if q == "s" && t.is_empty() => orig.clone(),
                (_, t) => Value::Text(t.to_string()),
            };
            if !same(&back, orig) {
                return Err(format!("case {case}: {q} value {v:?} does not coerce back to {orig:?}"));
            }
        }
    }
    let leftovers = cluster.leftover_temps().map_err(|e| e.to_string())?;
    if !leftovers.is_empty() {
        return Err(format!("case {case}: temps left behind: {leftovers:?}"));
    }
    Ok(())
}
