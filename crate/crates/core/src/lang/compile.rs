//! Island AST to engine plan. Casts must already be replaced by named
//! objects. Every plan is bound once here so that type errors surface at
//! build time.

use crate::array::{ArrPlan, Dim};
use crate::error::{Error, Result};
use crate::expr::{ColumnRef, Expr, Scope};
use crate::rel::{AggCall, ProjectItem, RelPlan, SortKey};
use crate::text::ScanSpec;
use crate::value::Schema;

use super::ast::{Afl, Select, SelectItem, Source, TextScan};

fn named(source: &Source) -> Result<&str> {
    match source {
        Source::Named(n) => Ok(n),
        Source::Cast(c) => Err(Error::Plan(format!("cast {} was not materialized", c.dest_name))),
    }
}

fn column_ref(scope: &Scope, i: usize) -> ColumnRef {
    let c = &scope.columns[i];
    ColumnRef {
        qualifier: c.qualifier.clone(),
        name: c.name.clone(),
    }
}

/// Default output name of an aggregate item.
fn agg_name(func: crate::agg::AggFunc, arg: &Option<Expr>) -> String {
    match arg {
        None => func.name().to_string(),
        Some(Expr::Column(c)) => format!("{}_{}", func.name(), c.name),
        Some(_) => func.name().to_string(),
    }
}

pub fn compile_rel(select: &Select, schemas: &dyn Fn(&str) -> Result<Schema>) -> Result<RelPlan> {
    let mut plan = RelPlan::Scan {
        table: named(&select.from.source)?.to_string(),
        alias: select.from.alias.clone(),
    };
    for j in &select.joins {
        plan = RelPlan::Join {
            left: Box::new(plan),
            right: Box::new(RelPlan::Scan {
                table: named(&j.table.source)?.to_string(),
                alias: j.table.alias.clone(),
            }),
            on: vec![(j.left.clone(), j.right.clone())],
        };
    }
    if let Some(w) = &select.filter {
        plan = plan.filter(w.clone());
    }
    let input_scope = plan.output_scope(schemas)?;

    let aggregating =
        !select.group_by.is_empty() || select.items.iter().any(|i| matches!(i, SelectItem::Agg { .. }));
    let items = if aggregating {
        let (agg_plan, items) = aggregate(plan, select, &input_scope)?;
        plan = agg_plan;
        items
    } else {
        let mut items = Vec::new();
        for (pos, item) in select.items.iter().enumerate() {
            match item {
                SelectItem::Wildcard => {
                    items.extend((0..input_scope.columns.len()).map(|i| ProjectItem {
                        expr: Expr::Column(column_ref(&input_scope, i)),
                        name: input_scope.columns[i].name.clone(),
                    }));
                }
                SelectItem::Expr { expr, alias } => {
                    let name = match (alias, expr) {
                        (Some(a), _) => a.clone(),
                        (None, Expr::Column(c)) => c.name.clone(),
                        (None, _) => format!("col{}", pos + 1),
                    };
                    items.push(ProjectItem {
                        expr: expr.clone(),
                        name,
                    });
                }
                SelectItem::Agg { .. } => unreachable!("aggregates handled above"),
            }
        }
        items
    };

    let keys: Vec<SortKey> = select
        .order_by
        .iter()
        .map(|o| SortKey {
            column: o.column.clone(),
            descending: o.descending,
        })
        .collect();
    let pre_project = plan.clone();
    plan = RelPlan::Project {
        input: Box::new(plan),
        items: items.clone(),
    };
    if !keys.is_empty() {
        let projected = plan.output_scope(schemas)?;
        if keys.iter().all(|k| projected.resolve(&k.column).is_ok()) {
            plan = RelPlan::Sort {
                input: Box::new(plan),
                keys,
            };
        } else if aggregating {
            for k in &keys {
                projected.resolve(&k.column)?;
            }
        } else {
            plan = RelPlan::Project {
                input: Box::new(RelPlan::Sort {
                    input: Box::new(pre_project),
                    keys,
                }),
                items,
            };
        }
    }
    if let Some(n) = select.limit {
        plan = plan.limit(n);
    }
    plan.output_scope(schemas)?;
    Ok(plan)
}

/// Builds the Aggregate node and the projection that restores select-list
/// order and names above it.
fn aggregate(input: RelPlan, select: &Select, scope: &Scope) -> Result<(RelPlan, Vec<ProjectItem>)> {
    let mut key_idx: Vec<usize> = Vec::new();
    for g in &select.group_by {
        let i = scope.resolve(g)?;
        if !key_idx.contains(&i) {
            key_idx.push(i);
        }
    }
    let group_by: Vec<ColumnRef> = key_idx.iter().map(|&i| column_ref(scope, i)).collect();
    let mut aggs = Vec::new();
    let mut items = Vec::new();
    for item in &select.items {
        match item {
            SelectItem::Wildcard => return Err(Error::Plan("SELECT * cannot be combined with aggregation".into())),
            SelectItem::Agg { func, arg, alias } => {
                let internal = format!("__agg{}", aggs.len());
                aggs.push(AggCall {
                    func: *func,
                    arg: arg.clone(),
                    name: internal.clone(),
                });
                items.push(ProjectItem {
                    expr: Expr::col(&internal),
                    name: alias.clone().unwrap_or_else(|| agg_name(*func, arg)),
                });
            }
            SelectItem::Expr { expr, alias } => {
                let Expr::Column(c) = expr else {
                    return Err(Error::Plan(format!(
                        "{expr} must be a grouping column or inside an aggregate"
                    )));
                };
                let i = scope.resolve(c)?;
                let Some(k) = key_idx.iter().position(|&g| g == i) else {
                    return Err(Error::Plan(format!("column {c} must appear in GROUP BY or inside an aggregate")));
                };
                items.push(ProjectItem {
                    expr: Expr::Column(group_by[k].clone()),
                    name: alias.clone().unwrap_or_else(|| c.name.clone()),
                });
            }
        }
    }
    Ok((
        RelPlan::Aggregate {
            input: Box::new(input),
            group_by,
            aggs,
        },
        items,
    ))
}

/// Looks up an array's dims and attributes by name.
pub type ArrayShape<'a> = &'a dyn Fn(&str) -> Result<(Vec<Dim>, Schema)>;

pub fn compile_arr(afl: &Afl, shape: ArrayShape<'_>) -> Result<ArrPlan> {
    let plan = lower_afl(afl)?;
    let (dims, attrs) = shape(plan.array())?;
    let names: Vec<String> = dims.into_iter().map(|d| d.name).collect();
    plan.output_schema(&names, &attrs)?;
    Ok(plan)
}

fn lower_afl(afl: &Afl) -> Result<ArrPlan> {
    Ok(match afl {
        Afl::Scan(s) => ArrPlan::scan(named(s)?),
        Afl::Filter(i, e) => lower_afl(i)?.filter(e.clone()),
        Afl::Subarray(i, flat) => {
            if flat.len() % 2 != 0 {
                return Err(Error::Plan(format!(
                    "subarray takes lo/hi pairs, got {} bounds",
                    flat.len()
                )));
            }
            lower_afl(i)?.subarray(flat.chunks(2).map(|p| (p[0], p[1])).collect())
        }
        Afl::Project(i, attrs) => ArrPlan::Project {
            input: Box::new(lower_afl(i)?),
            attrs: attrs.clone(),
        },
        Afl::Apply(i, name, e) => ArrPlan::Apply {
            input: Box::new(lower_afl(i)?),
            name: name.clone(),
            expr: e.clone(),
        },
        Afl::Aggregate {
            input,
            func,
            attr,
            dims,
        } => ArrPlan::Aggregate {
            input: Box::new(lower_afl(input)?),
            func: *func,
            attr: attr.clone(),
            dims: dims.clone(),
        },
    })
}

pub fn compile_text(scan: &TextScan) -> Result<ScanSpec> {
    let (start, end) = match &scan.range {
        Some(r) => (r.start.clone(), r.end.clone()),
        None => (None, None),
    };
    Ok(ScanSpec {
        table: named(&scan.table)?.to_string(),
        start,
        end,
        pattern: scan.pattern.clone(),
        latest_only: scan.latest_only,
    })
}
