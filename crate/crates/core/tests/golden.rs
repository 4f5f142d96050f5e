//! Golden queries over the seeded demo dataset. Set `POLYGATE_BLESS=1` to
//! rewrite the expected files; the oracle tests below recompute most of
//! them from the generator output without going through any engine.

use std::path::PathBuf;

use polygate_core::csv::render_csv;
use polygate_core::gen::{generate, Dataset, GenSpec};
use polygate_core::golden::parse_golden;
use polygate_core::loader::{load, Placement};
use polygate_core::{Cluster, Value};

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../golden")
}

fn expected(name: &str) -> String {
    std::fs::read_to_string(golden_dir().join("expected").join(format!("{name}.csv"))).unwrap()
}

fn field(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Int(i) => i.to_string(),
        Value::Float(f) => format!("{f:?}"),
        Value::Text(s) if s.is_empty() || s.contains([',', '"', '\n', '\r']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::Text(s) => s.clone(),
    }
}

fn csv(header: &[&str], rows: &[Vec<Value>]) -> String {
    let mut out = header.join(",") + "\n";
    for r in rows {
        out += &r.iter().map(field).collect::<Vec<_>>().join(",");
        out += "\n";
    }
    out
}

fn demo() -> Dataset {
    generate(&GenSpec::demo())
}

fn int(v: &Value) -> i64 {
    v.as_i64().unwrap()
}

fn text(v: &Value) -> &str {
    v.as_str().unwrap()
}

fn float(v: &Value) -> f64 {
    match v {
        Value::Float(f) => *f,
        _ => panic!("not a float"),
    }
}

#[test]
fn golden_file_matches_engines() {
    let cluster = Cluster::in_memory();
    load(&cluster, &GenSpec::demo(), &Placement::single(&cluster).unwrap(), false).unwrap();
    let queries = parse_golden(&std::fs::read_to_string(golden_dir().join("queries.bdq")).unwrap()).unwrap();
    assert!(queries.len() >= 10);
    let bless = std::env::var_os("POLYGATE_BLESS").is_some();
    for g in &queries {
        let got = render_csv(&cluster.query(&g.query).unwrap_or_else(|e| panic!("{}: {e}", g.name)));
        let path = golden_dir().join("expected").join(format!("{}.csv", g.name));
        if bless {
            std::fs::write(&path, &got).unwrap();
        } else {
            assert_eq!(got, expected(&g.name), "golden {} differs", g.name);
        }
    }
    assert!(cluster.leftover_temps().unwrap().is_empty());
}

#[test]
fn oracle_patients_and_counts() {
    let d = demo();
    let p = &d.patients.1;
    assert_eq!(expected("patients_limit4"), csv(&["id", "name", "age", "sex"], &p[..4]));
    assert_eq!(expected("patient_count"), format!("count\n{}\n", p.len()));
    let mut rows = Vec::new();
    for sex in ["F", "M"] {
        let ages: Vec<i64> = p.iter().filter(|r| text(&r[3]) == sex).map(|r| int(&r[2])).collect();
        if ages.is_empty() {
            continue;
        }
        let mean = ages.iter().sum::<i64>() as f64 / ages.len() as f64;
        rows.push(vec![
            Value::Text(sex.into()),
            Value::Int(ages.len() as i64),
            Value::Float(mean),
            Value::Int(*ages.iter().min().unwrap()),
            Value::Int(*ages.iter().max().unwrap()),
        ]);
    }
    assert_eq!(expected("age_by_sex"), csv(&["sex", "n", "mean_age", "min_age", "max_age"], &rows));
}

#[test]
fn oracle_vitals() {
    let d = demo();
    let cells = &d.vitals.cells;
    let mut rows = Vec::new();
    for pid in 0..100 {
        let n = cells.iter().filter(|(c, r)| c[0] == pid && float(&r[0]) > 100.0).count();
        if n > 0 {
            rows.push(vec![Value::Int(pid), Value::Int(n as i64)]);
        }
    }
    assert_eq!(expected("tachycardia_samples"), csv(&["patient_id", "count"], &rows));
    let rows: Vec<Vec<Value>> = cells
        .iter()
        .filter(|(c, _)| c[0] <= 2 && c[1] <= 4)
        .map(|(c, r)| vec![Value::Int(c[0]), Value::Int(c[1]), r[1].clone()])
        .collect();
    assert_eq!(expected("spo2_window"), csv(&["patient_id", "t", "spo2"], &rows));
}

#[test]
fn oracle_canonical_join() {
    let d = demo();
    // Bounds come in (lo, hi) pairs per dim: patient 0, samples 0..=999.
    let mut rows = Vec::new();
    for p in &d.patients.1 {
        for (c, r) in &d.vitals.cells {
            if c[0] == int(&p[0]) && c[0] == 0 && c[1] <= 999 {
                rows.push(vec![p[1].clone(), r[0].clone()]);
            }
        }
    }
    assert_eq!(rows.len(), 1000);
    assert_eq!(expected("canonical_join"), csv(&["name", "hr"], &rows));
}

#[test]
fn oracle_admissions() {
    let d = demo();
    let (p, a) = (&d.patients.1, &d.admissions.1);
    let mut rows: Vec<Vec<Value>> = Vec::new();
    for pr in p {
        for ar in a.iter().filter(|ar| int(&ar[1]) == int(&pr[0]) && int(&ar[3]) > 7) {
            rows.push(vec![pr[0].clone(), pr[1].clone(), ar[2].clone(), ar[3].clone()]);
        }
    }
    rows.sort_by_key(|r| (-int(&r[3]), int(&r[0])));
    rows.truncate(20);
    assert_eq!(expected("long_stays"), csv(&["id", "name", "ward", "los"], &rows));

    let mut wards: Vec<&str> = a.iter().map(|r| text(&r[2])).collect();
    wards.sort();
    wards.dedup();
    let rows: Vec<Vec<Value>> = wards
        .iter()
        .map(|w| {
            let stays: Vec<i64> = a.iter().filter(|r| text(&r[2]) == *w).map(|r| int(&r[3])).collect();
            vec![Value::Text(w.to_string()), Value::Int(stays.len() as i64), Value::Int(stays.iter().sum())]
        })
        .collect();
    assert_eq!(expected("ward_load"), csv(&["ward", "stays", "days"], &rows));
}

#[test]
fn oracle_notes() {
    let d = demo();
    let mut hits: Vec<_> = d
        .notes
        .iter()
        .filter(|n| n.row.as_str() >= "p1/" && n.row.as_str() < "p2/" && n.value.contains("pain"))
        .collect();
    hits.sort_by(|a, b| a.row.cmp(&b.row));
    let rows: Vec<Vec<Value>> = hits.iter().map(|n| n.to_row()).collect();
    assert_eq!(expected("pain_notes_p1"), csv(&["row", "colfam", "colqual", "ts", "value"], &rows));
    let fever = d.notes.iter().filter(|n| n.value.contains("fever")).count();
    assert_eq!(expected("fever_note_count"), format!("fever_notes\n{fever}\n"));
}

#[test]
fn oracle_cross_island_aggregates() {
    let d = demo();
    let mut rows: Vec<(f64, i64, i64)> = Vec::new();
    for p in d.patients.1.iter().filter(|p| int(&p[2]) >= 65) {
        let pid = int(&p[0]);
        let mut sum = 0.0;
        let mut n = 0;
        for (c, r) in &d.vitals.cells {
            if c[0] == pid {
                sum += float(&r[0]);
                n += 1;
            }
        }
        rows.push((sum / n as f64, pid, int(&p[2])));
    }
    rows.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    rows.truncate(10);
    let rows: Vec<Vec<Value>> =
        rows.into_iter().map(|(h, id, age)| vec![Value::Int(id), Value::Int(age), Value::Float(h)]).collect();
    assert_eq!(expected("elderly_mean_hr"), csv(&["id", "age", "avg_hr"], &rows));

    let oldest = d.patients.1.iter().filter(|p| text(&p[3]) == "F").map(|p| int(&p[2])).max();
    let v = oldest.map_or(String::new(), |a| a.to_string());
    assert_eq!(expected("oldest_female"), format!("max_age\n{v}\n"));

    let mut elders: Vec<(String, String)> = d
        .patients
        .1
        .iter()
        .filter(|p| int(&p[2]) > 80)
        .map(|p| (int(&p[0]).to_string(), text(&p[1]).to_string()))
        .filter(|(k, _)| k.as_str() >= "1" && k.as_str() < "5")
        .collect();
    elders.sort();
    let rows: Vec<Vec<Value>> = elders.into_iter().map(|(k, n)| vec![Value::Text(k), Value::Text(n)]).collect();
    assert_eq!(expected("elder_names_via_text"), csv(&["row", "value"], &rows));
}
