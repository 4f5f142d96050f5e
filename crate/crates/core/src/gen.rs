//! Deterministic synthetic hospital dataset.
//!
//! The PRNG is xorshift64 with shifts (13, 7, 17); a zero state is replaced
//! by 0x9E3779B97F4A7C15 and `below(n)` is `next % n`. Each object draws from
//! its own stream with initial state
//! `(seed ^ salt * 0x100000001B3) ^ 0x9E3779B97F4A7C15` (wrapping multiply,
//! salts 1..=4 for patients, admissions, vitals, notes), so the patients
//! table does not depend on the waveform length or note count. Any
//! implementation of these few lines reproduces the golden files.

use crate::array::Dim;
use crate::migrate::ArrayData;
use crate::text::KvEntry;
use crate::value::{Row, Schema, Value};

pub const GOLDEN_MIX: u64 = 0x9E37_79B9_7F4A_7C15;
/// First note timestamp, epoch milliseconds.
pub const NOTE_EPOCH_MS: i64 = 1_600_000_000_000;

#[derive(Debug, Clone)]
pub struct XorShift64(u64);

impl XorShift64 {
    pub fn new(seed: u64) -> XorShift64 {
        let s = seed ^ GOLDEN_MIX;
        XorShift64(if s == 0 { GOLDEN_MIX } else { s })
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform-ish in `0..n` by modulo; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
}

const SALT_PATIENTS: u64 = 1;
const SALT_ADMISSIONS: u64 = 2;
const SALT_VITALS: u64 = 3;
const SALT_NOTES: u64 = 4;

const FIRST: [&str; 16] = [
    "ada", "ben", "cleo", "dev", "eli", "fay", "gus", "hana", "ivan", "jo", "kai", "lena", "milo", "nia", "omar", "pia",
];
const LAST: [&str; 16] = [
    "abbott", "baker", "chen", "diaz", "evans", "fox", "garcia", "hale", "ito", "jones", "khan", "lopez", "moss",
    "novak", "ortiz", "park",
];
const WARDS: [&str; 4] = ["cardio", "general", "icu", "neuro"];

pub const VOCAB: [&str; 64] = [
    "patient", "reports", "mild", "severe", "chest", "pain", "denies", "fever", "stable", "overnight", "heart",
    "rate", "elevated", "normal", "oxygen", "saturation", "improved", "worsening", "cough", "breathing", "labored",
    "comfortable", "resting", "alert", "oriented", "confused", "family", "visited", "plan", "continue", "monitor",
    "discharge", "tomorrow", "fluids", "given", "pressure", "low", "high", "sinus", "rhythm", "arrhythmia", "noted",
    "sepsis", "ruled", "out", "culture", "pending", "antibiotics", "started", "tolerating", "diet", "ambulating",
    "with", "assistance", "no", "acute", "distress", "nausea", "vomiting", "headache", "dizzy", "sleeping", "well",
    "today",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenSpec {
    pub seed: i64,
    pub n_patients: i64,
    pub waveform_len: i64,
    pub n_notes: i64,
}

impl GenSpec {
    pub fn demo() -> GenSpec {
        GenSpec {
            seed: 42,
            n_patients: 100,
            waveform_len: 1000,
            n_notes: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub patients: (Schema, Vec<Row>),
    pub admissions: (Schema, Vec<Row>),
    pub vitals: ArrayData,
    pub notes: Vec<KvEntry>,
}

fn stream(spec: &GenSpec, salt: u64) -> XorShift64 {
    XorShift64::new(spec.seed as u64 ^ salt.wrapping_mul(0x1000_0000_01B3))
}

pub fn patients_schema() -> Schema {
    Schema::parse("id:Int64,name:Text,age:Int64,sex:Text").expect("static schema")
}

pub fn admissions_schema() -> Schema {
    Schema::parse("adm_id:Int64,patient_id:Int64,ward:Text,los:Int64").expect("static schema")
}

pub fn vitals_attrs() -> Schema {
    Schema::parse("hr:Float64,spo2:Float64").expect("static schema")
}

/// Negative counts are treated as zero.
pub fn generate(spec: &GenSpec) -> Dataset {
    let n = spec.n_patients.max(0);
    let len = spec.waveform_len.max(0);

    let mut rng = stream(spec, SALT_PATIENTS);
    let patients = (0..n)
        .map(|id| {
            let name = format!("{} {}", FIRST[rng.below(16) as usize], LAST[rng.below(16) as usize]);
            let age = 18 + rng.below(73) as i64;
            let sex = if rng.below(2) == 0 { "F" } else { "M" };
            vec![Value::Int(id), Value::Text(name), Value::Int(age), Value::Text(sex.into())]
        })
        .collect();

    let mut rng = stream(spec, SALT_ADMISSIONS);
    let mut admissions = Vec::new();
    for pid in 0..n {
        for _ in 0..rng.below(3) {
            let ward = WARDS[rng.below(4) as usize];
            let los = 1 + rng.below(14) as i64;
            let adm_id = admissions.len() as i64;
            admissions.push(vec![Value::Int(adm_id), Value::Int(pid), Value::Text(ward.into()), Value::Int(los)]);
        }
    }

    // Each patient has a baseline; samples wander around it in tenths.
    let mut rng = stream(spec, SALT_VITALS);
    let mut cells = Vec::with_capacity((n * len) as usize);
    for pid in 0..n {
        let hr_base = 600 + rng.below(400) as i64;
        let spo2_base = 930 + rng.below(60) as i64;
        for t in 0..len {
            let hr = hr_base + rng.below(201) as i64 - 100;
            let spo2 = (spo2_base + rng.below(41) as i64 - 20).min(1000);
            cells.push((vec![pid, t], vec![Value::Float(hr as f64 / 10.0), Value::Float(spo2 as f64 / 10.0)]));
        }
    }
    let vitals = ArrayData {
        dims: vec![Dim::new("patient_id", 0, (n - 1).max(0)), Dim::new("t", 0, (len - 1).max(0))],
        attrs: vitals_attrs(),
        cells,
    };

    let mut rng = stream(spec, SALT_NOTES);
    let notes = if n == 0 {
        Vec::new()
    } else {
        (0..spec.n_notes.max(0))
            .map(|k| {
                let pid = rng.below(n as u64);
                let words = 4 + rng.below(9);
                let body: Vec<&str> = (0..words).map(|_| VOCAB[rng.below(64) as usize]).collect();
                KvEntry::new(
                    &format!("p{pid}/n{k}"),
                    "notes",
                    "body",
                    NOTE_EPOCH_MS + k * 60_000,
                    &body.join(" "),
                )
            })
            .collect()
    };

    Dataset {
        patients: (patients_schema(), patients),
        admissions: (admissions_schema(), admissions),
        vitals,
        notes,
    }
}
