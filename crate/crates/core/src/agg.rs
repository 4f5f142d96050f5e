//! Aggregate functions shared by the relational and array engines.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::value::{compare, Value, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        }
    }

    /// Result kind given the argument kind (`None` for `count(*)`).
    pub fn output_kind(self, arg: Option<ValueKind>) -> Result<ValueKind> {
        match (self, arg) {
            (AggFunc::Count, _) => Ok(ValueKind::Int64),
            (_, None) => Err(Error::Plan(format!("{}(*) is not supported", self.name()))),
            (AggFunc::Sum | AggFunc::Avg, Some(k)) if !k.is_numeric() => {
                Err(Error::Plan(format!("{} requires a numeric argument", self.name())))
            }
            (AggFunc::Avg, Some(_)) => Ok(ValueKind::Float64),
            (_, Some(k)) => Ok(k),
        }
    }
}

impl fmt::Display for AggFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggFunc {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.to_ascii_lowercase().as_str() {
            "count" => Ok(AggFunc::Count),
            "sum" => Ok(AggFunc::Sum),
            "avg" => Ok(AggFunc::Avg),
            "min" => Ok(AggFunc::Min),
            "max" => Ok(AggFunc::Max),
            _ => Err(()),
        }
    }
}

/// Running state of one aggregate over one group. Nulls are ignored except
/// by `count(*)`; a group with no non-Null input yields Null (count yields 0).
#[derive(Debug, Clone)]
pub struct Accumulator {
    func: AggFunc,
    count: i64,
    int_sum: i128,
    float_sum: f64,
    saw_float: bool,
    best: Option<Value>,
}

impl Accumulator {
    pub fn new(func: AggFunc) -> Self {
        Accumulator {
            func,
            count: 0,
            int_sum: 0,
            float_sum: 0.0,
            saw_float: false,
            best: None,
        }
    }

    /// Feeds one input. `None` means `count(*)` (the row itself).
    pub fn update(&mut self, v: Option<&Value>) {
        let v = match v {
            None => {
                self.count += 1;
                return;
            }
            Some(Value::Null) => return,
            Some(v) => v,
        };
        self.count += 1;
        match self.func {
            AggFunc::Count => {}
            AggFunc::Sum | AggFunc::Avg => match v {
                Value::Int(i) => self.int_sum += *i as i128,
                Value::Float(f) => {
                    self.float_sum += f;
                    self.saw_float = true;
                }
                _ => {}
            },
            AggFunc::Min | AggFunc::Max => {
                let replace = match &self.best {
                    None => true,
                    Some(b) => {
                        let ord = compare(v, b);
                        if self.func == AggFunc::Min {
                            ord.is_lt()
                        } else {
                            ord.is_gt()
                        }
                    }
                };
                if replace {
                    self.best = Some(v.clone());
                }
            }
        }
    }

    pub fn finish(&self) -> Value {
        match self.func {
            AggFunc::Count => Value::Int(self.count),
            _ if self.count == 0 => Value::Null,
            AggFunc::Sum if self.saw_float => Value::Float(self.float_sum),
            AggFunc::Sum => i64::try_from(self.int_sum).map_or(Value::Null, Value::Int),
            AggFunc::Avg if self.saw_float => Value::Float(self.float_sum / self.count as f64),
            AggFunc::Avg => Value::Float(self.int_sum as f64 / self.count as f64),
            AggFunc::Min | AggFunc::Max => self.best.clone().unwrap_or(Value::Null),
        }
    }
}
