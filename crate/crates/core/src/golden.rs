//! Golden query files: a `-- name` line, then the query on one or more
//! lines, with blank lines between entries.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenQuery {
    pub name: String,
    pub query: String,
}

pub fn parse_golden(text: &str) -> Result<Vec<GoldenQuery>> {
    let mut out: Vec<GoldenQuery> = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    let flush = |cur: Option<(String, Vec<&str>)>, out: &mut Vec<GoldenQuery>| -> Result<()> {
        if let Some((name, lines)) = cur {
            if lines.is_empty() {
                return Err(Error::Config(format!("golden entry {name} has no query")));
            }
            if out.iter().any(|g| g.name == name) {
                return Err(Error::Config(format!("golden entry {name} appears twice")));
            }
            out.push(GoldenQuery {
                name,
                query: lines.join("\n"),
            });
        }
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        if let Some(name) = line.strip_prefix("--") {
            flush(current.take(), &mut out)?;
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::Config(format!("line {}: bad golden name {name:?}", i + 1)));
            }
            current = Some((name.to_string(), Vec::new()));
        } else if line.trim().is_empty() {
            flush(current.take(), &mut out)?;
        } else {
            match &mut current {
                Some((_, lines)) => lines.push(line.trim_end()),
                None => return Err(Error::Config(format!("line {}: query without a -- name line", i + 1))),
            }
        }
    }
    flush(current.take(), &mut out)?;
    Ok(out)
}
