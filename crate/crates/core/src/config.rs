//! Cluster configuration file.
//!
//! ```text
//! # comment
//! listen = 127.0.0.1:7878
//! catalog = rel1
//! log_level = info
//!
//! [engine:rel1]
//! kind = relational
//! address = rel1:5432
//! data_dir = data/rel1
//! ```
//!
//! Relative `data_dir` paths are resolved against the file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lang::Island;
use crate::value::check_identifier;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:7878";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    pub name: String,
    pub kind: Island,
    pub address: String,
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterConfig {
    pub listen: String,
    pub catalog: String,
    pub log_level: String,
    pub engines: Vec<EngineConfig>,
}

/// Partially filled engine section: (name, kind, address, data_dir, line).
type Pending = (String, Option<Island>, Option<String>, Option<PathBuf>, usize);

fn err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

impl ClusterConfig {
    /// One engine per island; the relational one holds the catalog. With a
    /// data root every engine snapshots to `<root>/<name>`.
    pub fn demo(data_root: Option<&Path>) -> ClusterConfig {
        let engine = |name: &str, kind, port| EngineConfig {
            name: name.to_string(),
            kind,
            address: format!("{name}:{port}"),
            data_dir: data_root.map(|r| r.join(name)),
        };
        ClusterConfig {
            listen: DEFAULT_LISTEN.to_string(),
            catalog: "rel1".into(),
            log_level: "info".into(),
            engines: vec![
                engine("rel1", Island::Relational, 5432),
                engine("arr1", Island::Array, 1239),
                engine("txt1", Island::Text, 9997),
            ],
        }
    }

    pub fn load(path: &Path) -> Result<ClusterConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        ClusterConfig::parse(&text, path.parent())
    }

    pub fn parse(text: &str, base: Option<&Path>) -> Result<ClusterConfig> {
        let mut cfg = ClusterConfig {
            listen: DEFAULT_LISTEN.to_string(),
            catalog: String::new(),
            log_level: "info".into(),
            engines: Vec::new(),
        };
        let mut current: Option<Pending> = None;
        let finish = |cur: Option<Pending>, engines: &mut Vec<EngineConfig>| -> Result<()> {
            if let Some((name, kind, address, data_dir, line)) = cur {
                let kind = kind.ok_or_else(|| err(line, format!("engine {name} has no kind")))?;
                let address = address.unwrap_or_else(|| name.clone());
                engines.push(EngineConfig {
                    name,
                    kind,
                    address,
                    data_dir,
                });
            }
            Ok(())
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            if let Some(section) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                let name = section
                    .trim()
                    .strip_prefix("engine:")
                    .ok_or_else(|| err(line, format!("unknown section [{section}]")))?
                    .trim();
                check_identifier(name).map_err(|e| err(line, e))?;
                finish(current.take(), &mut cfg.engines)?;
                current = Some((name.to_ascii_lowercase(), None, None, None, line));
                continue;
            }
            let (key, value) = s.split_once('=').ok_or_else(|| err(line, "expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            match (&mut current, key) {
                (None, "listen") => cfg.listen = value.to_string(),
                (None, "catalog") => cfg.catalog = value.to_ascii_lowercase(),
                (None, "log_level") => cfg.log_level = value.to_string(),
                (Some(e), "kind") => e.1 = Some(value.parse().map_err(|m: String| err(line, m))?),
                (Some(e), "address") => e.2 = Some(value.to_string()),
                (Some(e), "data_dir") => {
                    let p = PathBuf::from(value);
                    e.3 = Some(match base {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p,
                    });
                }
                _ => return Err(err(line, format!("unknown key {key:?}"))),
            }
        }
        finish(current.take(), &mut cfg.engines)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        let mut addresses = BTreeSet::new();
        for e in &self.engines {
            if !names.insert(e.name.to_ascii_lowercase()) {
                return Err(Error::Config(format!("duplicate engine name {}", e.name)));
            }
            if !addresses.insert(e.address.clone()) {
                return Err(Error::Config(format!("duplicate engine address {}", e.address)));
            }
        }
        let catalog = self
            .engines
            .iter()
            .find(|e| e.name.eq_ignore_ascii_case(&self.catalog))
            .ok_or_else(|| Error::Config(format!("catalog engine {:?} is not configured", self.catalog)))?;
        if catalog.kind != Island::Relational {
            return Err(Error::Config(format!("catalog engine {} must be relational", catalog.name)));
        }
        Ok(())
    }
}
