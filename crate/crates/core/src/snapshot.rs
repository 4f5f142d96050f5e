//! One-file-per-object snapshot directories shared by the three engines.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TEMP_PREFIX: &str = "__bdtemp_";

/// Writes `objects` as `<name>.<ext>` files and removes any other `*.ext`
/// file left from a previous flush.
pub(crate) fn write_dir(dir: &Path, ext: &str, objects: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, text) in objects {
        let path = dir.join(format!("{name}.{ext}"));
        let tmp = dir.join(format!(".{name}.{ext}.tmp"));
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path)?;
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if !objects.iter().any(|(n, _)| n == stem) {
            fs::remove_file(&path)?;
        }
    }
    Ok(())
}

pub(crate) fn read_dir(dir: &Path, ext: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if stem.starts_with('.') {
            continue;
        }
        out.push((stem.to_string(), fs::read_to_string(&path)?));
    }
    out.sort();
    Ok(out)
}

/// Splits off the first line (without its LF).
pub(crate) fn take_line<'a>(text: &'a str, file: &str) -> Result<(&'a str, &'a str)> {
    text.split_once('\n').ok_or_else(|| Error::Snapshot {
        file: file.to_string(),
        reason: "truncated".into(),
    })
}

pub(crate) fn expect_header<'a>(text: &'a str, header: &str, file: &str) -> Result<&'a str> {
    let (line, rest) = take_line(text, file)?;
    if line != header {
        return Err(Error::Snapshot {
            file: file.to_string(),
            reason: format!("expected header {header:?}, found {line:?}"),
        });
    }
    Ok(rest)
}

pub(crate) fn annotate(file: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Snapshot { reason, .. } => Error::Snapshot {
            file: file.to_string(),
            reason,
        },
        other => Error::Snapshot {
            file: file.to_string(),
            reason: other.to_string(),
        },
    }
}
