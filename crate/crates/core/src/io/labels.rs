use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One integer per line. Blank lines are only allowed at the end.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let body = text.trim_end();
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.lines()
        .enumerate()
        .map(|(i, line)| {
            line.trim().parse::<i64>().map_err(|e| Error::BadLabels {
                line: i + 1,
                reason: format!("{e} in {line:?}"),
            })
        })
        .collect()
}

/// Like [`read_labels`], but the file must label exactly `rows` rows.
pub fn read_labels_for(path: impl AsRef<Path>, rows: usize) -> Result<Vec<i64>> {
    let labels = read_labels(path)?;
    if labels.len() != rows {
        return Err(Error::BadLabels {
            line: labels.len().min(rows) + 1,
            reason: format!("{} labels for {rows} embedding rows", labels.len()),
        });
    }
    Ok(labels)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[i64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
