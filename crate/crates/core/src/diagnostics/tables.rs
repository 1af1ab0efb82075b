//! CSV output for every diagnostic. Comment lines start with `#`.

use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

/// Writes `# comment` lines, a header and numeric rows.
pub fn write_csv(
    path: &Path,
    comments: &[String],
    header: &[String],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut buf = Vec::new();
    for c in comments {
        writeln!(buf, "# {c}").expect("in-memory write");
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(|e| Error::artifact(path, e.to_string()))?;
        for row in rows {
            if row.len() != header.len() {
                return Err(Error::InvalidInput(format!(
                    "row of {} values for {} columns in {}",
                    row.len(),
                    header.len(),
                    path.display()
                )));
            }
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| Error::artifact(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads back a table written by [`write_csv`]: header and rows, comments skipped.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::artifact(path, e.to_string()))?;
    let header = r
        .headers()
        .map_err(|e| Error::artifact(path, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::artifact(path, e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::artifact(path, e.to_string()))?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `prefix_0, prefix_1, …` for each component.
pub fn per_component(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("{prefix}_{k}")).collect()
}
