//! CSV writing shared by all outputs. Every file starts with a comment line
//! carrying the configuration digest.

use std::io::Write;

use crate::error::Result;

/// Writes `t` followed by the named columns.
pub fn write_table<W: Write>(
    out: &mut W,
    digest: &str,
    times: &[f64],
    columns: &[(String, Vec<f64>)],
) -> Result<()> {
    writeln!(out, "# config_digest: {digest}")?;
    write!(out, "t")?;
    for (name, _) in columns {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for (k, t) in times.iter().enumerate() {
        write!(out, "{t}")?;
        for (_, v) in columns {
            write!(out, ",{}", v[k])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Writes rows of arbitrary named fields.
pub fn write_rows<W: Write>(
    out: &mut W,
    digest: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    writeln!(out, "# config_digest: {digest}")?;
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Parses a table written by [`write_table`] back into its header and rows.
pub fn read_table(text: &str) -> (Option<String>, Vec<String>, Vec<Vec<f64>>) {
    let mut digest = None;
    let mut header = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# config_digest: ") {
            digest = Some(rest.to_string());
        } else if header.is_empty() {
            header = line.split(',').map(str::to_string).collect();
        } else if !line.is_empty() {
            rows.push(line.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect());
        }
    }
    (digest, header, rows)
}
