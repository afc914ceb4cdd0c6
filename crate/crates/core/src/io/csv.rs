//! Minimal numeric CSV reader/writer for spectra and SRF tables.
//!
//! Comment lines start with `#`. A `# sensor: NAME` comment opens a new named section,
//! which lets several sensors share one file.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSection {
    pub name: Option<String>,
    pub header: Vec<String>,
    /// (1-based source line, values)
    pub rows: Vec<(usize, Vec<f64>)>,
}

pub fn parse_sections(text: &str) -> Result<Vec<CsvSection>> {
    let mut sections: Vec<CsvSection> = Vec::new();
    let mut pending_name: Option<String> = None;
    let mut current: Option<CsvSection> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim().trim_start_matches('\u{feff}');
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(name) = comment.trim().strip_prefix("sensor:") {
                if let Some(done) = current.take() {
                    sections.push(done);
                }
                pending_name = Some(name.trim().to_string());
            }
            continue;
        }
        match current.as_mut() {
            None => {
                let header: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                if header.first().map(String::as_str) != Some("wavelength_nm") {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "header must start with `wavelength_nm`".into(),
                    });
                }
                if header.len() < 2 || header.iter().any(String::is_empty) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "header needs at least one value column".into(),
                    });
                }
                current = Some(CsvSection { name: pending_name.take(), header, rows: Vec::new() });
            }
            Some(section) => {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != section.header.len() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected {} fields, found {}", section.header.len(), fields.len()),
                    });
                }
                let mut values = Vec::with_capacity(fields.len());
                for f in fields {
                    let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("`{}` is not a number", f.trim()),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse { line: line_no, message: "non-finite value".into() });
                    }
                    values.push(v);
                }
                if let Some((_, prev)) = section.rows.last() {
                    if values[0] <= prev[0] {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "wavelengths must be strictly increasing".into(),
                        });
                    }
                }
                section.rows.push((line_no, values));
            }
        }
    }
    if let Some(done) = current.take() {
        sections.push(done);
    }
    if sections.is_empty() {
        return Err(Error::Parse { line: 0, message: "no table found".into() });
    }
    for s in &sections {
        if s.rows.is_empty() {
            return Err(Error::Parse { line: 0, message: "table has a header but no rows".into() });
        }
    }
    Ok(sections)
}

/// Writes one table. Values use Rust's shortest round-trip formatting.
pub fn write_section(out: &mut String, name: Option<&str>, header: &[&str], rows: &[Vec<f64>]) {
    if let Some(n) = name {
        let _ = writeln!(out, "# sensor: {n}");
    }
    let _ = writeln!(out, "{}", header.join(","));
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
}
