//! Report plumbing shared by the experiment harness and the CLI:
//! schema versioning, config fingerprints, and markdown table rendering.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Version stamp written at the top level of every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// 64-bit FNV-1a fingerprint, hex encoded. Used to tie a report back to
/// the exact configuration that produced it.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Fingerprint of any serializable configuration.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_string(config)?;
    Ok(fnv1a_hex(json.as_bytes()))
}

/// Seconds since the Unix epoch; zero if the clock is set before it.
pub fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Renders a GitHub-style markdown table with padded columns.
pub fn markdown_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (j, cell) in row.iter().enumerate().take(cols) {
            widths[j] = widths[j].max(cell.len());
        }
    }
    let mut out = String::new();
    let render_row = |cells: &[String], widths: &[usize]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    out.push_str(&render_row(headers, &widths));
    let dashes: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&render_row(&dashes, &widths));
    for row in rows {
        let mut cells = row.clone();
        cells.resize(cols, String::new());
        out.push_str(&render_row(&cells, &widths));
    }
    out
}

/// Writes a value as pretty JSON, trailing newline included.
pub fn write_json<T: Serialize, P: AsRef<Path>>(value: &T, path: P) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Fixed-precision float cell used in rendered tables.
pub fn fmt_cell(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e5 || v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}
