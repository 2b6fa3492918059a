//! The diagnostics CSV format: a fixed header, 17-significant-digit floats
//! (enough to round-trip every f64 bit-exactly), LF line endings,
//! append-safe writes.

use std::io::Write;
use std::path::Path;

use crate::diagnostics::DiagnosticsRecord;

pub const CSV_HEADER: &str = "t,mass,px,py,pz,energy,H,l2_f,nu_norm_f,min_F,max_F";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn record_line(r: &DiagnosticsRecord) -> String {
    [
        fmt(r.t),
        fmt(r.mass),
        fmt(r.momentum[0]),
        fmt(r.momentum[1]),
        fmt(r.momentum[2]),
        fmt(r.energy),
        fmt(r.h),
        fmt(r.l2_f),
        fmt(r.nu_norm_f),
        fmt(r.min_f),
        fmt(r.max_f),
    ]
    .join(",")
}

/// Writes header plus one line per record.
pub fn write_diagnostics_csv(records: &[DiagnosticsRecord], mut w: impl Write) -> std::io::Result<()> {
    w.write_all(CSV_HEADER.as_bytes())?;
    w.write_all(b"\n")?;
    for r in records {
        w.write_all(record_line(r).as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_diagnostics_csv(records: &[DiagnosticsRecord], path: &Path) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_diagnostics_csv(records, &mut w)
}

/// Appends records to an existing CSV (writing the header only if the file
/// is new or empty).
pub fn append_diagnostics_csv(records: &[DiagnosticsRecord], path: &Path) -> std::io::Result<()> {
    let need_header = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = std::io::BufWriter::new(file);
    if need_header {
        w.write_all(CSV_HEADER.as_bytes())?;
        w.write_all(b"\n")?;
    }
    for r in records {
        w.write_all(record_line(r).as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a diagnostics CSV produced by this module.
pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<DiagnosticsRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(format!("bad header: {other:?}")),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(format!("line {}: expected 11 fields, got {}", i + 2, fields.len()));
        }
        let v: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let v = v.map_err(|e| format!("line {}: {e}", i + 2))?;
        out.push(DiagnosticsRecord {
            t: v[0],
            mass: v[1],
            momentum: [v[2], v[3], v[4]],
            energy: v[5],
            h: v[6],
            l2_f: v[7],
            nu_norm_f: v[8],
            min_f: v[9],
            max_f: v[10],
        });
    }
    Ok(out)
}
