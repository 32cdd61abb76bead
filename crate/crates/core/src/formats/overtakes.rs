//! Overtake report, one confirmed record per line:
//! `track_id side start_frame end_frame`.

use std::fmt::Write as _;
use std::path::Path;

use crate::behaviour::{OvertakeRecord, Side};
use crate::error::{Error, Result};

pub fn format_overtakes(records: &[OvertakeRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let end = r.end_frame.unwrap_or(r.start_frame);
        let _ = writeln!(s, "{} {} {} {}", r.track_id, r.side.label(), r.start_frame, end);
    }
    s
}

pub fn parse_overtakes(text: &str, source_name: &str) -> Result<Vec<OvertakeRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| Error::parse(source_name, i + 1, m);
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 columns, found {}", cols.len())));
        }
        let id: u64 = cols[0].parse().map_err(|_| err(format!("bad track id `{}`", cols[0])))?;
        let side: Side = cols[1].parse().map_err(|e: Error| err(e.to_string()))?;
        let start: u32 = cols[2].parse().map_err(|_| err(format!("bad frame `{}`", cols[2])))?;
        let end: u32 = cols[3].parse().map_err(|_| err(format!("bad frame `{}`", cols[3])))?;
        if end < start {
            return Err(err(format!("end frame {end} before start frame {start}")));
        }
        out.push(OvertakeRecord::confirmed(id, side, start, end));
    }
    Ok(out)
}

pub fn read_overtakes(path: &Path) -> Result<Vec<OvertakeRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_overtakes(&text, &path.display().to_string())
}

pub fn write_overtakes(path: &Path, records: &[OvertakeRecord]) -> Result<()> {
    std::fs::write(path, format_overtakes(records)).map_err(|e| Error::io(path, e))
}
