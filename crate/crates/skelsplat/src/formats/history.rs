//! Loss history: a header line, then one `step, l1, dssim, total, psnr` record per step.

use std::fmt::Write as _;
use std::path::Path;

use skelsplat_core::fit::HistoryRecord;

use crate::error::{IoError, Result};
use crate::formats::text::{read_text, write_text};

pub const HEADER: &str = "# step, l1, dssim, total, psnr";

pub fn encode_history(records: &[HistoryRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{}, {}, {}, {}, {}", r.step, r.l1, r.dssim, r.total, r.psnr);
    }
    s
}

pub fn save_history(path: &Path, records: &[HistoryRecord]) -> Result<()> {
    write_text(path, &encode_history(records))
}

pub fn load_history(path: &Path) -> Result<Vec<HistoryRecord>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = || IoError::Parse { path: path.to_path_buf(), line: i + 1, message: "expected 5 comma-separated fields".into() };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        out.push(HistoryRecord {
            step: f[0].parse().map_err(|_| bad())?,
            l1: num(f[1])?,
            dssim: num(f[2])?,
            total: num(f[3])?,
            psnr: num(f[4])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_records() {
        let r = [HistoryRecord { step: 3, l1: 0.5, dssim: 0.25, total: 0.45, psnr: f64::INFINITY }];
        assert_eq!(encode_history(&r), "# step, l1, dssim, total, psnr\n3, 0.5, 0.25, 0.45, inf\n");
    }
}
