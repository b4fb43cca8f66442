//! ASCII PLY point clouds with a per-vertex region tag: `0` face, `1` torso,
//! `2 + l` for limb `l`.

use std::fmt::Write as _;
use std::path::Path;

use skelsplat_core::densify::{PointCloud, Region};
use skelsplat_core::geometry::Vec3;

use crate::error::{IoError, Result};
use crate::formats::text::{read_text, write_text};

fn region_code(r: Region) -> Option<u8> {
    match r {
        Region::Face => Some(0),
        Region::Torso => Some(1),
        Region::Limb(l) => u8::try_from(l).ok().and_then(|l| l.checked_add(2)),
    }
}

pub fn encode_ply(pc: &PointCloud) -> std::result::Result<String, String> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", pc.len());
    s.push_str("property double x\nproperty double y\nproperty double z\nproperty uchar region\nend_header\n");
    for (p, &r) in pc.points.iter().zip(&pc.regions) {
        let code = region_code(r).ok_or_else(|| format!("region {r:?} does not fit in a uchar tag"))?;
        let _ = writeln!(s, "{} {} {} {}", p.x, p.y, p.z, code);
    }
    Ok(s)
}

pub fn save_ply(path: &Path, pc: &PointCloud) -> Result<()> {
    let text = encode_ply(pc).map_err(|m| IoError::format(path, m))?;
    write_text(path, &text)
}

pub fn load_ply(path: &Path) -> Result<PointCloud> {
    let text = read_text(path)?;
    let parse_err = |line: usize, message: String| IoError::Parse { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate();
    let expect = [
        "ply",
        "format ascii 1.0",
        "",
        "property double x",
        "property double y",
        "property double z",
        "property uchar region",
        "end_header",
    ];
    let mut count = 0usize;
    for want in expect {
        let Some((i, line)) = lines.next() else {
            return Err(parse_err(text.lines().count() + 1, "unexpected end of header".into()));
        };
        if want.is_empty() {
            count = line
                .strip_prefix("element vertex ")
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| parse_err(i + 1, "expected `element vertex <count>`".into()))?;
        } else if line.trim() != want {
            return Err(parse_err(i + 1, format!("expected `{want}`")));
        }
    }
    let mut pc = PointCloud::default();
    for (i, line) in lines.by_ref().take(count) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || parse_err(i + 1, "expected `x y z region`".into());
        if f.len() != 4 {
            return Err(bad());
        }
        let x: f64 = f[0].parse().map_err(|_| bad())?;
        let y: f64 = f[1].parse().map_err(|_| bad())?;
        let z: f64 = f[2].parse().map_err(|_| bad())?;
        let code: u8 = f[3].parse().map_err(|_| bad())?;
        pc.points.push(Vec3::new(x, y, z));
        pc.regions.push(match code {
            0 => Region::Face,
            1 => Region::Torso,
            c => Region::Limb(c as u32 - 2),
        });
    }
    if pc.len() != count {
        return Err(parse_err(text.lines().count(), format!("expected {count} vertices, found {}", pc.len())));
    }
    if let Some((i, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(i + 1, "data after the last vertex".into()));
    }
    Ok(pc)
}
