//! ASCII `.xyz` / `.normals` triples and PLY error heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud, UnitVector3, Vec3};

/// Default upper end of the heatmap color scale, degrees.
pub const HEATMAP_MAX_DEG: f64 = 60.0;

/// Parses whitespace-separated triples. Blank lines and lines starting with
/// `#` are skipped; line numbers in errors are 1-based.
pub fn parse_triples(text: &str) -> Result<Vec<[f64; 3]>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let malformed = |msg: String| Error::MalformedLine { line: i + 1, msg };
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(malformed(format!("expected 3 values, found {}", fields.len())));
        }
        let mut v = [0.0; 3];
        for (slot, f) in v.iter_mut().zip(&fields) {
            let x: f64 = f.parse().map_err(|_| malformed(format!("not a number: {f:?}")))?;
            if !x.is_finite() {
                return Err(malformed(format!("non-finite value: {f:?}")));
            }
            *slot = x;
        }
        out.push(v);
    }
    Ok(out)
}

/// One line per triple, shortest decimal form that parses back to the same bits.
pub fn format_triples<'a>(rows: impl IntoIterator<Item = &'a [f64; 3]>) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(s, "{} {} {}", r[0], r[1], r[2]);
    }
    s
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let rows = parse_triples(&fs::read_to_string(path)?)?;
    PointCloud::new(rows.iter().map(|r| Point3::new(r[0], r[1], r[2])).collect())
}

pub fn write_xyz(path: impl AsRef<Path>, points: &[Point3]) -> Result<()> {
    let rows: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
    fs::write(path, format_triples(&rows))?;
    Ok(())
}

pub fn read_normals(path: impl AsRef<Path>) -> Result<Vec<UnitVector3>> {
    let rows = parse_triples(&fs::read_to_string(path)?)?;
    rows.iter().map(|r| UnitVector3::try_new(Vec3::new(r[0], r[1], r[2]))).collect()
}

pub fn write_normals(path: impl AsRef<Path>, normals: &[UnitVector3]) -> Result<()> {
    let rows: Vec<[f64; 3]> = normals.iter().map(|n| [n.x(), n.y(), n.z()]).collect();
    fs::write(path, format_triples(&rows))?;
    Ok(())
}

/// Blue at 0, red at `max_deg` and beyond.
pub fn error_color(error_deg: f64, max_deg: f64) -> [u8; 3] {
    let t = (error_deg / max_deg).clamp(0.0, 1.0);
    let t = if t.is_nan() { 1.0 } else { t };
    [(255.0 * t).round() as u8, 0, (255.0 * (1.0 - t)).round() as u8]
}

pub fn error_ply(points: &[Point3], errors: &[f64], max_deg: f64) -> Result<String> {
    if points.len() != errors.len() {
        return Err(Error::LengthMismatch { expected: points.len(), got: errors.len() });
    }
    if !(max_deg > 0.0) || !max_deg.is_finite() {
        return Err(Error::InvalidArgument(format!("max_deg must be > 0, got {max_deg}")));
    }
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        points.len()
    );
    for (p, &e) in points.iter().zip(errors) {
        let [r, g, b] = error_color(e, max_deg);
        let _ = writeln!(s, "{} {} {} {r} {g} {b}", p.x as f32, p.y as f32, p.z as f32);
    }
    Ok(s)
}

pub fn write_error_ply(path: impl AsRef<Path>, cloud: &PointCloud, errors: &[f64], max_deg: f64) -> Result<()> {
    fs::write(path, error_ply(cloud.points(), errors, max_deg)?)?;
    Ok(())
}
