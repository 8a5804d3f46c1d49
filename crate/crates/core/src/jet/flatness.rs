//! Flatness of the projected sample hull: diameter over largest inscribed disk.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geom::PatchNeighborhood;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatnessDiagnostic {
    /// Diameter of the convex hull of the projected `(x, y)`.
    pub d_max: f64,
    /// Diameter of the largest disk inscribed in the hull.
    pub d_min: f64,
    pub ratio: f64,
}

pub fn flatness_ratio(patch: &PatchNeighborhood) -> Result<FlatnessDiagnostic> {
    if patch.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, have: patch.len() });
    }
    let xy: Vec<[f64; 2]> = patch.local_points().iter().map(|p| [p.x, p.y]).collect();
    flatness_of_points(&xy)
}

pub(crate) fn flatness_of_points(xy: &[[f64; 2]]) -> Result<FlatnessDiagnostic> {
    let hull = convex_hull(xy);
    if hull.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let d_max = diameter(&hull);
    if polygon_area(&hull) <= 1e-12 * d_max * d_max {
        return Err(Error::DegenerateHull);
    }
    let d_min = 2.0 * inscribed_radius(&hull);
    if d_min <= 0.0 {
        return Err(Error::DegenerateHull);
    }
    Ok(FlatnessDiagnostic { d_max, d_min, ratio: d_max / d_min })
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull without collinear vertices (monotone chain).
pub(crate) fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn diameter(hull: &[[f64; 2]]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, a) in hull.iter().enumerate() {
        for b in &hull[i + 1..] {
            best = best.max((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    best
}

fn polygon_area(hull: &[[f64; 2]]) -> f64 {
    let n = hull.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
}

/// Radius of the Chebyshev center of a CCW convex polygon.
///
/// Maximizes `r` subject to `n_e . c - r >= n_e . p_e` for every edge with
/// inward unit normal `n_e`. The optimum of this 3-variable LP sits at a
/// vertex where three edge constraints are tight, so all edge triples are
/// enumerated.
fn inscribed_radius(hull: &[[f64; 2]]) -> f64 {
    let n = hull.len();
    let edges: Vec<([f64; 2], f64)> = (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            let normal = [-dy / len, dx / len];
            (normal, normal[0] * a[0] + normal[1] * a[1])
        })
        .collect();
    let scale = diameter(hull);
    let slack = 1e-12 * scale;
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let rows = [edges[i], edges[j], edges[k]];
                let m = Matrix3::from_fn(|r, c| match c {
                    0 => rows[r].0[0],
                    1 => rows[r].0[1],
                    _ => -1.0,
                });
                let rhs = Vector3::new(rows[0].1, rows[1].1, rows[2].1);
                let Some(sol) = m.lu().solve(&rhs) else { continue };
                let (cx, cy, r) = (sol[0], sol[1], sol[2]);
                if !(r > best) || !r.is_finite() {
                    continue;
                }
                let feasible = edges
                    .iter()
                    .all(|(nrm, off)| nrm[0] * cx + nrm[1] * cy - off >= r - slack);
                if feasible {
                    best = r;
                }
            }
        }
    }
    best
}
