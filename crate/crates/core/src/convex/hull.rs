//! Planar convex hulls via the Andrew monotone chain.

use super::PointCloud;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// A convex hull approximation: the generating cloud plus, in the plane,
/// the ordered extreme points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HullApprox {
    pub dim: usize,
    pub generators: PointCloud,
    /// Counterclockwise extreme points; populated only when `dim == 2`.
    pub vertices2d: Option<Vec<[f64; 2]>>,
}

/// Cross product of (b - a) x (c - a).
fn cross(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Hull of a planar cloud. Duplicate points are merged at `1e-12`;
/// collinear interior points are dropped; vertices come out
/// counterclockwise starting from the lexicographic minimum.
pub fn convex_hull_2d(cloud: &PointCloud) -> Result<HullApprox> {
    if cloud.dim != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: cloud.dim,
        });
    }
    if cloud.is_empty() {
        return Err(Error::InvalidInput("empty point cloud".into()));
    }

    let mut pts: Vec<[f64; 2]> = cloud.points.iter().map(|p| [p[0], p[1]]).collect();
    // Lexicographic (x, then y) ordering; ties broken deterministically.
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);

    if pts.len() == 1 {
        return Ok(HullApprox {
            dim: 2,
            generators: cloud.clone(),
            vertices2d: Some(pts),
        });
    }

    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    let mut vertices = lower;
    vertices.extend(upper);
    if vertices.is_empty() {
        // All points collinear: keep the two extremes.
        vertices = vec![pts[0], *pts.last().unwrap()];
    }
    Ok(HullApprox {
        dim: 2,
        generators: cloud.clone(),
        vertices2d: Some(vertices),
    })
}

impl HullApprox {
    /// Exact point-in-polygon test against `vertices2d` (planar hulls only),
    /// with `tol`-fattened boundary.
    pub fn contains_2d(&self, p: &[f64], tol: f64) -> Result<bool> {
        let verts = self
            .vertices2d
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("no planar vertices".into()))?;
        let q = [p[0], p[1]];
        if verts.len() == 1 {
            let d = ((q[0] - verts[0][0]).powi(2) + (q[1] - verts[0][1]).powi(2)).sqrt();
            return Ok(d <= tol);
        }
        if verts.len() == 2 {
            return Ok(dist_to_segment(q, verts[0], verts[1]) <= tol);
        }
        let mut inside = true;
        for i in 0..verts.len() {
            let a = verts[i];
            let b = verts[(i + 1) % verts.len()];
            if cross(a, b, q) < 0.0 {
                inside = false;
                break;
            }
        }
        if inside {
            return Ok(true);
        }
        let min_d = (0..verts.len())
            .map(|i| dist_to_segment(q, verts[i], verts[(i + 1) % verts.len()]))
            .fold(f64::INFINITY, f64::min);
        Ok(min_d <= tol)
    }
}

fn dist_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let s = if len2 == 0.0 {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + s * ab[0], a[1] + s * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}
