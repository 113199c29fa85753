//! Distance from a point to the convex hull of a finite generator set,
//! by Frank–Wolfe with away steps and exact line search.

use super::PointCloud;
use crate::linalg;
use crate::{Error, Result};

const MAX_ITERS: usize = 20_000;

/// Distance from `p` to `co(cloud)` together with the convex weights that
/// achieve it. The iteration stops when the Frank–Wolfe duality gap drops
/// below `tol^2`.
pub fn hull_distance(p: &[f64], cloud: &PointCloud, tol: f64) -> Result<(f64, Vec<f64>)> {
    let (dist, weights, _) = project_onto_hull(p, cloud, tol)?;
    Ok((dist, weights))
}

/// As [`hull_distance`], also returning the projection point itself.
pub fn project_onto_hull(
    p: &[f64],
    cloud: &PointCloud,
    tol: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("empty point cloud".into()));
    }
    if p.len() != cloud.dim {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim,
            got: p.len(),
        });
    }
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "hull projection query point",
            t: f64::NAN,
        });
    }
    let n = cloud.len();
    let m = cloud.dim;

    // Degenerate clouds collapse to a point; the projection is immediate.
    if cloud.is_degenerate() {
        let q = cloud.points[0].clone();
        let mut weights = vec![0.0; n];
        weights[0] = 1.0;
        return Ok((linalg::norm2(&linalg::sub(p, &q)), weights, q));
    }

    // Start at the nearest generator.
    let start = (0..n)
        .min_by(|&a, &b| {
            let da = linalg::norm2(&linalg::sub(&cloud.points[a], p));
            let db = linalg::norm2(&linalg::sub(&cloud.points[b], p));
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    let mut w = vec![0.0; n];
    w[start] = 1.0;

    // The duality gap of the squared-distance objective cannot settle below
    // roundoff on the problem's own scale.
    let scale = 1.0 + linalg::dot(p, p) + linalg::dot(&cloud.points[start], &cloud.points[start]);
    let gap_tol = (tol * tol).max(1e-14 * scale);
    let mut q = cloud.points[start].clone(); // q = Q w
    let mut grad = vec![0.0; n];

    for _ in 0..MAX_ITERS {
        let r = linalg::sub(&q, p); // gradient of 1/2 ||Qw - p||^2 in q
        for (i, point) in cloud.points.iter().enumerate() {
            grad[i] = linalg::dot(&r, point);
        }
        // Toward vertex: smallest directional value; away vertex: largest
        // among the active set.
        let s = argmin(&grad);
        let v = (0..n)
            .filter(|&i| w[i] > 0.0)
            .max_by(|&a, &b| grad[a].partial_cmp(&grad[b]).unwrap())
            .unwrap();

        let gw = linalg::dot(&grad, &w);
        let fw_gap = gw - grad[s];
        if fw_gap <= gap_tol {
            let dist = linalg::norm2(&r);
            return Ok((dist, w, q));
        }

        let away_gain = grad[v] - gw;
        let (dir_q, gamma_max, toward): (Vec<f64>, f64, bool) = if fw_gap >= away_gain {
            // d = e_s - w, so Q d = q_s - q.
            (linalg::sub(&cloud.points[s], &q), 1.0, true)
        } else {
            // d = w - e_v, max step keeps w_v nonnegative.
            let alpha = w[v];
            let gmax = if alpha < 1.0 {
                alpha / (1.0 - alpha)
            } else {
                1e16
            };
            (linalg::sub(&q, &cloud.points[v]), gmax, false)
        };

        // Exact line search for the quadratic objective.
        let denom = linalg::dot(&dir_q, &dir_q);
        if denom <= 1e-300 {
            let dist = linalg::norm2(&r);
            return Ok((dist, w, q));
        }
        let slope = linalg::dot(&r, &dir_q);
        let gamma = (-slope / denom).clamp(0.0, gamma_max);
        if gamma == 0.0 {
            let dist = linalg::norm2(&r);
            return Ok((dist, w, q));
        }

        if toward {
            for wi in w.iter_mut() {
                *wi *= 1.0 - gamma;
            }
            w[s] += gamma;
        } else {
            for wi in w.iter_mut() {
                *wi *= 1.0 + gamma;
            }
            w[v] -= gamma;
            if w[v] < 1e-15 {
                w[v] = 0.0;
            }
        }
        // Renormalize roundoff drift and refresh q = Q w.
        let total: f64 = w.iter().sum();
        for wi in w.iter_mut() {
            *wi /= total;
        }
        q.fill(0.0);
        debug_assert_eq!(q.len(), m);
        for (i, point) in cloud.points.iter().enumerate() {
            if w[i] == 0.0 {
                continue;
            }
            for j in 0..m {
                q[j] += w[i] * point[j];
            }
        }
    }

    let r = linalg::sub(&q, p);
    for (i, point) in cloud.points.iter().enumerate() {
        grad[i] = linalg::dot(&r, point);
    }
    let s = argmin(&grad);
    let fw_gap = linalg::dot(&grad, &w) - grad[s];
    if fw_gap <= gap_tol {
        Ok((linalg::norm2(&r), w, q))
    } else {
        Err(Error::NoConvergence {
            iterations: MAX_ITERS,
            gap: fw_gap,
        })
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle_cloud(n: usize) -> PointCloud {
        let points = (0..n)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / n as f64;
                vec![th.sin(), 1.0 - th.cos()]
            })
            .collect();
        PointCloud::new(2, points).unwrap()
    }

    #[test]
    fn generator_has_zero_distance_and_unit_weight() {
        let cloud =
            PointCloud::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.2]]).unwrap();
        let (d, w) = hull_distance(&[0.0, 1.0], &cloud, 1e-9).unwrap();
        assert!(d < 1e-12);
        assert!((w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_to_disk_from_outside() {
        let cloud = circle_cloud(256);
        let (d, _) = hull_distance(&[0.0, 2.2], &cloud, 1e-6).unwrap();
        assert!((d - 0.2).abs() < 1e-3, "distance {d}");
    }

    #[test]
    fn centroid_is_inside() {
        let cloud = circle_cloud(64);
        let mut centroid = vec![0.0; 2];
        for p in &cloud.points {
            centroid[0] += p[0] / 64.0;
            centroid[1] += p[1] / 64.0;
        }
        let (d, w) = hull_distance(&centroid, &cloud, 1e-6).unwrap();
        assert!(d < 1e-6, "distance {d}");
        let sum: f64 = w.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(w.iter().all(|&wi| wi >= 0.0));
    }

    #[test]
    fn degenerate_cloud_is_a_point_distance() {
        let cloud = PointCloud::new(
            2,
            vec![
                vec![0.5, 0.5],
                vec![0.5 + 1e-14, 0.5],
                vec![0.5, 0.5 - 1e-14],
            ],
        )
        .unwrap();
        let (d, w) = hull_distance(&[1.5, 0.5], &cloud, 1e-9).unwrap();
        assert!((d - 1.0).abs() < 1e-10);
        assert_eq!(w[0], 1.0);
    }
}
