//! Convex hulls of sampled gradient sets, normal cones of analytic
//! constraint sets, and cone-plus-hull membership tests with certificates.

mod cone;
mod frank_wolfe;
mod hull;

pub use cone::{normal_cone, AxisSign, ConeDescriptor, ConstraintSet};
pub use frank_wolfe::hull_distance;
pub use hull::{convex_hull_2d, HullApprox};

use crate::linalg;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Geometric tolerance for exact subroutines (deduplication, containment).
pub const GEOM_EPS: f64 = 1e-9;

/// Default membership tolerance for limit-set tests, where sampling error
/// dominates the geometry.
pub const LIMIT_SET_TOL: f64 = 5e-2;

/// A finite set of points in R^m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "point cloud",
                    t: f64::NAN,
                });
            }
        }
        Ok(PointCloud { dim, points })
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when every point is within `1e-12` of the first: the hull
    /// degenerates to a single point.
    pub fn is_degenerate(&self) -> bool {
        match self.points.split_first() {
            None => true,
            Some((first, rest)) => rest
                .iter()
                .all(|p| linalg::norm2(&linalg::sub(p, first)) <= 1e-12),
        }
    }
}

/// Outcome of a cone-plus-hull membership query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum MembershipCertificate {
    /// `p = cone_part + hull_part` within tolerance; `weights[i]` is the
    /// convex coefficient of generator `i`.
    Member {
        cone_part: Vec<f64>,
        hull_part: Vec<f64>,
        weights: Vec<f64>,
        gap: f64,
    },
    /// No decomposition found; `gap` is the final distance between
    /// `p - cone_part` and the hull.
    Witness { gap: f64, cone_part: Vec<f64> },
}

impl MembershipCertificate {
    pub fn gap(&self) -> f64 {
        match self {
            MembershipCertificate::Member { gap, .. } => *gap,
            MembershipCertificate::Witness { gap, .. } => *gap,
        }
    }
}

/// Decides whether there is a cone element `v` with
/// `dist(p - v, co(cloud)) <= tol`, by alternating projection between the
/// cone (closed form) and the hull (Frank–Wolfe). The gap sequence of the
/// alternating projection is non-increasing; a violation beyond roundoff
/// aborts with `NoConvergence`.
pub fn cone_plus_hull_membership(
    p: &[f64],
    cone: &ConeDescriptor,
    cloud: &PointCloud,
    tol: f64,
) -> Result<(bool, MembershipCertificate)> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("empty point cloud".into()));
    }
    if p.len() != cloud.dim {
        return Err(Error::DimensionMismatch {
            expected: cloud.dim,
            got: p.len(),
        });
    }

    let max_rounds = 500;
    let inner_tol = (tol * 1e-3).max(1e-12);
    let mut cone_part = vec![0.0; p.len()];
    let mut prev_gap = f64::INFINITY;
    let mut weights = vec![0.0; cloud.len()];
    let mut hull_part = vec![0.0; p.len()];

    for round in 0..max_rounds {
        // Project the residual onto the hull, then re-project onto the cone.
        let target = linalg::sub(p, &cone_part);
        let (gap, w, q) = frank_wolfe::project_onto_hull(&target, cloud, inner_tol)?;
        weights = w;
        hull_part = q;
        cone_part = cone.project(&linalg::sub(p, &hull_part));
        let residual = linalg::sub(&linalg::sub(p, &cone_part), &hull_part);
        let gap_now = linalg::norm2(&residual);

        if gap_now > prev_gap + 1e-9 {
            return Err(Error::NoConvergence {
                iterations: round,
                gap: gap_now,
            });
        }
        let stalled = (prev_gap - gap_now).abs() <= 1e-12 * gap_now.max(1.0);
        prev_gap = gap_now;
        let _ = gap;

        if gap_now <= tol {
            return Ok((
                true,
                MembershipCertificate::Member {
                    cone_part,
                    hull_part,
                    weights,
                    gap: gap_now,
                },
            ));
        }
        if stalled {
            return Ok((
                false,
                MembershipCertificate::Witness {
                    gap: gap_now,
                    cone_part,
                },
            ));
        }
    }
    let gap = linalg::norm2(&linalg::sub(&linalg::sub(p, &cone_part), &hull_part));
    if gap <= tol {
        Ok((
            true,
            MembershipCertificate::Member {
                cone_part,
                hull_part,
                weights,
                gap,
            },
        ))
    } else {
        Err(Error::NoConvergence {
            iterations: max_rounds,
            gap,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle_cloud(n: usize) -> PointCloud {
        // Samples of (sin th, 1 - cos th): the circle of radius 1 centered
        // at (0, 1).
        let points = (0..n)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / n as f64;
                vec![th.sin(), 1.0 - th.cos()]
            })
            .collect();
        PointCloud::new(2, points).unwrap()
    }

    #[test]
    fn zero_cone_reduces_to_hull_distance() {
        let cloud = circle_cloud(256);
        let cone = ConeDescriptor::zero(2);
        // Inside the disk.
        let (member, cert) = cone_plus_hull_membership(&[0.0, 0.5], &cone, &cloud, 5e-2).unwrap();
        assert!(member, "gap {}", cert.gap());
        // Far outside.
        let (member, cert) = cone_plus_hull_membership(&[0.0, 3.0], &cone, &cloud, 5e-2).unwrap();
        assert!(!member);
        assert!((cert.gap() - 1.0).abs() < 1e-2, "gap {}", cert.gap());
    }

    #[test]
    fn disk_membership_inside_and_outside() {
        let cloud = circle_cloud(256);
        let cone = ConeDescriptor::zero(2);
        // p = (0,1) - C with ||C|| = 0.9: inside the disk.
        let c = [0.9 * 0.6, 0.9 * 0.8];
        let p = [0.0 - c[0], 1.0 - c[1]];
        let (member, _) = cone_plus_hull_membership(&p, &cone, &cloud, 5e-2).unwrap();
        assert!(member);
        // ||C|| = 1.1: outside by about 0.1.
        let c = [1.1 * 0.6, 1.1 * 0.8];
        let p = [0.0 - c[0], 1.0 - c[1]];
        let (member, cert) = cone_plus_hull_membership(&p, &cone, &cloud, 5e-2).unwrap();
        assert!(!member);
        assert!((cert.gap() - 0.1).abs() < 2e-2, "gap {}", cert.gap());
    }

    #[test]
    fn half_line_cone_absorbs_negative_part() {
        // Cloud {0} in R^1, cone = (-inf, 0]; p = -1 decomposes as cone
        // element -1 plus hull element 0.
        let cloud = PointCloud::new(1, vec![vec![0.0]]).unwrap();
        let cone = ConeDescriptor::coordinate(vec![AxisSign::NonPos]);
        let (member, cert) = cone_plus_hull_membership(&[-1.0], &cone, &cloud, 1e-6).unwrap();
        assert!(member);
        match cert {
            MembershipCertificate::Member { cone_part, .. } => {
                assert!((cone_part[0] + 1.0).abs() < 1e-9)
            }
            _ => panic!("expected member certificate"),
        }
        let (member, cert) = cone_plus_hull_membership(&[1.0], &cone, &cloud, 1e-6).unwrap();
        assert!(!member);
        assert!((cert.gap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn three_dimensional_membership_uses_generators_only() {
        // Simplex corners in R^3: membership decisions come straight from
        // the Frank-Wolfe projection, no facet enumeration.
        let cloud = PointCloud::new(
            3,
            vec![
                vec![0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        )
        .unwrap();
        let cone = ConeDescriptor::zero(3);
        let (member, _) =
            cone_plus_hull_membership(&[0.25, 0.25, 0.25], &cone, &cloud, 1e-6).unwrap();
        assert!(member);
        // Point beyond the face x + y + z = 1: the distance is the plane
        // distance (2 - 1)/sqrt(3).
        let p = [2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        let (member, cert) = cone_plus_hull_membership(&p, &cone, &cloud, 1e-3).unwrap();
        assert!(!member);
        let want = 1.0 / 3f64.sqrt();
        assert!((cert.gap() - want).abs() < 1e-6, "gap {}", cert.gap());
        // A nonnegative coordinate cone absorbs the excess.
        let octant =
            ConeDescriptor::coordinate(vec![AxisSign::NonNeg, AxisSign::NonNeg, AxisSign::NonNeg]);
        let (member, _) = cone_plus_hull_membership(&p, &octant, &cloud, 1e-6).unwrap();
        assert!(member);
    }

    #[test]
    fn membership_monotone_in_tol() {
        let cloud = circle_cloud(64);
        let cone = ConeDescriptor::zero(2);
        let p = [0.0, 2.05];
        let tols = [1e-3, 2e-2, 6e-2, 0.2];
        let mut previous = false;
        for tol in tols {
            let (member, _) = cone_plus_hull_membership(&p, &cone, &cloud, tol).unwrap();
            assert!(!previous || member, "membership must be monotone in tol");
            previous = member;
        }
        assert!(previous, "largest tolerance must accept");
    }
}
