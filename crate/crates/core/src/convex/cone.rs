//! Analytic constraint-set descriptors and their limiting normal cones.

use crate::linalg;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Analytic description of a boundary set (initial set or asymptotic
/// terminal set). `Box` bounds may be infinite; `[a, inf)` half-lines are
/// boxes with unbounded upper entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSet {
    WholeSpace { dim: usize },
    Point { point: Vec<f64> },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl ConstraintSet {
    pub fn whole_space(dim: usize) -> Self {
        ConstraintSet::WholeSpace { dim }
    }

    pub fn point(p: &[f64]) -> Self {
        ConstraintSet::Point { point: p.to_vec() }
    }

    /// Product of half-lines `[a_i, inf)`.
    pub fn half_lines(lower: &[f64]) -> Self {
        ConstraintSet::Box {
            lower: lower.to_vec(),
            upper: vec![f64::INFINITY; lower.len()],
        }
    }

    pub fn bounded_box(lower: &[f64], upper: &[f64]) -> Self {
        ConstraintSet::Box {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::WholeSpace { dim } => *dim,
            ConstraintSet::Point { point } => point.len(),
            ConstraintSet::Box { lower, .. } => lower.len(),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            ConstraintSet::WholeSpace { .. } => true,
            ConstraintSet::Point { point } => linalg::norm2(&linalg::sub(x, point)) <= tol,
            ConstraintSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ConstraintSet::WholeSpace { .. } => x.to_vec(),
            ConstraintSet::Point { point } => point.clone(),
            ConstraintSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
                .collect(),
        }
    }
}

/// Per-axis sign constraint of a coordinate cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisSign {
    Free,
    NonNeg,
    NonPos,
    Zero,
}

/// A closed convex cone with a closed-form projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeDescriptor {
    ZeroCone { dim: usize },
    FullSpace { dim: usize },
    Coordinate { signs: Vec<AxisSign> },
    Polyhedral { dim: usize, rays: Vec<Vec<f64>> },
}

impl ConeDescriptor {
    pub fn zero(dim: usize) -> Self {
        ConeDescriptor::ZeroCone { dim }
    }

    pub fn full(dim: usize) -> Self {
        ConeDescriptor::FullSpace { dim }
    }

    pub fn coordinate(signs: Vec<AxisSign>) -> Self {
        ConeDescriptor::Coordinate { signs }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConeDescriptor::ZeroCone { dim } | ConeDescriptor::FullSpace { dim } => *dim,
            ConeDescriptor::Coordinate { signs } => signs.len(),
            ConeDescriptor::Polyhedral { dim, .. } => *dim,
        }
    }

    /// True when the cone is `{0}`.
    pub fn is_zero(&self) -> bool {
        match self {
            ConeDescriptor::ZeroCone { .. } => true,
            ConeDescriptor::Coordinate { signs } => signs.iter().all(|s| *s == AxisSign::Zero),
            ConeDescriptor::Polyhedral { rays, .. } => rays.is_empty(),
            ConeDescriptor::FullSpace { .. } => false,
        }
    }

    /// Euclidean projection onto the cone. Coordinate cones clamp per
    /// axis; polyhedral cones solve a small nonnegative least-squares
    /// problem over the generator rays.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        match self {
            ConeDescriptor::ZeroCone { dim } => vec![0.0; *dim],
            ConeDescriptor::FullSpace { .. } => v.to_vec(),
            ConeDescriptor::Coordinate { signs } => v
                .iter()
                .zip(signs)
                .map(|(&x, s)| match s {
                    AxisSign::Free => x,
                    AxisSign::NonNeg => x.max(0.0),
                    AxisSign::NonPos => x.min(0.0),
                    AxisSign::Zero => 0.0,
                })
                .collect(),
            ConeDescriptor::Polyhedral { dim, rays } => {
                if rays.is_empty() {
                    return vec![0.0; *dim];
                }
                let coeffs = nnls(rays, v, *dim);
                let mut out = vec![0.0; *dim];
                for (a, ray) in coeffs.iter().zip(rays) {
                    for (o, r) in out.iter_mut().zip(ray) {
                        *o += a * r;
                    }
                }
                out
            }
        }
    }

    /// Distance from `v` to the cone.
    pub fn distance(&self, v: &[f64]) -> f64 {
        linalg::norm2(&linalg::sub(v, &self.project(v)))
    }
}

/// Limiting normal cone `N(x; set)` of an analytic descriptor at a point of
/// the set. Interior points give the zero cone; a singleton gives the whole
/// space; box faces give outward coordinate cones.
pub fn normal_cone(set: &ConstraintSet, x: &[f64], tol: f64) -> Result<ConeDescriptor> {
    if x.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: x.len(),
        });
    }
    if !set.contains(x, tol) {
        let violation = linalg::norm2(&linalg::sub(x, &set.project(x)));
        return Err(Error::PointNotInSet { violation });
    }
    Ok(match set {
        ConstraintSet::WholeSpace { dim } => ConeDescriptor::zero(*dim),
        ConstraintSet::Point { point } => ConeDescriptor::full(point.len()),
        ConstraintSet::Box { lower, upper } => {
            let signs = x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&lo, &hi))| {
                    let at_lower = (v - lo).abs() <= tol;
                    let at_upper = (v - hi).abs() <= tol;
                    match (at_lower, at_upper) {
                        (true, true) => AxisSign::Free,
                        (true, false) => AxisSign::NonPos,
                        (false, true) => AxisSign::NonNeg,
                        (false, false) => AxisSign::Zero,
                    }
                })
                .collect();
            ConeDescriptor::Coordinate { signs }
        }
    })
}

/// Nonnegative least squares `min ||R a - v||, a >= 0` by the active-set
/// method (Lawson–Hanson); ray counts here are tiny.
fn nnls(rays: &[Vec<f64>], v: &[f64], dim: usize) -> Vec<f64> {
    let n = rays.len();
    let mut active = vec![false; n];
    let mut coeffs = vec![0.0; n];
    for _outer in 0..(4 * n + 8) {
        // Residual and its correlation with each inactive ray.
        let mut r = v.to_vec();
        for (i, ray) in rays.iter().enumerate() {
            if coeffs[i] != 0.0 {
                for (rj, xj) in r.iter_mut().zip(ray) {
                    *rj -= coeffs[i] * xj;
                }
            }
        }
        let mut best = usize::MAX;
        let mut best_corr = 1e-12 * linalg::norm2(v).max(1.0);
        for (i, ray) in rays.iter().enumerate() {
            if active[i] {
                continue;
            }
            let corr = linalg::dot(ray, &r);
            if corr > best_corr {
                best_corr = corr;
                best = i;
            }
        }
        if best == usize::MAX {
            return coeffs;
        }
        active[best] = true;

        // Inner loop: solve the unconstrained problem on the active set and
        // step back if any coefficient turns negative.
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
            let k = idx.len();
            let mut gram = vec![0.0; k * k];
            let mut rhs = vec![0.0; k];
            for (a, &ia) in idx.iter().enumerate() {
                rhs[a] = linalg::dot(&rays[ia], v);
                for (b, &ib) in idx.iter().enumerate() {
                    gram[a * k + b] = linalg::dot(&rays[ia], &rays[ib]);
                }
            }
            // Tiny Tikhonov term guards rank-deficient ray sets.
            for a in 0..k {
                gram[a * k + a] += 1e-12;
            }
            let sol = match linalg::solve(&gram, &rhs, k) {
                Some(s) => s,
                None => return coeffs,
            };
            if sol.iter().all(|&s| s > -1e-12) {
                coeffs.fill(0.0);
                for (a, &ia) in idx.iter().enumerate() {
                    coeffs[ia] = sol[a].max(0.0);
                }
                break;
            }
            // Step toward the solution until the first coefficient hits zero.
            let mut alpha = 1.0f64;
            for (a, &ia) in idx.iter().enumerate() {
                if sol[a] < 0.0 {
                    let cur = coeffs[ia];
                    if cur - sol[a] > 0.0 {
                        alpha = alpha.min(cur / (cur - sol[a]));
                    }
                }
            }
            for (a, &ia) in idx.iter().enumerate() {
                coeffs[ia] += alpha * (sol[a] - coeffs[ia]);
                if coeffs[ia] <= 1e-14 {
                    coeffs[ia] = 0.0;
                    active[ia] = false;
                }
            }
        }
        let _ = dim;
    }
    coeffs
}
