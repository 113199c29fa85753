//! Small dense linear algebra helpers.
#![allow(dead_code)] // a few helpers are exercised only from test code
//!
//! State dimensions here are tiny (the built-in models have m <= 2), so
//! everything is plain row-major `Vec<f64>` with no blocking.

/// Row-major m x m matrix times column vector.
pub fn mat_vec(a: &[f64], x: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for i in 0..m {
        let row = &a[i * m..(i + 1) * m];
        out[i] = dot(row, x);
    }
    out
}

/// Row vector times row-major m x m matrix.
pub fn row_mat(x: &[f64], a: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for j in 0..m {
        let mut s = 0.0;
        for i in 0..m {
            s += x[i] * a[i * m + j];
        }
        out[j] = s;
    }
    out
}

/// Row-major matrix product of two m x m matrices.
pub fn mat_mat(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn identity(m: usize) -> Vec<f64> {
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        a[i * m + i] = 1.0;
    }
    a
}

/// 1-norm (max column sum) of a row-major m x m matrix.
pub fn norm1_mat(a: &[f64], m: usize) -> f64 {
    (0..m)
        .map(|j| (0..m).map(|i| a[i * m + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solve `A x = b` for a small dense system by Gaussian elimination with
/// partial pivoting. Returns `None` when the matrix is numerically singular.
pub fn solve(a: &[f64], b: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut lu = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..m {
        let mut piv = col;
        let mut best = lu[col * m + col].abs();
        for r in col + 1..m {
            let v = lu[r * m + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..m {
                lu.swap(col * m + j, piv * m + j);
            }
            x.swap(col, piv);
        }
        let d = lu[col * m + col];
        for r in col + 1..m {
            let f = lu[r * m + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..m {
                lu[r * m + j] -= f * lu[col * m + j];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..m).rev() {
        let mut s = x[col];
        for j in col + 1..m {
            s -= lu[col * m + j] * x[j];
        }
        x[col] = s / lu[col * m + col];
    }
    Some(x)
}

/// Inverse of a small row-major matrix, or `None` if singular.
pub fn invert(a: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    let mut e = vec![0.0; m];
    for j in 0..m {
        e.fill(0.0);
        e[j] = 1.0;
        let col = solve(a, &e, m)?;
        for i in 0..m {
            inv[i * m + j] = col[i];
        }
    }
    Some(inv)
}

/// Solve `x^T A = b^T`, i.e. `A^T x = b`, for a row co-vector.
pub fn solve_row(a: &[f64], b: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut at = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            at[j * m + i] = a[i * m + j];
        }
    }
    solve(&at, b, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_recovers_known_solution() {
        let a = [4.0, 1.0, 2.0, 3.0];
        let x = [1.5, -2.0];
        let b = mat_vec(&a, &x, 2);
        let got = solve(&a, &b, 2).unwrap();
        assert!((got[0] - x[0]).abs() < 1e-12);
        assert!((got[1] - x[1]).abs() < 1e-12);
    }

    #[test]
    fn invert_roundtrip() {
        let a = [2.0, 1.0, 0.5, -1.0, 3.0, 2.0, 0.0, 1.0, 1.5];
        let inv = invert(&a, 3).unwrap();
        let prod = mat_mat(&a, &inv, 3);
        let id = identity(3);
        for (p, i) in prod.iter().zip(&id) {
            assert!((p - i).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(solve(&a, &[1.0, 1.0], 2).is_none());
    }
}
