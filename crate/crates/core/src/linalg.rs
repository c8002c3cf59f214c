//! Small dense linear algebra on 7x7 matrices and dynamic row sets.

use crate::scalar::{identity_mat, zero_mat, Mat7, Real};

/// Determinant by LU with partial pivoting.
pub fn det7<S: Real>(m: &Mat7<S>) -> S {
    let mut a = *m;
    let mut det = S::one();
    for col in 0..7 {
        let mut piv = col;
        for r in col + 1..7 {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col] == S::zero() {
            return S::zero();
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        let p = a[col][col];
        det = det * p;
        for r in col + 1..7 {
            let factor = a[r][col] / p;
            if factor != S::zero() {
                for c in col..7 {
                    a[r][c] = a[r][c] - factor * a[col][c];
                }
            }
        }
    }
    det
}

/// Inverse by Gauss-Jordan elimination; `None` when a pivot vanishes.
pub fn inverse7<S: Real>(m: &Mat7<S>) -> Option<Mat7<S>> {
    let mut a = *m;
    let mut inv = identity_mat::<S>();
    let scale = m.iter().flatten().fold(S::zero(), |acc, x| acc.max(x.abs()));
    let tiny = scale * S::epsilon() * S::lit(16.0);
    for col in 0..7 {
        let mut piv = col;
        for r in col + 1..7 {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() <= tiny {
            return None;
        }
        a.swap(piv, col);
        inv.swap(piv, col);
        let p = a[col][col];
        for c in 0..7 {
            a[col][c] = a[col][c] / p;
            inv[col][c] = inv[col][c] / p;
        }
        for r in 0..7 {
            if r != col {
                let factor = a[r][col];
                if factor != S::zero() {
                    for c in 0..7 {
                        a[r][c] = a[r][c] - factor * a[col][c];
                        inv[r][c] = inv[r][c] - factor * inv[col][c];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Cholesky test: every pivot must exceed `pivot_tol` times the largest diagonal entry.
pub fn is_positive_definite<S: Real>(m: &Mat7<S>, pivot_tol: S) -> bool {
    let scale = (0..7).fold(S::zero(), |acc, i| acc.max(m[i][i].abs()));
    if scale == S::zero() || !scale.is_finite() {
        return false;
    }
    let mut l = zero_mat::<S>();
    for j in 0..7 {
        let mut d = m[j][j];
        for k in 0..j {
            d = d - l[j][k] * l[j][k];
        }
        if !(d > pivot_tol * scale) {
            return false;
        }
        let dj = d.sqrt();
        l[j][j] = dj;
        for i in j + 1..7 {
            let mut s = m[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            l[i][j] = s / dj;
        }
    }
    true
}

pub fn matmul7<S: Real>(a: &Mat7<S>, b: &Mat7<S>) -> Mat7<S> {
    let mut out = zero_mat::<S>();
    for i in 0..7 {
        for k in 0..7 {
            let aik = a[i][k];
            if aik != S::zero() {
                for j in 0..7 {
                    out[i][j] = out[i][j] + aik * b[k][j];
                }
            }
        }
    }
    out
}

pub fn transpose7<S: Real>(a: &Mat7<S>) -> Mat7<S> {
    let mut out = zero_mat::<S>();
    for i in 0..7 {
        for j in 0..7 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn matvec7<S: Real>(a: &Mat7<S>, v: &[S; 7]) -> [S; 7] {
    let mut out = [S::zero(); 7];
    for i in 0..7 {
        out[i] = (0..7).map(|j| a[i][j] * v[j]).sum();
    }
    out
}

pub fn trace7<S: Real>(a: &Mat7<S>) -> S {
    (0..7).map(|i| a[i][i]).sum()
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff7<S: Real>(a: &Mat7<S>, b: &Mat7<S>) -> S {
    let mut m = S::zero();
    for i in 0..7 {
        for j in 0..7 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

pub fn max_abs7<S: Real>(a: &Mat7<S>) -> S {
    a.iter().flatten().fold(S::zero(), |acc, x| acc.max(x.abs()))
}

/// Numerical rank of a row set by Gaussian elimination with full pivoting.
pub fn rank<S: Real>(rows: &[Vec<S>], rel_tol: S) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mut a: Vec<Vec<S>> = rows.to_vec();
    let n_rows = a.len();
    let n_cols = a[0].len();
    let scale = a.iter().flatten().fold(S::zero(), |acc, x| acc.max(x.abs()));
    if scale == S::zero() {
        return 0;
    }
    let tol = rel_tol * scale;
    let mut r = 0;
    let mut col_used = vec![false; n_cols];
    while r < n_rows {
        let mut best = (r, 0, S::zero());
        for (i, row) in a.iter().enumerate().skip(r) {
            for (j, x) in row.iter().enumerate() {
                if !col_used[j] && x.abs() > best.2 {
                    best = (i, j, x.abs());
                }
            }
        }
        if best.2 <= tol {
            break;
        }
        let (pi, pj, _) = best;
        a.swap(r, pi);
        col_used[pj] = true;
        let pivot_row = a[r].clone();
        let p = pivot_row[pj];
        for row in a.iter_mut().skip(r + 1) {
            let factor = row[pj] / p;
            if factor != S::zero() {
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x = *x - factor * *y;
                }
            }
        }
        r += 1;
    }
    r
}

/// Solves the square system `a x = b` with partial pivoting.
pub fn solve<S: Real>(a: &[Vec<S>], b: &[S]) -> Option<Vec<S>> {
    let n = b.len();
    let mut m: Vec<Vec<S>> = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[piv][col] == S::zero() {
            return None;
        }
        m.swap(piv, col);
        rhs.swap(piv, col);
        for r in col + 1..n {
            let factor = m[r][col] / m[col][col];
            if factor != S::zero() {
                for c in col..n {
                    let v = m[col][c];
                    m[r][c] = m[r][c] - factor * v;
                }
                rhs[r] = rhs[r] - factor * rhs[col];
            }
        }
    }
    let mut x = vec![S::zero(); n];
    for r in (0..n).rev() {
        let s: S = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Mat7<f64> {
        let mut m = [[0.0; 7]; 7];
        for i in 0..7 {
            for j in 0..7 {
                m[i][j] = 1.0 / (1.0 + i as f64 + j as f64) + if i == j { 2.0 } else { 0.0 };
            }
        }
        m
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = sample();
        let inv = inverse7(&m).unwrap();
        let id = matmul7(&m, &inv);
        assert!(max_abs_diff7(&id, &identity_mat()) < 1e-13);
    }

    #[test]
    fn det_of_diagonal() {
        let mut m = identity_mat::<f64>();
        m[2][2] = 3.0;
        m[5][5] = -0.5;
        assert!((det7(&m) + 1.5).abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut m = identity_mat::<f64>();
        assert!(is_positive_definite(&m, 1e-12));
        m[3][3] = -1.0;
        assert!(!is_positive_definite(&m, 1e-12));
        assert!(!is_positive_definite(&zero_mat::<f64>(), 1e-12));
    }

    #[test]
    fn rank_of_dependent_rows() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![0.0, 1.0, 1.0]];
        assert_eq!(rank(&rows, 1e-12), 2);
    }

    #[test]
    fn solve_small_system() {
        let a = vec![vec![2.0f64, 1.0], vec![1.0, 3.0]];
        let x = solve(&a, &[3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }
}
