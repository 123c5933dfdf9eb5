//! Small dense linear algebra helpers for d x d rate matrices.
//!
//! State dimensions here are tiny (typically 2..10), so plain row-major
//! `Vec<f64>` with Gaussian elimination is all that is needed.

/// Solve `a * x = b` for a square system by Gaussian elimination with
/// partial pivoting. Returns `None` when the matrix is numerically singular.
pub fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if m[pivot_row * n + col].abs() < 1e-14 {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[row * n + k] * x[k];
        }
        x[row] = acc / m[row * n + row];
    }
    Some(x)
}

/// Matrix exponential `exp(a * t)` by scaling and squaring with a Taylor
/// series on the scaled matrix.
pub fn matrix_exp(a: &[f64], n: usize, t: f64) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * n);
    let norm: f64 = (0..n)
        .map(|i| (0..n).map(|j| (a[i * n + j] * t).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = t / f64::powi(2.0, squarings as i32);
    let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();

    // exp(scaled) via Taylor; ||scaled|| <= 0.5 so ~20 terms reach 1e-16.
    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=24 {
        term = mat_mul(&term, &scaled, n);
        for v in term.iter_mut() {
            *v /= k as f64;
        }
        for (r, v) in result.iter_mut().zip(term.iter()) {
            *r += v;
        }
    }
    for _ in 0..squarings {
        result = mat_mul(&result, &result, n);
    }
    result
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

pub fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// `x^T * m` for a row vector x.
pub fn vec_mat(x: &[f64], m: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..n {
        let xi = x[i];
        for j in 0..n {
            out[j] += xi * m[i * n + j];
        }
    }
    out
}
