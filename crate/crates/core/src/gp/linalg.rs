//! Dense row-major helpers for symmetric positive definite systems.

/// Jitter ladder tried after a plain factorization fails.
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_CEILING: f64 = 1e-4;

/// In-place lower Cholesky factor of the `n x n` row-major matrix `a`.
/// The strict upper triangle is zeroed. Returns the failing pivot on error.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<(), usize> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let row_j = j * n;
        let d = a[row_j + j] - dot(&a[row_j..row_j + j], &a[row_j..row_j + j]);
        if !(d > 0.0 && d.is_finite()) {
            return Err(j);
        }
        let d = d.sqrt();
        a[row_j + j] = d;
        a[row_j + j + 1..row_j + n].fill(0.0);
        for i in j + 1..n {
            let row_i = i * n;
            let s = a[row_i + j] - dot(&a[row_i..row_i + j], &a[row_j..row_j + j]);
            a[row_i + j] = s / d;
        }
    }
    Ok(())
}

#[inline]
/// Inner product with four independent accumulators, which lets the compiler
/// vectorize the loop while keeping the summation order fixed.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let split = n - n % 4;
    for (x, y) in a[..split].chunks_exact(4).zip(b[..split].chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for i in split..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Factorizes `a + jitter * I`, escalating the jitter by decades from
/// [`JITTER_START`] up to [`JITTER_CEILING`]. Returns the factor and the jitter used.
pub fn cholesky_with_jitter(a: &[f64], n: usize) -> Option<(Vec<f64>, f64, u32)> {
    let mut jitter = 0.0;
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        let mut l = a.to_vec();
        if jitter > 0.0 {
            for i in 0..n {
                l[i * n + i] += jitter;
            }
        }
        if cholesky_in_place(&mut l, n).is_ok() {
            return Some((l, jitter, attempts));
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_CEILING * (1.0 + 1e-9) {
            return None;
        }
    }
}

/// Solves `L x = b` in place.
pub fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        let mut s = b[i];
        for (k, lv) in row.iter().enumerate() {
            s -= lv * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `L^T x = b` in place.
pub fn solve_lower_transpose(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `(L L^T) x = b` in place.
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    solve_lower(l, n, b);
    solve_lower_transpose(l, n, b);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_small_spd() {
        let a = vec![4.0, 2.0, 2.0, 3.0];
        let mut l = a.clone();
        cholesky_in_place(&mut l, 2).unwrap();
        assert_eq!(l, vec![2.0, 0.0, 1.0, 2f64.sqrt()]);
        let mut b = vec![2.0, 1.0];
        cholesky_solve(&l, 2, &mut b);
        // A x = [2, 1] -> x = [0.5, 0]
        assert!((b[0] - 0.5).abs() < 1e-15 && b[1].abs() < 1e-15);
    }

    #[test]
    fn singular_needs_jitter() {
        let a = vec![1.0, 1.0, 1.0, 1.0];
        let (_, jitter, attempts) = cholesky_with_jitter(&a, 2).unwrap();
        assert!(jitter >= JITTER_START && jitter <= JITTER_CEILING);
        assert!(attempts > 1);
        let neg = vec![-1.0, 0.0, 0.0, -1.0];
        assert!(cholesky_with_jitter(&neg, 2).is_none());
    }
}
