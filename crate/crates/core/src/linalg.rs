//! Small dense kernels used on Gram submatrices.

/// In-place lower Cholesky factor of the row-major `n × n` matrix `a`.
///
/// Fails with the offending pivot index when a pivot drops below
/// `rel_tol × max(diag(a))`.
pub(crate) fn cholesky(a: &mut [f64], n: usize, rel_tol: f64) -> Result<(), usize> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max);
    let floor = rel_tol * max_diag;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > floor) {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L y = b` in place for a lower-triangular row-major `l`.
pub(crate) fn forward_substitute(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `L^T x = y` in place.
pub(crate) fn backward_substitute(l: &[f64], n: usize, y: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
}

/// Solves the SPD system `a x = b`. Returns `None` when the factorization fails.
pub(crate) fn spd_solve(a: &[f64], n: usize, b: &[f64], rel_tol: f64) -> Option<Vec<f64>> {
    let mut l = a.to_vec();
    cholesky(&mut l, n, rel_tol).ok()?;
    let mut x = b.to_vec();
    forward_substitute(&l, n, &mut x);
    backward_substitute(&l, n, &mut x);
    Some(x)
}
