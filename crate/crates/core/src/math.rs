//! Dense slice kernels for the policy forward/backward passes.

/// `out = M x` for a row-major `rows x cols` matrix.
pub fn matvec_into(out: &mut [f64], m: &[f64], rows: usize, cols: usize, x: &[f64]) {
    debug_assert_eq!(out.len(), rows);
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x.iter()) {
            acc += a * b;
        }
        *o = acc;
    }
}

/// `out += M x`.
pub fn matvec_add(out: &mut [f64], m: &[f64], rows: usize, cols: usize, x: &[f64]) {
    debug_assert_eq!(out.len(), rows);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x.iter()) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `y += M^T a` for a row-major `rows x cols` matrix (so `y` has `cols` entries).
pub fn matvec_t_add(y: &mut [f64], m: &[f64], rows: usize, cols: usize, a: &[f64]) {
    debug_assert_eq!(y.len(), cols);
    debug_assert_eq!(a.len(), rows);
    for (r, &ar) in a.iter().enumerate().take(rows) {
        if ar == 0.0 {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (yc, &mc) in y.iter_mut().zip(row.iter()) {
            *yc += ar * mc;
        }
    }
}

/// `y += alpha * x`.
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}

/// `acc += a (x)^T`, accumulating a rank-one update into a row-major matrix.
pub fn outer_add(acc: &mut [f64], a: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(acc.len(), a.len() * cols);
    for (r, &ar) in a.iter().enumerate() {
        if ar == 0.0 {
            continue;
        }
        let row = &mut acc[r * cols..(r + 1) * cols];
        for (m, &xc) in row.iter_mut().zip(x.iter()) {
            *m += ar * xc;
        }
    }
}

/// Numerically safe in-place softmax; returns log of the normalizer so callers
/// can form log-probabilities as `logit - max - ln_z`.
pub fn softmax_in_place(logits: &mut [f64]) -> (f64, f64) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
    (max, sum.ln())
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_matches_hand_computation() {
        let m = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2 x 3
        let x = [1.0, 0.5, -1.0];
        let mut out = [0.0; 2];
        matvec_into(&mut out, &m, 2, 3, &x);
        assert_eq!(out, [1.0 + 1.0 - 3.0, 4.0 + 2.5 - 6.0]);

        let mut y = [1.0, 1.0, 1.0];
        matvec_t_add(&mut y, &m, 2, 3, &[1.0, 2.0]);
        assert_eq!(y, [1.0 + 1.0 + 8.0, 1.0 + 2.0 + 10.0, 1.0 + 3.0 + 12.0]);
    }

    #[test]
    fn softmax_normalizes_and_orders() {
        let mut v = [1.0, 2.0, 3.0];
        softmax_in_place(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(v[0] < v[1] && v[1] < v[2]);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let mut v = [1000.0, 1000.0, 999.0];
        softmax_in_place(&mut v);
        assert!(v.iter().all(|p| p.is_finite() && *p > 0.0));
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
