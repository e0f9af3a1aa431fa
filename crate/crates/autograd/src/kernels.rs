//! Dense matrix kernels on row-major slices. All of them accumulate into
//! `out` rather than overwrite it.

use crate::scalar::Scalar;

/// `out[m×n] += a[m×k] · b[k×n]`
pub fn mm_nn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×n] += aᵀ · b` where `a` is stored as `[k×m]` and `b` as `[k×n]`.
pub fn mm_tn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        let a_row = &a[p * m..(p + 1) * m];
        for (i, &av) in a_row.iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×n] += a · bᵀ` where `a` is `[m×k]` and `b` is stored as `[n×k]`.
pub fn mm_nt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    let bt = transpose(b, n, k);
    mm_nn(a, &bt, m, k, n, out);
}

/// Transposes a row-major `[rows×cols]` matrix.
pub fn transpose<F: Scalar>(x: &[F], rows: usize, cols: usize) -> Vec<F> {
    debug_assert_eq!(x.len(), rows * cols);
    let mut out = vec![F::zero(); x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_layouts_agree() {
        // a: 2×3, b: 3×2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut nn = [0.0f64; 4];
        mm_nn(&a, &b, 2, 3, 2, &mut nn);
        assert_eq!(nn, [58.0, 64.0, 139.0, 154.0]);

        let mut tn = [0.0f64; 4];
        mm_tn(&transpose(&a, 2, 3), &b, 2, 3, 2, &mut tn);
        assert_eq!(tn, nn);

        let mut nt = [0.0f64; 4];
        mm_nt(&a, &transpose(&b, 3, 2), 2, 3, 2, &mut nt);
        assert_eq!(nt, nn);
    }
}
