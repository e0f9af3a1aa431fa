use crate::error::{Result, TensorError};
use crate::kernels::{mm_nn, mm_nt, mm_tn};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

impl<'t, F: Scalar> Var<'t, F> {
    /// Matrix product `self · rhs`.
    ///
    /// `self` may carry leading extents (`[..×m×k]`), which are flattened into
    /// rows; `rhs` must be a `[k×n]` matrix.
    pub fn matmul(&self, rhs: &Var<'t, F>) -> Result<Var<'t, F>> {
        let (ashape, bshape) = (self.shape(), rhs.shape());
        if ashape.is_empty() || bshape.len() != 2 || ashape[ashape.len() - 1] != bshape[0] {
            return Err(TensorError::dim("matmul", format!("{ashape:?} @ {bshape:?}")));
        }
        let k = bshape[0];
        let n = bshape[1];
        let m = self.value().numel() / k.max(1);
        let mut out_shape = ashape.to_vec();
        *out_shape.last_mut().unwrap() = n;

        let mut out = vec![F::zero(); m * n];
        mm_nn(self.data(), rhs.data(), m, k, n, &mut out);
        self.tape().add_macs((m * k * n) as u64);

        let (a, b) = (self.shared_value(), rhs.shared_value());
        self.tape().record("matmul", Tensor::new(out_shape, out)?, &[self, rhs], move |g, mask| {
            let ga = mask[0].then(|| {
                let mut da = vec![F::zero(); m * k];
                mm_nt(g, b.data(), m, n, k, &mut da);
                da
            });
            let gb = mask[1].then(|| {
                let mut db = vec![F::zero(); k * n];
                mm_tn(a.data(), g, k, m, n, &mut db);
                db
            });
            vec![ga, gb]
        })
    }

    /// Batched matrix product over matching leading extents.
    ///
    /// `self` is `[..×m×k]`; `rhs` is `[..×k×n]`, or `[..×n×k]` when
    /// `transpose_rhs` is set.
    pub fn bmm(&self, rhs: &Var<'t, F>, transpose_rhs: bool) -> Result<Var<'t, F>> {
        let (ashape, bshape) = (self.shape().to_vec(), rhs.shape().to_vec());
        let bad = || TensorError::dim("bmm", format!("{ashape:?} @ {bshape:?} (transpose_rhs={transpose_rhs})"));
        if ashape.len() < 2 || ashape.len() != bshape.len() {
            return Err(bad());
        }
        let nd = ashape.len();
        if ashape[..nd - 2] != bshape[..nd - 2] {
            return Err(bad());
        }
        let (m, k) = (ashape[nd - 2], ashape[nd - 1]);
        let (kb, n) = if transpose_rhs { (bshape[nd - 1], bshape[nd - 2]) } else { (bshape[nd - 2], bshape[nd - 1]) };
        if kb != k {
            return Err(bad());
        }
        let groups: usize = ashape[..nd - 2].iter().product();
        let mut out = vec![F::zero(); groups * m * n];
        for g in 0..groups {
            let a = &self.data()[g * m * k..(g + 1) * m * k];
            let b = &rhs.data()[g * k * n..(g + 1) * k * n];
            let o = &mut out[g * m * n..(g + 1) * m * n];
            if transpose_rhs {
                mm_nt(a, b, m, k, n, o);
            } else {
                mm_nn(a, b, m, k, n, o);
            }
        }
        self.tape().add_macs((groups * m * k * n) as u64);
        let mut out_shape = ashape[..nd - 2].to_vec();
        out_shape.extend([m, n]);

        let (av, bv) = (self.shared_value(), rhs.shared_value());
        self.tape().record("bmm", Tensor::new(out_shape, out)?, &[self, rhs], move |grad, mask| {
            let mut da = mask[0].then(|| vec![F::zero(); groups * m * k]);
            let mut db = mask[1].then(|| vec![F::zero(); groups * k * n]);
            for g in 0..groups {
                let a = &av.data()[g * m * k..(g + 1) * m * k];
                let b = &bv.data()[g * k * n..(g + 1) * k * n];
                let dg = &grad[g * m * n..(g + 1) * m * n];
                if let Some(da) = da.as_mut() {
                    let da = &mut da[g * m * k..(g + 1) * m * k];
                    if transpose_rhs {
                        // C = A Bᵀ, B: n×k  ⇒  dA = dC · B
                        mm_nn(dg, b, m, n, k, da);
                    } else {
                        mm_nt(dg, b, m, n, k, da);
                    }
                }
                if let Some(db) = db.as_mut() {
                    let db = &mut db[g * k * n..(g + 1) * k * n];
                    if transpose_rhs {
                        // dB = dCᵀ · A, shape n×k
                        mm_tn(dg, a, n, m, k, db);
                    } else {
                        mm_tn(a, dg, k, m, n, db);
                    }
                }
            }
            vec![da, db]
        })
    }
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor, TensorError};

    #[test]
    fn identity_product() {
        let tape = Tape::<f64>::new();
        let eye = tape.leaf(Tensor::from_f64(vec![2, 2], &[1., 0., 0., 1.]).unwrap(), false);
        let m = tape.leaf(Tensor::from_f64(vec![2, 2], &[1., 2., 3., 4.]).unwrap(), false);
        assert_eq!(eye.matmul(&m).unwrap().data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn row_times_column() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_f64(vec![1, 2], &[1., 2.]).unwrap(), false);
        let b = tape.leaf(Tensor::from_f64(vec![2, 1], &[3., 4.]).unwrap(), false);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn mismatched_inner_extent() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(vec![2, 3]), false);
        let b = tape.leaf(Tensor::zeros(vec![2, 3]), false);
        assert!(matches!(a.matmul(&b), Err(TensorError::Dimension { op: "matmul", .. })));
    }

    #[test]
    fn bmm_transposed_matches_explicit() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_f64(vec![1, 2, 2], &[1., 2., 3., 4.]).unwrap(), false);
        let b = tape.leaf(Tensor::from_f64(vec![1, 2, 2], &[5., 6., 7., 8.]).unwrap(), false);
        let c = a.bmm(&b, true).unwrap();
        // [[1,2],[3,4]] · [[5,7],[6,8]]
        assert_eq!(c.data(), &[17., 23., 39., 53.]);
    }

    #[test]
    fn macs_are_counted() {
        let tape = Tape::<f32>::new();
        let a = tape.leaf(Tensor::zeros(vec![3, 4]), false);
        let b = tape.leaf(Tensor::zeros(vec![4, 5]), false);
        a.matmul(&b).unwrap();
        assert_eq!(tape.mac_counts()["other"], 60);
    }
}
