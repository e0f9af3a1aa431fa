use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::{numel, Tensor};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For every output element of `x.permute(axes)`, the flat source index.
fn permutation_map(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let src_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let n = numel(shape);
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..n {
        map.push(idx.iter().zip(axes).map(|(&i, &a)| i * src_strides[a]).sum());
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    map
}

impl<'t, F: Scalar> Var<'t, F> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, F>> {
        if numel(shape) != self.value().numel() {
            return Err(TensorError::dim("reshape", format!("cannot view {:?} as {shape:?}", self.shape())));
        }
        let value = Tensor::new(shape.to_vec(), self.data().to_vec())?;
        self.tape().record("reshape", value, &[self], |g, _| vec![Some(g.to_vec())])
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Var<'t, F>> {
        let shape = self.shape().to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(TensorError::arg("permute", format!("{axes:?} is not a permutation of {} axes", shape.len())));
        }
        let map = permutation_map(&shape, axes);
        let src = self.data();
        let out: Vec<F> = map.iter().map(|&i| src[i]).collect();
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        self.tape().record("permute", Tensor::new(out_shape, out)?, &[self], move |g, _| {
            let mut dx = vec![F::zero(); g.len()];
            for (&src, &gv) in map.iter().zip(g) {
                dx[src] = gv;
            }
            vec![Some(dx)]
        })
    }

    /// Swaps the two trailing axes.
    pub fn transpose_last(&self) -> Result<Var<'t, F>> {
        let nd = self.shape().len();
        if nd < 2 {
            return Err(TensorError::arg("transpose_last", "needs at least two axes"));
        }
        let mut axes: Vec<usize> = (0..nd).collect();
        axes.swap(nd - 1, nd - 2);
        self.permute(&axes)
    }

    /// Repeats unit axes up to `shape` (same rank; each extent equal or 1).
    pub fn expand(&self, shape: &[usize]) -> Result<Var<'t, F>> {
        let src_shape = self.shape().to_vec();
        if src_shape.len() != shape.len() || src_shape.iter().zip(shape).any(|(&s, &t)| s != t && s != 1) {
            return Err(TensorError::dim("expand", format!("cannot expand {src_shape:?} to {shape:?}")));
        }
        let src_strides = strides(&src_shape);
        let n = numel(shape);
        let mut map = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            map.push(
                idx.iter()
                    .zip(&src_shape)
                    .zip(&src_strides)
                    .map(|((&i, &s), &st)| if s == 1 { 0 } else { i * st })
                    .sum::<usize>(),
            );
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        let src = self.data();
        let out: Vec<F> = map.iter().map(|&i| src[i]).collect();
        let src_n = self.value().numel();
        self.tape().record("expand", Tensor::new(shape.to_vec(), out)?, &[self], move |g, _| {
            let mut dx = vec![F::zero(); src_n];
            for (&i, &gv) in map.iter().zip(g) {
                dx[i] += gv;
            }
            vec![Some(dx)]
        })
    }

    /// Flat gather: element `i` of the result is `self.data()[indices[i]]`.
    pub fn gather(&self, indices: Vec<usize>, shape: &[usize]) -> Result<Var<'t, F>> {
        let n = self.value().numel();
        if numel(shape) != indices.len() {
            return Err(TensorError::dim("gather", format!("{} indices for shape {shape:?}", indices.len())));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(TensorError::arg("gather", format!("index {bad} out of range for {n} elements")));
        }
        let src = self.data();
        let out: Vec<F> = indices.iter().map(|&i| src[i]).collect();
        self.tape().record("gather", Tensor::new(shape.to_vec(), out)?, &[self], move |g, _| {
            let mut dx = vec![F::zero(); n];
            for (&i, &gv) in indices.iter().zip(g) {
                dx[i] += gv;
            }
            vec![Some(dx)]
        })
    }

    /// Selects rows of a matrix (`[R×D]` → `[rows.len()×D]`).
    pub fn gather_rows(&self, rows: &[usize]) -> Result<Var<'t, F>> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(TensorError::dim("gather_rows", format!("expected a matrix, got {shape:?}")));
        }
        let (r, d) = (shape[0], shape[1]);
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(TensorError::arg("gather_rows", format!("row {bad} out of range for {r} rows")));
        }
        let mut out = Vec::with_capacity(rows.len() * d);
        for &i in rows {
            out.extend_from_slice(&self.data()[i * d..(i + 1) * d]);
        }
        let rows = rows.to_vec();
        self.tape().record("gather_rows", Tensor::new(vec![rows.len(), d], out)?, &[self], move |g, _| {
            let mut dx = vec![F::zero(); r * d];
            for (k, &i) in rows.iter().enumerate() {
                dx[i * d..(i + 1) * d].iter_mut().zip(&g[k * d..(k + 1) * d]).for_each(|(a, &b)| *a += b);
            }
            vec![Some(dx)]
        })
    }

    /// Scatter-adds the rows of `self` into a zero `[n_rows×D]` matrix.
    pub fn index_add_rows(&self, n_rows: usize, rows: &[usize]) -> Result<Var<'t, F>> {
        let shape = self.shape();
        if shape.len() != 2 || shape[0] != rows.len() {
            return Err(TensorError::dim("index_add_rows", format!("{shape:?} with {} row indices", rows.len())));
        }
        let d = shape[1];
        if let Some(&bad) = rows.iter().find(|&&i| i >= n_rows) {
            return Err(TensorError::arg("index_add_rows", format!("row {bad} out of range for {n_rows} rows")));
        }
        let mut out = vec![F::zero(); n_rows * d];
        for (k, &i) in rows.iter().enumerate() {
            out[i * d..(i + 1) * d].iter_mut().zip(&self.data()[k * d..(k + 1) * d]).for_each(|(a, &b)| *a += b);
        }
        let rows = rows.to_vec();
        self.tape().record("index_add_rows", Tensor::new(vec![n_rows, d], out)?, &[self], move |g, _| {
            let mut dx = Vec::with_capacity(rows.len() * d);
            for &i in &rows {
                dx.extend_from_slice(&g[i * d..(i + 1) * d]);
            }
            vec![Some(dx)]
        })
    }
}
