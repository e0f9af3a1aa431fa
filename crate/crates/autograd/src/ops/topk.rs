use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

/// Indices of the `k` largest values, largest first. Ties go to the lower
/// index so selections are reproducible.
pub fn topk_indices<F: Scalar>(values: &[F], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > values.len() {
        return Err(TensorError::arg("topk_indices", format!("k = {k} outside 1..={}", values.len())));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    // Stable sort keeps the lower index first among equal values.
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
    order.truncate(k);
    Ok(order)
}
