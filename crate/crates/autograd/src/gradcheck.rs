//! Central finite-difference checks for recorded computations.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Relative error of the analytic gradient for each input.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub relative_errors: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares `∂f/∂input` from the tape against central differences with
/// step `h`, in 64-bit.
///
/// `f` builds a scalar from leaves bound to `inputs`. At most `max_probes`
/// evenly spaced coordinates of each input are perturbed. The error for an
/// input is `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over the
/// probed coordinates; it is reported as zero when both norms are below
/// `1e-10`.
pub fn check_gradients<B>(inputs: &[Tensor<f64>], h: f64, max_probes: usize, f: B) -> Result<GradCheckReport>
where
    B: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let analytic: Vec<Tensor<f64>> = {
        let tape = Tape::new();
        let leaves: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = f(&tape, &leaves)?;
        let grads = tape.backward(&out)?;
        leaves.iter().map(|l| grads.wrt(l)).collect()
    };

    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::inference();
        let leaves: Vec<_> = values.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        f(&tape, &leaves)?.value().item()
    };

    let mut relative_errors = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for i in 0..inputs.len() {
        let n = inputs[i].numel();
        let stride = n.div_ceil(max_probes.max(1)).max(1);
        let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
        for j in (0..n).step_by(stride) {
            let original = work[i].data()[j];
            work[i].data_mut()[j] = original + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = original - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[i].data()[j];
            diff += (a - numeric).powi(2);
            na += a * a;
            nn += numeric * numeric;
        }
        let scale = na.sqrt().max(nn.sqrt());
        relative_errors.push(if scale < 1e-10 { 0.0 } else { diff.sqrt() / scale });
    }
    Ok(GradCheckReport { relative_errors })
}
