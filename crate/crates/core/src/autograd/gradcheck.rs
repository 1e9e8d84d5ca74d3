use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Compares the tape gradient of a scalar function against central finite
/// differences.
///
/// `f` records its computation on a fresh tape given the input leaf and
/// returns the scalar output. The result is
/// `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let input = tape.param(x.clone());
    let out = f(&mut tape, input)?;
    tape.backward(out)?;
    let analytic = tape.grad(input);

    let eval = |point: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let input = tape.param(point);
        let out = f(&mut tape, input)?;
        Ok(tape.value(out).data()[0])
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
