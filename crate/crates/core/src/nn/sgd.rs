use super::network::NetworkParams;
use crate::error::{Error, Result};
use crate::tensor::Real;

/// Plain SGD update `p ← p − lr·g`.
///
/// Gradients are checked for NaN/Inf before anything is written, so a
/// failed step leaves `params` untouched.
pub fn sgd_step<T: Real>(
    params: &mut NetworkParams<T>,
    grads: &NetworkParams<T>,
    learning_rate: T,
) -> Result<()> {
    if learning_rate <= T::zero() || !learning_rate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive and finite, got {learning_rate:?}"
        )));
    }
    for g in grads.params() {
        if let Some(pos) = g.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(format!(
                "{}[{pos}] = {:?}",
                g.name, g.data[pos]
            )));
        }
    }
    params.add_scaled(grads, -learning_rate);
    Ok(())
}
