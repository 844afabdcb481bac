//! Gaussian negative log-likelihood.

use crate::error::{Error, Result};
use crate::real::{to_f64, Real};

/// `sum_i [ log(sqrt(2*pi) * sigma_i) + (v_i - mu_i)^2 / (2 sigma_i^2) ]`.
pub fn nll_loss<S: Real>(v: &[S], mu: &[S], sigma: &[S]) -> Result<f64> {
    if v.len() != mu.len() || v.len() != sigma.len() {
        return Err(Error::LengthMismatch {
            context: "nll_loss",
            left: v.len(),
            right: mu.len().max(sigma.len()),
        });
    }
    const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
    let mut total = 0.0;
    for i in 0..v.len() {
        let s = to_f64(sigma[i]);
        if s <= 0.0 {
            return Err(Error::invalid(format!(
                "nll_loss requires sigma > 0, got {s} at index {i}"
            )));
        }
        let r = to_f64(v[i]) - to_f64(mu[i]);
        total += LOG_SQRT_2PI + s.ln() + r * r / (2.0 * s * s);
    }
    Ok(total)
}
