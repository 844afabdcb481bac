//! 1-D multi-channel dilated convolution kernels.
//!
//! Three padding modes:
//! - `CausalShifted`: output length equals input length and output index `i`
//!   sees inputs strictly before `i` (left zero-padding plus a one-sample
//!   shift). This is the autoregressive-likelihood convolution.
//! - `Same`: centered zero-padding, output length equals input length
//!   (odd kernels).
//! - `Valid`: no padding, output length `n - (k-1)*dilation`.
//!
//! Data layout is channel-major: `x[c * n + i]`, kernels
//! `w[(o * in_channels + c) * k + tap]`.

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    CausalShifted,
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub pad: PadMode,
}

impl ConvSpec {
    /// Number of input samples spanned by the dilated kernel.
    pub fn span(&self) -> usize {
        (self.kernel - 1) * self.dilation + 1
    }

    pub fn out_len(&self, n: usize) -> usize {
        match self.pad {
            PadMode::CausalShifted | PadMode::Same => n,
            PadMode::Valid => n + 1 - self.span(),
        }
    }

    /// Input index feeding output position `i` through tap `tap`, or None if
    /// it falls into the zero padding.
    #[inline]
    fn source(&self, i: usize, tap: usize, n: usize) -> Option<usize> {
        let k = self.kernel as isize;
        let d = self.dilation as isize;
        let src = match self.pad {
            // One-sample shift on top of causal alignment: the last tap reads x[i-1].
            PadMode::CausalShifted => i as isize - 1 - (k - 1 - tap as isize) * d,
            PadMode::Same => i as isize + tap as isize * d - (k - 1) / 2 * d,
            PadMode::Valid => return Some(i + tap * self.dilation),
        };
        if src >= 0 && (src as usize) < n {
            Some(src as usize)
        } else {
            None
        }
    }

    pub fn validate(&self, n: usize, w_len: usize) -> Result<()> {
        if self.kernel == 0 || self.dilation == 0 {
            return Err(Error::invalid("conv kernel and dilation must be >= 1"));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("conv channel counts must be >= 1"));
        }
        if w_len != self.out_channels * self.in_channels * self.kernel {
            return Err(Error::LengthMismatch {
                context: "conv kernel buffer",
                left: w_len,
                right: self.out_channels * self.in_channels * self.kernel,
            });
        }
        if self.pad == PadMode::Valid && self.span() > n {
            return Err(Error::invalid(format!(
                "kernel span {} exceeds input length {}",
                self.span(),
                n
            )));
        }
        if self.pad == PadMode::Same && self.kernel.is_multiple_of(2) {
            return Err(Error::invalid("Same padding requires an odd kernel"));
        }
        Ok(())
    }
}

/// Forward convolution. `x` is `(in_channels, n)`, returns `(out_channels, out_len)`.
pub fn conv1d_forward<S: Real>(x: &[S], n: usize, w: &[S], spec: &ConvSpec) -> Result<Vec<S>> {
    spec.validate(n, w.len())?;
    if x.len() != spec.in_channels * n {
        return Err(Error::LengthMismatch {
            context: "conv input buffer",
            left: x.len(),
            right: spec.in_channels * n,
        });
    }
    let out_len = spec.out_len(n);
    let mut y = vec![S::zero(); spec.out_channels * out_len];
    for o in 0..spec.out_channels {
        for c in 0..spec.in_channels {
            let xc = &x[c * n..(c + 1) * n];
            let wb = &w[(o * spec.in_channels + c) * spec.kernel..];
            let yo = &mut y[o * out_len..(o + 1) * out_len];
            for (tap, &wv) in wb.iter().take(spec.kernel).enumerate() {
                if wv == S::zero() {
                    continue;
                }
                for (i, yv) in yo.iter_mut().enumerate() {
                    if let Some(src) = spec.source(i, tap, n) {
                        *yv += wv * xc[src];
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Backward pass: given upstream gradient `dy` of shape `(out_channels, out_len)`,
/// returns `(dx, dw)` with the same shapes as `x` and `w`.
pub fn conv1d_backward<S: Real>(
    x: &[S],
    n: usize,
    w: &[S],
    dy: &[S],
    spec: &ConvSpec,
) -> (Vec<S>, Vec<S>) {
    let out_len = spec.out_len(n);
    debug_assert_eq!(dy.len(), spec.out_channels * out_len);
    let mut dx = vec![S::zero(); x.len()];
    let mut dw = vec![S::zero(); w.len()];
    for o in 0..spec.out_channels {
        let dyo = &dy[o * out_len..(o + 1) * out_len];
        for c in 0..spec.in_channels {
            let xc = &x[c * n..(c + 1) * n];
            let dxc = &mut dx[c * n..(c + 1) * n];
            let wbase = (o * spec.in_channels + c) * spec.kernel;
            for tap in 0..spec.kernel {
                let wv = w[wbase + tap];
                let mut wgrad = S::zero();
                for (i, &g) in dyo.iter().enumerate() {
                    if let Some(src) = spec.source(i, tap, n) {
                        wgrad += g * xc[src];
                        dxc[src] += g * wv;
                    }
                }
                dw[wbase + tap] += wgrad;
            }
        }
    }
    (dx, dw)
}
