//! Diffusion-schedule tables: beta, alpha, alpha-bar, the reverse-step
//! variance, the noise-to-signal amplitude, and the per-step guidance scale.
//!
//! Tables are precomputed in `f64` and 1-indexed by diffusion step
//! (`t = 0` means "clean" and never indexes a table).

use crate::error::{Error, Result};

/// Precomputed forward/reverse schedule quantities for steps `1..=t_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    t_count: usize,
    beta_start: f64,
    beta_end: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    tilde_beta: Vec<f64>,
    noise_to_signal: Vec<f64>,
}

impl DiffusionSchedule {
    /// Linear beta schedule, endpoints inclusive.
    pub fn linear(t_count: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_count < 1 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "beta bounds must satisfy 0 < start <= end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let beta: Vec<f64> = (0..t_count)
            .map(|i| {
                if t_count == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (t_count - 1) as f64
                }
            })
            .collect();
        Self::from_betas(beta)
    }

    /// Builds every derived table from an explicit beta sequence.
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if beta.iter().any(|&b| !(0.0 < b && b < 1.0)) {
            return Err(Error::invalid("every beta must lie in (0, 1)"));
        }
        let t_count = beta.len();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(t_count);
        let mut prod = 1.0;
        for &a in &alpha {
            prod *= a;
            alpha_bar.push(prod);
        }
        let tilde_beta: Vec<f64> = (0..t_count)
            .map(|i| {
                if i == 0 {
                    beta[0]
                } else {
                    (1.0 - alpha_bar[i - 1]) / (1.0 - alpha_bar[i]) * beta[i]
                }
            })
            .collect();
        let noise_to_signal: Vec<f64> = alpha_bar
            .iter()
            .map(|&ab| ((1.0 - ab) / ab).sqrt())
            .collect();
        Ok(DiffusionSchedule {
            t_count,
            beta_start: beta[0],
            beta_end: beta[t_count - 1],
            beta,
            alpha,
            alpha_bar,
            tilde_beta,
            noise_to_signal,
        })
    }

    pub fn t_count(&self) -> usize {
        self.t_count
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    #[inline]
    fn at(&self, table: &[f64], t: usize) -> f64 {
        assert!(
            (1..=self.t_count).contains(&t),
            "step {} outside 1..={}",
            t,
            self.t_count
        );
        table[t - 1]
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.at(&self.beta, t)
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.at(&self.alpha, t)
    }

    /// Cumulative product of alphas; `alpha_bar(0) == 1` by convention.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.at(&self.alpha_bar, t)
        }
    }

    /// Reverse-step variance: `(1 - abar_{t-1}) / (1 - abar_t) * beta_t`,
    /// collapsing to `beta_1` at `t = 1`.
    pub fn tilde_beta(&self, t: usize) -> f64 {
        self.at(&self.tilde_beta, t)
    }

    /// Diffusion-noise amplitude relative to signal scale:
    /// `sqrt((1 - abar_t) / abar_t)`; zero at `t = 0`.
    pub fn noise_to_signal(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.at(&self.noise_to_signal, t)
        }
    }
}

/// Per-step guidance scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceSchedule {
    pub lambda_max: f64,
    pub gamma: f64,
    scale: Vec<f64>,
}

impl GuidanceSchedule {
    /// `s_t = lambda_max * (sqrt(1 - abar_t) / sqrt(1 - abar_1))^gamma`.
    ///
    /// As printed this grows with `t`; `ratio_inverted` flips the ratio so
    /// guidance instead weakens as the state gets noisier.
    pub fn new(
        sched: &DiffusionSchedule,
        lambda_max: f64,
        gamma: f64,
        ratio_inverted: bool,
    ) -> Result<Self> {
        if lambda_max < 0.0 {
            return Err(Error::invalid("lambda_max must be >= 0"));
        }
        if gamma <= 0.0 {
            return Err(Error::invalid("gamma must be > 0"));
        }
        let base = (1.0 - sched.alpha_bar(1)).sqrt();
        if base == 0.0 {
            return Err(Error::invalid(
                "guidance scale undefined: alpha_bar(1) == 1",
            ));
        }
        let scale = (1..=sched.t_count())
            .map(|t| {
                let ratio = (1.0 - sched.alpha_bar(t)).sqrt() / base;
                let ratio = if ratio_inverted { 1.0 / ratio } else { ratio };
                lambda_max * ratio.powf(gamma)
            })
            .collect();
        Ok(GuidanceSchedule {
            lambda_max,
            gamma,
            scale,
        })
    }

    /// Guidance disabled at every step.
    pub fn off(sched: &DiffusionSchedule) -> Self {
        GuidanceSchedule {
            lambda_max: 0.0,
            gamma: 1.0,
            scale: vec![0.0; sched.t_count()],
        }
    }

    pub fn scale(&self, t: usize) -> f64 {
        assert!((1..=self.scale.len()).contains(&t));
        self.scale[t - 1]
    }

    pub fn t_count(&self) -> usize {
        self.scale.len()
    }
}

/// Identity of a schedule for weights-file compatibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleFingerprint {
    pub t_count: u32,
    pub beta_start_bits: u64,
    pub beta_end_bits: u64,
    pub alpha_bar_hash: u64,
}

impl ScheduleFingerprint {
    pub fn of(sched: &DiffusionSchedule) -> Self {
        let mut hash = 0xcbf2_9ce4_8422_2325u64; // FNV-1a
        for t in 1..=sched.t_count() {
            for byte in sched.alpha_bar(t).to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        ScheduleFingerprint {
            t_count: sched.t_count() as u32,
            beta_start_bits: sched.beta_start().to_bits(),
            beta_end_bits: sched.beta_end().to_bits(),
            alpha_bar_hash: hash,
        }
    }
}

impl std::fmt::Display for ScheduleFingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "T={} beta=[{}, {}] hash={:016x}",
            self.t_count,
            f64::from_bits(self.beta_start_bits),
            f64::from_bits(self.beta_end_bits),
            self.alpha_bar_hash
        )
    }
}
