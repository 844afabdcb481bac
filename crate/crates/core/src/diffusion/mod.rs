//! Forward diffusion, reverse-step statistics, and ancestral sampling.

mod epsnet;
mod train;

pub use epsnet::{EpsNetConfig, EpsilonNet};
pub use train::{train_backbone, BackboneTrainConfig};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Vec1};
use crate::real::{from_f64, Real};
use crate::schedules::DiffusionSchedule;

/// A draw from the t-step marginal along with the injected noise.
#[derive(Debug, Clone)]
pub struct ForwardDraw<S: Real> {
    pub x_t: Vec1<S>,
    pub eps: Vec1<S>,
    pub t: usize,
}

fn check_step(t: usize, sched: &DiffusionSchedule, allow_zero: bool) -> Result<()> {
    let lo = usize::from(!allow_zero);
    if t < lo || t > sched.t_count() {
        return Err(Error::invalid(format!(
            "step {t} outside {lo}..={}",
            sched.t_count()
        )));
    }
    Ok(())
}

/// Jump directly to step `t`: `x_t = sqrt(abar_t) x_0 + sqrt(1-abar_t) eps`.
/// `t = 0` returns `x_0` itself (with zero injected noise).
pub fn q_sample<S: Real>(
    x0: &Vec1<S>,
    t: usize,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
) -> Result<ForwardDraw<S>> {
    check_step(t, sched, true)?;
    if t == 0 {
        return Ok(ForwardDraw {
            x_t: x0.clone(),
            eps: Vec1::from_raw(vec![S::zero(); x0.len()]),
            t,
        });
    }
    let ab = sched.alpha_bar(t);
    let signal = from_f64::<S>(ab.sqrt());
    let noise = from_f64::<S>((1.0 - ab).sqrt());
    let eps: Vec<S> = rng.gauss_vec(x0.len());
    let x_t: Vec<S> = x0
        .iter()
        .zip(&eps)
        .map(|(&x, &e)| signal * x + noise * e)
        .collect();
    Ok(ForwardDraw {
        x_t: Vec1::from_raw(x_t),
        eps: Vec1::from_raw(eps),
        t,
    })
}

/// One forward step: `x_t = sqrt(1-beta_t) x_{t-1} + sqrt(beta_t) e`.
///
/// The noise scale is `sqrt(beta_t)`, which is what makes the iterated
/// process match the closed-form marginal of `q_sample`.
pub fn forward_step<S: Real>(
    x_prev: &Vec1<S>,
    t: usize,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
) -> Result<Vec1<S>> {
    check_step(t, sched, false)?;
    let beta = sched.beta(t);
    let keep = from_f64::<S>((1.0 - beta).sqrt());
    let add = from_f64::<S>(beta.sqrt());
    Ok(Vec1::from_raw(
        x_prev
            .iter()
            .map(|&x| keep * x + add * rng.gauss::<S>())
            .collect(),
    ))
}

/// Reverse mean in noise-prediction form:
/// `mu = (x_t - ((1-alpha_t)/sqrt(1-abar_t)) eps_hat) / sqrt(alpha_t)`.
pub fn posterior_mean<S: Real>(
    x_t: &[S],
    t: usize,
    eps_hat: &[S],
    sched: &DiffusionSchedule,
) -> Result<Vec<S>> {
    if x_t.len() != eps_hat.len() {
        return Err(Error::LengthMismatch {
            context: "posterior_mean",
            left: x_t.len(),
            right: eps_hat.len(),
        });
    }
    check_step(t, sched, false)?;
    let alpha = sched.alpha(t);
    let ab = sched.alpha_bar(t);
    let inv_sqrt_alpha = from_f64::<S>(1.0 / alpha.sqrt());
    let coeff = from_f64::<S>((1.0 - alpha) / (1.0 - ab).sqrt());
    Ok(x_t
        .iter()
        .zip(eps_hat)
        .map(|(&x, &e)| inv_sqrt_alpha * (x - coeff * e))
        .collect())
}

/// Completes a reverse step from its mean: adds `sqrt(tilde_beta_t) z` for
/// t > 1, and also at t = 1 when `t1_noise` (the schedule-literal variant).
pub fn reverse_draw<S: Real>(
    mu: Vec<S>,
    t: usize,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
    t1_noise: bool,
) -> Vec1<S> {
    if t > 1 || t1_noise {
        let sd = from_f64::<S>(sched.tilde_beta(t).sqrt());
        Vec1::from_raw(mu.into_iter().map(|m| m + sd * rng.gauss::<S>()).collect())
    } else {
        Vec1::from_raw(mu)
    }
}

/// One unguided ancestral step `x_t -> x_{t-1}`.
pub fn unguided_step<S: Real>(
    x_t: &Vec1<S>,
    t: usize,
    net: &EpsilonNet<S>,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
    t1_noise: bool,
) -> Result<Vec1<S>> {
    check_step(t, sched, false)?;
    let eps_hat = net.predict(x_t.as_slice(), t)?;
    let mu = posterior_mean(x_t.as_slice(), t, &eps_hat, sched)?;
    Ok(reverse_draw(mu, t, sched, rng, t1_noise))
}

/// Full unguided generation from white noise.
pub fn sample_unguided<S: Real>(
    len: usize,
    net: &EpsilonNet<S>,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
    t1_noise: bool,
) -> Result<Vec1<S>> {
    if len == 0 {
        return Err(Error::invalid("cannot sample an empty signal"));
    }
    let mut x = Vec1::from_raw(rng.gauss_vec(len));
    for t in (1..=sched.t_count()).rev() {
        x = unguided_step(&x, t, net, sched, rng, t1_noise)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(t: usize) -> DiffusionSchedule {
        DiffusionSchedule::linear(t, 1e-4, 0.2).unwrap()
    }

    #[test]
    fn step_zero_returns_the_input() {
        let s = sched(10);
        let x0 = Vec1::new(vec![0.3f64, -0.7, 0.1]).unwrap();
        let mut rng = Rng::from_seed(1);
        let d = q_sample(&x0, 0, &s, &mut rng).unwrap();
        assert_eq!(d.x_t.as_slice(), x0.as_slice());
        assert!(d.eps.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn zero_signal_becomes_pure_scaled_noise() {
        let s = sched(10);
        let x0 = Vec1::new(vec![0.0f64; 50]).unwrap();
        let mut rng = Rng::from_seed(2);
        let d = q_sample(&x0, 10, &s, &mut rng).unwrap();
        let scale = (1.0 - s.alpha_bar(10)).sqrt();
        for (x, e) in d.x_t.iter().zip(d.eps.iter()) {
            assert!((x - scale * e).abs() < 1e-15);
        }
    }

    #[test]
    fn marginal_moments_match_theory() {
        let s = sched(20);
        let x0 = Vec1::new(vec![0.8f64; 4]).unwrap();
        let mut rng = Rng::from_seed(3);
        let t = 12;
        let n_draws = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n_draws {
            let d = q_sample(&x0, t, &s, &mut rng).unwrap();
            for &v in d.x_t.iter() {
                sum += v;
                sum_sq += v * v;
            }
        }
        let count = (n_draws * 4) as f64;
        let mean = sum / count;
        let var = sum_sq / count - mean * mean;
        let want_mean = s.alpha_bar(t).sqrt() * 0.8;
        let want_var = 1.0 - s.alpha_bar(t);
        assert!((mean - want_mean).abs() < 0.05 * want_mean.abs() + 0.01);
        assert!((var - want_var).abs() < 0.05 * want_var);
    }

    #[test]
    fn forward_step_variance_matches_beta() {
        let s = sched(10);
        let x_prev = Vec1::new(vec![0.0f64; 2000]).unwrap();
        let mut rng = Rng::from_seed(4);
        let x = forward_step(&x_prev, 10, &s, &mut rng).unwrap();
        let var: f64 = x.iter().map(|v| v * v).sum::<f64>() / 2000.0;
        assert!((var - s.beta(10)).abs() < 0.05 * s.beta(10));
    }

    #[test]
    fn posterior_mean_limits() {
        // beta -> 0 (alpha = 1): mu = x_t when eps_hat = 0
        let s = DiffusionSchedule::from_betas(vec![1e-12]).unwrap();
        let x = vec![0.4f64, -0.2];
        let mu = posterior_mean(&x, 1, &[0.0, 0.0], &s).unwrap();
        for (m, v) in mu.iter().zip(&x) {
            assert!((m - v).abs() < 1e-9);
        }
        // eps_hat = 0: mu = x_t / sqrt(alpha)
        let s = sched(5);
        let mu = posterior_mean(&x, 3, &[0.0, 0.0], &s).unwrap();
        for (m, v) in mu.iter().zip(&x) {
            assert!((m - v / s.alpha(3).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_noise_at_t1_recovers_x0() {
        // at t = 1, abar_1 = alpha_1, so mu with the true eps is exactly x_0
        let s = sched(5);
        let x0 = Vec1::new(vec![0.5f64, -0.3, 0.9, 0.0]).unwrap();
        let mut rng = Rng::from_seed(5);
        let d = q_sample(&x0, 1, &s, &mut rng).unwrap();
        let mu = posterior_mean(d.x_t.as_slice(), 1, d.eps.as_slice(), &s).unwrap();
        for (m, x) in mu.iter().zip(x0.iter()) {
            assert!((m - x).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_mean_is_linear() {
        let s = sched(8);
        let mut rng = Rng::from_seed(6);
        let x1: Vec<f64> = rng.gauss_vec(16);
        let x2: Vec<f64> = rng.gauss_vec(16);
        let e1: Vec<f64> = rng.gauss_vec(16);
        let e2: Vec<f64> = rng.gauss_vec(16);
        let sum_x: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
        let sum_e: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| a + b).collect();
        let m1 = posterior_mean(&x1, 4, &e1, &s).unwrap();
        let m2 = posterior_mean(&x2, 4, &e2, &s).unwrap();
        let m12 = posterior_mean(&sum_x, 4, &sum_e, &s).unwrap();
        for i in 0..16 {
            assert!((m12[i] - (m1[i] + m2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let s = sched(6);
        let mut rng = Rng::from_seed(7);
        let net = EpsilonNet::<f64>::init(
            EpsNetConfig {
                channels: 3,
                kernel: 3,
                dilations: vec![1, 2],
                emb_dim: 4,
            },
            &mut rng,
        )
        .unwrap();
        let a = sample_unguided(40, &net, &s, &mut Rng::from_seed(99), true).unwrap();
        let b = sample_unguided(40, &net, &s, &mut Rng::from_seed(99), true).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn rejects_out_of_range_steps() {
        let s = sched(5);
        let x = Vec1::new(vec![0.1f64; 4]).unwrap();
        let mut rng = Rng::from_seed(8);
        assert!(q_sample(&x, 6, &s, &mut rng).is_err());
        assert!(forward_step(&x, 0, &s, &mut rng).is_err());
        assert!(forward_step(&x, 6, &s, &mut rng).is_err());
        assert!(posterior_mean(x.as_slice(), 0, x.as_slice(), &s).is_err());
    }
}
