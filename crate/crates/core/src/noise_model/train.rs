//! Combined-noise construction and per-step maximum-likelihood training.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise_model::net::{NoiseModel, NoiseNetConfig, StepModel};
use crate::numerics::{mix, Adam, AdamConfig, Param, Rng, Shape, Tape, TensorData, Vec1};
use crate::real::{from_f64, to_f64, Real};
use crate::schedules::{DiffusionSchedule, ScheduleFingerprint};

/// How the diffusion-noise draw enters the combined noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawMode {
    /// One shared draw for the whole clip (training-loop literal).
    Scalar,
    /// Independent draw per sample (the marginal definition; default).
    Vector,
}

/// Whether the combined noise is rebuilt with fresh draws between epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RebuildMode {
    /// Build once per step and reuse (procedure-literal; default).
    Once,
    /// Fresh draw every epoch (augmentation reading).
    EveryEpoch,
}

/// Training target for one step: `v = w - g(t) e`.
#[derive(Debug, Clone)]
pub struct CombinedNoise<S: Real> {
    pub v: Vec1<S>,
    pub t: usize,
}

/// Builds the combined noise at step `t` from a noise-only clip. `t = 0`
/// has `g(0) = 0` and returns the clip unchanged.
pub fn build_vt<S: Real>(
    noise_clip: &Vec1<S>,
    t: usize,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
    draw_mode: DrawMode,
) -> Result<CombinedNoise<S>> {
    if t > sched.t_count() {
        return Err(Error::invalid(format!(
            "step {t} outside 0..={}",
            sched.t_count()
        )));
    }
    let g = from_f64::<S>(sched.noise_to_signal(t));
    let v = match draw_mode {
        DrawMode::Scalar => {
            let e = rng.gauss::<S>();
            noise_clip.iter().map(|&w| w - g * e).collect()
        }
        DrawMode::Vector => noise_clip
            .iter()
            .map(|&w| w - g * rng.gauss::<S>())
            .collect(),
    };
    Ok(CombinedNoise {
        v: Vec1::from_raw(v),
        t,
    })
}

#[derive(Debug, Clone)]
pub struct NoiseTrainConfig {
    pub net: NoiseNetConfig,
    /// Full-clip gradient steps per diffusion step.
    pub epochs: usize,
    pub lr: f64,
    pub draw_mode: DrawMode,
    pub rebuild: RebuildMode,
    /// Leading fraction of the clip used for training; the rest validates.
    pub train_fraction: f64,
}

impl Default for NoiseTrainConfig {
    fn default() -> Self {
        NoiseTrainConfig {
            net: NoiseNetConfig::default(),
            epochs: 60,
            lr: 5e-3,
            draw_mode: DrawMode::Vector,
            rebuild: RebuildMode::Once,
            train_fraction: 0.8,
        }
    }
}

/// Per-step training record.
#[derive(Debug, Clone)]
pub struct StepTrainReport {
    pub t: usize,
    /// Held-out per-sample NLL before and after training (after any revert).
    pub initial_val_nll: f64,
    pub final_val_nll: f64,
    /// Per-epoch training NLL per sample.
    pub trace: Vec<f64>,
    /// Training finished worse than it started; the initial weights were kept.
    pub reverted: bool,
    /// Training hit a non-finite loss and stopped early at this step.
    pub aborted: Option<String>,
}

/// Trains the full bank, one model per diffusion step, in parallel across
/// steps. Reports are ordered by `t` ascending.
pub fn train_noise_model<S: Real>(
    noise_clip: &Vec1<S>,
    sched: &DiffusionSchedule,
    cfg: &NoiseTrainConfig,
    rng: &mut Rng,
) -> Result<(NoiseModel<S>, Vec<StepTrainReport>)> {
    validate_clip(noise_clip, cfg)?;
    let base_seed = rng.next_u64();
    let trained: Vec<(StepModel<S>, StepTrainReport)> = (1..=sched.t_count())
        .into_par_iter()
        .map(|t| train_single_step(noise_clip, t, sched, cfg, mix(base_seed, t as u64)))
        .collect::<Result<_>>()?;

    let (steps, reports): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    let bank = NoiseModel::from_steps(cfg.net.clone(), ScheduleFingerprint::of(sched), steps)?;
    Ok((bank, reports))
}

fn validate_clip<S: Real>(noise_clip: &Vec1<S>, cfg: &NoiseTrainConfig) -> Result<()> {
    if !(0.0 < cfg.train_fraction && cfg.train_fraction < 1.0) {
        return Err(Error::invalid("train_fraction must lie in (0, 1)"));
    }
    let n_train = train_len(noise_clip.len(), cfg.train_fraction);
    let lb = cfg.net.max_lookback();
    if n_train < lb || noise_clip.len() - n_train < 1 {
        return Err(Error::invalid(format!(
            "noise clip too short: {} samples gives {} for training, need at least \
             the {}-sample receptive field plus a validation tail",
            noise_clip.len(),
            n_train,
            lb
        )));
    }
    Ok(())
}

fn train_len(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction) as usize).clamp(1, n - 1)
}

/// Trains one step's model. Deterministic in `seed`.
pub fn train_single_step<S: Real>(
    noise_clip: &Vec1<S>,
    t: usize,
    sched: &DiffusionSchedule,
    cfg: &NoiseTrainConfig,
    seed: u64,
) -> Result<(StepModel<S>, StepTrainReport)> {
    let mut rng = Rng::from_seed(seed);
    let combined = build_vt(noise_clip, t, sched, &mut rng, cfg.draw_mode)?;
    let n_train = train_len(noise_clip.len(), cfg.train_fraction);
    let mut v_train = combined.v.as_slice()[..n_train].to_vec();
    let v_val = &combined.v.as_slice()[n_train..];

    let mut model = StepModel::init(cfg.net.clone(), &mut rng)?;
    let std = sample_std(&v_train);
    model.set_sigma_bias(std);
    let initial_params: Vec<Param<S>> = model.params().to_vec();
    let initial_val_nll = model.nll_value(v_val)? / v_val.len() as f64;

    let mut adam = Adam::new(
        AdamConfig::with_lr(cfg.lr),
        &model.params().iter().collect::<Vec<_>>(),
    )?;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut aborted = None;

    for epoch in 0..cfg.epochs {
        if epoch > 0 && cfg.rebuild == RebuildMode::EveryEpoch {
            let fresh = build_vt(noise_clip, t, sched, &mut rng, cfg.draw_mode)?;
            v_train.copy_from_slice(&fresh.v.as_slice()[..n_train]);
        }
        let snapshot: Vec<Param<S>> = model.params().to_vec();
        let loss = nll_gradient_step(&mut model, &v_train)?;
        if !loss.is_finite() {
            restore(&mut model, snapshot);
            aborted = Some(format!("non-finite training loss at epoch {epoch}"));
            break;
        }
        adam.step(&mut model.params_mut());
        trace.push(loss / n_train as f64);
    }

    let mut final_val_nll = model.nll_value(v_val)? / v_val.len() as f64;
    let mut reverted = false;
    if final_val_nll > initial_val_nll {
        restore(&mut model, initial_params);
        final_val_nll = initial_val_nll;
        reverted = true;
    }

    Ok((
        model,
        StepTrainReport {
            t,
            initial_val_nll,
            final_val_nll,
            trace,
            reverted,
            aborted,
        },
    ))
}

fn sample_std<S: Real>(v: &[S]) -> f64 {
    let n = v.len() as f64;
    let mean: f64 = v.iter().map(|&x| to_f64(x)).sum::<f64>() / n;
    let var: f64 = v.iter().map(|&x| (to_f64(x) - mean).powi(2)).sum::<f64>() / n;
    var.sqrt().max(1e-3)
}

fn restore<S: Real>(model: &mut StepModel<S>, params: Vec<Param<S>>) {
    for (dst, src) in model.params_mut().iter_mut().zip(params) {
        dst.values = src.values;
        dst.zero_grad();
    }
}

/// One full-batch NLL gradient accumulation; returns the total loss.
fn nll_gradient_step<S: Real>(model: &mut StepModel<S>, v: &[S]) -> Result<f64> {
    let mut tape = Tape::new();
    let nodes = model.register(&mut tape);
    let vn = tape.constant(TensorData::new(Shape::new(1, v.len()), v.to_vec()));
    let (mu, sigma) = model.forward(&mut tape, &nodes, vn)?;
    let loss = StepModel::nll_node(&mut tape, vn, mu, sigma)?;
    let grads = tape.backward(loss)?;
    let scale = from_f64::<S>(1.0 / v.len() as f64);
    for (p, node) in model.params_mut().iter_mut().zip(&nodes) {
        let g = grads.wrt(*node, &tape);
        p.accumulate_grad(&g);
        for gv in &mut p.grad {
            *gv *= scale;
        }
    }
    Ok(to_f64(tape.scalar_value(loss)))
}
