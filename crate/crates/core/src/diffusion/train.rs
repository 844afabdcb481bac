//! Backbone training: regress the injected noise on random segments,
//! steps, and draws.

use rayon::prelude::*;

use crate::diffusion::epsnet::{EpsNetConfig, EpsilonNet};
use crate::diffusion::q_sample;
use crate::error::{Error, Result};
use crate::numerics::{mix, Adam, AdamConfig, Rng, Tape, Vec1};
use crate::real::{from_f64, to_f64, Real};
use crate::schedules::DiffusionSchedule;

#[derive(Debug, Clone)]
pub struct BackboneTrainConfig {
    pub net: EpsNetConfig,
    /// Optimizer steps; each draws one fresh batch.
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub segment: usize,
}

impl Default for BackboneTrainConfig {
    fn default() -> Self {
        BackboneTrainConfig {
            net: EpsNetConfig::default(),
            epochs: 400,
            lr: 2e-3,
            batch: 16,
            segment: 2048,
        }
    }
}

/// Trains a fresh backbone on clean clips. Returns the net and the per-epoch
/// training loss (mean squared error per sample), which should trend down.
pub fn train_backbone<S: Real>(
    corpus: &[Vec1<S>],
    sched: &DiffusionSchedule,
    cfg: &BackboneTrainConfig,
    rng: &mut Rng,
) -> Result<(EpsilonNet<S>, Vec<f64>)> {
    if corpus.is_empty() {
        return Err(Error::invalid("backbone training needs a nonempty corpus"));
    }
    if cfg.batch == 0 || cfg.segment == 0 {
        return Err(Error::invalid("batch and segment must be >= 1"));
    }
    for (i, clip) in corpus.iter().enumerate() {
        if clip.len() < cfg.segment {
            return Err(Error::invalid(format!(
                "corpus clip {i} has {} samples, shorter than the {}-sample segment",
                clip.len(),
                cfg.segment
            )));
        }
    }

    let mut net = EpsilonNet::init(cfg.net.clone(), rng)?;
    let mut adam = Adam::new(
        AdamConfig::with_lr(cfg.lr),
        &net.params().iter().collect::<Vec<_>>(),
    )?;
    let base_seed = rng.next_u64();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        // One independent (clip, segment, t, eps) draw per batch item;
        // items run in parallel, gradients reduce in index order so the
        // result is independent of scheduling.
        let items: Vec<(f64, Vec<Vec<S>>)> = (0..cfg.batch)
            .into_par_iter()
            .map(|b| {
                let seed = mix(base_seed, (epoch * cfg.batch + b) as u64);
                batch_item(corpus, sched, cfg, &net, seed)
            })
            .collect::<Result<_>>()?;

        let scale = from_f64::<S>(1.0 / (cfg.batch * cfg.segment) as f64);
        let mut loss_sum = 0.0;
        for (sse, grads) in items {
            loss_sum += sse;
            for (p, g) in net.params_mut().iter_mut().zip(grads) {
                p.accumulate_grad(&g);
            }
        }
        for p in net.params_mut() {
            for g in &mut p.grad {
                *g *= scale;
            }
        }
        adam.step(&mut net.params_mut());
        trace.push(loss_sum / (cfg.batch * cfg.segment) as f64);
    }

    Ok((net, trace))
}

fn batch_item<S: Real>(
    corpus: &[Vec1<S>],
    sched: &DiffusionSchedule,
    cfg: &BackboneTrainConfig,
    net: &EpsilonNet<S>,
    seed: u64,
) -> Result<(f64, Vec<Vec<S>>)> {
    let mut rng = Rng::from_seed(seed);
    let clip = &corpus[rng.below(corpus.len())];
    let start = rng.below(clip.len() - cfg.segment + 1);
    let t = 1 + rng.below(sched.t_count());
    let segment = Vec1::from_raw(clip.as_slice()[start..start + cfg.segment].to_vec());
    let draw = q_sample(&segment, t, sched, &mut rng)?;

    let mut tape = Tape::new();
    let nodes = net.register(&mut tape);
    let x = tape.constant_vector(draw.x_t.as_slice());
    let pred = net.forward(&mut tape, &nodes, x, t)?;
    let target = tape.constant_vector(draw.eps.as_slice());
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff);
    let loss = tape.sum_all(sq);
    let grads = tape.backward(loss)?;
    let param_grads = nodes.iter().map(|&n| grads.wrt(n, &tape)).collect();
    Ok((to_f64(tape.scalar_value(loss)), param_grads))
}
