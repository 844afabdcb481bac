//! Per-step model architecture and the bank holding one model per step.

use crate::error::{Error, Result};
use crate::noise_model::loss::nll_loss;
use crate::numerics::{ConvSpec, NodeId, PadMode, Param, Rng, Shape, Tape, TensorData};
use crate::real::{from_f64, to_f64, Real};
use crate::schedules::{DiffusionSchedule, ScheduleFingerprint};

/// Lower bound added to the softplus-mapped deviation head.
pub const SIGMA_FLOOR: f64 = 1e-4;

const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseNetConfig {
    pub channels: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
}

impl Default for NoiseNetConfig {
    fn default() -> Self {
        NoiseNetConfig {
            channels: 2,
            kernel: 9,
            dilations: vec![1, 2, 4, 8],
        }
    }
}

impl NoiseNetConfig {
    pub fn layers(&self) -> usize {
        self.dilations.len()
    }

    /// Past samples visible to one output along the deepest conv path:
    /// each shifted causal layer reaches `1 + (kernel-1) * dilation` back.
    pub fn max_lookback(&self) -> usize {
        self.dilations
            .iter()
            .map(|d| 1 + (self.kernel - 1) * d)
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.kernel == 0 || self.dilations.is_empty() {
            return Err(Error::invalid(
                "noise net needs channels, kernel, and at least one layer",
            ));
        }
        Ok(())
    }
}

/// One step's model: stacked shifted-causal weight-normalized gated conv
/// layers with residual connections, plus linear mean / raw-deviation heads.
/// Outputs at index `i` depend only on inputs strictly before `i`.
#[derive(Debug, Clone)]
pub struct StepModel<S: Real> {
    pub cfg: NoiseNetConfig,
    params: Vec<Param<S>>,
}

fn softplus_inv(y: f64) -> f64 {
    // inverse of log(1 + exp(x)): x = y + log(1 - exp(-y))
    y + (-(-y).exp()).ln_1p()
}

impl<S: Real> StepModel<S> {
    fn param_layout(cfg: &NoiseNetConfig) -> Vec<(String, usize, usize)> {
        let c = cfg.channels;
        let k = cfg.kernel;
        let mut out = Vec::new();
        for (i, _) in cfg.dilations.iter().enumerate() {
            let in_c = if i == 0 { 1 } else { c };
            out.push((format!("l{i}.filter.dir"), c, in_c * k));
            out.push((format!("l{i}.filter.mag"), c, 1));
            out.push((format!("l{i}.filter.b"), c, 1));
            out.push((format!("l{i}.gate.dir"), c, in_c * k));
            out.push((format!("l{i}.gate.mag"), c, 1));
            out.push((format!("l{i}.gate.b"), c, 1));
            if i > 0 {
                out.push((format!("l{i}.res.w"), c, c));
                out.push((format!("l{i}.res.b"), c, 1));
            }
        }
        out.push(("mu.w".into(), 1, c));
        out.push(("mu.b".into(), 1, 1));
        out.push(("sigma.w".into(), 1, c));
        out.push(("sigma.b".into(), 1, 1));
        out
    }

    /// Random init: kernels start at their direction draw (magnitude set to
    /// the row norm), heads start at zero except the deviation bias, which
    /// starts at unit sigma.
    pub fn init(cfg: NoiseNetConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut params = Vec::new();
        for (name, rows, cols) in Self::param_layout(&cfg) {
            let p = if name.ends_with(".dir") {
                let std = 1.0 / (cols as f64).sqrt();
                let values = (0..rows * cols)
                    .map(|_| rng.gauss::<S>() * from_f64(std))
                    .collect();
                Param::new(name, rows, cols, values)
            } else if name.ends_with(".mag") {
                Param::zeros(name, rows, cols) // filled from dir norms below
            } else if name == "sigma.b" {
                Param::new(name, 1, 1, vec![from_f64(softplus_inv(1.0))])
            } else {
                Param::zeros(name, rows, cols)
            };
            params.push(p);
        }
        // magnitude = row norm of the paired direction, so the effective
        // kernel equals the direction draw at the start
        for i in 0..params.len() {
            if params[i].name.ends_with(".mag") {
                let dir = &params[i - 1];
                let (rows, cols) = (dir.rows(), dir.cols());
                let norms: Vec<S> = (0..rows)
                    .map(|r| {
                        dir.values[r * cols..(r + 1) * cols]
                            .iter()
                            .fold(S::zero(), |a, &v| a + v * v)
                            .sqrt()
                    })
                    .collect();
                params[i].values = norms;
            }
        }
        Ok(StepModel { cfg, params })
    }

    /// A frozen model emitting constant `mu` and `sigma` regardless of
    /// input: the closed-form reference for i.i.d. Gaussian noise.
    pub fn constant_gaussian(cfg: NoiseNetConfig, mu: f64, sigma: f64) -> Result<Self> {
        cfg.validate()?;
        if sigma <= SIGMA_FLOOR {
            return Err(Error::invalid(format!(
                "constant sigma must exceed the floor {SIGMA_FLOOR}"
            )));
        }
        let mut params = Vec::new();
        for (name, rows, cols) in Self::param_layout(&cfg) {
            let p = if name.ends_with(".dir") {
                // any nonzero direction; magnitude zero keeps the kernel zero
                Param::new(name, rows, cols, vec![S::one(); rows * cols])
            } else if name == "mu.b" {
                Param::new(name, 1, 1, vec![from_f64(mu)])
            } else if name == "sigma.b" {
                Param::new(name, 1, 1, vec![from_f64(softplus_inv(sigma - SIGMA_FLOOR))])
            } else {
                Param::zeros(name, rows, cols)
            };
            params.push(p);
        }
        Ok(StepModel { cfg, params })
    }

    pub fn from_params(cfg: NoiseNetConfig, params: Vec<Param<S>>) -> Result<Self> {
        cfg.validate()?;
        let layout = Self::param_layout(&cfg);
        if params.len() != layout.len() {
            return Err(Error::Weights(format!(
                "step model expects {} parameter blocks, got {}",
                layout.len(),
                params.len()
            )));
        }
        for (have, (name, rows, cols)) in params.iter().zip(&layout) {
            if have.name != *name || have.rows() != *rows || have.cols() != *cols {
                return Err(Error::Weights(format!(
                    "parameter block mismatch: file has {} ({}x{}), expected {name} ({rows}x{cols})",
                    have.name,
                    have.rows(),
                    have.cols(),
                )));
            }
        }
        Ok(StepModel { cfg, params })
    }

    pub fn params(&self) -> &[Param<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.params.iter_mut().collect()
    }

    /// Overrides the raw deviation bias so the initial constant sigma is
    /// near `std` (data-dependent init).
    pub fn set_sigma_bias(&mut self, std: f64) {
        let target = (std - SIGMA_FLOOR).max(1e-3);
        let raw = from_f64(softplus_inv(target));
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == "sigma.b")
            .expect("layout always has sigma.b");
        p.values[0] = raw;
    }

    pub fn register(&self, tape: &mut Tape<S>) -> Vec<NodeId> {
        self.params.iter().map(|p| tape.param(p)).collect()
    }

    /// Builds the forward graph; returns `(mu, sigma)` nodes, each `(1, n)`.
    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        nodes: &[NodeId],
        v: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let c = self.cfg.channels;
        let k = self.cfg.kernel;
        let mut idx = 0;
        let mut next = |n: usize| {
            let i = idx;
            idx += n;
            i
        };

        let mut h = v;
        for (i, &d) in self.cfg.dilations.iter().enumerate() {
            let in_c = if i == 0 { 1 } else { c };
            let spec = ConvSpec {
                in_channels: in_c,
                out_channels: c,
                kernel: k,
                dilation: d,
                pad: PadMode::CausalShifted,
            };
            let base = next(6);
            let wf = tape.weight_norm(nodes[base], nodes[base + 1])?;
            let mut f = tape.conv1d(h, wf, spec)?;
            f = tape.add_bias(f, nodes[base + 2])?;
            let wg = tape.weight_norm(nodes[base + 3], nodes[base + 4])?;
            let mut g = tape.conv1d(h, wg, spec)?;
            g = tape.add_bias(g, nodes[base + 5])?;
            let z = tape.gated(f, g)?;
            if i == 0 {
                h = z;
            } else {
                let rbase = next(2);
                let res_spec = ConvSpec {
                    in_channels: c,
                    out_channels: c,
                    kernel: 1,
                    dilation: 1,
                    pad: PadMode::Same,
                };
                let mut r = tape.conv1d(z, nodes[rbase], res_spec)?;
                r = tape.add_bias(r, nodes[rbase + 1])?;
                h = tape.add(h, r)?;
            }
        }

        let head_spec = ConvSpec {
            in_channels: c,
            out_channels: 1,
            kernel: 1,
            dilation: 1,
            pad: PadMode::Same,
        };
        let hbase = next(4);
        let mut mu = tape.conv1d(h, nodes[hbase], head_spec)?;
        mu = tape.add_bias(mu, nodes[hbase + 1])?;
        let mut raw = tape.conv1d(h, nodes[hbase + 2], head_spec)?;
        raw = tape.add_bias(raw, nodes[hbase + 3])?;
        let sp = tape.softplus(raw);
        let sigma = tape.offset(sp, from_f64(SIGMA_FLOOR));
        Ok((mu, sigma))
    }

    /// Inference: per-sample conditional mean and deviation.
    pub fn predict(&self, v: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        let mut tape = Tape::new();
        let nodes = self.register(&mut tape);
        let vn = tape.constant_vector(v);
        let (mu, sigma) = self.forward(&mut tape, &nodes, vn)?;
        Ok((tape.value(mu).data.clone(), tape.value(sigma).data.clone()))
    }

    /// Total NLL of `v` under the model's own conditional densities.
    pub fn nll_value(&self, v: &[S]) -> Result<f64> {
        let (mu, sigma) = self.predict(v)?;
        nll_loss(v, &mu, &sigma)
    }

    /// Builds the NLL node on an existing graph.
    pub fn nll_node(tape: &mut Tape<S>, v: NodeId, mu: NodeId, sigma: NodeId) -> Result<NodeId> {
        let r = tape.sub(v, mu)?;
        let r2 = tape.square(r);
        let s2 = tape.square(sigma);
        let s2x2 = tape.scale(s2, from_f64(2.0));
        let quad = tape.div(r2, s2x2)?;
        let lg = tape.log(sigma);
        let lgc = tape.offset(lg, from_f64(LOG_SQRT_2PI));
        let term = tape.add(lgc, quad)?;
        Ok(tape.sum_all(term))
    }

    /// NLL and its exact gradient with respect to the input, chain rule
    /// through the causal net included.
    pub fn loss_with_input_gradient(&self, v: &[S]) -> Result<(f64, Vec<S>)> {
        let mut tape = Tape::new();
        let nodes = self.register(&mut tape);
        let vn = tape.leaf(TensorData::new(Shape::new(1, v.len()), v.to_vec()), true);
        let (mu, sigma) = self.forward(&mut tape, &nodes, vn)?;
        let loss = Self::nll_node(&mut tape, vn, mu, sigma)?;
        let grads = tape.backward(loss)?;
        Ok((to_f64(tape.scalar_value(loss)), grads.wrt(vn, &tape)))
    }
}

/// The bank of per-step models plus the schedule it was trained against.
#[derive(Debug, Clone)]
pub struct NoiseModel<S: Real> {
    pub cfg: NoiseNetConfig,
    pub fingerprint: ScheduleFingerprint,
    steps: Vec<StepModel<S>>,
}

impl<S: Real> NoiseModel<S> {
    pub fn from_steps(
        cfg: NoiseNetConfig,
        fingerprint: ScheduleFingerprint,
        steps: Vec<StepModel<S>>,
    ) -> Result<Self> {
        if steps.len() != fingerprint.t_count as usize {
            return Err(Error::invalid(format!(
                "bank holds {} step models but the schedule has {} steps",
                steps.len(),
                fingerprint.t_count
            )));
        }
        for (i, s) in steps.iter().enumerate() {
            if s.cfg != cfg {
                return Err(Error::invalid(format!(
                    "step model {} disagrees with the bank architecture",
                    i + 1
                )));
            }
        }
        Ok(NoiseModel {
            cfg,
            fingerprint,
            steps,
        })
    }

    /// Frozen bank with the analytic density of `w - g(t) e` for white
    /// Gaussian `w`: constant `mu = 0`, `sigma^2 = sigma_w^2 + g(t)^2`.
    pub fn oracle_gaussian(
        cfg: NoiseNetConfig,
        sched: &DiffusionSchedule,
        sigma_w: f64,
    ) -> Result<Self> {
        let steps = (1..=sched.t_count())
            .map(|t| {
                let g = sched.noise_to_signal(t);
                StepModel::constant_gaussian(cfg.clone(), 0.0, (sigma_w * sigma_w + g * g).sqrt())
            })
            .collect::<Result<_>>()?;
        Self::from_steps(cfg, ScheduleFingerprint::of(sched), steps)
    }

    pub fn t_count(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, t: usize) -> Result<&StepModel<S>> {
        if t < 1 || t > self.steps.len() {
            return Err(Error::invalid(format!(
                "noise model step {t} outside 1..={}",
                self.steps.len()
            )));
        }
        Ok(&self.steps[t - 1])
    }

    pub fn steps(&self) -> &[StepModel<S>] {
        &self.steps
    }

    /// Gradient of step `t`'s NLL with respect to the combined noise vector.
    pub fn loss_input_gradient(&self, t: usize, v: &[S]) -> Result<Vec<S>> {
        Ok(self.step(t)?.loss_with_input_gradient(v)?.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{central_difference, max_rel_err};

    fn tiny_cfg() -> NoiseNetConfig {
        NoiseNetConfig {
            channels: 2,
            kernel: 3,
            dilations: vec![1, 2],
        }
    }

    #[test]
    fn lookback_matches_formula() {
        assert_eq!(NoiseNetConfig::default().max_lookback(), 124);
        assert_eq!(tiny_cfg().max_lookback(), (1 + 2) + (1 + 4));
    }

    #[test]
    fn sigma_stays_positive_for_random_weights() {
        let mut rng = Rng::from_seed(1);
        for trial in 0..20 {
            let mut model = StepModel::<f64>::init(tiny_cfg(), &mut rng).unwrap();
            // scramble every parameter, including the deviation head
            for p in model.params_mut() {
                let n = p.len();
                p.values = rng.gauss_vec(n).iter().map(|v| v * 3.0).collect();
            }
            let v: Vec<f64> = rng.gauss_vec(40);
            let (_, sigma) = model.predict(&v).unwrap();
            assert!(
                sigma.iter().all(|&s| s >= SIGMA_FLOOR),
                "trial {trial}: sigma dipped below the floor"
            );
        }
    }

    #[test]
    fn outputs_are_strictly_causal() {
        let mut rng = Rng::from_seed(2);
        let model = StepModel::<f64>::init(tiny_cfg(), &mut rng).unwrap();
        let v: Vec<f64> = rng.gauss_vec(32);
        let (mu0, s0) = model.predict(&v).unwrap();
        for j in 0..32 {
            let mut pert = v.clone();
            pert[j] += 0.7;
            let (mu1, s1) = model.predict(&pert).unwrap();
            for i in 0..=j {
                assert_eq!(mu0[i].to_bits(), mu1[i].to_bits(), "mu at {i} after poke {j}");
                assert_eq!(s0[i].to_bits(), s1[i].to_bits(), "sigma at {i} after poke {j}");
            }
        }
    }

    #[test]
    fn influence_stops_at_max_lookback() {
        let mut rng = Rng::from_seed(3);
        let model = StepModel::<f64>::init(tiny_cfg(), &mut rng).unwrap();
        let lb = tiny_cfg().max_lookback();
        let n = lb + 10;
        let v: Vec<f64> = rng.gauss_vec(n);
        let probe = n - 1;
        let mut pert = v.clone();
        pert[probe - lb - 1] += 1.0;
        let (mu0, _) = model.predict(&v).unwrap();
        let (mu1, _) = model.predict(&pert).unwrap();
        assert_eq!(mu0[probe].to_bits(), mu1[probe].to_bits());
    }

    #[test]
    fn constant_gaussian_ignores_input() {
        let model = StepModel::<f64>::constant_gaussian(tiny_cfg(), 0.25, 0.7).unwrap();
        let mut rng = Rng::from_seed(4);
        let v: Vec<f64> = rng.gauss_vec(50);
        let (mu, sigma) = model.predict(&v).unwrap();
        for i in 0..50 {
            assert!((mu[i] - 0.25).abs() < 1e-12);
            assert!((sigma[i] - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_nll_matches_closed_form() {
        let model = StepModel::<f64>::constant_gaussian(tiny_cfg(), 0.0, 0.7).unwrap();
        let v = vec![0.5f64, -0.5, 0.0, 1.0];
        let got = model.nll_value(&v).unwrap();
        let want = nll_loss(&v, &[0.0; 4], &[0.7; 4]).unwrap();
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn oracle_input_gradient_is_quadratic_form() {
        // constant mu = 0, sigma: gradient of the NLL is v / sigma^2
        let sigma = 0.6;
        let model = StepModel::<f64>::constant_gaussian(tiny_cfg(), 0.0, sigma).unwrap();
        let v = vec![0.4f64, -0.8, 0.0, 1.2];
        let (_, grad) = model.loss_with_input_gradient(&v).unwrap();
        for (g, x) in grad.iter().zip(&v) {
            assert!((g - x / (sigma * sigma)).abs() < 1e-9, "{g} vs {}", x / (sigma * sigma));
        }
        let (_, at_zero) = model.loss_with_input_gradient(&[0.0; 6]).unwrap();
        assert!(at_zero.iter().all(|&g| g.abs() < 1e-12));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = Rng::from_seed(5);
        let model = StepModel::<f64>::init(tiny_cfg(), &mut rng).unwrap();
        let v0: Vec<f64> = rng.gauss_vec(20);
        let (_, analytic) = model.loss_with_input_gradient(&v0).unwrap();
        let fd = central_difference(
            &|v: &[f64]| {
                let (mu, sigma) = model.predict(v).unwrap();
                nll_loss(v, &mu, &sigma).unwrap()
            },
            &v0,
            1e-5,
        );
        assert!(max_rel_err(&analytic, &fd) < 1e-4);
    }

    #[test]
    fn bank_accessors_and_validation() {
        let sched = DiffusionSchedule::linear(5, 1e-4, 0.2).unwrap();
        let bank = NoiseModel::<f64>::oracle_gaussian(tiny_cfg(), &sched, 0.5).unwrap();
        assert_eq!(bank.t_count(), 5);
        assert!(bank.step(1).is_ok() && bank.step(5).is_ok());
        assert!(bank.step(0).is_err() && bank.step(6).is_err());
        // deviation grows with t alongside g(t)
        let (_, s1) = bank.step(1).unwrap().predict(&[0.0; 4]).unwrap();
        let (_, s5) = bank.step(5).unwrap().predict(&[0.0; 4]).unwrap();
        assert!(s5[0] > s1[0]);
    }
}
