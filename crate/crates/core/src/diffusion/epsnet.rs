//! The trainable noise-prediction backbone: a stack of gated dilated
//! (non-causal) conv layers with a sinusoidal step embedding added per
//! layer and residual connections between layers.

use crate::error::{Error, Result};
use crate::numerics::{ConvSpec, PadMode, Param, Rng, Shape, Tape, TensorData};
use crate::real::{from_f64, Real};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpsNetConfig {
    pub channels: usize,
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub emb_dim: usize,
}

impl Default for EpsNetConfig {
    fn default() -> Self {
        EpsNetConfig {
            channels: 16,
            kernel: 3,
            dilations: vec![1, 2, 4, 8, 16, 32],
            emb_dim: 16,
        }
    }
}

impl EpsNetConfig {
    pub fn layers(&self) -> usize {
        self.dilations.len()
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.dilations.is_empty() {
            return Err(Error::invalid("backbone needs channels >= 1 and >= 1 layer"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::invalid("backbone kernel must be odd (centered padding)"));
        }
        if self.emb_dim < 2 || !self.emb_dim.is_multiple_of(2) {
            return Err(Error::invalid("embedding dimension must be even and >= 2"));
        }
        Ok(())
    }
}

const PARAMS_PER_LAYER: usize = 8;

/// Noise-prediction network. Parameters live in a flat list with stable
/// names so the weights file can address them.
#[derive(Debug, Clone)]
pub struct EpsilonNet<S: Real> {
    pub cfg: EpsNetConfig,
    params: Vec<Param<S>>,
}

impl<S: Real> EpsilonNet<S> {
    /// Random initialization. The output projection starts at zero so the
    /// untrained net predicts zero noise.
    pub fn init(cfg: EpsNetConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let k = cfg.kernel;
        let mut params = Vec::new();

        let gauss =
            |rng: &mut Rng, n: usize, std: f64| -> Vec<S> {
                (0..n).map(|_| rng.gauss::<S>() * from_f64(std)).collect()
            };

        params.push(Param::new("in.w", c, 1, gauss(rng, c, 1.0)));
        params.push(Param::zeros("in.b", c, 1));
        for (i, _) in cfg.dilations.iter().enumerate() {
            let std = 1.0 / ((c * k) as f64).sqrt();
            let estd = 1.0 / (cfg.emb_dim as f64).sqrt();
            let rstd = 1.0 / (c as f64).sqrt();
            params.push(Param::new(format!("l{i}.filter.w"), c, c * k, gauss(rng, c * c * k, std)));
            params.push(Param::zeros(format!("l{i}.filter.b"), c, 1));
            params.push(Param::new(format!("l{i}.gate.w"), c, c * k, gauss(rng, c * c * k, std)));
            params.push(Param::zeros(format!("l{i}.gate.b"), c, 1));
            params.push(Param::new(format!("l{i}.emb.filter"), c, cfg.emb_dim, gauss(rng, c * cfg.emb_dim, estd)));
            params.push(Param::new(format!("l{i}.emb.gate"), c, cfg.emb_dim, gauss(rng, c * cfg.emb_dim, estd)));
            params.push(Param::new(format!("l{i}.res.w"), c, c, gauss(rng, c * c, rstd)));
            params.push(Param::zeros(format!("l{i}.res.b"), c, 1));
        }
        params.push(Param::zeros("out.w", 1, c));
        params.push(Param::zeros("out.b", 1, 1));

        Ok(EpsilonNet { cfg, params })
    }

    /// Rebuilds a net from a parameter list (weights-file loading). Names
    /// and shapes must match the layout `init` produces.
    pub fn from_params(cfg: EpsNetConfig, params: Vec<Param<S>>) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::from_seed(0);
        let reference = Self::init(cfg.clone(), &mut rng)?;
        if params.len() != reference.params.len() {
            return Err(Error::Weights(format!(
                "backbone expects {} parameter blocks, file has {}",
                reference.params.len(),
                params.len()
            )));
        }
        for (have, want) in params.iter().zip(&reference.params) {
            if have.name != want.name || have.rows() != want.rows() || have.cols() != want.cols() {
                return Err(Error::Weights(format!(
                    "parameter block mismatch: file has {} ({}x{}), expected {} ({}x{})",
                    have.name,
                    have.rows(),
                    have.cols(),
                    want.name,
                    want.rows(),
                    want.cols()
                )));
            }
        }
        Ok(EpsilonNet { cfg, params })
    }

    pub fn params(&self) -> &[Param<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.params.iter_mut().collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Sinusoidal features of the step index, frequencies geometrically
    /// spaced from 1 down to 1e-4.
    pub fn step_embedding(&self, t: usize) -> Vec<S> {
        let half = self.cfg.emb_dim / 2;
        let mut emb = Vec::with_capacity(self.cfg.emb_dim);
        for j in 0..half {
            let expo = if half > 1 { j as f64 / (half - 1) as f64 } else { 0.0 };
            let freq = 10f64.powf(-4.0 * expo);
            emb.push(from_f64((t as f64 * freq).sin()));
        }
        for j in 0..half {
            let expo = if half > 1 { j as f64 / (half - 1) as f64 } else { 0.0 };
            let freq = 10f64.powf(-4.0 * expo);
            emb.push(from_f64((t as f64 * freq).cos()));
        }
        emb
    }

    /// Registers every parameter on a tape, in layout order.
    pub fn register(&self, tape: &mut Tape<S>) -> Vec<crate::numerics::NodeId> {
        self.params.iter().map(|p| tape.param(p)).collect()
    }

    /// Builds the forward graph for one input; `nodes` must come from
    /// [`register`] on the same tape. Returns the `(1, n)` prediction node.
    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        nodes: &[crate::numerics::NodeId],
        x: crate::numerics::NodeId,
        t: usize,
    ) -> Result<crate::numerics::NodeId> {
        let c = self.cfg.channels;
        let k = self.cfg.kernel;
        let emb = self.step_embedding(t);
        let emb_node = tape.constant(TensorData::new(Shape::new(self.cfg.emb_dim, 1), emb));
        let one_by_one = |ic: usize, oc: usize| ConvSpec {
            in_channels: ic,
            out_channels: oc,
            kernel: 1,
            dilation: 1,
            pad: PadMode::Same,
        };
        let emb_spec = ConvSpec {
            in_channels: self.cfg.emb_dim,
            out_channels: c,
            kernel: 1,
            dilation: 1,
            pad: PadMode::Same,
        };

        let mut h = tape.conv1d(x, nodes[0], one_by_one(1, c))?;
        h = tape.add_bias(h, nodes[1])?;

        for (i, &d) in self.cfg.dilations.iter().enumerate() {
            let base = 2 + i * PARAMS_PER_LAYER;
            let spec = ConvSpec {
                in_channels: c,
                out_channels: c,
                kernel: k,
                dilation: d,
                pad: PadMode::Same,
            };
            let mut f = tape.conv1d(h, nodes[base], spec)?;
            f = tape.add_bias(f, nodes[base + 1])?;
            let fe = tape.conv1d(emb_node, nodes[base + 4], emb_spec)?;
            f = tape.add_bias(f, fe)?;

            let mut g = tape.conv1d(h, nodes[base + 2], spec)?;
            g = tape.add_bias(g, nodes[base + 3])?;
            let ge = tape.conv1d(emb_node, nodes[base + 5], emb_spec)?;
            g = tape.add_bias(g, ge)?;

            let z = tape.gated(f, g)?;
            let mut r = tape.conv1d(z, nodes[base + 6], one_by_one(c, c))?;
            r = tape.add_bias(r, nodes[base + 7])?;
            h = tape.add(h, r)?;
        }

        let base = 2 + self.cfg.dilations.len() * PARAMS_PER_LAYER;
        let out = tape.conv1d(h, nodes[base], one_by_one(c, 1))?;
        tape.add_bias(out, nodes[base + 1])
    }

    /// Inference: predicted injected noise for `x_t` at step `t`.
    pub fn predict(&self, x_t: &[S], t: usize) -> Result<Vec<S>> {
        let mut tape = Tape::new();
        let nodes = self.register(&mut tape);
        let x = tape.constant_vector(x_t);
        let out = self.forward(&mut tape, &nodes, x, t)?;
        Ok(tape.value(out).data.clone())
    }
}
