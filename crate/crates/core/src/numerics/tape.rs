//! Dynamic tape for reverse-mode differentiation.
//!
//! Values are small channel-major 2-D buffers (`channels x len`). Every
//! primitive records its inputs and the tape replays the chain rule in
//! reverse, yielding exact gradients for every leaf marked as requiring
//! them. No graph compilation; the networks here are tiny.

use crate::error::{Error, Result};
use crate::numerics::conv::{conv1d_backward, conv1d_forward, ConvSpec};
use crate::numerics::param::Param;
use crate::real::{from_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub len: usize,
}

impl Shape {
    pub fn new(channels: usize, len: usize) -> Self {
        Shape { channels, len }
    }

    pub fn count(&self) -> usize {
        self.channels * self.len
    }

    pub fn is_scalar(&self) -> bool {
        self.channels == 1 && self.len == 1
    }
}

/// A value stored on the tape.
#[derive(Debug, Clone)]
pub struct TensorData<S> {
    pub shape: Shape,
    pub data: Vec<S>,
}

impl<S: Real> TensorData<S> {
    pub fn new(shape: Shape, data: Vec<S>) -> Self {
        assert_eq!(shape.count(), data.len(), "shape/data length mismatch");
        TensorData { shape, data }
    }

    pub fn vector(data: Vec<S>) -> Self {
        let shape = Shape::new(1, data.len());
        TensorData { shape, data }
    }

    pub fn scalar(v: S) -> Self {
        TensorData {
            shape: Shape::new(1, 1),
            data: vec![v],
        }
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf { requires_grad: bool },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, S),
    Offset(NodeId, S),
    Neg(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    Square(NodeId),
    Sin(NodeId),
    /// Broadcast-add of a `(channels, 1)` bias over the length axis.
    AddBias { x: NodeId, bias: NodeId },
    Conv { x: NodeId, w: NodeId, spec: ConvSpec },
    /// Per-row direction/magnitude reparameterization: w_o = mag_o * dir_o / ||dir_o||.
    WeightNorm { dir: NodeId, mag: NodeId },
    SumAll(NodeId),
}

struct Node<S> {
    value: TensorData<S>,
    op: Op<S>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Real> Gradients<S> {
    /// Gradient of the scalar output with respect to the given node.
    /// Zero-filled if the node never influenced the output.
    pub fn wrt(&self, id: NodeId, tape: &Tape<S>) -> Vec<S> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => vec![S::zero(); tape.nodes[id.0].value.shape.count()],
        }
    }
}

/// Recording tape. Create one per forward pass.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &TensorData<S> {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> S {
        debug_assert!(self.nodes[id.0].value.shape.is_scalar());
        self.nodes[id.0].value.data[0]
    }

    fn push(&mut self, value: TensorData<S>, op: Op<S>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Inserts a leaf value. Gradients are tracked only when `requires_grad`.
    pub fn leaf(&mut self, value: TensorData<S>, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf { requires_grad })
    }

    pub fn constant(&mut self, value: TensorData<S>) -> NodeId {
        self.leaf(value, false)
    }

    pub fn constant_vector(&mut self, data: &[S]) -> NodeId {
        self.constant(TensorData::vector(data.to_vec()))
    }

    /// Inserts a parameter's current values as a gradient-tracked leaf.
    pub fn param(&mut self, p: &Param<S>) -> NodeId {
        self.leaf(
            TensorData::new(Shape::new(p.rows(), p.cols()), p.values.clone()),
            true,
        )
    }

    fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].value.shape
    }

    fn check_same_shape(&self, a: NodeId, b: NodeId, ctx: &'static str) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::LengthMismatch {
                context: ctx,
                left: sa.count(),
                right: sb.count(),
            });
        }
        Ok(sa)
    }

    fn zip_op(
        &mut self,
        a: NodeId,
        b: NodeId,
        ctx: &'static str,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<NodeId> {
        let shape = self.check_same_shape(a, b, ctx)?;
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(TensorData::new(shape, data), op))
    }

    fn map_op(&mut self, a: NodeId, f: impl Fn(S) -> S, op: Op<S>) -> NodeId {
        let shape = self.shape(a);
        let data = self.nodes[a.0].value.data.iter().map(|&x| f(x)).collect();
        self.push(TensorData::new(shape, data), op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, "tape add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, "tape sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, "tape mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, "tape div", |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> NodeId {
        self.map_op(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn offset(&mut self, a: NodeId, c: S) -> NodeId {
        self.map_op(a, |x| x + c, Op::Offset(a, c))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.map_op(a, |x| -x, Op::Neg(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map_op(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map_op(a, sigmoid_scalar, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.map_op(a, softplus_scalar, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.map_op(a, |x| x.exp(), Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.map_op(a, |x| x.ln(), Op::Log(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.map_op(a, |x| x.sqrt(), Op::Sqrt(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.map_op(a, |x| x * x, Op::Square(a))
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.map_op(a, |x| x.sin(), Op::Sin(a))
    }

    /// tanh(h) * sigmoid(g), the gated activation unit.
    pub fn gated(&mut self, h: NodeId, g: NodeId) -> Result<NodeId> {
        let th = self.tanh(h);
        let sg = self.sigmoid(g);
        self.mul(th, sg)
    }

    /// Adds a `(channels, 1)` bias to every time position of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let sx = self.shape(x);
        let sb = self.shape(bias);
        if sb.channels != sx.channels || sb.len != 1 {
            return Err(Error::LengthMismatch {
                context: "tape add_bias",
                left: sb.channels,
                right: sx.channels,
            });
        }
        let n = sx.len;
        let mut data = self.nodes[x.0].value.data.clone();
        for c in 0..sx.channels {
            let b = self.nodes[bias.0].value.data[c];
            for v in &mut data[c * n..(c + 1) * n] {
                *v += b;
            }
        }
        Ok(self.push(TensorData::new(sx, data), Op::AddBias { x, bias }))
    }

    pub fn conv1d(&mut self, x: NodeId, w: NodeId, spec: ConvSpec) -> Result<NodeId> {
        let sx = self.shape(x);
        if sx.channels != spec.in_channels {
            return Err(Error::LengthMismatch {
                context: "conv input channels",
                left: sx.channels,
                right: spec.in_channels,
            });
        }
        let y = conv1d_forward(&self.nodes[x.0].value.data, sx.len, &self.nodes[w.0].value.data, &spec)?;
        let shape = Shape::new(spec.out_channels, spec.out_len(sx.len));
        Ok(self.push(TensorData::new(shape, y), Op::Conv { x, w, spec }))
    }

    /// Weight-normalized kernel: row `o` of the result is
    /// `mag[o] * dir[o,:] / ||dir[o,:]||`.
    pub fn weight_norm(&mut self, dir: NodeId, mag: NodeId) -> Result<NodeId> {
        let sd = self.shape(dir);
        let sm = self.shape(mag);
        if sm.channels != sd.channels || sm.len != 1 {
            return Err(Error::LengthMismatch {
                context: "weight_norm magnitude",
                left: sm.channels,
                right: sd.channels,
            });
        }
        let n = sd.len;
        let mut data = vec![S::zero(); sd.count()];
        for o in 0..sd.channels {
            let row = &self.nodes[dir.0].value.data[o * n..(o + 1) * n];
            let norm = row.iter().fold(S::zero(), |a, &v| a + v * v).sqrt();
            let scale = self.nodes[mag.0].value.data[o] / norm;
            for (dst, &v) in data[o * n..(o + 1) * n].iter_mut().zip(row) {
                *dst = v * scale;
            }
        }
        Ok(self.push(TensorData::new(sd, data), Op::WeightNorm { dir, mag }))
    }

    /// Sums every element into a scalar node.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let total = self.nodes[a.0]
            .value
            .data
            .iter()
            .fold(S::zero(), |acc, &v| acc + v);
        self.push(TensorData::scalar(total), Op::SumAll(a))
    }

    /// Reverse pass from a scalar output node.
    pub fn backward(&self, out: NodeId) -> Result<Gradients<S>> {
        if !self.nodes[out.0].value.shape.is_scalar() {
            return Err(Error::invalid(
                "backward requires a scalar output node",
            ));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(vec![S::one()]);

        for idx in (0..=out.0).rev() {
            let Some(g_out) = grads[idx].take() else {
                continue;
            };
            // Tracked leaves keep their gradient; interior nodes propagate it.
            match &self.nodes[idx].op {
                Op::Leaf { requires_grad } => {
                    if *requires_grad {
                        grads[idx] = Some(g_out);
                    }
                    continue;
                }
                op => self.propagate(idx, op.clone(), &g_out, &mut grads),
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(grads: &mut [Option<Vec<S>>], id: NodeId, delta: impl Iterator<Item = S>, shape_count: usize) {
        let slot = grads[id.0].get_or_insert_with(|| vec![S::zero(); shape_count]);
        for (dst, d) in slot.iter_mut().zip(delta) {
            *dst += d;
        }
    }

    fn propagate(&self, idx: usize, op: Op<S>, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let val = |id: NodeId| &self.nodes[id.0].value.data;
        let cnt = |id: NodeId| self.nodes[id.0].value.shape.count();
        let out_val = &self.nodes[idx].value.data;
        match op {
            Op::Leaf { .. } => unreachable!(),
            Op::Add(a, b) => {
                Self::accumulate(grads, a, g.iter().copied(), cnt(a));
                Self::accumulate(grads, b, g.iter().copied(), cnt(b));
            }
            Op::Sub(a, b) => {
                Self::accumulate(grads, a, g.iter().copied(), cnt(a));
                Self::accumulate(grads, b, g.iter().map(|&v| -v), cnt(b));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(a).clone(), val(b).clone());
                Self::accumulate(grads, a, g.iter().zip(&vb).map(|(&gv, &y)| gv * y), cnt(a));
                Self::accumulate(grads, b, g.iter().zip(&va).map(|(&gv, &x)| gv * x), cnt(b));
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(a).clone(), val(b).clone());
                Self::accumulate(
                    grads,
                    a,
                    g.iter().zip(&vb).map(|(&gv, &y)| gv / y),
                    cnt(a),
                );
                Self::accumulate(
                    grads,
                    b,
                    g.iter()
                        .zip(va.iter().zip(&vb))
                        .map(|(&gv, (&x, &y))| -gv * x / (y * y)),
                    cnt(b),
                );
            }
            Op::Scale(a, c) => {
                Self::accumulate(grads, a, g.iter().map(|&v| v * c), cnt(a));
            }
            Op::Offset(a, _) => {
                Self::accumulate(grads, a, g.iter().copied(), cnt(a));
            }
            Op::Neg(a) => {
                Self::accumulate(grads, a, g.iter().map(|&v| -v), cnt(a));
            }
            Op::Tanh(a) => {
                // d tanh = 1 - tanh^2, reuse the stored output
                Self::accumulate(
                    grads,
                    a,
                    g.iter()
                        .zip(out_val)
                        .map(|(&gv, &y)| gv * (S::one() - y * y)),
                    cnt(a),
                );
            }
            Op::Sigmoid(a) => {
                Self::accumulate(
                    grads,
                    a,
                    g.iter()
                        .zip(out_val)
                        .map(|(&gv, &y)| gv * y * (S::one() - y)),
                    cnt(a),
                );
            }
            Op::Softplus(a) => {
                // d softplus = sigmoid(x)
                let va = val(a).clone();
                Self::accumulate(
                    grads,
                    a,
                    g.iter()
                        .zip(&va)
                        .map(|(&gv, &x)| gv * sigmoid_scalar(x)),
                    cnt(a),
                );
            }
            Op::Exp(a) => {
                Self::accumulate(
                    grads,
                    a,
                    g.iter().zip(out_val).map(|(&gv, &y)| gv * y),
                    cnt(a),
                );
            }
            Op::Log(a) => {
                let va = val(a).clone();
                Self::accumulate(grads, a, g.iter().zip(&va).map(|(&gv, &x)| gv / x), cnt(a));
            }
            Op::Sqrt(a) => {
                let half = from_f64::<S>(0.5);
                Self::accumulate(
                    grads,
                    a,
                    g.iter().zip(out_val).map(|(&gv, &y)| gv * half / y),
                    cnt(a),
                );
            }
            Op::Square(a) => {
                let two = from_f64::<S>(2.0);
                let va = val(a).clone();
                Self::accumulate(
                    grads,
                    a,
                    g.iter().zip(&va).map(|(&gv, &x)| gv * two * x),
                    cnt(a),
                );
            }
            Op::Sin(a) => {
                let va = val(a).clone();
                Self::accumulate(
                    grads,
                    a,
                    g.iter().zip(&va).map(|(&gv, &x)| gv * x.cos()),
                    cnt(a),
                );
            }
            Op::AddBias { x, bias } => {
                Self::accumulate(grads, x, g.iter().copied(), cnt(x));
                let sx = self.nodes[x.0].value.shape;
                let bias_grad = (0..sx.channels).map(|c| {
                    g[c * sx.len..(c + 1) * sx.len]
                        .iter()
                        .fold(S::zero(), |acc, &v| acc + v)
                });
                Self::accumulate(grads, bias, bias_grad, cnt(bias));
            }
            Op::Conv { x, w, spec } => {
                let n = self.nodes[x.0].value.shape.len;
                let (dx, dw) = conv1d_backward(val(x), n, val(w), g, &spec);
                Self::accumulate(grads, x, dx.into_iter(), cnt(x));
                Self::accumulate(grads, w, dw.into_iter(), cnt(w));
            }
            Op::WeightNorm { dir, mag } => {
                let sd = self.nodes[dir.0].value.shape;
                let n = sd.len;
                let vdir = val(dir).clone();
                let vmag = val(mag).clone();
                let mut ddir = vec![S::zero(); vdir.len()];
                let mut dmag = vec![S::zero(); vmag.len()];
                for o in 0..sd.channels {
                    let row = &vdir[o * n..(o + 1) * n];
                    let grow = &g[o * n..(o + 1) * n];
                    let norm = row.iter().fold(S::zero(), |a, &v| a + v * v).sqrt();
                    let dot = grow
                        .iter()
                        .zip(row)
                        .fold(S::zero(), |a, (&gv, &v)| a + gv * v);
                    dmag[o] = dot / norm;
                    let scale = vmag[o] / norm;
                    let proj = dot / (norm * norm);
                    for ((dd, &gv), &v) in ddir[o * n..(o + 1) * n]
                        .iter_mut()
                        .zip(grow)
                        .zip(row)
                    {
                        *dd = scale * (gv - proj * v);
                    }
                }
                Self::accumulate(grads, dir, ddir.into_iter(), cnt(dir));
                Self::accumulate(grads, mag, dmag.into_iter(), cnt(mag));
            }
            Op::SumAll(a) => {
                let gv = g[0];
                Self::accumulate(grads, a, std::iter::repeat_n(gv, cnt(a)), cnt(a));
            }
        }
    }
}

#[inline]
pub fn sigmoid_scalar<S: Real>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Numerically-stable log(1 + exp(x)).
#[inline]
pub fn softplus_scalar<S: Real>(x: S) -> S {
    let zero = S::zero();
    if x > zero {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
