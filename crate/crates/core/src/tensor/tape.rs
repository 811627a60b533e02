//! Reverse-mode differentiation over an explicit, append-only record of the
//! forward computation.
//!
//! Every layer call appends one node holding its output value and whatever
//! it needs for the backward pass. `backward` walks the record once in
//! reverse, so a tape is built per forward pass and dropped afterwards.

use super::conv::{
    conv2d_backward, conv2d_forward, reflect_pad_backward, reflect_pad_forward, transposed_backward,
    transposed_forward, ConvGeom, Pad2d, TransposedGeom,
};
use super::lstm::{lstm_sequence, lstm_sequence_backward, LstmCache, LstmParams};
use super::{gemm, gemm_nt, gemm_tn, Conv2dSpec, NamedTensorStore, Tensor};
use crate::error::{shape_err, Error, Result};

/// Clamp applied to predictions inside binary cross entropy.
pub const BCE_EPS: f64 = 1e-7;
/// Variance guard of instance normalization.
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param,
    Conv2d { x: Var, k: Var, b: Var, geom: ConvGeom },
    ConvT { x: Var, k: Var, b: Var, geom: TransposedGeom },
    ReflectPad { x: Var, pad: Pad2d },
    Dense { x: Var, w: Var, b: Var },
    Lstm { x: Var, wx: Var, wh: Var, b: Var, cache: LstmCache },
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Log1p(Var),
    InstanceNorm { x: Var, inv_std: Vec<f64> },
    Add(Var, Var),
    Scale(Var, f64),
    Concat(Var, Var),
    Reshape(Var),
    BroadcastRows(Var),
    Bce { pred: Var, target: Tensor },
    L1 { pred: Var, target: Tensor },
    Mse { pred: Var, target: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

/// Gradient of a scalar with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A constant: receives no gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, false)
    }

    /// A named trainable leaf.
    pub fn param(&mut self, name: &str, t: Tensor) -> Var {
        let v = self.push(t, Op::Param, true);
        self.params.push((name.to_string(), v));
        v
    }

    /// Registers every tensor of `store` as a parameter, looked up by name.
    pub fn params_from(&mut self, store: &NamedTensorStore) -> ParamVars {
        let vars = store
            .iter()
            .map(|(n, t)| (n.to_string(), self.param(n, t.clone())))
            .collect();
        ParamVars { vars }
    }

    pub fn conv2d(&mut self, x: Var, k: Var, b: Var, spec: Conv2dSpec) -> Result<Var> {
        let geom = ConvGeom::resolve(self.value(x).dims(), self.value(k).dims(), &spec)?;
        self.value(b).expect_dims(&[geom.cout], "conv bias")?;
        let out = conv2d_forward(
            self.value(x).data(),
            self.value(k).data(),
            self.value(b).data(),
            &geom,
        );
        let t = Tensor::new(&[geom.ho, geom.wo, geom.cout], out)?;
        let ng = self.needs(&[x, k, b]);
        Ok(self.push(t, Op::Conv2d { x, k, b, geom }, ng))
    }

    /// Transposed convolution; each output axis has size
    /// `(n - 1) * stride - 2 * padding + k + output_padding`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        k: Var,
        b: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let geom = TransposedGeom::resolve(
            self.value(x).dims(),
            self.value(k).dims(),
            stride,
            padding,
            output_padding,
        )?;
        let od = geom.out_dims();
        self.value(b).expect_dims(&[od[2]], "transposed conv bias")?;
        let out = transposed_forward(
            self.value(x).data(),
            self.value(k).data(),
            self.value(b).data(),
            &geom,
        );
        let t = Tensor::new(&od, out)?;
        let ng = self.needs(&[x, k, b]);
        Ok(self.push(t, Op::ConvT { x, k, b, geom }, ng))
    }

    pub fn reflect_pad(&mut self, x: Var, pad: Pad2d) -> Result<Var> {
        let d = self.value(x).dims();
        if d.len() != 3 {
            return Err(shape_err!("reflect_pad needs [H, W, C], got {d:?}"));
        }
        if pad.top >= d[0] || pad.bottom >= d[0] || pad.left >= d[1] || pad.right >= d[1] {
            return Err(shape_err!("reflection padding {pad:?} too large for {d:?}"));
        }
        let (out, od) = reflect_pad_forward(self.value(x).data(), [d[0], d[1], d[2]], pad);
        let t = Tensor::new(&od, out)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::ReflectPad { x, pad }, ng))
    }

    /// `x [..., din] * w [din, dout] + b`, applied independently per leading index.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xd = self.value(x).dims().to_vec();
        let wd = self.value(w).dims();
        if wd.len() != 2 {
            return Err(shape_err!("dense weight must be [din, dout], got {wd:?}"));
        }
        let (din, dout) = (wd[0], wd[1]);
        if xd.last() != Some(&din) {
            return Err(shape_err!("dense input trailing dim {:?} != {din}", xd.last()));
        }
        self.value(b).expect_dims(&[dout], "dense bias")?;
        let rows = self.value(x).numel() / din;
        let mut out = vec![0.0; rows * dout];
        for r in out.chunks_mut(dout) {
            r.copy_from_slice(self.value(b).data());
        }
        gemm(rows, din, dout, self.value(x).data(), self.value(w).data(), &mut out, true);
        let mut od = xd;
        *od.last_mut().unwrap() = dout;
        let t = Tensor::new(&od, out)?;
        let ng = self.needs(&[x, w, b]);
        Ok(self.push(t, Op::Dense { x, w, b }, ng))
    }

    /// Unidirectional LSTM over `x [T, din]` from a zero state; output `[T, units]`.
    pub fn lstm(&mut self, x: Var, wx: Var, wh: Var, b: Var) -> Result<Var> {
        let params = LstmParams {
            wx: self.value(wx),
            wh: self.value(wh),
            b: self.value(b),
        };
        let (out, cache) = lstm_sequence(self.value(x), params)?;
        let ng = self.needs(&[x, wx, wh, b]);
        Ok(self.push(out, Op::Lstm { x, wx, wh, b, cache }, ng))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x).map(f);
        let ng = self.needs(&[x]);
        self.push(t, op, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn log1p(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln_1p, Op::Log1p(x))
    }

    /// Per-channel normalization of an `[H, W, C]` image over its spatial
    /// positions (biased variance, no affine terms).
    pub fn instance_norm(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        if xt.rank() != 3 {
            return Err(shape_err!("instance_norm needs [H, W, C], got {:?}", xt.dims()));
        }
        let c = xt.dims()[2];
        let n = xt.numel() / c;
        let data = xt.data();
        let mut mean = vec![0.0; c];
        for px in data.chunks(c) {
            for (m, v) in mean.iter_mut().zip(px) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; c];
        for px in data.chunks(c) {
            for k in 0..c {
                let d = px[k] - mean[k];
                var[k] += d * d;
            }
        }
        let inv_std: Vec<f64> = var
            .iter()
            .map(|v| 1.0 / (v / n as f64 + INSTANCE_NORM_EPS).sqrt())
            .collect();
        let mut out = data.to_vec();
        for px in out.chunks_mut(c) {
            for k in 0..c {
                px[k] = (px[k] - mean[k]) * inv_std[k];
            }
        }
        let t = Tensor::new(xt.dims(), out)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::InstanceNorm { x, inv_std }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).dims() != self.value(b).dims() {
            return Err(shape_err!(
                "add: {:?} vs {:?}",
                self.value(a).dims(),
                self.value(b).dims()
            ));
        }
        let mut t = self.value(a).clone();
        t.add_assign(self.value(b));
        let ng = self.needs(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    /// Joins two `[T, a]`, `[T, b]` matrices into `[T, a + b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ad, bd) = (self.value(a).dims(), self.value(b).dims());
        if ad.len() != 2 || bd.len() != 2 || ad[0] != bd[0] {
            return Err(shape_err!("concat needs [T, a] and [T, b], got {ad:?} and {bd:?}"));
        }
        let (rows, wa, wb) = (ad[0], ad[1], bd[1]);
        let mut out = Vec::with_capacity(rows * (wa + wb));
        for r in 0..rows {
            out.extend_from_slice(self.value(a).row(r));
            out.extend_from_slice(self.value(b).row(r));
        }
        let t = Tensor::new(&[rows, wa + wb], out)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(t, Op::Concat(a, b), ng))
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Result<Var> {
        let t = self.value(x).reshape(dims)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::Reshape(x), ng))
    }

    /// Repeats a vector `[d]` as every row of a `[rows, d]` matrix.
    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let xt = self.value(x);
        if xt.rank() != 1 || rows == 0 {
            return Err(shape_err!("broadcast_rows needs a vector and rows >= 1"));
        }
        let d = xt.numel();
        let data: Vec<f64> = (0..rows).flat_map(|_| xt.data().iter().copied()).collect();
        let t = Tensor::new(&[rows, d], data)?;
        let ng = self.needs(&[x]);
        Ok(self.push(t, Op::BroadcastRows(x), ng))
    }

    fn loss_check(&self, pred: Var, target: &Tensor, what: &str) -> Result<()> {
        if self.value(pred).dims() != target.dims() {
            return Err(shape_err!(
                "{what}: prediction {:?} vs target {:?}",
                self.value(pred).dims(),
                target.dims()
            ));
        }
        Ok(())
    }

    /// Mean binary cross entropy, predictions clamped to `[eps, 1 - eps]`.
    pub fn bce(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        self.loss_check(pred, target, "bce")?;
        let v = bce_value(self.value(pred).data(), target.data());
        let ng = self.needs(&[pred]);
        Ok(self.push(Tensor::scalar(v), Op::Bce { pred, target: target.clone() }, ng))
    }

    pub fn l1(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        self.loss_check(pred, target, "l1")?;
        let p = self.value(pred).data();
        let v = p.iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64;
        let ng = self.needs(&[pred]);
        Ok(self.push(Tensor::scalar(v), Op::L1 { pred, target: target.clone() }, ng))
    }

    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        self.loss_check(pred, target, "mse")?;
        let p = self.value(pred).data();
        let v = p.iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        let ng = self.needs(&[pred]);
        Ok(self.push(Tensor::scalar(v), Op::Mse { pred, target: target.clone() }, ng))
    }

    /// Gradients of the scalar `loss` for every node on the tape.
    pub fn backward_full(&self, loss: Var) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Usage(
                "backward on a value that was not recorded on this tape".into(),
            ));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got dims {:?}",
                self.nodes[loss.0].value.dims()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradients for every tensor in `params` by name; zero for parameters
    /// that did not take part in computing `loss`.
    pub fn backward(&self, loss: Var, params: &NamedTensorStore) -> Result<NamedTensorStore> {
        Ok(self.backward_many(loss, &[params])?.pop().expect("one store in, one out"))
    }

    /// `backward` for several stores from a single reverse sweep.
    pub fn backward_many(&self, loss: Var, stores: &[&NamedTensorStore]) -> Result<Vec<NamedTensorStore>> {
        let full = self.backward_full(loss)?;
        let mut outs: Vec<NamedTensorStore> = stores.iter().map(|s| s.zeros_like()).collect();
        for (name, v) in &self.params {
            let Some(g) = full.get(*v) else { continue };
            for out in outs.iter_mut() {
                if let Some(slot) = out.get_mut(name) {
                    if slot.dims() != g.dims() {
                        return Err(shape_err!("gradient for '{name}' has dims {:?}", g.dims()));
                    }
                    slot.add_assign(g);
                }
            }
        }
        Ok(outs)
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, data: Vec<f64>| -> Result<()> {
            if !self.nodes[v.0].needs_grad {
                return Ok(());
            }
            let dims = self.nodes[v.0].value.dims();
            match &mut grads[v.0] {
                Some(t) => {
                    for (a, b) in t.data_mut().iter_mut().zip(&data) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(Tensor::new(dims, data)?),
            }
            Ok(())
        };
        match &node.op {
            Op::Input | Op::Param => {}
            Op::Conv2d { x, k, b, geom } => {
                let (dx, dk, db) = conv2d_backward(val(*x).data(), val(*k).data(), gd, geom, wants(*x));
                if let Some(dx) = dx {
                    acc(*x, dx)?;
                }
                acc(*k, dk)?;
                acc(*b, db)?;
            }
            Op::ConvT { x, k, b, geom } => {
                let (dx, dk, db) = transposed_backward(val(*x).data(), val(*k).data(), gd, geom, wants(*x));
                if let Some(dx) = dx {
                    acc(*x, dx)?;
                }
                acc(*k, dk)?;
                acc(*b, db)?;
            }
            Op::ReflectPad { x, pad } => {
                let d = val(*x).dims();
                acc(*x, reflect_pad_backward(gd, [d[0], d[1], d[2]], *pad))?;
            }
            Op::Dense { x, w, b } => {
                let (din, dout) = (val(*w).dims()[0], val(*w).dims()[1]);
                let rows = val(*x).numel() / din;
                if wants(*w) {
                    let mut dw = vec![0.0; din * dout];
                    gemm_tn(din, rows, dout, val(*x).data(), gd, &mut dw, false);
                    acc(*w, dw)?;
                }
                if wants(*b) {
                    let mut db = vec![0.0; dout];
                    for r in gd.chunks(dout) {
                        for (d, v) in db.iter_mut().zip(r) {
                            *d += v;
                        }
                    }
                    acc(*b, db)?;
                }
                if wants(*x) {
                    let mut dx = vec![0.0; rows * din];
                    gemm_nt(rows, dout, din, gd, val(*w).data(), &mut dx, false);
                    acc(*x, dx)?;
                }
            }
            Op::Lstm { x, wx, wh, b, cache } => {
                let params = LstmParams {
                    wx: val(*wx),
                    wh: val(*wh),
                    b: val(*b),
                };
                let lg = lstm_sequence_backward(val(*x), &node.value, cache, gd, params, wants(*x));
                if let Some(dx) = lg.dx {
                    acc(*x, dx)?;
                }
                acc(*wx, lg.dwx)?;
                acc(*wh, lg.dwh)?;
                acc(*b, lg.db)?;
            }
            Op::Relu(x) => {
                let d = node.value.data().iter().zip(gd).map(|(y, g)| if *y > 0.0 { *g } else { 0.0 }).collect();
                acc(*x, d)?;
            }
            Op::LeakyRelu(x, slope) => {
                let d = val(*x).data().iter().zip(gd).map(|(v, g)| if *v > 0.0 { *g } else { slope * g }).collect();
                acc(*x, d)?;
            }
            Op::Sigmoid(x) => {
                let d = node.value.data().iter().zip(gd).map(|(y, g)| g * y * (1.0 - y)).collect();
                acc(*x, d)?;
            }
            Op::Tanh(x) => {
                let d = node.value.data().iter().zip(gd).map(|(y, g)| g * (1.0 - y * y)).collect();
                acc(*x, d)?;
            }
            Op::Log1p(x) => {
                let d = val(*x).data().iter().zip(gd).map(|(v, g)| g / (1.0 + v)).collect();
                acc(*x, d)?;
            }
            Op::InstanceNorm { x, inv_std } => {
                let c = inv_std.len();
                let n = node.value.numel() / c;
                let y = node.value.data();
                let mut sum_g = vec![0.0; c];
                let mut sum_gy = vec![0.0; c];
                for (py, pg) in y.chunks(c).zip(gd.chunks(c)) {
                    for k in 0..c {
                        sum_g[k] += pg[k];
                        sum_gy[k] += pg[k] * py[k];
                    }
                }
                let nf = n as f64;
                let mut dx = vec![0.0; y.len()];
                for ((px, py), pg) in dx.chunks_mut(c).zip(y.chunks(c)).zip(gd.chunks(c)) {
                    for k in 0..c {
                        px[k] = inv_std[k] / nf * (nf * pg[k] - sum_g[k] - py[k] * sum_gy[k]);
                    }
                }
                acc(*x, dx)?;
            }
            Op::Add(a, b) => {
                acc(*a, gd.to_vec())?;
                acc(*b, gd.to_vec())?;
            }
            Op::Scale(x, c) => acc(*x, gd.iter().map(|g| g * c).collect())?,
            Op::Concat(a, b) => {
                let (wa, wb) = (val(*a).dims()[1], val(*b).dims()[1]);
                let rows = val(*a).dims()[0];
                let mut da = Vec::with_capacity(rows * wa);
                let mut db = Vec::with_capacity(rows * wb);
                for r in gd.chunks(wa + wb) {
                    da.extend_from_slice(&r[..wa]);
                    db.extend_from_slice(&r[wa..]);
                }
                acc(*a, da)?;
                acc(*b, db)?;
            }
            Op::Reshape(x) => acc(*x, gd.to_vec())?,
            Op::BroadcastRows(x) => {
                let d = val(*x).numel();
                let mut dx = vec![0.0; d];
                for r in gd.chunks(d) {
                    for (a, b) in dx.iter_mut().zip(r) {
                        *a += b;
                    }
                }
                acc(*x, dx)?;
            }
            Op::Bce { pred, target } => {
                let n = target.numel() as f64;
                let d = val(*pred)
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&p, &t)| {
                        if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                            0.0
                        } else {
                            gd[0] * (p - t) / (p * (1.0 - p)) / n
                        }
                    })
                    .collect();
                acc(*pred, d)?;
            }
            Op::L1 { pred, target } => {
                let n = target.numel() as f64;
                let d = val(*pred)
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(p, t)| {
                        let s = if p > t {
                            1.0
                        } else if p < t {
                            -1.0
                        } else {
                            0.0
                        };
                        gd[0] * s / n
                    })
                    .collect();
                acc(*pred, d)?;
            }
            Op::Mse { pred, target } => {
                let n = target.numel() as f64;
                let d = val(*pred)
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(p, t)| gd[0] * 2.0 * (p - t) / n)
                    .collect();
                acc(*pred, d)?;
            }
        }
        Ok(())
    }
}

/// Parameter handles registered from a store, by name.
pub struct ParamVars {
    vars: Vec<(String, Var)>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Usage(format!("missing parameter '{name}'")))
    }
}

/// How a weight store enters a tape: as trainable parameters or as
/// constants that receive no gradient.
pub enum ParamSource {
    Constants,
    Trainable(ParamVars),
}

impl ParamSource {
    pub fn trainable(tape: &mut Tape, store: &NamedTensorStore) -> Self {
        ParamSource::Trainable(tape.params_from(store))
    }

    pub fn var(&self, tape: &mut Tape, store: &NamedTensorStore, name: &str) -> Result<Var> {
        match self {
            ParamSource::Constants => Ok(tape.input(store.require(name)?.clone())),
            ParamSource::Trainable(vars) => vars.get(name),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn bce_value(pred: &[f64], target: &[f64]) -> f64 {
    let s: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    s / pred.len() as f64
}
