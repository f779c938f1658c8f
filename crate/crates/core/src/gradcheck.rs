//! Central finite-difference checks of the analytic gradients.
//!
//! [`finite_diff_check`] evaluates the perturbed losses with its own
//! plain-loop forward pass. A base pass is computed once; a perturbed pass
//! then only propagates the change a single parameter causes (a kernel
//! entry of output channel `o` changes channel `o` alone, a weight in row
//! `r` changes unit `r` alone), in double-double arithmetic. Without that,
//! the rounding of losses of order 10 swamps gradients of order 1e-8.
//! Perturbations that move a ReLU-family input across zero or change a
//! pooling argmax are skipped, since the loss is not differentiable there.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure, Result};
use crate::graph::{ComputeGraph, NodeId};
use crate::nn::activation::Activation;
use crate::nn::model::Layer;
use crate::nn::{Model, ModelSpec, Target};
use crate::tensor::Tensor;
use crate::training::Batch;

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Max over checked entries of `|g_auto - g_fd| / max(|g_fd|, 1e-8)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose perturbation crossed a non-differentiable point.
    pub skipped: usize,
    /// `(parameter, entry)` attaining the maximum.
    pub worst: Option<(usize, usize)>,
    /// Analytic and finite-difference values at `worst`.
    pub worst_values: (f64, f64),
}

impl GradCheck {
    fn new() -> Self {
        Self { max_rel_error: 0.0, checked: 0, skipped: 0, worst: None, worst_values: (0.0, 0.0) }
    }

    fn record(&mut self, auto: f64, fd: f64, at: (usize, usize)) {
        let e = relative_error(auto, fd);
        self.checked += 1;
        if !(e <= self.max_rel_error) {
            self.max_rel_error = e;
            self.worst = Some(at);
            self.worst_values = (auto, fd);
        }
    }
}

pub fn relative_error(auto: f64, fd: f64) -> f64 {
    libm::fabs(auto - fd) / libm::fabs(fd).max(1e-8)
}

fn check_step(h: f64) -> Result<()> {
    ensure!(h.is_finite() && h > 0.0, "finite-difference step must be positive, got {h}");
    Ok(())
}

/// Checks every entry of `params` for the scalar built by `build`, which
/// receives one node per parameter tensor.
pub fn finite_diff_graph<F>(params: &[Tensor], h: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut ComputeGraph, &[NodeId]) -> Result<NodeId>,
{
    check_step(h)?;
    let eval = |ps: &[Tensor]| -> Result<(ComputeGraph, NodeId)> {
        let mut g = ComputeGraph::new();
        let ids: Vec<NodeId> = ps.iter().enumerate().map(|(i, p)| g.param(i, p, true)).collect();
        let loss = build(&mut g, &ids)?;
        Ok((g, loss))
    };
    let (g, loss) = eval(params)?;
    let grads = g.backward(loss)?;
    let mut auto: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
    for (i, gr) in g.param_grads(&grads) {
        auto[i].copy_from_slice(gr);
    }
    let mut report = GradCheck::new();
    let mut work = params.to_vec();
    for i in 0..params.len() {
        for (e, &a) in auto[i].iter().enumerate() {
            let x = params[i].data()[e];
            work[i].data_mut()[e] = x + h;
            let (gp, lp) = eval(&work)?;
            work[i].data_mut()[e] = x - h;
            let (gm, lm) = eval(&work)?;
            work[i].data_mut()[e] = x;
            let fd = (gp.value(lp).data()[0] - gm.value(lm).data()[0]) / (2.0 * h);
            report.record(a, fd, (i, e));
        }
    }
    Ok(report)
}

/// Compares the model's analytic gradients of the batch loss with central
/// differences of step `h` over every trainable parameter entry.
pub fn finite_diff_check(model: &Model, batch: &Batch, h: f64) -> Result<GradCheck> {
    check_step(h)?;
    let auto = analytic(model, batch)?;
    let net = RefNet::new(model, batch)?;
    let base = net.base_pass();
    let mut report = GradCheck::new();
    let (mut ci, mut di) = (0, 0);
    for layer in model.layers() {
        match *layer {
            Layer::Conv { kernel, slope } => {
                net.check_conv(ci, kernel, slope, &base, &auto, h, model, &mut report);
                ci += 1;
            }
            Layer::Dense { weight, bias, slope } => {
                net.check_dense(di, weight, bias, slope, &base, &auto, h, model, &mut report);
                di += 1;
            }
        }
    }
    Ok(report)
}

fn analytic(model: &Model, batch: &Batch) -> Result<Vec<Vec<f64>>> {
    let mut g = ComputeGraph::new();
    let x = g.input(batch.inputs.clone());
    let a = batch.aux.clone().map(|t| g.input(t));
    let out = model.forward(&mut g, x, a)?;
    let loss = match model.spec().target {
        Target::Energy => g.relative_rmse(out, &batch.targets)?,
        Target::PositionX => g.rmse(out, &batch.targets)?,
    };
    let grads = g.backward(loss)?;
    let mut auto: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
    for (i, gr) in g.param_grads(&grads) {
        auto[i].copy_from_slice(gr);
    }
    Ok(auto)
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1

fn split(a: f64) -> (f64, f64) {
    let t = SPLITTER * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    Dd { hi: p, lo: ((ah * bh - p) + ah * bl + al * bh) + al * bl }
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn neg(self) -> Self {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let s = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(s.hi, s.lo + t.lo)
    }

    fn add_f(self, b: f64) -> Dd {
        let s = two_sum(self.hi, b);
        quick_two_sum(s.hi, s.lo + self.lo)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = two_prod(self.hi, o.hi);
        quick_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }

    fn mul_f(self, b: f64) -> Dd {
        let p = two_prod(self.hi, b);
        quick_two_sum(p.hi, p.lo + self.lo * b)
    }

    fn div_f(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let r = self.sub(two_prod(q1, b));
        let q2 = r.hi / b;
        let r = r.sub(two_prod(q2, b));
        let q3 = r.hi / b;
        quick_two_sum(q1, q2).add_f(q3)
    }

    fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let s = libm::sqrt(self.hi);
        let r = self.sub(two_prod(s, s));
        quick_two_sum(s, r.hi / (2.0 * s))
    }

    fn positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }

    fn gt(self, o: Dd) -> bool {
        self.hi > o.hi || (self.hi == o.hi && self.lo > o.lo)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// Running fingerprint of the activation pattern (signs at kinks, pooling
/// argmaxes) of the part of a forward pass a perturbation touches.
#[derive(Clone, Copy, PartialEq, Eq)]
struct Sig(u64);

impl Sig {
    fn new() -> Self {
        Sig(FNV_OFFSET)
    }

    fn mix(&mut self, v: u64) {
        self.0 = (self.0 ^ v).wrapping_mul(0x0100_0000_01b3);
    }
}

#[derive(Clone, Copy)]
struct ConvShape {
    in_ch: usize,
    h: usize,
    w: usize,
    out_ch: usize,
    k: usize,
    ho: usize,
    wo: usize,
    window: usize,
    stride: usize,
    hp: usize,
    wp: usize,
}

impl ConvShape {
    fn pre_plane(&self) -> usize {
        self.ho * self.wo
    }

    fn out_plane(&self) -> usize {
        self.hp * self.wp
    }
}

struct ConvStage {
    shape: ConvShape,
    kernel: usize,
    slope: Option<usize>,
}

struct DenseStage {
    weight: usize,
    bias: usize,
    slope: Option<usize>,
    inputs: usize,
    outputs: usize,
}

/// Values of the unperturbed forward pass.
struct Base {
    /// Input of each conv layer, `[B, C, H, W]`.
    conv_in: Vec<Vec<f64>>,
    conv_pre: Vec<Vec<f64>>,
    conv_out: Vec<Vec<f64>>,
    /// Input of each dense layer after aux concatenation, `[B, inputs]`.
    dense_in: Vec<Vec<f64>>,
    dense_z: Vec<Vec<f64>>,
    /// Activated outputs; equal to `dense_z` for the output layer.
    dense_a: Vec<Vec<f64>>,
}

/// Change of a `[B, width]` activation restricted to the listed columns;
/// `values` is `[B, active.len()]`.
struct Delta {
    active: Vec<usize>,
    values: Vec<Dd>,
}

struct RefNet<'a> {
    spec: &'a ModelSpec,
    batch: &'a Batch,
    b: usize,
    p: Vec<&'a [f64]>,
    convs: Vec<ConvStage>,
    dense: Vec<DenseStage>,
}

impl<'a> RefNet<'a> {
    fn new(model: &'a Model, batch: &'a Batch) -> Result<Self> {
        let spec = model.spec();
        let b = batch.targets.len();
        ensure!(b >= 1, "empty batch");
        let p: Vec<&[f64]> = model.params().iter().map(|t| t.data()).collect();
        let (mut c, mut h, mut w) = (1, spec.input_size, spec.input_size);
        let mut convs = Vec::new();
        let mut dense = Vec::new();
        for layer in model.layers() {
            match *layer {
                Layer::Conv { kernel, slope } => {
                    let ks = model.params()[kernel].shape();
                    let (o, k) = (ks[0], ks[2]);
                    let pool = spec.pool_layers[convs.len()];
                    let (ho, wo) = (h - k + 1, w - k + 1);
                    let hp = (ho - pool.window) / pool.stride + 1;
                    let wp = (wo - pool.window) / pool.stride + 1;
                    let shape =
                        ConvShape { in_ch: c, h, w, out_ch: o, k, ho, wo, window: pool.window, stride: pool.stride, hp, wp };
                    convs.push(ConvStage { shape, kernel, slope });
                    (c, h, w) = (o, hp, wp);
                }
                Layer::Dense { weight, bias, slope } => {
                    let ws = model.params()[weight].shape();
                    dense.push(DenseStage { weight, bias, slope, inputs: ws[1], outputs: ws[0] });
                }
            }
        }
        Ok(Self { spec, batch, b, p, convs, dense })
    }

    fn kinked(&self) -> bool {
        matches!(self.spec.activation, Activation::ReLU | Activation::LeakyReLU | Activation::PReLU)
    }

    fn act_f(&self, z: f64, slope: Option<f64>) -> f64 {
        match slope {
            Some(_) if z > 0.0 => z,
            Some(s) => s * z,
            None => self.spec.activation.apply(z),
        }
    }

    fn act_dd(&self, z: Dd, slope: Option<Dd>, sig: &mut Sig) -> Dd {
        if self.kinked() {
            sig.mix(z.positive() as u64);
            if z.positive() {
                return z;
            }
        }
        match (slope, self.spec.activation) {
            (Some(s), _) => s.mul(z),
            (None, Activation::ReLU) => Dd::ZERO,
            (None, Activation::LeakyReLU) => z.mul_f(crate::nn::activation::LEAKY_SLOPE),
            // smooth activations are evaluated in plain precision
            (None, act) => Dd::from(act.apply(z.to_f64())),
        }
    }

    fn conv_slope(&self, l: usize, o: usize) -> Option<f64> {
        self.convs[l].slope.map(|s| self.p[s][o])
    }

    fn dense_slope(&self, j: usize, r: usize) -> Option<f64> {
        self.dense[j].slope.map(|s| self.p[s][r])
    }

    fn base_pass(&self) -> Base {
        let mut base = Base {
            conv_in: Vec::new(),
            conv_pre: Vec::new(),
            conv_out: Vec::new(),
            dense_in: Vec::new(),
            dense_z: Vec::new(),
            dense_a: Vec::new(),
        };
        let mut x = self.batch.inputs.data().to_vec();
        for (l, st) in self.convs.iter().enumerate() {
            let s = st.shape;
            let kern = self.p[st.kernel];
            let mut pre = vec![0.0; self.b * s.out_ch * s.pre_plane()];
            for b in 0..self.b {
                for o in 0..s.out_ch {
                    for c in 0..s.in_ch {
                        let plane = &x[(b * s.in_ch + c) * s.h * s.w..][..s.h * s.w];
                        let kk = &kern[(o * s.in_ch + c) * s.k * s.k..][..s.k * s.k];
                        let dst = &mut pre[(b * s.out_ch + o) * s.pre_plane()..][..s.pre_plane()];
                        for i in 0..s.ho {
                            for j in 0..s.wo {
                                let mut acc = 0.0;
                                for a in 0..s.k {
                                    for e in 0..s.k {
                                        acc += plane[(i + a) * s.w + j + e] * kk[a * s.k + e];
                                    }
                                }
                                dst[i * s.wo + j] += acc;
                            }
                        }
                    }
                }
            }
            let mut out = vec![0.0; self.b * s.out_ch * s.out_plane()];
            for b in 0..self.b {
                for o in 0..s.out_ch {
                    let slope = self.conv_slope(l, o);
                    let src = &pre[(b * s.out_ch + o) * s.pre_plane()..][..s.pre_plane()];
                    let act: Vec<f64> = src.iter().map(|&z| self.act_f(z, slope)).collect();
                    for i in 0..s.hp {
                        for j in 0..s.wp {
                            let mut best = f64::NEG_INFINITY;
                            for a in 0..s.window {
                                for e in 0..s.window {
                                    best = best.max(act[(i * s.stride + a) * s.wo + j * s.stride + e]);
                                }
                            }
                            out[(b * s.out_ch + o) * s.out_plane() + i * s.wp + j] = best;
                        }
                    }
                }
            }
            base.conv_in.push(core::mem::replace(&mut x, out.clone()));
            base.conv_pre.push(pre);
            base.conv_out.push(out);
        }
        let last = self.dense.len() - 1;
        for (j, d) in self.dense.iter().enumerate() {
            let xin = self.with_aux(j, &x);
            let (w, bias) = (self.p[d.weight], self.p[d.bias]);
            let mut z = vec![0.0; self.b * d.outputs];
            let mut a = vec![0.0; self.b * d.outputs];
            for b in 0..self.b {
                for r in 0..d.outputs {
                    let mut acc = bias[r];
                    for c in 0..d.inputs {
                        acc += w[r * d.inputs + c] * xin[b * d.inputs + c];
                    }
                    z[b * d.outputs + r] = acc;
                    a[b * d.outputs + r] = if j == last { acc } else { self.act_f(acc, self.dense_slope(j, r)) };
                }
            }
            base.dense_in.push(xin);
            base.dense_z.push(z);
            x = a.clone();
            base.dense_a.push(a);
        }
        base
    }

    fn with_aux(&self, j: usize, x: &[f64]) -> Vec<f64> {
        match (&self.batch.aux, self.spec.aux_injection_layer) {
            (Some(aux), Some(inj)) if inj == j => {
                let a = aux.shape()[1];
                let f = x.len() / self.b;
                let mut out = Vec::with_capacity(x.len() + self.b * a);
                for b in 0..self.b {
                    out.extend_from_slice(&x[b * f..][..f]);
                    out.extend_from_slice(&aux.data()[b * a..][..a]);
                }
                out
            }
            _ => x.to_vec(),
        }
    }

    /// Pools the activated plane `pre` (`Ho x Wo`) and returns the change of
    /// the pooled plane against `base_out`.
    fn act_pool_delta(&self, l: usize, pre: &[Dd], slope: Option<Dd>, base_out: &[f64], sig: &mut Sig) -> Vec<Dd> {
        let s = self.convs[l].shape;
        let act: Vec<Dd> = pre.iter().map(|&z| self.act_dd(z, slope, sig)).collect();
        let mut out = Vec::with_capacity(s.out_plane());
        for i in 0..s.hp {
            for j in 0..s.wp {
                let mut best = act[(i * s.stride) * s.wo + j * s.stride];
                let mut arg = (i * s.stride) * s.wo + j * s.stride;
                for a in 0..s.window {
                    for e in 0..s.window {
                        let idx = (i * s.stride + a) * s.wo + j * s.stride + e;
                        if act[idx].gt(best) {
                            best = act[idx];
                            arg = idx;
                        }
                    }
                }
                sig.mix(arg as u64);
                out.push(best.sub(Dd::from(base_out[i * s.wp + j])));
            }
        }
        out
    }

    /// Loss after channel `o` of conv layer `l` gets pre-activation `pre_o`
    /// (`[B, Ho, Wo]`) and slope `slope`.
    fn eval_channel(&self, base: &Base, l: usize, o: usize, pre_o: &[Dd], slope: Option<Dd>) -> (Dd, Sig) {
        let mut sig = Sig::new();
        let s = self.convs[l].shape;
        let (pp, op) = (s.pre_plane(), s.out_plane());
        let mut delta = Delta { active: (o * op..(o + 1) * op).collect(), values: Vec::with_capacity(self.b * op) };
        for b in 0..self.b {
            let base_out = &base.conv_out[l][(b * s.out_ch + o) * op..][..op];
            delta.values.extend(self.act_pool_delta(l, &pre_o[b * pp..][..pp], slope, base_out, &mut sig));
        }
        let mut feat = delta;
        for ll in l + 1..self.convs.len() {
            feat = self.conv_delta(base, ll, &feat, &mut sig);
        }
        (self.dense_from_input_delta(base, 0, &feat, &mut sig), sig)
    }

    /// Propagates a change of the input of conv layer `l` through the
    /// layer, its activation and pooling.
    fn conv_delta(&self, base: &Base, l: usize, input: &Delta, sig: &mut Sig) -> Delta {
        let s = self.convs[l].shape;
        let (ip, pp, op) = (s.h * s.w, s.pre_plane(), s.out_plane());
        let kern = self.p[self.convs[l].kernel];
        let na = input.active.len();
        let channels: Vec<usize> = {
            let mut c: Vec<usize> = input.active.iter().map(|&i| i / ip).collect();
            c.dedup();
            c
        };
        let mut values = Vec::with_capacity(self.b * s.out_ch * op);
        for b in 0..self.b {
            let mut plane = vec![Dd::ZERO; s.in_ch * ip];
            for (k, &i) in input.active.iter().enumerate() {
                plane[i] = input.values[b * na + k];
            }
            for o in 0..s.out_ch {
                let base_pre = &base.conv_pre[l][(b * s.out_ch + o) * pp..][..pp];
                let mut pre: Vec<Dd> = base_pre.iter().map(|&v| Dd::from(v)).collect();
                for &c in &channels {
                    let kk = &kern[(o * s.in_ch + c) * s.k * s.k..][..s.k * s.k];
                    let src = &plane[c * ip..][..ip];
                    for i in 0..s.ho {
                        for j in 0..s.wo {
                            let mut acc = Dd::ZERO;
                            for a in 0..s.k {
                                for e in 0..s.k {
                                    acc = acc.add(src[(i + a) * s.w + j + e].mul_f(kk[a * s.k + e]));
                                }
                            }
                            pre[i * s.wo + j] = pre[i * s.wo + j].add(acc);
                        }
                    }
                }
                let base_out = &base.conv_out[l][(b * s.out_ch + o) * op..][..op];
                let slope = self.conv_slope(l, o).map(Dd::from);
                values.extend(self.act_pool_delta(l, &pre, slope, base_out, sig));
            }
        }
        Delta { active: (0..s.out_ch * op).collect(), values }
    }

    /// Loss after the input of dense layer `j` (before aux concatenation)
    /// changes by `input`.
    fn dense_from_input_delta(&self, base: &Base, j: usize, input: &Delta, sig: &mut Sig) -> Dd {
        let d = &self.dense[j];
        let w = self.p[d.weight];
        let na = input.active.len();
        let rows: Vec<usize> = (0..d.outputs).collect();
        let mut dz = Vec::with_capacity(self.b * d.outputs);
        for b in 0..self.b {
            for r in 0..d.outputs {
                let mut acc = Dd::ZERO;
                for (k, &c) in input.active.iter().enumerate() {
                    acc = acc.add(input.values[b * na + k].mul_f(w[r * d.inputs + c]));
                }
                dz.push(acc);
            }
        }
        self.dense_from_z_delta(base, j, &rows, &dz, None, sig)
    }

    /// Loss after pre-activations `rows` of dense layer `j` change by `dz`
    /// (`[B, rows.len()]`), optionally with a replaced slope for one row.
    fn dense_from_z_delta(
        &self,
        base: &Base,
        j: usize,
        rows: &[usize],
        dz: &[Dd],
        slope: Option<(usize, Dd)>,
        sig: &mut Sig,
    ) -> Dd {
        let d = &self.dense[j];
        let nr = rows.len();
        if j + 1 == self.dense.len() {
            let mut pred: Vec<Dd> = base.dense_z[j].iter().map(|&v| Dd::from(v)).collect();
            for b in 0..self.b {
                for (k, &r) in rows.iter().enumerate() {
                    pred[b * d.outputs + r] = pred[b * d.outputs + r].add(dz[b * nr + k]);
                }
            }
            return self.loss(&pred);
        }
        let mut values = Vec::with_capacity(self.b * nr);
        for b in 0..self.b {
            for (k, &r) in rows.iter().enumerate() {
                let z = Dd::from(base.dense_z[j][b * d.outputs + r]).add(dz[b * nr + k]);
                let s = match slope {
                    Some((sr, v)) if sr == r => Some(v),
                    _ => self.dense_slope(j, r).map(Dd::from),
                };
                let a = self.act_dd(z, s, sig);
                values.push(a.sub(Dd::from(base.dense_a[j][b * d.outputs + r])));
            }
        }
        self.dense_from_input_delta(base, j + 1, &Delta { active: rows.to_vec(), values }, sig)
    }

    fn loss(&self, pred: &[Dd]) -> Dd {
        let t = &self.batch.targets;
        let mut acc = Dd::ZERO;
        for (p, &t) in pred.iter().zip(t) {
            let r = match self.spec.target {
                Target::Energy => p.add_f(-t).div_f(t),
                Target::PositionX => p.add_f(-t),
            };
            acc = acc.add(r.mul(r));
        }
        acc.div_f(t.len() as f64).sqrt()
    }

    #[allow(clippy::too_many_arguments)]
    fn check_conv(
        &self,
        l: usize,
        kernel: usize,
        slope: Option<usize>,
        base: &Base,
        auto: &[Vec<f64>],
        h: f64,
        model: &Model,
        report: &mut GradCheck,
    ) {
        let s = self.convs[l].shape;
        let pp = s.pre_plane();
        let check_k = model.is_trainable(kernel);
        let check_s = slope.filter(|&p| model.is_trainable(p));
        for o in 0..s.out_ch {
            let pre_o: Vec<Dd> = (0..self.b)
                .flat_map(|b| base.conv_pre[l][(b * s.out_ch + o) * pp..][..pp].iter().map(|&v| Dd::from(v)))
                .collect();
            let so = self.conv_slope(l, o).map(Dd::from);
            let (_, sig0) = self.eval_channel(base, l, o, &pre_o, so);
            if check_k {
                for c in 0..s.in_ch {
                    for a in 0..s.k {
                        for e in 0..s.k {
                            let shifted = |step: f64| -> Vec<Dd> {
                                let mut v = pre_o.clone();
                                for b in 0..self.b {
                                    let src = &base.conv_in[l][(b * s.in_ch + c) * s.h * s.w..][..s.h * s.w];
                                    for i in 0..s.ho {
                                        for j in 0..s.wo {
                                            let at = b * pp + i * s.wo + j;
                                            v[at] = v[at].add(two_prod(step, src[(i + a) * s.w + j + e]));
                                        }
                                    }
                                }
                                v
                            };
                            let plus = self.eval_channel(base, l, o, &shifted(h), so);
                            let minus = self.eval_channel(base, l, o, &shifted(-h), so);
                            let entry = ((o * s.in_ch + c) * s.k + a) * s.k + e;
                            report.compare(auto[kernel][entry], plus, minus, sig0, h, (kernel, entry));
                        }
                    }
                }
            }
            if let (Some(sp), Some(v)) = (check_s, so) {
                let plus = self.eval_channel(base, l, o, &pre_o, Some(v.add_f(h)));
                let minus = self.eval_channel(base, l, o, &pre_o, Some(v.add_f(-h)));
                report.compare(auto[sp][o], plus, minus, sig0, h, (sp, o));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn check_dense(
        &self,
        j: usize,
        weight: usize,
        bias: usize,
        slope: Option<usize>,
        base: &Base,
        auto: &[Vec<f64>],
        h: f64,
        model: &Model,
        report: &mut GradCheck,
    ) {
        let d = &self.dense[j];
        let x = &base.dense_in[j];
        for r in 0..d.outputs {
            let eval = |dz: &dyn Fn(usize) -> Dd, slope: Option<(usize, Dd)>| {
                let dz: Vec<Dd> = (0..self.b).map(dz).collect();
                let mut sig = Sig::new();
                let l = self.dense_from_z_delta(base, j, &[r], &dz, slope, &mut sig);
                (l, sig)
            };
            let (_, sig0) = eval(&|_| Dd::ZERO, None);
            if model.is_trainable(weight) {
                for c in 0..d.inputs {
                    let plus = eval(&|b| two_prod(h, x[b * d.inputs + c]), None);
                    let minus = eval(&|b| two_prod(-h, x[b * d.inputs + c]), None);
                    let entry = r * d.inputs + c;
                    report.compare(auto[weight][entry], plus, minus, sig0, h, (weight, entry));
                }
            }
            if model.is_trainable(bias) {
                let plus = eval(&|_| Dd::from(h), None);
                let minus = eval(&|_| Dd::from(-h), None);
                report.compare(auto[bias][r], plus, minus, sig0, h, (bias, r));
            }
            if let Some(sp) = slope.filter(|&p| model.is_trainable(p)) {
                let v = Dd::from(self.p[sp][r]);
                let plus = eval(&|_| Dd::ZERO, Some((r, v.add_f(h))));
                let minus = eval(&|_| Dd::ZERO, Some((r, v.add_f(-h))));
                report.compare(auto[sp][r], plus, minus, sig0, h, (sp, r));
            }
        }
    }
}

impl GradCheck {
    fn compare(&mut self, auto: f64, plus: (Dd, Sig), minus: (Dd, Sig), sig0: Sig, h: f64, at: (usize, usize)) {
        if plus.1 != sig0 || minus.1 != sig0 {
            self.skipped += 1;
        } else {
            self.record(auto, plus.0.sub(minus.0).to_f64() / (2.0 * h), at);
        }
    }
}
