//! Unpaired lip-image translation: a ResNet-style encoder / residual
//! transformer / decoder generator, a 70x70 PatchGAN discriminator,
//! least-squares adversarial and L1 cycle losses, and the alternating
//! update.

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{
    init, Adam, AdamConfig, Conv2dSpec, NamedTensorStore, Pad2d, ParamSource, Tape, Tensor, Var,
};

/// Grayscale (or multi-channel) image with values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LipImage {
    pixels: Tensor,
}

impl LipImage {
    pub fn new(pixels: Tensor) -> Result<Self> {
        let d = pixels.dims();
        if d.len() != 3 {
            return Err(shape_err!("image must be [H, W, C], got {d:?}"));
        }
        if !d[0].is_multiple_of(4) || !d[1].is_multiple_of(4) {
            return Err(shape_err!("image dims {}x{} must be divisible by 4", d[0], d[1]));
        }
        if pixels.data().iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::Numeric("image values must lie in [-1, 1]".into()));
        }
        Ok(LipImage { pixels })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.pixels
    }

    pub fn height(&self) -> usize {
        self.pixels.dims()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.dims()[1]
    }

    pub fn channels(&self) -> usize {
        self.pixels.dims()[2]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    pub residual_blocks: usize,
    pub cycle_lambda: f64,
    pub base_channels: usize,
    pub image_channels: usize,
    pub lr: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            residual_blocks: 6,
            cycle_lambda: 10.0,
            base_channels: 64,
            image_channels: 1,
            lr: 2e-4,
        }
    }
}

impl GanConfig {
    pub fn toy() -> Self {
        GanConfig {
            base_channels: 8,
            lr: 1e-3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.residual_blocks == 0 {
            return Err(Error::Config("need at least one residual block".into()));
        }
        if !(self.cycle_lambda >= 0.0) {
            return Err(Error::Config("cycle_lambda must be >= 0".into()));
        }
        if self.base_channels == 0 || self.image_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(())
    }
}

/// Anything that maps an image to an image on a tape.
pub trait Translator {
    fn translate(&self, tape: &mut Tape, x: Var, params: &ParamSource) -> Result<Var>;

    fn weights(&self) -> Option<&NamedTensorStore> {
        None
    }
}

/// Returns its input unchanged.
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, _tape: &mut Tape, x: Var, _params: &ParamSource) -> Result<Var> {
        Ok(x)
    }
}

fn put_conv(
    s: &mut NamedTensorStore,
    name: &str,
    k: usize,
    cin: usize,
    cout: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    s.insert(format!("{name}.kernel"), init::kaiming_uniform(&[k, k, cin, cout], k * k * cin, rng))?;
    s.insert(format!("{name}.bias"), Tensor::zeros(&[cout]))
}

struct Layer<'a> {
    w: &'a NamedTensorStore,
    p: &'a ParamSource,
    prefix: &'a str,
}

impl Layer<'_> {
    fn kb(&self, tape: &mut Tape, name: &str) -> Result<(Var, Var)> {
        let k = self.p.var(tape, self.w, &format!("{}{name}.kernel", self.prefix))?;
        let b = self.p.var(tape, self.w, &format!("{}{name}.bias", self.prefix))?;
        Ok((k, b))
    }

    fn conv(&self, tape: &mut Tape, x: Var, name: &str, spec: Conv2dSpec) -> Result<Var> {
        let (k, b) = self.kb(tape, name)?;
        tape.conv2d(x, k, b, spec)
    }

    fn deconv(&self, tape: &mut Tape, x: Var, name: &str, stride: usize, pad: usize, out_pad: usize) -> Result<Var> {
        let (k, b) = self.kb(tape, name)?;
        tape.conv_transpose2d(x, k, b, stride, pad, out_pad)
    }
}

/// Encoder (7x7, then two stride-2 3x3 convs), residual blocks at a quarter
/// of the input size, decoder (two stride-2 3x3 deconvs and a 7x7 deconv)
/// with a tanh output.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub prefix: String,
    pub residual_blocks: usize,
    weights: NamedTensorStore,
}

impl Generator {
    pub fn new(cfg: &GanConfig, prefix: &str, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = init::seeded(seed);
        let (c, b) = (cfg.image_channels, cfg.base_channels);
        let mut s = NamedTensorStore::new();
        let p = |n: &str| format!("{prefix}{n}");
        put_conv(&mut s, &p("enc0"), 7, c, b, &mut rng)?;
        put_conv(&mut s, &p("enc1"), 3, b, 2 * b, &mut rng)?;
        put_conv(&mut s, &p("enc2"), 3, 2 * b, 4 * b, &mut rng)?;
        for r in 0..cfg.residual_blocks {
            put_conv(&mut s, &p(&format!("res{r}.a")), 3, 4 * b, 4 * b, &mut rng)?;
            put_conv(&mut s, &p(&format!("res{r}.b")), 3, 4 * b, 4 * b, &mut rng)?;
        }
        put_conv(&mut s, &p("dec0"), 3, 4 * b, 2 * b, &mut rng)?;
        put_conv(&mut s, &p("dec1"), 3, 2 * b, b, &mut rng)?;
        put_conv(&mut s, &p("dec2"), 7, b, c, &mut rng)?;
        Ok(Generator {
            prefix: prefix.to_string(),
            residual_blocks: cfg.residual_blocks,
            weights: s,
        })
    }

    pub fn weights_mut(&mut self) -> &mut NamedTensorStore {
        &mut self.weights
    }

    /// Records the encoder; returns the bottleneck activation.
    pub fn encode(&self, tape: &mut Tape, x: Var, params: &ParamSource) -> Result<Var> {
        let d = tape.value(x).dims().to_vec();
        if d.len() != 3 || !d[0].is_multiple_of(4) || !d[1].is_multiple_of(4) {
            return Err(shape_err!("generator input {d:?} must be [H, W, C] with H, W divisible by 4"));
        }
        let l = Layer { w: &self.weights, p: params, prefix: &self.prefix };
        let h = tape.reflect_pad(x, Pad2d::uniform(3))?;
        let h = l.conv(tape, h, "enc0", Conv2dSpec::valid())?;
        let h = tape.instance_norm(h)?;
        let mut h = tape.relu(h);
        for name in ["enc1", "enc2"] {
            h = l.conv(tape, h, name, Conv2dSpec::explicit(2, Pad2d::uniform(1)))?;
            h = tape.instance_norm(h)?;
            h = tape.relu(h);
        }
        Ok(h)
    }

    fn residual(&self, tape: &mut Tape, x: Var, r: usize, params: &ParamSource) -> Result<Var> {
        let l = Layer { w: &self.weights, p: params, prefix: &self.prefix };
        let h = tape.reflect_pad(x, Pad2d::uniform(1))?;
        let h = l.conv(tape, h, &format!("res{r}.a"), Conv2dSpec::valid())?;
        let h = tape.instance_norm(h)?;
        let h = tape.relu(h);
        let h = tape.reflect_pad(h, Pad2d::uniform(1))?;
        let h = l.conv(tape, h, &format!("res{r}.b"), Conv2dSpec::valid())?;
        let h = tape.instance_norm(h)?;
        tape.add(x, h)
    }

    pub fn forward(&self, img: &LipImage) -> Result<LipImage> {
        let mut tape = Tape::new();
        let x = tape.input(img.tensor().clone());
        let y = self.translate(&mut tape, x, &ParamSource::Constants)?;
        LipImage::new(tape.value(y).clone())
    }

    /// Spatial dims of the residual-stage activation for an input image.
    pub fn bottleneck_dims(&self, img: &LipImage) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let x = tape.input(img.tensor().clone());
        let h = self.encode(&mut tape, x, &ParamSource::Constants)?;
        Ok(tape.value(h).dims().to_vec())
    }
}

impl Translator for Generator {
    fn translate(&self, tape: &mut Tape, x: Var, params: &ParamSource) -> Result<Var> {
        let mut h = self.encode(tape, x, params)?;
        for r in 0..self.residual_blocks {
            h = self.residual(tape, h, r, params)?;
        }
        let l = Layer { w: &self.weights, p: params, prefix: &self.prefix };
        for name in ["dec0", "dec1"] {
            h = l.deconv(tape, h, name, 2, 1, 1)?;
            h = tape.instance_norm(h)?;
            h = tape.relu(h);
        }
        let h = l.deconv(tape, h, "dec2", 1, 3, 0)?;
        Ok(tape.tanh(h))
    }

    fn weights(&self) -> Option<&NamedTensorStore> {
        Some(&self.weights)
    }
}

pub const PATCH_KERNEL: usize = 4;
pub const PATCH_STRIDES: [usize; 5] = [2, 2, 2, 1, 1];
const LEAK: f64 = 0.2;

/// Receptive field of one output unit of a conv stack with equal kernels.
pub fn receptive_field(kernel: usize, strides: &[usize]) -> usize {
    let mut r = 1;
    let mut jump = 1;
    for s in strides {
        r += (kernel - 1) * jump;
        jump *= s;
    }
    r
}

/// Side length of the score map for an input side `n`, if non-empty.
pub fn patch_map_len(n: usize) -> Option<usize> {
    let mut n = n;
    for s in PATCH_STRIDES {
        n = crate::tensor::conv_out_len(n, PATCH_KERNEL, s, 1, 1, 1)?;
    }
    Some(n)
}

/// PatchGAN: 4x4 convs with strides 2,2,2,1,1 and channels
/// `b, 2b, 4b, 8b, 1`; LeakyReLU(0.2) throughout, instance norm on the
/// middle layers, linear scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub prefix: String,
    weights: NamedTensorStore,
}

impl Discriminator {
    pub fn new(cfg: &GanConfig, prefix: &str, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = init::seeded(seed);
        let b = cfg.base_channels;
        let chans = [cfg.image_channels, b, 2 * b, 4 * b, 8 * b, 1];
        let mut s = NamedTensorStore::new();
        for l in 0..5 {
            put_conv(&mut s, &format!("{prefix}d{l}"), PATCH_KERNEL, chans[l], chans[l + 1], &mut rng)?;
        }
        Ok(Discriminator {
            prefix: prefix.to_string(),
            weights: s,
        })
    }

    pub fn weights(&self) -> &NamedTensorStore {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut NamedTensorStore {
        &mut self.weights
    }

    pub fn record(&self, tape: &mut Tape, x: Var, params: &ParamSource) -> Result<Var> {
        let d = tape.value(x).dims().to_vec();
        if d.len() != 3 || patch_map_len(d[0]).is_none() || patch_map_len(d[1]).is_none() {
            return Err(shape_err!("discriminator input {d:?} is too small for a non-empty score map"));
        }
        let l = Layer { w: &self.weights, p: params, prefix: &self.prefix };
        let mut h = x;
        for (i, s) in PATCH_STRIDES.iter().enumerate() {
            h = l.conv(tape, h, &format!("d{i}"), Conv2dSpec::explicit(*s, Pad2d::uniform(1)))?;
            if i == PATCH_STRIDES.len() - 1 {
                break;
            }
            if i > 0 {
                h = tape.instance_norm(h)?;
            }
            h = tape.leaky_relu(h, LEAK);
        }
        Ok(h)
    }

    pub fn forward(&self, img: &LipImage) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.input(img.tensor().clone());
        let y = self.record(&mut tape, x, &ParamSource::Constants)?;
        Ok(tape.value(y).clone())
    }
}

/// Every term is a mean over pixels (and over the batch).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossRecord {
    /// `D_b` on (real b, fake b).
    pub disc_b: f64,
    /// `D_a` on (real a, fake a).
    pub disc_a: f64,
    /// `G_ab` fooling `D_b`.
    pub adv_ab: f64,
    /// `G_ba` fooling `D_a`.
    pub adv_ba: f64,
    /// `lambda * |G_ba(G_ab(a)) - a|_1`.
    pub cycle_a: f64,
    /// `lambda * |G_ab(G_ba(b)) - b|_1`.
    pub cycle_b: f64,
    /// Generator objective: adversarial plus cycle terms.
    pub total: f64,
}

impl LossRecord {
    pub fn values(&self) -> [f64; 7] {
        [self.disc_b, self.disc_a, self.adv_ab, self.adv_ba, self.cycle_a, self.cycle_b, self.total]
    }
}

fn same_shape(a: &LipImage, b: &LipImage) -> Result<()> {
    if a.tensor().dims() != b.tensor().dims() {
        return Err(shape_err!("images {:?} and {:?} differ in shape", a.tensor().dims(), b.tensor().dims()));
    }
    Ok(())
}

fn full_like(t: &Tensor, v: f64) -> Tensor {
    Tensor::full(t.dims(), v)
}

/// Least-squares discriminator loss with the fake held constant.
fn record_disc(tape: &mut Tape, d: &Discriminator, real: &Tensor, fake: &Tensor, p: &ParamSource) -> Result<Var> {
    let r = tape.input(real.clone());
    let f = tape.input(fake.clone());
    let sr = d.record(tape, r, p)?;
    let sf = d.record(tape, f, p)?;
    let ones = full_like(tape.value(sr), 1.0);
    let zeros = full_like(tape.value(sf), 0.0);
    let lr = tape.mse(sr, &ones)?;
    let lf = tape.mse(sf, &zeros)?;
    let sum = tape.add(lr, lf)?;
    Ok(tape.scale(sum, 0.5))
}

struct GenTerms {
    adv_ab: Var,
    adv_ba: Var,
    cycle_a: Var,
    cycle_b: Var,
    total: Var,
    fake_b: Tensor,
    fake_a: Tensor,
}

#[allow(clippy::too_many_arguments)]
fn record_generator_terms(
    tape: &mut Tape,
    a: &Tensor,
    b: &Tensor,
    g_ab: &dyn Translator,
    g_ba: &dyn Translator,
    d_a: &Discriminator,
    d_b: &Discriminator,
    lambda: f64,
    p_ab: &ParamSource,
    p_ba: &ParamSource,
) -> Result<GenTerms> {
    let xa = tape.input(a.clone());
    let xb = tape.input(b.clone());
    let fake_b = g_ab.translate(tape, xa, p_ab)?;
    let fake_a = g_ba.translate(tape, xb, p_ba)?;
    let rec_a = g_ba.translate(tape, fake_b, p_ba)?;
    let rec_b = g_ab.translate(tape, fake_a, p_ab)?;
    let sb = d_b.record(tape, fake_b, &ParamSource::Constants)?;
    let sa = d_a.record(tape, fake_a, &ParamSource::Constants)?;
    let ones_b = full_like(tape.value(sb), 1.0);
    let ones_a = full_like(tape.value(sa), 1.0);
    let adv_ab = tape.mse(sb, &ones_b)?;
    let adv_ba = tape.mse(sa, &ones_a)?;
    let la = tape.l1(rec_a, a)?;
    let lb = tape.l1(rec_b, b)?;
    let cycle_a = tape.scale(la, lambda);
    let cycle_b = tape.scale(lb, lambda);
    let adv = tape.add(adv_ab, adv_ba)?;
    let cyc = tape.add(cycle_a, cycle_b)?;
    let total = tape.add(adv, cyc)?;
    Ok(GenTerms {
        adv_ab,
        adv_ba,
        cycle_a,
        cycle_b,
        total,
        fake_b: tape.value(fake_b).clone(),
        fake_a: tape.value(fake_a).clone(),
    })
}

/// All CycleGAN loss terms for one unpaired `(a, b)` example.
#[allow(clippy::too_many_arguments)]
pub fn cyclegan_losses(
    real_a: &LipImage,
    real_b: &LipImage,
    g_ab: &dyn Translator,
    g_ba: &dyn Translator,
    d_a: &Discriminator,
    d_b: &Discriminator,
    cfg: &GanConfig,
) -> Result<LossRecord> {
    same_shape(real_a, real_b)?;
    let mut tape = Tape::new();
    let c = ParamSource::Constants;
    let g = record_generator_terms(
        &mut tape,
        real_a.tensor(),
        real_b.tensor(),
        g_ab,
        g_ba,
        d_a,
        d_b,
        cfg.cycle_lambda,
        &c,
        &c,
    )?;
    let disc_b = record_disc(&mut tape, d_b, real_b.tensor(), &g.fake_b, &c)?;
    let disc_a = record_disc(&mut tape, d_a, real_a.tensor(), &g.fake_a, &c)?;
    let v = |x: Var| tape.value(x).item();
    Ok(LossRecord {
        disc_b: v(disc_b),
        disc_a: v(disc_a),
        adv_ab: v(g.adv_ab),
        adv_ba: v(g.adv_ba),
        cycle_a: v(g.cycle_a),
        cycle_b: v(g.cycle_b),
        total: v(g.total),
    })
}

/// Two generators, two discriminators and their optimizers.
pub struct CycleGan {
    pub cfg: GanConfig,
    pub g_ab: Generator,
    pub g_ba: Generator,
    pub d_a: Discriminator,
    pub d_b: Discriminator,
    opt_g: Adam,
    opt_d: Adam,
}

fn merged(stores: &[&NamedTensorStore]) -> Result<NamedTensorStore> {
    let mut out = NamedTensorStore::new();
    for s in stores {
        for (n, t) in s.iter() {
            out.insert(n, t.clone())?;
        }
    }
    Ok(out)
}

fn write_back(from: &NamedTensorStore, to: &mut NamedTensorStore) {
    for (n, t) in to.iter_mut() {
        if let Some(src) = from.get(n) {
            *t = src.clone();
        }
    }
}

impl CycleGan {
    pub fn new(cfg: GanConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let adam = AdamConfig {
            lr: cfg.lr,
            beta1: 0.5,
            ..Default::default()
        };
        Ok(CycleGan {
            g_ab: Generator::new(&cfg, "g_ab.", init::derived(seed, 0).random())?,
            g_ba: Generator::new(&cfg, "g_ba.", init::derived(seed, 1).random())?,
            d_a: Discriminator::new(&cfg, "d_a.", init::derived(seed, 2).random())?,
            d_b: Discriminator::new(&cfg, "d_b.", init::derived(seed, 3).random())?,
            opt_g: Adam::new(adam)?,
            opt_d: Adam::new(adam)?,
            cfg,
        })
    }

    pub fn losses(&self, a: &LipImage, b: &LipImage) -> Result<LossRecord> {
        cyclegan_losses(a, b, &self.g_ab, &self.g_ba, &self.d_a, &self.d_b, &self.cfg)
    }

    /// One discriminator update (fakes detached) followed by one generator
    /// update, both on the batch mean. Returns the losses measured before
    /// the updates.
    pub fn train_step(&mut self, batch_a: &[LipImage], batch_b: &[LipImage]) -> Result<LossRecord> {
        Ok(self.train_step_detailed(batch_a, batch_b)?.0)
    }

    /// Like `train_step`, also returning the generator-parameter gradients
    /// of the discriminator loss (which the detachment makes zero).
    pub fn train_step_detailed(
        &mut self,
        batch_a: &[LipImage],
        batch_b: &[LipImage],
    ) -> Result<(LossRecord, NamedTensorStore)> {
        if batch_a.is_empty() || batch_b.is_empty() {
            return Err(Error::Usage("GAN batches must be non-empty".into()));
        }
        let n = batch_a.len().max(batch_b.len());
        let pairs: Vec<(&LipImage, &LipImage)> =
            (0..n).map(|i| (&batch_a[i % batch_a.len()], &batch_b[i % batch_b.len()])).collect();
        for (a, b) in &pairs {
            same_shape(a, b)?;
        }
        let inv = 1.0 / n as f64;
        let mut rec = LossRecord::default();

        // Generator pass: objective, gradients and the fakes for the D step.
        let g_store = merged(&[&self.g_ab.weights, &self.g_ba.weights])?;
        let mut tape = Tape::new();
        let p_ab = ParamSource::trainable(&mut tape, &self.g_ab.weights);
        let p_ba = ParamSource::trainable(&mut tape, &self.g_ba.weights);
        let mut fakes = Vec::with_capacity(n);
        let mut total: Option<Var> = None;
        for (a, b) in &pairs {
            let t = record_generator_terms(
                &mut tape,
                a.tensor(),
                b.tensor(),
                &self.g_ab,
                &self.g_ba,
                &self.d_a,
                &self.d_b,
                self.cfg.cycle_lambda,
                &p_ab,
                &p_ba,
            )?;
            rec.adv_ab += tape.value(t.adv_ab).item() * inv;
            rec.adv_ba += tape.value(t.adv_ba).item() * inv;
            rec.cycle_a += tape.value(t.cycle_a).item() * inv;
            rec.cycle_b += tape.value(t.cycle_b).item() * inv;
            total = Some(match total {
                None => t.total,
                Some(acc) => tape.add(acc, t.total)?,
            });
            fakes.push((t.fake_a, t.fake_b));
        }
        let g_loss = tape.scale(total.expect("non-empty batch"), inv);
        rec.total = tape.value(g_loss).item();
        let g_grads = tape.backward(g_loss, &g_store)?;

        // Discriminator pass on detached fakes.
        let d_store = merged(&[&self.d_a.weights, &self.d_b.weights])?;
        let mut dtape = Tape::new();
        let p_da = ParamSource::trainable(&mut dtape, &self.d_a.weights);
        let p_db = ParamSource::trainable(&mut dtape, &self.d_b.weights);
        let mut dsum: Option<Var> = None;
        for ((a, b), (fa, fb)) in pairs.iter().zip(&fakes) {
            let lb = record_disc(&mut dtape, &self.d_b, b.tensor(), fb, &p_db)?;
            let la = record_disc(&mut dtape, &self.d_a, a.tensor(), fa, &p_da)?;
            rec.disc_b += dtape.value(lb).item() * inv;
            rec.disc_a += dtape.value(la).item() * inv;
            let s = dtape.add(la, lb)?;
            dsum = Some(match dsum {
                None => s,
                Some(acc) => dtape.add(acc, s)?,
            });
        }
        let d_loss = dtape.scale(dsum.expect("non-empty batch"), inv);
        let mut grads = dtape.backward_many(d_loss, &[&d_store, &g_store])?;
        let g_from_d = grads.pop().expect("two stores");
        let d_grads = grads.pop().expect("two stores");

        let mut d_params = d_store;
        self.opt_d.step(&mut d_params, &d_grads)?;
        write_back(&d_params, &mut self.d_a.weights);
        write_back(&d_params, &mut self.d_b.weights);
        let mut g_params = g_store;
        self.opt_g.step(&mut g_params, &g_grads)?;
        write_back(&g_params, &mut self.g_ab.weights);
        write_back(&g_params, &mut self.g_ba.weights);
        Ok((rec, g_from_d))
    }
}

pub fn gan_train_step(gan: &mut CycleGan, batch_a: &[LipImage], batch_b: &[LipImage]) -> Result<LossRecord> {
    gan.train_step(batch_a, batch_b)
}

/// A synthetic mouth: a dark ellipse of random opening on a lighter face.
pub fn synth_lip_image(size: usize, rng: &mut impl Rng) -> LipImage {
    let (cx, cy) = (
        size as f64 / 2.0 + rng.random_range(-0.08..0.08) * size as f64,
        size as f64 / 2.0 + rng.random_range(-0.08..0.08) * size as f64,
    );
    let rx = rng.random_range(0.22..0.35) * size as f64;
    let ry = rng.random_range(0.05..0.22) * size as f64;
    let face = rng.random_range(0.3..0.6);
    let t = Tensor::from_fn(&[size, size, 1], |i| {
        let (y, x) = ((i / size) as f64 + 0.5, (i % size) as f64 + 0.5);
        let r = ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2);
        let shade = 0.1 * ((y / size as f64) - 0.5);
        let v = if r < 1.0 { -0.6 + 0.3 * r } else { face + shade };
        v.clamp(-1.0, 1.0)
    });
    LipImage::new(t).expect("synthetic image is in range")
}

/// Domain A of the toy task: the same faces darkened and flattened.
pub fn darken(img: &LipImage) -> LipImage {
    LipImage::new(img.tensor().map(|v| 0.5 * v - 0.45)).expect("darkened image is in range")
}
