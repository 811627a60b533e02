//! Noisy mixtures at exact SNRs, fixed-length training segments and a
//! hermetic synthetic speech / noise / lip-embedding corpus.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{rms, stft, AnalysisConfig, AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::mask::{ideal_binary_mask, MaskConfig, SpectralMask};
use crate::model::{LipEmbeddingSequence, EMBEDDING_DIM, VIDEO_FPS};
use crate::tensor::{init, Tensor};

pub const SNR_GRID: [f64; 8] = [-12.0, -9.0, -6.0, -3.0, 0.0, 3.0, 6.0, 9.0];
const SILENCE_RMS: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct MixtureSpec {
    pub clean: AudioBuffer,
    pub noise: AudioBuffer,
    pub target_snr_db: f64,
    /// Seeds the loop/crop offset when the noise length differs.
    pub offset_seed: u64,
}

#[derive(Clone, Debug)]
pub struct Mixture {
    pub noisy: AudioBuffer,
    pub scaled_noise: AudioBuffer,
    pub gain: f64,
}

/// Gain that puts `noise` at `target_snr_db` below `clean` (RMS over the
/// whole signal).
pub fn noise_gain(clean: &AudioBuffer, noise: &AudioBuffer, target_snr_db: f64) -> Result<f64> {
    let (rc, rn) = (clean.rms(), noise.rms());
    if rc <= SILENCE_RMS {
        return Err(Error::Degenerate("clean signal is silent".into()));
    }
    if rn <= SILENCE_RMS {
        return Err(Error::Degenerate("noise signal is silent".into()));
    }
    Ok(rc / rn * 10f64.powf(-target_snr_db / 20.0))
}

/// Loops (shorter) or crops (longer) `noise` to `len` samples from a seeded
/// offset; equal lengths pass through unchanged.
pub fn fit_noise(noise: &[f64], len: usize, seed: u64) -> Result<Vec<f64>> {
    if noise.is_empty() {
        return Err(Error::Degenerate("noise signal is empty".into()));
    }
    let n = noise.len();
    if n == len {
        return Ok(noise.to_vec());
    }
    let mut rng = init::seeded(seed);
    if n < len {
        let offset = rng.random_range(0..n);
        Ok((0..len).map(|i| noise[(offset + i) % n]).collect())
    } else {
        let offset = rng.random_range(0..=n - len);
        Ok(noise[offset..offset + len].to_vec())
    }
}

pub fn mix(spec: &MixtureSpec) -> Result<Mixture> {
    if spec.clean.sample_rate != spec.noise.sample_rate {
        return Err(Error::Config(format!(
            "clean at {} Hz, noise at {} Hz",
            spec.clean.sample_rate, spec.noise.sample_rate
        )));
    }
    let fitted = AudioBuffer::new(
        fit_noise(&spec.noise.samples, spec.clean.len(), spec.offset_seed)?,
        spec.noise.sample_rate,
    );
    let gain = noise_gain(&spec.clean, &fitted, spec.target_snr_db)?;
    let scaled: Vec<f64> = fitted.samples.iter().map(|v| v * gain).collect();
    let noisy = spec.clean.samples.iter().zip(&scaled).map(|(c, n)| c + n).collect();
    Ok(Mixture {
        noisy: AudioBuffer::new(noisy, spec.clean.sample_rate),
        scaled_noise: AudioBuffer::new(scaled, spec.clean.sample_rate),
        gain,
    })
}

#[derive(Clone, Debug)]
pub struct SegmentConfig {
    pub seg_seconds: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub mask: MaskConfig,
    pub analysis: AnalysisConfig,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            seg_seconds: 3,
            snr_db: 0.0,
            seed: 0,
            mask: MaskConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

/// One fixed-length example: network input, oracle target and the audio it
/// came from.
#[derive(Clone, Debug)]
pub struct TrainingItem {
    pub noisy_mag: Tensor,
    pub ibm: SpectralMask,
    pub embeddings: LipEmbeddingSequence,
    pub snr_db: f64,
    pub clean: AudioBuffer,
    pub noisy: AudioBuffer,
}

/// Number of 25 fps video frames expected alongside `samples` of audio.
pub fn expected_video_frames(samples: usize) -> usize {
    let per_frame = (SAMPLE_RATE / VIDEO_FPS) as usize;
    (samples + per_frame / 2) / per_frame
}

/// Cuts aligned audio and embeddings into `seg_seconds` pieces (dropping
/// the partial tail) and mixes each piece at the configured SNR.
pub fn make_segments(
    clean: &AudioBuffer,
    noise: &AudioBuffer,
    embeddings: &LipEmbeddingSequence,
    cfg: &SegmentConfig,
) -> Result<Vec<TrainingItem>> {
    if clean.sample_rate != SAMPLE_RATE {
        return Err(Error::Config(format!("clean audio at {} Hz, expected 16000", clean.sample_rate)));
    }
    let expected = expected_video_frames(clean.len());
    if embeddings.frames() != expected {
        return Err(Error::Alignment(format!(
            "{} embedding frames for {:.3} s of audio; expected {expected}",
            embeddings.frames(),
            clean.duration_secs()
        )));
    }
    if cfg.seg_seconds == 0 {
        return Err(Error::Config("segment length must be at least 1 s".into()));
    }
    let seg_samples = cfg.seg_seconds * SAMPLE_RATE as usize;
    let seg_video = cfg.seg_seconds * VIDEO_FPS as usize;
    let noise_full = fit_noise(&noise.samples, clean.len(), cfg.seed)?;
    let count = clean.len() / seg_samples;
    let mut items = Vec::with_capacity(count);
    for s in 0..count {
        let range = s * seg_samples..(s + 1) * seg_samples;
        let spec = MixtureSpec {
            clean: AudioBuffer::new(clean.samples[range.clone()].to_vec(), SAMPLE_RATE),
            noise: AudioBuffer::new(noise_full[range].to_vec(), SAMPLE_RATE),
            target_snr_db: cfg.snr_db,
            offset_seed: 0,
        };
        let mixture = mix(&spec)?;
        let noisy_spec = stft(&mixture.noisy, &cfg.analysis)?;
        let ibm = ideal_binary_mask(
            &stft(&spec.clean, &cfg.analysis)?,
            &stft(&mixture.scaled_noise, &cfg.analysis)?,
            &cfg.mask.at_snr(cfg.snr_db),
        )?;
        items.push(TrainingItem {
            noisy_mag: noisy_spec.magnitude(),
            ibm,
            embeddings: embeddings.slice(s * seg_video, seg_video)?,
            snr_db: cfg.snr_db,
            clean: spec.clean,
            noisy: mixture.noisy,
        });
    }
    Ok(items)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub seconds: usize,
    pub speech_rms: f64,
    pub noise_rms: f64,
    /// Noise added to the envelope-carrying embedding dims.
    pub envelope_noise: f64,
    /// Standard deviation of the remaining embedding dims.
    pub background_noise: f64,
    pub envelope_dims: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seconds: 3,
            speech_rms: 0.05,
            noise_rms: 0.05,
            envelope_noise: 0.05,
            background_noise: 0.1,
            envelope_dims: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthItem {
    pub id: String,
    pub clean: AudioBuffer,
    pub noise: AudioBuffer,
    pub embeddings: LipEmbeddingSequence,
    pub snr_db: f64,
    pub noise_kind: NoiseKind,
}

impl SynthItem {
    pub fn segments(&self, analysis: &AnalysisConfig, mask: &MaskConfig) -> Result<Vec<TrainingItem>> {
        self.segments_at(self.snr_db, analysis, mask)
    }

    pub fn segments_at(&self, snr_db: f64, analysis: &AnalysisConfig, mask: &MaskConfig) -> Result<Vec<TrainingItem>> {
        let cfg = SegmentConfig {
            seg_seconds: (self.clean.len() / SAMPLE_RATE as usize).clamp(1, 3),
            snr_db,
            seed: 0,
            mask: *mask,
            analysis: analysis.clone(),
        };
        make_segments(&self.clean, &self.noise, &self.embeddings, &cfg)
    }
}

pub fn synth_corpus(seed: u64, n_items: usize) -> Result<Vec<SynthItem>> {
    synth_corpus_with(seed, n_items, &SynthConfig::default())
}

/// Item `i` is drawn from its own derived stream and mixed at
/// `SNR_GRID[i % 8]`.
pub fn synth_corpus_with(seed: u64, n_items: usize, cfg: &SynthConfig) -> Result<Vec<SynthItem>> {
    if n_items == 0 {
        return Err(Error::Usage("corpus needs at least one item".into()));
    }
    if cfg.seconds == 0 || cfg.envelope_dims > EMBEDDING_DIM {
        return Err(Error::Config("synthetic corpus needs seconds >= 1 and envelope_dims <= 512".into()));
    }
    (0..n_items).map(|i| synth_item(seed, i, cfg)).collect()
}

pub fn synth_item(seed: u64, index: usize, cfg: &SynthConfig) -> Result<SynthItem> {
    let mut rng = init::derived(seed, index as u64);
    let len = cfg.seconds * SAMPLE_RATE as usize;
    let clean = synth_speech(len, cfg.speech_rms, &mut rng);
    let noise_kind = if rng.random_bool(0.5) { NoiseKind::Pink } else { NoiseKind::White };
    let noise = synth_noise(len, noise_kind, cfg.noise_rms, &mut rng);
    let embeddings = synth_embeddings(&clean, cfg, &mut rng)?;
    Ok(SynthItem {
        id: format!("item{index:04}"),
        clean: AudioBuffer::new(clean, SAMPLE_RATE),
        noise: AudioBuffer::new(noise, SAMPLE_RATE),
        embeddings,
        snr_db: SNR_GRID[index % SNR_GRID.len()],
        noise_kind,
    })
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Syllable-like on/off envelope with raised-cosine ramps, plus a
/// per-syllable (f0, formants, level) description.
struct Syllable {
    start: usize,
    end: usize,
    level: f64,
    f0: f64,
    glide: f64,
    formants: [f64; 3],
}

const FORMANT_BW: [f64; 3] = [120.0, 180.0, 260.0];
const SPEECH_TOP_HZ: f64 = 4000.0;
const ASPIRATION: f64 = 0.35;

fn syllables(len: usize, base_f0: f64, rng: &mut impl Rng) -> Vec<Syllable> {
    let sr = SAMPLE_RATE as f64;
    let mut out = Vec::new();
    let mut pos = (rng.random_range(0.05..0.3) * sr) as usize;
    while pos < len {
        let dur = (rng.random_range(0.12..0.45) * sr) as usize;
        let end = (pos + dur).min(len);
        out.push(Syllable {
            start: pos,
            end,
            level: rng.random_range(0.5..1.0),
            f0: base_f0 * rng.random_range(0.9..1.1),
            glide: rng.random_range(-0.15..0.15),
            formants: [
                rng.random_range(300.0..900.0),
                rng.random_range(900.0..2300.0),
                rng.random_range(2300.0..3500.0),
            ],
        });
        pos = end + (rng.random_range(0.06..0.35) * sr) as usize;
    }
    out
}

fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    0.05 + formants
        .iter()
        .zip(FORMANT_BW)
        .zip([1.0, 0.8, 0.5])
        .map(|((fm, bw), g)| g * (-((f - fm) / bw).powi(2)).exp())
        .sum::<f64>()
}

/// Two-pole resonators at the formants driven by white noise.
fn aspiration(n: usize, formants: &[f64; 3], rng: &mut impl Rng) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let mut out = vec![0.0; n];
    for (&fm, bw) in formants.iter().zip(FORMANT_BW) {
        let r = (-PI * bw / sr).exp();
        let (a1, a2) = (2.0 * r * (2.0 * PI * fm / sr).cos(), -r * r);
        let (mut y1, mut y2) = (0.0, 0.0);
        for o in out.iter_mut() {
            let y = (1.0 - r) * gauss(rng) + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            *o += y;
        }
    }
    out
}

/// Formant-shaped harmonic complex with aspiration noise, gated by
/// syllables and scaled to `target_rms`.
pub fn synth_speech(len: usize, target_rms: f64, rng: &mut impl Rng) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let base_f0 = rng.random_range(100.0..220.0);
    let ramp = (0.015 * sr) as usize;
    let mut x = vec![0.0; len];
    for syl in syllables(len, base_f0, rng) {
        let n = syl.end - syl.start;
        let mut phase = rng.random_range(0.0..2.0 * PI);
        let noise = aspiration(n, &syl.formants, rng);
        let noise_rms = rms(&noise).max(1e-12);
        let mut voiced = vec![0.0; n];
        for (i, v) in voiced.iter_mut().enumerate() {
            let frac = i as f64 / n.max(1) as f64;
            let f0 = syl.f0 * (1.0 + syl.glide * frac);
            phase += 2.0 * PI * f0 / sr;
            let mut k = 1;
            while k as f64 * f0 < SPEECH_TOP_HZ {
                *v += formant_gain(k as f64 * f0, &syl.formants) * (k as f64 * phase).sin();
                k += 1;
            }
        }
        let voiced_rms = rms(&voiced).max(1e-12);
        for i in 0..n {
            let mut env = syl.level;
            if i < ramp {
                env *= 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
            }
            if n - i <= ramp {
                env *= 0.5 - 0.5 * (PI * (n - i) as f64 / ramp as f64).cos();
            }
            x[syl.start + i] = env * (voiced[i] / voiced_rms + ASPIRATION * noise[i] / noise_rms);
        }
    }
    let r = rms(&x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target_rms / r);
    }
    x
}

pub fn synth_noise(len: usize, kind: NoiseKind, target_rms: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut x: Vec<f64> = (0..len).map(|_| gauss(rng)).collect();
    if kind == NoiseKind::Pink {
        // Paul Kellet's refined 1/f filter.
        let mut b = [0.0f64; 7];
        for v in &mut x {
            let w = *v;
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            *v = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
            b[6] = w * 0.115926;
        }
    }
    let r = rms(&x);
    x.iter_mut().for_each(|v| *v *= target_rms / r);
    x
}

/// Per-video-frame RMS of `clean`, normalized to a peak of 1.
pub fn energy_envelope(clean: &[f64]) -> Vec<f64> {
    let per = (SAMPLE_RATE / VIDEO_FPS) as usize;
    let frames = expected_video_frames(clean.len());
    let env: Vec<f64> = (0..frames)
        .map(|v| {
            let lo = (v * per).min(clean.len());
            let hi = ((v + 1) * per).min(clean.len());
            rms(&clean[lo..hi])
        })
        .collect();
    let peak = env.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        env.iter().map(|e| e / peak).collect()
    } else {
        env
    }
}

fn synth_embeddings(clean: &[f64], cfg: &SynthConfig, rng: &mut impl Rng) -> Result<LipEmbeddingSequence> {
    let env = energy_envelope(clean);
    let mut data = Vec::with_capacity(env.len() * EMBEDDING_DIM);
    for e in &env {
        for d in 0..EMBEDDING_DIM {
            let z = gauss(rng);
            data.push(if d < cfg.envelope_dims {
                e + cfg.envelope_noise * z
            } else {
                cfg.background_noise * z
            });
        }
    }
    LipEmbeddingSequence::new(Tensor::new(&[env.len(), EMBEDDING_DIM], data)?)
}
