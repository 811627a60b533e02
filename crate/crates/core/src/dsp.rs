//! Framing, Hann windowing and the 622-bin STFT with weighted overlap-add
//! resynthesis.
//!
//! Frame geometry: the signal is prefixed with `frame_len - 2 * hop` zeros
//! (816 samples at the default geometry) and its tail is reflect-padded. In
//! padded coordinates frame `t` covers `[t * hop, t * hop + frame_len)`. A
//! signal of `n` samples yields `max(1, n / hop)` frames, so 3 s of audio is
//! exactly 225 frames and frame `t` is complete as soon as `(t + 2) * hop`
//! input samples have arrived. The streaming engine relies on that.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

pub const SAMPLE_RATE: u32 = 16_000;
pub const FRAME_LEN: usize = 1242;
pub const HOP: usize = 213;
pub const FFT_BINS: usize = FRAME_LEN / 2 + 1;

/// Mono audio.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioBuffer { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Clamps into `[-1, 1]`, returning how many samples were clipped.
    pub fn clamp_unit(&mut self) -> usize {
        let mut clipped = 0;
        for s in &mut self.samples {
            if s.abs() > 1.0 {
                *s = s.clamp(-1.0, 1.0);
                clipped += 1;
            }
        }
        clipped
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Periodic Hann window, `0.5 - 0.5 cos(2 pi n / N)`; sums to exactly `N / 2`.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

#[derive(Clone)]
pub struct AnalysisConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
    window: Arc<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for AnalysisConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalysisConfig")
            .field("frame_len", &self.frame_len)
            .field("hop", &self.hop)
            .field("sample_rate", &self.sample_rate)
            .finish()
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self::new(FRAME_LEN, HOP).expect("default analysis geometry is valid")
    }
}

impl AnalysisConfig {
    pub fn new(frame_len: usize, hop: usize) -> Result<Self> {
        if frame_len < 2 || hop == 0 || 2 * hop > frame_len {
            return Err(Error::Config(format!(
                "frame_len {frame_len} / hop {hop}: need 0 < 2 * hop <= frame_len"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(AnalysisConfig {
            frame_len,
            hop,
            sample_rate: SAMPLE_RATE,
            window: Arc::new(hann(frame_len)),
            fft: planner.plan_fft_forward(frame_len),
            ifft: planner.plan_fft_inverse(frame_len),
        })
    }

    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Zeros prefixed before the first sample.
    pub fn lead_pad(&self) -> usize {
        self.frame_len - 2 * self.hop
    }

    pub fn frame_count(&self, len: usize) -> usize {
        (len / self.hop).max(1)
    }

    /// Original-signal index of the first sample of frame `t` (may be negative).
    pub fn frame_start(&self, t: usize) -> isize {
        (t * self.hop) as isize - self.lead_pad() as isize
    }

    pub fn hop_ms(&self) -> f64 {
        1000.0 * self.hop as f64 / self.sample_rate as f64
    }

    /// Forward transform of one windowed frame (`frame_len` real samples,
    /// window not yet applied) into `bins()` complex values.
    pub fn analyze_frame(&self, frame: &[f64], out: &mut [Complex64]) {
        let mut buf: Vec<Complex64> = frame
            .iter()
            .zip(self.window.iter())
            .map(|(x, w)| Complex64::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        out.copy_from_slice(&buf[..self.bins()]);
    }

    /// Inverse transform of a half spectrum with the synthesis window applied.
    pub fn synthesize_frame(&self, spec: &[Complex64], out: &mut [f64]) {
        let n = self.frame_len;
        let bins = self.bins();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..bins].copy_from_slice(spec);
        // Hermitian completion; DC and (for even n) Nyquist must be real.
        buf[0].im = 0.0;
        if n.is_multiple_of(2) {
            buf[bins - 1].im = 0.0;
        }
        for k in bins..n {
            buf[k] = buf[n - k].conj();
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / n as f64;
        for ((o, b), w) in out.iter_mut().zip(&buf).zip(self.window.iter()) {
            *o = b.re * scale * w;
        }
    }

    /// Sum of squared windows of all frames covering each original sample.
    pub fn window_power(&self, len: usize, frames: usize) -> Vec<f64> {
        let mut wss = vec![0.0; len];
        for t in 0..frames {
            let start = self.frame_start(t);
            for (k, w) in self.window.iter().enumerate() {
                let n = start + k as isize;
                if n >= 0 && (n as usize) < len {
                    wss[n as usize] += w * w;
                }
            }
        }
        wss
    }
}

/// `T x bins` complex spectrogram together with the sample count it was
/// computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
    pub signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn new(frames: usize, bins: usize, data: Vec<Complex64>, signal_len: usize) -> Result<Self> {
        if frames == 0 || data.len() != frames * bins {
            return Err(shape_err!("spectrogram {frames}x{bins} needs {} values", frames * bins));
        }
        Ok(ComplexSpectrogram {
            frames,
            bins,
            data,
            signal_len,
        })
    }

    pub fn zeros(frames: usize, bins: usize, signal_len: usize) -> Self {
        ComplexSpectrogram {
            frames,
            bins,
            data: vec![Complex64::new(0.0, 0.0); frames * bins],
            signal_len,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// `|X|` as a `[T, bins]` tensor.
    pub fn magnitude(&self) -> Tensor {
        Tensor::new(&[self.frames, self.bins], self.data.iter().map(|c| c.norm()).collect())
            .expect("dims match data")
    }

    /// `arg X` in `(-pi, pi]`; zero bins have phase 0.
    pub fn phase(&self) -> Tensor {
        Tensor::new(&[self.frames, self.bins], self.data.iter().map(|c| phase_of(*c)).collect())
            .expect("dims match data")
    }

    pub fn from_polar(magnitude: &Tensor, phase: &Tensor, signal_len: usize) -> Result<Self> {
        if magnitude.dims() != phase.dims() || magnitude.rank() != 2 {
            return Err(shape_err!(
                "magnitude {:?} and phase {:?} must be equal [T, bins]",
                magnitude.dims(),
                phase.dims()
            ));
        }
        let data = magnitude
            .data()
            .iter()
            .zip(phase.data())
            .map(|(&m, &p)| Complex64::from_polar(m, p))
            .collect();
        Self::new(magnitude.dims()[0], magnitude.dims()[1], data, signal_len)
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

fn phase_of(c: Complex64) -> f64 {
    if c.re == 0.0 && c.im == 0.0 {
        return 0.0;
    }
    let p = c.im.atan2(c.re);
    // atan2 returns -pi for (-x, -0.0); fold onto +pi.
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Builds padded frame `t` of `x` (zero lead, reflected tail) into `out`.
pub fn extract_frame(x: &[f64], cfg: &AnalysisConfig, t: usize, out: &mut [f64]) {
    let start = cfg.frame_start(t);
    let n = x.len() as isize;
    for (k, o) in out.iter_mut().enumerate() {
        let i = start + k as isize;
        *o = if i < 0 {
            0.0
        } else if i < n {
            x[i as usize]
        } else {
            x[reflect_tail(i, x.len())]
        };
    }
}

/// Index into `x` for a position past its end, mirrored about the last
/// sample without repeating it (and folded again for very short signals).
fn reflect_tail(i: isize, len: usize) -> usize {
    crate::tensor::reflect_index(i, len)
}

pub fn stft(audio: &AudioBuffer, cfg: &AnalysisConfig) -> Result<ComplexSpectrogram> {
    if audio.sample_rate != cfg.sample_rate {
        return Err(Error::Config(format!(
            "sample rate {} Hz, analysis expects {} Hz",
            audio.sample_rate, cfg.sample_rate
        )));
    }
    if audio.samples.is_empty() {
        return Err(Error::Degenerate("stft of an empty signal".into()));
    }
    let frames = cfg.frame_count(audio.len());
    let bins = cfg.bins();
    let mut spec = ComplexSpectrogram::zeros(frames, bins, audio.len());
    let mut frame = vec![0.0; cfg.frame_len];
    for t in 0..frames {
        extract_frame(&audio.samples, cfg, t, &mut frame);
        cfg.analyze_frame(&frame, spec.frame_mut(t));
    }
    Ok(spec)
}

/// Weighted overlap-add inverse, trimmed to `spec.signal_len` samples.
pub fn istft(spec: &ComplexSpectrogram, cfg: &AnalysisConfig) -> Result<AudioBuffer> {
    istft_len(spec, cfg, spec.signal_len)
}

pub fn istft_len(spec: &ComplexSpectrogram, cfg: &AnalysisConfig, len: usize) -> Result<AudioBuffer> {
    if spec.bins() != cfg.bins() {
        return Err(shape_err!("spectrogram has {} bins, config expects {}", spec.bins(), cfg.bins()));
    }
    let frames = spec.frames();
    let last_end = cfg.frame_start(frames - 1) + cfg.frame_len as isize;
    if (last_end.max(0) as usize) < len {
        return Err(shape_err!("{frames} frames cannot cover {len} samples"));
    }
    let mut acc = vec![0.0; len];
    let mut buf = vec![0.0; cfg.frame_len];
    for t in 0..frames {
        cfg.synthesize_frame(spec.frame(t), &mut buf);
        let start = cfg.frame_start(t);
        for (k, v) in buf.iter().enumerate() {
            let n = start + k as isize;
            if n >= 0 && (n as usize) < len {
                acc[n as usize] += v;
            }
        }
    }
    let wss = cfg.window_power(len, frames);
    for (a, w) in acc.iter_mut().zip(&wss) {
        if *w <= 1e-12 {
            return Err(Error::Numeric("sample position with zero window coverage".into()));
        }
        *a /= w;
    }
    Ok(AudioBuffer::new(acc, cfg.sample_rate))
}
