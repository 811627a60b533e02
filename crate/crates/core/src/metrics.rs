//! Objective quality measures: SI-SDR, classic STOI and measured SNR.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::{rms, AudioBuffer};
use crate::error::{Error, Result};

/// Bound on reported SI-SDR magnitude, in dB.
pub const SI_SDR_CAP_DB: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub si_sdr_db: f64,
    pub stoi: f64,
    pub measured_snr_db: f64,
}

fn equal_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Usage(format!("{what}: lengths differ ({a} vs {b})")));
    }
    if a == 0 {
        return Err(Error::Degenerate(format!("{what}: empty signal")));
    }
    Ok(())
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Scale-invariant SDR in dB, clamped to `[-100, 100]`.
pub fn si_sdr(estimate: &AudioBuffer, reference: &AudioBuffer) -> Result<f64> {
    si_sdr_slices(&estimate.samples, &reference.samples)
}

pub fn si_sdr_slices(est: &[f64], reference: &[f64]) -> Result<f64> {
    equal_len(est.len(), reference.len(), "si_sdr")?;
    let ref_energy = energy(reference);
    if ref_energy == 0.0 {
        return Err(Error::Degenerate("si_sdr: silent reference".into()));
    }
    let alpha = est.iter().zip(reference).map(|(a, b)| a * b).sum::<f64>() / ref_energy;
    let signal = alpha * alpha * ref_energy;
    let residual: f64 = est
        .iter()
        .zip(reference)
        .map(|(e, s)| {
            let d = e - alpha * s;
            d * d
        })
        .sum();
    if residual < 1e-10 * signal {
        return Ok(SI_SDR_CAP_DB);
    }
    if signal == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (signal / residual).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// `20 log10(rms(clean) / rms(noise))`.
pub fn measured_snr(clean: &[f64], scaled_noise: &[f64]) -> Result<f64> {
    equal_len(clean.len(), scaled_noise.len(), "measured_snr")?;
    let (s, n) = (rms(clean), rms(scaled_noise));
    if s == 0.0 || n == 0.0 {
        return Err(Error::Degenerate("measured_snr: silent input".into()));
    }
    Ok(20.0 * (s / n).log10())
}

const STOI_FS: u32 = 10_000;
const STOI_FRAME: usize = 256;
const STOI_NFFT: usize = 512;
const STOI_BANDS: usize = 15;
const STOI_MIN_FREQ: f64 = 150.0;
const STOI_SEGMENT: usize = 30;
const STOI_BETA_DB: f64 = -15.0;
const STOI_DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let p = std::f64::consts::PI * x;
        p.sin() / p
    }
}

/// Kaiser-windowed sinc low-pass for rational resampling by `up / down`,
/// 60 dB stop band, unit DC gain per output phase.
fn resample_filter(up: u64, down: u64) -> Vec<f64> {
    let cutoff = 1.0 / (2 * up.max(down)) as f64;
    let roll_off = cutoff / 10.0;
    let rejection_db = 60.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
    let beta = 0.1102 * (rejection_db - 8.7);
    let m = (2 * half + 1) as f64;
    let i0b = bessel_i0(beta);
    let h: Vec<f64> = (-half..=half)
        .enumerate()
        .map(|(n, t)| {
            let r = 2.0 * n as f64 / (m - 1.0) - 1.0;
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
            w * 2.0 * up as f64 * cutoff * sinc(2.0 * cutoff * t as f64)
        })
        .collect();
    let total: f64 = h.iter().sum();
    h.iter().map(|v| v / total * up as f64).collect()
}

/// Polyphase resampling from `from` Hz to `to` Hz with a centred filter and
/// zero boundary; output length `ceil(len * to / from)`.
fn resample(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to {
        return x.to_vec();
    }
    let g = gcd(from as u64, to as u64);
    let (up, down) = (to as u64 / g, from as u64 / g);
    let h = resample_filter(up, down);
    let half = (h.len() - 1) / 2;
    let n_out = (x.len() as u64 * up).div_ceil(down) as usize;
    let (up, down) = (up as usize, down as usize);
    let mut out = vec![0.0; n_out];
    for (n, o) in out.iter_mut().enumerate() {
        // Upsampled index m = n*down + half - i must be a multiple of `up`.
        let centre = n * down + half;
        let lo = centre.saturating_sub(h.len() - 1);
        let first = lo.div_ceil(up) * up;
        let mut acc = 0.0;
        let mut m = first;
        while m <= centre {
            let k = m / up;
            if k >= x.len() {
                break;
            }
            acc += h[centre - m] * x[k];
            m += up;
        }
        *o = acc;
    }
    out
}

/// Symmetric Hann of `len` points without the zero end points.
fn inner_hann(len: usize) -> Vec<f64> {
    (1..=len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (len + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize, frame: usize, hop: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(frame)).step_by(hop)
}

fn overlap_add(frames: &[Vec<f64>], hop: usize) -> Vec<f64> {
    if frames.is_empty() {
        return Vec::new();
    }
    let flen = frames[0].len();
    let mut out = vec![0.0; (frames.len() - 1) * hop + flen];
    for (i, f) in frames.iter().enumerate() {
        for (o, v) in out[i * hop..].iter_mut().zip(f) {
            *o += v;
        }
    }
    out
}

/// Drops frames whose clean-signal energy is more than 40 dB below the
/// loudest clean frame; re-assembles both signals by overlap-add.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hop = STOI_FRAME / 2;
    let w = inner_hann(STOI_FRAME);
    let window = |s: &[f64], at: usize| -> Vec<f64> { w.iter().zip(&s[at..at + STOI_FRAME]).map(|(a, b)| a * b).collect() };
    let starts: Vec<usize> = frame_starts(x.len(), STOI_FRAME, hop).collect();
    let xf: Vec<Vec<f64>> = starts.iter().map(|&s| window(x, s)).collect();
    let energies: Vec<f64> = xf.iter().map(|f| 20.0 * (energy(f).sqrt() + EPS).log10()).collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = (0..starts.len()).filter(|&i| max - STOI_DYN_RANGE_DB - energies[i] < 0.0).collect();
    let xs: Vec<Vec<f64>> = keep.iter().map(|&i| xf[i].clone()).collect();
    let ys: Vec<Vec<f64>> = keep.iter().map(|&i| window(y, starts[i])).collect();
    (overlap_add(&xs, hop), overlap_add(&ys, hop))
}

/// One-third-octave band edges as `[lo, hi)` FFT-bin ranges.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let nbins = STOI_NFFT / 2 + 1;
    let f: Vec<f64> = (0..nbins).map(|i| i as f64 * STOI_FS as f64 / STOI_NFFT as f64).collect();
    let nearest = |target: f64| -> usize {
        let mut best = 0;
        for i in 1..nbins {
            if (f[i] - target).powi(2) < (f[best] - target).powi(2) {
                best = i;
            }
        }
        best
    };
    (0..STOI_BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = STOI_MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = STOI_MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Band envelopes `[bands][frames]` of a 10 kHz signal.
fn band_envelopes(x: &[f64], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let hop = STOI_FRAME / 2;
    let w = inner_hann(STOI_FRAME);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(STOI_NFFT);
    let mut buf = vec![Complex64::new(0.0, 0.0); STOI_NFFT];
    let mut out = vec![Vec::new(); bands.len()];
    for s in frame_starts(x.len(), STOI_FRAME, hop) {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (i, (wv, xv)) in w.iter().zip(&x[s..s + STOI_FRAME]).enumerate() {
            buf[i].re = wv * xv;
        }
        fft.process(&mut buf);
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            let p: f64 = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            out[b].push(p.sqrt());
        }
    }
    out
}

fn norm(x: &[f64]) -> f64 {
    energy(x).sqrt()
}

/// Classic short-time objective intelligibility of `estimate` against the
/// clean `reference`.
pub fn stoi(estimate: &AudioBuffer, reference: &AudioBuffer) -> Result<f64> {
    if estimate.sample_rate != reference.sample_rate {
        return Err(Error::Usage("stoi: sample rates differ".into()));
    }
    stoi_slices(&estimate.samples, &reference.samples, reference.sample_rate)
}

pub fn stoi_slices(estimate: &[f64], reference: &[f64], sample_rate: u32) -> Result<f64> {
    equal_len(estimate.len(), reference.len(), "stoi")?;
    if sample_rate == 0 {
        return Err(Error::Usage("stoi: sample rate must be positive".into()));
    }
    let x = resample(reference, sample_rate, STOI_FS);
    let y = resample(estimate, sample_rate, STOI_FS);
    let (x, y) = remove_silent_frames(&x, &y);
    let bands = third_octave_bands();
    let xt = band_envelopes(&x, &bands);
    let yt = band_envelopes(&y, &bands);
    let frames = xt[0].len();
    if frames < STOI_SEGMENT {
        return Err(Error::Degenerate(format!(
            "stoi: {frames} analysis frames after silence removal, need {STOI_SEGMENT}"
        )));
    }
    let clip = 1.0 + 10f64.powf(-STOI_BETA_DB / 20.0);
    let mut total = 0.0;
    let segments = frames - STOI_SEGMENT + 1;
    for m in STOI_SEGMENT..=frames {
        for b in 0..bands.len() {
            let xs = &xt[b][m - STOI_SEGMENT..m];
            let ys = &yt[b][m - STOI_SEGMENT..m];
            let alpha = norm(xs) / (norm(ys) + EPS);
            let mut yp: Vec<f64> = ys.iter().zip(xs).map(|(yv, xv)| (yv * alpha).min(xv * clip)).collect();
            let mut xc = xs.to_vec();
            for v in [&mut yp, &mut xc] {
                let mean = v.iter().sum::<f64>() / STOI_SEGMENT as f64;
                v.iter_mut().for_each(|e| *e -= mean);
                let n = norm(v) + EPS;
                v.iter_mut().for_each(|e| *e /= n);
            }
            total += yp.iter().zip(&xc).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(total / (segments * bands.len()) as f64)
}

/// All three measures for an enhanced signal.
pub fn evaluate(estimate: &AudioBuffer, clean: &AudioBuffer, scaled_noise: &[f64]) -> Result<EvalResult> {
    Ok(EvalResult {
        si_sdr_db: si_sdr(estimate, clean)?,
        stoi: stoi(estimate, clean)?,
        measured_snr_db: measured_snr(&clean.samples, scaled_noise)?,
    })
}
