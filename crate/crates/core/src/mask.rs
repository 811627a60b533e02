//! Ideal binary masks, mask application and resynthesis with the noisy phase.

use crate::dsp::{istft, stft, AnalysisConfig, AudioBuffer, ComplexSpectrogram};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    Binary,
    Soft,
}

impl std::str::FromStr for MaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(MaskKind::Binary),
            "soft" => Ok(MaskKind::Soft),
            other => Err(Error::Config(format!("mask mode '{other}' (expected binary or soft)"))),
        }
    }
}

/// `T x bins` gains.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralMask {
    values: Tensor,
    kind: MaskKind,
}

impl SpectralMask {
    pub fn new(values: Tensor, kind: MaskKind) -> Result<Self> {
        if values.rank() != 2 {
            return Err(shape_err!("mask must be [T, bins], got {:?}", values.dims()));
        }
        let ok = match kind {
            MaskKind::Binary => values.data().iter().all(|&v| v == 0.0 || v == 1.0),
            MaskKind::Soft => values.data().iter().all(|&v| (0.0..=1.0).contains(&v)),
        };
        if !ok {
            return Err(Error::Numeric(format!("{kind:?} mask has values outside its range")));
        }
        Ok(SpectralMask { values, kind })
    }

    pub fn ones(frames: usize, bins: usize) -> Self {
        SpectralMask {
            values: Tensor::full(&[frames, bins], 1.0),
            kind: MaskKind::Binary,
        }
    }

    pub fn zeros(frames: usize, bins: usize) -> Self {
        SpectralMask {
            values: Tensor::zeros(&[frames, bins]),
            kind: MaskKind::Binary,
        }
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn frames(&self) -> usize {
        self.values.dims()[0]
    }

    pub fn bins(&self) -> usize {
        self.values.dims()[1]
    }

    /// `1` where the value is at least `threshold`.
    pub fn binarize(&self, threshold: f64) -> SpectralMask {
        SpectralMask {
            values: self.values.map(|v| if v >= threshold { 1.0 } else { 0.0 }),
            kind: MaskKind::Binary,
        }
    }

    /// Fraction of entries whose binarized value agrees with `reference`.
    pub fn accuracy_against(&self, reference: &SpectralMask, threshold: f64) -> Result<f64> {
        if self.values.dims() != reference.values.dims() {
            return Err(shape_err!(
                "mask dims {:?} vs reference {:?}",
                self.values.dims(),
                reference.values.dims()
            ));
        }
        let a = self.binarize(threshold);
        let b = reference.binarize(threshold);
        let hits = a.values.data().iter().zip(b.values.data()).filter(|(x, y)| x == y).count();
        Ok(hits as f64 / a.values.numel() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskConfig {
    pub lc_db: f64,
    /// Read `lc_db` as an offset from the mixture SNR (`LC = SNR + lc_db`).
    pub lc_relative: bool,
    pub binarize_threshold: f64,
    pub output_kind: MaskKind,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            lc_db: 0.0,
            lc_relative: false,
            binarize_threshold: 0.5,
            output_kind: MaskKind::Binary,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::Config(format!(
                "binarize threshold {} must lie in (0, 1)",
                self.binarize_threshold
            )));
        }
        if !self.lc_db.is_finite() {
            return Err(Error::Config("local criterion must be finite".into()));
        }
        Ok(())
    }

    /// The absolute criterion for a mixture at `snr_db`.
    pub fn at_snr(&self, snr_db: f64) -> MaskConfig {
        if self.lc_relative {
            MaskConfig { lc_db: snr_db + self.lc_db, lc_relative: false, ..*self }
        } else {
            *self
        }
    }

    /// Converts a network output into the configured output kind.
    pub fn finalize(&self, mask: &SpectralMask) -> SpectralMask {
        match self.output_kind {
            MaskKind::Binary if mask.kind == MaskKind::Soft => mask.binarize(self.binarize_threshold),
            _ => mask.clone(),
        }
    }
}

/// 1 where `10 log10(|S|^2 / |N|^2) > lc_db`; ties and silent bins give 0.
/// A relative criterion must be resolved with `MaskConfig::at_snr` first.
pub fn ideal_binary_mask(
    clean: &ComplexSpectrogram,
    noise: &ComplexSpectrogram,
    cfg: &MaskConfig,
) -> Result<SpectralMask> {
    if clean.frames() != noise.frames() || clean.bins() != noise.bins() {
        return Err(shape_err!(
            "clean spectrogram {}x{} vs noise {}x{}",
            clean.frames(),
            clean.bins(),
            noise.frames(),
            noise.bins()
        ));
    }
    if cfg.lc_relative {
        return Err(Error::Config("relative local criterion needs the mixture SNR".into()));
    }
    let values = clean
        .data()
        .iter()
        .zip(noise.data())
        .map(|(s, n)| {
            let (ps, pn) = (s.norm_sqr(), n.norm_sqr());
            let on = if ps == 0.0 {
                false
            } else if pn == 0.0 {
                true
            } else {
                10.0 * (ps / pn).log10() > cfg.lc_db
            };
            if on {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let values = Tensor::new(&[clean.frames(), clean.bins()], values)?;
    Ok(SpectralMask {
        values,
        kind: MaskKind::Binary,
    })
}

/// Scales each bin's magnitude by the mask, leaving its phase untouched.
pub fn apply_mask(noisy: &ComplexSpectrogram, mask: &SpectralMask) -> Result<ComplexSpectrogram> {
    if mask.frames() != noisy.frames() || mask.bins() != noisy.bins() {
        return Err(shape_err!(
            "mask {}x{} vs spectrogram {}x{}",
            mask.frames(),
            mask.bins(),
            noisy.frames(),
            noisy.bins()
        ));
    }
    let data = noisy.data().iter().zip(mask.values.data()).map(|(x, m)| x * m).collect();
    ComplexSpectrogram::new(noisy.frames(), noisy.bins(), data, noisy.signal_len)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Resynthesis {
    pub audio: AudioBuffer,
    pub clipped: usize,
}

pub fn resynthesize(noisy: &AudioBuffer, mask: &SpectralMask, cfg: &AnalysisConfig) -> Result<Resynthesis> {
    let spec = stft(noisy, cfg)?;
    if mask.frames() != spec.frames() {
        return Err(shape_err!("mask has {} frames, signal has {}", mask.frames(), spec.frames()));
    }
    resynthesize_spec(&spec, mask, cfg)
}

pub fn resynthesize_spec(spec: &ComplexSpectrogram, mask: &SpectralMask, cfg: &AnalysisConfig) -> Result<Resynthesis> {
    let masked = apply_mask(spec, mask)?;
    let mut audio = istft(&masked, cfg)?;
    let clipped = audio.clamp_unit();
    Ok(Resynthesis { audio, clipped })
}
