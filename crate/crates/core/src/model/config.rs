use crate::dsp::FFT_BINS;
use crate::error::{Error, Result};
use crate::tensor::{init, NamedTensorStore, Pad2d, Tensor};

use super::EMBEDDING_DIM;

/// Architecture of the mask network.
///
/// The spectrogram is treated as a `[T, bins, 1]` image. The first
/// convolution is centred in time; later ones only look back, so the whole
/// stack sees `lookahead()` future frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub bins: usize,
    pub conv_filters: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub lstm_units: usize,
    pub fc_units: usize,
    pub audio_only: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            bins: FFT_BINS,
            conv_filters: vec![64, 64, 64, 64, 4],
            conv_kernels: vec![5, 5, 5, 5, 1],
            lstm_units: 622,
            fc_units: 622,
            audio_only: false,
        }
    }
}

impl ModelConfig {
    /// Reduced width for quick training runs; same topology.
    pub fn toy() -> Self {
        ModelConfig {
            conv_filters: vec![2, 2, 2, 2, 1],
            lstm_units: 32,
            fc_units: 32,
            ..Default::default()
        }
    }

    pub fn with_audio_only(mut self, audio_only: bool) -> Self {
        self.audio_only = audio_only;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_filters.is_empty() || self.conv_filters.len() != self.conv_kernels.len() {
            return Err(Error::Config("conv_filters and conv_kernels must be equal, non-empty lists".into()));
        }
        if self.conv_kernels.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(Error::Config("conv kernels must be odd".into()));
        }
        if self.conv_filters.contains(&0) || self.lstm_units == 0 || self.fc_units == 0 || self.bins == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn audio_feature_width(&self) -> usize {
        self.bins * self.conv_filters.last().copied().unwrap_or(1)
    }

    pub fn fused_width(&self) -> usize {
        self.audio_feature_width() + EMBEDDING_DIM
    }

    /// Future frames needed before a mask row can be produced.
    pub fn lookahead(&self) -> usize {
        (self.conv_kernels[0] - 1) / 2
    }

    /// Past frames the conv stack sees.
    pub fn receptive_past(&self) -> usize {
        self.lookahead() + self.conv_kernels[1..].iter().map(|k| k - 1).sum::<usize>()
    }

    pub(crate) fn conv_in(&self, layer: usize) -> usize {
        if layer == 0 {
            1
        } else {
            self.conv_filters[layer - 1]
        }
    }

    /// Zero padding of conv `layer`: frequency centred, time centred for the
    /// first layer and causal afterwards.
    pub(crate) fn conv_pad(&self, layer: usize) -> Pad2d {
        let k = self.conv_kernels[layer];
        let half = (k - 1) / 2;
        if layer == 0 {
            Pad2d::uniform(half)
        } else {
            Pad2d {
                top: k - 1,
                bottom: 0,
                left: half,
                right: half,
            }
        }
    }

    /// Seeded initial weights: Kaiming-uniform conv/dense kernels, uniform
    /// `1/sqrt(fan_in)` LSTM matrices, zero biases.
    pub fn init_weights(&self, seed: u64) -> Result<NamedTensorStore> {
        self.validate()?;
        let mut rng = init::seeded(seed);
        let mut s = NamedTensorStore::new();
        for (i, (&f, &k)) in self.conv_filters.iter().zip(&self.conv_kernels).enumerate() {
            let cin = self.conv_in(i);
            let kernel = init::kaiming_uniform(&[k, k, cin, f], k * k * cin, &mut rng);
            s.insert(conv_kernel(i), zero_mean_filters(kernel))?;
            s.insert(conv_bias(i), Tensor::zeros(&[f]))?;
        }
        let (din, h) = (self.fused_width(), self.lstm_units);
        s.insert("lstm.wx", init::uniform(&[din, 4 * h], 1.0 / (din as f64).sqrt(), &mut rng))?;
        s.insert("lstm.wh", init::uniform(&[h, 4 * h], 1.0 / (h as f64).sqrt(), &mut rng))?;
        s.insert("lstm.b", Tensor::zeros(&[4 * h]))?;
        let fc = self.fc_units;
        s.insert("fc1.w", init::kaiming_uniform(&[h, fc], h, &mut rng))?;
        s.insert("fc1.b", Tensor::zeros(&[fc]))?;
        s.insert("fc2.w", init::kaiming_uniform(&[fc, fc], fc, &mut rng))?;
        s.insert("fc2.b", Tensor::zeros(&[fc]))?;
        s.insert("out.w", init::kaiming_uniform(&[fc, self.bins], fc, &mut rng))?;
        s.insert("out.b", Tensor::zeros(&[self.bins]))?;
        if self.audio_only {
            s.insert(VISUAL_CONST, Tensor::zeros(&[EMBEDDING_DIM]))?;
        }
        Ok(s)
    }

    /// Recovers the architecture from a weight store.
    pub fn from_weights(w: &NamedTensorStore) -> Result<Self> {
        let mut filters = Vec::new();
        let mut kernels = Vec::new();
        let mut i = 0;
        while let Some(k) = w.get(&conv_kernel(i)) {
            let d = k.dims();
            if d.len() != 4 || d[0] != d[1] {
                return Err(Error::Config(format!("{} must be [k, k, cin, cout], got {d:?}", conv_kernel(i))));
            }
            kernels.push(d[0]);
            filters.push(d[3]);
            i += 1;
        }
        let lstm_wh = w.require("lstm.wh")?;
        let fc = w.require("fc1.w")?;
        let out = w.require("out.w")?;
        let cfg = ModelConfig {
            bins: out.dims().get(1).copied().unwrap_or(0),
            conv_filters: filters,
            conv_kernels: kernels,
            lstm_units: lstm_wh.dims()[0],
            fc_units: fc.dims().get(1).copied().unwrap_or(0),
            audio_only: w.contains(VISUAL_CONST),
        };
        cfg.validate()?;
        cfg.check_weights(w)?;
        Ok(cfg)
    }

    pub fn check_weights(&self, w: &NamedTensorStore) -> Result<()> {
        let expect = self.init_weights(0)?;
        for (name, t) in expect.iter() {
            let got = w.require(name)?;
            if got.dims() != t.dims() {
                return Err(Error::Config(format!(
                    "weight '{name}' has dims {:?}, expected {:?}",
                    got.dims(),
                    t.dims()
                )));
            }
        }
        if let Some(extra) = w.names().find(|n| !expect.contains(n)) {
            return Err(Error::Config(format!("unexpected weight '{extra}'")));
        }
        Ok(())
    }
}

pub const VISUAL_CONST: &str = "visual_const";

/// Removes each output channel's mean weight. Log-magnitude inputs are
/// non-negative, so a filter with a negative weight sum would start out
/// dead everywhere behind its ReLU.
fn zero_mean_filters(mut kernel: Tensor) -> Tensor {
    let cout = kernel.dims()[3];
    let taps = kernel.numel() / cout;
    if taps < 2 {
        return kernel;
    }
    let data = kernel.data_mut();
    for o in 0..cout {
        let mean = (0..taps).map(|t| data[t * cout + o]).sum::<f64>() / taps as f64;
        for t in 0..taps {
            data[t * cout + o] -= mean;
        }
    }
    kernel
}

pub(crate) fn conv_kernel(i: usize) -> String {
    format!("conv{i}.kernel")
}

pub(crate) fn conv_bias(i: usize) -> String {
    format!("conv{i}.bias")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_widths() {
        let c = ModelConfig::default();
        assert_eq!(c.audio_feature_width(), 2488);
        assert_eq!(c.fused_width(), 3000);
        assert_eq!(c.lookahead(), 2);
        assert_eq!(c.receptive_past(), 14);
    }

    #[test]
    fn config_round_trips_through_weights() {
        for cfg in [ModelConfig::toy(), ModelConfig::toy().with_audio_only(true)] {
            let w = cfg.init_weights(3).unwrap();
            assert_eq!(ModelConfig::from_weights(&w).unwrap(), cfg);
        }
    }

    #[test]
    fn init_is_seeded() {
        let c = ModelConfig::toy();
        assert_eq!(c.init_weights(1).unwrap(), c.init_weights(1).unwrap());
        assert_ne!(c.init_weights(1).unwrap(), c.init_weights(2).unwrap());
    }

    #[test]
    fn rejects_even_kernels() {
        let c = ModelConfig {
            conv_kernels: vec![4, 5, 5, 5, 1],
            ..ModelConfig::toy()
        };
        assert!(c.validate().is_err());
    }
}
