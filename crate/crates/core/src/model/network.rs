use crate::error::{shape_err, Error, Result};
use crate::mask::{MaskKind, SpectralMask};
use crate::tensor::{Conv2dSpec, NamedTensorStore, ParamSource, Tape, Tensor, Var};

use super::config::{conv_bias, conv_kernel, ModelConfig, VISUAL_CONST};
use super::{LipEmbeddingSequence, REPEAT};

/// Mask network weights together with the architecture they imply.
#[derive(Clone, Debug, PartialEq)]
pub struct AvModel {
    config: ModelConfig,
    weights: NamedTensorStore,
}

/// Handles into a recorded forward pass.
pub struct Forward {
    pub features: Var,
    pub mask: Var,
}

impl AvModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let weights = config.init_weights(seed)?;
        Ok(AvModel { config, weights })
    }

    pub fn from_weights(weights: NamedTensorStore) -> Result<Self> {
        let config = ModelConfig::from_weights(&weights)?;
        Ok(AvModel { config, weights })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &NamedTensorStore {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut NamedTensorStore {
        &mut self.weights
    }

    pub fn into_weights(self) -> NamedTensorStore {
        self.weights
    }

    pub fn audio_only(&self) -> bool {
        self.config.audio_only
    }

    fn check_input(&self, mag: &Tensor) -> Result<usize> {
        if mag.rank() != 2 || mag.dims()[1] != self.config.bins {
            return Err(shape_err!(
                "noisy magnitude must be [T, {}], got {:?}",
                self.config.bins,
                mag.dims()
            ));
        }
        mag.check_finite("noisy magnitude")?;
        Ok(mag.dims()[0])
    }

    /// Records the conv front end: `[T, bins]` magnitude to `[T, bins * C]`.
    pub fn record_audio_features(&self, tape: &mut Tape, mag: &Tensor, params: &ParamSource) -> Result<Var> {
        let t = self.check_input(mag)?;
        let x = tape.input(mag.reshape(&[t, self.config.bins, 1])?);
        let mut h = tape.log1p(x);
        for i in 0..self.config.conv_filters.len() {
            let k = params.var(tape, &self.weights, &conv_kernel(i))?;
            let b = params.var(tape, &self.weights, &conv_bias(i))?;
            let spec = Conv2dSpec::explicit(1, self.config.conv_pad(i));
            h = tape.conv2d(h, k, b, spec)?;
            h = tape.relu(h);
        }
        tape.reshape(h, &[t, self.config.audio_feature_width()])
    }

    /// Records the full network. `emb` is ignored (and may be `None`) for an
    /// audio-only model.
    pub fn record(
        &self,
        tape: &mut Tape,
        mag: &Tensor,
        emb: Option<&LipEmbeddingSequence>,
        params: &ParamSource,
    ) -> Result<Forward> {
        let t = self.check_input(mag)?;
        let features = self.record_audio_features(tape, mag, params)?;
        let visual = if self.config.audio_only {
            let c = params.var(tape, &self.weights, VISUAL_CONST)?;
            tape.broadcast_rows(c, t)?
        } else {
            let emb = emb.ok_or_else(|| Error::Usage("audio-visual model needs lip embeddings".into()))?;
            if emb.frames() * REPEAT != t {
                return Err(Error::Alignment(format!(
                    "{t} audio frames need {} embedding frames, got {}",
                    t.div_ceil(REPEAT),
                    emb.frames()
                )));
            }
            tape.input(emb.upsample())
        };
        let fused = tape.concat(features, visual)?;
        let (wx, wh, b) = (
            params.var(tape, &self.weights, "lstm.wx")?,
            params.var(tape, &self.weights, "lstm.wh")?,
            params.var(tape, &self.weights, "lstm.b")?,
        );
        let mut h = tape.lstm(fused, wx, wh, b)?;
        for layer in ["fc1", "fc2"] {
            let w = params.var(tape, &self.weights, &format!("{layer}.w"))?;
            let b = params.var(tape, &self.weights, &format!("{layer}.b"))?;
            h = tape.dense(h, w, b)?;
            h = tape.relu(h);
        }
        let w = params.var(tape, &self.weights, "out.w")?;
        let b = params.var(tape, &self.weights, "out.b")?;
        let logits = tape.dense(h, w, b)?;
        let mask = tape.sigmoid(logits);
        Ok(Forward { features, mask })
    }

    pub fn audio_features(&self, mag: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = self.record_audio_features(&mut tape, mag, &ParamSource::Constants)?;
        Ok(tape.value(v).clone())
    }

    /// Soft mask `[T, bins]` in `(0, 1)`.
    pub fn predict_masks(&self, mag: &Tensor, emb: Option<&LipEmbeddingSequence>) -> Result<SpectralMask> {
        let mut tape = Tape::new();
        let f = self.record(&mut tape, mag, emb, &ParamSource::Constants)?;
        SpectralMask::new(tape.value(f.mask).clone(), MaskKind::Soft)
    }
}

pub fn predict_masks(model: &AvModel, mag: &Tensor, emb: Option<&LipEmbeddingSequence>) -> Result<SpectralMask> {
    model.predict_masks(mag, emb)
}
