//! Frame-at-a-time inference matching the batch network.
//!
//! Input frame `j` yields the mask row for frame `j - lookahead`. Each conv
//! layer keeps the last `k - 1` rows it was fed; the LSTM carries `(h, c)`.

use std::collections::VecDeque;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{conv2d_forward, gemm_row, lstm_step, Conv2dSpec, ConvGeom, LstmParams, LstmState, Pad2d, Tensor};

use super::config::{conv_bias, conv_kernel, VISUAL_CONST};
use super::network::AvModel;
use super::{EMBEDDING_DIM, REPEAT};

#[derive(Clone, Debug, PartialEq)]
pub struct StreamState {
    next_frame: usize,
    emitted: usize,
    finished: bool,
    conv_rows: Vec<VecDeque<Vec<f64>>>,
    lstm: LstmState,
    /// `(video index, embedding)` not yet consumed by the LSTM.
    pending: VecDeque<(usize, Vec<f64>)>,
}

impl StreamState {
    pub fn new(model: &AvModel) -> Self {
        let cfg = model.config();
        let conv_rows = (0..cfg.conv_filters.len())
            .map(|i| {
                let width = cfg.bins * cfg.conv_in(i);
                (0..cfg.conv_pad(i).top).map(|_| vec![0.0; width]).collect()
            })
            .collect();
        StreamState {
            next_frame: 0,
            emitted: 0,
            finished: false,
            conv_rows,
            lstm: LstmState::zeros(cfg.lstm_units),
            pending: VecDeque::new(),
        }
    }

    /// Input frames consumed so far.
    pub fn frames_in(&self) -> usize {
        self.next_frame
    }

    /// Mask rows produced so far.
    pub fn frames_out(&self) -> usize {
        self.emitted
    }

    pub fn lstm_state(&self) -> &LstmState {
        &self.lstm
    }

    /// Position of the next input frame within its embedding's three frames.
    pub fn repetition(&self) -> usize {
        self.next_frame % REPEAT
    }

    /// Whether the next input frame must come with a fresh embedding.
    pub fn needs_embedding(&self, model: &AvModel) -> bool {
        !model.audio_only() && self.repetition() == 0
    }

    pub fn context_len(&self) -> usize {
        self.conv_rows.iter().map(|r| r.len()).max().unwrap_or(0)
    }
}

fn conv_row(model: &AvModel, layer: usize, rows: &VecDeque<Vec<f64>>) -> Result<Vec<f64>> {
    let cfg = model.config();
    let k = cfg.conv_kernels[layer];
    let cin = cfg.conv_in(layer);
    let pad = cfg.conv_pad(layer);
    let image: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    let kernel = model.weights().require(&conv_kernel(layer))?;
    let bias = model.weights().require(&conv_bias(layer))?;
    let spec = Conv2dSpec::explicit(
        1,
        Pad2d {
            top: 0,
            bottom: 0,
            left: pad.left,
            right: pad.right,
        },
    );
    let geom = ConvGeom::resolve(&[k, cfg.bins, cin], kernel.dims(), &spec)?;
    let mut out = conv2d_forward(&image, kernel.data(), bias.data(), &geom);
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(out)
}

fn dense_row(model: &AvModel, layer: &str, x: &[f64], relu: bool) -> Result<Vec<f64>> {
    let w = model.weights().require(&format!("{layer}.w"))?;
    let b = model.weights().require(&format!("{layer}.b"))?;
    let mut out = b.data().to_vec();
    gemm_row(x, w.data(), &mut out);
    if relu {
        out.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    Ok(out)
}

/// Runs the conv stack on one new log-magnitude row; returns the feature
/// row for frame `next_frame - lookahead` once available.
fn push_conv(model: &AvModel, state: &mut StreamState, row: Vec<f64>) -> Result<Option<Vec<f64>>> {
    let mut carry = row;
    for layer in 0..state.conv_rows.len() {
        let k = model.config().conv_kernels[layer];
        let buf = &mut state.conv_rows[layer];
        buf.push_back(carry);
        if buf.len() < k {
            return Ok(None);
        }
        carry = conv_row(model, layer, buf)?;
        buf.pop_front();
    }
    Ok(Some(carry))
}

/// Fuses, runs the LSTM and the dense stack for one ready feature row.
fn finish_row(model: &AvModel, state: &mut StreamState, features: Vec<f64>) -> Result<Vec<f64>> {
    let t = state.emitted;
    let visual: Vec<f64> = if model.audio_only() {
        model.weights().require(VISUAL_CONST)?.data().to_vec()
    } else {
        let v = t / REPEAT;
        while state.pending.front().is_some_and(|(idx, _)| *idx < v) {
            state.pending.pop_front();
        }
        match state.pending.front() {
            Some((idx, e)) if *idx == v => e.clone(),
            _ => return Err(Error::Protocol(format!("no embedding for video frame {v}"))),
        }
    };
    let mut fused = features;
    fused.extend_from_slice(&visual);
    let w = model.weights();
    let params = LstmParams {
        wx: w.require("lstm.wx")?,
        wh: w.require("lstm.wh")?,
        b: w.require("lstm.b")?,
    };
    let h = lstm_step(&fused, &mut state.lstm, params)?;
    let h = dense_row(model, "fc1", &h, true)?;
    let h = dense_row(model, "fc2", &h, true)?;
    let mut out = dense_row(model, "out", &h, false)?;
    out.iter_mut().for_each(|v| *v = crate::tensor::sigmoid(*v));
    state.emitted += 1;
    Ok(out)
}

/// Consumes one magnitude frame. `embedding` must be supplied exactly on
/// frames `0, 3, 6, ...` for an audio-visual model and never otherwise.
/// Returns the mask row for frame `frames_in - 1 - lookahead`, if any.
pub fn predict_step(
    model: &AvModel,
    frame_mag: &[f64],
    embedding: Option<&[f64]>,
    state: &mut StreamState,
) -> Result<Option<Vec<f64>>> {
    if state.finished {
        return Err(Error::Usage("stream already flushed".into()));
    }
    let bins = model.config().bins;
    if frame_mag.len() != bins {
        return Err(shape_err!("frame has {} bins, model expects {bins}", frame_mag.len()));
    }
    if frame_mag.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite magnitude frame".into()));
    }
    let j = state.next_frame;
    if !model.audio_only() {
        match (embedding, j.is_multiple_of(REPEAT)) {
            (Some(e), true) => {
                if e.len() != EMBEDDING_DIM {
                    return Err(shape_err!("embedding has width {}, expected 512", e.len()));
                }
                state.pending.push_back((j / REPEAT, e.to_vec()));
            }
            (None, true) => {
                return Err(Error::Protocol(format!("frame {j} starts a video frame but no embedding was given")))
            }
            (Some(_), false) => {
                return Err(Error::Protocol(format!("embedding given at frame {j}, expected only every 3rd frame")))
            }
            (None, false) => {}
        }
    }
    state.next_frame += 1;
    let row: Vec<f64> = frame_mag.iter().map(|v| v.ln_1p()).collect();
    match push_conv(model, state, row)? {
        Some(features) => Ok(Some(finish_row(model, state, features)?)),
        None => Ok(None),
    }
}

/// Drains the lookahead by feeding silent frames; returns the final rows.
pub fn flush(model: &AvModel, state: &mut StreamState) -> Result<Vec<Vec<f64>>> {
    if state.finished {
        return Err(Error::Usage("stream already flushed".into()));
    }
    let bins = model.config().bins;
    let mut out = Vec::new();
    for _ in 0..model.config().lookahead() {
        if let Some(f) = push_conv(model, state, vec![0.0; bins])? {
            out.push(finish_row(model, state, f)?);
        }
    }
    state.finished = true;
    Ok(out)
}

/// Drives `predict_step` over a whole spectrogram and flushes; equals the
/// batch output row for row.
pub fn predict_streaming(
    model: &AvModel,
    mag: &Tensor,
    emb: Option<&super::LipEmbeddingSequence>,
) -> Result<(Tensor, StreamState)> {
    let t = mag.dims()[0];
    let mut state = StreamState::new(model);
    let mut rows = Vec::with_capacity(t);
    for j in 0..t {
        let e = if state.needs_embedding(model) {
            let emb = emb.ok_or_else(|| Error::Usage("audio-visual model needs lip embeddings".into()))?;
            if j / REPEAT >= emb.frames() {
                return Err(Error::Alignment(format!("no embedding row for audio frame {j}")));
            }
            Some(emb.row(j / REPEAT))
        } else {
            None
        };
        if let Some(r) = predict_step(model, mag.row(j), e, &mut state)? {
            rows.push(r);
        }
    }
    rows.extend(flush(model, &mut state)?);
    Ok((Tensor::from_rows(&rows)?, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LipEmbeddingSequence, ModelConfig};
    use crate::tensor::init;
    use rand::Rng;

    fn inputs(t: usize, seed: u64) -> (Tensor, LipEmbeddingSequence) {
        let mut rng = init::seeded(seed);
        let mag = Tensor::from_fn(&[t, 622], |_| rng.random_range(0.0..2.0));
        let emb = Tensor::from_fn(&[t.div_ceil(3), 512], |_| rng.random_range(-1.0..1.0));
        (mag, LipEmbeddingSequence::new(emb).unwrap())
    }

    #[test]
    fn first_rows_wait_for_lookahead() {
        let m = AvModel::new(ModelConfig::toy(), 1).unwrap();
        let (mag, emb) = inputs(6, 2);
        let mut s = StreamState::new(&m);
        assert_eq!(s.context_len(), 4);
        assert!(predict_step(&m, mag.row(0), Some(emb.row(0)), &mut s).unwrap().is_none());
        assert!(predict_step(&m, mag.row(1), None, &mut s).unwrap().is_none());
        assert!(predict_step(&m, mag.row(2), None, &mut s).unwrap().is_some());
        assert_eq!(s.frames_out(), 1);
    }

    #[test]
    fn protocol_violations() {
        let m = AvModel::new(ModelConfig::toy(), 1).unwrap();
        let (mag, emb) = inputs(6, 2);
        let mut s = StreamState::new(&m);
        let err = predict_step(&m, mag.row(0), None, &mut s).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
        predict_step(&m, mag.row(0), Some(emb.row(0)), &mut s).unwrap();
        let err = predict_step(&m, mag.row(1), Some(emb.row(0)), &mut s).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn matches_batch_for_short_sequences() {
        for audio_only in [false, true] {
            let m = AvModel::new(ModelConfig::toy().with_audio_only(audio_only), 7).unwrap();
            for t in [3, 6, 9, 30] {
                let (mag, emb) = inputs(t, t as u64);
                let batch = m.predict_masks(&mag, Some(&emb)).unwrap();
                let (stream, state) = predict_streaming(&m, &mag, Some(&emb)).unwrap();
                assert_eq!(state.frames_out(), t);
                assert!(stream.max_abs_diff(batch.values()) < 1e-12, "t={t}");
            }
        }
    }
}
