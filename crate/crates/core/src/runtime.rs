//! Hop-synchronous streaming enhancement and its latency profiler.
//!
//! Samples arrive in arbitrary chunks. Every completed hop makes one more
//! analysis frame available; frames go through the streaming mask network
//! once their lip embedding is present, and masked frames are overlap-added.
//! Output lags input by a fixed `algorithmic_delay()` samples.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use num_complex::Complex64;

use crate::dsp::{extract_frame, stft, AnalysisConfig, AudioBuffer};
use crate::error::{shape_err, Error, Result};
use crate::mask::{MaskConfig, MaskKind, Resynthesis, SpectralMask};
use crate::mixer::{synth_item, SynthConfig};
use crate::model::{flush, predict_step, AvModel, LipEmbeddingSequence, StreamState, EMBEDDING_DIM, REPEAT};

#[derive(Clone, Debug)]
pub struct StreamConfig {
    pub analysis: AnalysisConfig,
    pub mask: MaskConfig,
    /// Reuse the newest embedding instead of stalling when video lags.
    pub freewheel: bool,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            analysis: AnalysisConfig::default(),
            mask: MaskConfig {
                output_kind: MaskKind::Soft,
                ..MaskConfig::default()
            },
            freewheel: false,
        }
    }
}

/// What a push achieved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PushStatus {
    /// Frames that went through the network during this call.
    pub hops_processed: usize,
    /// Audio is waiting on an embedding that has not arrived.
    pub stalled: bool,
}

/// Input samples with absolute indexing; old samples are discarded.
#[derive(Clone, Debug, Default)]
struct SampleRing {
    data: VecDeque<f64>,
    base: usize,
}

impl SampleRing {
    fn end(&self) -> usize {
        self.base + self.data.len()
    }

    fn get(&self, i: usize) -> f64 {
        self.data[i - self.base]
    }

    fn discard_before(&mut self, i: usize) {
        while self.base < i && !self.data.is_empty() {
            self.data.pop_front();
            self.base += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct HopTiming {
    stft: Duration,
    model: Duration,
    istft: Duration,
}

/// One enhancement stream bound to a model.
pub struct EnhanceStream<'m> {
    model: &'m AvModel,
    cfg: StreamConfig,
    input: SampleRing,
    state: StreamState,
    analyzed: usize,
    /// Analysed spectra not yet fed to the network.
    unfed: VecDeque<Vec<Complex64>>,
    /// Fed spectra whose mask row has not come out yet.
    awaiting_mask: VecDeque<Vec<Complex64>>,
    embeddings: VecDeque<(usize, Vec<f64>)>,
    next_embedding: usize,
    last_embedding: Option<Vec<f64>>,
    synthesized: usize,
    acc: VecDeque<f64>,
    wss: VecDeque<f64>,
    acc_base: usize,
    emitted: usize,
    clipped: usize,
    stalled: bool,
    closed: bool,
    total_len: Option<usize>,
    timing: Option<Vec<HopTiming>>,
    current: HopTiming,
}

impl<'m> EnhanceStream<'m> {
    pub fn new(model: &'m AvModel, cfg: StreamConfig) -> Result<Self> {
        cfg.mask.validate()?;
        if model.config().bins != cfg.analysis.bins() {
            return Err(Error::Config(format!(
                "model expects {} bins, analysis gives {}",
                model.config().bins,
                cfg.analysis.bins()
            )));
        }
        Ok(EnhanceStream {
            model,
            state: StreamState::new(model),
            cfg,
            input: SampleRing::default(),
            analyzed: 0,
            unfed: VecDeque::new(),
            awaiting_mask: VecDeque::new(),
            embeddings: VecDeque::new(),
            next_embedding: 0,
            last_embedding: None,
            synthesized: 0,
            acc: VecDeque::new(),
            wss: VecDeque::new(),
            acc_base: 0,
            emitted: 0,
            clipped: 0,
            stalled: false,
            closed: false,
            total_len: None,
            timing: None,
            current: HopTiming::default(),
        })
    }

    /// Fixed input-to-output lag in samples: the window minus one hop, plus
    /// the network's lookahead in hops.
    pub fn algorithmic_delay(&self) -> usize {
        algorithmic_delay(&self.cfg.analysis, self.model)
    }

    pub fn hops_enhanced(&self) -> usize {
        self.synthesized
    }

    pub fn samples_emitted(&self) -> usize {
        self.emitted
    }

    pub fn clipped(&self) -> usize {
        self.clipped
    }

    pub fn is_stalled(&self) -> bool {
        self.stalled
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn check_open(&self) -> Result<()> {
        if self.closed {
            return Err(Error::Usage("stream is closed".into()));
        }
        Ok(())
    }

    fn enable_timing(&mut self) {
        self.timing = Some(Vec::new());
    }

    /// Appends the embedding for the next video frame.
    pub fn push_embedding(&mut self, row: &[f64]) -> Result<PushStatus> {
        self.push_embedding_at(self.next_embedding, row)
    }

    /// Appends the embedding for video frame `index`, which must be the next
    /// one expected.
    pub fn push_embedding_at(&mut self, index: usize, row: &[f64]) -> Result<PushStatus> {
        self.check_open()?;
        if self.model.audio_only() {
            return Err(Error::Protocol("audio-only stream takes no embeddings".into()));
        }
        if index != self.next_embedding {
            return Err(Error::Protocol(format!(
                "embedding {index} pushed out of order, expected {}",
                self.next_embedding
            )));
        }
        if row.len() != EMBEDDING_DIM {
            return Err(shape_err!("embedding has width {}, expected {EMBEDDING_DIM}", row.len()));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite embedding".into()));
        }
        self.embeddings.push_back((index, row.to_vec()));
        self.next_embedding += 1;
        let hops_processed = self.drain_unfed()?;
        Ok(PushStatus {
            hops_processed,
            stalled: self.stalled,
        })
    }

    pub fn push_samples(&mut self, samples: &[f64]) -> Result<PushStatus> {
        self.check_open()?;
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite input sample".into()));
        }
        let mut processed = 0;
        for &s in samples {
            self.input.data.push_back(s);
            // Frame t needs samples up to frame_start(t) + frame_len.
            let need = self.cfg.analysis.frame_start(self.analyzed) + self.cfg.analysis.frame_len as isize;
            if self.input.end() as isize >= need {
                self.analyze_next(None)?;
                processed += self.drain_unfed()?;
            }
        }
        Ok(PushStatus {
            hops_processed: processed,
            stalled: self.stalled,
        })
    }

    fn analyze_next(&mut self, total_len: Option<usize>) -> Result<()> {
        let a = &self.cfg.analysis;
        let t0 = Instant::now();
        let start = a.frame_start(self.analyzed);
        let mut frame = vec![0.0; a.frame_len];
        match total_len {
            None => {
                for (k, o) in frame.iter_mut().enumerate() {
                    let i = start + k as isize;
                    *o = if i < 0 { 0.0 } else { self.input.get(i as usize) };
                }
            }
            Some(len) => {
                let lo = self.input.base;
                let window: Vec<f64> = (0..len).map(|i| if i >= lo { self.input.get(i) } else { 0.0 }).collect();
                extract_frame(&window, a, self.analyzed, &mut frame);
            }
        }
        let mut spec = vec![Complex64::new(0.0, 0.0); a.bins()];
        a.analyze_frame(&frame, &mut spec);
        self.unfed.push_back(spec);
        self.analyzed += 1;
        let keep = a.frame_start(self.analyzed) - a.frame_len as isize;
        self.input.discard_before(keep.max(0) as usize);
        self.current.stft += t0.elapsed();
        Ok(())
    }

    fn embedding_for(&mut self, j: usize) -> Result<Option<Option<Vec<f64>>>> {
        if self.model.audio_only() || !j.is_multiple_of(REPEAT) {
            return Ok(Some(None));
        }
        let v = j / REPEAT;
        while self.embeddings.front().is_some_and(|(i, _)| *i < v) {
            self.embeddings.pop_front();
        }
        if let Some((i, e)) = self.embeddings.front() {
            if *i == v {
                let e = e.clone();
                self.last_embedding = Some(e.clone());
                return Ok(Some(Some(e)));
            }
        }
        if self.cfg.freewheel {
            let e = self.last_embedding.clone().unwrap_or_else(|| vec![0.0; EMBEDDING_DIM]);
            return Ok(Some(Some(e)));
        }
        Ok(None)
    }

    /// Feeds analysed frames to the network while embeddings allow.
    fn drain_unfed(&mut self) -> Result<usize> {
        let mut n = 0;
        while !self.unfed.is_empty() {
            let j = self.state.frames_in();
            let Some(emb) = self.embedding_for(j)? else {
                self.stalled = true;
                return Ok(n);
            };
            self.stalled = false;
            let spec = self.unfed.pop_front().expect("non-empty");
            let mag: Vec<f64> = spec.iter().map(|c| c.norm()).collect();
            let t0 = Instant::now();
            let row = predict_step(self.model, &mag, emb.as_deref(), &mut self.state)?;
            self.current.model += t0.elapsed();
            self.awaiting_mask.push_back(spec);
            if let Some(row) = row {
                self.synthesize(&row)?;
            }
            n += 1;
            self.finish_hop_timing();
        }
        Ok(n)
    }

    fn finish_hop_timing(&mut self) {
        if let Some(t) = self.timing.as_mut() {
            t.push(self.current);
        }
        self.current = HopTiming::default();
    }

    fn synthesize(&mut self, mask_row: &[f64]) -> Result<()> {
        let t0 = Instant::now();
        let a = &self.cfg.analysis;
        let spec = self.awaiting_mask.pop_front().expect("a fed frame per mask row");
        let th = self.cfg.mask.binarize_threshold;
        let binary = self.cfg.mask.output_kind == MaskKind::Binary;
        let masked: Vec<Complex64> = spec
            .iter()
            .zip(mask_row)
            .map(|(x, &m)| {
                let m = if binary {
                    if m >= th {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    m
                };
                x * m
            })
            .collect();
        let mut buf = vec![0.0; a.frame_len];
        a.synthesize_frame(&masked, &mut buf);
        let start = a.frame_start(self.synthesized);
        let w = a.window();
        for (k, v) in buf.iter().enumerate() {
            let n = start + k as isize;
            if n < 0 {
                continue;
            }
            let idx = n as usize - self.acc_base;
            while self.acc.len() <= idx {
                self.acc.push_back(0.0);
                self.wss.push_back(0.0);
            }
            self.acc[idx] += v;
            self.wss[idx] += w[k] * w[k];
        }
        self.synthesized += 1;
        self.current.istft += t0.elapsed();
        Ok(())
    }

    /// Samples with every covering frame already added.
    fn final_until(&self) -> usize {
        match self.total_len {
            Some(len) => len,
            None => {
                self.cfg.analysis.frame_start(self.synthesized).max(0) as usize
            }
        }
    }

    fn take_final(&mut self) -> Result<Vec<f64>> {
        let until = self.final_until();
        let mut out = Vec::new();
        while self.emitted < until {
            let (a, w) = match (self.acc.pop_front(), self.wss.pop_front()) {
                (Some(a), Some(w)) => (a, w),
                _ => (0.0, 0.0),
            };
            self.acc_base += 1;
            if w <= 1e-12 {
                return Err(Error::Numeric("sample position with zero window coverage".into()));
            }
            let v = a / w;
            if v.abs() > 1.0 {
                self.clipped += 1;
            }
            out.push(v.clamp(-1.0, 1.0));
            self.emitted += 1;
        }
        Ok(out)
    }

    /// Enhanced samples that are final, in order.
    pub fn pull_enhanced(&mut self) -> Result<Vec<f64>> {
        self.check_open()?;
        self.take_final()
    }

    /// Ends the input: analyses the reflected tail, drains the network's
    /// lookahead and returns every remaining output sample.
    pub fn close(&mut self) -> Result<Vec<f64>> {
        self.check_open()?;
        let len = self.input.end();
        if len == 0 {
            return Err(Error::Degenerate("stream closed without any samples".into()));
        }
        let frames = self.cfg.analysis.frame_count(len);
        while self.analyzed < frames {
            self.analyze_next(Some(len))?;
        }
        self.drain_unfed()?;
        if !self.unfed.is_empty() {
            return Err(Error::Alignment(format!(
                "stream closed with {} frames waiting on embedding {}",
                self.unfed.len(),
                self.state.frames_in() / REPEAT
            )));
        }
        let t0 = Instant::now();
        let rows = flush(self.model, &mut self.state)?;
        self.current.model += t0.elapsed();
        for r in rows {
            self.synthesize(&r)?;
        }
        self.total_len = Some(len);
        let out = self.take_final()?;
        self.closed = true;
        Ok(out)
    }
}

pub fn algorithmic_delay(analysis: &AnalysisConfig, model: &AvModel) -> usize {
    analysis.frame_len - analysis.hop + model.config().lookahead() * analysis.hop
}

/// Whole-utterance enhancement: soft mask from the network, finalized per
/// `mask`, applied to the noisy spectrogram.
pub fn enhance_offline(
    model: &AvModel,
    noisy: &AudioBuffer,
    emb: Option<&LipEmbeddingSequence>,
    analysis: &AnalysisConfig,
    mask: &MaskConfig,
) -> Result<(Resynthesis, SpectralMask)> {
    mask.validate()?;
    let spec = stft(noisy, analysis)?;
    let soft = model.predict_masks(&spec.magnitude(), emb)?;
    let m = mask.finalize(&soft);
    let out = crate::mask::resynthesize_spec(&spec, &m, analysis)?;
    Ok((out, m))
}

/// Runs a whole utterance through a stream in `chunk`-sample pushes,
/// supplying each embedding just before the audio that needs it.
pub fn enhance_streaming(
    model: &AvModel,
    noisy: &[f64],
    emb: Option<&LipEmbeddingSequence>,
    cfg: StreamConfig,
    chunk: usize,
) -> Result<Vec<f64>> {
    if chunk == 0 {
        return Err(Error::Usage("chunk size must be positive".into()));
    }
    let mut s = EnhanceStream::new(model, cfg)?;
    let mut out = Vec::with_capacity(noisy.len());
    let mut fed_emb = 0;
    let feed_all = |s: &mut EnhanceStream, fed: &mut usize| -> Result<()> {
        if let Some(e) = emb {
            while *fed < e.frames() {
                s.push_embedding(e.row(*fed))?;
                *fed += 1;
            }
        }
        Ok(())
    };
    if !model.audio_only() {
        feed_all(&mut s, &mut fed_emb)?;
    }
    for c in noisy.chunks(chunk) {
        s.push_samples(c)?;
        out.extend(s.pull_enhanced()?);
    }
    out.extend(s.close()?);
    Ok(out)
}

/// Per-stage wall-clock summary in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageStats {
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl StageStats {
    pub fn constant(ms: f64) -> Self {
        StageStats {
            median_ms: ms,
            p95_ms: ms,
            max_ms: ms,
        }
    }

    fn from_ms(values: &mut [f64]) -> Self {
        values.sort_by(|a, b| a.total_cmp(b));
        let n = values.len();
        if n == 0 {
            return Self::constant(0.0);
        }
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            0.5 * (values[n / 2 - 1] + values[n / 2])
        };
        let p95 = values[((0.95 * (n - 1) as f64).ceil() as usize).min(n - 1)];
        StageStats {
            median_ms: median,
            p95_ms: p95,
            max_ms: values[n - 1],
        }
    }
}

/// Published per-stage figures: shift, STFT, ISTFT, model, total (ms).
pub const PUBLISHED_MS: [(&str, f64); 5] = [
    ("window shift", 12.0),
    ("stft", 0.5),
    ("istft", 0.5),
    ("model", 7.0),
    ("total", 20.0),
];

#[derive(Clone, Debug, PartialEq)]
pub struct LatencyReport {
    pub hop_ms: f64,
    pub stft: StageStats,
    pub model: StageStats,
    pub istft: StageStats,
    /// STFT + model + ISTFT per hop.
    pub processing: StageStats,
    pub hops_timed: usize,
    pub algorithmic_delay_samples: usize,
    pub sample_rate: u32,
}

impl LatencyReport {
    /// Hop plus the median per-hop processing time.
    pub fn hop_bound_latency_ms(&self) -> f64 {
        self.hop_ms + self.processing.median_ms
    }

    /// Window-bound delay converted to milliseconds.
    pub fn algorithmic_latency_ms(&self) -> f64 {
        1000.0 * self.algorithmic_delay_samples as f64 / self.sample_rate as f64
    }

    pub fn real_time_factor(&self) -> f64 {
        self.processing.median_ms / self.hop_ms
    }

    fn rows(&self) -> Vec<(&'static str, StageStats, f64)> {
        vec![
            ("window shift", StageStats::constant(self.hop_ms), PUBLISHED_MS[0].1),
            ("stft", self.stft, PUBLISHED_MS[1].1),
            ("istft", self.istft, PUBLISHED_MS[2].1),
            ("model", self.model, PUBLISHED_MS[3].1),
            ("total", StageStats::constant(self.hop_bound_latency_ms()), PUBLISHED_MS[4].1),
        ]
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<14}{:>12}{:>12}{:>12}{:>12}\n",
            "stage", "median_ms", "p95_ms", "max_ms", "published_ms"
        );
        for (name, st, published) in self.rows() {
            s.push_str(&format!(
                "{:<14}{:>12.4}{:>12.4}{:>12.4}{:>12}\n",
                name, st.median_ms, st.p95_ms, st.max_ms, published
            ));
        }
        s.push_str(&format!(
            "algorithmic delay: {} samples ({:.4} ms)\nreal-time factor: {:.4}\nhops timed: {}\n",
            self.algorithmic_delay_samples,
            self.algorithmic_latency_ms(),
            self.real_time_factor(),
            self.hops_timed
        ));
        s
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for (name, st, published) in self.rows() {
            let v = serde_json::json!({
                "stage": name,
                "median_ms": st.median_ms,
                "p95_ms": st.p95_ms,
                "max_ms": st.max_ms,
                "published_ms": published,
            });
            s.push_str(&v.to_string());
            s.push('\n');
        }
        let v = serde_json::json!({
            "algorithmic_delay_samples": self.algorithmic_delay_samples,
            "algorithmic_latency_ms": self.algorithmic_latency_ms(),
            "hop_bound_latency_ms": self.hop_bound_latency_ms(),
            "real_time_factor": self.real_time_factor(),
            "hops_timed": self.hops_timed,
        });
        s.push_str(&v.to_string());
        s.push('\n');
        s
    }
}

pub const WARMUP_HOPS: usize = 50;

/// Times every stage of a stream over `seconds` of synthetic input, one
/// hop per push, excluding the first `WARMUP_HOPS` hops.
pub fn profile(model: &AvModel, cfg: StreamConfig, seconds: f64, seed: u64) -> Result<LatencyReport> {
    if !(seconds >= 5.0) {
        return Err(Error::Usage(format!("profile needs at least 5 s of input, got {seconds}")));
    }
    let synth = SynthConfig {
        seconds: seconds.ceil() as usize,
        ..SynthConfig::default()
    };
    let item = synth_item(seed, 0, &synth)?;
    let hop = cfg.analysis.hop;
    let sr = cfg.analysis.sample_rate;
    let hop_ms = cfg.analysis.hop_ms();
    let mut noisy = item.clean.samples.clone();
    for (n, v) in noisy.iter_mut().zip(&item.noise.samples) {
        *n += v;
    }
    let mut s = EnhanceStream::new(model, cfg)?;
    s.enable_timing();
    let mut fed = 0;
    for chunk in noisy.chunks(hop) {
        // Keep video one frame ahead of the audio it serves.
        if !model.audio_only() {
            let needed = (s.analyzed / REPEAT + 1).min(item.embeddings.frames());
            while fed < needed {
                s.push_embedding(item.embeddings.row(fed))?;
                fed += 1;
            }
        }
        s.push_samples(chunk)?;
        s.pull_enhanced()?;
    }
    let delay = s.algorithmic_delay();
    let timings = s.timing.take().unwrap_or_default();
    let timed: Vec<HopTiming> = timings.into_iter().skip(WARMUP_HOPS).collect();
    let ms = |f: fn(&HopTiming) -> Duration| -> Vec<f64> { timed.iter().map(|t| f(t).as_secs_f64() * 1e3).collect() };
    Ok(LatencyReport {
        hop_ms,
        stft: StageStats::from_ms(&mut ms(|t| t.stft)),
        model: StageStats::from_ms(&mut ms(|t| t.model)),
        istft: StageStats::from_ms(&mut ms(|t| t.istft)),
        processing: StageStats::from_ms(&mut ms(|t| t.stft + t.model + t.istft)),
        hops_timed: timed.len(),
        algorithmic_delay_samples: delay,
        sample_rate: sr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::tensor::{init, Tensor};
    use rand::Rng;

    fn inputs(len: usize, seed: u64) -> (Vec<f64>, LipEmbeddingSequence) {
        let mut rng = init::seeded(seed);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-0.3..0.3)).collect();
        let frames = AnalysisConfig::default().frame_count(len).div_ceil(3);
        let e = Tensor::from_fn(&[frames, 512], |_| rng.random_range(-1.0..1.0));
        (x, LipEmbeddingSequence::new(e).unwrap())
    }

    #[test]
    fn delay_is_window_minus_hop_plus_lookahead() {
        let m = AvModel::new(ModelConfig::toy(), 0).unwrap();
        let s = EnhanceStream::new(&m, StreamConfig::default()).unwrap();
        assert_eq!(s.algorithmic_delay(), 1455);
    }

    #[test]
    fn below_one_hop_gives_nothing() {
        let m = AvModel::new(ModelConfig::toy().with_audio_only(true), 0).unwrap();
        let mut s = EnhanceStream::new(&m, StreamConfig::default()).unwrap();
        let st = s.push_samples(&[0.1; 212]).unwrap();
        assert_eq!(st.hops_processed, 0);
        assert!(s.pull_enhanced().unwrap().is_empty());
    }

    #[test]
    fn output_lags_by_the_delay() {
        let m = AvModel::new(ModelConfig::toy().with_audio_only(true), 0).unwrap();
        let mut s = EnhanceStream::new(&m, StreamConfig::default()).unwrap();
        let (x, _) = inputs(213 * 40, 1);
        s.push_samples(&x).unwrap();
        assert_eq!(s.pull_enhanced().unwrap().len(), x.len() - 1455);
    }

    #[test]
    fn matches_offline_and_chunking() {
        let m = AvModel::new(ModelConfig::toy(), 3).unwrap();
        let (x, e) = inputs(213 * 30, 2);
        let noisy = AudioBuffer::new(x.clone(), 16000);
        let cfg = StreamConfig::default();
        let (off, _) = enhance_offline(&m, &noisy, Some(&e), &cfg.analysis, &cfg.mask).unwrap();
        let a = enhance_streaming(&m, &x, Some(&e), cfg.clone(), 1).unwrap();
        let b = enhance_streaming(&m, &x, Some(&e), cfg.clone(), 777).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), x.len());
        let diff = a.iter().zip(&off.audio.samples).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn starvation_stalls_then_recovers() {
        let m = AvModel::new(ModelConfig::toy(), 3).unwrap();
        let (x, e) = inputs(213 * 12, 4);
        let mut s = EnhanceStream::new(&m, StreamConfig::default()).unwrap();
        s.push_embedding(e.row(0)).unwrap();
        let st = s.push_samples(&x[..213 * 8]).unwrap();
        assert!(st.stalled);
        assert_eq!(s.state.frames_in(), 3);
        let st = s.push_embedding(e.row(1)).unwrap();
        assert!(st.stalled);
        assert_eq!(st.hops_processed, 3);
        assert!(matches!(s.push_embedding_at(5, e.row(2)), Err(Error::Protocol(_))));
        let st = s.push_embedding(e.row(2)).unwrap();
        assert!(!st.stalled);
    }

    #[test]
    fn freewheel_never_stalls() {
        let m = AvModel::new(ModelConfig::toy(), 3).unwrap();
        let (x, e) = inputs(213 * 12, 4);
        let cfg = StreamConfig {
            freewheel: true,
            ..StreamConfig::default()
        };
        let mut s = EnhanceStream::new(&m, cfg).unwrap();
        s.push_embedding(e.row(0)).unwrap();
        let st = s.push_samples(&x).unwrap();
        assert!(!st.stalled);
        assert_eq!(st.hops_processed, 11);
    }

    #[test]
    fn zero_input_gives_zero_output_and_closed_errors() {
        let m = AvModel::new(ModelConfig::toy().with_audio_only(true), 0).unwrap();
        let out = enhance_streaming(&m, &vec![0.0; 4000], None, StreamConfig::default(), 100).unwrap();
        assert_eq!(out.len(), 4000);
        assert!(out.iter().all(|v| *v == 0.0));
        let mut s = EnhanceStream::new(&m, StreamConfig::default()).unwrap();
        s.push_samples(&[0.0; 500]).unwrap();
        s.close().unwrap();
        assert!(matches!(s.pull_enhanced(), Err(Error::Usage(_))));
        assert!(matches!(s.push_samples(&[0.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn stage_stats_order() {
        let s = StageStats::from_ms(&mut [5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!((s.median_ms, s.p95_ms, s.max_ms), (3.0, 5.0, 5.0));
    }
}
