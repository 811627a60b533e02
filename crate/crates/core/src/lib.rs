//! Real-time audio-visual speech enhancement.
//!
//! The pipeline: a 622-bin STFT of 16 kHz audio, a mask-prediction network
//! fusing a convolutional audio front end with 25 fps lip embeddings through
//! an LSTM, masked-magnitude resynthesis with the noisy phase, plus the
//! tooling around it (mixture construction, oracle masks, objective metrics,
//! a streaming engine with latency accounting and a CycleGAN-style visual
//! denoiser).

pub mod dsp;
pub mod error;
pub mod gan;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod mixer;
pub mod model;
pub mod runtime;
pub mod tensor;

pub use error::{Error, Result};
