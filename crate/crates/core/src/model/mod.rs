//! The audio-visual mask network: a convolutional front end over the log
//! magnitude spectrogram, lip embeddings repeated to the audio frame rate,
//! an LSTM and a time-distributed dense stack ending in a sigmoid mask.

mod config;
mod embedding;
mod network;
mod stream;
mod train;

pub use config::{ModelConfig, VISUAL_CONST};
pub use embedding::{upsample_visual, LipEmbeddingSequence, EMBEDDING_DIM, REPEAT, VIDEO_FPS};
pub use network::{predict_masks, AvModel, Forward};
pub use stream::{flush, predict_step, predict_streaming, StreamState};
pub use train::{
    evaluate_bce, frame_accuracy, lr_schedule, train, EpochRecord, History, PlateauScheduler, TrainConfig,
};
