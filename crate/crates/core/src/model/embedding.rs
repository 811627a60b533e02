use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

pub const EMBEDDING_DIM: usize = 512;
pub const VIDEO_FPS: u32 = 25;
/// Audio frames per video frame.
pub const REPEAT: usize = 3;

/// `V x 512` lip embeddings at 25 fps.
#[derive(Clone, Debug, PartialEq)]
pub struct LipEmbeddingSequence {
    data: Tensor,
}

impl LipEmbeddingSequence {
    pub fn new(data: Tensor) -> Result<Self> {
        if data.rank() != 2 || data.dims()[1] != EMBEDDING_DIM {
            return Err(shape_err!("embeddings must be [V, 512], got {:?}", data.dims()));
        }
        if data.dims()[0] == 0 {
            return Err(Error::Degenerate("embedding sequence needs at least one frame".into()));
        }
        data.check_finite("embeddings")?;
        Ok(LipEmbeddingSequence { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Degenerate("embedding sequence needs at least one frame".into()));
        }
        Self::new(Tensor::from_rows(rows)?)
    }

    pub fn frames(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn row(&self, v: usize) -> &[f64] {
        self.data.row(v)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    /// Rows `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames() {
            return Err(shape_err!("rows {start}..{} of {}", start + len, self.frames()));
        }
        let d = self.data.data()[start * EMBEDDING_DIM..(start + len) * EMBEDDING_DIM].to_vec();
        Self::new(Tensor::new(&[len, EMBEDDING_DIM], d)?)
    }

    /// Repeats every row three times to reach the audio frame rate.
    pub fn upsample(&self) -> Tensor {
        let v = self.frames();
        let mut out = Vec::with_capacity(REPEAT * v * EMBEDDING_DIM);
        for t in 0..v {
            for _ in 0..REPEAT {
                out.extend_from_slice(self.row(t));
            }
        }
        Tensor::new(&[REPEAT * v, EMBEDDING_DIM], out).expect("dims match data")
    }
}

/// Free-function form of [`LipEmbeddingSequence::upsample`].
pub fn upsample_visual(emb: &LipEmbeddingSequence) -> Tensor {
    emb.upsample()
}
