//! On-disk formats: PCM16 WAV, LIPE lip-embedding files, AVSE tensor
//! containers and `key = value` config files.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::dsp::{AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::mask::{MaskKind, SpectralMask};
use crate::mixer::{NoiseKind, SynthItem};
use crate::model::{LipEmbeddingSequence, EMBEDDING_DIM};
use crate::tensor::{NamedTensorStore, Tensor};

pub const LIPE_MAGIC: &[u8; 4] = b"LIPE";
pub const LIPE_VERSION: u32 = 1;
const LIPE_HEADER: usize = 16;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn need(bytes: &[u8], at: usize, n: usize, field: &str) -> Result<()> {
    if bytes.len() < at + n {
        return Err(Error::format(
            field,
            at,
            format!("truncated: need {} bytes, file has {}", at + n, bytes.len()),
        ));
    }
    Ok(())
}

/// PCM16 samples map to `k / 32768`; values are clamped to `[-1, 1]` and
/// saturated at the int16 range on write, so reads round-trip exactly.
pub fn encode_wav(audio: &AudioBuffer) -> Vec<u8> {
    let data_len = audio.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &audio.samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Mono PCM16 at any sample rate.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    need(bytes, 0, 12, "RIFF header")?;
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::format("RIFF magic", 0, "not a RIFF file"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::format("WAVE magic", 8, "RIFF form is not WAVE"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    loop {
        need(bytes, pos, 8, "chunk header")?;
        let id = &bytes[pos..pos + 4];
        let len = le_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        if id == b"fmt " {
            need(bytes, body, 16, "fmt chunk")?;
            fmt = Some((
                le_u16(bytes, body),
                le_u16(bytes, body + 2),
                le_u32(bytes, body + 4),
                le_u16(bytes, body + 14),
            ));
        } else if id == b"data" {
            let (format, channels, rate, bits) =
                fmt.ok_or_else(|| Error::format("fmt chunk", pos, "data chunk before fmt chunk"))?;
            if format != 1 {
                return Err(Error::format("audio format", 20, format!("only PCM (1) is supported, found {format}")));
            }
            if channels != 1 {
                return Err(Error::format("channels", 22, format!("expected mono, found {channels} channels")));
            }
            if bits != 16 {
                return Err(Error::format("bits per sample", 34, format!("expected 16, found {bits}")));
            }
            if !len.is_multiple_of(2) {
                return Err(Error::format("data length", pos + 4, format!("odd PCM16 byte count {len}")));
            }
            need(bytes, body, len, "data chunk")?;
            let samples = bytes[body..body + len]
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                .collect();
            return Ok(AudioBuffer::new(samples, rate));
        }
        pos = body + len + (len & 1);
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    decode_wav(&read_file(path.as_ref())?)
}

/// As `read_wav`, additionally requiring the pipeline's 16 kHz rate.
pub fn read_pipeline_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let a = read_wav(path.as_ref())?;
    if a.sample_rate != SAMPLE_RATE {
        return Err(Error::format(
            "sample rate",
            24,
            format!("{}: expected {SAMPLE_RATE} Hz, found {}", path.as_ref().display(), a.sample_rate),
        ));
    }
    Ok(a)
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    write_file(path.as_ref(), &encode_wav(audio))
}

pub fn encode_embeddings(emb: &LipEmbeddingSequence) -> Vec<u8> {
    let t = emb.tensor();
    let mut out = Vec::with_capacity(LIPE_HEADER + 4 * t.numel());
    out.extend_from_slice(LIPE_MAGIC);
    out.extend_from_slice(&LIPE_VERSION.to_le_bytes());
    out.extend_from_slice(&(emb.frames() as u32).to_le_bytes());
    out.extend_from_slice(&(EMBEDDING_DIM as u32).to_le_bytes());
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<LipEmbeddingSequence> {
    need(bytes, 0, LIPE_HEADER, "header")?;
    if &bytes[0..4] != LIPE_MAGIC {
        return Err(Error::format("magic", 0, format!("expected \"LIPE\", found {:?}", &bytes[0..4])));
    }
    let version = le_u32(bytes, 4);
    if version != LIPE_VERSION {
        return Err(Error::format("version", 4, format!("unsupported version {version}")));
    }
    let frames = le_u32(bytes, 8) as usize;
    let dim = le_u32(bytes, 12) as usize;
    if dim != EMBEDDING_DIM {
        return Err(Error::format("dim", 12, format!("dim must be 512, found {dim}")));
    }
    let expected = LIPE_HEADER + 4 * frames * dim;
    if bytes.len() != expected {
        return Err(Error::format(
            "data",
            LIPE_HEADER,
            format!("expected {expected} bytes for {frames} frames, found {}", bytes.len()),
        ));
    }
    let data: Vec<f64> = bytes[LIPE_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    LipEmbeddingSequence::new(Tensor::new(&[frames, dim], data)?)
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<LipEmbeddingSequence> {
    decode_embeddings(&read_file(path.as_ref())?)
}

pub fn write_embeddings(path: impl AsRef<Path>, emb: &LipEmbeddingSequence) -> Result<()> {
    write_file(path.as_ref(), &encode_embeddings(emb))
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<NamedTensorStore> {
    NamedTensorStore::from_bytes(&read_file(path.as_ref())?)
}

pub fn write_weights(path: impl AsRef<Path>, store: &NamedTensorStore) -> Result<()> {
    write_file(path.as_ref(), &store.to_bytes()?)
}

/// Name of the mask tensor inside an AVSE container.
pub const MASK_TENSOR: &str = "mask";

pub fn write_mask(path: impl AsRef<Path>, mask: &SpectralMask) -> Result<()> {
    let mut s = NamedTensorStore::new();
    s.insert(MASK_TENSOR, mask.values().clone())?;
    write_weights(path, &s)
}

pub fn read_mask(path: impl AsRef<Path>, kind: MaskKind) -> Result<SpectralMask> {
    let s = read_weights(path)?;
    let t = s.require(MASK_TENSOR)?.clone();
    if t.rank() != 2 {
        return Err(Error::format(MASK_TENSOR, 0, format!("mask must be [T, bins], got {:?}", t.dims())));
    }
    SpectralMask::new(t, kind)
}

pub const CORPUS_MANIFEST: &str = "manifest.tsv";

/// Writes `<id>_clean.wav`, `<id>_noise.wav`, `<id>.lipe` per item and a
/// `manifest.tsv` of `id, snr_db, noise_kind`.
pub fn write_corpus(dir: impl AsRef<Path>, items: &[SynthItem]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("id\tsnr_db\tnoise_kind\n");
    for it in items {
        write_wav(dir.join(format!("{}_clean.wav", it.id)), &it.clean)?;
        write_wav(dir.join(format!("{}_noise.wav", it.id)), &it.noise)?;
        write_embeddings(dir.join(format!("{}.lipe", it.id)), &it.embeddings)?;
        manifest.push_str(&format!("{}\t{}\t{}\n", it.id, it.snr_db, it.noise_kind.name()));
    }
    write_file(&dir.join(CORPUS_MANIFEST), manifest.as_bytes())
}

pub fn read_corpus(dir: impl AsRef<Path>) -> Result<Vec<SynthItem>> {
    let dir = dir.as_ref();
    let text = String::from_utf8(read_file(&dir.join(CORPUS_MANIFEST))?)
        .map_err(|_| Error::format(CORPUS_MANIFEST, 0, "manifest is not UTF-8"))?;
    let mut items = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |m: &str| Error::Config(format!("{CORPUS_MANIFEST} line {}: {m}", n + 1));
        if cols.len() < 3 {
            return Err(bad("expected id, snr_db, noise_kind"));
        }
        let id = cols[0].to_string();
        let snr_db: f64 = cols[1].parse().map_err(|_| bad("snr_db is not a number"))?;
        let noise_kind = match cols[2] {
            "white" => NoiseKind::White,
            "pink" => NoiseKind::Pink,
            other => return Err(bad(&format!("unknown noise kind {other:?}"))),
        };
        items.push(SynthItem {
            clean: read_pipeline_wav(dir.join(format!("{id}_clean.wav")))?,
            noise: read_pipeline_wav(dir.join(format!("{id}_noise.wav")))?,
            embeddings: read_embeddings(dir.join(format!("{id}.lipe")))?,
            id,
            snr_db,
            noise_kind,
        });
    }
    if items.is_empty() {
        return Err(Error::Usage(format!("{} lists no items", dir.join(CORPUS_MANIFEST).display())));
    }
    Ok(items)
}

/// Ordered `key = value` settings. Blank lines and `#` comments are ignored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    entries: IndexMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = IndexMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = read_file(path.as_ref())?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Config("config file is not UTF-8".into()))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parses `key` if present.
    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("invalid value for '{key}': {v:?}"))),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
