//! Ordered name -> tensor map and its `AVSE` binary container.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! "AVSE" | version u32 | count u32 |
//!   count x ( name_len u16 | name utf-8 | rank u8 | dims u32 x rank | data f32 x prod(dims) )
//! ```

use indexmap::IndexMap;

use super::Tensor;
use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"AVSE";
pub const STORE_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NamedTensorStore {
    tensors: IndexMap<String, Tensor>,
}

impl NamedTensorStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a new entry; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Usage(format!("duplicate tensor name '{name}'")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    /// Inserts or replaces, keeping the original position on replace.
    pub fn set(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Usage(format!("missing tensor '{name}'")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn zeros_like(&self) -> Self {
        NamedTensorStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.dims())))
                .collect(),
        }
    }

    /// Entries whose name starts with `prefix`, with the prefix stripped.
    pub fn with_prefix(&self, prefix: &str) -> Self {
        NamedTensorStore {
            tensors: self
                .tensors
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    /// Rounds every value through f32, the precision of the container file.
    pub fn quantize_f32(&mut self) {
        for t in self.tensors.values_mut() {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            let nb = name.as_bytes();
            if nb.len() > u16::MAX as usize {
                return Err(Error::Usage(format!("tensor name too long: {} bytes", nb.len())));
            }
            if t.rank() > u8::MAX as usize {
                return Err(Error::Usage(format!("tensor '{name}' rank too large")));
            }
            out.extend_from_slice(&(nb.len() as u16).to_le_bytes());
            out.extend_from_slice(nb);
            out.push(t.rank() as u8);
            for &d in t.dims() {
                let d = u32::try_from(d).map_err(|_| Error::Usage(format!("tensor '{name}' dim too large")))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != STORE_MAGIC {
            return Err(Error::format("magic", 0, format!("expected \"AVSE\", found {magic:?}")));
        }
        let version = r.u32("version")?;
        if version != STORE_VERSION {
            return Err(Error::format("version", 4, format!("unsupported version {version}")));
        }
        let count = r.u32("tensor count")?;
        let mut store = NamedTensorStore::new();
        for idx in 0..count {
            let name_len = r.u16("name length")? as usize;
            let name_at = r.pos;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| Error::format("name", name_at, "name is not valid UTF-8"))?
                .to_string();
            let rank = r.u8("rank")? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                let at = r.pos;
                let d = r.u32("dims")? as usize;
                if d == 0 {
                    return Err(Error::format("dims", at, format!("tensor '{name}' has a zero dimension")));
                }
                dims.push(d);
            }
            let n: usize = dims.iter().product();
            let data_at = r.pos;
            let raw = r.take(n * 4, &format!("data of tensor {idx} '{name}'"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let t = Tensor::new(&dims, data)?;
            if store.contains(&name) {
                return Err(Error::format("name", data_at, format!("duplicate tensor name '{name}'")));
            }
            store.insert(name, t)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                "trailer",
                r.pos,
                format!("{} unexpected trailing bytes", bytes.len() - r.pos),
            ));
        }
        Ok(store)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format(
                field,
                self.pos,
                format!(
                    "truncated: expected {end} bytes, file has {} bytes",
                    self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &str) -> Result<u16> {
        let b = self.take(2, field)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
