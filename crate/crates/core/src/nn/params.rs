//! Named parameter storage and the binary checkpoint format.
//!
//! Checkpoint layout: an 8-byte little-endian `u64` header length, a UTF-8
//! JSON header `{"version": "gmamba-ckpt-1", "params": [{name, shape,
//! offset}]}`, then every parameter as little-endian `f64`s. `offset` counts
//! `f64` elements from the start of the data section.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: &str = "gmamba-ckpt-1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

struct Entry {
    name: String,
    tensor: Tensor,
    decay: bool,
    frozen: bool,
}

/// Learnable parameters in insertion order. Every tensor carries a gradient
/// buffer that backward passes accumulate into.
#[derive(Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. `decay` marks it for decoupled weight decay.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor, decay: bool) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name `{name}`"
        );
        let id = self.entries.len();
        self.by_name.insert(name.clone(), id);
        self.entries.push(Entry {
            name,
            tensor: value.with_grad(),
            decay,
            frozen: false,
        });
        ParamId(id)
    }

    /// Uniform(-bound, bound) initialization.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        bound: f64,
        decay: bool,
        rng: &mut impl Rng,
    ) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Tensor::from_vec(shape, data).expect("shape"), decay)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        self.entries[id.0].tensor.data()
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.entries[id.0].tensor.data_mut()
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        self.entries[id.0]
            .tensor
            .grad()
            .expect("parameters carry gradients")
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.entries[id.0]
            .tensor
            .grad_mut()
            .expect("parameters carry gradients")
    }

    pub fn value_and_grad(&mut self, id: ParamId) -> (&[f64], &mut [f64]) {
        self.entries[id.0].tensor.data_and_grad_mut()
    }

    pub fn decays(&self, id: ParamId) -> bool {
        self.entries[id.0].decay
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.entries[id.0].frozen
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.entries[id.0].frozen = frozen;
    }

    pub fn zero_grads(&mut self) {
        self.entries.iter_mut().for_each(|e| e.tensor.zero_grad());
    }

    pub fn scale_grads(&mut self, s: f64) {
        for e in &mut self.entries {
            e.tensor
                .grad_mut()
                .unwrap()
                .iter_mut()
                .for_each(|g| *g *= s);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// Sum of scalar counts over parameters whose name starts with `prefix`.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.name.starts_with(prefix))
            .map(|e| e.tensor.len())
            .sum()
    }

    /// Copies of every parameter value, in store order.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|e| e.tensor.data().to_vec())
            .collect()
    }

    pub fn grads_snapshot(&self) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|e| self.grad_of(e).to_vec())
            .collect()
    }

    fn grad_of<'a>(&self, e: &'a Entry) -> &'a [f64] {
        e.tensor.grad().unwrap()
    }

    pub fn restore(&mut self, values: &[Vec<f64>]) {
        assert_eq!(values.len(), self.entries.len());
        for (e, v) in self.entries.iter_mut().zip(values) {
            e.tensor.data_mut().copy_from_slice(v);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.tensor.is_finite())
    }

    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let mut params = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            params.push(HeaderEntry {
                name: e.name.clone(),
                shape: e.tensor.shape().to_vec(),
                offset,
            });
            offset += e.tensor.len();
        }
        let header = serde_json::to_vec(&Header {
            version: CHECKPOINT_VERSION.to_string(),
            params,
        })?;
        let mut out = Vec::with_capacity(8 + header.len() + offset * 8);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for e in &self.entries {
            for v in e.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes()?)?;
        Ok(())
    }

    /// Loads values into an existing store whose names and shapes must match
    /// the checkpoint exactly.
    pub fn load_checkpoint_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 8 {
            return Err(bad("file shorter than the length prefix".into()));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = bytes
            .get(8..8 + hlen)
            .ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version `{}`", header.version)));
        }
        if header.params.len() != self.entries.len() {
            return Err(bad(format!(
                "checkpoint has {} parameters, model has {}",
                header.params.len(),
                self.entries.len()
            )));
        }
        let data = &bytes[8 + hlen..];
        for (h, e) in header.params.iter().zip(self.entries.iter_mut()) {
            if h.name != e.name || h.shape != e.tensor.shape() {
                return Err(bad(format!(
                    "parameter `{}` {:?} does not match model `{}` {:?}",
                    h.name,
                    h.shape,
                    e.name,
                    e.tensor.shape()
                )));
            }
            let n = e.tensor.len();
            let raw = data
                .get(h.offset * 8..(h.offset + n) * 8)
                .ok_or_else(|| bad(format!("data for `{}` is truncated", h.name)))?;
            for (dst, chunk) in e.tensor.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        Ok(())
    }

    pub fn load_checkpoint(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.load_checkpoint_bytes(&std::fs::read(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: String,
    params: Vec<HeaderEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn store(seed: u64) -> ParamStore {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        s.add_uniform("a.w", &[3, 2], 1.0, true, &mut rng);
        s.add_uniform("a.b", &[2], 1.0, false, &mut rng);
        s
    }

    #[test]
    fn checkpoint_round_trip() {
        let src = store(1);
        let mut dst = store(2);
        assert_ne!(src.snapshot(), dst.snapshot());
        dst.load_checkpoint_bytes(&src.to_checkpoint_bytes().unwrap())
            .unwrap();
        assert_eq!(src.snapshot(), dst.snapshot());
    }

    #[test]
    fn header_names_version() {
        let bytes = store(1).to_checkpoint_bytes().unwrap();
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + hlen]).unwrap();
        assert_eq!(header["version"], CHECKPOINT_VERSION);
        assert_eq!(header["params"][1]["offset"], 6);
        assert_eq!(bytes.len(), 8 + hlen + 8 * 8);
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let bytes = store(1).to_checkpoint_bytes().unwrap();
        let mut other = ParamStore::new();
        other.add("a.w", Tensor::zeros(&[2, 3]), true);
        other.add("a.b", Tensor::zeros(&[2]), false);
        assert!(other.load_checkpoint_bytes(&bytes).is_err());
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_panic() {
        let mut s = ParamStore::new();
        s.add("x", Tensor::zeros(&[1]), false);
        s.add("x", Tensor::zeros(&[1]), false);
    }
}
