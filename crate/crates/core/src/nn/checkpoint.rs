//! Binary checkpoint container.
//!
//! Layout (little-endian):
//! ```text
//! magic "RSTK" | u32 version (=1)
//! u32 len | config hash (UTF-8)
//! u32 len | metadata (UTF-8 JSON)
//! u32 tensor count
//! per tensor: u32 len | name | u32 rows | u32 cols | u8 trainable | rows*cols f32
//! ```

use std::io::{Read, Write};

use super::params::ParameterStore;
use super::tensor::Tensor2;
use crate::error::CheckpointError;

const MAGIC: &[u8; 4] = b"RSTK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub value: Tensor2,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub metadata: String,
    pub tensors: Vec<StoredTensor>,
}

impl Checkpoint {
    pub fn from_store(store: &ParameterStore, config_hash: &str, metadata: &str) -> Self {
        Checkpoint {
            config_hash: config_hash.to_string(),
            metadata: metadata.to_string(),
            tensors: store
                .iter()
                .map(|p| StoredTensor { name: p.name.clone(), value: p.value.clone(), trainable: p.trainable })
                .collect(),
        }
    }

    /// Copies stored values into a store with the same parameter names and shapes.
    pub fn restore_into(&self, store: &mut ParameterStore) -> Result<(), CheckpointError> {
        if self.tensors.len() != store.len() {
            return Err(CheckpointError::Metadata(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for t in &self.tensors {
            let id = store
                .find(&t.name)
                .map_err(|_| CheckpointError::Tensor { name: t.name.clone(), message: "not in model".into() })?;
            let param = store.get_mut(id);
            if param.value.shape() != t.value.shape() {
                return Err(CheckpointError::Tensor {
                    name: t.name.clone(),
                    message: format!("shape {:?}, model expects {:?}", t.value.shape(), param.value.shape()),
                });
            }
            param.value = t.value.clone();
            param.trainable = t.trainable;
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_str(&mut w, &self.config_hash)?;
        write_str(&mut w, &self.metadata)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            write_str(&mut w, &t.name)?;
            w.write_all(&(t.value.rows() as u32).to_le_bytes())?;
            w.write_all(&(t.value.cols() as u32).to_le_bytes())?;
            w.write_all(&[t.trainable as u8])?;
            let mut buf = Vec::with_capacity(t.value.len() * 4);
            for v in t.value.data() {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|_| CheckpointError::Truncated)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let config_hash = cur.string()?;
        let metadata = cur.string()?;
        let count = cur.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name = cur.string()?;
            let rows = cur.u32()? as usize;
            let cols = cur.u32()? as usize;
            let trainable = cur.take(1)?[0] != 0;
            let raw = cur.take(rows * cols * 4)?;
            let data: Vec<f64> = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(CheckpointError::Tensor { name, message: "non-finite value".into() });
            }
            let value = Tensor2::from_vec(rows, cols, data)
                .map_err(|e| CheckpointError::Tensor { name: name.clone(), message: e.to_string() })?;
            tensors.push(StoredTensor { name, value, trainable });
        }
        if cur.pos != bytes.len() {
            return Err(CheckpointError::Metadata("trailing bytes".into()));
        }
        Ok(Checkpoint { config_hash, metadata, tensors })
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(CheckpointError::Truncated)?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::Metadata("invalid UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Init;

    #[test]
    fn round_trip_at_f32_precision() {
        let mut store = ParameterStore::new(7);
        store.add("a.w", 3, 2, Init::Xavier { fan_in: 3, fan_out: 2 });
        let frozen = store.add("emb", 2, 2, Init::Xavier { fan_in: 2, fan_out: 2 });
        store.set_trainable(frozen, false);
        let ck = Checkpoint::from_store(&store, "abc123", "{\"k\":1}");
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        let back = Checkpoint::read(&buf[..]).unwrap();
        assert_eq!(back.config_hash, "abc123");
        assert_eq!(back.metadata, "{\"k\":1}");
        assert!(!back.tensors[1].trainable);
        for (a, b) in ck.tensors.iter().zip(&back.tensors) {
            for (x, y) in a.value.data().iter().zip(b.value.data()) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        // Values that are already f32 survive bit-exactly through a second round trip.
        let mut buf2 = Vec::new();
        back.write(&mut buf2).unwrap();
        assert_eq!(buf, buf2);

        let mut fresh = ParameterStore::new(99);
        fresh.add("a.w", 3, 2, Init::Zeros);
        fresh.add("emb", 2, 2, Init::Zeros);
        back.restore_into(&mut fresh).unwrap();
        assert_eq!(fresh.value(frozen), &back.tensors[1].value);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Checkpoint::read(&b"NOPE\x01\x00\x00\x00"[..]), Err(CheckpointError::BadMagic)));
        assert!(matches!(Checkpoint::read(&b"RSTK\x02\x00\x00\x00"[..]), Err(CheckpointError::Version(2))));
        assert!(matches!(Checkpoint::read(&b"RSTK\x01\x00\x00"[..]), Err(CheckpointError::Truncated)));
        let mut store = ParameterStore::new(0);
        store.add("x", 1, 1, Init::Zeros);
        let ck = Checkpoint::from_store(&store, "h", "{}");
        let mut other = ParameterStore::new(0);
        other.add("x", 2, 1, Init::Zeros);
        assert!(matches!(ck.restore_into(&mut other), Err(CheckpointError::Tensor { .. })));
    }
}
