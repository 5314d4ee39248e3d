//! EMB1 precomputed token embeddings.
//!
//! Little-endian layout: `b"EMB1"`, `u32 dim`, then records of
//! `u32 id_len`, `id_len` UTF-8 bytes, `u32 n_tokens`, `n_tokens * dim` f32.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{EmbeddingError, Error};

pub const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRecord {
    pub doc_id: String,
    pub n_tokens: usize,
    /// Row-major `n_tokens x dim`.
    pub values: Vec<f32>,
}

/// Loaded embedding table; record order is the file order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingFile {
    dim: usize,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingFile {
    pub fn new(dim: usize) -> Self {
        EmbeddingFile { dim, records: Vec::new(), index: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(doc_id).map(|&i| &self.records[i])
    }

    pub fn push(&mut self, doc_id: impl Into<String>, n_tokens: usize, values: Vec<f32>) -> Result<(), EmbeddingError> {
        let doc_id = doc_id.into();
        if values.len() != n_tokens * self.dim {
            return Err(EmbeddingError::TokenCount {
                doc_id,
                expected: n_tokens,
                found: values.len() / self.dim.max(1),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { doc_id, token: pos / self.dim.max(1) });
        }
        if self.index.contains_key(&doc_id) {
            return Err(EmbeddingError::Duplicate(doc_id));
        }
        self.index.insert(doc_id.clone(), self.records.len());
        self.records.push(EmbeddingRecord { doc_id, n_tokens, values });
        Ok(())
    }

    /// Looks up a document and checks its token count.
    pub fn lookup(&self, doc_id: &str, n_tokens: usize) -> Result<&EmbeddingRecord, EmbeddingError> {
        let rec = self.get(doc_id).ok_or_else(|| EmbeddingError::MissingDocument(doc_id.to_string()))?;
        if rec.n_tokens != n_tokens {
            return Err(EmbeddingError::TokenCount { doc_id: doc_id.to_string(), expected: n_tokens, found: rec.n_tokens });
        }
        Ok(rec)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.records.iter().map(|r| 8 + r.doc_id.len() + 4 * r.values.len()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.doc_id.len() as u32).to_le_bytes());
            out.extend_from_slice(r.doc_id.as_bytes());
            out.extend_from_slice(&(r.n_tokens as u32).to_le_bytes());
            for v in &r.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let take = |at: &mut usize, n: usize| -> Result<&[u8], EmbeddingError> {
            let end = at.checked_add(n).filter(|&e| e <= bytes.len()).ok_or(EmbeddingError::Truncated { offset: *at })?;
            let s = &bytes[*at..end];
            *at = end;
            Ok(s)
        };
        let u32_at = |at: &mut usize| -> Result<usize, EmbeddingError> {
            Ok(u32::from_le_bytes(take(at, 4)?.try_into().unwrap()) as usize)
        };
        if bytes.len() < 4 {
            return Err(EmbeddingError::Truncated { offset: 0 });
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(EmbeddingError::BadMagic(magic));
        }
        let mut at = 4usize;
        let dim = u32_at(&mut at)?;
        let mut file = EmbeddingFile::new(dim);
        while at < bytes.len() {
            let start = at;
            let id_len = u32_at(&mut at)?;
            let id = std::str::from_utf8(take(&mut at, id_len)?).map_err(|_| EmbeddingError::BadId)?.to_string();
            let n_tokens = u32_at(&mut at)?;
            let n_values = n_tokens.checked_mul(dim).ok_or(EmbeddingError::Truncated { offset: start })?;
            let raw = take(&mut at, n_values.checked_mul(4).ok_or(EmbeddingError::Truncated { offset: start })?)
                .map_err(|_| EmbeddingError::Truncated { offset: start })?;
            let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            file.push(id, n_tokens, values)?;
        }
        Ok(file)
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingFile, Error> {
    let bytes = std::fs::read(path)?;
    Ok(EmbeddingFile::from_bytes(&bytes)?)
}

pub fn write_embeddings(mut writer: impl Write, file: &EmbeddingFile) -> Result<(), Error> {
    writer.write_all(&file.to_bytes())?;
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_block() {
        let mut bytes = b"EMB1".to_vec();
        bytes.extend(4u32.to_le_bytes());
        bytes.extend(1u32.to_le_bytes());
        bytes.extend(b"d");
        bytes.extend(3u32.to_le_bytes());
        bytes.extend([0u8; 48]);
        let f = EmbeddingFile::from_bytes(&bytes).unwrap();
        assert_eq!(f.dim(), 4);
        let r = f.get("d").unwrap();
        assert_eq!(r.n_tokens, 3);
        assert_eq!(r.values, vec![0.0f32; 12]);
        assert_eq!(f.to_bytes(), bytes);
    }

    #[test]
    fn distinct_errors() {
        let mut f = EmbeddingFile::new(2);
        f.push("a", 1, vec![1.0, 2.0]).unwrap();
        let good = f.to_bytes();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(EmbeddingFile::from_bytes(&bad_magic), Err(EmbeddingError::BadMagic(_))));
        assert!(matches!(
            EmbeddingFile::from_bytes(&good[..good.len() - 1]),
            Err(EmbeddingError::Truncated { offset: 8 })
        ));
        let mut nan = good.clone();
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(EmbeddingFile::from_bytes(&nan), Err(EmbeddingError::NonFinite { token: 0, .. })));
        let mut dup = good.clone();
        dup.extend_from_slice(&good[8..]);
        assert!(matches!(EmbeddingFile::from_bytes(&dup), Err(EmbeddingError::Duplicate(_))));
        assert!(matches!(f.lookup("zz", 1), Err(EmbeddingError::MissingDocument(_))));
        assert!(matches!(f.lookup("a", 2), Err(EmbeddingError::TokenCount { expected: 2, found: 1, .. })));
    }
}
