//! Hierarchical EDU encoder: token embeddings, EDU aggregation, a
//! document-level Bi-GRU and boundary fusion `e_i = W_e [v_i; g_i] + b_e`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{EmbeddingError, Error, NnError};
use crate::io::EmbeddingFile;
use crate::nn::{BiGru, Graph, GruCell, Init, Linear, ParamId, ParameterStore, Tensor2, Var};
use crate::tree::Document;
use crate::Noise;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Average,
    SelfAttentive,
    GruAttentive,
}

/// Which EDU-end token rows feed the boundary vector `g_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    #[default]
    Both,
    Left,
    Right,
    None,
}

impl BoundaryMode {
    pub fn width(&self, token_dim: usize) -> usize {
        match self {
            BoundaryMode::Both => 2 * token_dim,
            BoundaryMode::Left | BoundaryMode::Right => token_dim,
            BoundaryMode::None => 0,
        }
    }
}

/// Where boundary vectors join: after the document encoder (default) or
/// concatenated to its input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FusionOrder {
    #[default]
    After,
    Before,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    /// Hash-bucketed trainable lookup table.
    #[default]
    Trainable,
    /// Vectors read from an EMB1 file.
    Precomputed,
}

/// FNV-1a, used to bucket tokens.
pub fn token_bucket(token: &str, buckets: usize) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h % buckets as u64) as usize
}

#[derive(Clone, Debug)]
pub enum EmbeddingProvider {
    Hashed { table: ParamId, buckets: usize, dim: usize },
    Precomputed { dim: usize, file: Option<Arc<EmbeddingFile>> },
}

impl EmbeddingProvider {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::Hashed { dim, .. } | EmbeddingProvider::Precomputed { dim, .. } => *dim,
        }
    }

    /// `n x dim` token matrix for `doc`.
    pub fn embed_tokens(&self, g: &mut Graph, doc: &Document) -> Result<Var, Error> {
        match self {
            EmbeddingProvider::Hashed { table, buckets, .. } => {
                let ids = doc.tokens.iter().map(|t| token_bucket(t, *buckets)).collect();
                let table = g.param(*table);
                Ok(g.gather(table, ids)?)
            }
            EmbeddingProvider::Precomputed { dim, file } => {
                let file = file.as_ref().ok_or_else(|| EmbeddingError::MissingDocument(doc.doc_id.clone()))?;
                let rec = file.lookup(&doc.doc_id, doc.tokens.len())?;
                let values = rec.values.iter().map(|&v| v as f64).collect();
                Ok(g.constant(Tensor2::from_vec(rec.n_tokens, *dim, values)?))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Aggregator {
    Average,
    SelfAttentive { query: ParamId },
    GruAttentive { gru: GruCell, score: ParamId },
}

/// Per-EDU aggregates `C` and the token weights used for each EDU.
#[derive(Clone, Debug)]
pub struct Aggregated {
    pub c: Var,
    pub weights: Vec<Vec<f64>>,
}

impl Aggregator {
    pub fn new(store: &mut ParameterStore, scheme: Aggregation, dim: usize, att_hidden: usize) -> Self {
        match scheme {
            Aggregation::Average => Aggregator::Average,
            Aggregation::SelfAttentive => {
                Aggregator::SelfAttentive { query: store.add("agg.query", 1, dim, Init::Xavier { fan_in: dim, fan_out: 1 }) }
            }
            Aggregation::GruAttentive => Aggregator::GruAttentive {
                gru: GruCell::new(store, "agg.gru", dim, att_hidden),
                score: store.add("agg.score", 1, att_hidden, Init::Xavier { fan_in: att_hidden, fan_out: 1 }),
            },
        }
    }

    pub fn aggregate_edus(&self, g: &mut Graph, tokens: Var, doc: &Document) -> Result<Aggregated, NnError> {
        let mut rows = Vec::with_capacity(doc.num_edus());
        let mut weights = Vec::with_capacity(doc.num_edus());
        for edu in 1..=doc.num_edus() {
            let (first, last) = doc.edu_token_range(edu);
            let len = last + 1 - first;
            match self {
                Aggregator::Average => {
                    rows.push(g.mean_rows(tokens, first, last + 1)?);
                    weights.push(vec![1.0 / len as f64; len]);
                }
                Aggregator::SelfAttentive { query } => {
                    let t = g.slice_rows(tokens, first, len)?;
                    let q = g.param(*query);
                    let s = g.matmul_t(q, t)?;
                    let a = g.softmax(s)?;
                    weights.push(g.value(a).data().to_vec());
                    rows.push(g.matmul(a, t)?);
                }
                Aggregator::GruAttentive { gru, score } => {
                    let t = g.slice_rows(tokens, first, len)?;
                    let h0 = g.constant(Tensor2::zeros(1, gru.hidden));
                    let states = gru.run(g, t, h0, false)?;
                    let hs = g.stack_rows(&states)?;
                    let w = g.param(*score);
                    let s = g.matmul_t(w, hs)?;
                    let a = g.softmax(s)?;
                    weights.push(g.value(a).data().to_vec());
                    rows.push(g.matmul(a, t)?);
                }
            }
        }
        Ok(Aggregated { c: g.stack_rows(&rows)?, weights })
    }
}

/// `m x width` boundary vectors, or `None` for [`BoundaryMode::None`].
pub fn boundary_vectors(g: &mut Graph, tokens: Var, doc: &Document, mode: BoundaryMode) -> Result<Option<Var>, NnError> {
    let ranges: Vec<(usize, usize)> = (1..=doc.num_edus()).map(|e| doc.edu_token_range(e)).collect();
    let firsts = ranges.iter().map(|r| r.0).collect();
    let lasts = ranges.iter().map(|r| r.1).collect();
    Ok(match mode {
        BoundaryMode::Both => {
            let l = g.gather(tokens, firsts)?;
            let r = g.gather(tokens, lasts)?;
            Some(g.concat_cols(&[l, r])?)
        }
        BoundaryMode::Left => Some(g.gather(tokens, firsts)?),
        BoundaryMode::Right => Some(g.gather(tokens, lasts)?),
        BoundaryMode::None => None,
    })
}

/// The per-document encoder output.
#[derive(Clone, Debug)]
pub struct EduEncoding {
    pub tokens: Var,
    pub c: Var,
    pub v: Var,
    pub g: Option<Var>,
    pub e: Var,
    /// `[final forward; final backward]` of the document Bi-GRU.
    pub doc_summary: Var,
    pub weights: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub provider: EmbeddingProvider,
    pub aggregator: Aggregator,
    pub bigru: BiGru,
    pub fuse: Linear,
    pub boundary: BoundaryMode,
    pub fusion: FusionOrder,
}

pub struct EncoderDims {
    pub token_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub fused_dim: usize,
    pub att_hidden: usize,
    pub buckets: usize,
}

impl Encoder {
    pub fn new(
        store: &mut ParameterStore,
        dims: &EncoderDims,
        mode: EmbeddingMode,
        scheme: Aggregation,
        boundary: BoundaryMode,
        fusion: FusionOrder,
    ) -> Self {
        let provider = match mode {
            EmbeddingMode::Trainable => EmbeddingProvider::Hashed {
                table: store.add(
                    "embed.table",
                    dims.buckets,
                    dims.token_dim,
                    Init::Xavier { fan_in: dims.buckets, fan_out: dims.token_dim },
                ),
                buckets: dims.buckets,
                dim: dims.token_dim,
            },
            EmbeddingMode::Precomputed => EmbeddingProvider::Precomputed { dim: dims.token_dim, file: None },
        };
        let aggregator = Aggregator::new(store, scheme, dims.token_dim, dims.att_hidden);
        let dim_g = boundary.width(dims.token_dim);
        let (rnn_in, fuse_in) = match fusion {
            FusionOrder::After => (dims.token_dim, 2 * dims.hidden + dim_g),
            FusionOrder::Before => (dims.token_dim + dim_g, 2 * dims.hidden),
        };
        let bigru = BiGru::new(store, "encoder", rnn_in, dims.hidden, dims.layers);
        let fuse = Linear::new(store, "fuse", fuse_in, dims.fused_dim, true);
        Encoder { provider, aggregator, bigru, fuse, boundary, fusion }
    }

    pub fn encode(&self, g: &mut Graph, doc: &Document, noise: &mut Option<Noise<'_>>) -> Result<EduEncoding, Error> {
        let tokens = self.provider.embed_tokens(g, doc)?;
        let Aggregated { c, weights } = self.aggregator.aggregate_edus(g, tokens, doc)?;
        let gb = boundary_vectors(g, tokens, doc, self.boundary)?;
        let (v, summary) = match (self.fusion, gb) {
            (FusionOrder::Before, Some(gb)) => {
                let input = g.concat_cols(&[c, gb])?;
                self.run_bigru(g, input)?
            }
            _ => self.run_bigru(g, c)?,
        };
        let fuse_in = match (self.fusion, gb) {
            (FusionOrder::After, Some(gb)) => g.concat_cols(&[v, gb])?,
            _ => v,
        };
        let e = self.fuse.forward(g, fuse_in)?;
        let e = crate::model::apply_dropout(g, e, noise)?;
        Ok(EduEncoding { tokens, c, v, g: gb, e, doc_summary: summary, weights })
    }

    fn run_bigru(&self, g: &mut Graph, input: Var) -> Result<(Var, Var), NnError> {
        let out = self.bigru.forward(g, input)?;
        let summary = g.concat_cols(&[out.final_forward, out.final_backward])?;
        Ok((out.outputs, summary))
    }
}
