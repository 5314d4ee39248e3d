//! The full parser: encoder, decoder and classifier over one parameter store.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{Classifier, LabelSpace};
use crate::decoder::{Decoder, SpanScorer};
use crate::encoder::{Aggregation, BoundaryMode, EduEncoding, EmbeddingMode, EmbeddingProvider, Encoder, EncoderDims, FusionOrder};
use crate::error::{CheckpointError, EmbeddingError, Error, NnError};
use crate::io::EmbeddingFile;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{dropout, Graph, ParameterStore, Var};
use crate::tree::{Document, NuclearityRelationLabel, Span};

/// Dropout rate plus the RNG drawing masks; absent at evaluation time.
pub struct Noise<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

pub(crate) fn apply_dropout(g: &mut Graph, x: Var, noise: &mut Option<Noise<'_>>) -> Result<Var, NnError> {
    match noise {
        Some(n) => dropout(g, x, n.rate, Some(&mut *n.rng)),
        None => Ok(x),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub token_dim: usize,
    /// Per direction.
    pub hidden: usize,
    pub encoder_layers: usize,
    /// Width of `e_i`; defaults to `2 * hidden`.
    pub fused_dim: Option<usize>,
    pub classifier_dim: usize,
    pub hash_buckets: usize,
    pub attention_hidden: usize,
    pub aggregation: Aggregation,
    pub boundary: BoundaryMode,
    pub fusion: FusionOrder,
    pub embeddings: EmbeddingMode,
    pub freeze_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            token_dim: 32,
            hidden: 16,
            encoder_layers: 1,
            fused_dim: None,
            classifier_dim: 64,
            hash_buckets: 1024,
            attention_hidden: 16,
            aggregation: Aggregation::Average,
            boundary: BoundaryMode::Both,
            fusion: FusionOrder::After,
            embeddings: EmbeddingMode::Trainable,
            freeze_embeddings: false,
        }
    }
}

impl ModelConfig {
    pub fn fused(&self) -> usize {
        self.fused_dim.unwrap_or(2 * self.hidden)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let dims = [
            ("token_dim", self.token_dim),
            ("hidden", self.hidden),
            ("encoder_layers", self.encoder_layers),
            ("fused_dim", self.fused()),
            ("classifier_dim", self.classifier_dim),
            ("hash_buckets", self.hash_buckets),
            ("attention_hidden", self.attention_hidden),
        ];
        match dims.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::Config(format!("{name} must be positive"))),
            None => Ok(()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    model: ModelConfig,
    labels: Vec<NuclearityRelationLabel>,
}

#[derive(Clone, Debug)]
pub struct ParserModel {
    pub config: ModelConfig,
    pub labels: LabelSpace,
    pub store: ParameterStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub classifier: Classifier,
}

impl ParserModel {
    pub fn new(config: ModelConfig, labels: LabelSpace, seed: u64) -> Result<Self, Error> {
        config.validate()?;
        let mut store = ParameterStore::new(seed);
        let dims = EncoderDims {
            token_dim: config.token_dim,
            hidden: config.hidden,
            layers: config.encoder_layers,
            fused_dim: config.fused(),
            att_hidden: config.attention_hidden,
            buckets: config.hash_buckets,
        };
        let encoder = Encoder::new(&mut store, &dims, config.embeddings, config.aggregation, config.boundary, config.fusion);
        if let (EmbeddingProvider::Hashed { table, .. }, true) = (&encoder.provider, config.freeze_embeddings) {
            store.set_trainable(*table, false);
        }
        let decoder = Decoder::new(&mut store, 2 * config.hidden, config.fused());
        let classifier = Classifier::new(&mut store, config.fused(), config.classifier_dim, labels.len());
        Ok(ParserModel { config, labels, store, encoder, decoder, classifier })
    }

    /// Supplies vectors for [`EmbeddingMode::Precomputed`].
    pub fn attach_embeddings(&mut self, file: Arc<EmbeddingFile>) -> Result<(), Error> {
        match &mut self.encoder.provider {
            EmbeddingProvider::Precomputed { dim, file: slot } => {
                if file.dim() != *dim {
                    return Err(EmbeddingError::Dim { expected: *dim, found: file.dim() }.into());
                }
                *slot = Some(file);
                Ok(())
            }
            EmbeddingProvider::Hashed { .. } => Err(Error::Config("model uses trainable embeddings".into())),
        }
    }

    pub fn encode(&self, g: &mut Graph, doc: &Document, noise: &mut Option<Noise<'_>>) -> Result<EduEncoding, Error> {
        self.encoder.encode(g, doc, noise)
    }

    pub fn scorer<'s>(&'s self, doc: &Document) -> Result<NeuralScorer<'s>, Error> {
        NeuralScorer::new(self, doc)
    }

    /// Greedy for `beam <= 1`, layer-wise beam search otherwise.
    pub fn parse(&self, doc: &Document, beam: usize) -> Result<crate::decoder::ParseResult, Error> {
        let mut scorer = self.scorer(doc)?;
        if beam <= 1 {
            crate::decoder::parse_greedy(&mut scorer)
        } else {
            crate::beam::parse_beam(&mut scorer, beam)
        }
    }

    /// SHA-256 of the model configuration and label list.
    pub fn config_hash(&self) -> String {
        hash_json(&self.metadata_json())
    }

    fn metadata_json(&self) -> String {
        serde_json::to_string(&Metadata { model: self.config.clone(), labels: self.labels.labels().to_vec() })
            .expect("metadata serializes")
    }

    pub fn to_checkpoint(&self, config_hash: &str) -> Checkpoint {
        Checkpoint::from_store(&self.store, config_hash, &self.metadata_json())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, Error> {
        let meta: Metadata =
            serde_json::from_str(&ckpt.metadata).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        let mut model = ParserModel::new(meta.model, LabelSpace::new(meta.labels)?, 0)?;
        ckpt.restore_into(&mut model.store)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>, config_hash: &str) -> Result<(), Error> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.to_checkpoint(config_hash).write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Loads a checkpoint; also returns its stored config hash.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String), Error> {
        let file = std::fs::File::open(path)?;
        let ckpt = Checkpoint::read(std::io::BufReader::new(file))?;
        Ok((Self::from_checkpoint(&ckpt)?, ckpt.config_hash))
    }
}

pub fn hash_json(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// [`SpanScorer`] backed by a model; one per document.
pub struct NeuralScorer<'s> {
    model: &'s ParserModel,
    graph: Graph<'s>,
    encoding: EduEncoding,
    m: usize,
    label_cache: HashMap<(Span, usize), Vec<f64>>,
}

impl<'s> NeuralScorer<'s> {
    pub fn new(model: &'s ParserModel, doc: &Document) -> Result<Self, Error> {
        let mut graph = Graph::new(&model.store);
        let encoding = model.encode(&mut graph, doc, &mut None)?;
        Ok(NeuralScorer { model, graph, encoding, m: doc.num_edus(), label_cache: HashMap::new() })
    }

    pub fn encoding(&self) -> &EduEncoding {
        &self.encoding
    }

    pub fn graph(&self) -> &Graph<'s> {
        &self.graph
    }
}

impl SpanScorer for NeuralScorer<'_> {
    type State = Var;

    fn num_edus(&self) -> usize {
        self.m
    }

    fn num_labels(&self) -> usize {
        self.model.labels.len()
    }

    fn label(&self, index: usize) -> NuclearityRelationLabel {
        self.model.labels.get(index).clone()
    }

    fn initial_state(&mut self) -> Result<Var, Error> {
        Ok(self.model.decoder.init_state(&mut self.graph, self.encoding.doc_summary)?)
    }

    fn advance(&mut self, state: &Var, span: Span) -> Result<(Var, Vec<f64>), Error> {
        let (h, lp) = self.model.decoder.split_log_probs(&mut self.graph, *state, self.encoding.e, span, &mut None)?;
        Ok((h, self.graph.value(lp).data().to_vec()))
    }

    fn label_log_probs(&mut self, span: Span, split: usize) -> Result<Vec<f64>, Error> {
        if let Some(v) = self.label_cache.get(&(span, split)) {
            return Ok(v.clone());
        }
        let lp = self.model.classifier.classify_split(&mut self.graph, self.encoding.e, span, split)?;
        let v = self.graph.value(lp).data().to_vec();
        self.label_cache.insert((span, split), v.clone());
        Ok(v)
    }
}
