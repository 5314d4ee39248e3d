//! Document-level RST discourse parsing by top-down span splitting.
//!
//! A hierarchical encoder turns token embeddings into EDU representations
//! (EDU aggregation, a document-level Bi-GRU, boundary fusion). A GRU
//! pointer decoder splits spans breadth-first, and a bi-affine classifier
//! labels every split with nuclearity and relation. Inference is greedy or
//! layer-wise beam search; evaluation covers RST-Parseval and Original
//! Parseval micro-F1.

pub mod beam;
pub mod classifier;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod nn;
pub mod raw;
pub mod synth;
pub mod train;
pub mod tree;

pub use error::{Error, Result};
pub use raw::{binarize, RawChild, RawTree};
pub use tree::{
    validate_tree, DiscourseTree, Document, InternalNode, LabeledSplit, Nuclearity, NuclearityRelationLabel,
    RelationClass, RelationMap, Role, Span,
};
pub use beam::{oracle_best, parse_beam};
pub use classifier::{LabelSpace, LabelSpaceMode};
pub use decoder::{parse_greedy, ParseResult, ScoredSplit, SpanScorer};
pub use encoder::{Aggregation, BoundaryMode, EmbeddingMode, FusionOrder};
pub use eval::{align, score, Convention, ScoreReport};
pub use io::{CorpusRecord, EmbeddingFile, TreeRecord};
pub use model::{ModelConfig, Noise, ParserModel};
pub use synth::{ablate_markers, generate_synthetic};
pub use train::{train, EpochLog, LossBreakdown, TrainConfig, TrainInputs, TrainOutcome};
