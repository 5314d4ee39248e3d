use thiserror::Error;

use crate::tree::Span;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Dis(#[from] DisError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, document {doc_id}")]
    NonFiniteLoss { epoch: usize, doc_id: String },
    #[error("oracle refuses documents with {m} EDUs (limit {limit})")]
    OracleTooLarge { m: usize, limit: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("split must satisfy k < j (span {span}, split {split})")]
    SplitNotBeforeEnd { span: Span, split: usize },
    #[error("split must satisfy i <= k (span {span}, split {split})")]
    SplitBeforeStart { span: Span, split: usize },
    #[error("child of {parent} covers {child}, expected {expected}")]
    ChildSpan { parent: Span, child: Span, expected: Span },
    #[error("root covers {root}, expected [1,{m}]")]
    Root { root: Span, m: usize },
    #[error("leaf {found} out of order, expected {expected}")]
    LeafOrder { expected: usize, found: usize },
    #[error("raw node {span} has no children")]
    EmptyNode { span: Span },
    #[error("raw node {span} has no nucleus")]
    NoNucleus { span: Span },
    #[error("raw node {span} is missing the relation of child {child}")]
    MissingRelation { span: Span, child: Span },
    #[error("unmapped relation label {0:?}")]
    UnmappedLabel(String),
    #[error("relation map line {line}: {message}")]
    MapSyntax { line: usize, message: String },
    #[error("relation map maps {label:?} to both {first} and {second}")]
    MapConflict { label: String, first: String, second: String },
    #[error("invalid document {doc_id}: {message}")]
    Document { doc_id: String, message: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DisError {
    #[error("{line}:{column}: unbalanced parentheses")]
    Unbalanced { line: usize, column: usize },
    #[error("{line}:{column}: unexpected end of input")]
    Truncated { line: usize, column: usize },
    #[error("{line}:{column}: unknown node tag {tag:?}")]
    UnknownTag { line: usize, column: usize, tag: String },
    #[error("{line}:{column}: non-contiguous child spans: expected EDU {expected}, found {found}")]
    NonContiguous { line: usize, column: usize, expected: usize, found: usize },
    #[error("{line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: schema error in field `{field}`: {message}")]
    Schema { line: usize, field: String, message: String },
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("tree schema error: {0}")]
    Tree(String),
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic bytes {0:?}, expected \"EMB1\"")]
    BadMagic([u8; 4]),
    #[error("truncated record at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("non-finite value in document {doc_id} at token {token}")]
    NonFinite { doc_id: String, token: usize },
    #[error("duplicate document id {0}")]
    Duplicate(String),
    #[error("document {0} missing from embedding file")]
    MissingDocument(String),
    #[error("document {doc_id}: embedding file has {found} tokens, corpus has {expected}")]
    TokenCount { doc_id: String, expected: usize, found: usize },
    #[error("embedding dim {found} does not match configured dim {expected}")]
    Dim { expected: usize, found: usize },
    #[error("document id is not valid UTF-8")]
    BadId,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
}

impl NnError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        NnError::Dimension { op, detail: detail.into() }
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
    #[error("checkpoint tensor {name}: {message}")]
    Tensor { name: String, message: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("document {doc_id}: predicted tree has {pred} EDUs, gold has {gold}")]
    EduMismatch { doc_id: String, pred: usize, gold: usize },
    #[error("document {0} has no gold tree")]
    MissingGold(String),
    #[error("document {0} has no prediction")]
    MissingPrediction(String),
    #[error("prediction for unknown document {0}")]
    UnknownDocument(String),
}
