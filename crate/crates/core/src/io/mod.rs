//! Treebank, corpus, tree and embedding file formats.

pub mod corpus;
pub mod dis;
pub mod embeddings;

pub use corpus::{
    parse_corpus, parse_trees, read_corpus, read_trees, tree_from_json, tree_to_json, write_corpus, write_trees,
    CorpusRecord, TreeRecord,
};
pub use dis::{parse_dis, DisDocument};
pub use embeddings::{read_embeddings, write_embeddings, EmbeddingFile, EmbeddingRecord};
