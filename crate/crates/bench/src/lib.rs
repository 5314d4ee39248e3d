//! Fixtures shared by the benchmarks.

use rstsplit::{generate_synthetic, CorpusRecord, LabelSpace, ModelConfig, ParserModel};

/// `n` synthetic documents with exactly `m` EDUs each.
pub fn corpus(n: usize, m: usize, seed: u64) -> Vec<CorpusRecord> {
    generate_synthetic(n, m, m, 50, seed).expect("valid synthetic range")
}

/// An untrained model with default dimensions over the label set of `records`.
pub fn model(records: &[CorpusRecord], seed: u64) -> ParserModel {
    let labels = LabelSpace::observed(records.iter().filter_map(|r| r.gold_tree.as_ref())).expect("labelled corpus");
    ParserModel::new(ModelConfig::default(), labels, seed).expect("default config is valid")
}
