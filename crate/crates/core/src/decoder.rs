//! Breadth-first top-down pointer decoder.
//!
//! The decoder state advances one GRU step per span, fed the mean of the
//! span's EDU rows. Split scores are `s_u = h · e_u` over `u ∈ [i, j-1]`,
//! so a split after EDU `u` leaves `[i,u]` and `[u+1,j]`.

use std::collections::VecDeque;

use crate::error::{Error, NnError};
use crate::nn::{Graph, GruCell, Linear, ParameterStore, Var};
use crate::tree::{DiscourseTree, LabeledSplit, NuclearityRelationLabel, Span};
use crate::Noise;

/// Mean of rows `e_i..e_j` (1-based, inclusive).
pub fn span_representation(g: &mut Graph, e: Var, span: Span) -> Result<Var, NnError> {
    let m = g.shape(e).0;
    if span.start < 1 || span.start > span.end || span.end > m {
        return Err(NnError::dim("span_representation", format!("span {span} over {m} EDUs")));
    }
    g.mean_rows(e, span.start - 1, span.end)
}

/// Distribution over the split positions of one span.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDecision {
    pub span: Span,
    /// Argmax split, ties toward the smaller position.
    pub split: usize,
    pub log_prob: f64,
    /// Probabilities for splits `span.start..span.end`.
    pub distribution: Vec<f64>,
}

impl SplitDecision {
    pub fn from_log_probs(span: Span, log_probs: &[f64]) -> Self {
        let best = argmax(log_probs);
        SplitDecision {
            span,
            split: span.start + best,
            log_prob: log_probs[best],
            distribution: log_probs.iter().map(|l| l.exp()).collect(),
        }
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    xs.iter().enumerate().fold(0, |best, (i, &x)| if x > xs[best] { i } else { best })
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub init: Linear,
    pub gru: GruCell,
}

impl Decoder {
    pub fn new(store: &mut ParameterStore, summary_dim: usize, dim: usize) -> Self {
        Decoder {
            init: Linear::new(store, "decoder.init", summary_dim, dim, true),
            gru: GruCell::new(store, "decoder.gru", dim, dim),
        }
    }

    /// `h_0` as a learned projection of the document summary.
    pub fn init_state(&self, g: &mut Graph, doc_summary: Var) -> Result<Var, NnError> {
        self.init.forward(g, doc_summary)
    }

    /// One decoder step on `span`; returns the new state and split log-probs (`1 x (j-i)`).
    pub fn split_log_probs(
        &self,
        g: &mut Graph,
        h: Var,
        e: Var,
        span: Span,
        noise: &mut Option<Noise<'_>>,
    ) -> Result<(Var, Var), NnError> {
        if !span.splittable() {
            return Err(NnError::dim("split_distribution", format!("span {span} has no split")));
        }
        let x = span_representation(g, e, span)?;
        let x = crate::model::apply_dropout(g, x, noise)?;
        let h = self.gru.step(g, x, h)?;
        let candidates = g.slice_rows(e, span.start - 1, span.end - span.start)?;
        let scores = g.matmul_t(h, candidates)?;
        Ok((h, g.log_softmax(scores)?))
    }
}

/// Scoring interface shared by greedy decoding, beam search and the oracle.
pub trait SpanScorer {
    type State: Clone;

    fn num_edus(&self) -> usize;

    fn num_labels(&self) -> usize;

    fn label(&self, index: usize) -> NuclearityRelationLabel;

    fn initial_state(&mut self) -> Result<Self::State, Error>;

    /// Advances on `span` and returns log-probs of splits `span.start..span.end`.
    fn advance(&mut self, state: &Self::State, span: Span) -> Result<(Self::State, Vec<f64>), Error>;

    fn label_log_probs(&mut self, span: Span, split: usize) -> Result<Vec<f64>, Error>;
}

/// One decided split with its label index and log-probs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSplit {
    pub span: Span,
    pub split: usize,
    pub label: usize,
    pub split_log_prob: f64,
    pub label_log_prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseResult {
    pub tree: DiscourseTree,
    /// Decisions in breadth-first order.
    pub splits: Vec<ScoredSplit>,
    /// `Σ (log P_s + log P_r)`.
    pub score: f64,
    /// `score / split count`, 0 for single-EDU documents.
    pub normalized: f64,
}

impl ParseResult {
    pub fn split_sequence(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.split).collect()
    }

    pub fn label_sequence(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.label).collect()
    }
}

pub(crate) fn assemble<S: SpanScorer>(scorer: &S, m: usize, splits: Vec<ScoredSplit>, score: f64) -> Result<ParseResult, Error> {
    let labeled: Vec<LabeledSplit> = splits
        .iter()
        .map(|s| {
            let l = scorer.label(s.label);
            LabeledSplit { span: s.span, split: s.split, nuclearity: l.nuclearity, relation: l.relation }
        })
        .collect();
    let tree = DiscourseTree::from_splits(m, &labeled)?;
    let normalized = if splits.is_empty() { 0.0 } else { score / splits.len() as f64 };
    Ok(ParseResult { tree, splits, score, normalized })
}

/// All `(split, label)` pairs of one span, best first; ties go to the smaller split, then label.
pub(crate) fn ranked_pairs(span: Span, split_lp: &[f64], label_lps: &[Vec<f64>]) -> Vec<(f64, ScoredSplit)> {
    let mut pairs = Vec::with_capacity(split_lp.len() * label_lps.first().map_or(0, Vec::len));
    for (offset, (&ls, lr)) in split_lp.iter().zip(label_lps).enumerate() {
        for (r, &l) in lr.iter().enumerate() {
            pairs.push((
                ls + l,
                ScoredSplit { span, split: span.start + offset, label: r, split_log_prob: ls, label_log_prob: l },
            ));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.split.cmp(&b.1.split)).then(a.1.label.cmp(&b.1.label)));
    pairs
}

/// Greedy breadth-first decoding: each span takes the `(split, label)` pair
/// maximizing `log P_s + log P_r`.
pub fn parse_greedy<S: SpanScorer>(scorer: &mut S) -> Result<ParseResult, Error> {
    let m = scorer.num_edus();
    let mut queue: VecDeque<Span> = VecDeque::new();
    if m >= 2 {
        queue.push_back(Span::new(1, m));
    }
    let mut h = scorer.initial_state()?;
    let mut splits = Vec::with_capacity(m.saturating_sub(1));
    let mut score = 0.0;
    while let Some(span) = queue.pop_front() {
        let (next, split_lp) = scorer.advance(&h, span)?;
        h = next;
        let mut best: Option<(f64, ScoredSplit)> = None;
        for (offset, &ls) in split_lp.iter().enumerate() {
            let k = span.start + offset;
            let lr = scorer.label_log_probs(span, k)?;
            for (r, &l) in lr.iter().enumerate() {
                let pair = ls + l;
                if best.as_ref().is_none_or(|b| pair > b.0) {
                    best = Some((pair, ScoredSplit { span, split: k, label: r, split_log_prob: ls, label_log_prob: l }));
                }
            }
        }
        let (pair, chosen) = best.expect("nonempty split and label sets");
        score += pair;
        let (left, right) = span.split_at(chosen.split);
        for child in [left, right] {
            if child.splittable() {
                queue.push_back(child);
            }
        }
        splits.push(chosen);
    }
    assemble(scorer, m, splits, score)
}

/// Replays the decoder along `tree`; returns forced decisions with the
/// best label per node.
pub fn replay_forced<S: SpanScorer>(scorer: &mut S, tree: &DiscourseTree) -> Result<ParseResult, Error> {
    let m = scorer.num_edus();
    let mut h = scorer.initial_state()?;
    let mut splits = Vec::new();
    let mut score = 0.0;
    for node in tree.internal_nodes_bfs() {
        let (next, split_lp) = scorer.advance(&h, node.span)?;
        h = next;
        let ls = split_lp[node.split - node.span.start];
        let lr = scorer.label_log_probs(node.span, node.split)?;
        let r = argmax(&lr);
        score += ls + lr[r];
        splits.push(ScoredSplit { span: node.span, split: node.split, label: r, split_log_prob: ls, label_log_prob: lr[r] });
    }
    assemble(scorer, m, splits, score)
}
