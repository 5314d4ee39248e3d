//! Layer-wise beam search and an exhaustive oracle for small documents.
//!
//! A candidate holds the spans of its next tree layer. Expanding it splits
//! every one of those spans: each span keeps its `K` best splits, each
//! paired with its best label. The per-span lists are combined into at most
//! `K` layer choices, and the pooled children of all candidates are cut back
//! to `K` by `score / split_count`.

use std::cmp::Ordering;

use crate::decoder::{assemble, ranked_pairs, replay_forced, ParseResult, ScoredSplit, SpanScorer};
use crate::error::Error;
use crate::tree::{DiscourseTree, Nuclearity, Span};

pub const ORACLE_MAX_EDUS: usize = 8;

#[derive(Clone, Debug)]
pub struct BeamCandidate<S> {
    /// Decisions so far, breadth-first.
    pub splits: Vec<ScoredSplit>,
    /// Splittable spans of the next layer, left to right.
    pub pending: Vec<Span>,
    pub state: S,
    pub score: f64,
    pub split_count: usize,
}

impl<S> BeamCandidate<S> {
    pub fn normalized(&self) -> f64 {
        if self.split_count == 0 {
            0.0
        } else {
            self.score / self.split_count as f64
        }
    }

    pub fn is_finished(&self) -> bool {
        self.pending.is_empty()
    }
}

/// One `(split, label)` option for a span.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairScore {
    pub score: f64,
    pub split: usize,
    pub label: usize,
}

/// Picks one entry from each per-span list.
#[derive(Clone, Debug, PartialEq)]
pub struct Combination {
    pub score: f64,
    pub picks: Vec<usize>,
}

fn tie_order(a: &[PairScore], b: &[PairScore]) -> Ordering {
    a.iter()
        .map(|p| p.split)
        .cmp(b.iter().map(|p| p.split))
        .then_with(|| a.iter().map(|p| p.label).cmp(b.iter().map(|p| p.label)))
}

/// The `k` best ways to pick one pair per span, scored `base + Σ pair`
/// (added left to right); ties go to the smaller split sequence, then label sequence.
pub fn combine_within_candidate(base: f64, lists: &[Vec<PairScore>], k: usize) -> Vec<Combination> {
    let mut partial: Vec<(f64, Vec<usize>, Vec<PairScore>)> = vec![(base, Vec::new(), Vec::new())];
    for list in lists {
        let mut next = Vec::with_capacity(partial.len() * list.len());
        for (score, picks, items) in &partial {
            for (i, p) in list.iter().enumerate() {
                let mut picks = picks.clone();
                picks.push(i);
                let mut items = items.clone();
                items.push(*p);
                next.push((score + p.score, picks, items));
            }
        }
        next.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| tie_order(&a.2, &b.2)));
        next.truncate(k.max(1));
        partial = next;
    }
    partial.into_iter().map(|(score, picks, _)| Combination { score, picks }).collect()
}

fn candidate_order<S>(a: &BeamCandidate<S>, b: &BeamCandidate<S>) -> Ordering {
    b.normalized()
        .total_cmp(&a.normalized())
        .then_with(|| a.splits.iter().map(|s| s.split).cmp(b.splits.iter().map(|s| s.split)))
        .then_with(|| a.splits.iter().map(|s| s.label).cmp(b.splits.iter().map(|s| s.label)))
}

fn expand<S: SpanScorer>(
    scorer: &mut S,
    cand: &BeamCandidate<S::State>,
    k: usize,
) -> Result<Vec<BeamCandidate<S::State>>, Error> {
    let mut h = cand.state.clone();
    let mut lists = Vec::with_capacity(cand.pending.len());
    let mut options: Vec<Vec<ScoredSplit>> = Vec::with_capacity(cand.pending.len());
    for &span in &cand.pending {
        let (next, split_lp) = scorer.advance(&h, span)?;
        h = next;
        let label_lps = (span.start..span.end).map(|s| scorer.label_log_probs(span, s)).collect::<Result<Vec<_>, _>>()?;
        // labels never change the span set or the decoder state, so only
        // the best label of each split can lead to a best candidate
        let mut seen = vec![false; split_lp.len()];
        let mut ranked: Vec<_> = ranked_pairs(span, &split_lp, &label_lps)
            .into_iter()
            .filter(|(_, s)| !std::mem::replace(&mut seen[s.split - span.start], true))
            .collect();
        ranked.truncate(k);
        lists.push(ranked.iter().map(|(score, s)| PairScore { score: *score, split: s.split, label: s.label }).collect());
        options.push(ranked.into_iter().map(|(_, s)| s).collect());
    }
    let combos = combine_within_candidate(cand.score, &lists, k);
    Ok(combos
        .into_iter()
        .map(|c| {
            let mut splits = cand.splits.clone();
            let mut pending = Vec::new();
            for (span_idx, &pick) in c.picks.iter().enumerate() {
                let chosen = options[span_idx][pick].clone();
                let (left, right) = chosen.span.split_at(chosen.split);
                pending.extend([left, right].into_iter().filter(Span::splittable));
                splits.push(chosen);
            }
            BeamCandidate {
                splits,
                pending,
                state: h.clone(),
                score: c.score,
                split_count: cand.split_count + cand.pending.len(),
            }
        })
        .collect())
}

/// Layer-wise beam search with beam size `k`.
pub fn parse_beam<S: SpanScorer>(scorer: &mut S, k: usize) -> Result<ParseResult, Error> {
    let k = k.max(1);
    let m = scorer.num_edus();
    let state = scorer.initial_state()?;
    let pending = if m >= 2 { vec![Span::new(1, m)] } else { Vec::new() };
    let mut beam = vec![BeamCandidate { splits: Vec::new(), pending, state, score: 0.0, split_count: 0 }];
    while beam.iter().any(|c| !c.is_finished()) {
        let mut pool = Vec::new();
        for cand in &beam {
            if cand.is_finished() {
                pool.push(cand.clone());
            } else {
                pool.extend(expand(scorer, cand, k)?);
            }
        }
        pool.sort_by(candidate_order);
        pool.truncate(k);
        beam = pool;
    }
    let best = beam.into_iter().next().expect("beam is never empty");
    assemble(scorer, m, best.splits, best.score)
}

/// Every binary bracketing of `[1,m]`; labels are placeholders.
pub fn enumerate_structures(m: usize) -> Vec<DiscourseTree> {
    fn build(i: usize, j: usize) -> Vec<DiscourseTree> {
        if i == j {
            return vec![DiscourseTree::Leaf(i)];
        }
        let mut out = Vec::new();
        for k in i..j {
            for l in build(i, k) {
                for r in build(k + 1, j) {
                    out.push(DiscourseTree::node(Nuclearity::NN, "?", l.clone(), r));
                }
            }
        }
        out
    }
    build(1, m.max(1))
}

/// Best tree by normalized score over all bracketings, each replayed
/// breadth-first with the best label per node.
pub fn oracle_best<S: SpanScorer>(scorer: &mut S) -> Result<ParseResult, Error> {
    let m = scorer.num_edus();
    if m > ORACLE_MAX_EDUS {
        return Err(Error::OracleTooLarge { m, limit: ORACLE_MAX_EDUS });
    }
    let mut best: Option<ParseResult> = None;
    for tree in enumerate_structures(m) {
        let r = replay_forced(scorer, &tree)?;
        let better = match &best {
            None => true,
            Some(b) => r
                .normalized
                .total_cmp(&b.normalized)
                .then_with(|| b.split_sequence().cmp(&r.split_sequence()))
                .then_with(|| b.label_sequence().cmp(&r.label_sequence()))
                .is_gt(),
        };
        if better {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one tree"))
}
