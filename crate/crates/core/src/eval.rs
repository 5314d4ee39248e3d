//! Micro-averaged F1 under Original Parseval and RST-Parseval.
//!
//! | convention | constituents | S | NS / R / Full |
//! |---|---|---|---|
//! | Original | internal nodes, root included | span | span + NS/SN/NN, relation, both |
//! | RST-Parseval | all nodes, leaves included | every node | non-root nodes; role N/S, relation to parent |
//!
//! Under RST-Parseval a mononuclear node's nucleus child carries `span`
//! and its satellite carries the relation; both children of an NN node
//! carry the relation. A cell whose predicted and gold counts are both
//! zero scores 1.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, EvalError};
use crate::io::{CorpusRecord, TreeRecord};
use crate::tree::{DiscourseTree, Nuclearity, Role, Span};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
    pub f1: f64,
}

impl Cell {
    fn new(matched: usize, predicted: usize, gold: usize) -> Self {
        let f1 = if predicted + gold == 0 { 1.0 } else { 2.0 * matched as f64 / (predicted + gold) as f64 };
        Cell { matched, predicted, gold, f1 }
    }

    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            1.0
        } else {
            self.matched as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            1.0
        } else {
            self.matched as f64 / self.gold as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConventionScores {
    pub s: Cell,
    pub ns: Cell,
    pub r: Cell,
    pub full: Cell,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    Rst,
    Original,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub documents: usize,
    pub rst_parseval: ConventionScores,
    pub original_parseval: ConventionScores,
    /// Over documents with at least two EDUs; `None` if there are none.
    pub top_split_accuracy: Option<f64>,
}

/// A prediction paired with its gold tree.
#[derive(Clone, Copy, Debug)]
pub struct TreePair<'a> {
    pub doc_id: &'a str,
    pub pred: &'a DiscourseTree,
    pub gold: &'a DiscourseTree,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Labeled {
    nuclearity: String,
    relation: String,
}

fn check(pair: &TreePair) -> Result<(), EvalError> {
    if pair.pred.num_edus() != pair.gold.num_edus() {
        return Err(EvalError::EduMismatch {
            doc_id: pair.doc_id.to_string(),
            pred: pair.pred.num_edus(),
            gold: pair.gold.num_edus(),
        });
    }
    Ok(())
}

fn original_constituents(tree: &DiscourseTree) -> HashMap<Span, Labeled> {
    tree.internal_nodes_bfs()
        .into_iter()
        .map(|n| (n.span, Labeled { nuclearity: n.nuclearity.as_str().into(), relation: n.relation.as_str().into() }))
        .collect()
}

/// Every node's span with its role and relation toward its parent (`None` for the root).
fn rst_constituents(tree: &DiscourseTree) -> HashMap<Span, Option<Labeled>> {
    fn walk(t: &DiscourseTree, label: Option<Labeled>, out: &mut HashMap<Span, Option<Labeled>>) {
        out.insert(t.span(), label);
        if let DiscourseTree::Internal(n) = t {
            let (lr, rr) = n.nuclearity.roles();
            let side = |role: Role| {
                let relation = match (role, n.nuclearity) {
                    (Role::Nucleus, Nuclearity::NS | Nuclearity::SN) => "span".to_string(),
                    _ => n.relation.as_str().to_string(),
                };
                let nuclearity = if role == Role::Nucleus { "N" } else { "S" }.to_string();
                Some(Labeled { nuclearity, relation })
            };
            walk(&n.left, side(lr), out);
            walk(&n.right, side(rr), out);
        }
    }
    let mut out = HashMap::new();
    walk(tree, None, &mut out);
    out
}

#[derive(Default)]
struct Tally {
    counts: [(usize, usize, usize); 4],
}

impl Tally {
    fn add(&mut self, cell: usize, matched: usize, predicted: usize, gold: usize) {
        let c = &mut self.counts[cell];
        c.0 += matched;
        c.1 += predicted;
        c.2 += gold;
    }

    fn finish(&self) -> ConventionScores {
        let cell = |i: usize| Cell::new(self.counts[i].0, self.counts[i].1, self.counts[i].2);
        ConventionScores { s: cell(0), ns: cell(1), r: cell(2), full: cell(3) }
    }
}

fn labeled_cells(tally: &mut Tally, pred: &HashMap<Span, Labeled>, gold: &HashMap<Span, Labeled>) {
    let (mut ns, mut r, mut full) = (0, 0, 0);
    for (span, p) in pred {
        if let Some(g) = gold.get(span) {
            let (n_ok, r_ok) = (p.nuclearity == g.nuclearity, p.relation == g.relation);
            ns += n_ok as usize;
            r += r_ok as usize;
            full += (n_ok && r_ok) as usize;
        }
    }
    tally.add(1, ns, pred.len(), gold.len());
    tally.add(2, r, pred.len(), gold.len());
    tally.add(3, full, pred.len(), gold.len());
}

pub fn score_original(pairs: &[TreePair]) -> Result<ConventionScores, EvalError> {
    let mut tally = Tally::default();
    for pair in pairs {
        check(pair)?;
        let (p, g) = (original_constituents(pair.pred), original_constituents(pair.gold));
        let spans = p.keys().filter(|s| g.contains_key(s)).count();
        tally.add(0, spans, p.len(), g.len());
        labeled_cells(&mut tally, &p, &g);
    }
    Ok(tally.finish())
}

pub fn score_rst_parseval(pairs: &[TreePair]) -> Result<ConventionScores, EvalError> {
    let mut tally = Tally::default();
    for pair in pairs {
        check(pair)?;
        let (p, g) = (rst_constituents(pair.pred), rst_constituents(pair.gold));
        let spans = p.keys().filter(|s| g.contains_key(s)).count();
        tally.add(0, spans, p.len(), g.len());
        let strip = |m: HashMap<Span, Option<Labeled>>| -> HashMap<Span, Labeled> {
            m.into_iter().filter_map(|(s, l)| l.map(|l| (s, l))).collect()
        };
        labeled_cells(&mut tally, &strip(p), &strip(g));
    }
    Ok(tally.finish())
}

/// Fraction of multi-EDU documents whose root split matches gold.
pub fn top_split_accuracy(pairs: &[TreePair]) -> Result<Option<f64>, EvalError> {
    let mut total = 0usize;
    let mut hits = 0usize;
    for pair in pairs {
        check(pair)?;
        if let (Some(p), Some(g)) = (pair.pred.as_internal(), pair.gold.as_internal()) {
            total += 1;
            hits += (p.split == g.split) as usize;
        }
    }
    Ok((total > 0).then(|| hits as f64 / total as f64))
}

pub fn score(pairs: &[TreePair]) -> Result<ScoreReport, EvalError> {
    Ok(ScoreReport {
        documents: pairs.len(),
        rst_parseval: score_rst_parseval(pairs)?,
        original_parseval: score_original(pairs)?,
        top_split_accuracy: top_split_accuracy(pairs)?,
    })
}

/// Pairs predictions with gold trees by `doc_id`, in gold order.
pub fn align<'a>(pred: &'a [TreeRecord], gold: &'a [CorpusRecord]) -> Result<Vec<TreePair<'a>>, Error> {
    let by_id: HashMap<&str, &TreeRecord> = pred.iter().map(|p| (p.doc_id.as_str(), p)).collect();
    let gold_ids: std::collections::HashSet<&str> = gold.iter().map(|g| g.document.doc_id.as_str()).collect();
    if let Some(p) = pred.iter().find(|p| !gold_ids.contains(p.doc_id.as_str())) {
        return Err(EvalError::UnknownDocument(p.doc_id.clone()).into());
    }
    gold.iter()
        .map(|g| {
            let doc_id = g.document.doc_id.as_str();
            let gold = g.gold_tree.as_ref().ok_or_else(|| EvalError::MissingGold(doc_id.to_string()))?;
            let pred = by_id.get(doc_id).ok_or_else(|| EvalError::MissingPrediction(doc_id.to_string()))?;
            Ok(TreePair { doc_id, pred: &pred.tree, gold })
        })
        .collect()
}

/// Aligned text table, scores ×100 to one decimal.
pub fn format_table(report: &ScoreReport, convention: Convention) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>6} {:>6} {:>6} {:>6}", "convention", "S", "NS", "R", "Full");
    let mut row = |name: &str, c: &ConventionScores| {
        let _ = writeln!(
            out,
            "{:<14} {:>6.1} {:>6.1} {:>6.1} {:>6.1}",
            name,
            100.0 * c.s.f1,
            100.0 * c.ns.f1,
            100.0 * c.r.f1,
            100.0 * c.full.f1
        );
    };
    if matches!(convention, Convention::Rst | Convention::Both) {
        row("RST-Parseval", &report.rst_parseval);
    }
    if matches!(convention, Convention::Original | Convention::Both) {
        row("Original", &report.original_parseval);
    }
    match report.top_split_accuracy {
        Some(a) => {
            let _ = writeln!(out, "top-layer split accuracy {:.1} over {} documents", 100.0 * a, report.documents);
        }
        None => {
            let _ = writeln!(out, "top-layer split accuracy n/a over {} documents", report.documents);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Nuclearity as N;
    use crate::DiscourseTree as T;

    fn sample_tree() -> T {
        T::node(
            N::NS,
            "Elaboration",
            T::node(N::NS, "Attribution", T::node(N::NN, "Joint", T::leaf(1), T::leaf(2)), T::leaf(3)),
            T::node(N::NS, "Attribution", T::leaf(4), T::leaf(5)),
        )
    }

    /// Root split moved to 2: spans {1:5, 1:2, 3:5, 4:5}; labels of shared spans kept.
    fn resplit() -> T {
        T::node(
            N::NS,
            "Elaboration",
            T::node(N::NN, "Joint", T::leaf(1), T::leaf(2)),
            T::node(N::SN, "Background", T::leaf(3), T::node(N::NS, "Attribution", T::leaf(4), T::leaf(5))),
        )
    }

    fn pair<'a>(p: &'a T, g: &'a T) -> TreePair<'a> {
        TreePair { doc_id: "d", pred: p, gold: g }
    }

    #[test]
    fn sample_tree_perturbation() {
        let (g, p) = (sample_tree(), resplit());
        let o = score_original(&[pair(&p, &g)]).unwrap();
        assert_eq!(o.s.f1, 0.75);
        // shared spans 1:5, 1:2, 4:5 all keep their labels
        assert_eq!((o.ns.matched, o.r.matched, o.full.matched), (3, 3, 3));
        let r = score_rst_parseval(&[pair(&p, &g)]).unwrap();
        assert_eq!((r.s.matched, r.s.predicted, r.s.gold), (8, 9, 9));
        assert!((r.s.f1 - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn identical_trees_score_one() {
        let g = sample_tree();
        let report = score(&[pair(&g, &g), pair(&T::leaf(1), &T::leaf(1))]).unwrap();
        for c in [report.original_parseval, report.rst_parseval] {
            for cell in [c.s, c.ns, c.r, c.full] {
                assert_eq!(cell.f1, 1.0);
            }
        }
        assert_eq!(report.top_split_accuracy, Some(1.0));
    }

    #[test]
    fn wrong_label_on_two_edus() {
        let g = T::node(N::NS, "Elaboration", T::leaf(1), T::leaf(2));
        let p = T::node(N::NN, "Joint", T::leaf(1), T::leaf(2));
        let o = score_original(&[pair(&p, &g)]).unwrap();
        assert_eq!((o.s.f1, o.full.f1), (1.0, 0.0));
    }

    #[test]
    fn top_split_counts() {
        let g = T::node(N::NN, "Joint", T::leaf(1), T::node(N::NN, "Joint", T::leaf(2), T::leaf(3)));
        let p = T::node(N::NN, "Joint", T::node(N::NN, "Joint", T::leaf(1), T::leaf(2)), T::leaf(3));
        let mut pairs = vec![pair(&g, &g); 9];
        pairs.extend(vec![pair(&p, &g); 10]);
        assert_eq!(top_split_accuracy(&pairs).unwrap(), Some(9.0 / 19.0));
        assert_eq!(top_split_accuracy(&pairs[9..]).unwrap(), Some(0.0));
        assert_eq!(top_split_accuracy(&[pair(&T::leaf(1), &T::leaf(1))]).unwrap(), None);
    }

    #[test]
    fn mismatched_sizes() {
        let g = sample_tree();
        assert!(matches!(score_original(&[pair(&T::leaf(1), &g)]), Err(EvalError::EduMismatch { pred: 1, gold: 5, .. })));
    }

    #[test]
    fn table_layout() {
        let g = sample_tree();
        let report = score(&[pair(&g, &g)]).unwrap();
        let t = format_table(&report, Convention::Both);
        assert!(t.contains("RST-Parseval    100.0  100.0  100.0  100.0"));
        assert!(t.lines().count() == 4);
    }
}
