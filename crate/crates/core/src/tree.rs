//! Documents, discourse trees and relation labels.
//!
//! EDU indices are 1-based and inclusive (`[i,j]` covers EDUs `i..=j`);
//! token indices are 0-based.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::TreeError;

/// Inclusive 1-based EDU range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    /// Spans of two or more EDUs still need a split.
    pub fn splittable(&self) -> bool {
        self.end > self.start
    }

    /// Left `[i,k]` and right `[k+1,j]` parts for a split after EDU `k`.
    pub fn split_at(&self, k: usize) -> (Span, Span) {
        (Span::new(self.start, k), Span::new(k + 1, self.end))
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Nuclearity {
    NN,
    NS,
    SN,
}

impl Nuclearity {
    pub const ALL: [Nuclearity; 3] = [Nuclearity::NN, Nuclearity::NS, Nuclearity::SN];

    pub fn as_str(&self) -> &'static str {
        match self {
            Nuclearity::NN => "NN",
            Nuclearity::NS => "NS",
            Nuclearity::SN => "SN",
        }
    }

    /// Roles of the (left, right) children.
    pub fn roles(&self) -> (Role, Role) {
        match self {
            Nuclearity::NN => (Role::Nucleus, Role::Nucleus),
            Nuclearity::NS => (Role::Nucleus, Role::Satellite),
            Nuclearity::SN => (Role::Satellite, Role::Nucleus),
        }
    }

    pub fn from_roles(left: Role, right: Role) -> Option<Self> {
        match (left, right) {
            (Role::Nucleus, Role::Nucleus) => Some(Nuclearity::NN),
            (Role::Nucleus, Role::Satellite) => Some(Nuclearity::NS),
            (Role::Satellite, Role::Nucleus) => Some(Nuclearity::SN),
            (Role::Satellite, Role::Satellite) => None,
        }
    }
}

impl fmt::Display for Nuclearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Nuclearity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NN" => Ok(Nuclearity::NN),
            "NS" => Ok(Nuclearity::NS),
            "SN" => Ok(Nuclearity::SN),
            other => Err(format!("unknown nuclearity {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Nucleus,
    Satellite,
}

/// A coarse relation class such as `Elaboration`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationClass(String);

impl RelationClass {
    pub fn new(name: impl Into<String>) -> Self {
        RelationClass(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RelationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Relation paired with the nuclearity attachment; the classifier's output unit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NuclearityRelationLabel {
    pub relation: RelationClass,
    pub nuclearity: Nuclearity,
}

impl fmt::Display for NuclearityRelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.relation, self.nuclearity)
    }
}

const DEFAULT_RELATION_MAP: &str = include_str!("../data/relation_map.tsv");

/// Fine-grained treebank label to relation class table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationMap {
    table: BTreeMap<String, RelationClass>,
}

impl RelationMap {
    /// Parses `fine_label<TAB>class` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TreeError> {
        let mut table: BTreeMap<String, RelationClass> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (fine, class) = match (fields.next(), fields.next(), fields.next()) {
                (Some(f), Some(c), None) if !f.trim().is_empty() && !c.trim().is_empty() => {
                    (f.trim().to_lowercase(), c.trim().to_string())
                }
                _ => {
                    return Err(TreeError::MapSyntax {
                        line: idx + 1,
                        message: "expected `fine_label<TAB>class`".into(),
                    })
                }
            };
            if let Some(prev) = table.get(&fine) {
                if prev.as_str() != class {
                    return Err(TreeError::MapConflict {
                        label: fine,
                        first: prev.to_string(),
                        second: class,
                    });
                }
                continue;
            }
            table.insert(fine, RelationClass::new(class));
        }
        Ok(RelationMap { table })
    }

    /// The 18-class inventory shipped with the crate.
    pub fn default_map() -> Self {
        Self::parse(DEFAULT_RELATION_MAP).expect("bundled relation map is well formed")
    }

    /// Case-insensitive lookup.
    pub fn map(&self, fine_label: &str) -> Result<RelationClass, TreeError> {
        self.table
            .get(&fine_label.trim().to_lowercase())
            .cloned()
            .ok_or_else(|| TreeError::UnmappedLabel(fine_label.to_string()))
    }

    /// Distinct classes in lexicographic order.
    pub fn classes(&self) -> Vec<RelationClass> {
        let mut classes: Vec<RelationClass> = self.table.values().cloned().collect();
        classes.sort();
        classes.dedup();
        classes
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Default for RelationMap {
    fn default() -> Self {
        Self::default_map()
    }
}

/// A tokenized document with gold EDU segmentation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<String>,
    /// Token index of the last token of each EDU.
    pub edu_breaks: Vec<usize>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, tokens: Vec<String>, edu_breaks: Vec<usize>) -> Result<Self, TreeError> {
        let doc = Document { doc_id: doc_id.into(), tokens, edu_breaks };
        doc.check()?;
        Ok(doc)
    }

    pub fn check(&self) -> Result<(), TreeError> {
        let fail = |message: String| TreeError::Document { doc_id: self.doc_id.clone(), message };
        let n = self.tokens.len();
        if self.edu_breaks.is_empty() {
            return Err(fail("edu_breaks is empty".into()));
        }
        if n < self.edu_breaks.len() {
            return Err(fail(format!("{} tokens cannot hold {} EDUs", n, self.edu_breaks.len())));
        }
        if self.edu_breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fail("edu_breaks must be strictly increasing".into()));
        }
        if *self.edu_breaks.last().unwrap() != n - 1 {
            return Err(fail(format!("last edu break must be {} (n-1)", n - 1)));
        }
        Ok(())
    }

    pub fn num_edus(&self) -> usize {
        self.edu_breaks.len()
    }

    /// 0-based token range `[first, last]` of the 1-based EDU `edu`.
    pub fn edu_token_range(&self, edu: usize) -> (usize, usize) {
        let last = self.edu_breaks[edu - 1];
        let first = if edu == 1 { 0 } else { self.edu_breaks[edu - 2] + 1 };
        (first, last)
    }

    pub fn edu_tokens(&self, edu: usize) -> &[String] {
        let (first, last) = self.edu_token_range(edu);
        &self.tokens[first..=last]
    }

    pub fn edu_text(&self, edu: usize) -> String {
        self.edu_tokens(edu).join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InternalNode {
    pub span: Span,
    pub split: usize,
    pub nuclearity: Nuclearity,
    pub relation: RelationClass,
    pub left: DiscourseTree,
    pub right: DiscourseTree,
}

/// Labeled binary tree over EDU spans.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiscourseTree {
    Leaf(usize),
    Internal(Box<InternalNode>),
}

/// One split with its label, as produced by a decoder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSplit {
    pub span: Span,
    pub split: usize,
    pub nuclearity: Nuclearity,
    pub relation: RelationClass,
}

impl DiscourseTree {
    pub fn leaf(edu: usize) -> Self {
        DiscourseTree::Leaf(edu)
    }

    /// Builds an internal node; spans are taken from the children.
    pub fn node(nuclearity: Nuclearity, relation: impl Into<String>, left: DiscourseTree, right: DiscourseTree) -> Self {
        let span = Span::new(left.span().start, right.span().end);
        let split = left.span().end;
        DiscourseTree::Internal(Box::new(InternalNode {
            span,
            split,
            nuclearity,
            relation: RelationClass::new(relation),
            left,
            right,
        }))
    }

    pub fn span(&self) -> Span {
        match self {
            DiscourseTree::Leaf(k) => Span::new(*k, *k),
            DiscourseTree::Internal(node) => node.span,
        }
    }

    pub fn num_edus(&self) -> usize {
        self.span().len()
    }

    pub fn as_internal(&self) -> Option<&InternalNode> {
        match self {
            DiscourseTree::Internal(node) => Some(node),
            DiscourseTree::Leaf(_) => None,
        }
    }

    /// Internal nodes in breadth-first order, left child before right.
    pub fn internal_nodes_bfs(&self) -> Vec<&InternalNode> {
        let mut out = Vec::new();
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(self);
        while let Some(t) = queue.pop_front() {
            if let DiscourseTree::Internal(node) = t {
                out.push(node.as_ref());
                queue.push_back(&node.left);
                queue.push_back(&node.right);
            }
        }
        out
    }

    pub fn internal_count(&self) -> usize {
        match self {
            DiscourseTree::Leaf(_) => 0,
            DiscourseTree::Internal(n) => 1 + n.left.internal_count() + n.right.internal_count(),
        }
    }

    /// Leaf EDU indices, left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            DiscourseTree::Leaf(k) => out.push(*k),
            DiscourseTree::Internal(n) => {
                n.left.collect_leaves(out);
                n.right.collect_leaves(out);
            }
        }
    }

    /// Splits in breadth-first order.
    pub fn split_sequence(&self) -> Vec<usize> {
        self.internal_nodes_bfs().iter().map(|n| n.split).collect()
    }

    /// Reassembles a tree from labeled splits over `[1,m]`.
    pub fn from_splits(m: usize, splits: &[LabeledSplit]) -> Result<Self, TreeError> {
        let by_span: std::collections::HashMap<Span, &LabeledSplit> =
            splits.iter().map(|s| (s.span, s)).collect();
        fn build(
            span: Span,
            by_span: &std::collections::HashMap<Span, &LabeledSplit>,
        ) -> Result<DiscourseTree, TreeError> {
            if !span.splittable() {
                return Ok(DiscourseTree::Leaf(span.start));
            }
            let s = by_span.get(&span).ok_or(TreeError::ChildSpan {
                parent: span,
                child: Span::new(span.start, span.start),
                expected: span,
            })?;
            if s.split >= span.end {
                return Err(TreeError::SplitNotBeforeEnd { span, split: s.split });
            }
            if s.split < span.start {
                return Err(TreeError::SplitBeforeStart { span, split: s.split });
            }
            let (l, r) = span.split_at(s.split);
            Ok(DiscourseTree::Internal(Box::new(InternalNode {
                span,
                split: s.split,
                nuclearity: s.nuclearity,
                relation: s.relation.clone(),
                left: build(l, by_span)?,
                right: build(r, by_span)?,
            })))
        }
        build(Span::new(1, m), &by_span)
    }
}

/// Checks every structural invariant of a tree over `m` EDUs.
pub fn validate_tree(tree: &DiscourseTree, m: usize) -> Result<(), TreeError> {
    let root = tree.span();
    if root != Span::new(1, m) {
        return Err(TreeError::Root { root, m });
    }
    let mut next_leaf = 1;
    validate_node(tree, &mut next_leaf)
}

fn validate_node(tree: &DiscourseTree, next_leaf: &mut usize) -> Result<(), TreeError> {
    match tree {
        DiscourseTree::Leaf(k) => {
            if *k != *next_leaf {
                return Err(TreeError::LeafOrder { expected: *next_leaf, found: *k });
            }
            *next_leaf += 1;
            Ok(())
        }
        DiscourseTree::Internal(node) => {
            let (span, k) = (node.span, node.split);
            if k < span.start {
                return Err(TreeError::SplitBeforeStart { span, split: k });
            }
            if k >= span.end {
                return Err(TreeError::SplitNotBeforeEnd { span, split: k });
            }
            let (l, r) = span.split_at(k);
            if node.left.span() != l {
                return Err(TreeError::ChildSpan { parent: span, child: node.left.span(), expected: l });
            }
            if node.right.span() != r {
                return Err(TreeError::ChildSpan { parent: span, child: node.right.span(), expected: r });
            }
            validate_node(&node.left, next_leaf)?;
            validate_node(&node.right, next_leaf)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_tree() -> DiscourseTree {
        use DiscourseTree as T;
        T::node(
            Nuclearity::NS,
            "Elaboration",
            T::node(
                Nuclearity::NS,
                "Attribution",
                T::node(Nuclearity::NN, "Joint", T::leaf(1), T::leaf(2)),
                T::leaf(3),
            ),
            T::node(Nuclearity::NS, "Attribution", T::leaf(4), T::leaf(5)),
        )
    }

    #[test]
    fn single_leaf_is_valid() {
        assert_eq!(validate_tree(&DiscourseTree::leaf(1), 1), Ok(()));
    }

    #[test]
    fn sample_tree_is_valid() {
        let t = sample_tree();
        assert_eq!(validate_tree(&t, 5), Ok(()));
        assert_eq!(t.internal_count(), 4);
        assert_eq!(t.split_sequence(), vec![3, 2, 4, 1]);
        assert_eq!(t.leaves(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn split_at_end_is_rejected() {
        let bad = DiscourseTree::Internal(Box::new(InternalNode {
            span: Span::new(1, 3),
            split: 3,
            nuclearity: Nuclearity::NS,
            relation: RelationClass::new("Elaboration"),
            left: DiscourseTree::node(Nuclearity::NN, "Joint", DiscourseTree::leaf(1), DiscourseTree::leaf(2)),
            right: DiscourseTree::leaf(3),
        }));
        let err = validate_tree(&bad, 3).unwrap_err();
        assert_eq!(err, TreeError::SplitNotBeforeEnd { span: Span::new(1, 3), split: 3 });
        assert!(err.to_string().contains("split must satisfy k < j"));
    }

    #[test]
    fn wrong_root_and_leaf_order() {
        assert!(matches!(validate_tree(&sample_tree(), 6), Err(TreeError::Root { .. })));
        let swapped = DiscourseTree::Internal(Box::new(InternalNode {
            span: Span::new(1, 2),
            split: 1,
            nuclearity: Nuclearity::NN,
            relation: RelationClass::new("Joint"),
            left: DiscourseTree::leaf(1),
            right: DiscourseTree::leaf(1),
        }));
        assert!(matches!(validate_tree(&swapped, 2), Err(TreeError::ChildSpan { .. })));
    }

    #[test]
    fn from_splits_round_trip() {
        let t = sample_tree();
        let splits: Vec<LabeledSplit> = t
            .internal_nodes_bfs()
            .into_iter()
            .map(|n| LabeledSplit {
                span: n.span,
                split: n.split,
                nuclearity: n.nuclearity,
                relation: n.relation.clone(),
            })
            .collect();
        assert_eq!(DiscourseTree::from_splits(5, &splits).unwrap(), t);
    }

    #[test]
    fn relation_map_lookup() {
        let map = RelationMap::default_map();
        assert_eq!(map.map("elaboration-additional").unwrap().as_str(), "Elaboration");
        assert_eq!(map.map("Contrast").unwrap().as_str(), "Contrast");
        assert_eq!(map.map("ELABORATION-ADDITIONAL-E").unwrap().as_str(), "Elaboration");
        let err = map.map("nonexistent-rel").unwrap_err();
        assert_eq!(err, TreeError::UnmappedLabel("nonexistent-rel".into()));
        assert_eq!(map.classes().len(), 18);
    }

    #[test]
    fn relation_map_rejects_conflicts_and_junk() {
        assert!(matches!(
            RelationMap::parse("a\tX\na\tY\n"),
            Err(TreeError::MapConflict { .. })
        ));
        assert!(matches!(RelationMap::parse("# c\nno-tab-here\n"), Err(TreeError::MapSyntax { line: 2, .. })));
        let ok = RelationMap::parse("# header\n\nfoo\tBar  # trailing\n").unwrap();
        assert_eq!(ok.map("FOO").unwrap().as_str(), "Bar");
    }

    #[test]
    fn document_invariants() {
        let toks = |n: usize| (0..n).map(|i| format!("t{i}")).collect::<Vec<_>>();
        assert!(Document::new("d", toks(3), vec![0, 2]).is_ok());
        assert!(Document::new("d", toks(3), vec![0, 1]).is_err());
        assert!(Document::new("d", toks(3), vec![1, 1, 2]).is_err());
        assert!(Document::new("d", toks(3), vec![]).is_err());
        let d = Document::new("d", toks(5), vec![1, 4]).unwrap();
        assert_eq!(d.edu_token_range(2), (2, 4));
        assert_eq!(d.edu_text(1), "t0 t1");
    }
}
