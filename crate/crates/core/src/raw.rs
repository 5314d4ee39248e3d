//! Possibly non-binary constituency trees and their binarization.

use crate::error::TreeError;
use crate::tree::{validate_tree, DiscourseTree, InternalNode, Nuclearity, RelationClass, Role, Span};

/// Treebank-style tree whose nodes may have any number of children.
///
/// `L` is the relation label type: fine-grained strings straight from a
/// `.dis` file, or [`RelationClass`] after mapping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RawTree<L> {
    Leaf(usize),
    Node(Vec<RawChild<L>>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawChild<L> {
    pub role: Role,
    /// Relation to the parent; `None` for a nucleus of a mononuclear relation (`span`).
    pub relation: Option<L>,
    pub tree: RawTree<L>,
}

impl<L> RawTree<L> {
    pub fn span(&self) -> Span {
        match self {
            RawTree::Leaf(k) => Span::new(*k, *k),
            RawTree::Node(children) => {
                let first = children.first().map(|c| c.tree.span().start).unwrap_or(0);
                let last = children.last().map(|c| c.tree.span().end).unwrap_or(0);
                Span::new(first, last)
            }
        }
    }

    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<usize>) {
        match self {
            RawTree::Leaf(k) => out.push(*k),
            RawTree::Node(cs) => cs.iter().for_each(|c| c.tree.collect(out)),
        }
    }

    /// Spans of all nodes with two or more children (plus leaves excluded).
    pub fn constituent_spans(&self) -> Vec<Span> {
        let mut out = Vec::new();
        self.collect_spans(&mut out);
        out
    }

    fn collect_spans(&self, out: &mut Vec<Span>) {
        if let RawTree::Node(cs) = self {
            if cs.len() > 1 {
                out.push(self.span());
            }
            cs.iter().for_each(|c| c.tree.collect_spans(out));
        }
    }

    /// Rewrites relation labels, failing on the first label `f` rejects.
    pub fn try_map<M, E>(&self, f: &mut impl FnMut(&L) -> Result<M, E>) -> Result<RawTree<M>, E> {
        Ok(match self {
            RawTree::Leaf(k) => RawTree::Leaf(*k),
            RawTree::Node(cs) => RawTree::Node(
                cs.iter()
                    .map(|c| {
                        Ok(RawChild {
                            role: c.role,
                            relation: c.relation.as_ref().map(&mut *f).transpose()?,
                            tree: c.tree.try_map(f)?,
                        })
                    })
                    .collect::<Result<_, E>>()?,
            ),
        })
    }
}

impl From<&DiscourseTree> for RawTree<RelationClass> {
    fn from(tree: &DiscourseTree) -> Self {
        match tree {
            DiscourseTree::Leaf(k) => RawTree::Leaf(*k),
            DiscourseTree::Internal(n) => {
                let (lrole, rrole) = n.nuclearity.roles();
                let rel = |role: Role| match (n.nuclearity, role) {
                    (Nuclearity::NN, _) | (_, Role::Satellite) => Some(n.relation.clone()),
                    _ => None,
                };
                RawTree::Node(vec![
                    RawChild { role: lrole, relation: rel(lrole), tree: RawTree::from(&n.left) },
                    RawChild { role: rrole, relation: rel(rrole), tree: RawTree::from(&n.right) },
                ])
            }
        }
    }
}

/// Converts a raw tree into a binary [`DiscourseTree`].
///
/// Children are grouped right-branching: `c1 (c2 .. ck)`. When the first
/// child is the only nucleus, satellites are peeled off the right end
/// instead, `(c1 .. ck-1) ck`, so that every group keeps a nucleus. A k-ary
/// multinuclear node therefore becomes a right-leaning chain of NN nodes
/// carrying the same relation. Single-child nodes collapse into their child.
pub fn binarize(raw: &RawTree<RelationClass>) -> Result<DiscourseTree, TreeError> {
    let tree = binarize_tree(raw)?;
    let m = tree.num_edus();
    validate_tree(&tree, m)?;
    Ok(tree)
}

fn binarize_tree(raw: &RawTree<RelationClass>) -> Result<DiscourseTree, TreeError> {
    match raw {
        RawTree::Leaf(k) => Ok(DiscourseTree::Leaf(*k)),
        RawTree::Node(children) => {
            let span = raw.span();
            if children.is_empty() {
                return Err(TreeError::EmptyNode { span });
            }
            if children.len() > 1 && !children.iter().any(|c| c.role == Role::Nucleus) {
                return Err(TreeError::NoNucleus { span });
            }
            Ok(binarize_group(children, span)?.0)
        }
    }
}

/// Returns the binarized group, its role towards the enclosing node, and
/// the relation it carries (the first nucleus' relation for nucleus groups).
fn binarize_group(
    children: &[RawChild<RelationClass>],
    parent: Span,
) -> Result<(DiscourseTree, Role, Option<RelationClass>), TreeError> {
    if let [only] = children {
        return Ok((binarize_tree(&only.tree)?, only.role, only.relation.clone()));
    }
    let cut = if children[1..].iter().any(|c| c.role == Role::Nucleus) { 1 } else { children.len() - 1 };
    let (left, right) = children.split_at(cut);
    let (ltree, lrole, lrel) = binarize_group(left, parent)?;
    let (rtree, rrole, rrel) = binarize_group(right, parent)?;
    let nuclearity = Nuclearity::from_roles(lrole, rrole).ok_or(TreeError::NoNucleus { span: parent })?;
    let (relation, carrier) = match nuclearity {
        Nuclearity::NN => (lrel.clone().or_else(|| rrel.clone()), &ltree),
        Nuclearity::NS => (rrel.clone(), &rtree),
        Nuclearity::SN => (lrel.clone(), &ltree),
    };
    let relation = relation.ok_or(TreeError::MissingRelation { span: parent, child: carrier.span() })?;
    let span = Span::new(ltree.span().start, rtree.span().end);
    let split = ltree.span().end;
    let group_role = if lrole == Role::Nucleus || rrole == Role::Nucleus { Role::Nucleus } else { Role::Satellite };
    let group_rel = match lrole {
        Role::Nucleus => lrel,
        Role::Satellite => rrel,
    };
    let node = DiscourseTree::Internal(Box::new(InternalNode {
        span,
        split,
        nuclearity,
        relation,
        left: ltree,
        right: rtree,
    }));
    Ok((node, group_role, group_rel))
}
