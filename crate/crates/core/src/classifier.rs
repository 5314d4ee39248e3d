//! Bi-affine nuclearity-relation classifier and the label space.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, NnError};
use crate::nn::{Biaffine, Graph, Linear, ParameterStore, Var};
use crate::tree::{DiscourseTree, Nuclearity, NuclearityRelationLabel, RelationMap, Span};
use crate::decoder::span_representation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSpaceMode {
    /// Every relation class crossed with NS/SN/NN.
    Full,
    /// Labels seen in the training trees.
    #[default]
    Observed,
}

/// Ordered nuclearity-relation labels (by relation, then nuclearity).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSpace {
    labels: Vec<NuclearityRelationLabel>,
    index: HashMap<NuclearityRelationLabel, usize>,
}

impl LabelSpace {
    pub fn new(labels: impl IntoIterator<Item = NuclearityRelationLabel>) -> Result<Self, Error> {
        let labels: Vec<_> = labels.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if labels.is_empty() {
            return Err(Error::Config("empty label set".into()));
        }
        let index = labels.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        Ok(LabelSpace { labels, index })
    }

    pub fn full(map: &RelationMap) -> Result<Self, Error> {
        Self::new(map.classes().into_iter().flat_map(|relation| {
            Nuclearity::ALL.into_iter().map(move |nuclearity| NuclearityRelationLabel { relation: relation.clone(), nuclearity })
        }))
    }

    pub fn observed<'a>(trees: impl IntoIterator<Item = &'a DiscourseTree>) -> Result<Self, Error> {
        Self::new(trees.into_iter().flat_map(|t| {
            t.internal_nodes_bfs()
                .into_iter()
                .map(|n| NuclearityRelationLabel { relation: n.relation.clone(), nuclearity: n.nuclearity })
                .collect::<Vec<_>>()
        }))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[NuclearityRelationLabel] {
        &self.labels
    }

    pub fn get(&self, index: usize) -> &NuclearityRelationLabel {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &NuclearityRelationLabel) -> Result<usize, Error> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::Config(format!("gold label {label} is not in the label space")))
    }
}

/// `ê_l = ELU(e_l U_1 + b_1)`, `ê_r = ELU(e_r U_2 + b_2)`, then bi-affine logits.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub u1: Linear,
    pub u2: Linear,
    pub biaffine: Biaffine,
}

impl Classifier {
    pub fn new(store: &mut ParameterStore, input: usize, latent: usize, n_labels: usize) -> Self {
        Classifier {
            u1: Linear::new(store, "classifier.u1", input, latent, true),
            u2: Linear::new(store, "classifier.u2", input, latent, true),
            biaffine: Biaffine::new(store, "classifier.biaffine", latent, n_labels),
        }
    }

    /// Label log-probs for sub-span vectors `e_l`, `e_r`.
    pub fn classify(&self, g: &mut Graph, e_l: Var, e_r: Var) -> Result<Var, NnError> {
        let l = self.u1.forward(g, e_l)?;
        let l = g.elu(l);
        let r = self.u2.forward(g, e_r)?;
        let r = g.elu(r);
        let logits = self.biaffine.forward(g, l, r)?;
        g.log_softmax(logits)
    }

    /// Classifies the split of `span` after EDU `split`, using the means of
    /// `E` over the two sub-spans.
    pub fn classify_split(&self, g: &mut Graph, e: Var, span: Span, split: usize) -> Result<Var, NnError> {
        let (left, right) = span.split_at(split);
        let e_l = span_representation(g, e, left)?;
        let e_r = span_representation(g, e, right)?;
        self.classify(g, e_l, e_r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor2;
    use crate::tree::RelationClass;

    fn label(rel: &str, n: Nuclearity) -> NuclearityRelationLabel {
        NuclearityRelationLabel { relation: RelationClass::new(rel), nuclearity: n }
    }

    #[test]
    fn label_space_modes() {
        let full = LabelSpace::full(&RelationMap::default_map()).unwrap();
        assert_eq!(full.len(), 54);
        let t = DiscourseTree::node(
            Nuclearity::NS,
            "Elaboration",
            DiscourseTree::node(Nuclearity::NN, "Joint", DiscourseTree::leaf(1), DiscourseTree::leaf(2)),
            DiscourseTree::leaf(3),
        );
        let obs = LabelSpace::observed([&t, &t]).unwrap();
        assert_eq!(obs.labels(), &[label("Elaboration", Nuclearity::NS), label("Joint", Nuclearity::NN)]);
        assert!(LabelSpace::new([]).is_err());
        assert!(obs.index_of(&label("Joint", Nuclearity::NS)).unwrap_err().to_string().contains("Joint-NS"));
        let again = LabelSpace::new([label("Joint", Nuclearity::NN), label("Elaboration", Nuclearity::NS)]).unwrap();
        assert_eq!(again, obs);
    }

    #[test]
    fn zero_parameters_give_uniform() {
        let mut store = ParameterStore::new(4);
        let c = Classifier::new(&mut store, 3, 4, 5);
        let ids: Vec<_> = store.ids().collect();
        ids.into_iter().for_each(|id| store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0));
        let mut g = Graph::new(&store);
        let l = g.constant(Tensor2::row_vector(vec![1., 2., 3.]));
        let r = g.constant(Tensor2::row_vector(vec![-1., 0., 3.]));
        let lp = c.classify(&mut g, l, r).unwrap();
        assert!(g.value(lp).data().iter().all(|v| (v.exp() - 0.2).abs() < 1e-12));
    }

    #[test]
    fn rigged_logits() {
        let mut store = ParameterStore::new(4);
        let c = Classifier::new(&mut store, 1, 1, 2);
        let ids: Vec<_> = store.ids().collect();
        ids.into_iter().for_each(|id| store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0));
        store.value_mut(c.biaffine.b).data_mut().copy_from_slice(&[3f64.ln(), 0.0]);
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor2::row_vector(vec![1.0]));
        let lp = c.classify(&mut g, x, x).unwrap();
        let p: Vec<f64> = g.value(lp).data().iter().map(|v| v.exp()).collect();
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_and_label_covariant() {
        let mut store = ParameterStore::new(9);
        let c = Classifier::new(&mut store, 3, 4, 3);
        let probs = |store: &ParameterStore, swap: bool| {
            let mut g = Graph::new(store);
            let a = g.constant(Tensor2::row_vector(vec![0.5, -1., 2.]));
            let b = g.constant(Tensor2::row_vector(vec![1.5, 0.3, -0.7]));
            let lp = if swap { c.classify(&mut g, b, a) } else { c.classify(&mut g, a, b) }.unwrap();
            g.value(lp).data().to_vec()
        };
        let base = probs(&store, false);
        assert_ne!(base, probs(&store, true));
        // swap labels 0 and 2 in every R-indexed slice
        let perm = [2usize, 1, 0];
        let n = 3;
        for id in [c.biaffine.w_l, c.biaffine.w_r, c.biaffine.b, c.biaffine.w_lr] {
            let t = store.value(id).clone();
            let mut out = t.clone();
            for row in 0..t.rows() {
                for col in 0..t.cols() {
                    let (block, r) = (col / n, col % n);
                    out.set(row, block * n + perm[r], t.get(row, col));
                }
            }
            *store.value_mut(id) = out;
        }
        let permuted = probs(&store, false);
        for r in 0..n {
            assert!((permuted[perm[r]] - base[r]).abs() < 1e-12);
        }
    }
}
