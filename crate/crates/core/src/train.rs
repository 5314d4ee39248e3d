//! Teacher-forced joint training of the split and label objectives.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{LabelSpace, LabelSpaceMode};
use crate::error::{Error, EvalError};
use crate::eval::score_original;
use crate::io::{CorpusRecord, EmbeddingFile, TreeRecord};
use crate::model::{ModelConfig, Noise, ParserModel};
use crate::nn::{Adam, Gradients, Graph, ParameterStore, Tensor2, Var};
use crate::tree::{DiscourseTree, Document, NuclearityRelationLabel, RelationMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub label_space: LabelSpaceMode,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 3,
            learning_rate: 0.001,
            weight_decay: 0.0005,
            dropout: 0.5,
            seed: 42,
            shuffle: true,
            label_space: LabelSpaceMode::Observed,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        self.model.validate()
    }
}

/// Per-document (or per-epoch mean) objective terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(rename = "L_s")]
    pub structure: f64,
    #[serde(rename = "L_l")]
    pub label: f64,
    #[serde(rename = "L_reg")]
    pub regularization: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(structure: f64, label: f64, regularization: f64) -> Self {
        LossBreakdown { structure, label, regularization, total: structure + label + regularization }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
    pub val_full_f1: Option<f64>,
}

/// Loss nodes of one teacher-forced pass.
pub struct ForcedLoss {
    pub structure: Var,
    pub label: Var,
}

/// Replays the decoder breadth-first along `gold`, building
/// `L_s = -Σ log P(split)` and `L_l = -Σ log P(label)` in `g`.
pub fn teacher_forced(
    model: &ParserModel,
    g: &mut Graph,
    doc: &Document,
    gold: &DiscourseTree,
    noise: &mut Option<Noise<'_>>,
) -> Result<ForcedLoss, Error> {
    let m = doc.num_edus();
    crate::validate_tree(gold, m)?;
    let enc = model.encode(g, doc, noise)?;
    let mut h = model.decoder.init_state(g, enc.doc_summary)?;
    let mut split_terms = Vec::with_capacity(m.saturating_sub(1));
    let mut label_terms = Vec::with_capacity(m.saturating_sub(1));
    for node in gold.internal_nodes_bfs() {
        let (next, lp) = model.decoder.split_log_probs(g, h, enc.e, node.span, noise)?;
        h = next;
        split_terms.push(g.pick(lp, node.split - node.span.start)?);
        let label = NuclearityRelationLabel { relation: node.relation.clone(), nuclearity: node.nuclearity };
        let idx = model.labels.index_of(&label)?;
        let lr = model.classifier.classify_split(g, enc.e, node.span, node.split)?;
        label_terms.push(g.pick(lr, idx)?);
    }
    let s = g.sum_all(&split_terms)?;
    let l = g.sum_all(&label_terms)?;
    Ok(ForcedLoss { structure: g.scale(s, -1.0), label: g.scale(l, -1.0) })
}

pub fn structure_loss(model: &ParserModel, doc: &Document, gold: &DiscourseTree) -> Result<f64, Error> {
    let mut g = Graph::new(&model.store);
    let loss = teacher_forced(model, &mut g, doc, gold, &mut None)?;
    Ok(g.value(loss.structure).item())
}

pub fn label_loss(model: &ParserModel, doc: &Document, gold: &DiscourseTree) -> Result<f64, Error> {
    let mut g = Graph::new(&model.store);
    let loss = teacher_forced(model, &mut g, doc, gold, &mut None)?;
    Ok(g.value(loss.label).item())
}

/// `λ Σ ‖θ‖²` over trainable parameters, as a graph node.
fn regularizer(g: &mut Graph, store: &ParameterStore, weight_decay: f64) -> Result<Var, Error> {
    let terms: Vec<Var> = store
        .ids()
        .filter(|&id| store.get(id).trainable)
        .map(|id| {
            let p = g.param(id);
            g.sq_sum(p)
        })
        .collect();
    let sum = g.sum_all(&terms)?;
    Ok(g.scale(sum, weight_decay))
}

/// Full objective `L_s + L_l + λ‖θ‖²` for one document and its gradients.
pub fn full_loss(
    model: &ParserModel,
    doc: &Document,
    gold: &DiscourseTree,
    weight_decay: f64,
) -> Result<(LossBreakdown, Gradients), Error> {
    let mut g = Graph::new(&model.store);
    let loss = teacher_forced(model, &mut g, doc, gold, &mut None)?;
    let reg = if weight_decay > 0.0 { regularizer(&mut g, &model.store, weight_decay)? } else { g.constant(Tensor2::scalar(0.0)) };
    let total = g.sum_all(&[loss.structure, loss.label, reg])?;
    let breakdown = LossBreakdown::new(g.value(loss.structure).item(), g.value(loss.label).item(), g.value(reg).item());
    Ok((breakdown, g.backward(total)))
}

/// Data loss `L_s + L_l` and its gradients, with optional dropout.
pub fn data_loss(
    model: &ParserModel,
    doc: &Document,
    gold: &DiscourseTree,
    noise: &mut Option<Noise<'_>>,
) -> Result<(f64, f64, Gradients), Error> {
    let mut g = Graph::new(&model.store);
    let loss = teacher_forced(model, &mut g, doc, gold, noise)?;
    let total = g.add(loss.structure, loss.label)?;
    Ok((g.value(loss.structure).item(), g.value(loss.label).item(), g.backward(total)))
}

/// Mean per-document `L_s`, `L_l` without dropout, plus `λ‖θ‖²`.
pub fn evaluate_loss(model: &ParserModel, records: &[CorpusRecord], weight_decay: f64) -> Result<LossBreakdown, Error> {
    let mut sums = (0.0, 0.0);
    for r in records {
        let gold = r.gold_tree.as_ref().ok_or_else(|| EvalError::MissingGold(r.document.doc_id.clone()))?;
        let mut g = Graph::new(&model.store);
        let loss = teacher_forced(model, &mut g, &r.document, gold, &mut None)?;
        sums.0 += g.value(loss.structure).item();
        sums.1 += g.value(loss.label).item();
    }
    let n = records.len().max(1) as f64;
    Ok(LossBreakdown::new(sums.0 / n, sums.1 / n, weight_decay * model.store.sq_norm()))
}

/// Greedy parses of every record, in input order.
pub fn parse_all(model: &ParserModel, records: &[CorpusRecord], beam: usize) -> Result<Vec<TreeRecord>, Error> {
    records
        .par_iter()
        .map(|r| {
            let out = model.parse(&r.document, beam)?;
            Ok(TreeRecord { doc_id: r.document.doc_id.clone(), tree: out.tree, edus: None })
        })
        .collect()
}

/// Original-Parseval Full F1 of greedy parses against gold.
pub fn full_f1(model: &ParserModel, records: &[CorpusRecord]) -> Result<f64, Error> {
    let preds = parse_all(model, records, 1)?;
    let pairs = crate::eval::align(&preds, records)?;
    Ok(score_original(&pairs)?.full.f1)
}

pub fn build_label_space(mode: LabelSpaceMode, records: &[CorpusRecord], map: &RelationMap) -> Result<LabelSpace, Error> {
    match mode {
        LabelSpaceMode::Full => LabelSpace::full(map),
        LabelSpaceMode::Observed => LabelSpace::observed(records.iter().filter_map(|r| r.gold_tree.as_ref())),
    }
}

pub struct TrainOutcome {
    pub model: ParserModel,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept (0 means the initial parameters).
    pub best_epoch: usize,
}

/// Optional inputs to [`train`].
#[derive(Default)]
pub struct TrainInputs<'a> {
    pub validation: &'a [CorpusRecord],
    pub embeddings: Option<Arc<EmbeddingFile>>,
    pub relation_map: Option<&'a RelationMap>,
}

/// Mini-batch Adam on `L_s + L_l + λ‖θ‖²`. With a validation set the
/// parameters with the best validation Full F1 are returned (later epochs
/// win ties); otherwise the final parameters.
pub fn train(
    config: &TrainConfig,
    records: &[CorpusRecord],
    inputs: TrainInputs<'_>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, Error> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let golds: Vec<&DiscourseTree> = records
        .iter()
        .map(|r| r.gold_tree.as_ref().ok_or_else(|| EvalError::MissingGold(r.document.doc_id.clone()).into()))
        .collect::<Result<_, Error>>()?;
    let default_map;
    let map = match inputs.relation_map {
        Some(m) => m,
        None => {
            default_map = RelationMap::default_map();
            &default_map
        }
    };
    let labels = build_label_space(config.label_space, records, map)?;
    let mut model = ParserModel::new(config.model.clone(), labels, config.seed)?;
    if let Some(file) = inputs.embeddings {
        model.attach_embeddings(file)?;
    }
    let mut adam = Adam::new(&model.store, config.learning_rate, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let validation = inputs.validation;
    let mut best: Option<(f64, usize, ParameterStore)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let (mut sum_s, mut sum_l) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let seeds: Vec<u64> = batch.iter().map(|_| rng.gen()).collect();
            let results: Vec<(f64, f64, Gradients)> = batch
                .par_iter()
                .zip(seeds)
                .map(|(&i, seed)| {
                    let mut doc_rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut noise =
                        (config.dropout > 0.0).then_some(Noise { rate: config.dropout, rng: &mut doc_rng });
                    data_loss(&model, &records[i].document, golds[i], &mut noise)
                })
                .collect::<Result<_, Error>>()?;
            model.store.zero_grad();
            for (&i, (ls, ll, grads)) in batch.iter().zip(&results) {
                if !(ls.is_finite() && ll.is_finite()) {
                    return Err(Error::NonFiniteLoss { epoch, doc_id: records[i].document.doc_id.clone() });
                }
                sum_s += ls;
                sum_l += ll;
                model.store.accumulate(grads, 1.0 / batch.len() as f64);
            }
            adam.step(&mut model.store)?;
        }
        let n = records.len() as f64;
        let loss = LossBreakdown::new(sum_s / n, sum_l / n, config.weight_decay * model.store.sq_norm());
        let val_full_f1 = if validation.is_empty() { None } else { Some(full_f1(&model, validation)?) };
        if let Some(f1) = val_full_f1 {
            if best.as_ref().is_none_or(|b| f1 >= b.0) {
                best = Some((f1, epoch, model.store.clone()));
            }
        }
        let entry = EpochLog { epoch, loss, val_full_f1 };
        on_epoch(&entry);
        log.push(entry);
    }
    let best_epoch = match best {
        Some((_, epoch, store)) => {
            model.store = store;
            epoch
        }
        None => config.epochs,
    };
    Ok(TrainOutcome { model, log, best_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::SpanScorer;
    use crate::nn::grad_check;
    use crate::synth::generate_synthetic;

    fn tiny() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            dropout: 0.0,
            model: ModelConfig { token_dim: 6, hidden: 4, classifier_dim: 5, hash_buckets: 32, attention_hidden: 3, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn single_edu_losses_are_zero() {
        let corpus = generate_synthetic(2, 2, 3, 10, 1).unwrap();
        let labels = LabelSpace::observed(corpus.iter().filter_map(|r| r.gold_tree.as_ref())).unwrap();
        let model = ParserModel::new(tiny().model, labels, 0).unwrap();
        let doc = Document::new("one", vec!["a".into()], vec![0]).unwrap();
        let leaf = DiscourseTree::Leaf(1);
        assert_eq!(structure_loss(&model, &doc, &leaf).unwrap(), 0.0);
        assert_eq!(label_loss(&model, &doc, &leaf).unwrap(), 0.0);
    }

    #[test]
    fn lr_zero_keeps_parameters() {
        let corpus = generate_synthetic(4, 3, 5, 10, 2).unwrap();
        let cfg = TrainConfig { learning_rate: 0.0, ..tiny() };
        let out = train(&cfg, &corpus, TrainInputs::default(), |_| {}).unwrap();
        let fresh = ParserModel::new(cfg.model.clone(), out.model.labels.clone(), cfg.seed).unwrap();
        assert_eq!(out.model.store.iter().map(|p| &p.value).collect::<Vec<_>>(), fresh.store.iter().map(|p| &p.value).collect::<Vec<_>>());
        let totals: Vec<f64> = out.log.iter().map(|e| e.loss.total).collect();
        assert!(totals.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12), "{totals:?}");
    }

    #[test]
    fn heavy_decay_shrinks_norm() {
        let corpus = generate_synthetic(4, 3, 5, 10, 2).unwrap();
        let cfg = TrainConfig { weight_decay: 10.0, learning_rate: 0.01, epochs: 4, ..tiny() };
        let out = train(&cfg, &corpus, TrainInputs::default(), |_| {}).unwrap();
        let regs: Vec<f64> = out.log.iter().map(|e| e.loss.regularization).collect();
        assert!(regs.windows(2).all(|w| w[1] < w[0]), "{regs:?}");
    }

    #[test]
    fn training_is_reproducible() {
        let corpus = generate_synthetic(5, 3, 5, 10, 3).unwrap();
        let cfg = TrainConfig { dropout: 0.3, ..tiny() };
        let a = train(&cfg, &corpus, TrainInputs::default(), |_| {}).unwrap();
        let b = train(&cfg, &corpus, TrainInputs::default(), |_| {}).unwrap();
        assert_eq!(a.log, b.log);
        assert!(a.model.store.iter().zip(b.model.store.iter()).all(|(x, y)| x.value == y.value));
    }

    #[test]
    fn best_validation_checkpoint_is_kept() {
        let corpus = generate_synthetic(6, 3, 5, 10, 4).unwrap();
        let (tr, val) = corpus.split_at(4);
        let cfg = TrainConfig { epochs: 5, learning_rate: 0.01, ..tiny() };
        let out = train(&cfg, tr, TrainInputs { validation: val, ..Default::default() }, |_| {}).unwrap();
        let best = out.log.iter().map(|e| e.val_full_f1.unwrap()).fold(f64::NEG_INFINITY, f64::max);
        let chosen = &out.log[out.best_epoch - 1];
        assert_eq!(chosen.val_full_f1.unwrap(), best);
        assert!(out.log[out.best_epoch..].iter().all(|e| e.val_full_f1.unwrap() < best));
        assert_eq!(full_f1(&out.model, val).unwrap(), best);
    }

    #[test]
    fn unknown_gold_label_is_a_config_error() {
        let corpus = generate_synthetic(2, 3, 4, 10, 5).unwrap();
        let labels = LabelSpace::new([NuclearityRelationLabel {
            relation: crate::RelationClass::new("Summary"),
            nuclearity: crate::Nuclearity::NS,
        }])
        .unwrap();
        let model = ParserModel::new(tiny().model, labels, 0).unwrap();
        let r = &corpus[0];
        let err = structure_loss(&model, &r.document, r.gold_tree.as_ref().unwrap()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn composition_and_gradients() {
        let corpus = generate_synthetic(1, 3, 3, 10, 6).unwrap();
        let r = &corpus[0];
        let labels = LabelSpace::observed([r.gold_tree.as_ref().unwrap()]).unwrap();
        let mut model = ParserModel::new(tiny().model, labels, 9).unwrap();
        let (lb, _) = full_loss(&model, &r.document, r.gold_tree.as_ref().unwrap(), 0.01).unwrap();
        assert_eq!(lb.total, lb.structure + lb.label + lb.regularization);
        assert!((lb.regularization - 0.01 * model.store.sq_norm()).abs() < 1e-12);
        let snapshot = model.clone();
        let gold = r.gold_tree.clone().unwrap();
        let doc = r.document.clone();
        let report = grad_check(&mut model.store, 1e-6, |store| {
            let mut m = snapshot.clone();
            m.store = store.clone();
            full_loss(&m, &doc, &gold, 0.01).map(|(l, g)| (l.total, g))
        })
        .unwrap();
        for group in &report {
            assert!(group.max_rel_error < 1e-4, "{group:?}");
        }
        let _ = model.scorer(&doc).unwrap().num_edus();
    }
}
