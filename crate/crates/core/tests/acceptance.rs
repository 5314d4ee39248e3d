//! Acceptance gate: one line per criterion, non-zero exit on any failure.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rstsplit::eval::{score_original, score_rst_parseval, TreePair};
use rstsplit::io::CorpusRecord;
use rstsplit::nn::grad_check;
use rstsplit::synth::SYNTH_LABELS;
use rstsplit::train::{full_f1, full_loss, label_loss, structure_loss, TrainInputs};
use rstsplit::{
    generate_synthetic, oracle_best, parse_beam, parse_greedy, train, validate_tree, Aggregation, BoundaryMode,
    DiscourseTree, Document, FusionOrder, LabelSpace, ModelConfig, Nuclearity, NuclearityRelationLabel, ParserModel,
    RelationClass, TrainConfig,
};

type Check = Result<String, String>;

fn synth_labels() -> LabelSpace {
    LabelSpace::new(
        SYNTH_LABELS.iter().map(|&(r, n)| NuclearityRelationLabel { relation: RelationClass::new(r), nuclearity: n }),
    )
    .unwrap()
}

fn small_config() -> ModelConfig {
    ModelConfig { token_dim: 8, hidden: 6, classifier_dim: 8, hash_buckets: 64, attention_hidden: 4, ..Default::default() }
}

/// Freshly initialized model with every parameter scaled into a sharper regime.
fn random_model(seed: u64) -> ParserModel {
    let mut model = ParserModel::new(small_config(), synth_labels(), seed).unwrap();
    let scale = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd).gen_range(1.0..4.0);
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        model.store.value_mut(id).scale(scale);
    }
    model
}

fn doc_with(m: usize, seed: u64) -> CorpusRecord {
    generate_synthetic(1, m, m, 30, seed).unwrap().remove(0)
}

fn beam_greedy_degeneracy() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..100u64 {
        let m = rng.gen_range(2..=8);
        let model = random_model(1000 + i);
        let doc = doc_with(m, 2000 + i).document;
        let greedy = parse_greedy(&mut model.scorer(&doc).unwrap()).unwrap();
        let beam = parse_beam(&mut model.scorer(&doc).unwrap(), 1).unwrap();
        if greedy != beam || greedy.score.to_bits() != beam.score.to_bits() {
            return Err(format!("pair {i} (m={m}) differs"));
        }
    }
    Ok("100 pairs bit-identical".into())
}

fn oracle_equivalence() -> Check {
    let mut worst = 0.0f64;
    for m in 3..=5usize {
        for i in 0..50u64 {
            let seed = 10_000 * m as u64 + i;
            let model = random_model(seed);
            let doc = doc_with(m, seed).document;
            let oracle = oracle_best(&mut model.scorer(&doc).unwrap()).unwrap();
            let beam = parse_beam(&mut model.scorer(&doc).unwrap(), 64).unwrap();
            let gap = (oracle.normalized - beam.normalized).abs();
            worst = worst.max(gap);
            if gap > 1e-9 || oracle.tree != beam.tree {
                return Err(format!(
                    "m={m} model {i}: oracle {:.12} {:?} vs beam {:.12} {:?}",
                    oracle.normalized,
                    oracle.split_sequence(),
                    beam.normalized,
                    beam.split_sequence()
                ));
            }
        }
    }
    Ok(format!("150 models, max gap {worst:.1e}, trees equal"))
}

fn beam_monotonicity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..100u64 {
        let m = rng.gen_range(3..=8);
        let model = random_model(30_000 + i);
        let doc = doc_with(m, 40_000 + i).document;
        let scores: Vec<f64> =
            [1, 2, 5, 8].iter().map(|&k| parse_beam(&mut model.scorer(&doc).unwrap(), k).unwrap().normalized).collect();
        if scores.windows(2).any(|w| w[1] < w[0]) {
            return Err(format!("instance {i} (m={m}): {scores:?}"));
        }
    }
    Ok("100 instances, 0 violations".into())
}

fn gradient_fidelity() -> Check {
    let record = doc_with(3, 77);
    let gold = record.gold_tree.clone().unwrap();
    let mut worst = 0.0f64;
    let mut groups = 0;
    for aggregation in [Aggregation::Average, Aggregation::SelfAttentive, Aggregation::GruAttentive] {
        let config = ModelConfig { aggregation, hash_buckets: 16, ..small_config() };
        let base = ParserModel::new(config, synth_labels(), 5).unwrap();
        let mut store = base.store.clone();
        let report = grad_check(&mut store, 1e-4, |s| {
            let mut m = base.clone();
            m.store = s.clone();
            full_loss(&m, &record.document, &gold, 0.0005).map(|(l, g)| (l.total, g))
        })
        .map_err(|e| e.to_string())?;
        for g in &report {
            groups += 1;
            if g.max_rel_error >= 1e-4 {
                return Err(format!("{aggregation:?} {}: relative error {:.3e}", g.name, g.max_rel_error));
            }
            worst = worst.max(g.max_rel_error);
        }
    }
    Ok(format!("{groups} parameter groups, max relative error {worst:.2e}"))
}

fn overfit() -> Check {
    let corpus = generate_synthetic(8, 3, 6, 20, 11).unwrap();
    let config = TrainConfig {
        epochs: 200,
        batch_size: 1,
        learning_rate: 0.01,
        weight_decay: 0.0,
        dropout: 0.0,
        seed: 11,
        ..Default::default()
    };
    let out = train(&config, &corpus, TrainInputs::default(), |_| {}).map_err(|e| e.to_string())?;
    let f1 = full_f1(&out.model, &corpus).map_err(|e| e.to_string())?;
    let mut data = 0.0;
    for r in &corpus {
        let gold = r.gold_tree.as_ref().unwrap();
        data += structure_loss(&out.model, &r.document, gold).unwrap() + label_loss(&out.model, &r.document, gold).unwrap();
    }
    let msg = format!("{} epochs, Full F1 {f1}, corpus L_s+L_l {data:.2e}", out.log.len());
    if f1 == 1.0 && data < 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn zero_params(model: &mut ParserModel, prefix: &str) {
    let ids: Vec<_> = model.store.ids().filter(|&id| model.store.get(id).name.starts_with(prefix)).collect();
    assert!(!ids.is_empty(), "no parameters under {prefix}");
    for id in ids {
        model.store.value_mut(id).scale(0.0);
    }
}

fn sample_tree() -> DiscourseTree {
    use DiscourseTree as T;
    T::node(
        Nuclearity::NS,
        "Elaboration",
        T::node(Nuclearity::NS, "Attribution", T::node(Nuclearity::NN, "Joint", T::leaf(1), T::leaf(2)), T::leaf(3)),
        T::node(Nuclearity::NS, "Attribution", T::leaf(4), T::leaf(5)),
    )
}

fn expected_uniform_structure(t: &DiscourseTree) -> f64 {
    match t.as_internal() {
        None => 0.0,
        Some(n) => ((n.span.len() - 1) as f64).ln() + expected_uniform_structure(&n.left) + expected_uniform_structure(&n.right),
    }
}

fn loss_analytics() -> Check {
    let mut cases: Vec<(Document, DiscourseTree)> = Vec::new();
    let tokens: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
    cases.push((Document::new("sample", tokens, vec![1, 3, 5, 7, 9]).unwrap(), sample_tree()));
    for r in generate_synthetic(20, 2, 10, 30, 5).unwrap() {
        cases.push((r.document, r.gold_tree.unwrap()));
    }
    let mut all = synth_labels().labels().to_vec();
    all.extend(LabelSpace::observed([&cases[0].1]).unwrap().labels().iter().cloned());
    let labels = LabelSpace::new(all).unwrap();
    let r_count = labels.len() as f64;
    let mut model = ParserModel::new(small_config(), labels, 8).unwrap();
    zero_params(&mut model, "decoder.");
    zero_params(&mut model, "classifier.");
    let mut worst = 0.0f64;
    for (doc, tree) in &cases {
        let m = doc.num_edus();
        let ls = structure_loss(&model, doc, tree).map_err(|e| e.to_string())?;
        let ll = label_loss(&model, doc, tree).map_err(|e| e.to_string())?;
        let (want_s, want_l) = (expected_uniform_structure(tree), (m - 1) as f64 * r_count.ln());
        let err = (ls - want_s).abs().max((ll - want_l).abs());
        worst = worst.max(err);
        if err > 1e-9 {
            return Err(format!("{}: L_s {ls} vs {want_s}, L_l {ll} vs {want_l}", doc.doc_id));
        }
    }
    let fig = structure_loss(&model, &cases[0].0, &cases[0].1).unwrap();
    Ok(format!("{} trees, max error {worst:.1e}; sample tree L_s = {fig:.12} = ln 4 + ln 2", cases.len()))
}

fn random_tree(rng: &mut ChaCha8Rng, i: usize, j: usize) -> DiscourseTree {
    if i == j {
        return DiscourseTree::leaf(i);
    }
    let k = rng.gen_range(i..j);
    let nuc = [Nuclearity::NN, Nuclearity::NS, Nuclearity::SN][rng.gen_range(0..3)];
    let rel = ["Elaboration", "Joint", "Contrast"][rng.gen_range(0..3)];
    let left = random_tree(rng, i, k);
    let right = random_tree(rng, k + 1, j);
    DiscourseTree::node(nuc, rel, left, right)
}

fn internal_spans(t: &DiscourseTree, out: &mut BTreeSet<(usize, usize)>) {
    if let Some(n) = t.as_internal() {
        out.insert((n.span.start, n.span.end));
        internal_spans(&n.left, out);
        internal_spans(&n.right, out);
    }
}

fn metric_correctness() -> Check {
    use DiscourseTree as T;
    let gold = sample_tree();
    let pred = T::node(
        Nuclearity::NS,
        "Elaboration",
        T::node(Nuclearity::NN, "Joint", T::leaf(1), T::leaf(2)),
        T::node(Nuclearity::SN, "Background", T::leaf(3), T::node(Nuclearity::NS, "Attribution", T::leaf(4), T::leaf(5))),
    );
    let pair = [TreePair { doc_id: "sample", pred: &pred, gold: &gold }];
    let o = score_original(&pair).unwrap();
    let r = score_rst_parseval(&pair).unwrap();
    if o.s.f1 != 0.75 || (r.s.f1 - 8.0 / 9.0).abs() > 1e-15 {
        return Err(format!("sample tree perturbation: Original S {} RST S {}", o.s.f1, r.s.f1));
    }
    let same = [TreePair { doc_id: "sample", pred: &gold, gold: &gold }];
    let (o1, r1) = (score_original(&same).unwrap(), score_rst_parseval(&same).unwrap());
    let all_one = [o1, r1].iter().all(|c| [c.s, c.ns, c.r, c.full].iter().all(|x| x.f1 == 1.0));
    if !all_one {
        return Err("identical trees do not score 1.0 everywhere".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..200 {
        let m = rng.gen_range(2..=12);
        let (p, g) = (random_tree(&mut rng, 1, m), random_tree(&mut rng, 1, m));
        let pair = [TreePair { doc_id: "r", pred: &p, gold: &g }];
        let (o, r) = (score_original(&pair).unwrap(), score_rst_parseval(&pair).unwrap());
        for c in [o, r] {
            if c.full.f1 > c.ns.f1 || c.r.f1 > c.s.f1 {
                return Err(format!("pair {i}: ordering violated {c:?}"));
            }
        }
        let (mut ps, mut gs) = (BTreeSet::new(), BTreeSet::new());
        internal_spans(&p, &mut ps);
        internal_spans(&g, &mut gs);
        let shared = ps.intersection(&gs).count();
        if o.s.matched != shared || r.s.matched != shared + m {
            return Err(format!("pair {i}: span counts {} / {} vs {shared}", o.s.matched, r.s.matched));
        }
    }
    Ok("sample tree 0.75 and 8/9, identity 1.0 on 8 cells, 200 random pairs ordered".into())
}

fn structural_safety() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let docs: Vec<Document> = (0..100u64)
        .map(|i| {
            let m = rng.gen_range(1..=12);
            if m == 1 {
                Document::new(format!("one-{i}"), vec!["x".into(), "y".into()], vec![1]).unwrap()
            } else {
                doc_with(m, 50_000 + i).document
            }
        })
        .collect();
    let mut calls = 0;
    for model_idx in 0..100u64 {
        let model = random_model(60_000 + model_idx);
        for (d, doc) in docs.iter().enumerate() {
            let k = [1, 1, 2, 5][(d + model_idx as usize) % 4];
            let out = model.parse(doc, k).map_err(|e| e.to_string())?;
            let m = doc.num_edus();
            validate_tree(&out.tree, m).map_err(|e| format!("{}: {e}", doc.doc_id))?;
            if out.tree.internal_count() != m - 1 {
                return Err(format!("{}: {} internal nodes", doc.doc_id, out.tree.internal_count()));
            }
            calls += 1;
        }
    }
    Ok(format!("{calls} parses valid"))
}

fn ablation_plumbing() -> Check {
    let corpus = generate_synthetic(6, 2, 6, 20, 13).unwrap();
    let mut runs = 0;
    for boundary in [BoundaryMode::Both, BoundaryMode::Left, BoundaryMode::Right, BoundaryMode::None] {
        for aggregation in [Aggregation::Average, Aggregation::SelfAttentive, Aggregation::GruAttentive] {
            for fusion in [FusionOrder::After, FusionOrder::Before] {
                let config = TrainConfig {
                    epochs: 2,
                    model: ModelConfig { boundary, aggregation, fusion, ..small_config() },
                    ..Default::default()
                };
                let tag = format!("{boundary:?}/{aggregation:?}/{fusion:?}");
                let out = train(&config, &corpus[..4], TrainInputs { validation: &corpus[4..], ..Default::default() }, |_| {})
                    .map_err(|e| format!("{tag}: {e}"))?;
                for r in &corpus {
                    for k in [1, 3] {
                        let p = out.model.parse(&r.document, k).map_err(|e| format!("{tag}: {e}"))?;
                        validate_tree(&p.tree, r.document.num_edus()).map_err(|e| format!("{tag}: {e}"))?;
                    }
                }
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} configurations trained and parsed"))
}

type Criterion = (&'static str, fn() -> Check, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        ("beam/greedy degeneracy", beam_greedy_degeneracy, Duration::from_secs(10)),
        ("oracle equivalence", oracle_equivalence, Duration::from_secs(60)),
        ("beam monotonicity", beam_monotonicity, Duration::from_secs(30)),
        ("gradient fidelity", gradient_fidelity, Duration::from_secs(60)),
        ("overfit reproduction", overfit, Duration::from_secs(300)),
        ("loss analytics", loss_analytics, Duration::from_secs(60)),
        ("metric correctness", metric_correctness, Duration::from_secs(60)),
        ("structural safety", structural_safety, Duration::from_secs(300)),
        ("ablation plumbing", ablation_plumbing, Duration::from_secs(300)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (status, detail) = match result {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over budget {budget:?}")),
            Err(d) => ("FAIL", d),
        };
        failed += (status == "FAIL") as usize;
        println!("[{status}] {name}: {detail} ({:.2}s)", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
