use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use rstsplit::eval::{score, TreePair};
use rstsplit::train::full_loss;
use rstsplit::{parse_beam, parse_greedy};
use rstsplit_bench::{corpus, model};

fn decoding(c: &mut Criterion) {
    let records = corpus(6, 12, 1);
    let model = model(&corpus(40, 8, 2), 3);
    let mut group = c.benchmark_group("decode");
    for m in [4usize, 8, 12] {
        let doc = corpus(1, m, 10 + m as u64).remove(0).document;
        group.bench_with_input(BenchmarkId::new("greedy", m), &doc, |b, doc| {
            b.iter(|| parse_greedy(&mut model.scorer(doc).unwrap()).unwrap())
        });
        for k in [2usize, 5, 10] {
            group.bench_with_input(BenchmarkId::new(format!("beam{k}"), m), &doc, |b, doc| {
                b.iter(|| parse_beam(&mut model.scorer(doc).unwrap(), k).unwrap())
            });
        }
    }
    group.finish();
    c.bench_function("encode_12_edus", |b| b.iter(|| model.scorer(black_box(&records[0].document)).unwrap()));
}

fn training(c: &mut Criterion) {
    let records = corpus(1, 8, 4);
    let model = model(&corpus(40, 8, 2), 3);
    let r = &records[0];
    c.bench_function("full_loss_backward_8_edus", |b| {
        b.iter(|| full_loss(&model, &r.document, r.gold_tree.as_ref().unwrap(), 5e-4).unwrap())
    });
}

fn evaluation(c: &mut Criterion) {
    let gold = corpus(200, 10, 5);
    let pred = corpus(200, 10, 6);
    let pairs: Vec<_> = gold
        .iter()
        .zip(&pred)
        .map(|(g, p)| TreePair {
            doc_id: &g.document.doc_id,
            pred: p.gold_tree.as_ref().unwrap(),
            gold: g.gold_tree.as_ref().unwrap(),
        })
        .collect();
    c.bench_function("score_200_pairs", |b| b.iter(|| score(black_box(&pairs)).unwrap()));
}

criterion_group!(benches, decoding, training, evaluation);
criterion_main!(benches);
