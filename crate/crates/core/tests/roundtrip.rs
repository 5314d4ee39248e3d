use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rstsplit::io::{
    parse_corpus, parse_trees, read_embeddings, tree_from_json, tree_to_json, write_corpus, write_embeddings,
    write_trees, CorpusRecord, EmbeddingFile, TreeRecord,
};
use rstsplit::{generate_synthetic, DiscourseTree, EmbeddingMode, LabelSpace, ModelConfig, Nuclearity, ParserModel};

fn random_tree(rng: &mut ChaCha8Rng, i: usize, j: usize) -> DiscourseTree {
    if i == j {
        return DiscourseTree::leaf(i);
    }
    let k = rng.gen_range(i..j);
    let nuc = [Nuclearity::NN, Nuclearity::NS, Nuclearity::SN][rng.gen_range(0..3)];
    let rel = ["Elaboration", "Same-Unit", "Topic-Change", "Cause"][rng.gen_range(0..4)];
    let left = random_tree(rng, i, k);
    let right = random_tree(rng, k + 1, j);
    DiscourseTree::node(nuc, rel, left, right)
}

#[test]
fn corpus_records_round_trip() {
    let mut records = generate_synthetic(10, 2, 12, 40, 21).unwrap();
    records[3].gold_tree = None;
    let mut buf = Vec::new();
    write_corpus(&mut buf, &records).unwrap();
    let back = parse_corpus(buf.as_slice()).unwrap();
    assert_eq!(back, records);
}

#[test]
fn trees_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut records = Vec::new();
    for i in 0..100 {
        let m = rng.gen_range(1..=15);
        let tree = random_tree(&mut rng, 1, m);
        assert_eq!(tree_from_json(&tree_to_json(&tree)).unwrap(), tree);
        let edus = (i % 2 == 0).then(|| (1..=m).map(|e| format!("edu {e}")).collect());
        records.push(TreeRecord { doc_id: format!("t{i}"), tree, edus });
    }
    let mut buf = Vec::new();
    write_trees(&mut buf, &records).unwrap();
    assert_eq!(parse_trees(buf.as_slice()).unwrap(), records);
}

#[test]
fn embeddings_round_trip_bit_exact() {
    let mut file = EmbeddingFile::new(3);
    file.push("a", 2, vec![0.1, -2.5, 3.0e-8, f32::MAX, f32::MIN_POSITIVE, -0.0]).unwrap();
    file.push("b", 1, vec![1.0, 2.0, 3.0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.emb1");
    write_embeddings(std::fs::File::create(&path).unwrap(), &file).unwrap();
    let back = read_embeddings(&path).unwrap();
    assert_eq!(back.dim(), 3);
    for (x, y) in file.records().iter().zip(back.records()) {
        assert_eq!(x.doc_id, y.doc_id);
        assert_eq!(x.n_tokens, y.n_tokens);
        let bits = |v: &[f32]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&x.values), bits(&y.values));
    }
    assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes());
}

#[test]
fn checkpoint_round_trip_preserves_parses() {
    let corpus = generate_synthetic(5, 2, 8, 20, 8).unwrap();
    let labels = LabelSpace::observed(corpus.iter().filter_map(|r| r.gold_tree.as_ref())).unwrap();
    let config = ModelConfig { token_dim: 6, hidden: 5, classifier_dim: 7, hash_buckets: 64, ..Default::default() };
    let model = ParserModel::new(config, labels, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path, &model.config_hash()).unwrap();
    let (loaded, hash) = ParserModel::load(&path).unwrap();
    assert_eq!(hash, model.config_hash());
    assert_eq!(loaded.config_hash(), model.config_hash());
    for r in &corpus {
        let (a, b) = (model.parse(&r.document, 3).unwrap(), loaded.parse(&r.document, 3).unwrap());
        assert_eq!(a.tree, b.tree);
        // parameters are stored at float32
        assert!((a.score - b.score).abs() < 1e-4);
    }
}

fn precomputed_file(corpus: &[CorpusRecord], dim: usize) -> EmbeddingFile {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut file = EmbeddingFile::new(dim);
    for r in corpus {
        let n = r.document.tokens.len();
        file.push(r.document.doc_id.clone(), n, (0..n * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap();
    }
    file
}

#[test]
fn precomputed_embeddings_feed_the_encoder() {
    let corpus = generate_synthetic(3, 2, 5, 20, 2).unwrap();
    let labels = LabelSpace::observed(corpus.iter().filter_map(|r| r.gold_tree.as_ref())).unwrap();
    let config = ModelConfig { token_dim: 4, hidden: 3, classifier_dim: 5, embeddings: EmbeddingMode::Precomputed, ..Default::default() };
    let file = Arc::new(precomputed_file(&corpus, 4));
    let mut model = ParserModel::new(config, labels, 1).unwrap();
    model.attach_embeddings(file).unwrap();
    for r in &corpus {
        model.parse(&r.document, 1).unwrap();
    }
    let other = generate_synthetic(1, 3, 3, 20, 99).unwrap();
    let mut renamed = other[0].document.clone();
    renamed.doc_id = "absent".into();
    assert!(model.parse(&renamed, 1).is_err());
}
