use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use rstsplit::eval::{align, format_table, score, ScoreReport};
use rstsplit::io::{
    parse_corpus, parse_dis, parse_trees, read_corpus, read_embeddings, write_corpus, write_trees, CorpusRecord,
    EmbeddingFile, TreeRecord,
};
use rstsplit::nn::grad_check_sampled;
use rstsplit::train::{build_label_space, full_loss, TrainInputs};
use rstsplit::{
    ablate_markers, generate_synthetic, DiscourseTree, EmbeddingMode, Error, ParserModel, RelationMap,
};

use crate::config::RunConfig;
use crate::exit::{CliError, CliResult, ALIGNMENT, DATA, GRADCHECK, IO};
use crate::{ConvertArgs, EvaluateArgs, GenerateArgs, GradcheckArgs, InspectArgs, ParseArgs, TrainArgs};

fn at<T>(path: &Path, r: Result<T, Error>) -> CliResult<T> {
    r.map_err(|e| CliError::from(e).at(path))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::from(e).at(path))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> CliResult<()> {
    w.flush().map_err(|e| CliError::from(e).at(path))
}

fn load_corpus(path: &Path) -> CliResult<Vec<CorpusRecord>> {
    at(path, read_corpus(path))
}

fn load_map(path: Option<&Path>) -> CliResult<RelationMap> {
    match path {
        None => Ok(RelationMap::default_map()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::from(e).at(p))?;
            at(p, RelationMap::parse(&text).map_err(Error::from))
        }
    }
}

fn load_embeddings(path: Option<&Path>, mode: EmbeddingMode) -> CliResult<Option<Arc<EmbeddingFile>>> {
    match (path, mode) {
        (Some(p), EmbeddingMode::Precomputed) => Ok(Some(Arc::new(at(p, read_embeddings(p))?))),
        (None, EmbeddingMode::Precomputed) => {
            Err(CliError::config("model uses precomputed embeddings: pass --embeddings or set paths.embeddings"))
        }
        (Some(_), EmbeddingMode::Trainable) => {
            Err(CliError::config("embeddings file given but the model uses trainable embeddings"))
        }
        (None, EmbeddingMode::Trainable) => Ok(None),
    }
}

/// Sizes the global pool from the config unless `--jobs` already did.
fn apply_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn generate(a: GenerateArgs) -> CliResult<()> {
    let mut records = generate_synthetic(a.docs, a.min_edus, a.max_edus, a.vocab, a.seed)?;
    if a.ablate_markers {
        records = ablate_markers(&records);
    }
    let mut w = create(&a.out)?;
    at(&a.out, write_corpus(&mut w, &records))?;
    finish(&a.out, w)?;
    eprintln!("wrote {} documents to {}", records.len(), a.out.display());
    Ok(())
}

fn doc_id_for(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".dis").unwrap_or(&name);
    stem.strip_suffix(".out").unwrap_or(stem).to_string()
}

pub fn convert_dis(a: ConvertArgs) -> CliResult<()> {
    let map = load_map(a.map.as_deref())?;
    let entries = std::fs::read_dir(&a.input).map_err(|e| CliError::from(e).at(&a.input))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dis"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::new(IO, format!("{}: no .dis files", a.input.display())));
    }
    let mut records = Vec::with_capacity(files.len());
    for path in &files {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).at(path))?;
        let dis = at(path, parse_dis(&text).map_err(Error::from))?;
        let doc_id = doc_id_for(path);
        for w in &dis.warnings {
            eprintln!("warning: {doc_id}: {w}");
        }
        records.push(at(path, dis.to_record(&doc_id, &map))?);
    }
    let mut w = create(&a.out)?;
    at(&a.out, write_corpus(&mut w, &records))?;
    finish(&a.out, w)?;
    eprintln!("converted {} documents to {}", records.len(), a.out.display());
    Ok(())
}

fn apply_train_flags(cfg: &mut RunConfig, a: &TrainArgs) {
    let p = &mut cfg.paths;
    for (slot, flag) in [(&mut p.corpus, &a.corpus), (&mut p.val, &a.val), (&mut p.out, &a.out), (&mut p.embeddings, &a.embeddings)] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    let t = &mut cfg.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.weight_decay {
        t.weight_decay = v;
    }
    if let Some(v) = a.dropout {
        t.dropout = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.label_space {
        t.label_space = v;
    }
    let m = &mut t.model;
    if let Some(v) = a.boundary {
        m.boundary = v;
    }
    if let Some(v) = a.aggregation {
        m.aggregation = v;
    }
    if let Some(v) = a.fusion {
        m.fusion = v;
    }
}

#[derive(Serialize)]
struct LogHeader<'a> {
    config_hash: &'a str,
    config: &'a RunConfig,
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    apply_train_flags(&mut cfg, &a);
    cfg.validate()?;
    apply_jobs(cfg.jobs);
    let corpus_path =
        cfg.paths.corpus.clone().ok_or_else(|| CliError::config("no training corpus: pass --corpus or set paths.corpus"))?;
    let out = cfg.paths.out.clone().ok_or_else(|| CliError::config("no checkpoint path: pass --out or set paths.out"))?;
    let records = load_corpus(&corpus_path)?;
    let validation = match &cfg.paths.val {
        Some(p) => load_corpus(p)?,
        None => Vec::new(),
    };
    let embeddings = load_embeddings(cfg.paths.embeddings.as_deref(), cfg.train.model.embeddings)?;
    if let Some(file) = &embeddings {
        for r in records.iter().chain(&validation) {
            file.lookup(&r.document.doc_id, r.document.tokens.len()).map_err(Error::from)?;
        }
    }
    let map = load_map(cfg.paths.relation_map.as_deref())?;
    let hash = cfg.hash();
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut name = out.clone().into_os_string();
        name.push(".log.jsonl");
        PathBuf::from(name)
    });
    let mut log = create(&log_path)?;
    let header = serde_json::to_string(&LogHeader { config_hash: &hash, config: &cfg }).expect("header serializes");
    writeln!(log, "{header}").map_err(|e| CliError::from(e).at(&log_path))?;
    let mut log_error = None;
    let inputs = TrainInputs { validation: &validation, embeddings, relation_map: Some(&map) };
    let outcome = rstsplit::train(&cfg.train, &records, inputs, |e| {
        let val = e.val_full_f1.map(|f| format!("  val Full {:.1}", 100.0 * f)).unwrap_or_default();
        eprintln!(
            "epoch {:>4}  L_s {:.4}  L_l {:.4}  L_reg {:.4}  total {:.4}{val}",
            e.epoch, e.loss.structure, e.loss.label, e.loss.regularization, e.loss.total
        );
        let line = serde_json::to_string(e).expect("epoch log serializes");
        if let Err(err) = writeln!(log, "{line}") {
            log_error.get_or_insert(err);
        }
    })?;
    if let Some(err) = log_error {
        return Err(CliError::from(err).at(&log_path));
    }
    finish(&log_path, log)?;
    at(&out, outcome.model.save(&out, &hash))?;
    eprintln!("kept epoch {} of {}; wrote {}", outcome.best_epoch, outcome.log.len(), out.display());
    Ok(())
}

pub fn parse(a: ParseArgs) -> CliResult<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    cfg.validate()?;
    apply_jobs(cfg.jobs);
    let beam = a.beam.unwrap_or(cfg.beam_size);
    if beam == 0 {
        return Err(CliError::config("--beam must be at least 1"));
    }
    let (mut model, _) = at(&a.ckpt, ParserModel::load(&a.ckpt))?;
    let emb_path = a.embeddings.clone().or(cfg.paths.embeddings.clone());
    if let Some(file) = load_embeddings(emb_path.as_deref(), model.config.embeddings)? {
        model.attach_embeddings(file)?;
    }
    let records = load_corpus(&a.corpus)?;
    let trees: Vec<TreeRecord> = records
        .par_iter()
        .map(|r| {
            let doc = &r.document;
            let out = model.parse(doc, beam)?;
            let edus = (1..=doc.num_edus()).map(|e| doc.edu_text(e)).collect();
            Ok(TreeRecord { doc_id: doc.doc_id.clone(), tree: out.tree, edus: Some(edus) })
        })
        .collect::<Result<_, Error>>()?;
    let mut w = create(&a.out)?;
    at(&a.out, write_trees(&mut w, &trees))?;
    finish(&a.out, w)?;
    eprintln!("parsed {} documents with beam {beam}; wrote {}", trees.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvaluationOutput<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    #[serde(flatten)]
    report: &'a ScoreReport,
}

pub fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let convention = a.convention.unwrap_or(cfg.convention);
    let pred = at(&a.pred, rstsplit::io::read_trees(&a.pred))?;
    let gold = load_corpus(&a.gold)?;
    let pairs = align(&pred, &gold)?;
    let report = score(&pairs)?;
    print!("{}", format_table(&report, convention));
    if let Some(path) = &a.json {
        let out = EvaluationOutput { config_hash: a.config.is_some().then(|| cfg.hash()), report: &report };
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &out).map_err(|e| CliError::new(IO, e.to_string()).at(path))?;
        writeln!(w).map_err(|e| CliError::from(e).at(path))?;
        finish(path, w)?;
    }
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> CliResult<()> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    cfg.validate()?;
    if !(a.epsilon > 0.0 && a.epsilon.is_finite()) {
        return Err(CliError::config("--epsilon must be positive"));
    }
    let seed = cfg.train.seed;
    let corpus = generate_synthetic(8, 3, 3, 20, seed)?;
    let map = load_map(cfg.paths.relation_map.as_deref())?;
    let labels = build_label_space(cfg.train.label_space, &corpus, &map)?;
    let mut model = ParserModel::new(cfg.train.model.clone(), labels, seed)?;
    let record = &corpus[0];
    if cfg.train.model.embeddings == EmbeddingMode::Precomputed {
        let n = record.document.tokens.len();
        let dim = cfg.train.model.token_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut file = EmbeddingFile::new(dim);
        file.push(record.document.doc_id.clone(), n, (0..n * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .map_err(Error::from)?;
        model.attach_embeddings(Arc::new(file))?;
    }
    let gold = record.gold_tree.as_ref().expect("synthetic records carry trees");
    let weight_decay = cfg.train.weight_decay;
    let mut store = model.store.clone();
    let report = grad_check_sampled(&mut store, a.epsilon, a.max_entries, |s| {
        let mut m = model.clone();
        m.store = s.clone();
        full_loss(&m, &record.document, gold, weight_decay).map(|(l, g)| (l.total, g))
    })?;
    let mut out = String::new();
    let _ = writeln!(out, "{:<28} {:>8} {:>12} {:>12}", "parameter", "checked", "max |grad|", "max rel err");
    let mut failing = 0;
    for g in &report {
        let flag = if g.max_rel_error > a.tolerance { "  FAIL" } else { "" };
        failing += (g.max_rel_error > a.tolerance) as usize;
        let checked = if g.trainable { g.checked.to_string() } else { "frozen".into() };
        let _ = writeln!(out, "{:<28} {:>8} {:>12.3e} {:>12.3e}{flag}", g.name, checked, g.max_abs_analytic, g.max_rel_error);
    }
    print!("{out}");
    if failing > 0 {
        return Err(CliError::new(GRADCHECK, format!("{failing} parameter groups exceed {:e}", a.tolerance)));
    }
    Ok(())
}

fn render(tree: &DiscourseTree, edus: Option<&[String]>, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match tree.as_internal() {
        None => {
            let DiscourseTree::Leaf(e) = tree else { unreachable!() };
            let text = edus.and_then(|t| t.get(e - 1)).map(String::as_str).unwrap_or("");
            let _ = writeln!(out, "{pad}{e}: {text}");
        }
        Some(n) => {
            let _ = writeln!(out, "{pad}{} {} {}", n.span, n.relation, n.nuclearity);
            render(&n.left, edus, depth + 1, out);
            render(&n.right, edus, depth + 1, out);
        }
    }
}

pub fn inspect(a: InspectArgs) -> CliResult<()> {
    let text = std::fs::read(&a.tree).map_err(|e| CliError::from(e).at(&a.tree))?;
    let (tree, mut edus) = match parse_trees(text.as_slice()) {
        Ok(records) => {
            let r = records.into_iter().find(|r| r.doc_id == a.doc);
            let r = r.ok_or_else(|| CliError::new(ALIGNMENT, format!("no document {:?} in {}", a.doc, a.tree.display())))?;
            (r.tree, r.edus)
        }
        Err(tree_err) => {
            let records = parse_corpus(text.as_slice()).map_err(|_| CliError::from(tree_err).at(&a.tree))?;
            let r = records.into_iter().find(|r| r.document.doc_id == a.doc);
            let r = r.ok_or_else(|| CliError::new(ALIGNMENT, format!("no document {:?} in {}", a.doc, a.tree.display())))?;
            let doc = &r.document;
            let edus = (1..=doc.num_edus()).map(|e| doc.edu_text(e)).collect();
            let tree = r.gold_tree.ok_or_else(|| CliError::new(DATA, format!("document {:?} has no tree", a.doc)))?;
            (tree, Some(edus))
        }
    };
    if let Some(path) = &a.corpus {
        let records = load_corpus(path)?;
        let r = records.iter().find(|r| r.document.doc_id == a.doc);
        let r = r.ok_or_else(|| CliError::new(ALIGNMENT, format!("no document {:?} in {}", a.doc, path.display())))?;
        let doc = &r.document;
        if doc.num_edus() != tree.num_edus() {
            return Err(CliError::new(
                ALIGNMENT,
                format!("{:?}: tree covers {} EDUs, corpus has {}", a.doc, tree.num_edus(), doc.num_edus()),
            ));
        }
        edus = Some((1..=doc.num_edus()).map(|e| doc.edu_text(e)).collect());
    }
    let mut out = String::new();
    render(&tree, edus.as_deref(), 0, &mut out);
    print!("{out}");
    Ok(())
}
