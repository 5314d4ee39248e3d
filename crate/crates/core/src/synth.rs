//! Synthetic corpora whose EDU edge tokens reveal the gold tree.
//!
//! EDU `i` reads `[left marker, fillers..., right marker]`. The left marker
//! names the label of the node whose right child starts at `i` (`<start>`
//! for the first EDU). The right marker is `<d{depth}>`, the depth of the
//! node splitting after `i` (`<end>` for the last EDU).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::io::CorpusRecord;
use crate::tree::{DiscourseTree, Document, Nuclearity};

pub const MIN_EDUS: usize = 2;
pub const MAX_EDUS: usize = 12;
pub const MASK_TOKEN: &str = "<m>";

pub const SYNTH_LABELS: [(&str, Nuclearity); 6] = [
    ("Elaboration", Nuclearity::NS),
    ("Attribution", Nuclearity::SN),
    ("Joint", Nuclearity::NN),
    ("Contrast", Nuclearity::NN),
    ("Background", Nuclearity::NS),
    ("Cause", Nuclearity::SN),
];

fn random_tree(rng: &mut ChaCha8Rng, i: usize, j: usize) -> DiscourseTree {
    if i == j {
        return DiscourseTree::leaf(i);
    }
    let k = rng.gen_range(i..j);
    let (rel, nuc) = SYNTH_LABELS[rng.gen_range(0..SYNTH_LABELS.len())];
    let left = random_tree(rng, i, k);
    let right = random_tree(rng, k + 1, j);
    DiscourseTree::node(nuc, rel, left, right)
}

/// Per boundary `u` (after EDU `u`): the splitting node's depth and label token.
fn boundary_marks(tree: &DiscourseTree, m: usize) -> Vec<(usize, String)> {
    let mut marks = vec![(0, String::new()); m + 1];
    let mut stack = vec![(tree, 0usize)];
    while let Some((t, depth)) = stack.pop() {
        if let Some(n) = t.as_internal() {
            marks[n.split] = (depth, format!("<{}-{}>", n.relation.as_str(), n.nuclearity.as_str()));
            stack.push((&n.left, depth + 1));
            stack.push((&n.right, depth + 1));
        }
    }
    marks
}

/// `n_docs` random documents with `min_edus..=max_edus` EDUs and fillers
/// drawn from `vocab` words.
pub fn generate_synthetic(
    n_docs: usize,
    min_edus: usize,
    max_edus: usize,
    vocab: usize,
    seed: u64,
) -> Result<Vec<CorpusRecord>, Error> {
    if min_edus < MIN_EDUS || max_edus > MAX_EDUS || min_edus > max_edus {
        return Err(Error::Config(format!(
            "EDU range {min_edus}..={max_edus} must lie within {MIN_EDUS}..={MAX_EDUS}"
        )));
    }
    if vocab == 0 {
        return Err(Error::Config("vocab must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let m = rng.gen_range(min_edus..=max_edus);
        let tree = random_tree(&mut rng, 1, m);
        let marks = boundary_marks(&tree, m);
        let mut tokens = Vec::new();
        let mut breaks = Vec::with_capacity(m);
        for i in 1..=m {
            tokens.push(if i == 1 { "<start>".to_string() } else { marks[i - 1].1.clone() });
            for _ in 0..rng.gen_range(1..=4) {
                tokens.push(format!("w{}", rng.gen_range(0..vocab)));
            }
            tokens.push(if i == m { "<end>".to_string() } else { format!("<d{}>", marks[i].0) });
            breaks.push(tokens.len() - 1);
        }
        let document = Document::new(format!("synth-{d:04}"), tokens, breaks)?;
        out.push(CorpusRecord { document, gold_tree: Some(tree) });
    }
    Ok(out)
}

/// Replaces the first and last token of every EDU with [`MASK_TOKEN`].
pub fn ablate_markers(records: &[CorpusRecord]) -> Vec<CorpusRecord> {
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            let doc = &mut r.document;
            for edu in 1..=doc.num_edus() {
                let (first, last) = doc.edu_token_range(edu);
                doc.tokens[first] = MASK_TOKEN.into();
                doc.tokens[last] = MASK_TOKEN.into();
            }
            r
        })
        .collect()
}
