//! Newline-delimited JSON corpus and tree files.
//!
//! Corpus line: `{"doc_id", "tokens", "edu_breaks", "gold_tree"?}`.
//! Tree line: `{"doc_id", "tree", "edus"?}`.
//! Tree object: `{"span":[i,j], "nuclearity", "relation", "children":[l, r]}`,
//! leaves `{"edu":k}`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{CorpusError, Error};
use crate::tree::{validate_tree, DiscourseTree, Document, InternalNode, Nuclearity, RelationClass, Span};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusRecord {
    pub document: Document,
    pub gold_tree: Option<DiscourseTree>,
}

/// A parsed tree keyed to its document, the output of `parse`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeRecord {
    pub doc_id: String,
    pub tree: DiscourseTree,
    pub edus: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusLine {
    doc_id: String,
    tokens: Vec<String>,
    edu_breaks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_tree: Option<Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeLine {
    doc_id: String,
    tree: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edus: Option<Vec<String>>,
}

pub fn tree_to_json(tree: &DiscourseTree) -> Value {
    match tree {
        DiscourseTree::Leaf(k) => json!({ "edu": k }),
        DiscourseTree::Internal(n) => json!({
            "span": [n.span.start, n.span.end],
            "nuclearity": n.nuclearity.as_str(),
            "relation": n.relation.as_str(),
            "children": [tree_to_json(&n.left), tree_to_json(&n.right)],
        }),
    }
}

/// Decodes a tree object; structure is checked but not the EDU count.
pub fn tree_from_json(value: &Value) -> Result<DiscourseTree, CorpusError> {
    let obj = value.as_object().ok_or_else(|| CorpusError::Tree("tree node must be an object".into()))?;
    if obj.contains_key("edu") {
        only_keys(obj, &["edu"])?;
        let k = obj["edu"].as_u64().filter(|&k| k >= 1).ok_or_else(|| {
            CorpusError::Tree(format!("`edu` must be a positive integer, found {}", obj["edu"]))
        })?;
        return Ok(DiscourseTree::Leaf(k as usize));
    }
    only_keys(obj, &["span", "nuclearity", "relation", "children"])?;
    let field = |name: &str| obj.get(name).ok_or_else(|| CorpusError::Tree(format!("missing field `{name}`")));
    let span = field("span")?
        .as_array()
        .filter(|a| a.len() == 2)
        .and_then(|a| Some(Span::new(a[0].as_u64()? as usize, a[1].as_u64()? as usize)))
        .ok_or_else(|| CorpusError::Tree("`span` must be [i, j]".into()))?;
    let nuclearity: Nuclearity = field("nuclearity")?
        .as_str()
        .ok_or_else(|| CorpusError::Tree("`nuclearity` must be a string".into()))?
        .parse()
        .map_err(CorpusError::Tree)?;
    let relation = field("relation")?
        .as_str()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| CorpusError::Tree("`relation` must be a nonempty string".into()))?;
    let children = field("children")?
        .as_array()
        .filter(|c| c.len() == 2)
        .ok_or_else(|| CorpusError::Tree(format!("node {span}: `children` must hold exactly two nodes")))?;
    let left = tree_from_json(&children[0])?;
    let right = tree_from_json(&children[1])?;
    let split = left.span().end;
    let node = InternalNode { span, split, nuclearity, relation: RelationClass::new(relation), left, right };
    if node.left.span().start != span.start || node.right.span() != Span::new(split + 1, span.end) {
        return Err(CorpusError::Tree(format!(
            "node {span}: children cover {} and {}",
            node.left.span(),
            node.right.span()
        )));
    }
    Ok(DiscourseTree::Internal(Box::new(node)))
}

fn only_keys(obj: &Map<String, Value>, allowed: &[&str]) -> Result<(), CorpusError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(CorpusError::Tree(format!("unknown field `{k}`"))),
        None => Ok(()),
    }
}

fn schema(line: usize, field: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Schema { line, field: field.into(), message: message.into() }
}

pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<CorpusRecord>, Error> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: CorpusLine = serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: lineno, source })?;
        let document = Document::new(raw.doc_id, raw.tokens, raw.edu_breaks)
            .map_err(|e| schema(lineno, "edu_breaks", e.to_string()))?;
        let gold_tree = match raw.gold_tree {
            None => None,
            Some(v) => {
                let tree = tree_from_json(&v).map_err(|e| schema(lineno, "gold_tree", e.to_string()))?;
                validate_tree(&tree, document.num_edus()).map_err(|e| schema(lineno, "gold_tree", e.to_string()))?;
                Some(tree)
            }
        };
        out.push(CorpusRecord { document, gold_tree });
    }
    Ok(out)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>, Error> {
    let file = std::fs::File::open(path)?;
    parse_corpus(std::io::BufReader::new(file))
}

pub fn write_corpus(mut writer: impl Write, records: &[CorpusRecord]) -> Result<(), Error> {
    for r in records {
        let line = CorpusLine {
            doc_id: r.document.doc_id.clone(),
            tokens: r.document.tokens.clone(),
            edu_breaks: r.document.edu_breaks.clone(),
            gold_tree: r.gold_tree.as_ref().map(tree_to_json),
        };
        serde_json::to_writer(&mut writer, &line).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn parse_trees(reader: impl BufRead) -> Result<Vec<TreeRecord>, Error> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: TreeLine = serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: lineno, source })?;
        let tree = tree_from_json(&raw.tree).map_err(|e| schema(lineno, "tree", e.to_string()))?;
        validate_tree(&tree, tree.num_edus()).map_err(|e| schema(lineno, "tree", e.to_string()))?;
        if let Some(edus) = &raw.edus {
            if edus.len() != tree.num_edus() {
                return Err(schema(lineno, "edus", format!("{} texts for {} EDUs", edus.len(), tree.num_edus())).into());
            }
        }
        out.push(TreeRecord { doc_id: raw.doc_id, tree, edus: raw.edus });
    }
    Ok(out)
}

pub fn read_trees(path: impl AsRef<Path>) -> Result<Vec<TreeRecord>, Error> {
    let file = std::fs::File::open(path)?;
    parse_trees(std::io::BufReader::new(file))
}

pub fn write_trees(mut writer: impl Write, records: &[TreeRecord]) -> Result<(), Error> {
    for r in records {
        let line = TreeLine { doc_id: r.doc_id.clone(), tree: tree_to_json(&r.tree), edus: r.edus.clone() };
        serde_json::to_writer(&mut writer, &line).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
