//! Reader for RST-DT `.dis` trees.
//!
//! ```text
//! node  := "(" ("Root" | "Nucleus" | "Satellite") attr* node* ")"
//! attr  := "(span" INT INT ")" | "(leaf" INT ")" | "(rel2par" ATOM ")" | "(text" "_!" ... "!_" ")"
//! ```

use crate::error::{DisError, TreeError};
use crate::raw::{RawChild, RawTree};
use crate::tree::{Document, RelationClass, RelationMap, Role};
use crate::{binarize, Error};

use super::corpus::CorpusRecord;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
    Text(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

fn lex(input: &str) -> Result<(Vec<(Tok, Pos)>, Pos), DisError> {
    let mut out = Vec::new();
    let chars: Vec<char> = input.chars().collect();
    let (mut i, mut line, mut column) = (0, 1, 1);
    let advance = |c: char, line: &mut usize, column: &mut usize| {
        if c == '\n' {
            *line += 1;
            *column = 1;
        } else {
            *column += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column };
        if c.is_whitespace() {
            advance(c, &mut line, &mut column);
            i += 1;
        } else if c == '(' || c == ')' {
            out.push((if c == '(' { Tok::Open } else { Tok::Close }, pos));
            advance(c, &mut line, &mut column);
            i += 1;
        } else if c == '_' && chars.get(i + 1) == Some(&'!') {
            // Text runs to the first `!_` that is followed by `)`.
            let mut j = i + 2;
            let end = loop {
                if j + 1 >= chars.len() {
                    let mut l = line;
                    let mut col = column;
                    chars[i..].iter().for_each(|&ch| advance(ch, &mut l, &mut col));
                    return Err(DisError::Truncated { line: l, column: col });
                }
                if chars[j] == '!' && chars[j + 1] == '_' {
                    let mut k = j + 2;
                    while k < chars.len() && chars[k].is_whitespace() {
                        k += 1;
                    }
                    if k >= chars.len() || chars[k] == ')' {
                        break j;
                    }
                }
                j += 1;
            };
            let text: String = chars[i + 2..end].iter().collect();
            out.push((Tok::Text(text), pos));
            for &ch in &chars[i..end + 2] {
                advance(ch, &mut line, &mut column);
            }
            i = end + 2;
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && chars[i] != '(' && chars[i] != ')' {
                advance(chars[i], &mut line, &mut column);
                i += 1;
            }
            out.push((Tok::Atom(chars[start..i].iter().collect()), pos));
        }
    }
    Ok((out, Pos { line, column }))
}

#[derive(Clone, Debug)]
struct DisNode {
    role: Option<Role>,
    range: (usize, usize),
    is_leaf: bool,
    rel2par: Option<String>,
    text: Option<String>,
    children: Vec<DisNode>,
    pos: Pos,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    eof: Pos,
}

impl Parser {
    fn peek(&self) -> Option<&(Tok, Pos)> {
        self.toks.get(self.at)
    }

    fn next(&mut self) -> Result<(Tok, Pos), DisError> {
        let t = self.toks.get(self.at).cloned().ok_or(DisError::Truncated { line: self.eof.line, column: self.eof.column })?;
        self.at += 1;
        Ok(t)
    }

    fn syntax(pos: Pos, message: impl Into<String>) -> DisError {
        DisError::Syntax { line: pos.line, column: pos.column, message: message.into() }
    }

    fn expect_open(&mut self) -> Result<Pos, DisError> {
        match self.next()? {
            (Tok::Open, p) => Ok(p),
            (Tok::Close, p) => Err(DisError::Unbalanced { line: p.line, column: p.column }),
            (_, p) => Err(Self::syntax(p, "expected `(`")),
        }
    }

    fn expect_close(&mut self) -> Result<(), DisError> {
        match self.next()? {
            (Tok::Close, _) => Ok(()),
            (_, p) => Err(Self::syntax(p, "expected `)`")),
        }
    }

    fn int(&mut self) -> Result<usize, DisError> {
        match self.next()? {
            (Tok::Atom(a), p) => a.parse().map_err(|_| Self::syntax(p, format!("expected an integer, found {a:?}"))),
            (_, p) => Err(Self::syntax(p, "expected an integer")),
        }
    }

    fn node(&mut self) -> Result<DisNode, DisError> {
        let open = self.expect_open()?;
        let role = match self.next()? {
            (Tok::Atom(tag), p) => match tag.as_str() {
                "Root" => None,
                "Nucleus" => Some(Role::Nucleus),
                "Satellite" => Some(Role::Satellite),
                _ => return Err(DisError::UnknownTag { line: p.line, column: p.column, tag }),
            },
            (_, p) => return Err(Self::syntax(p, "expected a node tag")),
        };
        let mut node = DisNode {
            role,
            range: (0, 0),
            is_leaf: false,
            rel2par: None,
            text: None,
            children: Vec::new(),
            pos: open,
        };
        let mut have_range = false;
        loop {
            match self.peek() {
                Some((Tok::Close, _)) => {
                    self.at += 1;
                    break;
                }
                Some((Tok::Open, _)) => {}
                Some((_, p)) => return Err(Self::syntax(*p, "expected `(` or `)`")),
                None => return Err(DisError::Truncated { line: self.eof.line, column: self.eof.column }),
            }
            let tag = match self.toks.get(self.at + 1) {
                Some((Tok::Atom(a), p)) => (a.clone(), *p),
                Some((_, p)) => return Err(Self::syntax(*p, "expected a tag")),
                None => return Err(DisError::Truncated { line: self.eof.line, column: self.eof.column }),
            };
            match tag.0.as_str() {
                "Nucleus" | "Satellite" | "Root" => {
                    let child = self.node()?;
                    node.children.push(child);
                }
                "span" | "leaf" | "rel2par" | "text" => {
                    self.at += 2;
                    match tag.0.as_str() {
                        "span" => {
                            node.range = (self.int()?, self.int()?);
                            have_range = true;
                        }
                        "leaf" => {
                            let k = self.int()?;
                            node.range = (k, k);
                            node.is_leaf = true;
                            have_range = true;
                        }
                        "rel2par" => match self.next()? {
                            (Tok::Atom(a), _) => node.rel2par = Some(a),
                            (_, p) => return Err(Self::syntax(p, "expected a relation label")),
                        },
                        _ => match self.next()? {
                            (Tok::Text(t), _) => node.text = Some(t),
                            (_, p) => return Err(Self::syntax(p, "expected `_!...!_` text")),
                        },
                    }
                    self.expect_close()?;
                }
                _ => {
                    return Err(DisError::UnknownTag { line: tag.1.line, column: tag.1.column, tag: tag.0 });
                }
            }
        }
        if !have_range {
            return Err(Self::syntax(open, "node without (span ..) or (leaf ..)"));
        }
        if node.is_leaf && !node.children.is_empty() {
            return Err(Self::syntax(open, "leaf node with children"));
        }
        if !node.is_leaf && node.children.is_empty() {
            return Err(Self::syntax(open, "span node without children"));
        }
        if !node.is_leaf {
            let mut expected = node.range.0;
            for c in &node.children {
                if c.range.0 != expected {
                    return Err(DisError::NonContiguous {
                        line: c.pos.line,
                        column: c.pos.column,
                        expected,
                        found: c.range.0,
                    });
                }
                expected = c.range.1 + 1;
            }
            if expected != node.range.1 + 1 {
                return Err(DisError::NonContiguous {
                    line: open.line,
                    column: open.column,
                    expected: node.range.1 + 1,
                    found: expected,
                });
            }
        }
        Ok(node)
    }
}

/// A parsed `.dis` file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DisDocument {
    /// Constituency with fine-grained `rel2par` labels.
    pub tree: RawTree<String>,
    /// EDU texts in leaf order, `_!`/`!_` stripped.
    pub edus: Vec<String>,
    /// Annotation quirks noticed while reading; the tree is not repaired.
    pub warnings: Vec<String>,
}

pub fn parse_dis(text: &str) -> Result<DisDocument, DisError> {
    let (toks, eof) = lex(text)?;
    let mut parser = Parser { toks, at: 0, eof };
    let root = parser.node()?;
    if let Some((tok, p)) = parser.peek() {
        return Err(match tok {
            Tok::Close => DisError::Unbalanced { line: p.line, column: p.column },
            _ => Parser::syntax(*p, "trailing input after the root node"),
        });
    }
    if root.range.0 != 1 {
        return Err(Parser::syntax(root.pos, format!("root must start at EDU 1, found {}", root.range.0)));
    }
    let mut edus = Vec::new();
    let mut warnings = Vec::new();
    let tree = convert(&root, &mut edus, &mut warnings);
    Ok(DisDocument { tree, edus, warnings })
}

fn convert(node: &DisNode, edus: &mut Vec<String>, warnings: &mut Vec<String>) -> RawTree<String> {
    if node.is_leaf {
        if node.text.is_none() {
            warnings.push(format!("leaf {} has no text", node.range.0));
        }
        edus.push(node.text.clone().unwrap_or_default());
        return RawTree::Leaf(node.range.0);
    }
    let span = format!("[{},{}]", node.range.0, node.range.1);
    if node.children.len() == 1 {
        warnings.push(format!("node {span} has a single child"));
    }
    let rels: Vec<String> = node.children.iter().filter_map(|c| c.rel2par.as_ref()).map(|r| r.to_lowercase()).collect();
    if rels.iter().any(|r| r == "same-unit") && node.children.len() > 2 {
        warnings.push(format!("node {span} has a same-unit chain of {} children", node.children.len()));
    }
    let has_sat = node.children.iter().any(|c| c.role == Some(Role::Satellite));
    let multinuc_nucleus = node
        .children
        .iter()
        .any(|c| c.role == Some(Role::Nucleus) && c.rel2par.as_deref().is_some_and(|r| !r.eq_ignore_ascii_case("span")));
    if has_sat && multinuc_nucleus {
        warnings.push(format!("node {span} mixes satellites with multinuclear relations"));
    }
    let children = node
        .children
        .iter()
        .map(|c| RawChild {
            role: c.role.unwrap_or(Role::Nucleus),
            relation: c.rel2par.clone().filter(|r| !r.eq_ignore_ascii_case("span")),
            tree: convert(c, edus, warnings),
        })
        .collect();
    RawTree::Node(children)
}

impl DisDocument {
    /// Maps relations, binarizes, and tokenizes EDU texts on whitespace.
    pub fn to_record(&self, doc_id: &str, map: &RelationMap) -> Result<CorpusRecord, Error> {
        let mut tokens = Vec::new();
        let mut edu_breaks = Vec::new();
        for (i, text) in self.edus.iter().enumerate() {
            let before = tokens.len();
            tokens.extend(text.split_whitespace().map(str::to_string));
            if tokens.len() == before {
                return Err(TreeError::Document { doc_id: doc_id.into(), message: format!("EDU {} is empty", i + 1) }.into());
            }
            edu_breaks.push(tokens.len() - 1);
        }
        let mapped: RawTree<RelationClass> = self.tree.try_map(&mut |l: &String| map.map(l))?;
        let tree = binarize(&mapped)?;
        let document = Document::new(doc_id, tokens, edu_breaks)?;
        Ok(CorpusRecord { document, gold_tree: Some(tree) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Nuclearity;

    const TWO: &str = "( Root (span 1 2) ( Nucleus (leaf 1) (rel2par span) (text _!A!_) ) ( Satellite (leaf 2) (rel2par elaboration-additional) (text _!B!_) ) )";

    #[test]
    fn two_leaf_document() {
        let doc = parse_dis(TWO).unwrap();
        assert_eq!(doc.edus, vec!["A", "B"]);
        assert!(doc.warnings.is_empty());
        let rec = doc.to_record("d1", &RelationMap::default_map()).unwrap();
        let root = rec.gold_tree.as_ref().unwrap().as_internal().unwrap().clone();
        assert_eq!(root.nuclearity, Nuclearity::NS);
        assert_eq!(root.relation.as_str(), "Elaboration");
        assert_eq!(rec.document.tokens, vec!["A", "B"]);
        assert_eq!(rec.document.edu_breaks, vec![0, 1]);
    }

    #[test]
    fn single_leaf_document() {
        let doc = parse_dis("( Root (leaf 1) (text _!Only one unit . <P>!_) )").unwrap();
        assert_eq!(doc.tree, RawTree::Leaf(1));
        let rec = doc.to_record("d", &RelationMap::default_map()).unwrap();
        assert_eq!(rec.document.tokens, vec!["Only", "one", "unit", ".", "<P>"]);
        assert_eq!(rec.gold_tree, Some(crate::DiscourseTree::Leaf(1)));
    }

    #[test]
    fn text_may_contain_parentheses() {
        let src = "( Root (span 1 2)\n  ( Nucleus (leaf 1) (rel2par List) (text _!x (y) z!_) )\n  ( Nucleus (leaf 2) (rel2par List) (text _!w!_) ) )";
        let doc = parse_dis(src).unwrap();
        assert_eq!(doc.edus[0], "x (y) z");
        let rec = doc.to_record("d", &RelationMap::default_map()).unwrap();
        let root = rec.gold_tree.unwrap();
        assert_eq!(root.as_internal().unwrap().nuclearity, Nuclearity::NN);
        assert_eq!(root.as_internal().unwrap().relation.as_str(), "Joint");
    }

    #[test]
    fn truncated_input_reports_position() {
        let cut = &TWO[..TWO.len() - 30];
        match parse_dis(cut) {
            Err(DisError::Truncated { line: 1, column }) => assert!(column > 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distinct_errors() {
        let extra = format!("{TWO} )");
        assert!(matches!(parse_dis(&extra), Err(DisError::Unbalanced { .. })));
        let unknown = TWO.replace("Satellite", "Satelite");
        assert!(matches!(parse_dis(&unknown), Err(DisError::UnknownTag { ref tag, .. }) if tag == "Satelite"));
        let gap = TWO.replace("(span 1 2)", "(span 1 3)").replace("(leaf 2)", "(leaf 3)");
        assert!(matches!(parse_dis(&gap), Err(DisError::NonContiguous { expected: 2, found: 3, .. })));
        let bad_attr = TWO.replace("(rel2par span)", "(relation span)");
        assert!(matches!(parse_dis(&bad_attr), Err(DisError::UnknownTag { .. })));
    }

    #[test]
    fn unmapped_label_is_an_error() {
        let src = TWO.replace("elaboration-additional", "made-up-relation");
        let doc = parse_dis(&src).unwrap();
        let err = doc.to_record("d", &RelationMap::default_map()).unwrap_err();
        assert!(err.to_string().contains("made-up-relation"));
    }

    #[test]
    fn multinuclear_and_single_child_warnings() {
        let src = "( Root (span 1 3)
            ( Nucleus (leaf 1) (rel2par Same-Unit) (text _!a!_) )
            ( Nucleus (leaf 2) (rel2par Same-Unit) (text _!b!_) )
            ( Nucleus (leaf 3) (rel2par Same-Unit) (text _!c!_) ) )";
        let doc = parse_dis(src).unwrap();
        assert_eq!(doc.warnings.len(), 1);
        let rec = doc.to_record("d", &RelationMap::default_map()).unwrap();
        assert_eq!(rec.gold_tree.unwrap().internal_count(), 2);
    }
}
