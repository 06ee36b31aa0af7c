//! Indented text form of a tree, one node per line as `kind [handle]`:
//!
//! ```text
//! fallback
//!   qvalue drqn
//!   sequence
//!     condition trigger_arrived
//!     action reactive
//! ```

use super::tree::Node;
use crate::error::{Error, Result};

struct Line {
    no: usize,
    indent: usize,
    kind: String,
    handle: Option<String>,
}

pub fn parse_tree(text: &str) -> Result<Node> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        if content.starts_with('\t') {
            return Err(Error::Parse { line: no, msg: "tabs are not allowed for indentation".into() });
        }
        let indent = content.len() - content.trim_start().len();
        let mut tok = content.split_whitespace();
        let kind = tok.next().expect("non-empty line").to_ascii_lowercase();
        let handle = tok.next().map(str::to_string);
        if tok.next().is_some() {
            return Err(Error::Parse { line: no, msg: "expected `kind [handle]`".into() });
        }
        lines.push(Line { no, indent, kind, handle });
    }
    if lines.is_empty() {
        return Err(Error::Parse { line: 1, msg: "empty tree".into() });
    }
    let (node, next) = parse_node(&lines, 0)?;
    if next != lines.len() {
        return Err(Error::Parse { line: lines[next].no, msg: "more than one root node".into() });
    }
    Ok(node)
}

fn parse_node(lines: &[Line], i: usize) -> Result<(Node, usize)> {
    let l = &lines[i];
    let leaf = |make: fn(String) -> Node| -> Result<(Node, usize)> {
        let h = l.handle.clone().ok_or_else(|| Error::Parse { line: l.no, msg: format!("`{}` needs a handle", l.kind) })?;
        if lines.get(i + 1).is_some_and(|n| n.indent > l.indent) {
            return Err(Error::Parse { line: lines[i + 1].no, msg: format!("`{}` cannot have children", l.kind) });
        }
        Ok((make(h), i + 1))
    };
    match l.kind.as_str() {
        "condition" => leaf(Node::Condition),
        "action" => leaf(Node::Action),
        "qvalue" => leaf(Node::QValue),
        "sequence" | "fallback" => {
            let mut children = Vec::new();
            let mut j = i + 1;
            let child_indent = match lines.get(j) {
                Some(c) if c.indent > l.indent => c.indent,
                _ => return Err(Error::Parse { line: l.no, msg: format!("`{}` needs at least one child", l.kind) }),
            };
            while j < lines.len() && lines[j].indent > l.indent {
                if lines[j].indent != child_indent {
                    return Err(Error::Parse { line: lines[j].no, msg: "inconsistent indentation".into() });
                }
                let (child, next) = parse_node(lines, j)?;
                children.push(child);
                j = next;
            }
            let node = if l.kind == "sequence" { Node::Sequence(children) } else { Node::Fallback(children) };
            Ok((node, j))
        }
        other => Err(Error::Parse { line: l.no, msg: format!("unknown node kind `{other}`") }),
    }
}
