use std::fmt;

use crate::error::{Error, Result};

/// A labeled ordered tree in PTB bracket form.
///
/// Internal nodes carry a non-empty label; word tokens are [`ParseTree::Leaf`]s,
/// normally sitting under a preterminal POS node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParseTree {
    Node {
        label: String,
        children: Vec<ParseTree>,
    },
    Leaf(String),
}

impl ParseTree {
    pub fn node(label: impl Into<String>, children: Vec<ParseTree>) -> Self {
        ParseTree::Node {
            label: label.into(),
            children,
        }
    }

    pub fn leaf(token: impl Into<String>) -> Self {
        ParseTree::Leaf(token.into())
    }

    /// `(pos token)`.
    pub fn preterminal(pos: impl Into<String>, token: impl Into<String>) -> Self {
        ParseTree::node(pos, vec![ParseTree::leaf(token)])
    }

    pub fn label(&self) -> &str {
        match self {
            ParseTree::Node { label, .. } => label,
            ParseTree::Leaf(t) => t,
        }
    }

    pub fn children(&self) -> &[ParseTree] {
        match self {
            ParseTree::Node { children, .. } => children,
            ParseTree::Leaf(_) => &[],
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ParseTree::Leaf(_))
    }

    /// A node whose only child is a token leaf.
    pub fn is_preterminal(&self) -> bool {
        matches!(self, ParseTree::Node { children, .. } if children.len() == 1 && children[0].is_leaf())
    }

    /// Token sequence, left to right.
    pub fn tokens(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ParseTree::Leaf(t) => out.push(t),
            ParseTree::Node { children, .. } => {
                for c in children {
                    c.collect_tokens(out);
                }
            }
        }
    }

    /// Preterminal labels, left to right.
    pub fn pos_tags(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_pos(&mut out);
        out
    }

    fn collect_pos<'a>(&'a self, out: &mut Vec<&'a str>) {
        if self.is_preterminal() {
            out.push(self.label());
            return;
        }
        for c in self.children() {
            c.collect_pos(out);
        }
    }

    pub fn num_nodes(&self) -> usize {
        1 + self.children().iter().map(ParseTree::num_nodes).sum::<usize>()
    }

    /// The same tree with word tokens removed; preterminals become leaves of
    /// the label structure. This is the form scored by the ST metric.
    pub fn strip_tokens(&self) -> ParseTree {
        match self {
            ParseTree::Leaf(t) => ParseTree::Leaf(t.clone()),
            ParseTree::Node { label, children } => ParseTree::Node {
                label: label.clone(),
                children: children
                    .iter()
                    .filter(|c| !c.is_leaf())
                    .map(ParseTree::strip_tokens)
                    .collect(),
            },
        }
    }

    /// Replace leaf tokens left to right. `f` receives the current token and
    /// returns its replacement.
    pub fn map_tokens(&self, f: &mut impl FnMut(&str) -> String) -> ParseTree {
        match self {
            ParseTree::Leaf(t) => ParseTree::Leaf(f(t)),
            ParseTree::Node { label, children } => ParseTree::Node {
                label: label.clone(),
                children: children.iter().map(|c| c.map_tokens(f)).collect(),
            },
        }
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseTree::Leaf(t) => f.write_str(t),
            ParseTree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for ParseTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_brackets(s)
    }
}

/// Read one PTB-style bracketed tree. Errors carry the byte offset of the
/// offending character.
pub fn parse_brackets(text: &str) -> Result<ParseTree> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    if p.peek() != Some(b'(') {
        return Err(p.err("expected `(`"));
    }
    let tree = p.tree()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input after tree"));
    }
    Ok(tree)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn err(&self, message: &str) -> Error {
        Error::Bracket {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn atom(&mut self) -> &str {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if !c.is_ascii_whitespace() && c != b'(' && c != b')') {
            self.pos += 1;
        }
        // Boundaries are ASCII bytes, so the slice is valid UTF-8.
        std::str::from_utf8(&self.src[start..self.pos]).expect("ascii boundary")
    }

    fn tree(&mut self) -> Result<ParseTree> {
        debug_assert_eq!(self.peek(), Some(b'('));
        self.pos += 1;
        self.skip_ws();
        let label = self.atom().to_string();
        if label.is_empty() {
            return Err(self.err("empty node label"));
        }
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Err(self.err("unbalanced brackets: missing `)`")),
                Some(b')') => {
                    self.pos += 1;
                    return Ok(ParseTree::Node { label, children });
                }
                Some(b'(') => children.push(self.tree()?),
                Some(_) => children.push(ParseTree::Leaf(self.atom().to_string())),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_tree() {
        let t = parse_brackets("(S (N dog))").unwrap();
        assert_eq!(t.tokens(), vec!["dog"]);
        assert_eq!(t.pos_tags(), vec!["N"]);
        // S and N are internal; `dog` is the leaf.
        assert_eq!(t.num_nodes(), 3);
        assert_eq!(t.to_string(), "(S (N dog))");
    }

    #[test]
    fn unbalanced_reports_offset() {
        match parse_brackets("(S (N dog)") {
            Err(Error::Bracket { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_label_rejected() {
        match parse_brackets("( (S (N dog)))") {
            Err(Error::Bracket { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extra_close_rejected() {
        assert!(parse_brackets("(S (N dog)))").is_err());
        assert!(parse_brackets("dog").is_err());
    }

    #[test]
    fn label_only_nodes() {
        let t = parse_brackets("(S (NP)(VP))").unwrap();
        assert_eq!(t.children().len(), 2);
        assert!(t.tokens().is_empty());
        assert_eq!(t.to_string(), "(S (NP) (VP))");
    }

    #[test]
    fn strip_tokens_keeps_pos() {
        let t = parse_brackets("(S (NP (DT the) (N dog)) (VP (V ran)))").unwrap();
        assert_eq!(t.strip_tokens().to_string(), "(S (NP (DT) (N)) (VP (V)))");
    }
}
