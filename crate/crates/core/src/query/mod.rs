//! Query language: parsing, trigram planning and match scoring.
//!
//! The grammar is a small code-search dialect:
//! - whitespace-separated atoms are AND-ed
//! - the standalone lowercase word `or` joins the two adjacent groups
//! - `bare` words match case-insensitively, `"quoted"` phrases exactly
//! - `/pattern/` is a regex (conservative dialect, see [`regex_lit`])
//! - `repo:`, `rev:`, `file:` and `sym:` prefixes build filters; `sym:`
//!   wraps the following atom and restricts it to symbol names
//! - parentheses group

pub mod plan;
pub mod regex_lit;
mod score;

pub use plan::{plan_trigrams, CompiledQuery, TrigramExpr};
pub use score::score_match;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Repo,
    Revision,
    File,
    Symbol,
}

/// Parsed query tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryNode {
    Term { text: String, case_sensitive: bool },
    Regex { pattern: String },
    /// Two or more children, all required.
    And(Vec<QueryNode>),
    /// Two or more children, any sufficient.
    Or(Vec<QueryNode>),
    Filter { kind: FilterKind, argument: String, child: Option<Box<QueryNode>> },
}

/// One line-level hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub repo_id: String,
    pub revision_id: String,
    pub path: String,
    pub line_start: u32,
    pub line_end: u32,
    pub score: f64,
    pub fragment: String,
}

/// Deterministic result order: best score first, ties by
/// (path, line_start, revision_id).
pub fn result_order(a: &SearchResult, b: &SearchResult) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.path.cmp(&b.path))
        .then_with(|| a.line_start.cmp(&b.line_start))
        .then_with(|| a.revision_id.cmp(&b.revision_id))
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("parse error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> ParseError {
        ParseError { position, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    Bare(String),
    Quoted(String),
    Regex(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Or,
    Word(String),
    Quoted(String),
    Regex(String),
    Prefixed(FilterKind, Payload),
}

struct Lexer<'a> {
    bytes: &'a [u8],
    input: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn lex(mut self) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut toks = Vec::new();
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
                continue;
            }
            let start = self.pos;
            let tok = match b {
                b'(' => {
                    self.pos += 1;
                    Tok::LParen
                }
                b')' => {
                    self.pos += 1;
                    Tok::RParen
                }
                b'"' => Tok::Quoted(self.quoted()?),
                b'/' => Tok::Regex(self.regex()?),
                _ => self.word()?,
            };
            toks.push((start, tok));
        }
        Ok(toks)
    }

    fn quoted(&mut self) -> Result<String, ParseError> {
        let open = self.pos;
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.bytes.len() {
            if self.bytes[self.pos] == b'"' {
                let text = self.input[start..self.pos].to_string();
                self.pos += 1;
                return Ok(text);
            }
            self.pos += 1;
        }
        Err(ParseError::new(open, "unbalanced quote"))
    }

    fn regex(&mut self) -> Result<String, ParseError> {
        let open = self.pos;
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'\\' if self.pos + 1 < self.bytes.len() => self.pos += 2,
                b'/' => {
                    let pat = self.input[start..self.pos].to_string();
                    self.pos += 1;
                    return Ok(pat);
                }
                _ => self.pos += 1,
            }
        }
        Err(ParseError::new(open, "unterminated regex"))
    }

    /// A bare word, or a `prefix:` atom whose payload may itself be
    /// quoted or a regex (`sym:"Exact"`, `sym:/re/`).
    fn word(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() || b == b'(' || b == b')' || b == b'"' {
                break;
            }
            self.pos += 1;
            if b == b':' {
                let prefix = &self.input[start..self.pos - 1];
                if let Some(kind) = filter_kind(prefix) {
                    return Ok(Tok::Prefixed(kind, self.payload()?));
                }
            }
        }
        let word = self.input[start..self.pos].to_string();
        if word == "or" {
            return Ok(Tok::Or);
        }
        Ok(Tok::Word(word))
    }

    fn payload(&mut self) -> Result<Payload, ParseError> {
        match self.bytes.get(self.pos) {
            Some(b'"') => Ok(Payload::Quoted(self.quoted()?)),
            Some(b'/') => Ok(Payload::Regex(self.regex()?)),
            _ => {
                let start = self.pos;
                while self.pos < self.bytes.len() {
                    let b = self.bytes[self.pos];
                    if b.is_ascii_whitespace() || b == b'(' || b == b')' || b == b'"' {
                        break;
                    }
                    self.pos += 1;
                }
                Ok(Payload::Bare(self.input[start..self.pos].to_string()))
            }
        }
    }
}

fn filter_kind(prefix: &str) -> Option<FilterKind> {
    match prefix {
        "repo" => Some(FilterKind::Repo),
        "rev" => Some(FilterKind::Revision),
        "file" => Some(FilterKind::File),
        "sym" => Some(FilterKind::Symbol),
        _ => None,
    }
}

struct TreeParser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    input_len: usize,
    revision_filters: usize,
}

impl TreeParser {
    fn peek(&self) -> Option<&(usize, Tok)> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> usize {
        self.peek().map(|&(p, _)| p).unwrap_or(self.input_len)
    }

    fn expr(&mut self) -> Result<QueryNode, ParseError> {
        let mut groups = vec![self.and_group()?];
        while matches!(self.peek(), Some((_, Tok::Or))) {
            self.pos += 1;
            groups.push(self.and_group()?);
        }
        Ok(if groups.len() == 1 {
            groups.pop().unwrap()
        } else {
            QueryNode::Or(groups)
        })
    }

    fn and_group(&mut self) -> Result<QueryNode, ParseError> {
        let mut atoms = Vec::new();
        loop {
            match self.peek() {
                Some((_, Tok::Or)) | Some((_, Tok::RParen)) | None => break,
                _ => atoms.push(self.atom()?),
            }
        }
        match atoms.len() {
            0 => Err(ParseError::new(self.here(), "expected a query atom")),
            1 => Ok(atoms.pop().unwrap()),
            _ => Ok(QueryNode::And(atoms)),
        }
    }

    fn atom(&mut self) -> Result<QueryNode, ParseError> {
        let (pos, tok) = self.toks[self.pos].clone();
        self.pos += 1;
        match tok {
            Tok::LParen => {
                let inner = self.expr()?;
                match self.peek() {
                    Some((_, Tok::RParen)) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(ParseError::new(pos, "unbalanced parenthesis")),
                }
            }
            Tok::RParen => Err(ParseError::new(pos, "unbalanced parenthesis")),
            Tok::Or => Err(ParseError::new(pos, "`or` needs operands on both sides")),
            Tok::Word(text) => Ok(QueryNode::Term { text, case_sensitive: false }),
            Tok::Quoted(text) => Ok(QueryNode::Term { text, case_sensitive: true }),
            Tok::Regex(pattern) => self.regex_node(pos, pattern),
            Tok::Prefixed(kind, payload) => self.filter_node(pos, kind, payload),
        }
    }

    fn regex_node(&mut self, pos: usize, pattern: String) -> Result<QueryNode, ParseError> {
        if let Err(e) = regex_lit::parse(&pattern) {
            // +1 skips the opening slash
            return Err(ParseError::new(pos + 1 + e.position, format!("bad regex: {}", e.message)));
        }
        Ok(QueryNode::Regex { pattern })
    }

    fn filter_node(
        &mut self,
        pos: usize,
        kind: FilterKind,
        payload: Payload,
    ) -> Result<QueryNode, ParseError> {
        if kind == FilterKind::Revision {
            self.revision_filters += 1;
            if self.revision_filters > 1 {
                return Err(ParseError::new(pos, "at most one rev: filter per query"));
            }
        }
        if kind == FilterKind::Symbol {
            let (argument, child) = match payload {
                Payload::Bare(text) => {
                    (text.clone(), QueryNode::Term { text, case_sensitive: false })
                }
                Payload::Quoted(text) => {
                    (format!("\"{text}\""), QueryNode::Term { text, case_sensitive: true })
                }
                Payload::Regex(pattern) => {
                    let node = self.regex_node(pos, pattern.clone())?;
                    (format!("/{pattern}/"), node)
                }
            };
            if argument.is_empty() {
                return Err(ParseError::new(pos, "sym: needs an atom"));
            }
            return Ok(QueryNode::Filter {
                kind,
                argument,
                child: Some(Box::new(child)),
            });
        }
        let argument = match payload {
            Payload::Bare(text) | Payload::Quoted(text) => text,
            Payload::Regex(_) => {
                return Err(ParseError::new(pos, "this filter takes a literal argument"))
            }
        };
        if argument.is_empty() {
            return Err(ParseError::new(pos, "filter needs an argument"));
        }
        Ok(QueryNode::Filter { kind, argument, child: None })
    }
}

/// Parse a query string into a [`QueryNode`].
pub fn parse_query(input: &str) -> Result<QueryNode, ParseError> {
    let toks = Lexer { bytes: input.as_bytes(), input, pos: 0 }.lex()?;
    if toks.is_empty() {
        return Err(ParseError::new(0, "empty query"));
    }
    let mut parser = TreeParser {
        toks,
        pos: 0,
        input_len: input.len(),
        revision_filters: 0,
    };
    let node = parser.expr()?;
    if let Some(&(pos, _)) = parser.peek() {
        return Err(ParseError::new(pos, "unbalanced parenthesis"));
    }
    Ok(node)
}

impl QueryNode {
    /// Canonical text form; reparsing yields a structurally identical tree
    /// for any parser-producible node.
    pub fn to_query_string(&self) -> String {
        let mut out = String::new();
        self.render(&mut out, None);
        out
    }

    fn render(&self, out: &mut String, parent: Option<&QueryNode>) {
        let needs_parens = match (parent, self) {
            (Some(QueryNode::And(_)), QueryNode::And(_)) => true,
            (Some(QueryNode::And(_)), QueryNode::Or(_)) => true,
            (Some(QueryNode::Or(_)), QueryNode::Or(_)) => true,
            _ => false,
        };
        if needs_parens {
            out.push('(');
        }
        match self {
            QueryNode::Term { text, case_sensitive: false } => out.push_str(text),
            QueryNode::Term { text, case_sensitive: true } => {
                out.push('"');
                out.push_str(text);
                out.push('"');
            }
            QueryNode::Regex { pattern } => {
                out.push('/');
                out.push_str(pattern);
                out.push('/');
            }
            QueryNode::And(children) => {
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    c.render(out, Some(self));
                }
            }
            QueryNode::Or(children) => {
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" or ");
                    }
                    c.render(out, Some(self));
                }
            }
            QueryNode::Filter { kind, argument, child } => {
                let prefix = match kind {
                    FilterKind::Repo => "repo:",
                    FilterKind::Revision => "rev:",
                    FilterKind::File => "file:",
                    FilterKind::Symbol => "sym:",
                };
                out.push_str(prefix);
                match child {
                    Some(c) => c.render(out, None),
                    None if argument.bytes().any(|b| b.is_ascii_whitespace() || b == b'(' || b == b')') => {
                        out.push('"');
                        out.push_str(argument);
                        out.push('"');
                    }
                    None => out.push_str(argument),
                }
            }
        }
        if needs_parens {
            out.push(')');
        }
    }

    /// All content atoms (terms and regexes), including `sym:` children.
    pub fn atoms(&self) -> Vec<&QueryNode> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a QueryNode>) {
        match self {
            QueryNode::Term { .. } | QueryNode::Regex { .. } => out.push(self),
            QueryNode::And(cs) | QueryNode::Or(cs) => {
                for c in cs {
                    c.collect_atoms(out);
                }
            }
            QueryNode::Filter { child, .. } => {
                if let Some(c) = child {
                    c.collect_atoms(out);
                }
            }
        }
    }
}

impl fmt::Display for QueryNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_query_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(t: &str) -> QueryNode {
        QueryNode::Term { text: t.into(), case_sensitive: false }
    }

    fn quoted(t: &str) -> QueryNode {
        QueryNode::Term { text: t.into(), case_sensitive: true }
    }

    #[test]
    fn parses_filters_and_terms_into_flat_and() {
        let got = parse_query("repo:projA rev:abc123 parseConfig loadYaml").unwrap();
        assert_eq!(
            got,
            QueryNode::And(vec![
                QueryNode::Filter { kind: FilterKind::Repo, argument: "projA".into(), child: None },
                QueryNode::Filter {
                    kind: FilterKind::Revision,
                    argument: "abc123".into(),
                    child: None
                },
                term("parseConfig"),
                term("loadYaml"),
            ])
        );
    }

    #[test]
    fn parses_or() {
        assert_eq!(
            parse_query("foo or bar").unwrap(),
            QueryNode::Or(vec![term("foo"), term("bar")])
        );
        assert_eq!(
            parse_query("a b or c d").unwrap(),
            QueryNode::Or(vec![
                QueryNode::And(vec![term("a"), term("b")]),
                QueryNode::And(vec![term("c"), term("d")]),
            ])
        );
    }

    #[test]
    fn parses_regex_atom() {
        assert_eq!(
            parse_query("repo:projA /pars.Config/").unwrap(),
            QueryNode::And(vec![
                QueryNode::Filter { kind: FilterKind::Repo, argument: "projA".into(), child: None },
                QueryNode::Regex { pattern: "pars.Config".into() },
            ])
        );
    }

    #[test]
    fn quoted_terms_are_case_sensitive() {
        assert_eq!(parse_query("\"Exact Phrase\"").unwrap(), quoted("Exact Phrase"));
        assert_eq!(parse_query("bare").unwrap(), term("bare"));
    }

    #[test]
    fn sym_wraps_following_atom() {
        let got = parse_query("sym:parseConfig").unwrap();
        assert_eq!(
            got,
            QueryNode::Filter {
                kind: FilterKind::Symbol,
                argument: "parseConfig".into(),
                child: Some(Box::new(term("parseConfig"))),
            }
        );
        let re = parse_query("sym:/parse.*/").unwrap();
        match re {
            QueryNode::Filter { kind: FilterKind::Symbol, child: Some(c), .. } => {
                assert_eq!(*c, QueryNode::Regex { pattern: "parse.*".into() });
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parens_group() {
        assert_eq!(
            parse_query("a (b or c)").unwrap(),
            QueryNode::And(vec![term("a"), QueryNode::Or(vec![term("b"), term("c")])])
        );
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(parse_query("").unwrap_err().position, 0);
        assert_eq!(parse_query("   ").unwrap_err().position, 0);
        assert_eq!(parse_query("\"open").unwrap_err().position, 0);
        assert_eq!(parse_query("a \"open").unwrap_err().position, 2);
        assert!(parse_query("(a b").is_err());
        assert!(parse_query("a )").is_err());
        assert!(parse_query("or a").is_err());
        assert!(parse_query("a or").is_err());
        assert!(parse_query("/a{1}/").is_err());
        assert!(parse_query("rev:a rev:b").is_err());
    }

    #[test]
    fn unknown_prefix_is_a_plain_term() {
        assert_eq!(parse_query("foo:bar").unwrap(), term("foo:bar"));
    }

    #[test]
    fn slash_inside_word_is_not_a_regex() {
        assert_eq!(
            parse_query("file:src/main.py").unwrap(),
            QueryNode::Filter {
                kind: FilterKind::File,
                argument: "src/main.py".into(),
                child: None
            }
        );
        assert_eq!(parse_query("foo/bar").unwrap(), term("foo/bar"));
    }

    #[test]
    fn render_round_trips() {
        for q in [
            "repo:projA rev:abc123 parseConfig loadYaml",
            "foo or bar",
            "a b or c d",
            "a (b or c)",
            "\"Quoted Phrase\" bare",
            "sym:parseConfig file:src",
            "repo:projA /pars.Config/",
            "(a or b) or c",
        ] {
            let tree = parse_query(q).unwrap();
            let rendered = tree.to_query_string();
            let reparsed = parse_query(&rendered)
                .unwrap_or_else(|e| panic!("rendered `{rendered}` failed: {e}"));
            assert_eq!(tree, reparsed, "round-trip of `{q}` via `{rendered}`");
        }
    }
}
