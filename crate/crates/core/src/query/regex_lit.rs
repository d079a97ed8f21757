//! Conservative regex dialect: validation and mandatory-literal analysis.
//!
//! The supported subset is literals, character classes, `.`, `*`, `+`,
//! `?`, alternation, grouping and the anchors `^`, `$`, `\b`. No counted
//! repetition, no backreferences, no lookaround. Every accepted pattern
//! also compiles under the `regex` crate, which does the actual matching;
//! this module only decides validity and which literal substrings a match
//! must contain (used for trigram planning).

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ast {
    /// Ordered sequence.
    Concat(Vec<Ast>),
    /// At least two branches.
    Alt(Vec<Ast>),
    /// One literal scalar (possibly multi-byte UTF-8).
    Literal(Vec<u8>),
    /// `[...]`, `.`, `\d`, `\w`, `\s` and friends: one unknown scalar.
    Class,
    /// `^`, `$`, `\b`: zero-width.
    Anchor,
    Star(Box<Ast>),
    Plus(Box<Ast>),
    Opt(Box<Ast>),
    Empty,
}

/// Literal substrings a match is guaranteed to contain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LitExpr {
    /// No constraint.
    True,
    /// Every child constraint holds.
    AllOf(Vec<LitExpr>),
    /// At least one child constraint holds.
    AnyOf(Vec<LitExpr>),
    /// This exact byte string appears in the matched text.
    Lit(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialectError {
    /// Byte position within the pattern.
    pub position: usize,
    pub message: String,
}

impl fmt::Display for DialectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.message, self.position)
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

/// Parse and validate a pattern against the dialect.
pub fn parse(pattern: &str) -> Result<Ast, DialectError> {
    if pattern.is_empty() {
        return Err(DialectError { position: 0, message: "empty regex".into() });
    }
    let mut p = Parser { bytes: pattern.as_bytes(), pos: 0 };
    let ast = p.alt()?;
    if p.pos < p.bytes.len() {
        return Err(p.err("unexpected `)`"));
    }
    Ok(ast)
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> DialectError {
        DialectError { position: self.pos, message: message.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn alt(&mut self) -> Result<Ast, DialectError> {
        let mut branches = vec![self.concat()?];
        while self.peek() == Some(b'|') {
            self.pos += 1;
            branches.push(self.concat()?);
        }
        Ok(if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            Ast::Alt(branches)
        })
    }

    fn concat(&mut self) -> Result<Ast, DialectError> {
        let mut parts = Vec::new();
        while let Some(b) = self.peek() {
            if b == b'|' || b == b')' {
                break;
            }
            parts.push(self.repeat()?);
        }
        Ok(match parts.len() {
            0 => Ast::Empty,
            1 => parts.pop().unwrap(),
            _ => Ast::Concat(parts),
        })
    }

    fn repeat(&mut self) -> Result<Ast, DialectError> {
        let atom = self.atom()?;
        let wrapped = match self.peek() {
            Some(b'*') => {
                self.pos += 1;
                Ast::Star(Box::new(atom))
            }
            Some(b'+') => {
                self.pos += 1;
                Ast::Plus(Box::new(atom))
            }
            Some(b'?') => {
                self.pos += 1;
                Ast::Opt(Box::new(atom))
            }
            _ => return Ok(atom),
        };
        if matches!(self.peek(), Some(b'*') | Some(b'+') | Some(b'?')) {
            return Err(self.err("double quantifier"));
        }
        Ok(wrapped)
    }

    fn atom(&mut self) -> Result<Ast, DialectError> {
        let b = self.peek().expect("caller checked");
        match b {
            b'(' => {
                let open = self.pos;
                self.pos += 1;
                if self.peek() == Some(b'?') {
                    self.pos += 1;
                    return Err(self.err("group extensions `(?...)` are not supported"));
                }
                let inner = self.alt()?;
                if self.peek() != Some(b')') {
                    self.pos = open;
                    return Err(self.err("unclosed group"));
                }
                self.pos += 1;
                Ok(inner)
            }
            b'[' => self.class(),
            b'.' => {
                self.pos += 1;
                Ok(Ast::Class)
            }
            b'^' | b'$' => {
                self.pos += 1;
                Ok(Ast::Anchor)
            }
            b'\\' => self.escape(),
            b'*' | b'+' | b'?' => Err(self.err("quantifier with nothing to repeat")),
            b'{' | b'}' => Err(self.err("counted repetition is not supported; escape braces")),
            _ => {
                // one scalar, possibly multi-byte
                let start = self.pos;
                self.pos += utf8_len(b);
                if self.pos > self.bytes.len() {
                    self.pos = start;
                    return Err(self.err("invalid UTF-8 in pattern"));
                }
                Ok(Ast::Literal(self.bytes[start..self.pos].to_vec()))
            }
        }
    }

    fn escape(&mut self) -> Result<Ast, DialectError> {
        let start = self.pos;
        self.pos += 1;
        let Some(c) = self.peek() else {
            self.pos = start;
            return Err(self.err("trailing backslash"));
        };
        self.pos += 1;
        match c {
            b'b' => Ok(Ast::Anchor),
            b'd' | b'w' | b's' | b'D' | b'W' | b'S' => Ok(Ast::Class),
            b'n' => Ok(Ast::Literal(vec![b'\n'])),
            b't' => Ok(Ast::Literal(vec![b'\t'])),
            b'r' => Ok(Ast::Literal(vec![b'\r'])),
            _ if c.is_ascii_alphanumeric() => {
                self.pos = start;
                Err(self.err("unsupported escape"))
            }
            _ => Ok(Ast::Literal(vec![c])),
        }
    }

    fn class(&mut self) -> Result<Ast, DialectError> {
        let open = self.pos;
        self.pos += 1; // consume '['
        if self.peek() == Some(b'^') {
            self.pos += 1;
        }
        let mut any = false;
        loop {
            match self.peek() {
                None => {
                    self.pos = open;
                    return Err(self.err("unclosed character class"));
                }
                Some(b']') if any => {
                    self.pos += 1;
                    return Ok(Ast::Class);
                }
                Some(b']') => {
                    return Err(self.err("empty character class"));
                }
                Some(b'\\') => {
                    self.pos += 1;
                    if self.peek().is_none() {
                        self.pos = open;
                        return Err(self.err("unclosed character class"));
                    }
                    self.pos += 1;
                    any = true;
                }
                Some(_) => {
                    self.pos += 1;
                    any = true;
                }
            }
        }
    }
}

fn utf8_len(first: u8) -> usize {
    match first {
        0..=0x7f => 1,
        0xc0..=0xdf => 2,
        0xe0..=0xef => 3,
        _ => 4,
    }
}

/// Literal substrings every match of `ast` must contain.
///
/// Conservative: quantified and optional parts contribute nothing, and
/// non-literal elements break literal runs, so the result may be weaker
/// than the true requirement but never stronger.
pub fn required_literals(ast: &Ast) -> LitExpr {
    match ast {
        Ast::Literal(bytes) => LitExpr::Lit(bytes.clone()),
        Ast::Class | Ast::Anchor | Ast::Empty | Ast::Star(_) | Ast::Opt(_) => LitExpr::True,
        Ast::Plus(inner) => required_literals(inner),
        Ast::Alt(branches) => {
            simplify_any(branches.iter().map(required_literals).collect())
        }
        Ast::Concat(parts) => {
            let mut out: Vec<LitExpr> = Vec::new();
            let mut run: Vec<u8> = Vec::new();
            for part in parts {
                if let Ast::Literal(bytes) = part {
                    run.extend_from_slice(bytes);
                    continue;
                }
                if !run.is_empty() {
                    out.push(LitExpr::Lit(std::mem::take(&mut run)));
                }
                match required_literals(part) {
                    LitExpr::True => {}
                    other => out.push(other),
                }
            }
            if !run.is_empty() {
                out.push(LitExpr::Lit(run));
            }
            simplify_all(out)
        }
    }
}

fn simplify_all(mut children: Vec<LitExpr>) -> LitExpr {
    children.retain(|c| *c != LitExpr::True);
    match children.len() {
        0 => LitExpr::True,
        1 => children.pop().unwrap(),
        _ => LitExpr::AllOf(children),
    }
}

fn simplify_any(children: Vec<LitExpr>) -> LitExpr {
    if children.iter().any(|c| *c == LitExpr::True) {
        return LitExpr::True;
    }
    let mut children = children;
    match children.len() {
        0 => LitExpr::True,
        1 => children.pop().unwrap(),
        _ => LitExpr::AnyOf(children),
    }
}
