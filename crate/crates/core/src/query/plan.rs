//! Trigram pre-filter planning.
//!
//! A compiled query carries a set-expression over trigrams that every
//! matching file must satisfy. Terms contribute the conjunction of their
//! trigrams (case-insensitive terms expand each window into the
//! disjunction of its case-folded variants), regexes contribute the
//! trigrams of their mandatory literal runs, filters contribute nothing.

use crate::shard::Trigram;

use super::regex_lit::{self, LitExpr};
use super::QueryNode;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrigramExpr {
    /// No constraint: every file is a candidate.
    True,
    Tri(Trigram),
    /// All children must hold.
    All(Vec<TrigramExpr>),
    /// At least one child must hold.
    Any(Vec<TrigramExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledQuery {
    pub tree: QueryNode,
    pub required_trigrams: TrigramExpr,
    /// True when the pre-filter cannot narrow candidates and every file
    /// must be verified.
    pub scan_fallback: bool,
}

/// Compile a query tree into a trigram requirement plus the verification
/// tree.
pub fn plan_trigrams(node: &QueryNode) -> CompiledQuery {
    let required = requirement(node);
    let scan_fallback = required == TrigramExpr::True;
    CompiledQuery { tree: node.clone(), required_trigrams: required, scan_fallback }
}

fn requirement(node: &QueryNode) -> TrigramExpr {
    match node {
        QueryNode::Term { text, case_sensitive: true } => literal_requirement(text.as_bytes()),
        QueryNode::Term { text, case_sensitive: false } => folded_requirement(text.as_bytes()),
        QueryNode::Regex { pattern } => match regex_lit::parse(pattern) {
            Ok(ast) => lit_expr_requirement(&regex_lit::required_literals(&ast)),
            Err(_) => TrigramExpr::True,
        },
        QueryNode::And(children) => all(children.iter().map(requirement).collect()),
        QueryNode::Or(children) => any(children.iter().map(requirement).collect()),
        QueryNode::Filter { .. } => TrigramExpr::True,
    }
}

fn literal_requirement(bytes: &[u8]) -> TrigramExpr {
    if bytes.len() < 3 {
        return TrigramExpr::True;
    }
    all(bytes.windows(3).map(|w| TrigramExpr::Tri([w[0], w[1], w[2]])).collect())
}

/// Case-insensitive: each window becomes the disjunction of its ASCII
/// case-folded variants.
fn folded_requirement(bytes: &[u8]) -> TrigramExpr {
    if bytes.len() < 3 {
        return TrigramExpr::True;
    }
    all(bytes
        .windows(3)
        .map(|w| {
            let variants = case_variants([w[0], w[1], w[2]]);
            any(variants.into_iter().map(TrigramExpr::Tri).collect())
        })
        .collect())
}

fn case_variants(tri: Trigram) -> Vec<Trigram> {
    let choices: Vec<Vec<u8>> = tri
        .iter()
        .map(|&b| {
            if b.is_ascii_alphabetic() {
                vec![b.to_ascii_lowercase(), b.to_ascii_uppercase()]
            } else {
                vec![b]
            }
        })
        .collect();
    let mut out = Vec::new();
    for &a in &choices[0] {
        for &b in &choices[1] {
            for &c in &choices[2] {
                out.push([a, b, c]);
            }
        }
    }
    out
}

fn lit_expr_requirement(expr: &LitExpr) -> TrigramExpr {
    match expr {
        LitExpr::True => TrigramExpr::True,
        LitExpr::Lit(bytes) => literal_requirement(bytes),
        LitExpr::AllOf(children) => all(children.iter().map(lit_expr_requirement).collect()),
        LitExpr::AnyOf(children) => any(children.iter().map(lit_expr_requirement).collect()),
    }
}

fn all(children: Vec<TrigramExpr>) -> TrigramExpr {
    let mut flat = Vec::new();
    for c in children {
        match c {
            TrigramExpr::True => {}
            TrigramExpr::All(inner) => flat.extend(inner),
            other => flat.push(other),
        }
    }
    flat.dedup();
    match flat.len() {
        0 => TrigramExpr::True,
        1 => flat.pop().unwrap(),
        _ => TrigramExpr::All(flat),
    }
}

fn any(children: Vec<TrigramExpr>) -> TrigramExpr {
    if children.is_empty() || children.iter().any(|c| *c == TrigramExpr::True) {
        return TrigramExpr::True;
    }
    let mut flat = Vec::new();
    for c in children {
        match c {
            TrigramExpr::Any(inner) => flat.extend(inner),
            other => flat.push(other),
        }
    }
    flat.dedup();
    match flat.len() {
        1 => flat.pop().unwrap(),
        _ => TrigramExpr::Any(flat),
    }
}

impl TrigramExpr {
    /// Every trigram mentioned anywhere in the expression.
    pub fn trigrams(&self) -> Vec<Trigram> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect(&self, out: &mut Vec<Trigram>) {
        match self {
            TrigramExpr::True => {}
            TrigramExpr::Tri(t) => out.push(*t),
            TrigramExpr::All(cs) | TrigramExpr::Any(cs) => {
                for c in cs {
                    c.collect(out);
                }
            }
        }
    }

    /// Evaluate against a predicate telling whether a file contains a
    /// given trigram.
    pub fn eval(&self, has: &mut dyn FnMut(Trigram) -> bool) -> bool {
        match self {
            TrigramExpr::True => true,
            TrigramExpr::Tri(t) => has(*t),
            TrigramExpr::All(cs) => cs.iter().all(|c| c.eval(has)),
            TrigramExpr::Any(cs) => cs.iter().any(|c| c.eval(has)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;

    fn tri(s: &[u8; 3]) -> TrigramExpr {
        TrigramExpr::Tri(*s)
    }

    #[test]
    fn exact_term_requires_its_trigram_conjunction() {
        let q = parse_query("\"abcd\"").unwrap();
        let compiled = plan_trigrams(&q);
        assert_eq!(
            compiled.required_trigrams,
            TrigramExpr::All(vec![tri(b"abc"), tri(b"bcd")])
        );
        assert!(!compiled.scan_fallback);
    }

    #[test]
    fn folded_term_requires_case_variants() {
        let q = parse_query("ab_").unwrap();
        let compiled = plan_trigrams(&q);
        assert_eq!(
            compiled.required_trigrams,
            TrigramExpr::Any(vec![tri(b"ab_"), tri(b"aB_"), tri(b"Ab_"), tri(b"AB_")])
        );
    }

    #[test]
    fn regex_requires_mandatory_literal_runs() {
        let q = parse_query("/pars.Config/").unwrap();
        let compiled = plan_trigrams(&q);
        let want_runs: Vec<TrigramExpr> = vec![
            tri(b"par"),
            tri(b"ars"),
            tri(b"Con"),
            tri(b"onf"),
            tri(b"nfi"),
            tri(b"fig"),
        ];
        assert_eq!(compiled.required_trigrams, TrigramExpr::All(want_runs));
    }

    #[test]
    fn short_literal_regex_falls_back_to_scan() {
        let q = parse_query("/a+/").unwrap();
        assert!(plan_trigrams(&q).scan_fallback);
    }

    #[test]
    fn and_intersects_or_unions_filters_contribute_nothing() {
        let q = parse_query("repo:x \"abc\" \"def\"").unwrap();
        assert_eq!(
            plan_trigrams(&q).required_trigrams,
            TrigramExpr::All(vec![tri(b"abc"), tri(b"def")])
        );

        let q = parse_query("\"abc\" or \"def\"").unwrap();
        assert_eq!(
            plan_trigrams(&q).required_trigrams,
            TrigramExpr::Any(vec![tri(b"abc"), tri(b"def")])
        );

        let q = parse_query("repo:x rev:y file:z").unwrap();
        let compiled = plan_trigrams(&q);
        assert!(compiled.scan_fallback);
        assert_eq!(compiled.required_trigrams, TrigramExpr::True);
    }

    #[test]
    fn or_with_unconstrained_branch_is_unconstrained() {
        let q = parse_query("\"abc\" or ab").unwrap();
        assert!(plan_trigrams(&q).scan_fallback);
    }
}
