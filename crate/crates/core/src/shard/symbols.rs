//! Lexical symbol extraction for Kotlin and Python.
//!
//! Declarations are recognized line by line:
//! - Python: optional indentation, then `def <ident>` (Function) or
//!   `class <ident>` (Class).
//! - Kotlin: optional leading modifier words, then `fun <ident>`
//!   (Function) or `class`/`interface`/`object` `<ident>` (Class).
//!
//! A syntax-tree extractor can be swapped in behind the same operation.

use thiserror::Error;

use crate::lang::{identifiers, is_ident_byte, Language};

use super::{SymbolEntry, SymbolKind};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("symbol extraction is only supported for Kotlin and Python")]
pub struct UnsupportedLanguage;

/// Extract declared functions and classes, ordered by (line, name).
pub fn extract_symbols(
    path: &str,
    content: &str,
    language: Language,
) -> Result<Vec<SymbolEntry>, UnsupportedLanguage> {
    if language == Language::Other {
        return Err(UnsupportedLanguage);
    }
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = (i + 1) as u32;
        if let Some((name, kind)) = declaration_on_line(line, language) {
            out.push(SymbolEntry {
                name: name.to_string(),
                kind,
                path: path.to_string(),
                line: line_no,
            });
        }
    }
    out.sort_by(|a, b| (a.line, &a.name).cmp(&(b.line, &b.name)));
    Ok(out)
}

/// The declared name on a line, if the line is a declaration.
pub fn declaration_on_line(line: &str, language: Language) -> Option<(&str, SymbolKind)> {
    match language {
        Language::Python => python_declaration(line),
        Language::Kotlin => kotlin_declaration(line),
        Language::Other => None,
    }
}

fn python_declaration(line: &str) -> Option<(&str, SymbolKind)> {
    let trimmed = line.trim_start();
    if let Some(rest) = keyword_then_rest(trimmed, "def") {
        return leading_ident(rest).map(|n| (n, SymbolKind::Function));
    }
    if let Some(rest) = keyword_then_rest(trimmed, "class") {
        return leading_ident(rest).map(|n| (n, SymbolKind::Class));
    }
    None
}

fn kotlin_declaration(line: &str) -> Option<(&str, SymbolKind)> {
    // Walk word tokens from the start of the line; anything before the
    // declaring keyword is treated as a modifier.
    let mut rest = line.trim_start();
    loop {
        if let Some(r) = keyword_then_rest(rest, "fun") {
            return leading_ident(r).map(|n| (n, SymbolKind::Function));
        }
        for kw in ["class", "interface", "object"] {
            if let Some(r) = keyword_then_rest(rest, kw) {
                return leading_ident(r).map(|n| (n, SymbolKind::Class));
            }
        }
        // consume one modifier word, or give up
        let (_, word) = identifiers(rest).next().filter(|&(off, _)| off == 0)?;
        rest = rest[word.len()..].trim_start();
        if rest.is_empty() {
            return None;
        }
    }
}

/// If `text` starts with the word `kw` followed by whitespace, return the
/// remainder after that whitespace.
fn keyword_then_rest<'a>(text: &'a str, kw: &str) -> Option<&'a str> {
    let rest = text.strip_prefix(kw)?;
    let first = *rest.as_bytes().first()?;
    if is_ident_byte(first) {
        return None; // e.g. "define" is not "def"
    }
    let trimmed = rest.trim_start();
    if trimmed.len() == rest.len() {
        return None; // no whitespace after the keyword
    }
    Some(trimmed)
}

fn leading_ident(text: &str) -> Option<&str> {
    identifiers(text).next().filter(|&(off, _)| off == 0).map(|(_, s)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(content: &str, lang: Language) -> Vec<(String, SymbolKind, u32)> {
        extract_symbols("f", content, lang)
            .unwrap()
            .into_iter()
            .map(|s| (s.name, s.kind, s.line))
            .collect()
    }

    #[test]
    fn python_class_and_method() {
        let got = names("class A:\n  def m(self): ...\n", Language::Python);
        assert_eq!(
            got,
            vec![
                ("A".into(), SymbolKind::Class, 1),
                ("m".into(), SymbolKind::Function, 2)
            ]
        );
    }

    #[test]
    fn kotlin_fun_with_and_without_modifiers() {
        assert_eq!(
            names("fun plus(a: Int) = a", Language::Kotlin),
            vec![("plus".into(), SymbolKind::Function, 1)]
        );
        assert_eq!(
            names("private inline fun helper() {}\n", Language::Kotlin),
            vec![("helper".into(), SymbolKind::Function, 1)]
        );
        assert_eq!(
            names("data class Point(val x: Int)\n", Language::Kotlin),
            vec![("Point".into(), SymbolKind::Class, 1)]
        );
        assert_eq!(
            names("object Registry {}\n", Language::Kotlin),
            vec![("Registry".into(), SymbolKind::Class, 1)]
        );
    }

    #[test]
    fn empty_file_yields_nothing() {
        assert!(names("", Language::Python).is_empty());
        assert!(names("", Language::Kotlin).is_empty());
    }

    #[test]
    fn non_declarations_are_ignored() {
        assert!(names("defined = 1\nclassic = 2\n", Language::Python).is_empty());
        assert!(names("x = call(def_value)\n", Language::Python).is_empty());
        assert!(names("val funky = 1\n", Language::Kotlin).is_empty());
    }

    #[test]
    fn other_language_is_an_error() {
        assert_eq!(
            extract_symbols("f", "fn main() {}", Language::Other).unwrap_err(),
            UnsupportedLanguage
        );
    }
}
