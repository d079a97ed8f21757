//! Source-language tagging, keyword tables and identifier lexing.
//!
//! The keyword tables are fixed: they contain the hard keywords of each
//! language, so declaration scanning and identifier mining can drop
//! reserved words without consulting a real parser.

use serde::{Deserialize, Serialize};

/// Language of an indexed file. Only Kotlin and Python files contribute
/// symbols and keyword filtering; everything else is content-only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Language {
    Kotlin,
    Python,
    Other,
}

impl Language {
    /// Detect a language from a file path by extension.
    pub fn from_path(path: &str) -> Language {
        let ext = path.rsplit('.').next().unwrap_or("");
        match ext {
            "kt" | "kts" => Language::Kotlin,
            "py" => Language::Python,
            _ => Language::Other,
        }
    }

    /// Line-comment token used when rendering snippet headers.
    pub fn comment_token(self) -> &'static str {
        match self {
            Language::Python => "#",
            Language::Kotlin | Language::Other => "//",
        }
    }

    /// Hard keywords of the language. Empty for `Other`.
    pub fn keywords(self) -> &'static [&'static str] {
        match self {
            Language::Python => PYTHON_KEYWORDS,
            Language::Kotlin => KOTLIN_KEYWORDS,
            Language::Other => &[],
        }
    }

    pub fn is_keyword(self, word: &str) -> bool {
        self.keywords().contains(&word)
    }
}

static PYTHON_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global",
    "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return",
    "try", "while", "with", "yield",
];

static KOTLIN_KEYWORDS: &[&str] = &[
    "as", "break", "class", "continue", "do", "else", "false", "for", "fun", "if", "in",
    "interface", "is", "null", "object", "package", "return", "super", "this", "throw",
    "true", "try", "typealias", "typeof", "val", "var", "when", "while",
];

pub fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

pub fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Iterate the lexical identifiers of a line: a letter or underscore
/// followed by alphanumerics/underscores. Yields `(byte_offset, ident)`.
pub fn identifiers(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let bytes = line.as_bytes();
    let mut pos = 0usize;
    std::iter::from_fn(move || {
        while pos < bytes.len() {
            if is_ident_start(bytes[pos]) {
                let start = pos;
                while pos < bytes.len() && is_ident_byte(bytes[pos]) {
                    pos += 1;
                }
                return Some((start, &line[start..pos]));
            }
            // skip the rest of a token that begins with a digit, so `1foo`
            // does not yield `foo`
            if bytes[pos].is_ascii_digit() {
                while pos < bytes.len() && is_ident_byte(bytes[pos]) {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        None
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_language_from_extension() {
        assert_eq!(Language::from_path("src/a.kt"), Language::Kotlin);
        assert_eq!(Language::from_path("build.kts"), Language::Kotlin);
        assert_eq!(Language::from_path("tool/b.py"), Language::Python);
        assert_eq!(Language::from_path("README.md"), Language::Other);
        assert_eq!(Language::from_path("noext"), Language::Other);
    }

    #[test]
    fn lexes_identifiers() {
        let ids: Vec<&str> = identifiers("for item in items:").map(|(_, s)| s).collect();
        assert_eq!(ids, vec!["for", "item", "in", "items"]);
    }

    #[test]
    fn skips_number_prefixed_tokens() {
        let ids: Vec<&str> = identifiers("x = 1.5e3 + 0xFF + y2").map(|(_, s)| s).collect();
        assert_eq!(ids, vec!["x", "y2"]);
    }

    #[test]
    fn keyword_tables() {
        assert!(Language::Python.is_keyword("def"));
        assert!(!Language::Python.is_keyword("self"));
        assert!(Language::Kotlin.is_keyword("val"));
        assert!(!Language::Kotlin.is_keyword("private"));
        assert!(!Language::Other.is_keyword("anything"));
    }
}
