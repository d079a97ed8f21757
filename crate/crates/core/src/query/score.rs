//! Line relevance scoring.
//!
//! The formula rewards lines matching several distinct query terms and
//! lines that declare a symbol named by a query term, with a small
//! brevity bonus. It is deliberately isolated so alternative scorers are
//! drop-in.

/// Score one matched line.
///
/// `distinct_terms` is the number of distinct query atoms matching the
/// line, `symbol_hit` whether the line declares a symbol whose name
/// matches a query atom, `line_len` the line length in bytes.
pub fn score_match(distinct_terms: usize, symbol_hit: bool, line_len: usize) -> f64 {
    let term_part = 2.0 * distinct_terms as f64;
    let symbol_part = if symbol_hit { 3.0 } else { 0.0 };
    let brevity = 1.0 / (1.0 + line_len as f64 / 100.0);
    term_part + symbol_part + brevity
}
