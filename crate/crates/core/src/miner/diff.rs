//! Line-level minimal diff (shortest edit script).
//!
//! Common prefix/suffix lines are stripped first, then an LCS table over
//! the remaining middle produces the edit script. Typical inputs here are
//! a file and a lightly edited copy of it, so the middle stays small.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    /// Line present in both; payload is (original line idx, modified line idx), 0-based.
    Equal(usize, usize),
    /// Line only in modified; payload is the modified line idx.
    Insert(usize),
    /// Line only in original; payload is the original line idx.
    Delete(usize),
}

/// Minimal line edit script turning `original` into `modified`.
pub fn edit_script(original: &[&str], modified: &[&str]) -> Vec<EditOp> {
    let mut start = 0;
    while start < original.len() && start < modified.len() && original[start] == modified[start] {
        start += 1;
    }
    let mut end_a = original.len();
    let mut end_b = modified.len();
    while end_a > start && end_b > start && original[end_a - 1] == modified[end_b - 1] {
        end_a -= 1;
        end_b -= 1;
    }

    let mut ops = Vec::with_capacity(original.len().max(modified.len()));
    for i in 0..start {
        ops.push(EditOp::Equal(i, i));
    }
    ops.extend(middle_script(
        &original[start..end_a],
        &modified[start..end_b],
        start,
    ));
    for k in 0..(original.len() - end_a) {
        ops.push(EditOp::Equal(end_a + k, end_b + k));
    }
    ops
}

fn middle_script(a: &[&str], b: &[&str], base: usize) -> Vec<EditOp> {
    let n = a.len();
    let m = b.len();
    if n == 0 {
        return (0..m).map(|j| EditOp::Insert(base + j)).collect();
    }
    if m == 0 {
        return (0..n).map(|i| EditOp::Delete(base + i)).collect();
    }

    // LCS length table
    let mut dp = vec![vec![0u32; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            dp[i][j] = if a[i - 1] == b[j - 1] {
                dp[i - 1][j - 1] + 1
            } else {
                dp[i - 1][j].max(dp[i][j - 1])
            };
        }
    }

    let mut ops = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && a[i - 1] == b[j - 1] {
            ops.push(EditOp::Equal(base + i - 1, base + j - 1));
            i -= 1;
            j -= 1;
        } else if j > 0 && (i == 0 || dp[i][j - 1] >= dp[i - 1][j]) {
            ops.push(EditOp::Insert(base + j - 1));
            j -= 1;
        } else {
            ops.push(EditOp::Delete(base + i - 1));
            i -= 1;
        }
    }
    ops.reverse();
    ops
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(a: &str, b: &str) -> Vec<EditOp> {
        let al: Vec<&str> = a.lines().collect();
        let bl: Vec<&str> = b.lines().collect();
        edit_script(&al, &bl)
    }

    #[test]
    fn single_line_replacement() {
        let ops = script("a\nb\nc", "a\nX\nc");
        assert_eq!(
            ops,
            vec![
                EditOp::Equal(0, 0),
                EditOp::Delete(1),
                EditOp::Insert(1),
                EditOp::Equal(2, 2),
            ]
        );
    }

    #[test]
    fn identical_inputs_are_all_equal() {
        let ops = script("a\nb", "a\nb");
        assert_eq!(ops, vec![EditOp::Equal(0, 0), EditOp::Equal(1, 1)]);
    }

    #[test]
    fn empty_original_is_all_inserts() {
        let ops = script("", "x\ny");
        assert_eq!(ops, vec![EditOp::Insert(0), EditOp::Insert(1)]);
    }

    #[test]
    fn empty_modified_is_all_deletes() {
        let ops = script("x\ny", "");
        assert_eq!(ops, vec![EditOp::Delete(0), EditOp::Delete(1)]);
    }

    #[test]
    fn script_is_minimal_for_small_cases() {
        // one line changed out of five: exactly one delete + one insert
        let ops = script("a\nb\nc\nd\ne", "a\nb\nX\nd\ne");
        let edits = ops
            .iter()
            .filter(|o| !matches!(o, EditOp::Equal(_, _)))
            .count();
        assert_eq!(edits, 2);
    }
}
