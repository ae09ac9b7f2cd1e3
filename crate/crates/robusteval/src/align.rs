//! Levenshtein alignment between hypothesis and reference token sequences,
//! and the OK/BAD tag sequences read off the resulting edit script.
//!
//! Edit operations are named from the hypothesis point of view: an `Insert`
//! is a hypothesis token with no reference counterpart, a `Delete` is a
//! reference token missing from the hypothesis. Deletions have no hypothesis
//! position and therefore never surface in the tags; omissions are only
//! visible to the lexical scores.

use serde::Serialize;
use thiserror::Error;

use crate::text::TokenSequence;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("edit script does not cover hypothesis of length {expected}: {detail}")]
    InvalidScript { expected: usize, detail: String },
}

/// One step of a minimal edit script.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EditOp {
    Match { hyp_index: usize, ref_index: usize },
    Substitute { hyp_index: usize, ref_index: usize },
    Insert { hyp_index: usize },
    Delete { ref_index: usize },
}

impl EditOp {
    pub fn hyp_index(&self) -> Option<usize> {
        match *self {
            EditOp::Match { hyp_index, .. }
            | EditOp::Substitute { hyp_index, .. }
            | EditOp::Insert { hyp_index } => Some(hyp_index),
            EditOp::Delete { .. } => None,
        }
    }

    pub fn ref_index(&self) -> Option<usize> {
        match *self {
            EditOp::Match { ref_index, .. }
            | EditOp::Substitute { ref_index, .. }
            | EditOp::Delete { ref_index } => Some(ref_index),
            EditOp::Insert { .. } => None,
        }
    }

    pub fn is_match(&self) -> bool {
        matches!(self, EditOp::Match { .. })
    }
}

/// Per-hypothesis-token quality tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tag {
    Ok,
    Bad,
}

impl std::fmt::Display for Tag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tag::Ok => write!(f, "OK"),
            Tag::Bad => write!(f, "BAD"),
        }
    }
}

/// Ordered OK/BAD tags, one per hypothesis token.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagSequence(Vec<Tag>);

impl TagSequence {
    pub fn from_tags(tags: Vec<Tag>) -> Self {
        Self(tags)
    }

    pub fn tags(&self) -> &[Tag] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tag> {
        self.0.iter()
    }

    pub fn count_bad(&self) -> usize {
        self.0.iter().filter(|t| **t == Tag::Bad).count()
    }

    /// Fraction of OK tags; 0 for an empty sequence.
    pub fn ok_fraction(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            (self.0.len() - self.count_bad()) as f64 / self.0.len() as f64
        }
    }

    pub fn space_joined(&self) -> String {
        self.0
            .iter()
            .map(Tag::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Unit-cost Levenshtein alignment with a full DP matrix and deterministic
/// backtrace. Tie-breaking priority: match > substitute > delete > insert.
pub fn levenshtein_align(
    hyp: &TokenSequence,
    reference: &TokenSequence,
) -> (usize, Vec<EditOp>) {
    let h = hyp.tokens();
    let r = reference.tokens();
    let m = h.len();
    let n = r.len();

    // dist[i][j]: edits between hyp[..i] and ref[..j].
    let mut dist = vec![vec![0usize; n + 1]; m + 1];
    for (i, row) in dist.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in dist[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let diag = if h[i - 1] == r[j - 1] {
                dist[i - 1][j - 1]
            } else {
                dist[i - 1][j - 1] + 1
            };
            dist[i][j] = diag.min(dist[i - 1][j] + 1).min(dist[i][j - 1] + 1);
        }
    }

    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = dist[i][j];
        if i > 0 && j > 0 && h[i - 1] == r[j - 1] && dist[i - 1][j - 1] == here {
            ops.push(EditOp::Match {
                hyp_index: i - 1,
                ref_index: j - 1,
            });
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && h[i - 1] != r[j - 1] && dist[i - 1][j - 1] + 1 == here {
            ops.push(EditOp::Substitute {
                hyp_index: i - 1,
                ref_index: j - 1,
            });
            i -= 1;
            j -= 1;
        } else if j > 0 && dist[i][j - 1] + 1 == here {
            ops.push(EditOp::Delete { ref_index: j - 1 });
            j -= 1;
        } else {
            ops.push(EditOp::Insert { hyp_index: i - 1 });
            i -= 1;
        }
    }
    ops.reverse();
    (dist[m][n], ops)
}

/// Derives per-hypothesis-token tags from an edit script: matched tokens are
/// OK, substituted or inserted tokens are BAD, deletions tag nothing.
pub fn tags_from_alignment(
    hyp: &TokenSequence,
    ops: &[EditOp],
) -> Result<TagSequence, AlignError> {
    let len = hyp.len();
    let invalid = |detail: String| AlignError::InvalidScript {
        expected: len,
        detail,
    };

    let mut tags: Vec<Option<Tag>> = vec![None; len];
    for op in ops {
        let tag = match op {
            EditOp::Match { .. } => Tag::Ok,
            EditOp::Substitute { .. } | EditOp::Insert { .. } => Tag::Bad,
            EditOp::Delete { .. } => continue,
        };
        let idx = op.hyp_index().expect("non-delete ops carry a hyp index");
        if idx >= len {
            return Err(invalid(format!("hypothesis index {idx} out of range")));
        }
        if tags[idx].replace(tag).is_some() {
            return Err(invalid(format!("hypothesis index {idx} covered twice")));
        }
    }
    let tags: Vec<Tag> = tags
        .into_iter()
        .enumerate()
        .map(|(idx, t)| t.ok_or_else(|| invalid(format!("hypothesis index {idx} not covered"))))
        .collect::<Result<_, _>>()?;
    Ok(TagSequence(tags))
}

/// Tokenize-free convenience: align and tag in one call.
pub fn tag_hypothesis(
    hyp: &TokenSequence,
    reference: &TokenSequence,
) -> TagSequence {
    let (_, ops) = levenshtein_align(hyp, reference);
    tags_from_alignment(hyp, &ops).expect("script from levenshtein_align is always valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(tokens.iter().copied())
    }

    #[test]
    fn identical_sequences_align_with_matches() {
        let s = seq(&["a", "b", "c"]);
        let (dist, ops) = levenshtein_align(&s, &s);
        assert_eq!(dist, 0);
        assert_eq!(ops.len(), 3);
        assert!(ops.iter().all(EditOp::is_match));
    }

    #[test]
    fn single_substitution() {
        let (dist, ops) = levenshtein_align(&seq(&["a", "x", "c"]), &seq(&["a", "b", "c"]));
        assert_eq!(dist, 1);
        assert_eq!(
            ops,
            vec![
                EditOp::Match { hyp_index: 0, ref_index: 0 },
                EditOp::Substitute { hyp_index: 1, ref_index: 1 },
                EditOp::Match { hyp_index: 2, ref_index: 2 },
            ]
        );
    }

    #[test]
    fn empty_reference_yields_inserts() {
        let (dist, ops) = levenshtein_align(&seq(&["a", "b"]), &seq(&[]));
        assert_eq!(dist, 2);
        assert_eq!(
            ops,
            vec![EditOp::Insert { hyp_index: 0 }, EditOp::Insert { hyp_index: 1 }]
        );
    }

    #[test]
    fn empty_hypothesis_yields_deletes_and_no_tags() {
        let hyp = seq(&[]);
        let (dist, ops) = levenshtein_align(&hyp, &seq(&["a", "b"]));
        assert_eq!(dist, 2);
        assert_eq!(
            ops,
            vec![EditOp::Delete { ref_index: 0 }, EditOp::Delete { ref_index: 1 }]
        );
        assert!(tags_from_alignment(&hyp, &ops).unwrap().is_empty());
    }

    #[test]
    fn tags_mark_substitutions_bad() {
        let hyp = seq(&["a", "x", "c"]);
        let (_, ops) = levenshtein_align(&hyp, &seq(&["a", "b", "c"]));
        let tags = tags_from_alignment(&hyp, &ops).unwrap();
        assert_eq!(tags.tags(), &[Tag::Ok, Tag::Bad, Tag::Ok]);
    }

    #[test]
    fn leading_insert_is_bad() {
        let hyp = seq(&["z", "a", "b"]);
        let (dist, ops) = levenshtein_align(&hyp, &seq(&["a", "b"]));
        assert_eq!(dist, 1);
        let tags = tags_from_alignment(&hyp, &ops).unwrap();
        assert_eq!(tags.tags(), &[Tag::Bad, Tag::Ok, Tag::Ok]);
    }

    #[test]
    fn distance_equals_non_match_ops() {
        let cases = [
            (vec!["a", "b", "c"], vec!["a", "c"]),
            (vec!["x", "y"], vec!["a", "b", "c"]),
            (vec!["a", "a", "b"], vec!["b", "a"]),
        ];
        for (h, r) in cases {
            let hyp = seq(&h);
            let reference = seq(&r);
            let (dist, ops) = levenshtein_align(&hyp, &reference);
            let non_match = ops.iter().filter(|op| !op.is_match()).count();
            assert_eq!(dist, non_match);
            let tags = tags_from_alignment(&hyp, &ops).unwrap();
            assert!(tags.count_bad() <= dist);
            assert_eq!(tags.len(), hyp.len());
        }
    }

    #[test]
    fn swapping_arguments_swaps_insert_and_delete() {
        let a = seq(&["a", "b", "x"]);
        let b = seq(&["a", "b"]);
        let (d_ab, ops_ab) = levenshtein_align(&a, &b);
        let (d_ba, ops_ba) = levenshtein_align(&b, &a);
        assert_eq!(d_ab, d_ba);
        let inserts_ab = ops_ab.iter().filter(|o| matches!(o, EditOp::Insert { .. })).count();
        let deletes_ba = ops_ba.iter().filter(|o| matches!(o, EditOp::Delete { .. })).count();
        assert_eq!(inserts_ab, deletes_ba);
    }

    #[test]
    fn invalid_script_rejected() {
        let hyp = seq(&["a", "b"]);
        // Covers index 0 twice and index 1 never.
        let ops = vec![
            EditOp::Match { hyp_index: 0, ref_index: 0 },
            EditOp::Substitute { hyp_index: 0, ref_index: 1 },
        ];
        assert!(matches!(
            tags_from_alignment(&hyp, &ops),
            Err(AlignError::InvalidScript { expected: 2, .. })
        ));
        // Out of range index.
        let ops = vec![EditOp::Insert { hyp_index: 5 }];
        assert!(tags_from_alignment(&hyp, &ops).is_err());
    }
}
