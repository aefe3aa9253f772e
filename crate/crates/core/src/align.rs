//! Tokenization with offsets, span-to-token alignment and mean pooling.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::transforms::TargetSpan;

/// Recorded in store metadata by every producer that follows the overlap
/// rule and mean pooling below.
pub const POOLING_MEAN_OVERLAP: &str = "mean-overlap";
pub const POOLING_LAST_TOKEN: &str = "last-token";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetToken {
    pub token_id: u32,
    pub char_range: Range<usize>,
}

/// One token per UTF-8 byte; the id is the byte value.
pub fn byte_tokenize(text: &str) -> Result<Vec<OffsetToken>> {
    if text.is_empty() {
        return Err(Error::validation("cannot tokenize empty text"));
    }
    Ok(text
        .bytes()
        .enumerate()
        .map(|(i, b)| OffsetToken {
            token_id: u32::from(b),
            char_range: i..i + 1,
        })
        .collect())
}

/// Contiguous range of tokens overlapping `span` by at least one character.
///
/// Tokens must be sorted by offset. Zero-width tokens never overlap.
pub fn target_token_span(tokens: &[OffsetToken], span: Range<usize>) -> Result<Range<usize>> {
    let overlaps = |t: &OffsetToken| t.char_range.start < span.end && span.start < t.char_range.end;
    let first = tokens.iter().position(overlaps);
    let last = tokens.iter().rposition(overlaps);
    match (first, last) {
        (Some(f), Some(l)) => Ok(f..l + 1),
        _ => Err(Error::Alignment(format!(
            "no token overlaps character span {}..{}",
            span.start, span.end
        ))),
    }
}

/// Resolves a probe target to token indices; `LastToken` is the final token.
pub fn resolve_span(tokens: &[OffsetToken], target: &TargetSpan) -> Result<Range<usize>> {
    match target {
        TargetSpan::Chars(r) => target_token_span(tokens, r.clone()),
        TargetSpan::LastToken => match tokens.len() {
            0 => Err(Error::Alignment("empty token sequence".into())),
            n => Ok(n - 1..n),
        },
    }
}

/// Component-wise mean of `states[span]`, accumulated in `f64`.
pub fn pool_vectors<T, V>(states: &[V], span: Range<usize>) -> Result<Vec<f64>>
where
    T: Copy + Into<f64>,
    V: AsRef<[T]>,
{
    if span.is_empty() {
        return Err(Error::validation("cannot pool an empty token span"));
    }
    if span.end > states.len() {
        return Err(Error::validation(format!(
            "token span {}..{} exceeds sequence length {}",
            span.start,
            span.end,
            states.len()
        )));
    }
    let dim = states[span.start].as_ref().len();
    let mut acc = vec![0.0f64; dim];
    for row in &states[span.clone()] {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(Error::validation(format!(
                "state width {} differs from {dim}",
                row.len()
            )));
        }
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += x.into();
        }
    }
    let n = span.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(start: usize, end: usize) -> OffsetToken {
        OffsetToken {
            token_id: 0,
            char_range: start..end,
        }
    }

    #[test]
    fn byte_tokens() {
        let t = byte_tokenize("ab c").unwrap();
        let ids: Vec<u32> = t.iter().map(|t| t.token_id).collect();
        assert_eq!(ids, [97, 98, 32, 99]);
        assert_eq!(t[3].char_range, 3..4);
        assert_eq!(byte_tokenize("é").unwrap().len(), 2);
        assert!(byte_tokenize("").is_err());
    }

    #[test]
    fn byte_tokens_round_trip() {
        let text = "naïve café";
        let bytes: Vec<u8> = byte_tokenize(text)
            .unwrap()
            .iter()
            .map(|t| t.token_id as u8)
            .collect();
        assert_eq!(String::from_utf8(bytes).unwrap(), text);
    }

    #[test]
    fn byte_spans_coincide() {
        let t = byte_tokenize("the bank").unwrap();
        assert_eq!(target_token_span(&t, 4..8).unwrap(), 4..8);
        assert_eq!(target_token_span(&t, 0..3).unwrap(), 0..3);
    }

    #[test]
    fn subword_overlap() {
        // "the bank" split as "the" " ba" "nk" with the leading space glued on.
        let tokens = [tok(0, 3), tok(3, 7), tok(7, 8)];
        assert_eq!(target_token_span(&tokens, 4..8).unwrap(), 1..3);
        // "bank" as one piece per half.
        let tokens = [tok(0, 3), tok(3, 4), tok(4, 7), tok(7, 8)];
        assert_eq!(target_token_span(&tokens, 4..8).unwrap(), 2..4);
    }

    #[test]
    fn no_overlap_is_alignment_error() {
        let tokens = [tok(0, 3)];
        assert!(matches!(
            target_token_span(&tokens, 5..6),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn last_token() {
        let t = byte_tokenize("abc :").unwrap();
        assert_eq!(resolve_span(&t, &TargetSpan::LastToken).unwrap(), 4..5);
    }

    #[test]
    fn pool_basic() {
        let states = vec![vec![0.0f32, 2.0], vec![2.0, 4.0]];
        assert_eq!(pool_vectors(&states, 0..2).unwrap(), vec![1.0, 3.0]);
        assert_eq!(pool_vectors(&states, 1..2).unwrap(), vec![2.0, 4.0]);
        assert!(pool_vectors(&states, 1..1).is_err());
        assert!(pool_vectors(&states, 1..3).is_err());
    }

    #[test]
    fn pool_matches_summation_oracle() {
        let states = [
            [0.1234567890123f64, -3.5, 1e-3],
            [7.25, 0.333333333333, -2.0],
            [-1.0, 1.0 / 7.0, 4.5],
        ];
        let pooled = pool_vectors(&states, 0..3).unwrap();
        for d in 0..3 {
            let mut sum = 0.0;
            for row in &states {
                sum += row[d];
            }
            assert!((pooled[d] - sum / 3.0).abs() < 1e-12);
        }
    }
}
