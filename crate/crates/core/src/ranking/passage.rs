use crate::Scalar;

pub const DEFAULT_WINDOW: u32 = 12;

/// Best proximity window over `(position, keyword)` occurrences in one field.
///
/// A window covers at most `width` consecutive positions. Its score is
/// `(distinct / total) * (distinct / span)` where `span` is the number of
/// positions from its first to its last match; the best window maximises it.
pub fn passage_score<S: Scalar>(occurrences: &mut [(u32, usize)], total_keywords: usize, width: u32) -> S {
    if occurrences.is_empty() || total_keywords == 0 || width == 0 {
        return S::zero();
    }
    occurrences.sort_unstable();
    let mut best = S::zero();
    let mut seen = vec![false; total_keywords];
    for i in 0..occurrences.len() {
        seen.iter_mut().for_each(|s| *s = false);
        let start = occurrences[i].0;
        let mut distinct = 0usize;
        for &(pos, kw) in &occurrences[i..] {
            if pos - start >= width {
                break;
            }
            if !seen[kw] {
                seen[kw] = true;
                distinct += 1;
            }
            let span = pos - start + 1;
            let score = window_score::<S>(distinct, total_keywords, span);
            if score > best {
                best = score;
            }
        }
    }
    best
}

pub fn window_score<S: Scalar>(distinct: usize, total: usize, span: u32) -> S {
    let d = S::from_count(distinct);
    d / S::from_count(total) * (d / S::from_count(span as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacent_keywords_score_one() {
        let mut occ = vec![(4, 0), (5, 1), (6, 2)];
        assert_eq!(passage_score::<f64>(&mut occ, 3, 12), 1.0);
    }

    #[test]
    fn scattered_keywords_fall_back_to_single() {
        let mut occ = vec![(0, 0), (30, 1), (60, 2)];
        assert!((passage_score::<f64>(&mut occ, 3, 12) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gap_lowers_density() {
        let mut occ = vec![(0, 0), (2, 1)];
        // both in a span of 3: (2/2)*(2/3); single word: (1/2)*(1/1)
        assert!((passage_score::<f64>(&mut occ, 2, 12) - 2.0 / 3.0).abs() < 1e-12);
        let mut far = vec![(0, 0), (11, 1)];
        assert!((passage_score::<f64>(&mut far, 2, 12) - 0.5).abs() < 1e-12);
        let mut out = vec![(0, 0), (12, 1)];
        assert!((passage_score::<f64>(&mut out, 2, 12) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_is_zero() {
        assert_eq!(passage_score::<f32>(&mut [], 3, 12), 0.0);
    }
}
