use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params<S> {
    pub k1: S,
    pub b: S,
}

impl<S: Scalar> Default for Bm25Params<S> {
    fn default() -> Self {
        Bm25Params { k1: S::lit(1.2), b: S::lit(0.75) }
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
pub fn idf<S: Scalar>(doc_count: usize, doc_freq: usize) -> S {
    let n = S::from_count(doc_count);
    let df = S::from_count(doc_freq);
    let half = S::lit(0.5);
    (S::one() + (n - df + half) / (df + half)).ln()
}

/// Saturated term-frequency part of BM25 for one document field.
pub fn tf_norm<S: Scalar>(tf: u32, field_len: u32, avg_len: S, p: Bm25Params<S>) -> S {
    let tf = S::from_count(tf as usize);
    let len = S::from_count(field_len as usize);
    let avg = if avg_len > S::zero() { avg_len } else { S::one() };
    tf * (p.k1 + S::one()) / (tf + p.k1 * (S::one() - p.b + p.b * len / avg))
}

pub fn bm25<S: Scalar>(tf: u32, field_len: u32, avg_len: S, idf: S, p: Bm25Params<S>) -> S {
    idf * tf_norm(tf, field_len, avg_len, p)
}
