//! Global alignment of octet sequences (Needleman-Wunsch) with optional
//! per-position weights, and the length-normalised request distance built
//! on top of it.
//!
//! The first row and column of the score matrix are fixed at zero, so gaps
//! leading up to the first consumed symbol of either sequence are free. When
//! weights are supplied every move into cell `(i, j)` is scaled by `w[k]`
//! with `k = max(i, j)` (1-based); positions past the end of the vector use
//! its default weight.

use serde::{Deserialize, Serialize};

use crate::entropy::{EntropyMethod, ScalerSpec};
use crate::scalar::{neg, Scalar};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignmentError {
    #[error("scoring requires d_identical > d_differing")]
    InvalidScoring,
    #[error("weights must lie in (0, 1]; offending position {0}")]
    InvalidWeight(usize),
    #[error("distance is undefined for an empty reference message")]
    EmptyReference,
    #[error("distance normalisation is undefined (S_max == S_min)")]
    DegenerateNormalisation,
}

/// Match, mismatch and gap scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams<T> {
    pub identical: T,
    pub differing: T,
    pub gap: T,
}

impl<T: Scalar> ScoringParams<T> {
    pub fn new(identical: T, differing: T, gap: T) -> Result<Self, AlignmentError> {
        if identical > differing {
            Ok(Self {
                identical,
                differing,
                gap,
            })
        } else {
            Err(AlignmentError::InvalidScoring)
        }
    }
}

impl<T: Scalar> Default for ScoringParams<T> {
    fn default() -> Self {
        Self {
            identical: T::one(),
            differing: neg(T::one()),
            gap: T::zero(),
        }
    }
}

/// `S(a, b)`.
pub fn score_pair<T: Scalar>(a: u8, b: u8, p: &ScoringParams<T>) -> T {
    if a == b {
        p.identical
    } else {
        p.differing
    }
}

/// Where a weights vector came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance<T> {
    pub method: EntropyMethod,
    pub scaler: ScalerSpec<T>,
    pub library_fingerprint: String,
}

/// Per-position alignment weights, 1-indexed, with a fallback for positions
/// beyond the vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsVector<T> {
    weights: Vec<T>,
    default_weight: T,
    provenance: Option<Provenance<T>>,
}

impl<T: Scalar> WeightsVector<T> {
    pub fn new(weights: Vec<T>, default_weight: T) -> Result<Self, AlignmentError> {
        let in_range = |w: &T| *w > T::zero() && *w <= T::one();
        if let Some(pos) = weights.iter().position(|w| !in_range(w)) {
            return Err(AlignmentError::InvalidWeight(pos + 1));
        }
        if !in_range(&default_weight) {
            return Err(AlignmentError::InvalidWeight(0));
        }
        Ok(Self {
            weights,
            default_weight,
            provenance: None,
        })
    }

    /// All positions weighted 1; alignment under this vector equals the
    /// unweighted alignment.
    pub fn uniform(len: usize) -> Self {
        Self {
            weights: vec![T::one(); len],
            default_weight: T::one(),
            provenance: None,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance<T>) -> Self {
        self.provenance = Some(provenance);
        self
    }

    /// Weight of 1-based position `k`.
    pub fn weight(&self, k: usize) -> T {
        debug_assert!(k >= 1);
        self.weights
            .get(k.wrapping_sub(1))
            .copied()
            .unwrap_or(self.default_weight)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn default_weight(&self) -> T {
        self.default_weight
    }

    pub fn provenance(&self) -> Option<&Provenance<T>> {
        self.provenance.as_ref()
    }
}

/// Optimal score plus one optimal alignment; `None` marks a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult<T> {
    pub score: T,
    pub aligned_a: Vec<Option<u8>>,
    pub aligned_b: Vec<Option<u8>>,
}

impl<T> AlignmentResult<T> {
    /// Both rows as text, `-` for gaps and `.` for unprintable octets.
    pub fn render(&self) -> (String, String) {
        fn row(cells: &[Option<u8>]) -> String {
            cells
                .iter()
                .map(|c| match c {
                    None => '-',
                    Some(b) if b.is_ascii_graphic() || *b == b' ' => *b as char,
                    Some(_) => '.',
                })
                .collect()
        }
        (row(&self.aligned_a), row(&self.aligned_b))
    }
}

/// `w[k]` for `k = 0..=upto`; slot 0 is unused.
fn position_weights<T: Scalar>(w: Option<&WeightsVector<T>>, upto: usize) -> Vec<T> {
    match w {
        None => vec![T::one(); upto + 1],
        Some(w) => {
            let mut out = Vec::with_capacity(upto + 1);
            out.push(T::zero());
            out.extend((1..=upto).map(|k| w.weight(k)));
            out
        }
    }
}

/// Best of the three candidate moves, ties resolved diagonal > up > left.
#[inline]
fn best<T: Scalar>(diag: T, up: T, left: T) -> T {
    let mut m = diag;
    if up > m {
        m = up;
    }
    if left > m {
        m = left;
    }
    m
}

fn fill_matrix<T: Scalar>(m1: &[u8], m2: &[u8], p: &ScoringParams<T>, wk: &[T]) -> Vec<T> {
    let cols = m2.len() + 1;
    let mut f = vec![T::zero(); (m1.len() + 1) * cols];
    for i in 1..=m1.len() {
        for j in 1..=m2.len() {
            let w = wk[i.max(j)];
            let diag = f[(i - 1) * cols + j - 1] + w * score_pair(m1[i - 1], m2[j - 1], p);
            let up = f[(i - 1) * cols + j] + w * p.gap;
            let left = f[i * cols + j - 1] + w * p.gap;
            f[i * cols + j] = best(diag, up, left);
        }
    }
    f
}

fn align_with<T: Scalar>(
    m1: &[u8],
    m2: &[u8],
    p: &ScoringParams<T>,
    w: Option<&WeightsVector<T>>,
) -> AlignmentResult<T> {
    let wk = position_weights(w, m1.len().max(m2.len()));
    let f = fill_matrix(m1, m2, p, &wk);
    let cols = m2.len() + 1;
    let at = |i: usize, j: usize| f[i * cols + j];

    let mut a = Vec::with_capacity(m1.len() + m2.len());
    let mut b = Vec::with_capacity(m1.len() + m2.len());
    let (mut i, mut j) = (m1.len(), m2.len());
    while i > 0 && j > 0 {
        let w = wk[i.max(j)];
        let here = at(i, j);
        if here == at(i - 1, j - 1) + w * score_pair(m1[i - 1], m2[j - 1], p) {
            a.push(Some(m1[i - 1]));
            b.push(Some(m2[j - 1]));
            i -= 1;
            j -= 1;
        } else if here == at(i - 1, j) + w * p.gap {
            a.push(Some(m1[i - 1]));
            b.push(None);
            i -= 1;
        } else {
            debug_assert!(here == at(i, j - 1) + w * p.gap);
            a.push(None);
            b.push(Some(m2[j - 1]));
            j -= 1;
        }
    }
    while i > 0 {
        a.push(Some(m1[i - 1]));
        b.push(None);
        i -= 1;
    }
    while j > 0 {
        a.push(None);
        b.push(Some(m2[j - 1]));
        j -= 1;
    }
    a.reverse();
    b.reverse();
    AlignmentResult {
        score: at(m1.len(), m2.len()),
        aligned_a: a,
        aligned_b: b,
    }
}

/// Plain Needleman-Wunsch with traceback.
pub fn align<T: Scalar>(m1: &[u8], m2: &[u8], p: &ScoringParams<T>) -> AlignmentResult<T> {
    align_with(m1, m2, p, None)
}

/// Weighted Needleman-Wunsch with traceback.
pub fn align_weighted<T: Scalar>(
    m1: &[u8],
    m2: &[u8],
    p: &ScoringParams<T>,
    w: &WeightsVector<T>,
) -> AlignmentResult<T> {
    align_with(m1, m2, p, Some(w))
}

/// Terminal matrix score without traceback, in `O(|m2|)` memory.
pub fn alignment_score<T: Scalar>(
    m1: &[u8],
    m2: &[u8],
    p: &ScoringParams<T>,
    w: Option<&WeightsVector<T>>,
) -> T {
    let wk = position_weights(w, m1.len().max(m2.len()));
    let mut prev = vec![T::zero(); m2.len() + 1];
    let mut cur = vec![T::zero(); m2.len() + 1];
    for i in 1..=m1.len() {
        let a = m1[i - 1];
        cur[0] = T::zero();
        for j in 1..=m2.len() {
            let w = wk[i.max(j)];
            let diag = prev[j - 1] + w * score_pair(a, m2[j - 1], p);
            let up = prev[j] + w * p.gap;
            let left = cur[j - 1] + w * p.gap;
            cur[j] = best(diag, up, left);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m2.len()]
}

fn weighted_sum<T: Scalar>(len: usize, per_symbol: T, w: Option<&WeightsVector<T>>) -> T {
    (1..=len).fold(T::zero(), |acc, i| {
        let wi = w.map_or(T::one(), |w| w.weight(i));
        acc + wi * per_symbol
    })
}

/// Highest achievable score for `m1`: every symbol aligned with itself.
pub fn score_max<T: Scalar>(m1: &[u8], p: &ScoringParams<T>, w: Option<&WeightsVector<T>>) -> T {
    weighted_sum(m1.len(), p.identical, w)
}

/// Lowest score for `m1`: every symbol aligned with a symbol outside the
/// alphabet, which always scores `d_differing`.
pub fn score_min<T: Scalar>(m1: &[u8], p: &ScoringParams<T>, w: Option<&WeightsVector<T>>) -> T {
    weighted_sum(m1.len(), p.differing, w)
}

/// `(S_max(m1) - Score(m1, m2)) / (S_max(m1) - S_min(m1))`.
///
/// Normalised against `m1`, the live request; `D(m, m) = 0`.
pub fn distance<T: Scalar>(
    m1: &[u8],
    m2: &[u8],
    p: &ScoringParams<T>,
    w: Option<&WeightsVector<T>>,
) -> Result<T, AlignmentError> {
    if m1.is_empty() {
        return Err(AlignmentError::EmptyReference);
    }
    let max = score_max(m1, p, w);
    let span = max - score_min(m1, p, w);
    if span <= T::zero() {
        return Err(AlignmentError::DegenerateNormalisation);
    }
    Ok((max - alignment_score(m1, m2, p, w)) / span)
}
