//! Kernel temporal segmentation with a cosine kernel.
//!
//! The number of change points is not fixed up front: for every count `m`
//! the exact minimum within-segment kernel scatter is found by dynamic
//! programming, and the count minimizing
//! `scatter + penalty * m * (ln(n / m) + 1)` wins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FrameRate, ImportanceCurve, ScoredSegment, SegmentRef};
use crate::numerics::{normalized, ZERO_NORM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KtsError {
    #[error("non-finite feature at row {0}")]
    NonFinite(usize),
    #[error("feature rows have inconsistent dimensions")]
    Ragged,
    #[error("invalid KTS parameter: {0}")]
    InvalidParams(String),
    #[error("segment [{start}, {end}) exceeds the importance curve of {len} frames")]
    OutOfRange { start: u64, end: u64, len: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KtsParams {
    /// Minimum segment duration in seconds.
    pub min_segment_s: f64,
    pub penalty: f64,
    /// Upper bound on change points considered; `None` searches every count.
    pub max_change_points: Option<usize>,
}

impl Default for KtsParams {
    fn default() -> Self {
        Self { min_segment_s: 1.0, penalty: 1.0, max_change_points: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KtsResult {
    /// First frame of every segment but the first.
    pub boundaries: Vec<u64>,
    pub segments: Vec<SegmentRef>,
    /// Penalized cost of the returned segmentation.
    pub objective: f64,
    /// True when the optimum sat at the change-point cap.
    pub hit_cap: bool,
}

/// The count penalty `m * (ln(n / m) + 1)`, zero for `m = 0`.
pub fn count_penalty(m: usize, n: usize) -> f64 {
    if m == 0 {
        0.0
    } else {
        m as f64 * ((n as f64 / m as f64).ln() + 1.0)
    }
}

/// Minimum segment length in samples for a duration at `rate`.
pub fn min_segment_len(min_segment_s: f64, rate: FrameRate) -> usize {
    ((min_segment_s * rate.fps()) - 1e-9).ceil().max(1.0) as usize
}

/// Gram matrix prefix sums for O(1) segment scatter.
struct ScatterTable {
    n: usize,
    diag: Vec<f64>,
    prefix: Vec<f64>,
    /// `prefix[s][s]`, the gram sum over `[0, s)^2`.
    square: Vec<f64>,
}

impl ScatterTable {
    fn new(features: &[Vec<f64>]) -> Self {
        let n = features.len();
        let unit: Vec<Vec<f64>> = features.iter().map(|r| normalized(r)).collect();
        let zero: Vec<bool> = features.iter().map(|r| crate::numerics::norm(r.as_slice()) <= ZERO_NORM).collect();
        let kernel = |i: usize, j: usize| -> f64 {
            if zero[i] && zero[j] {
                1.0
            } else {
                crate::numerics::dot(unit[i].as_slice(), unit[j].as_slice()).clamp(-1.0, 1.0)
            }
        };

        let w = n + 1;
        let mut prefix = vec![0.0; w * w];
        let mut diag = vec![0.0; w];
        let mut gram_row = vec![0.0; n];
        for i in 0..n {
            for (j, g) in gram_row.iter_mut().enumerate() {
                *g = kernel(i, j);
            }
            diag[i + 1] = diag[i] + gram_row[i];
            let mut run = 0.0;
            for j in 0..n {
                run += gram_row[j];
                prefix[(i + 1) * w + j + 1] = prefix[i * w + j + 1] + run;
            }
        }
        let square = (0..w).map(|s| prefix[s * w + s]).collect();
        Self { n, diag, prefix, square }
    }

    /// Kernel scatter of `[s, t)`: `sum K(i,i) - (1/len) sum K(i,j)`.
    #[inline]
    fn scatter(&self, s: usize, t: usize) -> f64 {
        // The gram matrix is symmetric, so both off-diagonal blocks are
        // read from row t.
        let cross = self.prefix[t * (self.n + 1) + s];
        let block = self.square[t] - 2.0 * cross + self.square[s];
        (self.diag[t] - self.diag[s]) - block / (t - s) as f64
    }
}

/// Segments `features` (rows sampled at `rate`) into variable-length
/// segments of at least `params.min_segment_s`.
pub fn kts_segment(
    features: &[Vec<f64>],
    rate: FrameRate,
    params: &KtsParams,
) -> Result<KtsResult, KtsError> {
    if !(params.penalty.is_finite() && params.penalty > 0.0) {
        return Err(KtsError::InvalidParams(format!("penalty must be positive, got {}", params.penalty)));
    }
    if !(params.min_segment_s.is_finite() && params.min_segment_s > 0.0) {
        return Err(KtsError::InvalidParams(format!(
            "minimum duration must be positive, got {}",
            params.min_segment_s
        )));
    }
    let n = features.len();
    if let Some(first) = features.first() {
        let dim = first.len();
        for (i, r) in features.iter().enumerate() {
            if r.len() != dim {
                return Err(KtsError::Ragged);
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(KtsError::NonFinite(i));
            }
        }
    }
    if n == 0 {
        return Ok(KtsResult { boundaries: vec![], segments: vec![], objective: 0.0, hit_cap: false });
    }

    let min_len = min_segment_len(params.min_segment_s, rate);
    let mut feasible_max = (n / min_len).saturating_sub(1);
    if let Some(cap) = params.max_change_points {
        feasible_max = feasible_max.min(cap);
    }

    let table = ScatterTable::new(features);
    if feasible_max == 0 {
        return Ok(single_segment(n, rate, table.scatter(0, n)));
    }

    // cost[m][t]: least scatter of [0, t) split into m + 1 segments.
    let width = n + 1;
    let mut cost = vec![f64::INFINITY; (feasible_max + 1) * width];
    let mut back = vec![0u32; (feasible_max + 1) * width];
    for t in min_len..=n {
        cost[t] = table.scatter(0, t);
    }
    for m in 1..=feasible_max {
        let (prev, cur) = cost.split_at_mut(m * width);
        let prev = &prev[(m - 1) * width..];
        let cur = &mut cur[..width];
        let back_row = &mut back[m * width..(m + 1) * width];
        for t in (m + 1) * min_len..=n {
            let mut best = f64::INFINITY;
            let mut arg = 0usize;
            for s in m * min_len..=t - min_len {
                let c = prev[s] + table.scatter(s, t);
                if c < best {
                    best = c;
                    arg = s;
                }
            }
            cur[t] = best;
            back_row[t] = arg as u32;
        }
    }

    let mut best_m = 0;
    let mut best_obj = f64::INFINITY;
    for m in 0..=feasible_max {
        let obj = cost[m * width + n] + params.penalty * count_penalty(m, n);
        if obj < best_obj {
            best_obj = obj;
            best_m = m;
        }
    }

    let mut boundaries = Vec::with_capacity(best_m);
    let mut t = n;
    for m in (1..=best_m).rev() {
        let s = back[m * width + t] as usize;
        boundaries.push(s as u64);
        t = s;
    }
    boundaries.reverse();

    let segments = segments_from_boundaries(&boundaries, n as u64, rate);
    Ok(KtsResult {
        boundaries,
        segments,
        objective: best_obj,
        hit_cap: params.max_change_points.is_some_and(|cap| best_m == cap && best_m > 0),
    })
}

fn single_segment(n: usize, rate: FrameRate, scatter: f64) -> KtsResult {
    KtsResult {
        boundaries: vec![],
        segments: segments_from_boundaries(&[], n as u64, rate),
        objective: scatter,
        hit_cap: false,
    }
}

/// Tiles `[0, len)` with the segments delimited by `boundaries`.
pub fn segments_from_boundaries(boundaries: &[u64], len: u64, rate: FrameRate) -> Vec<SegmentRef> {
    let mut out = Vec::with_capacity(boundaries.len() + 1);
    let mut start = 0;
    for &b in boundaries.iter().chain(std::iter::once(&len)) {
        if b > start {
            out.push(SegmentRef { start, end: b, rate });
            start = b;
        }
    }
    out
}

/// Mean-pools consecutive windows of `stride` rows. The tail that does not
/// fill a window is folded into the last one, so every pooled row covers at
/// least `stride` input rows.
pub fn pool_rows(rows: &[Vec<f64>], stride: usize) -> Vec<Vec<f64>> {
    let stride = stride.max(1);
    let windows = (rows.len() / stride).max(usize::from(!rows.is_empty()));
    (0..windows)
        .map(|w| {
            let start = w * stride;
            let end = if w + 1 == windows { rows.len() } else { start + stride };
            let mut acc = vec![0.0; rows[start].len()];
            for r in &rows[start..end] {
                for (a, v) in acc.iter_mut().zip(r) {
                    *a += v;
                }
            }
            let k = (end - start) as f64;
            acc.iter_mut().for_each(|a| *a /= k);
            acc
        })
        .collect()
}

/// Maps boundaries on a pooled stream back onto the original stream.
pub fn unpool_boundaries(boundaries: &[u64], stride: usize) -> Vec<u64> {
    boundaries.iter().map(|&b| b * stride as u64).collect()
}

/// Scores each segment as the sum of its frames' importance.
pub fn segment_scores(
    segments: &[SegmentRef],
    curve: &ImportanceCurve,
) -> Result<Vec<ScoredSegment>, KtsError> {
    let scores = curve.scores();
    segments
        .iter()
        .map(|seg| {
            if seg.end as usize > scores.len() || seg.start >= seg.end {
                return Err(KtsError::OutOfRange { start: seg.start, end: seg.end, len: scores.len() });
            }
            let score = scores[seg.start as usize..seg.end as usize].iter().map(|&v| v as f64).sum();
            Ok(ScoredSegment { segment: *seg, score })
        })
        .collect()
}
