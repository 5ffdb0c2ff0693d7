//! Storyboard and skim selection: diversity-constrained greedy, duration
//! budgeted 0/1 knapsack, and chronological top-k.
//!
//! Every selector returns input indices in chronological (input) order and a
//! [`SelectionTrace`] from which the decision sequence can be replayed. Ties
//! always go to the earlier item.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ScoredSegment;
use crate::numerics::cosine_sim;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("{scores} scores but {embeddings} embeddings")]
    Misaligned { scores: usize, embeddings: usize },
    #[error("non-finite score for item {0}")]
    NonFinite(usize),
    #[error("invalid selection parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accepted {
    pub id: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub id: usize,
    pub reason: String,
    /// Highest similarity to an already accepted item (greedy only).
    pub max_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionTrace {
    /// Candidates in the order they were examined.
    pub considered: Vec<Candidate>,
    pub accepted: Vec<Accepted>,
    pub rejected: Vec<Rejected>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Selected input indices, ascending.
    pub indices: Vec<usize>,
    /// Fewer candidates existed than were asked for.
    pub partial: bool,
    pub trace: SelectionTrace,
}

fn check_scores(scores: impl Iterator<Item = f64>) -> Result<(), SelectError> {
    for (i, s) in scores.enumerate() {
        if !s.is_finite() {
            return Err(SelectError::NonFinite(i));
        }
    }
    Ok(())
}

/// Indices by descending score, earlier index first on ties.
fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].partial_cmp(&scores[a]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    order
}

/// Walks items from most to least important, accepting an item only if its
/// cosine similarity to every item accepted so far is below `delta`.
/// Stops after `max_items` acceptances.
pub fn greedy_diverse<E: AsRef<[f64]>>(
    scores: &[f64],
    embeddings: &[E],
    delta: f64,
    max_items: usize,
) -> Result<Selection, SelectError> {
    if scores.len() != embeddings.len() {
        return Err(SelectError::Misaligned { scores: scores.len(), embeddings: embeddings.len() });
    }
    if max_items == 0 {
        return Err(SelectError::InvalidParams("max_items must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(SelectError::InvalidParams(format!("delta must lie in [0, 1], got {delta}")));
    }
    check_scores(scores.iter().copied())?;

    let mut trace = SelectionTrace::default();
    let mut accepted: Vec<usize> = Vec::new();
    for id in rank_desc(scores) {
        if accepted.len() == max_items {
            break;
        }
        trace.considered.push(Candidate { id, score: scores[id] });
        let max_sim = accepted
            .iter()
            .map(|&a| cosine_sim(embeddings[id].as_ref(), embeddings[a].as_ref()))
            .fold(f64::NEG_INFINITY, f64::max);
        if accepted.is_empty() || max_sim < delta {
            let reason = if accepted.is_empty() {
                "highest score".to_string()
            } else {
                format!("max similarity {max_sim:.4} below {delta}")
            };
            trace.accepted.push(Accepted { id, reason });
            accepted.push(id);
        } else {
            trace.rejected.push(Rejected {
                id,
                reason: format!("similarity {max_sim:.4} reaches {delta}"),
                max_similarity: Some(max_sim),
            });
        }
    }
    let partial = accepted.len() < max_items;
    accepted.sort_unstable();
    Ok(Selection { indices: accepted, partial, trace })
}

/// Exact 0/1 knapsack: maximizes total score subject to total duration
/// within `budget_s`. Durations are rounded up to multiples of
/// `resolution_s`, which is exact when the resolution divides them. Items
/// with non-positive score are never taken.
pub fn knapsack_select(
    items: &[ScoredSegment],
    budget_s: f64,
    resolution_s: f64,
) -> Result<Selection, SelectError> {
    if !(budget_s.is_finite() && budget_s > 0.0) {
        return Err(SelectError::InvalidParams(format!("budget must be positive, got {budget_s}")));
    }
    if !(resolution_s.is_finite() && resolution_s > 0.0) {
        return Err(SelectError::InvalidParams(format!(
            "resolution must be positive, got {resolution_s}"
        )));
    }
    check_scores(items.iter().map(|s| s.score))?;

    let capacity = (budget_s / resolution_s + 1e-9).floor() as usize;
    let weights: Vec<usize> = items
        .iter()
        .map(|s| ((s.duration_s() / resolution_s) - 1e-9).ceil().max(1.0) as usize)
        .collect();
    let eligible: Vec<usize> =
        (0..items.len()).filter(|&i| items[i].score > 0.0 && weights[i] <= capacity).collect();

    // best[k][w]: best score from eligible[k..] within capacity w.
    let width = capacity + 1;
    let n = eligible.len();
    let mut best = vec![0.0f64; (n + 1) * width];
    let mut take = vec![false; n * width];
    for k in (0..n).rev() {
        let (item, wt) = (&items[eligible[k]], weights[eligible[k]]);
        for w in 0..width {
            let skip = best[(k + 1) * width + w];
            let mut value = skip;
            if wt <= w {
                let with = item.score + best[(k + 1) * width + w - wt];
                if with >= skip {
                    value = with;
                    take[k * width + w] = true;
                }
            }
            best[k * width + w] = value;
        }
    }

    let mut trace = SelectionTrace {
        considered: items.iter().enumerate().map(|(id, s)| Candidate { id, score: s.score }).collect(),
        ..Default::default()
    };
    let mut chosen = vec![false; items.len()];
    let mut w = capacity;
    for (k, &id) in eligible.iter().enumerate() {
        if take[k * width + w] {
            chosen[id] = true;
            w -= weights[id];
        }
    }
    for (id, item) in items.iter().enumerate() {
        if chosen[id] {
            trace.accepted.push(Accepted { id, reason: "in optimal subset".into() });
        } else {
            let reason = if item.score <= 0.0 {
                "non-positive score"
            } else if weights[id] > capacity {
                "longer than the budget"
            } else {
                "not in optimal subset"
            };
            trace.rejected.push(Rejected { id, reason: reason.into(), max_similarity: None });
        }
    }
    let indices = (0..items.len()).filter(|&i| chosen[i]).collect();
    Ok(Selection { indices, partial: false, trace })
}

/// The `k` highest-scoring items, returned in chronological order.
pub fn topk_chrono(items: &[ScoredSegment], k: usize) -> Result<Selection, SelectError> {
    if k == 0 {
        return Err(SelectError::InvalidParams("k must be at least 1".into()));
    }
    let scores: Vec<f64> = items.iter().map(|s| s.score).collect();
    check_scores(scores.iter().copied())?;
    let order = rank_desc(&scores);

    let mut trace = SelectionTrace {
        considered: order.iter().map(|&id| Candidate { id, score: scores[id] }).collect(),
        ..Default::default()
    };
    for (rank, &id) in order.iter().enumerate() {
        if rank < k {
            trace.accepted.push(Accepted { id, reason: format!("rank {}", rank + 1) });
        } else {
            trace.rejected.push(Rejected { id, reason: format!("rank {}", rank + 1), max_similarity: None });
        }
    }
    let mut indices: Vec<usize> = order.into_iter().take(k).collect();
    indices.sort_unstable();
    Ok(Selection { indices, partial: items.len() < k, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FrameRate, SegmentRef};

    fn seg(i: u64, len: u64, score: f64) -> ScoredSegment {
        let start = i * 100;
        ScoredSegment { segment: SegmentRef::new(start, start + len, FrameRate::whole(1)).unwrap(), score }
    }

    #[test]
    fn identical_embeddings_select_one() {
        let scores = [0.1, 0.9, 0.5, 0.7];
        let emb = vec![vec![1.0, 2.0]; 4];
        let sel = greedy_diverse(&scores, &emb, 0.5, 24).unwrap();
        assert_eq!(sel.indices, vec![1]);
        assert!(sel.partial);
        assert_eq!(sel.trace.rejected.len(), 3);
    }

    #[test]
    fn orthogonal_embeddings_select_top_scores() {
        let scores = [0.1, 0.9, 0.5, 0.7];
        let emb: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let sel = greedy_diverse(&scores, &emb, 0.5, 2).unwrap();
        assert_eq!(sel.indices, vec![1, 3]);
        assert!(!sel.partial);
    }

    #[test]
    fn greedy_edge_cases() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(greedy_diverse(&[], &empty, 0.5, 4).unwrap().indices.is_empty());
        assert!(matches!(greedy_diverse(&[1.0], &empty, 0.5, 4), Err(SelectError::Misaligned { .. })));
        assert!(greedy_diverse(&[1.0], &[vec![1.0]], 0.5, 0).is_err());
        assert!(greedy_diverse(&[f64::NAN], &[vec![1.0]], 0.5, 1).is_err());
    }

    #[test]
    fn greedy_ties_prefer_earlier_items() {
        let scores = [1.0, 1.0, 1.0];
        let emb = vec![vec![1.0, 0.0]; 3];
        assert_eq!(greedy_diverse(&scores, &emb, 0.5, 3).unwrap().indices, vec![0]);
    }

    #[test]
    fn knapsack_takes_everything_that_fits() {
        let items = [seg(0, 5, 1.0), seg(1, 3, 2.0), seg(2, 4, 0.0), seg(3, 2, 0.5)];
        let sel = knapsack_select(&items, 100.0, 1.0).unwrap();
        assert_eq!(sel.indices, vec![0, 1, 3]);
    }

    #[test]
    fn knapsack_respects_budget() {
        let items = [seg(0, 6, 6.0), seg(1, 5, 5.5), seg(2, 5, 5.5)];
        let sel = knapsack_select(&items, 10.0, 1.0).unwrap();
        assert_eq!(sel.indices, vec![1, 2]);
    }

    #[test]
    fn knapsack_ties_prefer_earlier_sets() {
        let items = [seg(0, 4, 1.0), seg(1, 4, 1.0), seg(2, 4, 1.0)];
        assert_eq!(knapsack_select(&items, 8.0, 1.0).unwrap().indices, vec![0, 1]);
    }

    #[test]
    fn knapsack_nothing_fits() {
        let items = [seg(0, 50, 1.0)];
        let sel = knapsack_select(&items, 10.0, 1.0).unwrap();
        assert!(sel.indices.is_empty());
        assert_eq!(sel.trace.rejected[0].reason, "longer than the budget");
        assert!(knapsack_select(&items, 0.0, 1.0).is_err());
    }

    #[test]
    fn fifteen_percent_of_forty_minutes() {
        let cfg = crate::model::PipelineConfig::default();
        assert_eq!(cfg.knapsack_budget_s(2400.0), 360.0);
    }

    #[test]
    fn topk_over_fixed_segments() {
        let rate = FrameRate::whole(1);
        let items: Vec<ScoredSegment> = (0..300)
            .map(|i| ScoredSegment {
                segment: SegmentRef::new(i * 8, i * 8 + 8, rate).unwrap(),
                score: ((i * 37) % 101) as f64,
            })
            .collect();
        let sel = topk_chrono(&items, 6).unwrap();
        assert_eq!(sel.indices.len(), 6);
        let total: f64 = sel.indices.iter().map(|&i| items[i].duration_s()).sum();
        assert_eq!(total, 48.0);
        assert!(sel.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn topk_edge_cases() {
        let items = [seg(0, 8, 0.3), seg(1, 8, 0.1)];
        let sel = topk_chrono(&items, 6).unwrap();
        assert_eq!(sel.indices, vec![0, 1]);
        assert!(sel.partial);
        let flat: Vec<ScoredSegment> = (0..10).map(|i| seg(i, 8, 1.0)).collect();
        assert_eq!(topk_chrono(&flat, 6).unwrap().indices, vec![0, 1, 2, 3, 4, 5]);
        assert!(topk_chrono(&flat, 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn topk_separates_scores(scores in prop::collection::vec(-5.0f64..5.0, 1..40), k in 1usize..10) {
                let items: Vec<ScoredSegment> = scores.iter().enumerate().map(|(i, &s)| seg(i as u64, 8, s)).collect();
                let sel = topk_chrono(&items, k).unwrap();
                let min_sel = sel.indices.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
                let max_unsel = (0..scores.len()).filter(|i| !sel.indices.contains(i)).map(|i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(min_sel >= max_unsel);
                prop_assert_eq!(sel.indices.len(), k.min(scores.len()));
            }

            #[test]
            fn knapsack_is_feasible_and_maximal(items in prop::collection::vec((1u64..20, 0.0f64..1.0), 0..25), budget in 1u64..120) {
                let items: Vec<ScoredSegment> = items.iter().enumerate().map(|(i, &(d, s))| seg(i as u64, d, s)).collect();
                let sel = knapsack_select(&items, budget as f64, 1.0).unwrap();
                let used: f64 = sel.indices.iter().map(|&i| items[i].duration_s()).sum();
                prop_assert!(used <= budget as f64);
                let residual = budget as f64 - used;
                for (i, it) in items.iter().enumerate() {
                    if !sel.indices.contains(&i) && it.score > 0.0 {
                        prop_assert!(it.duration_s() > residual);
                    }
                }
                let again = knapsack_select(&items, budget as f64, 1.0).unwrap();
                prop_assert_eq!(sel, again);
            }
        }
    }
}
