//! Choose segments under a duration budget with the exact knapsack.
//!
//!     cargo run --example knapsack_budget [-- <budget seconds>]

use robosumm::model::{FrameRate, ScoredSegment, SegmentRef};
use robosumm::select::knapsack_select;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let budget: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(30.0);
    let rate = FrameRate::whole(1);
    // (length in seconds, importance)
    let parts = [(12, 9.0), (7, 6.5), (20, 11.0), (5, 1.0), (9, 8.0), (15, 3.0)];
    let mut start = 0;
    let mut items = Vec::new();
    for (len, score) in parts {
        items.push(ScoredSegment { segment: SegmentRef::new(start, start + len, rate)?, score });
        start += len;
    }
    let sel = knapsack_select(&items, budget, 1.0)?;
    let used: f64 = sel.indices.iter().map(|&i| items[i].duration_s()).sum();
    let score: f64 = sel.indices.iter().map(|&i| items[i].score).sum();
    println!("budget {budget} s: picked {:?}, {used} s, total score {score}", sel.indices);
    for r in &sel.trace.rejected {
        println!("  skipped {} ({})", r.id, r.reason);
    }
    Ok(())
}
