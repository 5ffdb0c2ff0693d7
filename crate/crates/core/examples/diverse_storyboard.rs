//! Greedy diverse selection: the most important frames, skipping any that
//! look too much like one already chosen.
//!
//!     cargo run --example diverse_storyboard [-- <delta>]

use robosumm::select::greedy_diverse;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let delta: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.5);
    // Three near-duplicates of one view, two of another, one outlier.
    let emb = vec![
        vec![1.0, 0.0, 0.0],
        vec![0.98, 0.1, 0.0],
        vec![0.95, 0.05, 0.1],
        vec![0.0, 1.0, 0.0],
        vec![0.1, 0.97, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    let scores = [0.9, 0.95, 0.7, 0.6, 0.8, 0.2];
    let sel = greedy_diverse(&scores, &emb, delta, 4)?;
    println!("delta {delta}: selected {:?}", sel.indices);
    for a in &sel.trace.accepted {
        println!("  accept {} — {}", a.id, a.reason);
    }
    for r in &sel.trace.rejected {
        println!("  reject {} — {}", r.id, r.reason);
    }
    Ok(())
}
