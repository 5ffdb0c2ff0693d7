//! Kernel temporal segmentation of a stream with three known scenes.
//!
//!     cargo run --example kts_segmentation

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robosumm::changepoint::{kts_segment, KtsParams};
use robosumm::model::FrameRate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scenes = [(0..40, [1.0, 0.0, 0.0]), (40..95, [0.0, 1.0, 0.0]), (95..120, [0.0, 0.0, 1.0])];
    let mut x = Vec::new();
    for (range, dir) in &scenes {
        for _ in range.clone() {
            x.push(dir.iter().map(|d| d + rng.random_range(-0.1..0.1)).collect::<Vec<f64>>());
        }
    }
    let r = kts_segment(&x, FrameRate::whole(1), &KtsParams::default())?;
    println!("true change points:      [40, 95]");
    println!("detected change points:  {:?}", r.boundaries);
    println!("penalized objective:     {:.4}", r.objective);
    for s in &r.segments {
        println!("  segment {:>3}..{:<3} ({:.0} s)", s.start, s.end, s.duration_s());
    }
    Ok(())
}
