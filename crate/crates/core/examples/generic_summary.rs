//! Ingest a synthetic 40-minute mission and produce the three generic
//! summaries: storyboard, skim and text.
//!
//!     cargo run --example generic_summary [-- <seconds>]

use std::sync::Arc;

use robosumm::ingest::ingest_scenario;
use robosumm::model::{PipelineConfig, SummaryArtifact};
use robosumm::pipeline::{Engine, ProviderOptions};
use robosumm::synthetic::{mmss, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let secs: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2400.0);
    let root = tempfile::tempdir()?;
    let session = ingest_scenario(root.path(), &Scenario::mission("tunnels", secs, 7), PipelineConfig::default(), None)?;
    let engine = Engine::for_session(Arc::new(session), &ProviderOptions::default())?;

    let summary = engine.run_generic()?;
    if let SummaryArtifact::Storyboard(sb) = &summary.storyboard.document.artifact {
        println!("storyboard ({} frames):", sb.entries.len());
        for e in &sb.entries {
            println!("  {}  frame {}", mmss(e.timestamp_s), e.frame_index);
        }
    }
    if let SummaryArtifact::Skim(skim) = &summary.skim.document.artifact {
        println!("skim ({:.0} s of {:.0} s):", skim.total_s, secs);
        for iv in &skim.intervals {
            println!("  {} - {}", mmss(iv.start_s), mmss(iv.end_s));
        }
    }
    if let SummaryArtifact::Text(t) = &summary.text.document.artifact {
        println!("text:\n  {}", t.text);
    }
    for r in [&summary.storyboard, &summary.skim, &summary.text] {
        if let Some(l) = &r.latency {
            println!("{:<20} {:.3} s", r.document.key, l.total_s);
        }
    }
    Ok(())
}
