//! Ask questions about a mission in every modality and show that repeated
//! queries are served from the cache.
//!
//!     cargo run --example query_summary [-- "is there a blue barrel"]

use std::sync::Arc;

use robosumm::ingest::ingest_scenario;
use robosumm::model::{Modality, PipelineConfig, SummaryArtifact};
use robosumm::pipeline::{Engine, ProviderOptions};
use robosumm::synthetic::{mmss, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "is there a blue barrel".into());
    let root = tempfile::tempdir()?;
    let session = ingest_scenario(root.path(), &Scenario::mission("tunnels", 1200.0, 3), PipelineConfig::default(), None)?;
    let engine = Engine::for_session(Arc::new(session), &ProviderOptions::default())?;

    println!("query: {query}");
    for m in Modality::ALL {
        let out = engine.run_query(&query, m)?;
        match &out.response.document.artifact {
            SummaryArtifact::Storyboard(sb) => {
                let at: Vec<String> = sb.entries.iter().map(|e| mmss(e.timestamp_s)).collect();
                println!("storyboard: {}", at.join(", "));
            }
            SummaryArtifact::Skim(s) => {
                let at: Vec<String> = s.intervals.iter().map(|iv| format!("{}-{}", mmss(iv.start_s), mmss(iv.end_s))).collect();
                println!("skim ({:.0} s): {}", s.total_s, at.join(", "));
            }
            SummaryArtifact::Text(t) => println!("text: {}", t.text),
        }
    }
    let again = engine.run_query(&query, Modality::Storyboard)?;
    println!("second storyboard request served from cache: {}", again.cached);
    Ok(())
}
