//! Measure per-stage latency with providers that take a fixed time per
//! call, as a real model server would.
//!
//!     cargo run --example latency_report

use std::sync::Arc;
use std::time::Duration;

use robosumm::ingest::ingest_scenario;
use robosumm::model::{Modality, PipelineConfig};
use robosumm::pipeline::{Engine, ProviderOptions};
use robosumm::providers::fixture::InjectedDelay;
use robosumm::synthetic::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let session = ingest_scenario(root.path(), &Scenario::mission("timed", 600.0, 9), PipelineConfig::default(), None)?;
    let opts = ProviderOptions {
        delay: InjectedDelay { embed: Duration::from_millis(200), caption: Duration::from_millis(500), ..Default::default() },
        ..Default::default()
    };
    let engine = Engine::for_session(Arc::new(session), &opts)?;
    engine.embed_all(false)?;
    for q in ["blue barrel", "is anyone there", "where are the stairs"] {
        for m in Modality::ALL {
            engine.run_query(q, m)?;
        }
    }
    print!("{}", engine.latency_report()?);
    Ok(())
}
