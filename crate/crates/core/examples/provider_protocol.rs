//! Serve a fixture provider over the framed stdio protocol and over HTTP,
//! then talk to both through the remote client and run the conformance
//! checks.
//!
//!     cargo run --example provider_protocol

use std::sync::Arc;
use std::time::Duration;

use robosumm::providers::conformance::run_conformance;
use robosumm::providers::fixture::FixtureProvider;
use robosumm::providers::protocol::{http_router, serve_stream};
use robosumm::providers::transport::{HttpTransport, RemoteProvider, StreamTransport};
use robosumm::providers::{embed_text, Provider, ProviderRole};
use robosumm::synthetic::{Scenario, ScenarioWorld};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = Arc::new(ScenarioWorld::new(Scenario::mission("demo", 300.0, 2))?);
    let local: Arc<dyn Provider> = Arc::new(FixtureProvider::scenario(ProviderRole::JointEmbedding, world));

    // Length-prefixed JSON over a pair of pipes.
    let (client_r, server_w) = std::io::pipe()?;
    let (server_r, client_w) = std::io::pipe()?;
    let served = local.clone();
    std::thread::spawn(move || serve_stream(served.as_ref(), server_r, server_w));
    let stdio = RemoteProvider::connect(local.descriptor().clone(), Box::new(StreamTransport::new(client_r, client_w)))?;

    // The same provider behind POST /v1/provider.
    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let addr = listener.local_addr()?;
    rt.spawn(async move { axum::serve(listener, http_router(local)).await });
    let http = RemoteProvider::connect(
        stdio.descriptor().clone(),
        Box::new(HttpTransport::new(&format!("http://{addr}"), Duration::from_secs(10))),
    )?;

    let q = "red backpack near the pipes";
    let a = embed_text(&stdio, q)?;
    let b = embed_text(&http, q)?;
    println!("text embedding: {} dims, identical over both transports: {}", a.len(), a == b);

    for (name, p) in [("stdio", &stdio), ("http", &http)] {
        let report = run_conformance(p);
        println!("{name}: {}/{} conformance checks pass", report.checks.iter().filter(|c| c.passed).count(), report.checks.len());
        for f in report.failures() {
            println!("  FAIL {}: {}", f.name, f.detail);
        }
    }
    Ok(())
}
