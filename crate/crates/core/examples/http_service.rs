//! Start the session service on a free port, ingest a scenario through it
//! and exercise the endpoints with a plain HTTP client.
//!
//!     cargo run --example http_service

use std::time::Duration;

use robosumm::service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let state = AppState::new(ServiceConfig::new(root.path()));
    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    rt.spawn(async move { axum::serve(listener, router(state)).await });

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(120)))
        .build()
        .into();
    let show = |what: &str, mut r: ureq::http::Response<ureq::Body>| -> Result<Value, Box<dyn std::error::Error>> {
        let status = r.status();
        let v: Value = r.body_mut().read_json()?;
        println!("{what} -> {status}");
        Ok(v)
    };

    let scenario = robosumm::synthetic::Scenario::mission("svc", 900.0, 4);
    let m = show("POST /sessions", agent.post(&format!("{base}/sessions")).send_json(json!({ "scenario": scenario, "id": "demo" }))?)?;
    println!("  session {} ({} s)", m["id"], m["meta"]["duration_s"]);

    let e = show("GET generic-skim (before generation)", agent.get(&format!("{base}/sessions/demo/artifacts/generic-skim")).call()?)?;
    println!("  {}", e["hint"]);

    let g = show("POST /sessions/demo/generic", agent.post(&format!("{base}/sessions/demo/generic")).send_empty()?)?;
    println!("  skim total {} s", g["skim"]["artifact"]["total_s"]);

    let q = show(
        "POST /sessions/demo/query",
        agent.post(&format!("{base}/sessions/demo/query")).send_json(json!({ "text": "show blue barrels", "modality": "storyboard" }))?,
    )?;
    println!("  {} entries, provenance {}", q["artifact"]["entries"].as_array().map_or(0, Vec::len), q["provenance"]);

    let bad = show("POST query with empty text", agent.post(&format!("{base}/sessions/demo/query")).send_json(json!({ "text": "" }))?)?;
    println!("  {}", bad["error"]);

    let mut img = agent.get(&format!("{base}/sessions/demo/frames/query/12")).call()?;
    println!("GET frame -> {} ({} bytes of {})", img.status(), img.body_mut().read_to_vec()?.len(), img.headers()["content-type"].to_str()?);

    let l = show("GET /sessions/demo/latency", agent.get(&format!("{base}/sessions/demo/latency")).call()?)?;
    println!("  query modalities timed: {:?}", l["query"].as_object().map(|o| o.keys().cloned().collect::<Vec<_>>()));
    Ok(())
}
