use std::sync::Arc;
use std::time::Duration;

use robosumm::providers::conformance::run_conformance;
use robosumm::providers::fixture::FixtureProvider;
use robosumm::providers::protocol::{http_router, Op, Request};
use robosumm::providers::transport::{parse_provider_spec, HttpTransport, RemoteProvider, StreamTransport, Transport};
use robosumm::providers::{embed_text, Provider, ProviderError, ProviderRole, TransportKind};
use robosumm::synthetic::{Scenario, ScenarioWorld};

const BIN: &str = env!("CARGO_BIN_EXE_robosumm");

fn world() -> Arc<ScenarioWorld> {
    Arc::new(ScenarioWorld::new(Scenario::mission("mission", 2400.0, 7)).unwrap())
}

fn assert_conformant(p: &dyn Provider, how: &str) {
    let report = run_conformance(p);
    assert!(!report.checks.is_empty());
    assert!(report.passed(), "{how} {}: {:?}", report.role, report.failures());
}

#[test]
fn in_process_fixtures_conform() {
    let w = world();
    for role in ProviderRole::ALL {
        assert_conformant(&FixtureProvider::scenario(role, w.clone()), "in-process");
    }
}

#[test]
fn stdio_subprocess_fixtures_conform() {
    for role in ProviderRole::ALL {
        let cmd = format!("{BIN} provider --role {role} --transport stdio");
        let d = parse_provider_spec(role, &format!("stdio:{cmd}"), Duration::from_secs(30)).unwrap();
        assert_eq!(d.transport, TransportKind::SubprocessStdio);
        assert_eq!(d.version, "1");
        let p = RemoteProvider::connect(d.clone(), Box::new(StreamTransport::spawn(&cmd).unwrap())).unwrap();
        assert_conformant(&p, "stdio");
    }
}

#[test]
fn http_fixtures_conform() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let w = world();
    for role in ProviderRole::ALL {
        let local: Arc<dyn Provider> = Arc::new(FixtureProvider::scenario(role, w.clone()));
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let router = http_router(local.clone());
        rt.spawn(async move { axum::serve(listener, router).await });
        let d = parse_provider_spec(role, &base, Duration::from_secs(30)).unwrap();
        assert_eq!(d.id(), local.descriptor().id());
        let p = RemoteProvider::connect(d, Box::new(HttpTransport::new(&base, Duration::from_secs(30)))).unwrap();
        assert_conformant(&p, "http");
    }
}

#[test]
fn remote_answers_equal_in_process_answers() {
    let cmd = format!("{BIN} provider --role joint_embedding --transport stdio");
    let local = FixtureProvider::scenario(ProviderRole::JointEmbedding, world());
    let remote =
        RemoteProvider::connect(local.descriptor().clone(), Box::new(StreamTransport::spawn(&cmd).unwrap())).unwrap();
    for q in ["blue barrel", "is anyone there?", "ünïcödé stairs"] {
        assert_eq!(embed_text(&remote, q).unwrap(), embed_text(&local, q).unwrap());
    }
}

#[test]
fn wrong_role_and_bad_ops_are_errors_on_the_wire() {
    let cmd = format!("{BIN} provider --role captioner --transport stdio");
    let t = StreamTransport::spawn(&cmd).unwrap();
    let req = Request { op: Op::EmbedText, role: ProviderRole::Captioner, payload: serde_json::json!({ "query": "x" }) };
    let resp = t.round_trip(ProviderRole::Captioner, &req).unwrap();
    assert!(!resp.ok);
    assert!(matches!(resp.error, Some(ProviderError::Unsupported { .. })));

    let req = Request { op: Op::Describe, role: ProviderRole::Importance, payload: serde_json::Value::Null };
    let resp = t.round_trip(ProviderRole::Importance, &req).unwrap();
    assert!(!resp.ok, "a captioner must not answer for the importance role");
}

#[test]
fn dead_subprocess_is_unavailable() {
    let d = parse_provider_spec(ProviderRole::Captioner, "stdio:exit 0#dead@1", Duration::from_secs(5)).unwrap();
    let p = RemoteProvider::new(d, Box::new(StreamTransport::spawn("exit 0").unwrap()));
    let err = p.describe().unwrap_err();
    assert!(err.is_unavailable(), "{err:?}");
}
