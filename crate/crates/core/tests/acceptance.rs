//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use robosumm::changepoint::{kts_segment, min_segment_len, KtsParams};
use robosumm::ingest::{ingest_scenario, Session};
use robosumm::latency::LatencyRecord;
use robosumm::model::{FrameRate, Modality, PipelineConfig, ScoredSegment, SegmentRef, SummaryArtifact};
use robosumm::numerics::{pca_fit, pca_project};
use robosumm::pipeline::{session_providers, Engine, ProviderOptions};
use robosumm::providers::conformance::run_conformance;
use robosumm::providers::fixture::{FixtureProvider, InjectedDelay};
use robosumm::providers::transport::{RemoteProvider, StreamTransport};
use robosumm::providers::{Provider, ProviderRole};
use robosumm::select::{greedy_diverse, knapsack_select};
use robosumm::synthetic::{Scenario, ScenarioWorld};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn knapsack_exactness() -> Outcome {
    let mut r = rng(1001);
    let mut dp_time = Duration::ZERO;
    for case in 0..100 {
        let n = r.random_range(1..=15);
        let durs: Vec<u64> = (0..n).map(|_| r.random_range(1..=20)).collect();
        let scores: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let budget = r.random_range(1..=durs.iter().sum::<u64>()) as f64;
        let rate = FrameRate::whole(1);
        let mut start = 0;
        let items: Vec<ScoredSegment> = durs
            .iter()
            .zip(&scores)
            .map(|(&d, &score)| {
                let it = ScoredSegment { segment: SegmentRef::new(start, start + d, rate).unwrap(), score };
                start += d;
                it
            })
            .collect();
        let t0 = Instant::now();
        let sel = knapsack_select(&items, budget, 1.0).map_err(|e| e.to_string())?;
        dp_time += t0.elapsed();
        let got: f64 = sel.indices.iter().map(|&i| scores[i]).sum();
        let pairs: Vec<(f64, f64)> = durs.iter().map(|&d| d as f64).zip(scores.iter().copied()).collect();
        let want = brute_knapsack(&pairs, budget);
        ensure!((got - want).abs() <= 1e-12 * want.max(1.0), "instance {case}: DP {got} vs enumeration {want}");
    }
    ensure!(dp_time < Duration::from_secs(1), "DP took {dp_time:?}");
    Ok(format!("100/100 instances optimal, DP total {:.1} ms", dp_time.as_secs_f64() * 1e3))
}

fn kts_recovery() -> Outcome {
    let mut r = rng(2002);
    let rate = FrameRate::whole(10);
    let params = KtsParams::default();
    let min_len = min_segment_len(params.min_segment_s, rate);
    let (mut found, mut total) = (0usize, 0usize);
    for _ in 0..100 {
        let blocks = r.random_range(2..=4);
        let lens: Vec<usize> = (0..blocks).map(|_| r.random_range(3 * min_len..=150)).collect();
        let (x, truth) = block_stream(&mut r, &lens, 16, 0.05);
        assert!(x.len() <= 600);
        let got = kts_segment(&x, rate, &params).map_err(|e| e.to_string())?;
        total += truth.len();
        found += truth.iter().filter(|&&t| got.boundaries.iter().any(|&g| (g as i64 - t as i64).abs() <= 1)).count();
    }
    let recall = found as f64 / total as f64;
    ensure!(recall >= 0.95, "recovered {found}/{total} boundaries");

    // Exact objective against enumeration on short streams.
    let mut exact = 0;
    for case in 0..24 {
        let n = r.random_range(20..=40);
        let weight = [0.25, 1.0, 4.0][case % 3];
        let params = KtsParams { min_segment_s: 0.4, penalty: weight, max_change_points: None };
        let min_len = min_segment_len(params.min_segment_s, rate);
        let mut lens = Vec::new();
        let mut left = n;
        while left >= 2 * min_len && lens.len() < 3 {
            let l = r.random_range(min_len..=left - min_len);
            lens.push(l);
            left -= l;
        }
        lens.push(left);
        let (x, _) = block_stream(&mut r, &lens, 6, 0.3);
        let got = kts_segment(&x, rate, &params).map_err(|e| e.to_string())?;
        let (obj, cuts) = exhaustive_kts(&x, min_len, weight);
        ensure!(
            (got.objective - obj).abs() <= 1e-9 * obj.abs().max(1.0),
            "n={n}: DP objective {} vs exhaustive {obj}",
            got.objective
        );
        ensure!(got.boundaries == cuts.iter().map(|&c| c as u64).collect::<Vec<_>>(), "n={n}: boundaries differ");
        exact += 1;
    }
    Ok(format!("recall {found}/{total} ({:.1}%) within ±1 frame; {exact}/24 short streams match enumeration", recall * 100.0))
}

fn pca_oracle() -> Outcome {
    let mut r = rng(3003);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let (n, d) = (r.random_range(20..200), r.random_range(3..40));
        let dims = d.min(n - 1).min(12);
        let x = spectral_matrix(&mut r, n, d);
        let m = pca_fit(&x, dims).map_err(|e| e.to_string())?;
        let o = oracle_pca(&x, dims);
        for k in 0..dims {
            let e = (m.explained_variance[k] - o.variances[k]).abs() / o.variances[k];
            worst = worst.max(e);
            ensure!(e < 1e-6, "matrix {case}: variance {k} relative error {e:e}");
        }
        let y = pca_project(&m, &x).map_err(|e| e.to_string())?;
        let want: Vec<Vec<f64>> = x.iter().map(|row| o.project(row)).collect();
        for k in 0..dims {
            let scale = want.iter().map(|w| w[k] * w[k]).sum::<f64>().sqrt();
            let diff = y.iter().zip(&want).map(|(a, b)| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt();
            let e = diff / scale;
            worst = worst.max(e);
            ensure!(e < 1e-6, "matrix {case}: projection {k} relative error {e:e}");
        }
    }
    Ok(format!("20 matrices, worst relative error {worst:.1e}"))
}

fn diversity_invariant() -> Outcome {
    let mut r = rng(4004);
    let mut violations = Vec::new();
    for case in 0..1000 {
        let (n, d) = (r.random_range(1..60), r.random_range(1..8));
        let mut emb: Vec<Vec<f64>> = Vec::with_capacity(n);
        for _ in 0..n {
            let row = match r.random_range(0..10) {
                0 => vec![0.0; d],
                1 if !emb.is_empty() => emb[r.random_range(0..emb.len())].clone(),
                _ => (0..d).map(|_| r.random_range(-1.0..1.0)).collect(),
            };
            emb.push(row);
        }
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let delta = r.random_range(0.0..=1.0);
        let k = r.random_range(1..30);
        let sel = greedy_diverse(&scores, &emb, delta, k).map_err(|e| e.to_string())?;
        let idx = &sel.indices;
        if idx.len() > k {
            violations.push(format!("case {case}: {} items > {k}", idx.len()));
        }
        if !idx.windows(2).all(|w| w[0] < w[1]) {
            violations.push(format!("case {case}: not chronological"));
        }
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                if cosine(&emb[i], &emb[j]) >= delta {
                    violations.push(format!("case {case}: items {i},{j} too similar"));
                }
            }
        }
    }
    ensure!(violations.is_empty(), "{} violations, first: {}", violations.len(), violations[0]);
    Ok("1000 inputs, 0 violations".into())
}

const QUERIES: [&str; 6] = [
    "where did the robot see blue barrels",
    "was anyone wearing a helmet",
    "show the stairs",
    "find the fire extinguisher",
    "when did it pass the exit sign",
    "the loading dock",
];

fn equal_information() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let session = Arc::new(
        ingest_scenario(root.path(), &Scenario::mission("acceptance", 2400.0, 7), PipelineConfig::default(), None)
            .map_err(|e| e.to_string())?,
    );
    let mut set = session_providers(&session, &ProviderOptions::default()).map_err(|e| e.to_string())?;
    let captioner = RecordingProvider::new(set.captioner.clone());
    set.captioner = captioner.clone();
    let engine = Engine::new(session, set);
    let g = engine.run_generic().map_err(|e| e.to_string())?;

    let SummaryArtifact::Skim(skim) = &g.skim.document.artifact else { return Err("generic skim kind".into()) };
    let SummaryArtifact::Storyboard(board) = &g.storyboard.document.artifact else { return Err("board kind".into()) };
    ensure!(skim.total_s <= 360.0 + 1e-9, "generic skim {} s", skim.total_s);
    ensure!(board.entries.len() <= 24, "generic storyboard {} entries", board.entries.len());

    let mut query_total = 0.0;
    for q in QUERIES {
        let sk = engine.run_query(q, Modality::Skim).map_err(|e| e.to_string())?;
        let SummaryArtifact::Skim(s) = &sk.response.document.artifact else { return Err("query skim kind".into()) };
        ensure!(s.total_s == 48.0, "query {q:?}: skim {} s", s.total_s);
        query_total += s.total_s;
        let sb = engine.run_query(q, Modality::Storyboard).map_err(|e| e.to_string())?;
        let SummaryArtifact::Storyboard(b) = &sb.response.document.artifact else { return Err("query board kind".into()) };
        ensure!(b.entries.len() <= 4, "query {q:?}: storyboard {} entries", b.entries.len());
        engine.run_query(q, Modality::Text).map_err(|e| e.to_string())?;
    }
    ensure!(query_total == 288.0, "six query skims total {query_total} s");

    let requests = captioner.captions.lock().unwrap();
    ensure!(requests.len() == 1 + QUERIES.len(), "{} caption requests", requests.len());
    let most = requests.iter().map(|c| c.frames.len()).max().unwrap_or(0);
    ensure!(most <= 100, "a caption request carried {most} frames");
    Ok(format!(
        "generic skim {:.0} s, storyboard {}; 6 query skims {query_total:.0} s; largest caption request {most} frames",
        skim.total_s,
        board.entries.len()
    ))
}

fn run_script(root: &Path) -> Result<Session, String> {
    let s = ingest_scenario(root, &Scenario::mission("determinism", 900.0, 3), PipelineConfig::default(), None)
        .map_err(|e| e.to_string())?;
    let engine = Engine::for_session(Arc::new(s), &ProviderOptions::default()).map_err(|e| e.to_string())?;
    engine.run_generic().map_err(|e| e.to_string())?;
    for q in &QUERIES[..3] {
        for m in Modality::ALL {
            engine.run_query(q, m).map_err(|e| e.to_string())?;
        }
    }
    Session::open(engine.session().dir()).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let (sa, sb) = (run_script(a.path())?, run_script(b.path())?);
    ensure!(sa.id() == sb.id(), "session ids differ");
    let fa = tree_bytes(&sa.dir().join("artifacts"));
    let fb = tree_bytes(&sb.dir().join("artifacts"));
    ensure!(fa.len() == 3 + 9, "{} artifact files", fa.len());
    ensure!(fa == fb, "artifact files differ");
    ensure!(sa.state_hash().unwrap() == sb.state_hash().unwrap(), "session state differs");
    Ok(format!("{} artifact files byte-identical across runs", fa.len()))
}

fn latency_bookkeeping() -> Outcome {
    const TOL: f64 = 0.050;
    let (embed, caption) = (0.2, 0.5);
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = ingest_scenario(root.path(), &Scenario::mission("timed", 600.0, 9), PipelineConfig::default(), None)
        .map_err(|e| e.to_string())?;
    let opts = ProviderOptions {
        delay: InjectedDelay {
            embed: Duration::from_secs_f64(embed),
            caption: Duration::from_secs_f64(caption),
            ..Default::default()
        },
        ..Default::default()
    };
    let engine = Engine::for_session(Arc::new(s), &opts).map_err(|e| e.to_string())?;
    engine.run_generic().map_err(|e| e.to_string())?;
    for q in &QUERIES[..2] {
        for m in Modality::ALL {
            engine.run_query(q, m).map_err(|e| e.to_string())?;
        }
    }
    let report = engine.latency_report().map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for m in Modality::ALL {
        let l = report.query.get(&m).ok_or(format!("no {m} records"))?;
        let got = l.stage("embed_text").ok_or(format!("{m}: no embed_text stage"))?.mean_s;
        worst = worst.max((got - embed).abs());
        ensure!((got - embed).abs() <= TOL, "{m}: embed_text {got:.3} s, injected {embed} s");
    }
    let text = &report.query[&Modality::Text];
    let got = text.stage("caption").ok_or("text: no caption stage")?.mean_s;
    worst = worst.max((got - caption).abs());
    ensure!((got - caption).abs() <= TOL, "query caption {got:.3} s, injected {caption} s");
    let gtext = report.generic.get(&Modality::Text).ok_or("no generic text record")?;
    let got = gtext.stage("caption").ok_or("generic text: no caption stage")?.mean_s;
    worst = worst.max((got - caption).abs());
    ensure!((got - caption).abs() <= TOL, "generic caption {got:.3} s, injected {caption} s");

    // Text generation runs the skim pipeline first, then captions it.
    let records: Vec<LatencyRecord> = engine.session().latency_records().map_err(|e| e.to_string())?;
    for r in records.iter().filter(|r| r.modality == Modality::Text) {
        let names: Vec<&str> = r.stages.iter().map(|s| s.stage.as_str()).collect();
        let cap = names.iter().position(|&s| s == "caption").ok_or(format!("{}: no caption", r.key))?;
        ensure!(cap == names.len() - 1, "{}: caption is not the last stage: {names:?}", r.key);
        ensure!(names[..cap].iter().any(|s| s.starts_with("skim.")), "{}: no skim stages before caption: {names:?}", r.key);
    }
    let skim_total = report.query[&Modality::Skim].total.mean_s;
    ensure!(text.total.mean_s >= skim_total + caption - TOL, "text total {:.3} s vs skim {skim_total:.3} s", text.total.mean_s);
    Ok(format!("stage times within {:.1} ms of injected delays (tolerance 50 ms); text = skim stages + caption", worst * 1e3))
}

fn protocol_conformance() -> Outcome {
    let world = Arc::new(ScenarioWorld::new(Scenario::mission("conformance", 600.0, 7)).map_err(|e| e.to_string())?);
    let mut checks = 0;
    for role in ProviderRole::ALL {
        let local = FixtureProvider::scenario(role, world.clone());
        let cmd = format!("{} provider --role {role} --transport stdio", env!("CARGO_BIN_EXE_robosumm"));
        let transport = StreamTransport::spawn(&cmd).map_err(|e| e.to_string())?;
        let remote = RemoteProvider::connect(local.descriptor().clone(), Box::new(transport)).map_err(|e| e.to_string())?;
        for (how, p) in [("in-process", &local as &dyn Provider), ("stdio", &remote as &dyn Provider)] {
            let report = run_conformance(p);
            ensure!(report.passed(), "{how} {role}: {:?}", report.failures());
            checks += report.checks.len();
        }
    }
    Ok(format!("4 roles in-process and over stdio, {checks} checks passed"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("knapsack exactness", knapsack_exactness),
        ("KTS recovery", kts_recovery),
        ("PCA oracle", pca_oracle),
        ("diversity invariant", diversity_invariant),
        ("equal-information configuration", equal_information),
        ("determinism", determinism),
        ("latency bookkeeping", latency_bookkeeping),
        ("protocol conformance", protocol_conformance),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<34} {detail}  [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<34} {why}  [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
