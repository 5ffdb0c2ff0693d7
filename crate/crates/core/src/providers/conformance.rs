//! Conformance checks any provider implementation must pass.

use serde::Serialize;

use super::{
    caption, embed_frames, embed_segments, embed_text, score_importance, CaptionRequest, FrameInput, Provider,
    ProviderError, ProviderRole, SegmentInput,
};
use crate::model::{EmbeddingMatrix, EmbeddingSpace, FrameRate, FrameRef, SegmentRef, DEFAULT_GENERIC_PROMPT};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformanceReport {
    pub role: ProviderRole,
    pub provider: String,
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

struct Checks(Vec<CheckResult>);

impl Checks {
    fn check(&mut self, name: &str, r: Result<(), String>) {
        let (passed, detail) = match r {
            Ok(()) => (true, String::new()),
            Err(d) => (false, d),
        };
        self.0.push(CheckResult { name: name.to_string(), passed, detail });
    }
}

fn frames(range: std::ops::Range<u64>, rate: FrameRate) -> Vec<FrameInput> {
    range.map(|i| FrameInput { frame: FrameRef::new(i, rate), locator: format!("frame://conformance/{i}") }).collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn finite(m: &EmbeddingMatrix) -> Result<(), String> {
    ensure(m.values().iter().all(|v| v.is_finite()), || "non-finite output".into())
}

fn expect_err<T>(r: Result<T, ProviderError>, what: &str) -> Result<(), String> {
    match r {
        Err(ProviderError::InvalidRequest { .. } | ProviderError::Contract { .. } | ProviderError::Unsupported { .. }) => {
            Ok(())
        }
        Err(e) => Err(format!("{what}: wrong error kind {e}")),
        Ok(_) => Err(format!("{what}: accepted")),
    }
}

/// Runs every check that applies to the provider's role.
pub fn run_conformance(p: &dyn Provider) -> ConformanceReport {
    let d = p.descriptor().clone();
    let mut c = Checks(Vec::new());
    c.check("descriptor names a provider and version", ensure(!d.name.is_empty() && !d.version.is_empty(), || {
        format!("name {:?} version {:?}", d.name, d.version)
    }));
    let rate = FrameRate::whole(1);
    let dim = d.expected_dim();

    match d.role {
        ProviderRole::FrameFeatures | ProviderRole::JointEmbedding => {
            let f = frames(0..8, rate);
            c.check("embeds a batch with one row per frame", embed_frames(p, &f).map_err(|e| e.to_string()).and_then(|m| {
                finite(&m)?;
                ensure(m.rows() == 8 && Some(m.dim()) == dim, || format!("{}x{}", m.rows(), m.dim()))
            }));
            c.check("frame embeddings are deterministic", (|| {
                let a = embed_frames(p, &f).map_err(|e| e.to_string())?;
                let b = embed_frames(p, &f).map_err(|e| e.to_string())?;
                ensure(a == b, || "two calls differ".into())
            })());
            c.check("rows do not depend on batch composition", (|| {
                let all = embed_frames(p, &f).map_err(|e| e.to_string())?;
                let tail = embed_frames(p, &f[4..]).map_err(|e| e.to_string())?;
                ensure(all.row(5) == tail.row(1), || "row changed with batch".into())
            })());
            c.check("empty batch yields an empty matrix", embed_frames(p, &[]).map_err(|e| e.to_string()).and_then(|m| {
                ensure(m.rows() == 0, || format!("{} rows", m.rows()))
            }));
            c.check("refuses captioning", expect_err(p.caption(&sample_caption(&f)), "caption"));
        }
        ProviderRole::Importance => {
            let feats = probe_features(50, 16);
            c.check("one finite score per frame", score_importance(p, &feats).map_err(|e| e.to_string()).and_then(|s| {
                ensure(s.len() == 50 && s.scores().iter().all(|x| x.is_finite()), || format!("{} scores", s.len()))
            }));
            c.check("scores are deterministic", (|| {
                let a = score_importance(p, &feats).map_err(|e| e.to_string())?;
                let b = score_importance(p, &feats).map_err(|e| e.to_string())?;
                ensure(a == b, || "two calls differ".into())
            })());
            c.check("empty stream yields no scores", p
                .score_importance(&probe_features(0, 16))
                .map_err(|e| e.to_string())
                .and_then(|s| ensure(s.is_empty(), || format!("{} scores", s.len()))));
            c.check("refuses frame embedding", expect_err(p.embed_frames(&frames(0..0, rate)), "embed_frames"));
        }
        ProviderRole::Captioner => {
            let f = frames(0..20, FrameRate::whole(15));
            let req = sample_caption(&f);
            c.check("captions a skim with non-empty text", caption(p, &req, 100).map(|_| ()).map_err(|e| e.to_string()));
            c.check("captions are deterministic", (|| {
                let a = caption(p, &req, 100).map_err(|e| e.to_string())?;
                let b = caption(p, &req, 100).map_err(|e| e.to_string())?;
                ensure(a == b, || "two calls differ".into())
            })());
            let mut q = req.clone();
            q.query = Some("Is there a backpack?".into());
            q.target_sentences = 1;
            c.check("answers a query caption", caption(p, &q, 100).map(|_| ()).map_err(|e| e.to_string()));
            c.check("refuses text embedding", expect_err(p.embed_text("barrel"), "embed_text"));
        }
    }

    if d.role == ProviderRole::JointEmbedding {
        c.check("text vectors match the frame width", embed_text(p, "a red backpack").map_err(|e| e.to_string()).and_then(|v| {
            ensure(Some(v.len()) == dim, || format!("dim {}", v.len()))
        }));
        c.check("text vectors are deterministic", (|| {
            let a = embed_text(p, "a red backpack").map_err(|e| e.to_string())?;
            let b = embed_text(p, "a red backpack").map_err(|e| e.to_string())?;
            ensure(a == b, || "two calls differ".into())
        })());
        c.check("rejects an empty query", expect_err(p.embed_text("   "), "blank query"));
        let segs: Vec<SegmentInput> = (0..2u64)
            .map(|k| SegmentInput {
                segment: SegmentRef::new(k * 8, k * 8 + 8, rate).expect("valid segment"),
                frames: frames(k * 8..k * 8 + 8, rate),
            })
            .collect();
        c.check("one joint row per segment", embed_segments(p, &segs, 8).map_err(|e| e.to_string()).and_then(|m| {
            finite(&m)?;
            ensure(m.rows() == 2 && Some(m.dim()) == dim, || format!("{}x{}", m.rows(), m.dim()))
        }));
        let short = vec![SegmentInput {
            segment: SegmentRef::new(0, 5, rate).expect("valid segment"),
            frames: frames(0..5, rate),
        }];
        c.check("rejects a segment of the wrong length", expect_err(embed_segments(p, &short, 8), "short segment"));
    }

    ConformanceReport { role: d.role, provider: d.id(), checks: c.0 }
}

fn sample_caption(f: &[FrameInput]) -> CaptionRequest {
    CaptionRequest::from_skim(f.to_vec(), 100, DEFAULT_GENERIC_PROMPT.into(), 2.0, None, 6)
}

fn probe_features(rows: usize, dim: usize) -> EmbeddingMatrix {
    let values = (0..rows * dim).map(|k| ((k as f32) * 0.37).sin()).collect();
    EmbeddingMatrix::new(rows, dim, values, EmbeddingSpace::new("conformance-probe", "1")).expect("finite probe")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::fixture::FixtureProvider;
    use crate::synthetic::{Scenario, ScenarioWorld};
    use std::sync::Arc;

    #[test]
    fn fixtures_conform() {
        let world = Arc::new(ScenarioWorld::new(Scenario::mission("c", 120.0, 1)).unwrap());
        for role in ProviderRole::ALL {
            let r = run_conformance(&FixtureProvider::scenario(role, world.clone()));
            assert!(r.passed(), "{role}: {:?}", r.failures());
        }
    }
}
