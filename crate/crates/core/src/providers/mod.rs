//! Learned-model providers.
//!
//! Four roles sit behind one [`Provider`] trait: generic frame features,
//! generic importance, a joint text/visual embedding, and a video captioner.
//! Implementations are either in-process fixtures ([`fixture`]) or remote
//! processes speaking the JSON wire protocol ([`protocol`], [`transport`]).
//!
//! The engine never calls trait methods directly. It goes through the free
//! functions of this module ([`embed_frames`], [`embed_text`], ...), which
//! enforce each role's contract on requests and responses.

pub mod conformance;
pub mod fixture;
pub mod protocol;
pub mod transport;

use std::fmt;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EmbeddingMatrix, EmbeddingSpace, FrameRef, ImportanceCurve, SegmentRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderRole {
    FrameFeatures,
    Importance,
    JointEmbedding,
    Captioner,
}

impl ProviderRole {
    pub const ALL: [ProviderRole; 4] = [
        ProviderRole::FrameFeatures,
        ProviderRole::Importance,
        ProviderRole::JointEmbedding,
        ProviderRole::Captioner,
    ];

    pub fn default_dim(self) -> Option<usize> {
        match self {
            ProviderRole::FrameFeatures => Some(512),
            ProviderRole::JointEmbedding => Some(768),
            ProviderRole::Importance | ProviderRole::Captioner => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProviderRole::FrameFeatures => "frame_features",
            ProviderRole::Importance => "importance",
            ProviderRole::JointEmbedding => "joint_embedding",
            ProviderRole::Captioner => "captioner",
        }
    }
}

impl fmt::Display for ProviderRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProviderRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown provider role {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportKind {
    InProcessFixture,
    SubprocessStdio,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub role: ProviderRole,
    pub transport: TransportKind,
    /// Scenario path for fixtures, a shell command for stdio, a base URL for http.
    pub endpoint: String,
    pub name: String,
    pub version: String,
    /// Output width for the embedding roles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl ProviderDescriptor {
    pub fn fixture(role: ProviderRole) -> Self {
        Self {
            role,
            transport: TransportKind::InProcessFixture,
            endpoint: "scenario".into(),
            name: format!("fixture-{}", role.as_str().replace('_', "-")),
            version: "1".into(),
            dim: role.default_dim(),
        }
    }

    /// The space this provider's vectors (or scores) live in.
    pub fn space(&self) -> EmbeddingSpace {
        EmbeddingSpace::new(&self.name, &self.version)
    }

    pub fn id(&self) -> String {
        self.space().0
    }

    pub fn expected_dim(&self) -> Option<usize> {
        self.dim.or(self.role.default_dim())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum ProviderError {
    #[error("{role} provider unreachable: {message}")]
    Transport { role: ProviderRole, message: String, retryable: bool },
    #[error("{role} provider timed out")]
    Timeout { role: ProviderRole },
    #[error("{role} provider violated its contract: {message}")]
    Contract { role: ProviderRole, message: String },
    #[error("invalid provider request: {message}")]
    InvalidRequest { message: String },
    #[error("{role} provider does not implement {op}")]
    Unsupported { role: ProviderRole, op: String },
    #[error("{role} provider failed: {message}")]
    Remote { role: ProviderRole, message: String, retryable: bool },
}

impl ProviderError {
    pub fn invalid(message: impl Into<String>) -> Self {
        ProviderError::InvalidRequest { message: message.into() }
    }

    pub fn role(&self) -> Option<ProviderRole> {
        match self {
            ProviderError::Transport { role, .. }
            | ProviderError::Timeout { role }
            | ProviderError::Contract { role, .. }
            | ProviderError::Unsupported { role, .. }
            | ProviderError::Remote { role, .. } => Some(*role),
            ProviderError::InvalidRequest { .. } => None,
        }
    }

    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Transport { retryable, .. } | ProviderError::Remote { retryable, .. } => *retryable,
            ProviderError::Timeout { .. } => true,
            _ => false,
        }
    }

    /// The provider could not be reached or did not answer.
    pub fn is_unavailable(&self) -> bool {
        matches!(self, ProviderError::Transport { .. } | ProviderError::Timeout { .. })
            || matches!(self, ProviderError::Remote { retryable: true, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameInput {
    pub frame: FrameRef,
    /// Image locator: a session-relative path or a `frame://` URI.
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInput {
    pub segment: SegmentRef,
    pub frames: Vec<FrameInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRequest {
    pub frames: Vec<FrameInput>,
    pub prompt: String,
    pub length_penalty: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    /// Requested caption length; the captioner treats it as a hint.
    pub target_sentences: usize,
}

/// `cap` indices spread evenly over `0..n`: `round(i * (n - 1) / (cap - 1))`.
/// Returns every index when `n <= cap`.
pub fn uniform_subsample(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    if cap == 1 {
        return vec![0];
    }
    (0..cap)
        .map(|i| ((i as f64 * (n - 1) as f64) / (cap - 1) as f64).round() as usize)
        .collect()
}

impl CaptionRequest {
    /// Builds a request from all frames of a skim, keeping at most `cap`.
    pub fn from_skim(
        skim_frames: Vec<FrameInput>,
        cap: usize,
        prompt: String,
        length_penalty: f64,
        query: Option<String>,
        target_sentences: usize,
    ) -> Self {
        let keep = uniform_subsample(skim_frames.len(), cap);
        let frames = keep.into_iter().map(|i| skim_frames[i].clone()).collect();
        Self { frames, prompt, length_penalty, query, target_sentences }
    }

    pub fn validate(&self, cap: usize) -> Result<(), ProviderError> {
        if self.frames.len() > cap {
            return Err(ProviderError::invalid(format!(
                "caption request carries {} frames, cap is {cap}",
                self.frames.len()
            )));
        }
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::invalid("caption prompt is empty"));
        }
        if !self.length_penalty.is_finite() {
            return Err(ProviderError::invalid("length penalty is not finite"));
        }
        Ok(())
    }
}

/// One learned-model role. Methods a role does not serve keep their
/// default, which reports [`ProviderError::Unsupported`].
pub trait Provider: Send + Sync {
    fn descriptor(&self) -> &ProviderDescriptor;

    fn embed_frames(&self, _frames: &[FrameInput]) -> Result<EmbeddingMatrix, ProviderError> {
        Err(self.unsupported("embed_frames"))
    }

    fn embed_segments(&self, _segments: &[SegmentInput]) -> Result<EmbeddingMatrix, ProviderError> {
        Err(self.unsupported("embed_segments"))
    }

    fn embed_text(&self, _query: &str) -> Result<Vec<f32>, ProviderError> {
        Err(self.unsupported("embed_text"))
    }

    fn score_importance(&self, _features: &EmbeddingMatrix) -> Result<ImportanceCurve, ProviderError> {
        Err(self.unsupported("score_importance"))
    }

    fn caption(&self, _req: &CaptionRequest) -> Result<String, ProviderError> {
        Err(self.unsupported("caption"))
    }

    fn unsupported(&self, op: &str) -> ProviderError {
        ProviderError::Unsupported { role: self.descriptor().role, op: op.to_string() }
    }
}

fn require_role(p: &dyn Provider, allowed: &[ProviderRole], op: &str) -> Result<(), ProviderError> {
    let role = p.descriptor().role;
    if allowed.contains(&role) {
        Ok(())
    } else {
        Err(ProviderError::Unsupported { role, op: op.to_string() })
    }
}

fn check_matrix(p: &dyn Provider, m: &EmbeddingMatrix, rows: usize) -> Result<(), ProviderError> {
    let d = p.descriptor();
    let contract = |message: String| ProviderError::Contract { role: d.role, message };
    if m.rows() != rows {
        return Err(contract(format!("returned {} rows for {rows} inputs", m.rows())));
    }
    if let Some(dim) = d.expected_dim() {
        if m.dim() != dim {
            return Err(contract(format!("returned dim {}, contract is {dim}", m.dim())));
        }
    }
    if m.space() != &d.space() {
        return Err(contract(format!("answered from space {}, expected {}", m.space(), d.space())));
    }
    Ok(())
}

/// One feature row per frame. Serves the frame-feature and joint roles.
pub fn embed_frames(p: &dyn Provider, frames: &[FrameInput]) -> Result<EmbeddingMatrix, ProviderError> {
    require_role(p, &[ProviderRole::FrameFeatures, ProviderRole::JointEmbedding], "embed_frames")?;
    let d = p.descriptor();
    if frames.is_empty() {
        return Ok(EmbeddingMatrix::empty(d.expected_dim().unwrap_or(0), d.space()));
    }
    let m = p.embed_frames(frames)?;
    check_matrix(p, &m, frames.len())?;
    Ok(m)
}

/// One joint-space row per fixed-length segment of `segment_frames` frames.
pub fn embed_segments(
    p: &dyn Provider,
    segments: &[SegmentInput],
    segment_frames: u64,
) -> Result<EmbeddingMatrix, ProviderError> {
    require_role(p, &[ProviderRole::JointEmbedding], "embed_segments")?;
    let d = p.descriptor();
    for s in segments {
        if s.segment.len() != segment_frames || s.frames.len() as u64 != segment_frames {
            return Err(ProviderError::Contract {
                role: d.role,
                message: format!(
                    "segment [{}, {}) has {} frames, the joint embedding needs exactly {segment_frames}",
                    s.segment.start,
                    s.segment.end,
                    s.segment.len()
                ),
            });
        }
    }
    if segments.is_empty() {
        return Ok(EmbeddingMatrix::empty(d.expected_dim().unwrap_or(0), d.space()));
    }
    let m = p.embed_segments(segments)?;
    check_matrix(p, &m, segments.len())?;
    Ok(m)
}

pub fn embed_text(p: &dyn Provider, query: &str) -> Result<Vec<f32>, ProviderError> {
    if query.trim().is_empty() {
        return Err(ProviderError::invalid("query is empty"));
    }
    require_role(p, &[ProviderRole::JointEmbedding], "embed_text")?;
    let d = p.descriptor();
    let v = p.embed_text(query)?;
    if let Some(dim) = d.expected_dim() {
        if v.len() != dim {
            return Err(ProviderError::Contract {
                role: d.role,
                message: format!("text vector has dim {}, contract is {dim}", v.len()),
            });
        }
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ProviderError::Contract { role: d.role, message: "non-finite text vector".into() });
    }
    Ok(v)
}

pub fn score_importance(p: &dyn Provider, features: &EmbeddingMatrix) -> Result<ImportanceCurve, ProviderError> {
    require_role(p, &[ProviderRole::Importance], "score_importance")?;
    let curve = p.score_importance(features)?;
    if curve.len() != features.rows() {
        return Err(ProviderError::Contract {
            role: ProviderRole::Importance,
            message: format!("{} scores for {} frames", curve.len(), features.rows()),
        });
    }
    Ok(curve)
}

pub fn caption(p: &dyn Provider, req: &CaptionRequest, frame_cap: usize) -> Result<String, ProviderError> {
    req.validate(frame_cap)?;
    require_role(p, &[ProviderRole::Captioner], "caption")?;
    let text = p.caption(req)?;
    if text.trim().is_empty() {
        return Err(ProviderError::Contract { role: ProviderRole::Captioner, message: "empty caption".into() });
    }
    Ok(text)
}

/// Counting semaphore bounding calls in flight through one provider.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Wraps a provider so at most `limit` calls run at once.
pub struct BoundedProvider {
    inner: Arc<dyn Provider>,
    gate: Gate,
}

impl BoundedProvider {
    pub fn new(inner: Arc<dyn Provider>, limit: usize) -> Self {
        Self { inner, gate: Gate { free: Mutex::new(limit.max(1)), cv: Condvar::new() } }
    }
}

impl Provider for BoundedProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        self.inner.descriptor()
    }

    fn embed_frames(&self, frames: &[FrameInput]) -> Result<EmbeddingMatrix, ProviderError> {
        let _p = self.gate.acquire();
        self.inner.embed_frames(frames)
    }

    fn embed_segments(&self, segments: &[SegmentInput]) -> Result<EmbeddingMatrix, ProviderError> {
        let _p = self.gate.acquire();
        self.inner.embed_segments(segments)
    }

    fn embed_text(&self, query: &str) -> Result<Vec<f32>, ProviderError> {
        let _p = self.gate.acquire();
        self.inner.embed_text(query)
    }

    fn score_importance(&self, features: &EmbeddingMatrix) -> Result<ImportanceCurve, ProviderError> {
        let _p = self.gate.acquire();
        self.inner.score_importance(features)
    }

    fn caption(&self, req: &CaptionRequest) -> Result<String, ProviderError> {
        let _p = self.gate.acquire();
        self.inner.caption(req)
    }
}

/// The four providers a session needs.
#[derive(Clone)]
pub struct ProviderSet {
    pub frame_features: Arc<dyn Provider>,
    pub importance: Arc<dyn Provider>,
    pub joint: Arc<dyn Provider>,
    pub captioner: Arc<dyn Provider>,
}

impl ProviderSet {
    pub fn get(&self, role: ProviderRole) -> &Arc<dyn Provider> {
        match role {
            ProviderRole::FrameFeatures => &self.frame_features,
            ProviderRole::Importance => &self.importance,
            ProviderRole::JointEmbedding => &self.joint,
            ProviderRole::Captioner => &self.captioner,
        }
    }

    pub fn set(&mut self, provider: Arc<dyn Provider>) {
        match provider.descriptor().role {
            ProviderRole::FrameFeatures => self.frame_features = provider,
            ProviderRole::Importance => self.importance = provider,
            ProviderRole::JointEmbedding => self.joint = provider,
            ProviderRole::Captioner => self.captioner = provider,
        }
    }

    /// Provider ids by role, for artifact provenance.
    pub fn ids(&self) -> std::collections::BTreeMap<ProviderRole, String> {
        ProviderRole::ALL.into_iter().map(|r| (r, self.get(r).descriptor().id())).collect()
    }

    /// Wraps every provider with an in-flight limit.
    pub fn bounded(self, limit: usize) -> Self {
        let wrap = |p: Arc<dyn Provider>| -> Arc<dyn Provider> { Arc::new(BoundedProvider::new(p, limit)) };
        Self {
            frame_features: wrap(self.frame_features),
            importance: wrap(self.importance),
            joint: wrap(self.joint),
            captioner: wrap(self.captioner),
        }
    }
}

/// Name carried by [`UnconfiguredProvider`] descriptors.
pub const UNCONFIGURED: &str = "unconfigured";

/// Placeholder for a role nobody serves; every call reports it unavailable.
pub struct UnconfiguredProvider {
    descriptor: ProviderDescriptor,
}

impl UnconfiguredProvider {
    pub fn new(role: ProviderRole) -> Self {
        Self {
            descriptor: ProviderDescriptor {
                role,
                transport: TransportKind::InProcessFixture,
                endpoint: String::new(),
                name: UNCONFIGURED.into(),
                version: "0".into(),
                dim: role.default_dim(),
            },
        }
    }

    fn fail<T>(&self) -> Result<T, ProviderError> {
        Err(ProviderError::Transport {
            role: self.descriptor.role,
            message: "no provider configured for this role".into(),
            retryable: false,
        })
    }
}

impl Provider for UnconfiguredProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn embed_frames(&self, _: &[FrameInput]) -> Result<EmbeddingMatrix, ProviderError> {
        self.fail()
    }

    fn embed_segments(&self, _: &[SegmentInput]) -> Result<EmbeddingMatrix, ProviderError> {
        self.fail()
    }

    fn embed_text(&self, _: &str) -> Result<Vec<f32>, ProviderError> {
        self.fail()
    }

    fn score_importance(&self, _: &EmbeddingMatrix) -> Result<ImportanceCurve, ProviderError> {
        self.fail()
    }

    fn caption(&self, _: &CaptionRequest) -> Result<String, ProviderError> {
        self.fail()
    }
}

pub fn is_configured(p: &dyn Provider) -> bool {
    p.descriptor().name != UNCONFIGURED
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_rule() {
        let idx = uniform_subsample(120, 100);
        assert_eq!(idx.len(), 100);
        assert_eq!(idx[0], 0);
        assert_eq!(idx[99], 119);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(uniform_subsample(48, 100), (0..48).collect::<Vec<_>>());
        assert_eq!(uniform_subsample(5400, 100).len(), 100);
        assert_eq!(uniform_subsample(10, 1), vec![0]);
        assert!(uniform_subsample(0, 100).is_empty());
    }

    #[test]
    fn error_taxonomy() {
        let e = ProviderError::Transport { role: ProviderRole::Captioner, message: "refused".into(), retryable: true };
        assert!(e.is_retryable() && e.is_unavailable());
        assert_eq!(e.role(), Some(ProviderRole::Captioner));
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["code"], "transport");
        let back: ProviderError = serde_json::from_value(json).unwrap();
        assert_eq!(back, e);
        assert!(!ProviderError::invalid("x").is_retryable());
    }

    #[test]
    fn descriptor_defaults() {
        let d = ProviderDescriptor::fixture(ProviderRole::JointEmbedding);
        assert_eq!(d.expected_dim(), Some(768));
        assert_eq!(ProviderDescriptor::fixture(ProviderRole::FrameFeatures).expected_dim(), Some(512));
        assert_eq!(d.id(), "fixture-joint-embedding@1");
        assert_eq!("captioner".parse::<ProviderRole>().unwrap(), ProviderRole::Captioner);
    }
}
