//! Deterministic in-process providers.
//!
//! A fixture answers either from a synthetic [`ScenarioWorld`] or from
//! recorded tables (embedding archives plus text and caption maps). Both are
//! pure functions of their inputs, so two runs produce identical bytes. An
//! optional injected delay makes latency accounting testable.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    CaptionRequest, FrameInput, Provider, ProviderDescriptor, ProviderError, ProviderRole, SegmentInput,
};
use crate::archive::{Archive, ArchiveRole};
use crate::model::{EmbeddingMatrix, FrameRate, ImportanceCurve};
use crate::synthetic::ScenarioWorld;

/// Recorded provider outputs, e.g. embeddings computed offline.
#[derive(Debug, Clone, Default)]
pub struct RecordedTables {
    pub archives: Vec<Archive>,
    /// Query text -> joint vector.
    pub texts: BTreeMap<String, Vec<f32>>,
    /// Query text (empty for the generic caption) -> caption.
    pub captions: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub enum FixtureSource {
    Scenario(Arc<ScenarioWorld>),
    Recorded(Arc<RecordedTables>),
}

/// Per-operation artificial latency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectedDelay {
    #[serde(default)]
    pub embed: Duration,
    #[serde(default)]
    pub importance: Duration,
    #[serde(default)]
    pub caption: Duration,
}

pub struct FixtureProvider {
    descriptor: ProviderDescriptor,
    source: FixtureSource,
    /// Rate of the feature stream the importance role scores.
    importance_rate: FrameRate,
    delay: InjectedDelay,
}

impl FixtureProvider {
    pub fn new(role: ProviderRole, source: FixtureSource) -> Self {
        Self {
            descriptor: ProviderDescriptor::fixture(role),
            source,
            importance_rate: FrameRate::whole(15),
            delay: InjectedDelay::default(),
        }
    }

    pub fn scenario(role: ProviderRole, world: Arc<ScenarioWorld>) -> Self {
        Self::new(role, FixtureSource::Scenario(world))
    }

    pub fn with_descriptor(mut self, descriptor: ProviderDescriptor) -> Self {
        self.descriptor = descriptor;
        self
    }

    pub fn with_importance_rate(mut self, rate: FrameRate) -> Self {
        self.importance_rate = rate;
        self
    }

    pub fn with_delay(mut self, delay: InjectedDelay) -> Self {
        self.delay = delay;
        self
    }

    fn dim(&self) -> usize {
        self.descriptor.expected_dim().unwrap_or(0)
    }

    fn pause(d: Duration) {
        if !d.is_zero() {
            std::thread::sleep(d);
        }
    }

    fn contract(&self, message: impl Into<String>) -> ProviderError {
        ProviderError::Contract { role: self.descriptor.role, message: message.into() }
    }

    fn matrix(&self, rows: Vec<Vec<f32>>) -> Result<EmbeddingMatrix, ProviderError> {
        EmbeddingMatrix::from_rows(&rows, self.dim(), self.descriptor.space()).map_err(|e| self.contract(e.to_string()))
    }

    fn recorded_archive<'a>(&self, t: &'a RecordedTables, role: ArchiveRole, rate: FrameRate) -> Result<&'a Archive, ProviderError> {
        t.archives
            .iter()
            .find(|a| a.role == role && a.rate == rate)
            .ok_or_else(|| self.contract(format!("no recorded {role} table at {rate}")))
    }

    fn recorded_row<'a>(&self, a: &'a Archive, i: u64) -> Result<&'a [f32], ProviderError> {
        if (i as usize) < a.matrix.rows() {
            Ok(a.matrix.row(i as usize))
        } else {
            Err(self.contract(format!("row {i} outside recorded {} table of {} rows", a.role, a.matrix.rows())))
        }
    }
}

impl Provider for FixtureProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn embed_frames(&self, frames: &[FrameInput]) -> Result<EmbeddingMatrix, ProviderError> {
        let role = self.descriptor.role;
        if !matches!(role, ProviderRole::FrameFeatures | ProviderRole::JointEmbedding) {
            return Err(self.unsupported("embed_frames"));
        }
        Self::pause(self.delay.embed);
        let dim = self.dim();
        let rows = match &self.source {
            FixtureSource::Scenario(w) => frames
                .iter()
                .map(|f| match role {
                    ProviderRole::FrameFeatures => w.frame_feature(f.frame.index, f.frame.rate, dim),
                    _ => w.joint_frame(f.frame.index, f.frame.rate, dim).into_iter().map(|x| x as f32).collect(),
                })
                .collect(),
            FixtureSource::Recorded(t) => {
                let arole = if role == ProviderRole::FrameFeatures {
                    ArchiveRole::GenericFeatures
                } else {
                    ArchiveRole::QueryFrameEmb
                };
                let mut rows = Vec::with_capacity(frames.len());
                for f in frames {
                    let a = self.recorded_archive(t, arole, f.frame.rate)?;
                    rows.push(self.recorded_row(a, f.frame.index)?.to_vec());
                }
                rows
            }
        };
        self.matrix(rows)
    }

    fn embed_segments(&self, segments: &[SegmentInput]) -> Result<EmbeddingMatrix, ProviderError> {
        if self.descriptor.role != ProviderRole::JointEmbedding {
            return Err(self.unsupported("embed_segments"));
        }
        Self::pause(self.delay.embed);
        let dim = self.dim();
        let mut rows = Vec::with_capacity(segments.len());
        for s in segments {
            match &self.source {
                FixtureSource::Scenario(w) => {
                    let mut acc = vec![0.0f64; dim];
                    for f in &s.frames {
                        for (a, b) in acc.iter_mut().zip(w.joint_frame(f.frame.index, f.frame.rate, dim)) {
                            *a += b;
                        }
                    }
                    let n = crate::numerics::norm(&acc);
                    let scale = if n > crate::numerics::ZERO_NORM { 1.0 / n } else { 0.0 };
                    rows.push(acc.iter().map(|x| (x * scale) as f32).collect());
                }
                FixtureSource::Recorded(t) => {
                    let a = self.recorded_archive(t, ArchiveRole::QuerySegmentEmb, s.segment.rate)?;
                    let i = s.segment.start / s.segment.len().max(1);
                    rows.push(self.recorded_row(a, i)?.to_vec());
                }
            }
        }
        self.matrix(rows)
    }

    fn embed_text(&self, query: &str) -> Result<Vec<f32>, ProviderError> {
        if self.descriptor.role != ProviderRole::JointEmbedding {
            return Err(self.unsupported("embed_text"));
        }
        if query.trim().is_empty() {
            return Err(ProviderError::invalid("query is empty"));
        }
        Self::pause(self.delay.embed);
        match &self.source {
            FixtureSource::Scenario(_) => {
                Ok(ScenarioWorld::text_embedding(query, self.dim()).into_iter().map(|x| x as f32).collect())
            }
            FixtureSource::Recorded(t) => {
                t.texts.get(query).cloned().ok_or_else(|| self.contract(format!("no recorded vector for {query:?}")))
            }
        }
    }

    fn score_importance(&self, features: &EmbeddingMatrix) -> Result<ImportanceCurve, ProviderError> {
        if self.descriptor.role != ProviderRole::Importance {
            return Err(self.unsupported("score_importance"));
        }
        Self::pause(self.delay.importance);
        let scores = match &self.source {
            FixtureSource::Scenario(w) => {
                (0..features.rows() as u64).map(|i| w.importance(i, self.importance_rate)).collect()
            }
            FixtureSource::Recorded(t) => {
                let a = self.recorded_archive(t, ArchiveRole::Importance, self.importance_rate)?;
                let curve = a.to_curve().map_err(|e| self.contract(e.to_string()))?;
                if curve.len() != features.rows() {
                    return Err(self.contract(format!(
                        "recorded curve has {} scores, stream has {} frames",
                        curve.len(),
                        features.rows()
                    )));
                }
                return Ok(curve);
            }
        };
        ImportanceCurve::new(scores).map_err(|e| self.contract(e.to_string()))
    }

    fn caption(&self, req: &CaptionRequest) -> Result<String, ProviderError> {
        if self.descriptor.role != ProviderRole::Captioner {
            return Err(self.unsupported("caption"));
        }
        Self::pause(self.delay.caption);
        match &self.source {
            FixtureSource::Scenario(w) => {
                let ts: Vec<f64> = req.frames.iter().map(|f| f.frame.timestamp_s()).collect();
                Ok(w.caption(&ts, req.query.as_deref(), req.target_sentences))
            }
            FixtureSource::Recorded(t) => {
                let key = req.query.clone().unwrap_or_default();
                t.captions.get(&key).cloned().ok_or_else(|| ProviderError::Remote {
                    role: ProviderRole::Captioner,
                    message: format!("no recorded caption for {key:?}"),
                    retryable: false,
                })
            }
        }
    }
}

/// Fixture providers for all four roles over one scenario.
pub fn scenario_set(world: Arc<ScenarioWorld>, generic_rate: FrameRate, delay: InjectedDelay) -> super::ProviderSet {
    let mk = |role| -> Arc<dyn Provider> {
        Arc::new(
            FixtureProvider::scenario(role, world.clone()).with_importance_rate(generic_rate).with_delay(delay),
        )
    };
    super::ProviderSet {
        frame_features: mk(ProviderRole::FrameFeatures),
        importance: mk(ProviderRole::Importance),
        joint: mk(ProviderRole::JointEmbedding),
        captioner: mk(ProviderRole::Captioner),
    }
}
