//! Domain types shared by every stage of the engine.
//!
//! Time is kept as `(frame index, rational rate)` and only rendered as
//! seconds at the edges, so a 40 minute session never accumulates drift.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid frame rate {0}")]
    InvalidRate(String),
    #[error("matrix holds {actual} values, expected {rows}x{dim}")]
    Shape { rows: usize, dim: usize, actual: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid segment [{start}, {end})")]
    InvalidSegment { start: u64, end: u64 },
    #[error("invalid configuration: {0}")]
    Config(ValidationReport),
    #[error("{0}")]
    Invariant(String),
}

/// Frames per second as an exact ratio `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRate {
    num: u32,
    den: u32,
}

impl FrameRate {
    pub fn new(num: u32, den: u32) -> Result<Self, ModelError> {
        if num == 0 || den == 0 {
            return Err(ModelError::InvalidRate(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(Self { num: num / g, den: den / g })
    }

    pub const fn whole(fps: u32) -> Self {
        Self { num: fps, den: 1 }
    }

    /// Accepts integral rates and the usual NTSC-style `n*1000/1001` rates.
    pub fn from_fps(fps: f64) -> Result<Self, ModelError> {
        if !fps.is_finite() || fps <= 0.0 {
            return Err(ModelError::InvalidRate(fps.to_string()));
        }
        for den in [1u32, 1001, 1000, 100] {
            let num = fps * den as f64;
            if (num - num.round()).abs() < 1e-6 && num.round() <= u32::MAX as f64 {
                return Self::new(num.round() as u32, den);
            }
        }
        Err(ModelError::InvalidRate(fps.to_string()))
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    pub fn fps(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn seconds(&self, index: u64) -> f64 {
        (index as f64 * self.den as f64) / self.num as f64
    }

    /// Index of the frame displayed at `t` seconds.
    pub fn index_at(&self, t: f64) -> u64 {
        if t <= 0.0 {
            return 0;
        }
        ((t * self.num as f64) / self.den as f64 + 1e-9).floor() as u64
    }

    /// Whole frames covering `seconds`, rounding down.
    pub fn frames_in(&self, seconds: f64) -> u64 {
        self.index_at(seconds)
    }
}

impl fmt::Display for FrameRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub source_uri: String,
    pub native_rate: FrameRate,
    pub frame_count: u64,
    pub duration_s: f64,
}

impl VideoMeta {
    pub fn new(source_uri: impl Into<String>, native_rate: FrameRate, frame_count: u64) -> Self {
        Self {
            source_uri: source_uri.into(),
            native_rate,
            frame_count,
            duration_s: native_rate.seconds(frame_count),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.frame_count == 0 {
            return Err(ModelError::Invariant("video has no frames".into()));
        }
        let expected = self.native_rate.seconds(self.frame_count);
        if (expected - self.duration_s).abs() > 1.0 / self.native_rate.fps() + 1e-9 {
            return Err(ModelError::Invariant(format!(
                "duration {}s inconsistent with {} frames at {} fps",
                self.duration_s, self.frame_count, self.native_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub index: u64,
    pub rate: FrameRate,
}

impl FrameRef {
    pub fn new(index: u64, rate: FrameRate) -> Self {
        Self { index, rate }
    }

    pub fn timestamp_s(&self) -> f64 {
        self.rate.seconds(self.index)
    }
}

/// Half-open frame interval `[start, end)` of one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentRef {
    pub start: u64,
    pub end: u64,
    pub rate: FrameRate,
}

impl SegmentRef {
    pub fn new(start: u64, end: u64, rate: FrameRate) -> Result<Self, ModelError> {
        if start >= end {
            return Err(ModelError::InvalidSegment { start, end });
        }
        Ok(Self { start, end, rate })
    }

    pub fn start_frame(&self) -> FrameRef {
        FrameRef::new(self.start, self.rate)
    }

    pub fn end_frame(&self) -> FrameRef {
        FrameRef::new(self.end, self.rate)
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn start_s(&self) -> f64 {
        self.rate.seconds(self.start)
    }

    pub fn end_s(&self) -> f64 {
        self.rate.seconds(self.end)
    }

    pub fn duration_s(&self) -> f64 {
        self.rate.seconds(self.len())
    }
}

/// Checks that segments are ordered, disjoint and non-empty.
pub fn check_segmentation(segments: &[SegmentRef]) -> Result<(), ModelError> {
    for pair in segments.windows(2) {
        if pair[0].end > pair[1].start || pair[0].rate != pair[1].rate {
            return Err(ModelError::Invariant(format!(
                "segments [{}, {}) and [{}, {}) overlap or are out of order",
                pair[0].start, pair[0].end, pair[1].start, pair[1].end
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSegment {
    pub segment: SegmentRef,
    pub score: f64,
}

impl ScoredSegment {
    pub fn duration_s(&self) -> f64 {
        self.segment.duration_s()
    }
}

/// Identifies the vector space a matrix lives in (provider name and version).
/// Vectors from different spaces are never compared.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingSpace(pub String);

impl EmbeddingSpace {
    pub fn new(provider: &str, version: &str) -> Self {
        Self(format!("{provider}@{version}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EmbeddingSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Row-major `rows x dim` matrix of 32-bit features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
    space: EmbeddingSpace,
}

impl EmbeddingMatrix {
    pub fn new(
        rows: usize,
        dim: usize,
        values: Vec<f32>,
        space: EmbeddingSpace,
    ) -> Result<Self, ModelError> {
        if values.len() != rows * dim {
            return Err(ModelError::Shape { rows, dim, actual: values.len() });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { row: pos / dim.max(1), col: pos % dim.max(1) });
        }
        Ok(Self { rows, dim, values, space })
    }

    pub fn from_rows(rows: &[Vec<f32>], dim: usize, space: EmbeddingSpace) -> Result<Self, ModelError> {
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(ModelError::Invariant(format!(
                    "row {i} has {} values, expected {dim}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, values, space)
    }

    pub fn empty(dim: usize, space: EmbeddingSpace) -> Self {
        Self { rows: 0, dim, values: Vec::new(), space }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn space(&self) -> &EmbeddingSpace {
        &self.space
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.dim.max(1)).take(self.rows)
    }

    /// Rows widened to `f64`.
    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
    }
}

/// Per-frame generic importance, aligned with the generic-rate stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceCurve {
    scores: Vec<f32>,
}

impl ImportanceCurve {
    pub fn new(scores: Vec<f32>) -> Result<Self, ModelError> {
        if let Some(row) = scores.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { row, col: 0 });
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.scores.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn check(&mut self, ok: bool, field: &'static str, message: impl Into<String>) {
        if !ok {
            self.violations.push(Violation { field: field.to_string(), message: message.into() });
        }
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn fields(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.field.as_str()).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.field, v.message)?;
        }
        Ok(())
    }
}

pub const DEFAULT_GENERIC_PROMPT: &str = "This video was recorded by the front-facing camera of a \
legged ground robot exploring tunnels and underground structures during a search and rescue \
mission. Describe in detail what the robot sees and does in this video.";

pub const DEFAULT_QUERY_PROMPT: &str = "This video was recorded by the front-facing camera of a \
legged ground robot exploring tunnels and underground structures during a search and rescue \
mission. Answer the operator's question about the video: {query}";

/// Every tunable of both pipelines. Defaults reproduce the published
/// parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Generic stream rate (frames/s).
    pub generic_fps: f64,
    /// Query stream rate (frames/s).
    pub query_fps: f64,
    /// Fixed query segment length `d`.
    pub segment_len_s: f64,
    /// Minimum KTS segment duration `D`.
    pub min_segment_s: f64,
    /// PCA dimensions `L`.
    pub pca_dims: usize,
    /// Similarity threshold `δ` for storyboard diversity.
    pub diversity_delta: f64,
    /// Generic storyboard size `M`.
    pub generic_board_size: usize,
    /// Query storyboard size `m`.
    pub query_board_size: usize,
    /// Generic skim budget `K` as a percentage of the video duration.
    pub knapsack_budget_pct: f64,
    /// Query skim segment count `k`.
    pub top_k: usize,
    pub caption_frame_cap: usize,
    /// Captioner length penalty for the generic text.
    pub caption_length_penalty: f64,
    /// Captioner length penalty for query answers.
    pub query_length_penalty: f64,
    pub generic_sentences: usize,
    pub query_sentences: usize,
    pub generic_prompt: String,
    /// Must contain `{query}`.
    pub query_prompt: String,
    /// Weight of the change-point count penalty.
    pub kts_penalty: f64,
    /// Features are mean-pooled to this rate before KTS.
    pub kts_sample_hz: f64,
    pub kts_max_change_points: usize,
    pub knapsack_resolution_s: f64,
    pub provider_max_in_flight: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            generic_fps: 15.0,
            query_fps: 1.0,
            segment_len_s: 8.0,
            min_segment_s: 1.0,
            pca_dims: 100,
            diversity_delta: 0.5,
            generic_board_size: 24,
            query_board_size: 4,
            knapsack_budget_pct: 15.0,
            top_k: 6,
            caption_frame_cap: 100,
            caption_length_penalty: 2.0,
            query_length_penalty: 0.5,
            generic_sentences: 6,
            query_sentences: 1,
            generic_prompt: DEFAULT_GENERIC_PROMPT.to_string(),
            query_prompt: DEFAULT_QUERY_PROMPT.to_string(),
            kts_penalty: 1.0,
            kts_sample_hz: 1.0,
            kts_max_change_points: 300,
            knapsack_resolution_s: 1.0,
            provider_max_in_flight: 4,
        }
    }
}

impl PipelineConfig {
    pub fn generic_rate(&self) -> FrameRate {
        FrameRate::from_fps(self.generic_fps).unwrap_or(FrameRate::whole(15))
    }

    pub fn query_rate(&self) -> FrameRate {
        FrameRate::from_fps(self.query_fps).unwrap_or(FrameRate::whole(1))
    }

    /// Generic skim budget for a video of `duration_s`.
    pub fn knapsack_budget_s(&self, duration_s: f64) -> f64 {
        duration_s * self.knapsack_budget_pct / 100.0
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}

pub fn validate_config(cfg: PipelineConfig) -> Result<PipelineConfig, ValidationReport> {
    let mut r = ValidationReport::default();
    let finite_pos = |v: f64| v.is_finite() && v > 0.0;

    r.check(
        finite_pos(cfg.generic_fps) && FrameRate::from_fps(cfg.generic_fps).is_ok(),
        "generic_fps",
        format!("must be a positive frame rate, got {}", cfg.generic_fps),
    );
    r.check(
        finite_pos(cfg.query_fps) && FrameRate::from_fps(cfg.query_fps).is_ok(),
        "query_fps",
        format!("must be a positive frame rate, got {}", cfg.query_fps),
    );
    r.check(
        finite_pos(cfg.segment_len_s),
        "segment_len_s",
        format!("must be positive, got {}", cfg.segment_len_s),
    );
    r.check(
        finite_pos(cfg.min_segment_s),
        "min_segment_s",
        format!("must be positive, got {}", cfg.min_segment_s),
    );
    r.check(
        cfg.segment_len_s >= cfg.min_segment_s,
        "segment_len_s",
        format!(
            "segment length {}s is shorter than the minimum segment duration {}s",
            cfg.segment_len_s, cfg.min_segment_s
        ),
    );
    r.check(
        cfg.segment_len_s * cfg.query_fps >= 1.0,
        "segment_len_s",
        "segment must span at least one query frame",
    );
    r.check(cfg.pca_dims >= 1, "pca_dims", "must be at least 1");
    r.check(
        (0.0..=1.0).contains(&cfg.diversity_delta),
        "diversity_delta",
        format!("must lie in [0, 1], got {}", cfg.diversity_delta),
    );
    r.check(cfg.generic_board_size >= 1, "generic_board_size", "must be at least 1");
    r.check(cfg.query_board_size >= 1, "query_board_size", "must be at least 1");
    r.check(
        cfg.knapsack_budget_pct > 0.0 && cfg.knapsack_budget_pct < 100.0,
        "knapsack_budget_pct",
        format!("must lie strictly between 0 and 100, got {}", cfg.knapsack_budget_pct),
    );
    r.check(cfg.top_k >= 1, "top_k", "must be at least 1");
    r.check(cfg.caption_frame_cap >= 1, "caption_frame_cap", "must be at least 1");
    r.check(
        cfg.caption_length_penalty.is_finite(),
        "caption_length_penalty",
        "must be finite",
    );
    r.check(cfg.query_length_penalty.is_finite(), "query_length_penalty", "must be finite");
    r.check(cfg.generic_sentences >= 1, "generic_sentences", "must be at least 1");
    r.check(cfg.query_sentences >= 1, "query_sentences", "must be at least 1");
    r.check(!cfg.generic_prompt.trim().is_empty(), "generic_prompt", "must not be empty");
    r.check(
        cfg.query_prompt.contains("{query}"),
        "query_prompt",
        "must contain a {query} placeholder",
    );
    r.check(finite_pos(cfg.kts_penalty), "kts_penalty", "must be positive");
    r.check(
        finite_pos(cfg.kts_sample_hz) && cfg.kts_sample_hz <= cfg.generic_fps,
        "kts_sample_hz",
        "must be positive and no faster than generic_fps",
    );
    r.check(cfg.kts_max_change_points >= 1, "kts_max_change_points", "must be at least 1");
    r.check(
        finite_pos(cfg.knapsack_resolution_s),
        "knapsack_resolution_s",
        "must be positive",
    );
    r.check(
        cfg.provider_max_in_flight >= 1,
        "provider_max_in_flight",
        "must be at least 1",
    );

    if r.is_empty() {
        Ok(cfg)
    } else {
        Err(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryboardEntry {
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub image: String,
}

/// Chronological key frames. Relevance scores are deliberately absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StoryboardManifest {
    pub stream_fps: f64,
    pub entries: Vec<StoryboardEntry>,
}

impl StoryboardManifest {
    pub fn validate(&self, max_entries: usize) -> Result<(), ModelError> {
        if self.entries.len() > max_entries {
            return Err(ModelError::Invariant(format!(
                "storyboard has {} entries, limit {max_entries}",
                self.entries.len()
            )));
        }
        for w in self.entries.windows(2) {
            if w[0].timestamp_s >= w[1].timestamp_s {
                return Err(ModelError::Invariant("storyboard is not chronological".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditInterval {
    pub start_s: f64,
    pub end_s: f64,
}

impl EditInterval {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// A skim as source-video intervals, played back to back.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SkimEditList {
    pub intervals: Vec<EditInterval>,
    pub total_s: f64,
    /// Source frames behind each interval, at the rate they were selected.
    pub segments: Vec<SegmentRef>,
}

impl SkimEditList {
    /// Builds an edit list from segments, sorting them chronologically.
    pub fn from_segments(mut segments: Vec<SegmentRef>) -> Result<Self, ModelError> {
        segments.sort_by_key(|s| (s.start, s.end));
        check_segmentation(&segments)?;
        let intervals: Vec<EditInterval> = segments
            .iter()
            .map(|s| EditInterval { start_s: s.start_s(), end_s: s.end_s() })
            .collect();
        let total_s = segments.iter().map(|s| s.duration_s()).sum();
        Ok(Self { intervals, total_s, segments })
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn validate(&self, video_duration_s: f64) -> Result<(), ModelError> {
        let mut prev_end = f64::NEG_INFINITY;
        for iv in &self.intervals {
            if iv.start_s < prev_end - 1e-9 || iv.end_s <= iv.start_s {
                return Err(ModelError::Invariant("skim intervals overlap or are unordered".into()));
            }
            if iv.start_s < -1e-9 || iv.end_s > video_duration_s + 1e-9 {
                return Err(ModelError::Invariant(format!(
                    "skim interval [{}, {}] exceeds video duration {video_duration_s}",
                    iv.start_s, iv.end_s
                )));
            }
            prev_end = iv.end_s;
        }
        let sum: f64 = self.intervals.iter().map(EditInterval::duration_s).sum();
        if (sum - self.total_s).abs() > 1e-6 {
            return Err(ModelError::Invariant(format!(
                "total_s {} does not match interval sum {sum}",
                self.total_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionMeta {
    pub provider: String,
    pub length_penalty: f64,
    pub requested_sentences: usize,
    pub realized_sentences: usize,
    pub frames_sent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TextStatus {
    Available,
    Unavailable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSummary {
    pub text: String,
    #[serde(flatten)]
    pub status: TextStatus,
    /// Artifact key of the skim the text was generated from.
    pub source_skim: String,
    pub query: Option<String>,
    pub provider_meta: Option<CaptionMeta>,
}

impl TextSummary {
    pub fn is_available(&self) -> bool {
        matches!(self.status, TextStatus::Available)
    }
}

/// Rough sentence count used to report realized caption length.
pub fn count_sentences(text: &str) -> usize {
    let n = text
        .split(['.', '!', '?'])
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .count();
    n.max(usize::from(!text.trim().is_empty()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Storyboard,
    Skim,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Storyboard, Modality::Skim, Modality::Text];

    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::Storyboard => "storyboard",
            Modality::Skim => "skim",
            Modality::Text => "text",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "storyboard" => Ok(Modality::Storyboard),
            "skim" | "video" => Ok(Modality::Skim),
            "text" => Ok(Modality::Text),
            other => Err(format!("unknown modality {other:?}")),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SummaryArtifact {
    Storyboard(StoryboardManifest),
    Skim(SkimEditList),
    Text(TextSummary),
}

impl SummaryArtifact {
    pub fn modality(&self) -> Modality {
        match self {
            SummaryArtifact::Storyboard(_) => Modality::Storyboard,
            SummaryArtifact::Skim(_) => Modality::Skim,
            SummaryArtifact::Text(_) => Modality::Text,
        }
    }
}
