//! The generic and query pipelines, end to end.
//!
//! Generic summaries are produced once per session and cached; query
//! summaries are produced live and cached under a key derived from the
//! query text and the configuration hash.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::archive::{Archive, ArchiveRole};
use crate::changepoint::{
    kts_segment, pool_rows, segment_scores, segments_from_boundaries, unpool_boundaries, KtsError, KtsParams, KtsResult,
};
use crate::ingest::{fixed_segmentation, IngestError, Session, StreamKind};
use crate::latency::{latency_report, LatencyRecord, LatencyReport, PipelineKind, StageClock};
use crate::model::{
    count_sentences, CaptionMeta, EmbeddingMatrix, FrameRate, ImportanceCurve, Modality, ModelError, PipelineConfig,
    ScoredSegment, SegmentRef, SkimEditList, StoryboardEntry, StoryboardManifest, SummaryArtifact, TextStatus,
    TextSummary,
};
use crate::numerics::{dot, pca_fit, pca_project, NumericsError};
use crate::providers::fixture::{scenario_set, FixtureProvider, InjectedDelay};
use crate::providers::transport::LazyRemoteProvider;
use crate::providers::{
    self, is_configured, CaptionRequest, FrameInput, Provider, ProviderDescriptor, ProviderError, ProviderRole,
    ProviderSet, SegmentInput, TransportKind, UnconfiguredProvider,
};
use crate::select::{greedy_diverse, knapsack_select, topk_chrono, SelectError, Selection, SelectionTrace};
use crate::synthetic::{Scenario, ScenarioWorld};

/// Longest accepted query, in characters.
pub const MAX_QUERY_CHARS: usize = 1024;
/// Frames per provider call when filling archives.
pub const FRAME_BATCH: usize = 512;
pub const SEGMENT_BATCH: usize = 64;

pub const GENERIC_STORYBOARD: &str = "generic-storyboard";
pub const GENERIC_SKIM: &str = "generic-skim";
pub const GENERIC_TEXT: &str = "generic-text";
pub const GENERIC_KEYS: [&str; 3] = [GENERIC_STORYBOARD, GENERIC_SKIM, GENERIC_TEXT];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no {archive} archive and it cannot be computed: {source}")]
    MissingArchive { archive: ArchiveRole, source: ProviderError },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("{archive} archive was computed in space {archive_space} but the provider answers in {provider_space}; re-run embed")]
    SpaceMismatch { archive: ArchiveRole, archive_space: String, provider_space: String },
    #[error("session is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Kts(#[from] KtsError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl PipelineError {
    /// The provider role whose unavailability caused this error, if any.
    pub fn unavailable_role(&self) -> Option<ProviderRole> {
        match self {
            PipelineError::Provider(e) | PipelineError::MissingArchive { source: e, .. } if e.is_unavailable() => e.role(),
            _ => None,
        }
    }
}

/// Where an artifact came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub pipeline: PipelineKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    pub config_hash: String,
    /// Provider ids (`name@version`) by role, for the roles involved.
    pub providers: BTreeMap<ProviderRole, String>,
}

/// An artifact as stored in the session cache. Contains nothing that varies
/// between runs, so identical inputs give identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactDocument {
    pub key: String,
    pub provenance: Provenance,
    pub artifact: SummaryArtifact,
}

/// An artifact with the latency of the run that generated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactResponse {
    #[serde(flatten)]
    pub document: ArtifactDocument,
    /// Absent when the artifact could not be stored (e.g. degraded text).
    pub latency: Option<LatencyRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericSummary {
    pub storyboard: ArtifactResponse,
    pub skim: ArtifactResponse,
    pub text: ArtifactResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub response: ArtifactResponse,
    pub cached: bool,
}

/// Diagnostic record of how the generic skim was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkimTrace {
    pub kts: Option<KtsResult>,
    pub kts_stride: usize,
    pub budget_s: f64,
    pub selection: SelectionTrace,
    /// Set when no segment fit the budget and a prefix was taken instead.
    pub fallback: Option<String>,
}

/// Cache key for a query artifact.
pub fn query_key(modality: Modality, query: &str, config_hash: &str) -> String {
    let digest = hex::encode(Sha256::digest(format!("{config_hash}\n{query}").as_bytes()));
    format!("query-{}-{}", modality.as_str(), &digest[..16])
}

pub fn validate_query(query: &str) -> Result<&str, PipelineError> {
    if query.trim().is_empty() {
        return Err(PipelineError::InvalidQuery("query is empty".into()));
    }
    let n = query.chars().count();
    if n > MAX_QUERY_CHARS {
        return Err(PipelineError::InvalidQuery(format!("query has {n} characters, limit is {MAX_QUERY_CHARS}")));
    }
    Ok(query)
}

/// Options for building a session's providers.
#[derive(Debug, Clone, Default)]
pub struct ProviderOptions {
    /// Overrides of the session's configured descriptors, by role.
    pub overrides: Vec<ProviderDescriptor>,
    pub delay: InjectedDelay,
    /// Timeout for remote calls; defaults to 120 s.
    pub timeout: Option<Duration>,
}

/// Builds the provider set for a session: configured descriptors first,
/// then scenario fixtures for synthetic sessions, then placeholders.
pub fn session_providers(session: &Session, opts: &ProviderOptions) -> Result<ProviderSet, PipelineError> {
    let cfg = session.config();
    let mut set = match session.world() {
        Some(w) => scenario_set(w.clone(), cfg.generic_rate(), opts.delay),
        None => ProviderSet {
            frame_features: Arc::new(UnconfiguredProvider::new(ProviderRole::FrameFeatures)),
            importance: Arc::new(UnconfiguredProvider::new(ProviderRole::Importance)),
            joint: Arc::new(UnconfiguredProvider::new(ProviderRole::JointEmbedding)),
            captioner: Arc::new(UnconfiguredProvider::new(ProviderRole::Captioner)),
        },
    };
    let mut descriptors = session.manifest().providers;
    for o in &opts.overrides {
        descriptors.retain(|d| d.role != o.role);
        descriptors.push(o.clone());
    }
    let timeout = opts.timeout.unwrap_or(Duration::from_secs(120));
    for d in descriptors {
        let p: Arc<dyn Provider> = match d.transport {
            TransportKind::InProcessFixture => {
                let world = if d.endpoint.is_empty() || d.endpoint == "scenario" {
                    session.world().cloned().ok_or_else(|| {
                        PipelineError::Inconsistent(format!("{} fixture needs a scenario session or file", d.role))
                    })?
                } else {
                    let text = std::fs::read(&d.endpoint).map_err(|source| IngestError::Io {
                        path: d.endpoint.clone().into(),
                        source,
                    })?;
                    let sc: Scenario = serde_json::from_slice(&text).map_err(|e| IngestError::Format {
                        path: d.endpoint.clone().into(),
                        message: e.to_string(),
                    })?;
                    Arc::new(ScenarioWorld::new(sc)?)
                };
                Arc::new(
                    FixtureProvider::scenario(d.role, world)
                        .with_descriptor(d)
                        .with_importance_rate(cfg.generic_rate())
                        .with_delay(opts.delay),
                )
            }
            TransportKind::SubprocessStdio | TransportKind::Http => Arc::new(LazyRemoteProvider::new(d, timeout)),
        };
        set.set(p);
    }
    Ok(set.bounded(cfg.provider_max_in_flight))
}

/// Runs `f` over `0..n` in chunks of `batch` on up to `workers` threads and
/// concatenates the resulting rows in order.
fn batched(
    n: usize,
    batch: usize,
    workers: usize,
    f: impl Fn(Range<usize>) -> Result<EmbeddingMatrix, ProviderError> + Sync,
) -> Result<Vec<EmbeddingMatrix>, ProviderError> {
    let chunks: Vec<Range<usize>> = (0..n).step_by(batch.max(1)).map(|s| s..(s + batch).min(n)).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<EmbeddingMatrix, ProviderError>>>> =
        Mutex::new((0..chunks.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, chunks.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= chunks.len() {
                    break;
                }
                let r = f(chunks[i].clone());
                let failed = r.is_err();
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
                if failed {
                    // Stop handing out work; the error is reported below.
                    next.store(chunks.len(), Ordering::Relaxed);
                    break;
                }
            });
        }
    });
    let mut out = Vec::with_capacity(chunks.len());
    for r in results.into_inner().unwrap_or_else(|e| e.into_inner()) {
        match r {
            Some(r) => out.push(r?),
            None => continue,
        }
    }
    if out.len() != chunks.len() {
        unreachable!("a batch failed without reporting an error");
    }
    Ok(out)
}

fn concat_rows(parts: Vec<EmbeddingMatrix>, dim: usize, space: crate::model::EmbeddingSpace) -> Result<EmbeddingMatrix, ModelError> {
    let rows = parts.iter().map(|m| m.rows()).sum();
    let mut values = Vec::with_capacity(rows * dim);
    for p in &parts {
        values.extend_from_slice(p.values());
    }
    EmbeddingMatrix::new(rows, dim, values, space)
}

/// Orchestrates both pipelines over one session.
pub struct Engine {
    session: Arc<Session>,
    providers: ProviderSet,
    generic_guard: Mutex<()>,
    archive_guard: Mutex<()>,
}

impl Engine {
    pub fn new(session: Arc<Session>, providers: ProviderSet) -> Self {
        Self { session, providers, generic_guard: Mutex::new(()), archive_guard: Mutex::new(()) }
    }

    /// An engine with the session's configured (or fixture) providers.
    pub fn for_session(session: Arc<Session>, opts: &ProviderOptions) -> Result<Self, PipelineError> {
        let providers = session_providers(&session, opts)?;
        Ok(Self::new(session, providers))
    }

    pub fn session(&self) -> &Arc<Session> {
        &self.session
    }

    pub fn providers(&self) -> &ProviderSet {
        &self.providers
    }

    pub fn config(&self) -> PipelineConfig {
        self.session.config()
    }

    fn workers(&self) -> usize {
        self.config().provider_max_in_flight.max(1)
    }

    // ---- archives ------------------------------------------------------

    /// Computes any missing archive among `roles`. Returns those computed.
    pub fn ensure_archives(&self, roles: &[ArchiveRole]) -> Result<Vec<ArchiveRole>, PipelineError> {
        let _g = self.archive_guard.lock().unwrap_or_else(|e| e.into_inner());
        let mut done = Vec::new();
        for &role in roles {
            // Importance needs the features first.
            if role == ArchiveRole::Importance && !self.session.has_archive(ArchiveRole::GenericFeatures) {
                self.compute_archive(ArchiveRole::GenericFeatures)?;
                done.push(ArchiveRole::GenericFeatures);
            }
            if !self.session.has_archive(role) {
                self.compute_archive(role)?;
                done.push(role);
            }
        }
        Ok(done)
    }

    /// Recomputes every archive, replacing what is stored.
    pub fn embed_all(&self, force: bool) -> Result<Vec<ArchiveRole>, PipelineError> {
        if force {
            let _g = self.archive_guard.lock().unwrap_or_else(|e| e.into_inner());
            for role in ArchiveRole::ALL {
                self.session.remove_archive(role)?;
            }
        }
        self.ensure_archives(&ArchiveRole::ALL)
    }

    fn compute_archive(&self, role: ArchiveRole) -> Result<(), PipelineError> {
        let missing = |source: ProviderError| PipelineError::MissingArchive { archive: role, source };
        let m = self.session.manifest();
        let cfg = &m.config;
        tracing::info!(session = %m.id, archive = %role, "computing archive");
        let archive = match role {
            ArchiveRole::GenericFeatures | ArchiveRole::QueryFrameEmb => {
                let (kind, p) = if role == ArchiveRole::GenericFeatures {
                    (StreamKind::Generic, &self.providers.frame_features)
                } else {
                    (StreamKind::Query, &self.providers.joint)
                };
                let stream = m.stream(kind);
                let d = p.descriptor();
                let dim = d.expected_dim().unwrap_or(0);
                let parts = batched(stream.frame_count as usize, FRAME_BATCH, self.workers(), |r| {
                    let frames = self.session.frame_inputs(kind, r.start as u64..r.end as u64);
                    providers::embed_frames(p.as_ref(), &frames)
                })
                .map_err(missing)?;
                Archive::frames(role, stream.rate, concat_rows(parts, dim, d.space())?)
            }
            ArchiveRole::Importance => {
                let features = self.session.read_archive(ArchiveRole::GenericFeatures)?;
                let curve = providers::score_importance(self.providers.importance.as_ref(), &features.matrix)
                    .map_err(missing)?;
                Archive::importance(features.rate, &curve, self.providers.importance.descriptor().space())
            }
            ArchiveRole::QuerySegmentEmb => {
                let stream = &m.query_stream;
                let segs = fixed_segmentation(stream.frame_count, stream.rate, cfg.segment_len_s)?;
                let seg_frames = segs.first().map_or(0, |s| s.len());
                let p = &self.providers.joint;
                let d = p.descriptor();
                let dim = d.expected_dim().unwrap_or(0);
                let parts = batched(segs.len(), SEGMENT_BATCH, self.workers(), |r| {
                    let inputs: Vec<SegmentInput> = segs[r]
                        .iter()
                        .map(|s| SegmentInput {
                            segment: *s,
                            frames: self.session.frame_inputs(StreamKind::Query, s.start..s.end),
                        })
                        .collect();
                    providers::embed_segments(p.as_ref(), &inputs, seg_frames)
                })
                .map_err(missing)?;
                Archive::segments(stream.rate, cfg.segment_len_s, concat_rows(parts, dim, d.space())?)
            }
        };
        self.session.store_archive(&archive)?;
        Ok(())
    }

    /// Reads an archive and checks it still matches the provider for its role.
    fn load_checked(&self, role: ArchiveRole) -> Result<Archive, PipelineError> {
        let a = self.session.read_archive(role)?;
        let p = match role {
            ArchiveRole::GenericFeatures => &self.providers.frame_features,
            ArchiveRole::Importance => &self.providers.importance,
            ArchiveRole::QueryFrameEmb | ArchiveRole::QuerySegmentEmb => &self.providers.joint,
        };
        if is_configured(p.as_ref()) && a.matrix.space() != &p.descriptor().space() {
            return Err(PipelineError::SpaceMismatch {
                archive: role,
                archive_space: a.matrix.space().to_string(),
                provider_space: p.descriptor().space().to_string(),
            });
        }
        Ok(a)
    }

    fn provider_ids(&self, roles: &[ProviderRole]) -> BTreeMap<ProviderRole, String> {
        roles.iter().map(|&r| (r, self.providers.get(r).descriptor().id())).collect()
    }

    fn stored_response(&self, key: &str) -> Result<Option<ArtifactResponse>, PipelineError> {
        let Some(document) = self.session.load_artifact::<ArtifactDocument>(key)? else {
            return Ok(None);
        };
        let records: Vec<LatencyRecord> = self.session.latency_records()?;
        let latency = records.into_iter().rev().find(|r| r.key == key);
        Ok(Some(ArtifactResponse { document, latency }))
    }

    /// A cached artifact with its generation latency.
    pub fn artifact(&self, key: &str) -> Result<Option<ArtifactResponse>, PipelineError> {
        self.stored_response(key)
    }

    fn store(
        &self,
        document: ArtifactDocument,
        trace: &impl Serialize,
        latency: LatencyRecord,
    ) -> Result<ArtifactResponse, PipelineError> {
        self.session.store_trace(&document.key, trace)?;
        self.session.store_artifact(&document.key, &document)?;
        self.session.append_latency(&latency)?;
        Ok(ArtifactResponse { document, latency: Some(latency) })
    }

    fn caption_skim(
        &self,
        frames: Vec<FrameInput>,
        prompt: String,
        penalty: f64,
        query: Option<String>,
        sentences: usize,
        source_skim: &str,
    ) -> TextSummary {
        let cfg = self.config();
        let req = CaptionRequest::from_skim(frames, cfg.caption_frame_cap, prompt, penalty, query.clone(), sentences);
        let cap = self.providers.captioner.as_ref();
        match providers::caption(cap, &req, cfg.caption_frame_cap) {
            Ok(text) => TextSummary {
                provider_meta: Some(CaptionMeta {
                    provider: cap.descriptor().id(),
                    length_penalty: penalty,
                    requested_sentences: sentences,
                    realized_sentences: count_sentences(&text),
                    frames_sent: req.frames.len(),
                }),
                text,
                status: TextStatus::Available,
                source_skim: source_skim.to_string(),
                query,
            },
            Err(e) => {
                tracing::warn!(error = %e, "caption unavailable");
                TextSummary {
                    text: String::new(),
                    status: TextStatus::Unavailable { reason: e.to_string() },
                    source_skim: source_skim.to_string(),
                    query,
                    provider_meta: None,
                }
            }
        }
    }

    // ---- generic pipeline ----------------------------------------------

    /// The three generic artifacts if all are cached.
    pub fn generic_cached(&self) -> Result<Option<GenericSummary>, PipelineError> {
        let (Some(storyboard), Some(skim), Some(text)) = (
            self.stored_response(GENERIC_STORYBOARD)?,
            self.stored_response(GENERIC_SKIM)?,
            self.stored_response(GENERIC_TEXT)?,
        ) else {
            return Ok(None);
        };
        Ok(Some(GenericSummary { storyboard, skim, text }))
    }

    /// Produces (or returns the cached) storyboard, skim and text summary.
    /// Runs at most once at a time per engine.
    pub fn run_generic(&self) -> Result<GenericSummary, PipelineError> {
        let _g = self.generic_guard.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(done) = self.generic_cached()? {
            return Ok(done);
        }
        let cfg = self.config();
        let m = self.session.manifest();
        let mut clock = StageClock::new();

        let (storyboard, skim) = match (self.stored_response(GENERIC_STORYBOARD)?, self.stored_response(GENERIC_SKIM)?) {
            (Some(sb), Some(sk)) => (sb, sk),
            _ => self.generic_visual(&cfg, &mut clock)?,
        };

        let SummaryArtifact::Skim(edit) = &skim.document.artifact else {
            return Err(PipelineError::Inconsistent("generic skim artifact has the wrong kind".into()));
        };
        let frames: Vec<FrameInput> = edit
            .segments
            .iter()
            .flat_map(|s| self.session.frame_inputs(StreamKind::Generic, s.start..s.end))
            .collect();
        let text = clock.time("caption", || {
            self.caption_skim(
                frames,
                cfg.generic_prompt.clone(),
                cfg.caption_length_penalty,
                None,
                cfg.generic_sentences,
                GENERIC_SKIM,
            )
        });
        let available = text.is_available();
        let document = ArtifactDocument {
            key: GENERIC_TEXT.into(),
            provenance: Provenance {
                pipeline: PipelineKind::Generic,
                query: None,
                config_hash: m.config_hash.clone(),
                providers: self.provider_ids(&[
                    ProviderRole::FrameFeatures,
                    ProviderRole::Importance,
                    ProviderRole::Captioner,
                ]),
            },
            artifact: SummaryArtifact::Text(text),
        };
        let text = if available {
            let mut stages = skim.latency.as_ref().map(|l| l.stages.clone()).unwrap_or_default();
            stages.extend(clock.select("caption", &[]));
            let rec = StageClock::finish(stages, GENERIC_TEXT.into(), PipelineKind::Generic, Modality::Text, None);
            self.store(document, &serde_json::json!({ "source_skim": GENERIC_SKIM }), rec)?
        } else {
            // Not cached, so a later run retries the captioner.
            ArtifactResponse { document, latency: None }
        };
        Ok(GenericSummary { storyboard, skim, text })
    }

    fn generic_visual(
        &self,
        cfg: &PipelineConfig,
        clock: &mut StageClock,
    ) -> Result<(ArtifactResponse, ArtifactResponse), PipelineError> {
        let m = self.session.manifest();
        let rate = m.generic_stream.rate;
        let embed_t0 = std::time::Instant::now();
        self.ensure_archives(&[ArchiveRole::GenericFeatures, ArchiveRole::Importance])?;
        clock.record("embed", embed_t0.elapsed().as_secs_f64());
        let features = self.load_checked(ArchiveRole::GenericFeatures)?;
        let curve: ImportanceCurve = self.load_checked(ArchiveRole::Importance)?.to_curve()?;
        let n = features.matrix.rows();
        if curve.len() != n {
            return Err(PipelineError::Inconsistent(format!("{} importance scores for {n} frames", curve.len())));
        }

        let reduced = clock.time("pca", || -> Result<Vec<Vec<f64>>, PipelineError> {
            let dims = cfg.pca_dims.min(n.saturating_sub(1)).min(features.matrix.dim());
            if dims == 0 {
                return Ok(features.matrix.to_f64_rows());
            }
            let model = pca_fit(&features.matrix, dims)?;
            Ok(pca_project(&model, &features.matrix)?)
        })?;
        let scores = curve.to_f64();

        // Storyboard.
        let selection = clock.time("storyboard.select", || {
            greedy_diverse(&scores, &reduced, cfg.diversity_delta, cfg.generic_board_size)
        })?;
        let board = StoryboardManifest {
            stream_fps: rate.fps(),
            entries: selection
                .indices
                .iter()
                .map(|&i| StoryboardEntry {
                    frame_index: i as u64,
                    timestamp_s: rate.seconds(i as u64),
                    image: self.session.frame_locator(StreamKind::Generic, i as u64),
                })
                .collect(),
        };
        board.validate(cfg.generic_board_size)?;

        // Skim.
        let stride = ((cfg.generic_fps / cfg.kts_sample_hz).round() as usize).max(1);
        let kts = clock.time("skim.kts", || -> Result<Option<KtsResult>, PipelineError> {
            if n == 0 {
                return Ok(None);
            }
            let pooled = pool_rows(&reduced, stride);
            let pooled_rate = FrameRate::new(rate.num(), rate.den() * stride as u32)?;
            let params = KtsParams {
                min_segment_s: cfg.min_segment_s,
                penalty: cfg.kts_penalty,
                max_change_points: Some(cfg.kts_max_change_points),
            };
            Ok(Some(kts_segment(&pooled, pooled_rate, &params)?))
        })?;
        let boundaries = kts.as_ref().map(|k| unpool_boundaries(&k.boundaries, stride)).unwrap_or_default();
        let segments = segments_from_boundaries(&boundaries, n as u64, rate);
        let budget_s = cfg.knapsack_budget_s(m.meta.duration_s);
        let (chosen, selection_trace, fallback) = clock.time("skim.select", || -> Result<_, PipelineError> {
            let items = segment_scores(&segments, &curve)?;
            if items.is_empty() {
                return Ok((Vec::new(), SelectionTrace::default(), None));
            }
            let sel = knapsack_select(&items, budget_s, cfg.knapsack_resolution_s)?;
            let mut chosen: Vec<SegmentRef> = sel.indices.iter().map(|&i| items[i].segment).collect();
            let mut fallback = None;
            if chosen.is_empty() {
                if let Some((seg, why)) = budget_prefix(&items, budget_s, rate) {
                    chosen.push(seg);
                    fallback = Some(why);
                }
            }
            Ok((chosen, sel.trace, fallback))
        })?;
        let edit = SkimEditList::from_segments(chosen)?;
        edit.validate(m.meta.duration_s.max(rate.seconds(n as u64)))?;

        let shared = ["embed", "pca"];
        let provenance = Provenance {
            pipeline: PipelineKind::Generic,
            query: None,
            config_hash: m.config_hash.clone(),
            providers: self.provider_ids(&[ProviderRole::FrameFeatures, ProviderRole::Importance]),
        };
        let sb_doc = ArtifactDocument {
            key: GENERIC_STORYBOARD.into(),
            provenance: provenance.clone(),
            artifact: SummaryArtifact::Storyboard(board),
        };
        let sb_rec = StageClock::finish(
            clock.select("storyboard.", &shared),
            GENERIC_STORYBOARD.into(),
            PipelineKind::Generic,
            Modality::Storyboard,
            None,
        );
        let sb = self.store(sb_doc, &selection.trace, sb_rec)?;
        let sk_doc = ArtifactDocument { key: GENERIC_SKIM.into(), provenance, artifact: SummaryArtifact::Skim(edit) };
        let sk_rec = StageClock::finish(
            clock.select("skim.", &shared),
            GENERIC_SKIM.into(),
            PipelineKind::Generic,
            Modality::Skim,
            None,
        );
        let trace = SkimTrace { kts, kts_stride: stride, budget_s, selection: selection_trace, fallback };
        let sk = self.store(sk_doc, &trace, sk_rec)?;
        Ok((sb, sk))
    }

    // ---- query pipeline ------------------------------------------------

    /// Answers `query` in one modality, from cache when possible.
    pub fn run_query(&self, query: &str, modality: Modality) -> Result<QueryOutcome, PipelineError> {
        validate_query(query)?;
        let m = self.session.manifest();
        let key = query_key(modality, query, &m.config_hash);
        if let Some(response) = self.stored_response(&key)? {
            return Ok(QueryOutcome { response, cached: true });
        }
        let cfg = &m.config;
        let rate = m.query_stream.rate;
        let needed = match modality {
            Modality::Storyboard => ArchiveRole::QueryFrameEmb,
            Modality::Skim | Modality::Text => ArchiveRole::QuerySegmentEmb,
        };
        self.ensure_archives(&[needed])?;
        let archive = self.load_checked(needed)?;
        let joint = self.providers.joint.as_ref();

        let mut clock = StageClock::new();
        let q = clock.time("embed_text", || providers::embed_text(joint, query))?;
        if q.len() != archive.matrix.dim() {
            return Err(PipelineError::Inconsistent(format!(
                "text vector has dim {}, {} archive has {}",
                q.len(),
                needed,
                archive.matrix.dim()
            )));
        }
        let relevance = |c: &mut StageClock, stage: &str| {
            c.time(stage, || archive.matrix.iter_rows().map(|r| dot(&q, r)).collect::<Vec<f64>>())
        };

        let mut roles = vec![ProviderRole::JointEmbedding];
        let (artifact, trace): (SummaryArtifact, serde_json::Value) = match modality {
            Modality::Storyboard => {
                let rel = relevance(&mut clock, "storyboard.relevance");
                let sel = clock.time("storyboard.select", || {
                    let rows = archive.matrix.to_f64_rows();
                    greedy_diverse(&rel, &rows, cfg.diversity_delta, cfg.query_board_size)
                })?;
                let board = StoryboardManifest {
                    stream_fps: rate.fps(),
                    entries: sel
                        .indices
                        .iter()
                        .map(|&i| StoryboardEntry {
                            frame_index: i as u64,
                            timestamp_s: rate.seconds(i as u64),
                            image: self.session.frame_locator(StreamKind::Query, i as u64),
                        })
                        .collect(),
                };
                board.validate(cfg.query_board_size)?;
                (SummaryArtifact::Storyboard(board), serde_json::to_value(&sel.trace).expect("trace serializes"))
            }
            Modality::Skim | Modality::Text => {
                let (edit, sel) = self.query_skim(cfg, &archive, &mut clock, relevance)?;
                let trace = serde_json::to_value(&sel.trace).expect("trace serializes");
                if modality == Modality::Skim {
                    (SummaryArtifact::Skim(edit), trace)
                } else {
                    roles.push(ProviderRole::Captioner);
                    let frames: Vec<FrameInput> = edit
                        .segments
                        .iter()
                        .flat_map(|s| self.session.frame_inputs(StreamKind::Query, s.start..s.end))
                        .collect();
                    let prompt = cfg.query_prompt.replace("{query}", query);
                    let skim_key = query_key(Modality::Skim, query, &m.config_hash);
                    // The text names its source skim, so that skim must exist too.
                    if self.session.artifact_bytes(&skim_key).is_none() {
                        let doc = ArtifactDocument {
                            key: skim_key.clone(),
                            provenance: Provenance {
                                pipeline: PipelineKind::Query,
                                query: Some(query.to_string()),
                                config_hash: m.config_hash.clone(),
                                providers: self.provider_ids(&[ProviderRole::JointEmbedding]),
                            },
                            artifact: SummaryArtifact::Skim(edit.clone()),
                        };
                        let record = StageClock::finish(
                            clock.stages().to_vec(),
                            skim_key.clone(),
                            PipelineKind::Query,
                            Modality::Skim,
                            Some(query.to_string()),
                        );
                        self.store(doc, &trace, record)?;
                    }
                    let text = clock.time("caption", || {
                        self.caption_skim(
                            frames,
                            prompt,
                            cfg.query_length_penalty,
                            Some(query.to_string()),
                            cfg.query_sentences,
                            &skim_key,
                        )
                    });
                    (SummaryArtifact::Text(text), trace)
                }
            }
        };

        let document = ArtifactDocument {
            key: key.clone(),
            provenance: Provenance {
                pipeline: PipelineKind::Query,
                query: Some(query.to_string()),
                config_hash: m.config_hash.clone(),
                providers: self.provider_ids(&roles),
            },
            artifact,
        };
        let record =
            StageClock::finish(clock.stages().to_vec(), key, PipelineKind::Query, modality, Some(query.to_string()));
        let degraded = matches!(&document.artifact, SummaryArtifact::Text(t) if !t.is_available());
        let response = if degraded {
            ArtifactResponse { document, latency: Some(record) }
        } else {
            self.store(document, &trace, record)?
        };
        Ok(QueryOutcome { response, cached: false })
    }

    fn query_skim(
        &self,
        cfg: &PipelineConfig,
        archive: &Archive,
        clock: &mut StageClock,
        relevance: impl Fn(&mut StageClock, &str) -> Vec<f64>,
    ) -> Result<(SkimEditList, Selection), PipelineError> {
        let m = self.session.manifest();
        let segs = fixed_segmentation(m.query_stream.frame_count, m.query_stream.rate, cfg.segment_len_s)?;
        if segs.len() != archive.matrix.rows() {
            return Err(PipelineError::Inconsistent(format!(
                "{} segment embeddings for {} segments",
                archive.matrix.rows(),
                segs.len()
            )));
        }
        let rel = relevance(clock, "skim.relevance");
        let sel = clock.time("skim.select", || {
            let items: Vec<ScoredSegment> =
                segs.iter().zip(&rel).map(|(s, &score)| ScoredSegment { segment: *s, score }).collect();
            topk_chrono(&items, cfg.top_k)
        })?;
        let edit = SkimEditList::from_segments(sel.indices.iter().map(|&i| segs[i]).collect())?;
        Ok((edit, sel))
    }

    pub fn latency_report(&self) -> Result<LatencyReport, PipelineError> {
        Ok(latency_report(&self.session.latency_records()?))
    }
}

/// When no segment fits the budget, the skim is the first `budget_s` of
/// the best-scoring segment (earliest on ties).
fn budget_prefix(items: &[ScoredSegment], budget_s: f64, rate: FrameRate) -> Option<(SegmentRef, String)> {
    let best = items
        .iter()
        .enumerate()
        .filter(|(_, it)| it.score > 0.0)
        .max_by(|(i, a), (j, b)| a.score.total_cmp(&b.score).then(j.cmp(i)))?
        .1;
    let frames = ((budget_s * rate.fps()) + 1e-9).floor() as u64;
    let len = frames.min(best.segment.len());
    if len == 0 {
        return None;
    }
    let seg = SegmentRef::new(best.segment.start, best.segment.start + len, rate).ok()?;
    Some((
        seg,
        format!(
            "no segment fits the {budget_s:.1}s budget; using the first {:.1}s of segment [{}, {})",
            seg.duration_s(),
            best.segment.start,
            best.segment.end
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ingest_scenario;
    use crate::synthetic::Scenario;

    fn engine(sc: &Scenario, cfg: PipelineConfig) -> (tempfile::TempDir, Engine) {
        let tmp = tempfile::tempdir().unwrap();
        let s = Arc::new(ingest_scenario(tmp.path(), sc, cfg, None).unwrap());
        let e = Engine::for_session(s, &ProviderOptions::default()).unwrap();
        (tmp, e)
    }

    #[test]
    fn query_validation() {
        assert!(validate_query("").is_err());
        assert!(validate_query("  \n").is_err());
        assert!(validate_query(&"x".repeat(1024)).is_ok());
        assert!(validate_query(&"x".repeat(1025)).is_err());
    }

    #[test]
    fn query_keys_depend_on_all_parts() {
        let a = query_key(Modality::Skim, "barrel", "h1");
        assert!(a.starts_with("query-skim-"));
        assert_ne!(a, query_key(Modality::Text, "barrel", "h1"));
        assert_ne!(a, query_key(Modality::Skim, "barrels", "h1"));
        assert_ne!(a, query_key(Modality::Skim, "barrel", "h2"));
    }

    #[test]
    fn degenerate_session() {
        let (_t, e) = engine(&Scenario::constant("c", 120.0), PipelineConfig::default());
        let g = e.run_generic().unwrap();
        let SummaryArtifact::Storyboard(sb) = &g.storyboard.document.artifact else { panic!() };
        assert_eq!(sb.entries.len(), 1);
        let SummaryArtifact::Skim(sk) = &g.skim.document.artifact else { panic!() };
        assert_eq!(sk.intervals.len(), 1);
        assert_eq!(sk.intervals[0].start_s, 0.0);
        assert!((sk.total_s - 18.0).abs() < 1e-9, "{}", sk.total_s);
        let trace: SkimTrace =
            serde_json::from_value(e.session().load_trace(GENERIC_SKIM).unwrap().unwrap()).unwrap();
        assert_eq!(trace.kts.unwrap().segments.len(), 1);
        assert!(trace.fallback.is_some());
    }

    #[test]
    fn query_skim_is_k_times_d() {
        let (_t, e) = engine(&Scenario::mission("m", 300.0, 5), PipelineConfig::default());
        let out = e.run_query("find the red backpack", Modality::Skim).unwrap();
        assert!(!out.cached);
        let SummaryArtifact::Skim(sk) = &out.response.document.artifact else { panic!() };
        assert_eq!(sk.intervals.len(), 6);
        assert!((sk.total_s - 48.0).abs() < 1e-9);
        let again = e.run_query("find the red backpack", Modality::Skim).unwrap();
        assert!(again.cached);
        assert_eq!(again.response, out.response);
    }

    #[test]
    fn missing_provider_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        let s = Arc::new(ingest_scenario(tmp.path(), &Scenario::mission("m", 60.0, 1), PipelineConfig::default(), None).unwrap());
        let mut set = session_providers(&s, &ProviderOptions::default()).unwrap();
        set.set(Arc::new(UnconfiguredProvider::new(ProviderRole::JointEmbedding)));
        let e = Engine::new(s, set);
        let err = e.run_query("barrel", Modality::Storyboard).unwrap_err();
        assert_eq!(err.unavailable_role(), Some(ProviderRole::JointEmbedding));
    }
}
