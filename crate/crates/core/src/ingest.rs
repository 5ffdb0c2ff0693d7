//! Sessions: one source video, its two frame streams, embedding archives and
//! cached summaries, persisted as a directory.
//!
//! ```text
//! <session>/
//!   session.json              manifest (meta, config, streams, archives)
//!   scenario.json             synthetic sessions only
//!   streams/{generic,query}/  numbered images + index.json
//!   archives/*.emb            embedding archives
//!   artifacts/<key>.json      cached summary artifacts
//!   traces/<key>.json         selection traces
//!   latency.jsonl             one generation record per line
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::archive::{read_archive, write_archive, Archive, ArchiveError, ArchiveRole};
use crate::model::{validate_config, FrameRate, FrameRef, ModelError, PipelineConfig, SegmentRef, VideoMeta};
use crate::providers::{FrameInput, ProviderDescriptor};
use crate::synthetic::{Scenario, ScenarioWorld};

pub const MANIFEST_FILE: &str = "session.json";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const INDEX_FILE: &str = "index.json";
const LATENCY_FILE: &str = "latency.jsonl";
const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "ppm", "bmp"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("extractor exited with {status}: {stderr}")]
    Extractor { status: String, stderr: String },
    #[error("no frame extractor configured for {0} (set ROBOSUMM_EXTRACTOR or pass an image directory)")]
    NoExtractor(String),
    #[error("extractor template must contain {{input}}, {{rate}} and {{outdir}}: {0}")]
    BadTemplate(String),
    #[error("no frames extracted into {0}")]
    NoFrames(PathBuf),
    #[error("malformed {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(crate::model::ValidationReport),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("cannot change {0} on an ingested session; ingest again with the new value")]
    Immutable(&'static str),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to `path` through a temporary file and a rename, so
/// readers see either the old or the new content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = path.with_extension(format!("tmp-{}-{n}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IngestError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("session types serialize");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IngestError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| IngestError::Format { path: path.to_path_buf(), message: e.to_string() })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// External frame extractor, e.g.
/// `ffmpeg -loglevel error -i {input} -vf fps={rate} {outdir}/%06d.png`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorCommand {
    pub template: String,
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

impl ExtractorCommand {
    pub fn new(template: impl Into<String>) -> Result<Self, IngestError> {
        let template = template.into();
        if ["{input}", "{rate}", "{outdir}"].iter().any(|p| !template.contains(p)) {
            return Err(IngestError::BadTemplate(template));
        }
        Ok(Self { template })
    }

    pub fn render(&self, input: &str, rate: FrameRate, outdir: &Path) -> String {
        let rate = if rate.den() == 1 { rate.num().to_string() } else { format!("{}/{}", rate.num(), rate.den()) };
        self.template
            .replace("{input}", &shell_quote(input))
            .replace("{rate}", &rate)
            .replace("{outdir}", &shell_quote(&outdir.to_string_lossy()))
    }

    fn run(&self, input: &str, rate: FrameRate, outdir: &Path) -> Result<(), IngestError> {
        let cmd = self.render(input, rate, outdir);
        tracing::info!(%cmd, "extracting frames");
        let out = Command::new("sh").arg("-c").arg(&cmd).output().map_err(io_err(outdir))?;
        if !out.status.success() {
            return Err(IngestError::Extractor {
                status: out.status.to_string(),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(())
    }
}

/// The `index.json` of a frame directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIndex {
    pub source: String,
    pub rate: FrameRate,
    pub count: u64,
    /// Image file names, in frame order, relative to the directory.
    pub files: Vec<String>,
}

impl FrameIndex {
    pub fn read(dir: &Path) -> Result<Self, IngestError> {
        let idx: FrameIndex = read_json(&dir.join(INDEX_FILE))?;
        if idx.files.len() as u64 != idx.count {
            return Err(IngestError::Format {
                path: dir.join(INDEX_FILE),
                message: format!("count {} but {} files", idx.count, idx.files.len()),
            });
        }
        Ok(idx)
    }

    pub fn duration_s(&self) -> f64 {
        self.rate.seconds(self.count)
    }

    /// Builds an index for a directory of numbered images.
    pub fn scan(dir: &Path, source: &str, rate: FrameRate) -> Result<Self, IngestError> {
        let mut files: Vec<String> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|name| {
                Path::new(name)
                    .extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        // Extractors rarely zero-pad consistently: frame_9 comes before frame_10.
        files.sort_by(|a, b| natord::compare(a, b));
        Ok(Self { source: source.to_string(), rate, count: files.len() as u64, files })
    }
}

/// Extracts `source` at `rate` into `out_dir`.
///
/// `source` is either an image directory with its own `index.json` (frames
/// are resampled by nearest preceding timestamp) or anything the extractor
/// command accepts. A directory already holding an index for the same source
/// and rate is reused as is.
pub fn extract_frames(
    extractor: Option<&ExtractorCommand>,
    source: &str,
    rate: FrameRate,
    out_dir: &Path,
) -> Result<FrameIndex, IngestError> {
    if let Ok(existing) = FrameIndex::read(out_dir) {
        if existing.source == source && existing.rate == rate {
            return Ok(existing);
        }
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let src = Path::new(source);
    let index = if src.join(INDEX_FILE).is_file() {
        resample_image_dir(src, source, rate, out_dir)?
    } else {
        let ex = extractor.ok_or_else(|| IngestError::NoExtractor(source.to_string()))?;
        ex.run(source, rate, out_dir)?;
        FrameIndex::scan(out_dir, source, rate)?
    };
    if index.count == 0 {
        return Err(IngestError::NoFrames(out_dir.to_path_buf()));
    }
    write_json(&out_dir.join(INDEX_FILE), &index)?;
    Ok(index)
}

fn resample_image_dir(src: &Path, source: &str, rate: FrameRate, out_dir: &Path) -> Result<FrameIndex, IngestError> {
    let from = FrameIndex::read(src)?;
    let n = rate.frames_in(from.duration_s());
    let mut files = Vec::with_capacity(n as usize);
    for i in 0..n {
        let j = from.rate.index_at(rate.seconds(i)).min(from.count.saturating_sub(1)) as usize;
        let name = &from.files[j];
        let ext = Path::new(name).extension().and_then(|e| e.to_str()).unwrap_or("png");
        let out_name = format!("{i:06}.{ext}");
        let dst = out_dir.join(&out_name);
        fs::copy(src.join(name), &dst).map_err(io_err(&dst))?;
        files.push(out_name);
    }
    Ok(FrameIndex { source: source.to_string(), rate, count: n, files })
}

/// Consecutive segments of exactly `d_s` seconds; a shorter tail is dropped.
pub fn fixed_segmentation(stream_len: u64, rate: FrameRate, d_s: f64) -> Result<Vec<SegmentRef>, ModelError> {
    let len = (d_s * rate.fps()).round() as u64;
    if len == 0 || ((len as f64) - d_s * rate.fps()).abs() > 1e-6 {
        return Err(ModelError::Invariant(format!(
            "segment length {d_s}s is not a whole number of frames at {rate}"
        )));
    }
    (0..stream_len / len).map(|k| SegmentRef::new(k * len, (k + 1) * len, rate)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Generic,
    Query,
}

impl StreamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::Generic => "generic",
            StreamKind::Query => "query",
        }
    }
}

impl std::str::FromStr for StreamKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generic" => Ok(StreamKind::Generic),
            "query" => Ok(StreamKind::Query),
            other => Err(format!("unknown stream {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamSource {
    /// Numbered images in a session-relative directory.
    Images { dir: String },
    /// Frames exist only as positions on a synthetic scenario.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub rate: FrameRate,
    pub frame_count: u64,
    pub source: StreamSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub file: String,
    pub rows: usize,
    pub dim: usize,
    pub provider: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub id: String,
    pub meta: VideoMeta,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub generic_stream: StreamInfo,
    pub query_stream: StreamInfo,
    #[serde(default)]
    pub archives: BTreeMap<ArchiveRole, ArchiveEntry>,
    /// Providers configured for this session; roles not listed use fixtures.
    #[serde(default)]
    pub providers: Vec<ProviderDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SessionManifest {
    pub fn stream(&self, kind: StreamKind) -> &StreamInfo {
        match kind {
            StreamKind::Generic => &self.generic_stream,
            StreamKind::Query => &self.query_stream,
        }
    }

    /// Stream lengths agree with the video duration (one frame of slack).
    pub fn check_streams(&self) -> Vec<String> {
        let mut out = Vec::new();
        for kind in [StreamKind::Generic, StreamKind::Query] {
            let s = self.stream(kind);
            let expected = self.meta.duration_s * s.rate.fps();
            if (s.frame_count as f64 - expected).abs() > 1.0 + 1e-9 {
                out.push(format!(
                    "{} stream has {} frames, expected {expected:.0} for {:.3}s at {}",
                    kind.as_str(),
                    s.frame_count,
                    self.meta.duration_s,
                    s.rate
                ));
            }
        }
        out
    }
}

/// Deterministic session id from the source and configuration.
pub fn session_id(source_uri: &str, cfg: &PipelineConfig) -> String {
    sha256_hex(format!("{source_uri}\n{}", cfg.hash()).as_bytes())[..16].to_string()
}

/// An open session directory. Manifest updates are serialized; artifact and
/// archive files are written atomically.
pub struct Session {
    dir: PathBuf,
    manifest: RwLock<SessionManifest>,
    write: Mutex<()>,
    world: Option<std::sync::Arc<ScenarioWorld>>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("dir", &self.dir).finish_non_exhaustive()
    }
}

impl Session {
    pub fn open(dir: &Path) -> Result<Self, IngestError> {
        let manifest: SessionManifest = read_json(&dir.join(MANIFEST_FILE))?;
        let world = match &manifest.scenario {
            Some(file) => {
                let sc: Scenario = read_json(&dir.join(file))?;
                Some(std::sync::Arc::new(ScenarioWorld::new(sc)?))
            }
            None => None,
        };
        Ok(Self { dir: dir.to_path_buf(), manifest: RwLock::new(manifest), write: Mutex::new(()), world })
    }

    /// Opens session `id` under `root`.
    pub fn open_id(root: &Path, id: &str) -> Result<Self, IngestError> {
        let dir = root.join(id);
        if !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') || !dir.join(MANIFEST_FILE).is_file() {
            return Err(IngestError::UnknownSession(id.to_string()));
        }
        Self::open(&dir)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> SessionManifest {
        self.manifest.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn id(&self) -> String {
        self.manifest.read().unwrap_or_else(|e| e.into_inner()).id.clone()
    }

    pub fn config(&self) -> PipelineConfig {
        self.manifest.read().unwrap_or_else(|e| e.into_inner()).config.clone()
    }

    pub fn meta(&self) -> VideoMeta {
        self.manifest.read().unwrap_or_else(|e| e.into_inner()).meta.clone()
    }

    /// The synthetic world behind a scenario session.
    pub fn world(&self) -> Option<&std::sync::Arc<ScenarioWorld>> {
        self.world.as_ref()
    }

    fn update<R>(&self, f: impl FnOnce(&mut SessionManifest) -> R) -> Result<R, IngestError> {
        let mut m = self.manifest.write().unwrap_or_else(|e| e.into_inner());
        let r = f(&mut m);
        write_json(&self.dir.join(MANIFEST_FILE), &*m)?;
        Ok(r)
    }

    pub fn add_warning(&self, w: String) -> Result<(), IngestError> {
        self.update(|m| {
            if !m.warnings.contains(&w) {
                m.warnings.push(w)
            }
        })
    }

    pub fn set_providers(&self, providers: Vec<ProviderDescriptor>) -> Result<(), IngestError> {
        self.update(|m| m.providers = providers)
    }

    /// Switches the session to `cfg`. Stream rates and the segment length
    /// shape the ingested data and cannot change. Generic artifacts made
    /// under the old configuration are dropped; query artifacts are keyed by
    /// configuration hash and stay valid. Returns whether anything changed.
    pub fn reconfigure(&self, cfg: PipelineConfig, generic_keys: &[&str]) -> Result<bool, IngestError> {
        let cfg = validate_config(cfg).map_err(IngestError::Config)?;
        let old = self.config();
        if cfg.hash() == old.hash() {
            return Ok(false);
        }
        if cfg.generic_fps != old.generic_fps {
            return Err(IngestError::Immutable("generic_fps"));
        }
        if cfg.query_fps != old.query_fps {
            return Err(IngestError::Immutable("query_fps"));
        }
        if cfg.segment_len_s != old.segment_len_s {
            return Err(IngestError::Immutable("segment_len_s"));
        }
        let _w = self.write.lock().unwrap_or_else(|e| e.into_inner());
        for key in generic_keys {
            for sub in ["artifacts", "traces"] {
                let p = self.keyed_path(sub, key);
                if p.exists() {
                    fs::remove_file(&p).map_err(io_err(&p))?;
                }
            }
        }
        self.update(|m| {
            m.config_hash = cfg.hash();
            m.config = cfg;
        })?;
        Ok(true)
    }

    /// Locator for a frame: a session-relative image path, or
    /// `frame://<stream>/<index>` for synthetic streams.
    pub fn frame_locator(&self, kind: StreamKind, index: u64) -> String {
        let m = self.manifest.read().unwrap_or_else(|e| e.into_inner());
        match &m.stream(kind).source {
            StreamSource::Images { dir } => format!("{dir}/{index:06}.{}", self.image_ext(dir, index)),
            StreamSource::Synthetic => format!("frame://{}/{index}", kind.as_str()),
        }
    }

    fn image_ext(&self, dir: &str, index: u64) -> String {
        // Extracted images are renamed to zero-padded indices; only the
        // extension varies.
        for ext in IMAGE_EXTENSIONS {
            if self.dir.join(dir).join(format!("{index:06}.{ext}")).is_file() {
                return ext.to_string();
            }
        }
        "png".into()
    }

    /// Absolute path of a frame image, if the stream has images and the
    /// index is in range.
    pub fn frame_path(&self, kind: StreamKind, index: u64) -> Option<PathBuf> {
        if index >= self.manifest().stream(kind).frame_count {
            return None;
        }
        let loc = self.frame_locator(kind, index);
        (!loc.starts_with("frame://")).then(|| self.dir.join(loc))
    }

    pub fn frame_inputs(&self, kind: StreamKind, range: std::ops::Range<u64>) -> Vec<FrameInput> {
        let rate = self.manifest().stream(kind).rate;
        range.map(|i| FrameInput { frame: FrameRef::new(i, rate), locator: self.frame_locator(kind, i) }).collect()
    }

    pub fn archive_path(&self, role: ArchiveRole) -> PathBuf {
        self.dir.join("archives").join(role.file_name())
    }

    pub fn has_archive(&self, role: ArchiveRole) -> bool {
        self.manifest.read().unwrap_or_else(|e| e.into_inner()).archives.contains_key(&role)
            && self.archive_path(role).is_file()
    }

    pub fn read_archive(&self, role: ArchiveRole) -> Result<Archive, IngestError> {
        let a = read_archive(&self.archive_path(role))?;
        if a.role != role {
            return Err(IngestError::Format {
                path: self.archive_path(role),
                message: format!("holds a {} archive", a.role),
            });
        }
        Ok(a)
    }

    pub fn store_archive(&self, archive: &Archive) -> Result<(), IngestError> {
        let _w = self.write.lock().unwrap_or_else(|e| e.into_inner());
        let path = self.archive_path(archive.role);
        write_archive(&path, archive)?;
        let entry = ArchiveEntry {
            file: format!("archives/{}", archive.role.file_name()),
            rows: archive.matrix.rows(),
            dim: archive.matrix.dim(),
            provider: archive.matrix.space().to_string(),
        };
        self.update(|m| {
            m.archives.insert(archive.role, entry);
        })
    }

    pub fn remove_archive(&self, role: ArchiveRole) -> Result<(), IngestError> {
        let _w = self.write.lock().unwrap_or_else(|e| e.into_inner());
        let path = self.archive_path(role);
        if path.exists() {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
        self.update(|m| {
            m.archives.remove(&role);
        })
    }

    fn keyed_path(&self, sub: &str, key: &str) -> PathBuf {
        self.dir.join(sub).join(format!("{key}.json"))
    }

    pub fn load_artifact<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, IngestError> {
        let path = self.keyed_path("artifacts", key);
        if !path.is_file() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    /// Raw stored bytes of an artifact.
    pub fn artifact_bytes(&self, key: &str) -> Option<Vec<u8>> {
        fs::read(self.keyed_path("artifacts", key)).ok()
    }

    pub fn store_artifact<T: Serialize>(&self, key: &str, value: &T) -> Result<(), IngestError> {
        write_json(&self.keyed_path("artifacts", key), value)
    }

    pub fn artifact_keys(&self) -> Vec<String> {
        list_json_stems(&self.dir.join("artifacts"))
    }

    pub fn store_trace<T: Serialize>(&self, key: &str, value: &T) -> Result<(), IngestError> {
        write_json(&self.keyed_path("traces", key), value)
    }

    pub fn load_trace(&self, key: &str) -> Result<Option<serde_json::Value>, IngestError> {
        let path = self.keyed_path("traces", key);
        if !path.is_file() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    pub fn trace_keys(&self) -> Vec<String> {
        list_json_stems(&self.dir.join("traces"))
    }

    /// Appends one JSON line to the latency log.
    pub fn append_latency<T: Serialize>(&self, record: &T) -> Result<(), IngestError> {
        let _w = self.write.lock().unwrap_or_else(|e| e.into_inner());
        let path = self.dir.join(LATENCY_FILE);
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        let mut line = serde_json::to_vec(record).expect("latency record serializes");
        line.push(b'\n');
        f.write_all(&line).map_err(io_err(&path))
    }

    pub fn latency_records<T: DeserializeOwned>(&self) -> Result<Vec<T>, IngestError> {
        let path = self.dir.join(LATENCY_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(IngestError::Io { path, source: e }),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| IngestError::Format { path: path.clone(), message: e.to_string() }))
            .collect()
    }

    /// Hash over the manifest, stream indexes, archives and cached artifacts.
    /// Latency logs are excluded since they record wall-clock time.
    pub fn state_hash(&self) -> Result<String, IngestError> {
        let mut h = Sha256::new();
        let mut files = vec![self.dir.join(MANIFEST_FILE)];
        for sub in ["archives", "artifacts", "traces", "streams/generic", "streams/query"] {
            let d = self.dir.join(sub);
            if let Ok(rd) = fs::read_dir(&d) {
                let mut names: Vec<PathBuf> = rd.filter_map(|e| e.ok()).map(|e| e.path()).collect();
                names.retain(|p| p.is_file() && !p.to_string_lossy().contains(".tmp-"));
                names.sort();
                files.extend(names);
            }
        }
        for f in files {
            let rel = f.strip_prefix(&self.dir).unwrap_or(&f).to_string_lossy().into_owned();
            h.update(rel.as_bytes());
            h.update([0]);
            h.update(fs::read(&f).map_err(io_err(&f))?);
        }
        Ok(hex::encode(h.finalize()))
    }
}

fn list_json_stems(dir: &Path) -> Vec<String> {
    let mut keys: Vec<String> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_suffix(".json").map(str::to_string)
        })
        .collect();
    keys.sort();
    keys
}

/// Ingestion of a real (or image-directory) source.
#[derive(Debug, Clone, Default)]
pub struct IngestRequest {
    pub source: String,
    pub config: PipelineConfig,
    /// Overrides the derived session id.
    pub id: Option<String>,
    pub extractor: Option<ExtractorCommand>,
    /// Source duration, when known independently of the extracted frames.
    pub duration_s: Option<f64>,
    pub providers: Vec<ProviderDescriptor>,
}

fn prepare_dir(root: &Path, id: &str) -> Result<PathBuf, IngestError> {
    let dir = root.join(id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

/// Extracts both streams and writes the session manifest. Re-running on an
/// existing session reuses its frames.
pub fn ingest_video(root: &Path, req: IngestRequest) -> Result<Session, IngestError> {
    let cfg = validate_config(req.config.clone()).map_err(IngestError::Config)?;
    let id = req.id.clone().unwrap_or_else(|| session_id(&req.source, &cfg));
    let dir = prepare_dir(root, &id)?;
    let mut warnings = Vec::new();
    let mut streams = Vec::new();
    for (kind, rate) in [(StreamKind::Generic, cfg.generic_rate()), (StreamKind::Query, cfg.query_rate())] {
        let rel = format!("streams/{}", kind.as_str());
        let idx = extract_frames(req.extractor.as_ref(), &req.source, rate, &dir.join(&rel))?;
        // Normalize names to zero-padded indices so locators are computable.
        let idx = renumber(&dir.join(&rel), idx)?;
        streams.push(StreamInfo { rate, frame_count: idx.count, source: StreamSource::Images { dir: rel } });
    }
    let generic = &streams[0];
    let duration_s = req.duration_s.unwrap_or_else(|| generic.rate.seconds(generic.frame_count));
    let native = generic.rate;
    let mut meta = VideoMeta::new(&req.source, native, native.frames_in(duration_s));
    meta.duration_s = duration_s;
    let mut manifest = SessionManifest {
        id,
        meta,
        config_hash: cfg.hash(),
        config: cfg,
        generic_stream: streams[0].clone(),
        query_stream: streams[1].clone(),
        archives: BTreeMap::new(),
        providers: req.providers,
        scenario: None,
        warnings: Vec::new(),
    };
    warnings.extend(manifest.check_streams());
    for w in &warnings {
        tracing::warn!("{w}");
    }
    manifest.warnings = warnings;
    finish(dir, manifest)
}

fn renumber(dir: &Path, idx: FrameIndex) -> Result<FrameIndex, IngestError> {
    let mut files = Vec::with_capacity(idx.files.len());
    let mut changed = false;
    for (i, name) in idx.files.iter().enumerate() {
        let ext = Path::new(name).extension().and_then(|e| e.to_str()).unwrap_or("png").to_ascii_lowercase();
        let want = format!("{i:06}.{ext}");
        if *name != want {
            let to = dir.join(&want);
            fs::rename(dir.join(name), &to).map_err(io_err(&to))?;
            changed = true;
        }
        files.push(want);
    }
    let idx = FrameIndex { files, ..idx };
    if changed {
        write_json(&dir.join(INDEX_FILE), &idx)?;
    }
    Ok(idx)
}

/// Creates a session whose frames and provider outputs come from a
/// synthetic scenario.
pub fn ingest_scenario(
    root: &Path,
    scenario: &Scenario,
    config: PipelineConfig,
    id: Option<String>,
) -> Result<Session, IngestError> {
    scenario.validate()?;
    let cfg = validate_config(config).map_err(IngestError::Config)?;
    let scenario_json = serde_json::to_vec(scenario).expect("scenario serializes");
    let source_uri = format!("scenario:{}#{}", scenario.name, &sha256_hex(&scenario_json)[..12]);
    let id = id.unwrap_or_else(|| session_id(&source_uri, &cfg));
    let dir = prepare_dir(root, &id)?;
    write_json(&dir.join(SCENARIO_FILE), scenario)?;
    let native = scenario.native_rate();
    let meta = VideoMeta { duration_s: scenario.duration_s, ..VideoMeta::new(&source_uri, native, native.frames_in(scenario.duration_s)) };
    let stream = |rate: FrameRate| StreamInfo { rate, frame_count: rate.frames_in(scenario.duration_s), source: StreamSource::Synthetic };
    let manifest = SessionManifest {
        id,
        meta,
        config_hash: cfg.hash(),
        generic_stream: stream(cfg.generic_rate()),
        query_stream: stream(cfg.query_rate()),
        config: cfg,
        archives: BTreeMap::new(),
        providers: Vec::new(),
        scenario: Some(SCENARIO_FILE.into()),
        warnings: Vec::new(),
    };
    finish(dir, manifest)
}

fn finish(dir: PathBuf, mut manifest: SessionManifest) -> Result<Session, IngestError> {
    // Keep archives from an earlier ingestion of the same session.
    if let Ok(prev) = read_json::<SessionManifest>(&dir.join(MANIFEST_FILE)) {
        if prev.config_hash == manifest.config_hash {
            manifest.archives = prev.archives;
            if manifest.providers.is_empty() {
                manifest.providers = prev.providers;
            }
        }
    }
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Session::open(&dir)
}

/// Ids of every session under `root`, sorted.
pub fn list_sessions(root: &Path) -> Vec<String> {
    let mut ids: Vec<String> = fs::read_dir(root)
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join(MANIFEST_FILE).is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    ids
}
