//! Client transports for remote providers.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use super::protocol::{client, read_frame, write_frame, MatrixPayload, Op, Request, Response};
use super::{CaptionRequest, FrameInput, Provider, ProviderDescriptor, ProviderError, ProviderRole, SegmentInput};
use crate::archive::{write_archive, Archive, ArchiveRole};
use crate::model::{EmbeddingMatrix, FrameRate, ImportanceCurve};

/// Moves one request to a provider and brings back its reply.
pub trait Transport: Send + Sync {
    fn round_trip(&self, role: ProviderRole, req: &Request) -> Result<Response, ProviderError>;
}

fn unreachable(role: ProviderRole, message: impl Into<String>) -> ProviderError {
    ProviderError::Transport { role, message: message.into(), retryable: true }
}

struct Pipe {
    w: Box<dyn Write + Send>,
    r: Box<dyn Read + Send>,
}

/// Length-prefixed JSON over a byte stream, normally a child's stdio.
pub struct StreamTransport {
    pipe: Mutex<Option<Pipe>>,
    child: Option<Mutex<Child>>,
}

impl StreamTransport {
    pub fn new(r: impl Read + Send + 'static, w: impl Write + Send + 'static) -> Self {
        Self { pipe: Mutex::new(Some(Pipe { w: Box::new(w), r: Box::new(r) })), child: None }
    }

    /// Starts `command` through the shell and talks to its stdin/stdout.
    pub fn spawn(command: &str) -> std::io::Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let w = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let r = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            pipe: Mutex::new(Some(Pipe { w: Box::new(w), r: Box::new(r) })),
            child: Some(Mutex::new(child)),
        })
    }
}

impl Transport for StreamTransport {
    fn round_trip(&self, role: ProviderRole, req: &Request) -> Result<Response, ProviderError> {
        let mut guard = self.pipe.lock().unwrap_or_else(|e| e.into_inner());
        let pipe = guard.as_mut().ok_or_else(|| unreachable(role, "provider stream closed"))?;
        let body = serde_json::to_vec(req).expect("request serializes");
        let reply = write_frame(&mut pipe.w, &body).and_then(|_| read_frame(&mut pipe.r));
        match reply {
            Ok(Some(bytes)) => serde_json::from_slice(&bytes)
                .map_err(|e| ProviderError::Contract { role, message: format!("undecodable reply: {e}") }),
            Ok(None) => {
                *guard = None;
                Err(unreachable(role, "provider closed its stream"))
            }
            Err(e) => {
                // The stream may be mid-message; it cannot be reused.
                *guard = None;
                Err(unreachable(role, e.to_string()))
            }
        }
    }
}

impl Drop for StreamTransport {
    fn drop(&mut self) {
        // Closing stdin lets a well-behaved provider exit on its own.
        self.pipe.lock().unwrap_or_else(|e| e.into_inner()).take();
        if let Some(child) = &self.child {
            let mut c = child.lock().unwrap_or_else(|e| e.into_inner());
            for _ in 0..50 {
                if let Ok(Some(_)) = c.try_wait() {
                    return;
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

/// JSON over `POST {base}/v1/provider`.
pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { url: format!("{}/v1/provider", base_url.trim_end_matches('/')), agent }
    }
}

impl Transport for HttpTransport {
    fn round_trip(&self, role: ProviderRole, req: &Request) -> Result<Response, ProviderError> {
        let mut resp = self.agent.post(&self.url).send_json(req).map_err(|e| match e {
            ureq::Error::Timeout(_) => ProviderError::Timeout { role },
            other => unreachable(role, other.to_string()),
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::Remote {
                role,
                message: format!("http status {status}"),
                retryable: status.is_server_error(),
            });
        }
        resp.body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_json::<Response>()
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => ProviderError::Timeout { role },
                other => ProviderError::Contract { role, message: format!("undecodable reply: {other}") },
            })
    }
}

/// A provider on the far side of a [`Transport`].
pub struct RemoteProvider {
    descriptor: ProviderDescriptor,
    transport: Box<dyn Transport>,
    /// When set, large importance inputs are passed as archive files here.
    side_channel: Option<PathBuf>,
    side_channel_min_values: usize,
}

impl RemoteProvider {
    pub fn new(descriptor: ProviderDescriptor, transport: Box<dyn Transport>) -> Self {
        Self { descriptor, transport, side_channel: None, side_channel_min_values: 1 << 20 }
    }

    /// Asks the far side for its descriptor and checks it matches the
    /// configured role, name and version.
    pub fn connect(descriptor: ProviderDescriptor, transport: Box<dyn Transport>) -> Result<Self, ProviderError> {
        let p = Self::new(descriptor, transport);
        let remote = p.describe()?;
        let d = &p.descriptor;
        if remote.role != d.role || remote.name != d.name || remote.version != d.version {
            return Err(ProviderError::Contract {
                role: d.role,
                message: format!("configured as {} but the endpoint reports {} ({})", d.id(), remote.id(), remote.role),
            });
        }
        Ok(p)
    }

    /// Builds the transport named by the descriptor.
    pub fn open(descriptor: ProviderDescriptor, timeout: Duration) -> Result<Self, ProviderError> {
        let role = descriptor.role;
        let transport: Box<dyn Transport> = match descriptor.transport {
            super::TransportKind::SubprocessStdio => Box::new(
                StreamTransport::spawn(&descriptor.endpoint).map_err(|e| unreachable(role, e.to_string()))?,
            ),
            super::TransportKind::Http => Box::new(HttpTransport::new(&descriptor.endpoint, timeout)),
            super::TransportKind::InProcessFixture => {
                return Err(ProviderError::invalid("in-process fixtures are not remote"))
            }
        };
        Self::connect(descriptor, transport)
    }

    pub fn with_side_channel(mut self, dir: PathBuf, min_values: usize) -> Self {
        self.side_channel = Some(dir);
        self.side_channel_min_values = min_values;
        self
    }

    pub fn describe(&self) -> Result<ProviderDescriptor, ProviderError> {
        let v = self.call(client::request(Op::Describe, self.descriptor.role, serde_json::Value::Null))?;
        client::descriptor(self.descriptor.role, v)
    }

    fn call(&self, req: Request) -> Result<serde_json::Value, ProviderError> {
        self.transport.round_trip(self.descriptor.role, &req)?.into_result(self.descriptor.role)
    }
}

impl Provider for RemoteProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn embed_frames(&self, frames: &[FrameInput]) -> Result<EmbeddingMatrix, ProviderError> {
        let role = self.descriptor.role;
        client::matrix(role, self.call(client::frames(role, frames))?)
    }

    fn embed_segments(&self, segments: &[SegmentInput]) -> Result<EmbeddingMatrix, ProviderError> {
        let role = self.descriptor.role;
        client::matrix(role, self.call(client::segments(role, segments))?)
    }

    fn embed_text(&self, query: &str) -> Result<Vec<f32>, ProviderError> {
        let role = self.descriptor.role;
        client::vector(role, self.call(client::text(role, query))?)
    }

    fn score_importance(&self, features: &EmbeddingMatrix) -> Result<ImportanceCurve, ProviderError> {
        let role = self.descriptor.role;
        let payload = match &self.side_channel {
            Some(dir) if features.values().len() >= self.side_channel_min_values => {
                let path = dir.join(format!("importance-input-{}.emb", std::process::id()));
                let archive = Archive::frames(ArchiveRole::GenericFeatures, FrameRate::whole(1), features.clone());
                write_archive(&path, &archive).map_err(|e| ProviderError::invalid(e.to_string()))?;
                MatrixPayload::File { file: path }
            }
            _ => MatrixPayload::inline(features),
        };
        client::scores(role, self.call(client::importance(role, payload))?)
    }

    fn caption(&self, req: &CaptionRequest) -> Result<String, ProviderError> {
        let role = self.descriptor.role;
        client::text_result(role, self.call(client::caption(role, req))?)
    }
}

/// Connects on first use and reconnects after transport failures, so an
/// endpoint that comes up late (or restarts) is picked up without a restart.
pub struct LazyRemoteProvider {
    descriptor: ProviderDescriptor,
    timeout: Duration,
    inner: Mutex<Option<std::sync::Arc<RemoteProvider>>>,
}

impl LazyRemoteProvider {
    pub fn new(descriptor: ProviderDescriptor, timeout: Duration) -> Self {
        Self { descriptor, timeout, inner: Mutex::new(None) }
    }

    fn with<T>(&self, f: impl FnOnce(&RemoteProvider) -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let p = {
            let mut g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
            match &*g {
                Some(p) => p.clone(),
                None => {
                    let p = std::sync::Arc::new(RemoteProvider::open(self.descriptor.clone(), self.timeout)?);
                    *g = Some(p.clone());
                    p
                }
            }
        };
        let out = f(&p);
        if matches!(out, Err(ProviderError::Transport { .. })) {
            self.inner.lock().unwrap_or_else(|e| e.into_inner()).take();
        }
        out
    }
}

impl Provider for LazyRemoteProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn embed_frames(&self, frames: &[FrameInput]) -> Result<EmbeddingMatrix, ProviderError> {
        self.with(|p| p.embed_frames(frames))
    }

    fn embed_segments(&self, segments: &[SegmentInput]) -> Result<EmbeddingMatrix, ProviderError> {
        self.with(|p| p.embed_segments(segments))
    }

    fn embed_text(&self, query: &str) -> Result<Vec<f32>, ProviderError> {
        self.with(|p| p.embed_text(query))
    }

    fn score_importance(&self, features: &EmbeddingMatrix) -> Result<ImportanceCurve, ProviderError> {
        self.with(|p| p.score_importance(features))
    }

    fn caption(&self, req: &CaptionRequest) -> Result<String, ProviderError> {
        self.with(|p| p.caption(req))
    }
}

/// Parses a provider spec:
///
/// * `fixture` or `fixture:<scenario.json>` — in-process fixture;
/// * `stdio:<command>` — a subprocess speaking the framed protocol;
/// * `http://host:port` — an HTTP provider.
///
/// A remote spec may end in `#name@version`; otherwise the endpoint is
/// asked for its descriptor.
pub fn parse_provider_spec(role: ProviderRole, spec: &str, timeout: Duration) -> Result<ProviderDescriptor, ProviderError> {
    let spec = spec.trim();
    if spec == "fixture" || spec.starts_with("fixture:") {
        let mut d = ProviderDescriptor::fixture(role);
        if let Some(path) = spec.strip_prefix("fixture:") {
            d.endpoint = path.to_string();
        }
        return Ok(d);
    }
    let (endpoint, ident) = match spec.rsplit_once('#') {
        Some((e, id)) => (e, Some(id)),
        None => (spec, None),
    };
    let (transport, endpoint) = if let Some(cmd) = endpoint.strip_prefix("stdio:") {
        (super::TransportKind::SubprocessStdio, cmd.to_string())
    } else if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        (super::TransportKind::Http, endpoint.to_string())
    } else {
        return Err(ProviderError::invalid(format!(
            "provider spec {spec:?} is not fixture[:file], stdio:<command> or http(s)://..."
        )));
    };
    let mut d = ProviderDescriptor { role, transport, endpoint, name: String::new(), version: String::new(), dim: role.default_dim() };
    match ident.and_then(|id| id.split_once('@')) {
        Some((name, version)) => {
            d.name = name.to_string();
            d.version = version.to_string();
        }
        None => {
            let probe: Box<dyn Transport> = match d.transport {
                super::TransportKind::SubprocessStdio => {
                    Box::new(StreamTransport::spawn(&d.endpoint).map_err(|e| unreachable(role, e.to_string()))?)
                }
                _ => Box::new(HttpTransport::new(&d.endpoint, timeout)),
            };
            let remote = RemoteProvider::new(d.clone(), probe).describe()?;
            if remote.role != role {
                return Err(ProviderError::Contract { role, message: format!("endpoint serves {}", remote.role) });
            }
            d.name = remote.name;
            d.version = remote.version;
            d.dim = remote.dim.or(d.dim);
        }
    }
    Ok(d)
}
