//! Provider wire protocol.
//!
//! Every call is one JSON request `{op, role, payload}` answered by one JSON
//! response `{ok, result}` or `{ok: false, error}`. Over stdio each message
//! is framed by a little-endian `u32` byte length; over HTTP it is the body
//! of `POST /v1/provider`.
//!
//! Matrices travel as base64 little-endian `f32` (`{rows, dim, space, data}`)
//! or, when both sides share a filesystem, as `{file}` naming an embedding
//! archive.

use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CaptionRequest, FrameInput, Provider, ProviderDescriptor, ProviderError, ProviderRole, SegmentInput};
use crate::archive::read_archive;
use crate::model::{EmbeddingMatrix, EmbeddingSpace, ImportanceCurve};

/// Messages larger than this are rejected rather than allocated.
pub const MAX_FRAME_BYTES: u32 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Describe,
    EmbedFrames,
    EmbedSegments,
    EmbedText,
    ScoreImportance,
    Caption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub op: Op,
    pub role: ProviderRole,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ProviderError>,
}

impl Response {
    pub fn ok(result: Value) -> Self {
        Self { ok: true, result: Some(result), error: None }
    }

    pub fn err(error: ProviderError) -> Self {
        Self { ok: false, result: None, error: Some(error) }
    }

    /// Unwraps into the result, mapping a malformed reply to a contract error.
    pub fn into_result(self, role: ProviderRole) -> Result<Value, ProviderError> {
        match (self.ok, self.result, self.error) {
            (true, Some(v), _) => Ok(v),
            (false, _, Some(e)) => Err(e),
            _ => Err(ProviderError::Contract { role, message: "reply has neither result nor error".into() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixPayload {
    Inline { rows: usize, dim: usize, space: EmbeddingSpace, data: String },
    File { file: PathBuf },
}

impl MatrixPayload {
    pub fn inline(m: &EmbeddingMatrix) -> Self {
        let mut bytes = Vec::with_capacity(m.values().len() * 4);
        for v in m.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        MatrixPayload::Inline { rows: m.rows(), dim: m.dim(), space: m.space().clone(), data: B64.encode(bytes) }
    }

    pub fn decode(self) -> Result<EmbeddingMatrix, String> {
        match self {
            MatrixPayload::Inline { rows, dim, space, data } => {
                let bytes = B64.decode(data.as_bytes()).map_err(|e| format!("bad base64: {e}"))?;
                if bytes.len() != rows * dim * 4 {
                    return Err(format!("matrix body has {} bytes, {rows}x{dim} needs {}", bytes.len(), rows * dim * 4));
                }
                let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
                EmbeddingMatrix::new(rows, dim, values, space).map_err(|e| e.to_string())
            }
            MatrixPayload::File { file } => read_archive(&file).map(|a| a.matrix).map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FramesPayload {
    pub frames: Vec<FrameInput>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentsPayload {
    pub segments: Vec<SegmentInput>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TextPayload {
    pub query: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImportancePayload {
    pub features: MatrixPayload,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VectorResult {
    pub vector: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoresResult {
    pub scores: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CaptionResult {
    pub text: String,
}

/// Writes one length-prefixed message.
pub fn write_frame<W: Write + ?Sized>(w: &mut W, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len())
        .ok()
        .filter(|&n| n <= MAX_FRAME_BYTES)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "message too large"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one length-prefixed message; `None` on a clean end of stream.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated length prefix")),
            n => got += n,
        }
    }
    let len = u32::from_le_bytes(len);
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("message of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

fn parse<T: serde::de::DeserializeOwned>(payload: Value) -> Result<T, ProviderError> {
    serde_json::from_value(payload).map_err(|e| ProviderError::invalid(format!("malformed payload: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("protocol types serialize")
}

/// Server side: answers one request with `provider`.
pub fn handle(provider: &dyn Provider, req: Request) -> Response {
    let desc = provider.descriptor();
    if req.role != desc.role {
        return Response::err(ProviderError::Unsupported {
            role: req.role,
            op: format!("{:?} (this endpoint serves {})", req.op, desc.role),
        });
    }
    let out = (|| -> Result<Value, ProviderError> {
        match req.op {
            Op::Describe => Ok(to_value(desc)),
            Op::EmbedFrames => {
                let p: FramesPayload = parse(req.payload)?;
                Ok(to_value(&MatrixPayload::inline(&provider.embed_frames(&p.frames)?)))
            }
            Op::EmbedSegments => {
                let p: SegmentsPayload = parse(req.payload)?;
                Ok(to_value(&MatrixPayload::inline(&provider.embed_segments(&p.segments)?)))
            }
            Op::EmbedText => {
                let p: TextPayload = parse(req.payload)?;
                if p.query.trim().is_empty() {
                    return Err(ProviderError::invalid("query is empty"));
                }
                Ok(to_value(&VectorResult { vector: provider.embed_text(&p.query)? }))
            }
            Op::ScoreImportance => {
                let p: ImportancePayload = parse(req.payload)?;
                let m = p.features.decode().map_err(ProviderError::invalid)?;
                let curve = provider.score_importance(&m)?;
                Ok(to_value(&ScoresResult { scores: curve.scores().to_vec() }))
            }
            Op::Caption => {
                let p: CaptionRequest = parse(req.payload)?;
                Ok(to_value(&CaptionResult { text: provider.caption(&p)? }))
            }
        }
    })();
    match out {
        Ok(v) => Response::ok(v),
        Err(e) => Response::err(e),
    }
}

/// Answers a raw request body; undecodable bodies get an `invalid_request` reply.
pub fn handle_bytes(provider: &dyn Provider, body: &[u8]) -> Vec<u8> {
    let resp = match serde_json::from_slice::<Request>(body) {
        Ok(req) => handle(provider, req),
        Err(e) => Response::err(ProviderError::invalid(format!("undecodable request: {e}"))),
    };
    serde_json::to_vec(&resp).expect("response serializes")
}

/// Serves length-prefixed requests from `r` until end of stream.
pub fn serve_stream<R: Read, W: Write>(provider: &dyn Provider, mut r: R, mut w: W) -> io::Result<()> {
    while let Some(body) = read_frame(&mut r)? {
        write_frame(&mut w, &handle_bytes(provider, &body))?;
    }
    Ok(())
}

/// HTTP endpoint: `POST /v1/provider` takes a request, `GET /v1/describe`
/// returns the descriptor.
pub fn http_router(provider: Arc<dyn Provider>) -> axum::Router {
    use axum::extract::{DefaultBodyLimit, State};
    use axum::routing::{get, post};

    async fn call(State(p): State<Arc<dyn Provider>>, body: axum::body::Bytes) -> axum::response::Response {
        let reply = tokio::task::spawn_blocking(move || handle_bytes(p.as_ref(), &body))
            .await
            .unwrap_or_else(|e| {
                serde_json::to_vec(&Response::err(ProviderError::invalid(format!("handler panicked: {e}")))).unwrap()
            });
        ([(axum::http::header::CONTENT_TYPE, "application/json")], reply).into_response()
    }

    async fn describe(State(p): State<Arc<dyn Provider>>) -> axum::Json<ProviderDescriptor> {
        axum::Json(p.descriptor().clone())
    }

    use axum::response::IntoResponse;
    axum::Router::new()
        .route("/v1/provider", post(call))
        .route("/v1/describe", get(describe))
        .layer(DefaultBodyLimit::disable())
        .with_state(provider)
}

/// Client-side request builders and reply decoders.
pub(crate) mod client {
    use super::*;

    pub fn request(op: Op, role: ProviderRole, payload: Value) -> Request {
        Request { op, role, payload }
    }

    pub fn frames(role: ProviderRole, frames: &[FrameInput]) -> Request {
        request(Op::EmbedFrames, role, json!({ "frames": frames }))
    }

    pub fn segments(role: ProviderRole, segments: &[SegmentInput]) -> Request {
        request(Op::EmbedSegments, role, json!({ "segments": segments }))
    }

    pub fn text(role: ProviderRole, query: &str) -> Request {
        request(Op::EmbedText, role, json!({ "query": query }))
    }

    pub fn importance(role: ProviderRole, features: MatrixPayload) -> Request {
        request(Op::ScoreImportance, role, to_value(&ImportancePayload { features }))
    }

    pub fn caption(role: ProviderRole, req: &CaptionRequest) -> Request {
        request(Op::Caption, role, to_value(req))
    }

    fn decode<T: serde::de::DeserializeOwned>(role: ProviderRole, v: Value) -> Result<T, ProviderError> {
        serde_json::from_value(v).map_err(|e| ProviderError::Contract { role, message: format!("malformed result: {e}") })
    }

    pub fn matrix(role: ProviderRole, v: Value) -> Result<EmbeddingMatrix, ProviderError> {
        decode::<MatrixPayload>(role, v)?.decode().map_err(|message| ProviderError::Contract { role, message })
    }

    pub fn vector(role: ProviderRole, v: Value) -> Result<Vec<f32>, ProviderError> {
        Ok(decode::<VectorResult>(role, v)?.vector)
    }

    pub fn scores(role: ProviderRole, v: Value) -> Result<ImportanceCurve, ProviderError> {
        ImportanceCurve::new(decode::<ScoresResult>(role, v)?.scores)
            .map_err(|e| ProviderError::Contract { role, message: e.to_string() })
    }

    pub fn text_result(role: ProviderRole, v: Value) -> Result<String, ProviderError> {
        Ok(decode::<CaptionResult>(role, v)?.text)
    }

    pub fn descriptor(role: ProviderRole, v: Value) -> Result<ProviderDescriptor, ProviderError> {
        decode(role, v)
    }
}
