//! Batch command line. Every command is a thin wrapper over the library;
//! failures are printed to stderr as a JSON object and exit nonzero.

use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::ingest::{ingest_scenario, ingest_video, read_json, ExtractorCommand, IngestError, IngestRequest, Session};
use crate::model::{Modality, PipelineConfig, SkimEditList, SummaryArtifact};
use crate::pipeline::{
    ArtifactResponse, Engine, PipelineError, ProviderOptions, GENERIC_KEYS, GENERIC_SKIM,
};
use crate::providers::conformance::run_conformance;
use crate::providers::fixture::{FixtureProvider, InjectedDelay};
use crate::providers::protocol::{http_router, serve_stream};
use crate::providers::transport::{parse_provider_spec, LazyRemoteProvider};
use crate::providers::{Provider, ProviderDescriptor, ProviderError, ProviderRole, TransportKind};
use crate::service::{AppState, ServiceConfig};
use crate::synthetic::{Scenario, ScenarioWorld};

#[derive(Debug, Parser)]
#[command(name = "robosumm", version, about = "Summaries of long robot missions: storyboards, skims and text")]
pub struct Cli {
    /// Directory holding one subdirectory per session.
    #[arg(long, global = true, env = "ROBOSUMM_SESSIONS", default_value = "sessions")]
    pub sessions_root: PathBuf,
    /// Print full JSON instead of a short summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Create a session from a video, an image directory or a scenario.
    Ingest(IngestArgs),
    /// Compute every embedding archive the pipelines need.
    Embed {
        #[command(flatten)]
        session: SessionArgs,
        /// Recompute archives that already exist.
        #[arg(long)]
        force: bool,
    },
    /// Generate the generic storyboard, skim and text.
    SummarizeGeneric {
        #[command(flatten)]
        session: SessionArgs,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Answer one query in one modality.
    Query {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        text: String,
        #[arg(long, default_value = "storyboard")]
        modality: Modality,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a skim's edit list, optionally rendering it with an assembler.
    ExportSkim(ExportArgs),
    /// Latency statistics and selection traces.
    Report {
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, env = "ROBOSUMM_EXTRACTOR")]
        extractor: Option<String>,
        /// Refuse POST /sessions.
        #[arg(long)]
        no_ingest: bool,
        #[command(flatten)]
        providers: ProviderArgs,
    },
    /// Serve a fixture provider over the wire protocol.
    Provider(ProviderServeArgs),
    /// Run the conformance checks against a provider.
    CheckProvider {
        #[arg(long)]
        role: ProviderRole,
        /// Provider spec, e.g. `stdio:<command>` or `http://host:port`.
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 30.0)]
        timeout_s: f64,
    },
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[arg(long)]
    pub session: String,
    #[command(flatten)]
    pub providers: ProviderArgs,
}

#[derive(Debug, Args, Default)]
pub struct ProviderArgs {
    /// `ROLE=SPEC`; overrides the session's provider for ROLE. Also read
    /// from `ROBOSUMM_PROVIDER_<ROLE>`.
    #[arg(long = "provider", value_name = "ROLE=SPEC")]
    pub provider: Vec<String>,
    #[arg(long, default_value_t = 120.0)]
    pub provider_timeout_s: f64,
}

impl ProviderArgs {
    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.provider_timeout_s.max(0.001))
    }

    /// Descriptors from flags, then from the environment for roles not
    /// given on the command line.
    pub fn descriptors(&self) -> Result<Vec<ProviderDescriptor>, CliError> {
        let mut out: Vec<ProviderDescriptor> = Vec::new();
        for item in &self.provider {
            let (role, spec) = item
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("--provider {item:?} is not ROLE=SPEC")))?;
            let role: ProviderRole = role.parse().map_err(CliError::usage)?;
            out.retain(|d| d.role != role);
            out.push(parse_provider_spec(role, spec, self.timeout())?);
        }
        for role in ProviderRole::ALL {
            if out.iter().any(|d| d.role == role) {
                continue;
            }
            let var = format!("ROBOSUMM_PROVIDER_{}", role.as_str().to_ascii_uppercase());
            if let Ok(spec) = std::env::var(&var) {
                if !spec.trim().is_empty() {
                    out.push(parse_provider_spec(role, &spec, self.timeout())?);
                }
            }
        }
        Ok(out)
    }

    fn options(&self) -> Result<ProviderOptions, CliError> {
        Ok(ProviderOptions { overrides: self.descriptors()?, delay: InjectedDelay::default(), timeout: Some(self.timeout()) })
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Video path/URI, or a directory of images.
    #[arg(long, group = "input")]
    pub source: Option<String>,
    /// Scenario JSON file.
    #[arg(long, group = "input")]
    pub scenario: Option<PathBuf>,
    /// Generate a synthetic mission of this many seconds.
    #[arg(long, group = "input", value_name = "SECONDS")]
    pub synthetic_mission: Option<f64>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub id: Option<String>,
    /// Command template with {input}, {rate} and {outdir}.
    #[arg(long, env = "ROBOSUMM_EXTRACTOR")]
    pub extractor: Option<String>,
    /// Source duration, when known.
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub providers: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    /// Artifact key of the skim.
    #[arg(long, default_value = GENERIC_SKIM)]
    pub key: String,
    /// Where to write the edit list; stdout when absent.
    #[arg(long)]
    pub edl: Option<PathBuf>,
    /// Rendered video path; needs an assembler.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Command template with {input}, {edl} and {output}.
    #[arg(long, env = "ROBOSUMM_ASSEMBLER")]
    pub assembler: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WireTransport {
    Stdio,
    Http,
}

#[derive(Debug, Args)]
pub struct ProviderServeArgs {
    #[arg(long)]
    pub role: ProviderRole,
    #[arg(long, value_enum, default_value = "stdio")]
    pub transport: WireTransport,
    #[arg(long, default_value = "127.0.0.1:9090")]
    pub addr: SocketAddr,
    /// Scenario the fixture answers from.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Synthetic mission length when no scenario file is given.
    #[arg(long, default_value_t = 2400.0)]
    pub synthetic_mission: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Generic stream rate the importance role scores.
    #[arg(long, default_value_t = 15.0)]
    pub generic_fps: f64,
    #[arg(long, default_value_t = 0)]
    pub embed_delay_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub importance_delay_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub caption_delay_ms: u64,
}

/// One flag per configuration field. Unset flags keep the session (or
/// `--config` file, or default) value.
#[derive(Debug, Args, Default, Clone)]
pub struct ConfigArgs {
    /// JSON file with (some) configuration fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub generic_fps: Option<f64>,
    #[arg(long)]
    pub query_fps: Option<f64>,
    #[arg(long)]
    pub segment_len_s: Option<f64>,
    #[arg(long)]
    pub min_segment_s: Option<f64>,
    #[arg(long)]
    pub pca_dims: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub board_size: Option<usize>,
    #[arg(long)]
    pub query_board_size: Option<usize>,
    #[arg(long)]
    pub k_pct: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub caption_frame_cap: Option<usize>,
    #[arg(long)]
    pub caption_length_penalty: Option<f64>,
    #[arg(long)]
    pub query_length_penalty: Option<f64>,
    #[arg(long)]
    pub generic_sentences: Option<usize>,
    #[arg(long)]
    pub query_sentences: Option<usize>,
    #[arg(long)]
    pub generic_prompt: Option<String>,
    #[arg(long)]
    pub query_prompt: Option<String>,
    #[arg(long)]
    pub kts_penalty: Option<f64>,
    #[arg(long)]
    pub kts_sample_hz: Option<f64>,
    #[arg(long)]
    pub kts_max_change_points: Option<usize>,
    #[arg(long)]
    pub knapsack_resolution_s: Option<f64>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
}

impl ConfigArgs {
    pub fn apply(&self, base: PipelineConfig) -> Result<PipelineConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => read_json::<PipelineConfig>(p)?,
            None => base,
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$flag { c.$field = v.clone(); })*
            };
        }
        set!(
            generic_fps => generic_fps,
            query_fps => query_fps,
            segment_len_s => segment_len_s,
            min_segment_s => min_segment_s,
            pca_dims => pca_dims,
            delta => diversity_delta,
            board_size => generic_board_size,
            query_board_size => query_board_size,
            k_pct => knapsack_budget_pct,
            top_k => top_k,
            caption_frame_cap => caption_frame_cap,
            caption_length_penalty => caption_length_penalty,
            query_length_penalty => query_length_penalty,
            generic_sentences => generic_sentences,
            query_sentences => query_sentences,
            generic_prompt => generic_prompt,
            query_prompt => query_prompt,
            kts_penalty => kts_penalty,
            kts_sample_hz => kts_sample_hz,
            kts_max_change_points => kts_max_change_points,
            knapsack_resolution_s => knapsack_resolution_s,
            max_in_flight => provider_max_in_flight,
        );
        Ok(c)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Refused(String),
    #[error("assembler exited with {status}: {stderr}")]
    Assembler { status: String, stderr: String },
}

impl CliError {
    fn usage(m: impl Into<String>) -> Self {
        CliError::Usage(m.into())
    }

    fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Ingest(_) => "ingest",
            CliError::Pipeline(PipelineError::InvalidQuery(_)) => "invalid_query",
            CliError::Pipeline(_) => "pipeline",
            CliError::Provider(_) => "provider",
            CliError::Io { .. } => "io",
            CliError::Refused(_) => "refused",
            CliError::Assembler { .. } => "assembler",
        }
    }

    /// The structured form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let role = match self {
            CliError::Pipeline(e) => e.unavailable_role().or(match e {
                PipelineError::Provider(p) => p.role(),
                _ => None,
            }),
            CliError::Provider(p) => p.role(),
            _ => None,
        };
        let mut v = json!({ "error": { "kind": self.kind(), "message": self.to_string() } });
        if let Some(role) = role {
            v["error"]["role"] = json!(role);
        }
        v
    }
}

/// Parses the process arguments and runs.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

fn out(line: impl std::fmt::Display) {
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{line}");
}

fn out_json(v: &impl serde::Serialize) {
    out(serde_json::to_string_pretty(v).expect("serializes"));
}

fn open_engine(root: &Path, args: &SessionArgs, config: Option<&ConfigArgs>) -> Result<Engine, CliError> {
    let session = Session::open_id(root, &args.session)?;
    if let Some(cfg) = config {
        let next = cfg.apply(session.config())?;
        if session.reconfigure(next, &GENERIC_KEYS)? {
            tracing::info!("configuration changed; generic artifacts will be regenerated");
        }
    }
    Ok(Engine::for_session(Arc::new(session), &args.providers.options()?)?)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let root = cli.sessions_root.as_path();
    match cli.command {
        Cmd::Ingest(a) => ingest(root, a, cli.json),
        Cmd::Embed { session, force } => {
            let e = open_engine(root, &session, None)?;
            let done = e.embed_all(force)?;
            if cli.json {
                out_json(&e.session().manifest().archives);
            } else {
                let names: Vec<String> = done.iter().map(|r| r.to_string()).collect();
                out(format!("embedded: {}", if names.is_empty() { "nothing (all archives present)".into() } else { names.join(", ") }));
            }
            Ok(())
        }
        Cmd::SummarizeGeneric { session, config } => {
            let e = open_engine(root, &session, Some(&config))?;
            let g = e.run_generic()?;
            if cli.json {
                out_json(&g);
                return Ok(());
            }
            if let SummaryArtifact::Storyboard(sb) = &g.storyboard.document.artifact {
                out(format!("storyboard: {} frames", sb.entries.len()));
            }
            if let SummaryArtifact::Skim(s) = &g.skim.document.artifact {
                out(format!("skim: {:.1} s in {} intervals", s.total_s, s.intervals.len()));
            }
            if let SummaryArtifact::Text(t) = &g.text.document.artifact {
                match &t.status {
                    crate::model::TextStatus::Available => out(format!("text: {}", t.text)),
                    crate::model::TextStatus::Unavailable { reason } => out(format!("text: unavailable ({reason})")),
                }
            }
            Ok(())
        }
        Cmd::Query { session, text, modality, config } => {
            let e = open_engine(root, &session, Some(&config))?;
            let o = e.run_query(&text, modality)?;
            if cli.json {
                out_json(&json!({ "cached": o.cached, "response": o.response }));
                return Ok(());
            }
            print_query(&e, &o.response, o.cached)
        }
        Cmd::ExportSkim(a) => export_skim(root, a, cli.json),
        Cmd::Report { session } => {
            let e = open_engine(root, &session, None)?;
            let report = e.latency_report()?;
            let traces: Vec<(String, serde_json::Value)> = e
                .session()
                .trace_keys()
                .into_iter()
                .filter_map(|k| e.session().load_trace(&k).ok().flatten().map(|t| (k, t)))
                .collect();
            if cli.json {
                let traces: serde_json::Map<String, serde_json::Value> = traces.into_iter().collect();
                out_json(&json!({ "latency": report, "traces": traces }));
                return Ok(());
            }
            out(format!("{report}"));
            out("selection traces");
            if traces.is_empty() {
                out("  none");
            }
            for (k, t) in &traces {
                out(format!("  {k:<40} {}", trace_line(t)));
            }
            Ok(())
        }
        Cmd::Serve { addr, extractor, no_ingest, providers } => {
            let cfg = ServiceConfig {
                sessions_root: root.to_path_buf(),
                extractor: extractor.map(ExtractorCommand::new).transpose()?,
                providers: providers.options()?,
                allow_ingest: !no_ingest,
            };
            runtime()?
                .block_on(crate::service::serve(addr, AppState::new(cfg)))
                .map_err(CliError::io(format!("serving on {addr}")))
        }
        Cmd::Provider(a) => serve_provider(a),
        Cmd::CheckProvider { role, spec, timeout_s } => {
            let timeout = Duration::from_secs_f64(timeout_s.max(0.001));
            let d = parse_provider_spec(role, &spec, timeout)?;
            let p: Box<dyn Provider> = match d.transport {
                TransportKind::InProcessFixture => Box::new(fixture_for(&d)?),
                _ => Box::new(LazyRemoteProvider::new(d, timeout)),
            };
            let report = run_conformance(p.as_ref());
            if cli.json {
                out_json(&report);
            } else {
                for c in &report.checks {
                    out(format!("{} {}{}", if c.passed { "ok  " } else { "FAIL" }, c.name, if c.detail.is_empty() { String::new() } else { format!(": {}", c.detail) }));
                }
            }
            if report.passed() {
                Ok(())
            } else {
                Err(CliError::Refused(format!("{} of {} conformance checks failed", report.failures().len(), report.checks.len())))
            }
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(CliError::io("starting runtime"))
}

fn ingest(root: &Path, a: IngestArgs, as_json: bool) -> Result<(), CliError> {
    let config = a.config.apply(PipelineConfig::default())?;
    let providers = a.providers.descriptors()?;
    let scenario = match (&a.scenario, a.synthetic_mission) {
        (Some(p), _) => Some(read_json::<Scenario>(p)?),
        (None, Some(secs)) => Some(Scenario::mission("mission", secs, a.seed)),
        _ => None,
    };
    let session = match (scenario, a.source) {
        (Some(sc), None) => {
            let s = ingest_scenario(root, &sc, config, a.id)?;
            if !providers.is_empty() {
                s.set_providers(providers)?;
            }
            s
        }
        (None, Some(source)) => ingest_video(
            root,
            IngestRequest {
                source,
                config,
                id: a.id,
                extractor: a.extractor.map(ExtractorCommand::new).transpose()?,
                duration_s: a.duration_s,
                providers,
            },
        )?,
        _ => return Err(CliError::usage("give one of --source, --scenario and --synthetic-mission")),
    };
    let m = session.manifest();
    if as_json {
        out_json(&m);
    } else {
        out(format!("session {}", m.id));
        out(format!("  source   {}", m.meta.source_uri));
        out(format!("  duration {:.1} s", m.meta.duration_s));
        out(format!("  streams  generic {} frames, query {} frames", m.generic_stream.frame_count, m.query_stream.frame_count));
        for w in &m.warnings {
            out(format!("  warning  {w}"));
        }
    }
    Ok(())
}

fn print_query(e: &Engine, r: &ArtifactResponse, cached: bool) -> Result<(), CliError> {
    let tag = if cached { " (cached)" } else { "" };
    out(format!("{}{tag}", r.document.key));
    match &r.document.artifact {
        SummaryArtifact::Storyboard(sb) => {
            for en in &sb.entries {
                out(format!("  {:>8.1} s  {}", en.timestamp_s, en.image));
            }
        }
        SummaryArtifact::Skim(s) => print_skim(s),
        SummaryArtifact::Text(t) => {
            out(&t.text);
            out(format!("source skim: {}", t.source_skim));
            if let Some(s) = e.session().load_artifact::<crate::pipeline::ArtifactDocument>(&t.source_skim)? {
                out(format!("  config {} providers {:?}", s.provenance.config_hash, s.provenance.providers));
                if let SummaryArtifact::Skim(s) = &s.artifact {
                    print_skim(s);
                }
            }
        }
    }
    if let Some(l) = &r.latency {
        out(format!("generated in {:.3} s", l.total_s));
    }
    Ok(())
}

fn print_skim(s: &SkimEditList) {
    for iv in &s.intervals {
        out(format!("  {:>8.1} – {:>8.1} s", iv.start_s, iv.end_s));
    }
    out(format!("  total {:.1} s", s.total_s));
}

fn trace_line(t: &serde_json::Value) -> String {
    let sel = t.get("selection").unwrap_or(t);
    let n = |k: &str| sel.get(k).and_then(|v| v.as_array()).map_or(0, Vec::len);
    let mut line = format!("considered {:>5}  accepted {:>3}  rejected {:>5}", n("considered"), n("accepted"), n("rejected"));
    if let Some(b) = t.get("budget_s").and_then(|v| v.as_f64()) {
        line.push_str(&format!("  budget {b:.1} s"));
    }
    if let Some(cp) = t.pointer("/kts/boundaries").and_then(|v| v.as_array()) {
        line.push_str(&format!("  change points {}", cp.len()));
    }
    if let Some(f) = t.get("fallback").and_then(|v| v.as_str()) {
        line.push_str(&format!("  fallback: {f}"));
    }
    line
}

fn export_skim(root: &Path, a: ExportArgs, as_json: bool) -> Result<(), CliError> {
    let session = Session::open_id(root, &a.session.session)?;
    let doc = session
        .load_artifact::<crate::pipeline::ArtifactDocument>(&a.key)?
        .ok_or_else(|| CliError::Refused(format!("no artifact {:?}; generate it first", a.key)))?;
    let SummaryArtifact::Skim(skim) = doc.artifact else {
        return Err(CliError::Refused(format!("{} is not a skim", a.key)));
    };
    if skim.is_empty() {
        return Err(CliError::Refused(format!("{} has an empty edit list; nothing to export", a.key)));
    }
    let edl = serde_json::to_string_pretty(&skim).expect("serializes");
    match &a.edl {
        Some(p) => crate::ingest::write_atomic(p, format!("{edl}\n").as_bytes())?,
        None if a.output.is_none() => out(&edl),
        None => {}
    }
    let Some(output) = a.output else { return Ok(()) };
    let template = a
        .assembler
        .ok_or_else(|| CliError::usage("--output needs an assembler template (--assembler or ROBOSUMM_ASSEMBLER)"))?;
    for p in ["{input}", "{edl}", "{output}"] {
        if !template.contains(p) {
            return Err(CliError::usage(format!("assembler template lacks {p}")));
        }
    }
    let edl_path = match &a.edl {
        Some(p) => p.clone(),
        None => {
            let p = session.dir().join(format!("{}.edl.json", a.key));
            crate::ingest::write_atomic(&p, edl.as_bytes())?;
            p
        }
    };
    let q = |s: &str| format!("'{}'", s.replace('\'', r"'\''"));
    let cmd = template
        .replace("{input}", &q(&session.meta().source_uri))
        .replace("{edl}", &q(&edl_path.to_string_lossy()))
        .replace("{output}", &q(&output.to_string_lossy()));
    let res = Command::new("sh").arg("-c").arg(&cmd).output().map_err(CliError::io("running assembler"))?;
    if !res.status.success() {
        return Err(CliError::Assembler {
            status: res.status.to_string(),
            stderr: String::from_utf8_lossy(&res.stderr).trim().to_string(),
        });
    }
    if as_json {
        out_json(&json!({ "output": output, "edl": edl_path, "total_s": skim.total_s }));
    } else {
        out(format!("wrote {} ({:.1} s)", output.display(), skim.total_s));
    }
    Ok(())
}

fn fixture_for(d: &ProviderDescriptor) -> Result<FixtureProvider, CliError> {
    let sc = if d.endpoint.is_empty() || d.endpoint == "scenario" {
        Scenario::mission("mission", 2400.0, 7)
    } else {
        read_json::<Scenario>(Path::new(&d.endpoint))?
    };
    let world = ScenarioWorld::new(sc).map_err(|e| CliError::usage(e.to_string()))?;
    Ok(FixtureProvider::scenario(d.role, Arc::new(world)).with_descriptor(d.clone()))
}

fn serve_provider(a: ProviderServeArgs) -> Result<(), CliError> {
    let sc = match &a.scenario {
        Some(p) => read_json::<Scenario>(p)?,
        None => Scenario::mission("mission", a.synthetic_mission, a.seed),
    };
    let world = ScenarioWorld::new(sc).map_err(|e| CliError::usage(e.to_string()))?;
    let rate = crate::model::FrameRate::from_fps(a.generic_fps).map_err(|e| CliError::usage(e.to_string()))?;
    let delay = InjectedDelay {
        embed: Duration::from_millis(a.embed_delay_ms),
        importance: Duration::from_millis(a.importance_delay_ms),
        caption: Duration::from_millis(a.caption_delay_ms),
    };
    let p: Arc<dyn Provider> =
        Arc::new(FixtureProvider::scenario(a.role, Arc::new(world)).with_importance_rate(rate).with_delay(delay));
    match a.transport {
        WireTransport::Stdio => {
            serve_stream(p.as_ref(), std::io::stdin().lock(), std::io::stdout().lock()).map_err(CliError::io("stdio provider"))
        }
        WireTransport::Http => runtime()?.block_on(async move {
            let listener = tokio::net::TcpListener::bind(a.addr).await.map_err(CliError::io(format!("binding {}", a.addr)))?;
            tracing::info!(addr = %a.addr, role = %a.role, "provider listening");
            axum::serve(listener, http_router(p))
                .with_graceful_shutdown(async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
                .map_err(CliError::io("http provider"))
        }),
    }
}
