//! Shared CLI plumbing: error-to-exit-code mapping, run identity, the run
//! manifest, and context construction (gateway, templates, transcripts).

use std::path::Path;

use serde::{Deserialize, Serialize};

use glotprobe::clock::Clock;
use glotprobe::config::{ConfigError, RunConfig};
use glotprobe::gateway::{Endpoint, Gateway, GatewayError, ReplayStore, TranscriptRecorder};
use glotprobe::linguistics::{LinguisticsError, TemplateRegistry};
use glotprobe::persist::PersistError;
use glotprobe::scenarios;
use glotprobe::search::SearchError;
use glotprobe::types::{CandidateRecord, InvariantError, Language};

/// CLI failure classes; each maps to a distinct exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Backend(String),
    Invariant(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Backend(m) => write!(f, "backend failure: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violation: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<InvariantError> for CliError {
    fn from(e: InvariantError) -> Self {
        CliError::Invariant(e.to_string())
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        match e {
            PersistError::Parse { .. } | PersistError::Invariant { .. } => {
                CliError::Invariant(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<LinguisticsError> for CliError {
    fn from(e: LinguisticsError) -> Self {
        match e {
            LinguisticsError::Gateway(inner) => CliError::Backend(inner.to_string()),
            LinguisticsError::MissingTemplate { .. } | LinguisticsError::MissingPlaceholder { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::RoleMissing { .. } => CliError::Config(e.to_string()),
            SearchError::ProxyFailure { .. } => CliError::Backend(e.to_string()),
            SearchError::Linguistics(inner) => inner.into(),
            SearchError::Invariant(inner) => inner.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<glotprobe::analysis::AnalysisError> for CliError {
    fn from(e: glotprobe::analysis::AnalysisError) -> Self {
        use glotprobe::analysis::AnalysisError as E;
        match e {
            E::RoleMissing { .. } => CliError::Config(e.to_string()),
            E::Linguistics(inner) => inner.into(),
            E::Invariant(inner) => inner.into(),
            other => CliError::Invariant(other.to_string()),
        }
    }
}

/// Whether backends may touch the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Offline,
    Live,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Offline => "offline",
            Mode::Live => "live",
        }
    }
}

/// Written next to every command's outputs; ties artifacts to the exact
/// config and inputs that produced them.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub mode: String,
    pub command: String,
    /// Byte-identical copy of the config file used, when one was.
    pub config_snapshot: Option<String>,
    pub model_roster: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub started_at_ms: i64,
    pub finished_at_ms: i64,
    pub exit_status: i32,
    pub network_calls: u64,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Other(format!("manifest serialization: {e}")))?;
        std::fs::write(path, text)
            .map_err(|e| CliError::Other(format!("writing manifest {}: {e}", path.display())))
    }
}

/// Stable run identity: a hash over the command name, semantic flags, and
/// input file contents. Output paths stay out so reruns into different
/// directories reproduce identical artifacts.
pub fn derive_run_id(parts: &[(&str, &[u8])]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for (label, bytes) in parts {
        hasher.update(label.as_bytes());
        hasher.update([0u8]);
        hasher.update(bytes);
        hasher.update([0xff]);
    }
    let digest = hasher.finalize();
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

pub fn file_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Other(format!("reading {}: {e}", path.display())))
}

/// Everything a gateway-backed command needs, wired per mode.
pub struct RunContext {
    pub config: RunConfig,
    pub config_text: String,
    pub gateway: Gateway,
    pub templates: TemplateRegistry,
    pub clock: Clock,
    pub mode: Mode,
    pub run_id: String,
}

impl RunContext {
    pub fn build(
        config_path: &Path,
        mode: Mode,
        record_transcript: Option<&Path>,
        replay_transcript: Option<&Path>,
        run_id: String,
    ) -> Result<Self, CliError> {
        let (config, config_text) = RunConfig::load(config_path)?;
        Self::from_config(config, config_text, mode, record_transcript, replay_transcript, run_id)
    }

    pub fn from_config(
        config: RunConfig,
        config_text: String,
        mode: Mode,
        record_transcript: Option<&Path>,
        replay_transcript: Option<&Path>,
        run_id: String,
    ) -> Result<Self, CliError> {
        let mut settings = config.gateway.clone();
        if mode == Mode::Offline {
            settings.offline = true;
        }

        let mut gateway = Gateway::new(settings);
        scenarios::register_demo_scenarios(&gateway)?;
        for model in &config.models {
            if let Endpoint::Mock(scenario) = model.endpoint_kind() {
                if !gateway.has_scenario(&scenario) {
                    return Err(CliError::Config(format!(
                        "model {} uses unregistered mock scenario {scenario:?}",
                        model.name
                    )));
                }
            }
        }
        gateway.load_prices(&config.models);

        if let Some(path) = replay_transcript {
            gateway = gateway.with_replay(ReplayStore::load(path)?);
        } else if let Some(path) = record_transcript {
            gateway = gateway.with_recording(TranscriptRecorder::create(path, &run_id)?);
        }

        let replaying = replay_transcript.is_some();
        let clock = if mode == Mode::Offline || replaying {
            Clock::Fixed(0)
        } else {
            Clock::System
        };

        Ok(Self {
            templates: TemplateRegistry::builtin(),
            config,
            config_text,
            gateway,
            clock,
            mode,
            run_id,
        })
    }

    /// The zero-network guarantee for offline runs, checked after the work.
    pub fn assert_offline_clean(&self) -> Result<(), CliError> {
        if self.mode == Mode::Offline && self.gateway.network_calls() > 0 {
            return Err(CliError::Backend(format!(
                "offline run performed {} network calls",
                self.gateway.network_calls()
            )));
        }
        Ok(())
    }

    pub fn manifest(
        &self,
        command: &str,
        inputs: Vec<String>,
        outputs: Vec<String>,
        started_at_ms: i64,
    ) -> RunManifest {
        RunManifest {
            run_id: self.run_id.clone(),
            mode: self.mode.as_str().to_string(),
            command: command.to_string(),
            config_snapshot: Some(self.config_text.clone()),
            model_roster: self.config.models.iter().map(|m| m.name.clone()).collect(),
            inputs,
            outputs,
            started_at_ms,
            finished_at_ms: self.clock.now_ms(),
            exit_status: 0,
            network_calls: self.gateway.network_calls(),
        }
    }
}

/// Writes a tabular artifact with its provenance line.
pub fn write_table(path: &Path, run_id: &str, body: &str) -> Result<(), CliError> {
    let text = format!("# run_id: {run_id}\n{body}");
    std::fs::write(path, text)
        .map_err(|e| CliError::Other(format!("writing {}: {e}", path.display())))
}

/// Candidates from different runs need an explicit opt-in to mix.
pub fn check_single_run(candidates: &[CandidateRecord], merge: bool) -> Result<(), CliError> {
    if merge {
        return Ok(());
    }
    let mut run_ids: Vec<&str> = candidates.iter().map(|c| c.run_id.as_str()).collect();
    run_ids.sort_unstable();
    run_ids.dedup();
    if run_ids.len() > 1 {
        return Err(CliError::Config(format!(
            "candidates mix {} run_ids ({}); pass --merge to combine them",
            run_ids.len(),
            run_ids.join(", ")
        )));
    }
    Ok(())
}

/// Parses a tab-separated accuracy matrix: a `language` header row naming
/// the seed languages, then one row per evaluation language in the same
/// order. `#` lines are comments.
pub fn read_accuracy_matrix(path: &Path) -> Result<(Vec<Language>, Vec<Vec<f64>>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Other(format!("reading {}: {e}", path.display())))?;
    let mut lines = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| CliError::Invariant(format!("{}: empty matrix", path.display())))?;
    let mut columns = header.split('\t');
    columns.next(); // row-label column
    let languages: Vec<Language> = columns
        .map(|code| {
            code.trim()
                .parse()
                .map_err(|e: InvariantError| CliError::Config(e.to_string()))
        })
        .collect::<Result<_, _>>()?;

    let mut matrix = Vec::new();
    for (row_idx, line) in lines.enumerate() {
        let mut fields = line.split('\t');
        let label: Language = fields
            .next()
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|e: InvariantError| CliError::Config(e.to_string()))?;
        if languages.get(row_idx) != Some(&label) {
            return Err(CliError::Invariant(format!(
                "{}: row {} is {label}, expected the header order",
                path.display(),
                row_idx + 1
            )));
        }
        let row: Vec<f64> = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Invariant(format!("{}: bad entry {f:?}: {e}", path.display())))
            })
            .collect::<Result<_, _>>()?;
        matrix.push(row);
    }
    Ok((languages, matrix))
}

/// Comma-separated language codes.
pub fn parse_languages(arg: &str) -> Result<Vec<Language>, CliError> {
    arg.split(',')
        .map(|code| {
            code.trim()
                .parse::<Language>()
                .map_err(|e| CliError::Config(e.to_string()))
        })
        .collect()
}

pub fn path_string(path: &Path) -> String {
    path.display().to_string()
}
