//! Uniform access to every model backend: scripted mocks for offline runs,
//! chat-completion HTTP for live ones. The gateway owns the response cache,
//! the cost ledger, retry/backoff, bounded per-host concurrency, and the
//! record/replay transcript hooks.

mod http;
mod mock;
mod transcript;

pub use mock::{MockReply, MockScript, ScriptOutcome};
pub use transcript::{ReplayStore, TranscriptCall, TranscriptRecorder};

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{CostLedger, InvariantError, Validate};

/// Duties a model can take on in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Proxy,
    Translator,
    Judge,
    Simulator,
    Target,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Role::Proxy => "proxy",
            Role::Translator => "translator",
            Role::Judge => "judge",
            Role::Simulator => "simulator",
            Role::Target => "target",
        };
        f.write_str(name)
    }
}

/// A named backend with its duties, endpoint, sampling defaults, and prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub roles: BTreeSet<Role>,
    /// Either an HTTP(S) URL or `mock:<scenario>`.
    pub endpoint: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Dollars per 1K prompt tokens.
    #[serde(default)]
    pub prompt_price: f64,
    /// Dollars per 1K completion tokens.
    #[serde(default)]
    pub completion_price: f64,
}

impl ModelSpec {
    pub fn endpoint_kind(&self) -> Endpoint {
        match self.endpoint.strip_prefix("mock:") {
            Some(scenario) => Endpoint::Mock(scenario.to_string()),
            None => Endpoint::Http(self.endpoint.clone()),
        }
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }
}

impl Validate for ModelSpec {
    fn validate(&self) -> Result<(), InvariantError> {
        let t = "ModelSpec";
        if self.name.trim().is_empty() {
            return Err(InvariantError::new(t, "name", "must be non-empty"));
        }
        if self.endpoint.trim().is_empty() {
            return Err(InvariantError::new(t, "endpoint", "must be non-empty"));
        }
        if self.temperature < 0.0 {
            return Err(InvariantError::new(t, "temperature", "must be >= 0"));
        }
        if self.prompt_price < 0.0 || self.completion_price < 0.0 {
            return Err(InvariantError::new(t, "prompt_price", "prices must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Endpoint {
    Http(String),
    Mock(String),
}

/// One model reply plus its accounting metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub model: String,
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cached: bool,
    pub latency_ms: u64,
}

/// A single item of a fan-out batch.
#[derive(Clone)]
pub struct BatchRequest {
    pub model: ModelSpec,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("api key env var {env} is not set")]
    MissingApiKey { env: String },
    #[error("authentication rejected for model {model}")]
    Auth { model: String },
    #[error("rate limit exhausted for model {model}")]
    RateLimited { model: String },
    #[error("request to model {model} timed out")]
    Timeout { model: String },
    #[error("server error {status} from model {model}")]
    Server { model: String, status: u16 },
    #[error("transport failure for model {model}: {message}")]
    Transport { model: String, message: String },
    #[error("unknown mock scenario {name:?}")]
    UnknownScenario { name: String },
    #[error("mock scenario {name:?} already registered")]
    DuplicateScenario { name: String },
    #[error("unscripted prompt for scenario {scenario:?}")]
    UnscriptedPrompt { scenario: String },
    #[error("scripted failure in scenario {scenario:?}: {message}")]
    ScriptFault { scenario: String, message: String },
    #[error("request for model {model} is not in the replay transcript")]
    ReplayMiss { model: String },
    #[error("offline mode forbids network calls (model {model})")]
    OfflineNetworkBlocked { model: String },
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
    #[error("cache {path}: {message}")]
    Cache { path: String, message: String },
    #[error("api key env var is required for live endpoint of model {model}")]
    MissingKeyEnvName { model: String },
}

impl GatewayError {
    /// Errors worth retrying with backoff.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            GatewayError::RateLimited { .. }
                | GatewayError::Timeout { .. }
                | GatewayError::Server { .. }
                | GatewayError::Transport { .. }
        )
    }
}

/// Operational knobs; search hyperparameters live in `SearchConfig`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySettings {
    pub max_concurrency: usize,
    pub retry_attempts: u32,
    pub retry_base_ms: u64,
    pub request_timeout_ms: u64,
    /// Calls at or below this temperature are cached.
    pub deterministic_threshold: f64,
    /// When set, any HTTP endpoint is refused before the network is touched.
    pub offline: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            max_concurrency: 8,
            retry_attempts: 3,
            retry_base_ms: 100,
            request_timeout_ms: 60_000,
            deterministic_threshold: 0.01,
            offline: false,
            cache_dir: None,
        }
    }
}

/// Counting semaphore; std has none and this needs ~20 lines.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore poisoned");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }

    fn release(&self) {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        *permits += 1;
        self.available.notify_one();
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        self.semaphore.release();
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedResponse {
    text: String,
    prompt_tokens: u64,
    completion_tokens: u64,
    approximate: bool,
}

enum TranscriptMode {
    Off,
    Record(TranscriptRecorder),
    Replay(ReplayStore),
}

pub(crate) fn cache_key(model: &str, prompt: &str, max_tokens: u32, temperature_bucket: i64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model.as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt.as_bytes());
    hasher.update([0u8]);
    hasher.update(max_tokens.to_le_bytes());
    hasher.update(temperature_bucket.to_le_bytes());
    crate::types::hex_prefix(&hasher.finalize(), 40)
}

fn temperature_bucket(temperature: f64) -> i64 {
    (temperature * 1000.0).round() as i64
}

/// Four characters per token, rounded up; the usual rough estimate for when
/// a backend reports no usage.
fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

struct BackendReply {
    text: String,
    prompt_tokens: u64,
    completion_tokens: u64,
    approximate: bool,
}

/// The shared front door to every model backend.
pub struct Gateway {
    settings: GatewaySettings,
    scenarios: Mutex<HashMap<String, MockScript>>,
    cache: Mutex<HashMap<String, CachedResponse>>,
    ledger: Mutex<CostLedger>,
    hosts: Mutex<HashMap<String, std::sync::Arc<Semaphore>>>,
    transcript: TranscriptMode,
    network_calls: AtomicU64,
    backend_calls: AtomicU64,
    http_client: OnceLock<reqwest::blocking::Client>,
}

impl Gateway {
    pub fn new(settings: GatewaySettings) -> Self {
        Self {
            settings,
            scenarios: Mutex::new(HashMap::new()),
            cache: Mutex::new(HashMap::new()),
            ledger: Mutex::new(CostLedger::default()),
            hosts: Mutex::new(HashMap::new()),
            transcript: TranscriptMode::Off,
            network_calls: AtomicU64::new(0),
            backend_calls: AtomicU64::new(0),
            http_client: OnceLock::new(),
        }
    }

    pub fn with_recording(mut self, recorder: TranscriptRecorder) -> Self {
        self.transcript = TranscriptMode::Record(recorder);
        self
    }

    pub fn with_replay(mut self, store: ReplayStore) -> Self {
        self.transcript = TranscriptMode::Replay(store);
        self
    }

    pub fn settings(&self) -> &GatewaySettings {
        &self.settings
    }

    /// HTTP attempts made; zero for any offline or replayed run.
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    /// Backend invocations of any kind (mock, HTTP, replay); cache hits
    /// don't count.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn ledger_snapshot(&self) -> CostLedger {
        self.ledger.lock().expect("ledger poisoned").clone()
    }

    pub fn total_dollars(&self) -> f64 {
        self.ledger.lock().expect("ledger poisoned").total_dollars()
    }

    pub fn set_price(&self, model: &str, prompt_per_1k: f64, completion_per_1k: f64) {
        self.ledger
            .lock()
            .expect("ledger poisoned")
            .set_price(model, prompt_per_1k, completion_per_1k);
    }

    /// Loads every roster model's prices into the ledger.
    pub fn load_prices<'a>(&self, models: impl IntoIterator<Item = &'a ModelSpec>) {
        let mut ledger = self.ledger.lock().expect("ledger poisoned");
        for m in models {
            ledger.set_price(&m.name, m.prompt_price, m.completion_price);
        }
    }

    pub fn attribute_language(&self, language: crate::types::Language, dollars: f64, candidates: u64) {
        self.ledger
            .lock()
            .expect("ledger poisoned")
            .attribute_language(language, dollars, candidates);
    }

    /// Registers a scripted scenario for `mock:<name>` endpoints.
    pub fn register_mock(&self, name: &str, script: MockScript) -> Result<(), GatewayError> {
        let mut scenarios = self.scenarios.lock().expect("scenario registry poisoned");
        if scenarios.contains_key(name) {
            return Err(GatewayError::DuplicateScenario {
                name: name.to_string(),
            });
        }
        scenarios.insert(name.to_string(), script);
        Ok(())
    }

    pub fn has_scenario(&self, name: &str) -> bool {
        self.scenarios
            .lock()
            .expect("scenario registry poisoned")
            .contains_key(name)
    }

    fn host_semaphore(&self, host: &str) -> std::sync::Arc<Semaphore> {
        let mut hosts = self.hosts.lock().expect("host limiter poisoned");
        hosts
            .entry(host.to_string())
            .or_insert_with(|| std::sync::Arc::new(Semaphore::new(self.settings.max_concurrency.max(1))))
            .clone()
    }

    /// One completion call. Deterministic-temperature calls consult the
    /// cache first and populate it afterwards; cached replies add nothing
    /// to the ledger.
    pub fn complete(
        &self,
        model: &ModelSpec,
        prompt: &str,
        temperature: f64,
        max_tokens: u32,
    ) -> Result<Completion, GatewayError> {
        let bucket = temperature_bucket(temperature);
        let key = cache_key(&model.name, prompt, max_tokens, bucket);
        let deterministic = temperature <= self.settings.deterministic_threshold;

        if deterministic {
            if let Some(hit) = self.cache_lookup(&key) {
                return Ok(Completion {
                    model: model.name.clone(),
                    text: hit.text,
                    prompt_tokens: hit.prompt_tokens,
                    completion_tokens: hit.completion_tokens,
                    cached: true,
                    latency_ms: 0,
                });
            }
        }

        let started = Instant::now();
        let reply = self.invoke_backend(model, prompt, temperature, max_tokens, key.clone(), bucket)?;
        let latency_ms = started.elapsed().as_millis() as u64;

        {
            let mut ledger = self.ledger.lock().expect("ledger poisoned");
            ledger.set_price(&model.name, model.prompt_price, model.completion_price);
            ledger.record_usage(
                &model.name,
                reply.prompt_tokens,
                reply.completion_tokens,
                reply.approximate,
            );
        }
        if deterministic {
            self.cache_store(
                &key,
                &CachedResponse {
                    text: reply.text.clone(),
                    prompt_tokens: reply.prompt_tokens,
                    completion_tokens: reply.completion_tokens,
                    approximate: reply.approximate,
                },
            );
        }
        Ok(Completion {
            model: model.name.clone(),
            text: reply.text,
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
            cached: false,
            latency_ms,
        })
    }

    /// Fans a batch out over a bounded worker pool. Results come back in
    /// request order and one item's failure never aborts its siblings.
    pub fn complete_batch(&self, requests: &[BatchRequest]) -> Vec<Result<Completion, GatewayError>> {
        if requests.is_empty() {
            return Vec::new();
        }
        let workers = self.settings.max_concurrency.max(1).min(requests.len());
        let next = AtomicU64::new(0);
        let slots: Vec<Mutex<Option<Result<Completion, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::SeqCst) as usize;
                    if idx >= requests.len() {
                        break;
                    }
                    let req = &requests[idx];
                    let result = self.complete(&req.model, &req.prompt, req.temperature, req.max_tokens);
                    *slots[idx].lock().expect("batch slot poisoned") = Some(result);
                });
            }
        });

        slots
            .into_iter()
            .map(|slot| {
                slot.into_inner()
                    .expect("batch slot poisoned")
                    .expect("every slot is filled")
            })
            .collect()
    }

    fn invoke_backend(
        &self,
        model: &ModelSpec,
        prompt: &str,
        temperature: f64,
        max_tokens: u32,
        key: String,
        bucket: i64,
    ) -> Result<BackendReply, GatewayError> {
        if let TranscriptMode::Replay(store) = &self.transcript {
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            let call = store.get(&key).ok_or_else(|| GatewayError::ReplayMiss {
                model: model.name.clone(),
            })?;
            return Ok(BackendReply {
                text: call.text.clone(),
                prompt_tokens: call.prompt_tokens,
                completion_tokens: call.completion_tokens,
                approximate: call.approximate,
            });
        }

        let endpoint = model.endpoint_kind();
        let host = match &endpoint {
            Endpoint::Mock(_) => "mock".to_string(),
            Endpoint::Http(url) => url
                .split("//")
                .nth(1)
                .and_then(|rest| rest.split('/').next())
                .unwrap_or(url)
                .to_string(),
        };

        // Live endpoints fail fast, before any permit or network traffic.
        let api_key = match &endpoint {
            Endpoint::Http(_) => {
                if self.settings.offline {
                    return Err(GatewayError::OfflineNetworkBlocked {
                        model: model.name.clone(),
                    });
                }
                let env = model
                    .api_key_env
                    .as_deref()
                    .ok_or_else(|| GatewayError::MissingKeyEnvName {
                        model: model.name.clone(),
                    })?;
                Some(std::env::var(env).map_err(|_| GatewayError::MissingApiKey {
                    env: env.to_string(),
                })?)
            }
            Endpoint::Mock(_) => None,
        };

        let semaphore = self.host_semaphore(&host);
        let _permit = semaphore.acquire();

        let mut last_err = None;
        for attempt in 0..self.settings.retry_attempts.max(1) {
            if attempt > 0 {
                let backoff = self.settings.retry_base_ms.saturating_mul(1 << (attempt - 1));
                let jitter = rand::thread_rng().gen_range(0..=backoff / 2 + 1);
                std::thread::sleep(Duration::from_millis(backoff + jitter));
            }
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            let outcome = match &endpoint {
                Endpoint::Mock(scenario) => self.run_scenario(scenario, prompt),
                Endpoint::Http(url) => {
                    self.network_calls.fetch_add(1, Ordering::SeqCst);
                    let client = self.http_client.get_or_init(|| {
                        reqwest::blocking::Client::builder()
                            .build()
                            .expect("building an http client")
                    });
                    http::send_chat_request(
                        client,
                        url,
                        api_key.as_deref().unwrap_or(""),
                        &model.name,
                        prompt,
                        temperature,
                        max_tokens,
                        Duration::from_millis(self.settings.request_timeout_ms),
                    )
                    .map(|r| {
                        let approximate = r.prompt_tokens.is_none() || r.completion_tokens.is_none();
                        BackendReply {
                            prompt_tokens: r.prompt_tokens.unwrap_or_else(|| estimate_tokens(prompt)),
                            completion_tokens: r
                                .completion_tokens
                                .unwrap_or_else(|| estimate_tokens(&r.text)),
                            text: r.text,
                            approximate,
                        }
                    })
                }
            };
            match outcome {
                Ok(reply) => {
                    if let TranscriptMode::Record(recorder) = &self.transcript {
                        recorder.record(&TranscriptCall {
                            model: model.name.clone(),
                            prompt: prompt.to_string(),
                            temperature_bucket: bucket,
                            max_tokens,
                            text: reply.text.clone(),
                            prompt_tokens: reply.prompt_tokens,
                            completion_tokens: reply.completion_tokens,
                            approximate: reply.approximate,
                        })?;
                    }
                    return Ok(reply);
                }
                Err(e) if e.is_transient() => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt ran"))
    }

    fn run_scenario(&self, scenario: &str, prompt: &str) -> Result<BackendReply, GatewayError> {
        let scenarios = self.scenarios.lock().expect("scenario registry poisoned");
        let script = scenarios.get(scenario).ok_or_else(|| GatewayError::UnknownScenario {
            name: scenario.to_string(),
        })?;
        match script.run(prompt) {
            Some(ScriptOutcome::Reply(reply)) => {
                let approximate = reply.prompt_tokens.is_none() || reply.completion_tokens.is_none();
                Ok(BackendReply {
                    prompt_tokens: reply.prompt_tokens.unwrap_or_else(|| estimate_tokens(prompt)),
                    completion_tokens: reply
                        .completion_tokens
                        .unwrap_or_else(|| estimate_tokens(&reply.text)),
                    text: reply.text,
                    approximate,
                })
            }
            Some(ScriptOutcome::Fail { message, transient }) => {
                if transient {
                    Err(GatewayError::Transport {
                        model: scenario.to_string(),
                        message,
                    })
                } else {
                    Err(GatewayError::ScriptFault {
                        scenario: scenario.to_string(),
                        message,
                    })
                }
            }
            None => Err(GatewayError::UnscriptedPrompt {
                scenario: scenario.to_string(),
            }),
        }
    }

    fn cache_lookup(&self, key: &str) -> Option<CachedResponse> {
        if let Some(hit) = self.cache.lock().expect("cache poisoned").get(key) {
            return Some(hit.clone());
        }
        let dir = self.settings.cache_dir.as_ref()?;
        let path = dir.join(format!("{key}.json"));
        let bytes = std::fs::read(&path).ok()?;
        let parsed: CachedResponse = serde_json::from_slice(&bytes).ok()?;
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(key.to_string(), parsed.clone());
        Some(parsed)
    }

    fn cache_store(&self, key: &str, response: &CachedResponse) {
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(key.to_string(), response.clone());
        if let Some(dir) = &self.settings.cache_dir {
            if std::fs::create_dir_all(dir).is_ok() {
                let path = dir.join(format!("{key}.json"));
                if let Ok(bytes) = serde_json::to_vec(response) {
                    let _ = write_atomically(&path, &bytes);
                }
            }
        }
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
