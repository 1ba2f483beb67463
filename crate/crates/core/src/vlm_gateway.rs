//! Visual branch providers: a fixture-backed mock and an HTTP/JSON adapter.

use base64::Engine;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use crate::error::{Error, Result};
pub use crate::fusion::{normalized_entropy, Candidate, VisualContext};

pub const DEFAULT_PROMPT: &str =
    "Identify the object in the image and list the materials it could be made of, with probabilities.";

/// Luminance and complexity used when neither hints nor the provider supply them.
pub const NEUTRAL_SCENE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneHints {
    pub luminance: f64,
    pub complexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualQuery {
    pub image_ref: String,
    #[serde(default = "default_prompt")]
    pub prompt_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_hints: Option<SceneHints>,
}

fn default_prompt() -> String {
    DEFAULT_PROMPT.to_string()
}

impl VisualQuery {
    pub fn new(image_ref: impl Into<String>) -> Result<Self> {
        let q = Self {
            image_ref: image_ref.into(),
            prompt_text: default_prompt(),
            scene_hints: None,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_hints(mut self, luminance: f64, complexity: f64) -> Self {
        self.scene_hints = Some(SceneHints {
            luminance,
            complexity,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_ref.trim().is_empty() {
            return Err(Error::Provider("image reference is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env_name: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<PathBuf>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_in_flight() -> usize {
    4
}

impl ProviderConfig {
    pub fn mock(fixture_path: impl Into<PathBuf>) -> Self {
        Self {
            mode: ProviderMode::Mock,
            endpoint_url: None,
            auth_token_env_name: None,
            timeout_ms: default_timeout_ms(),
            fixture_path: Some(fixture_path.into()),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn http(endpoint_url: impl Into<String>, timeout_ms: u64) -> Self {
        Self {
            mode: ProviderMode::Http,
            endpoint_url: Some(endpoint_url.into()),
            auth_token_env_name: None,
            timeout_ms,
            fixture_path: None,
            max_in_flight: default_in_flight(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            ProviderMode::Mock if self.fixture_path.is_none() => {
                Err(Error::Provider("mock provider needs `fixture_path`".into()))
            }
            ProviderMode::Http if self.endpoint_url.as_deref().is_none_or(str::is_empty) => {
                Err(Error::Provider("http provider needs `endpoint_url`".into()))
            }
            ProviderMode::Http if self.timeout_ms == 0 || self.max_in_flight == 0 => Err(
                Error::Provider("timeout and in-flight cap must be positive".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Provider(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the configured provider. Relative fixture paths resolve
    /// against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<Box<dyn VisualProvider>> {
        self.validate()?;
        match self.mode {
            ProviderMode::Mock => {
                let path = self.fixture_path.as_ref().expect("validated");
                let path = match base_dir {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                Ok(Box::new(MockProvider::load(&path)?))
            }
            ProviderMode::Http => Ok(Box::new(HttpProvider::new(self)?)),
        }
    }
}

pub trait VisualProvider: Send + Sync {
    fn propose(&self, query: &VisualQuery) -> Result<VisualContext>;
}

pub fn propose(query: &VisualQuery, provider: &dyn VisualProvider) -> Result<VisualContext> {
    query.validate()?;
    provider.propose(query)
}

/// Validates and, when the sum is within 1%, renormalises a candidate list.
pub fn normalize_candidates(mut candidates: Vec<Candidate>) -> Result<Vec<Candidate>> {
    if candidates.is_empty() {
        return Err(Error::Provider("response lists no candidates".into()));
    }
    if let Some(c) = candidates.iter().find(|c| c.name.trim().is_empty()) {
        return Err(Error::Provider(format!("candidate with empty name (p = {})", c.probability)));
    }
    if let Some(c) = candidates.iter().find(|c| !(c.probability >= 0.0 && c.probability.is_finite())) {
        return Err(Error::Provider(format!(
            "candidate `{}` has invalid probability {}",
            c.name, c.probability
        )));
    }
    let sum: f64 = candidates.iter().map(|c| c.probability).sum();
    if !(0.99..=1.01).contains(&sum) {
        return Err(Error::Provider(format!(
            "candidate probabilities sum to {sum}, outside [0.99, 1.01]"
        )));
    }
    if sum != 1.0 {
        for c in &mut candidates {
            c.probability /= sum;
        }
    }
    Ok(candidates)
}

fn context_from(
    candidates: Vec<Candidate>,
    hints: Option<SceneHints>,
    luminance: Option<f64>,
    complexity: Option<f64>,
) -> Result<VisualContext> {
    let candidates = normalize_candidates(candidates)?;
    let (lum, cplx) = match hints {
        Some(h) => (h.luminance, h.complexity),
        None => (
            luminance.unwrap_or(NEUTRAL_SCENE),
            complexity.unwrap_or(NEUTRAL_SCENE),
        ),
    };
    VisualContext::new(lum, cplx, candidates).map_err(|e| Error::Provider(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderResponse {
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub luminance: Option<f64>,
    #[serde(default)]
    pub complexity: Option<f64>,
}

/// Parses a JSON provider response and normalises its candidates.
pub fn parse_response(body: &str) -> Result<ProviderResponse> {
    #[derive(Deserialize)]
    struct Loose {
        candidates: Vec<Candidate>,
        #[serde(default)]
        luminance: Option<f64>,
        #[serde(default)]
        complexity: Option<f64>,
    }
    let loose: Loose = serde_json::from_str(body)
        .map_err(|e| Error::Provider(format!("malformed response body: {e}")))?;
    Ok(ProviderResponse {
        candidates: normalize_candidates(loose.candidates)?,
        luminance: loose.luminance,
        complexity: loose.complexity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureEntry {
    image_ref: String,
    #[serde(default)]
    luminance: Option<f64>,
    #[serde(default)]
    complexity: Option<f64>,
    candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureDocument {
    #[serde(default)]
    images: Vec<FixtureEntry>,
}

/// Answers queries from a fixture document keyed by image reference.
#[derive(Debug, Clone)]
pub struct MockProvider {
    entries: HashMap<String, FixtureEntry>,
}

impl MockProvider {
    pub fn parse(text: &str) -> Result<Self> {
        let doc: FixtureDocument =
            toml::from_str(text).map_err(|e| Error::Provider(format!("fixture: {}", e.message())))?;
        let mut entries = HashMap::new();
        for e in doc.images {
            normalize_candidates(e.candidates.clone())
                .map_err(|err| Error::Provider(format!("fixture `{}`: {err}", e.image_ref)))?;
            if entries.insert(e.image_ref.clone(), e).is_some() {
                return Err(Error::Provider("fixture lists an image twice".into()));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

impl VisualProvider for MockProvider {
    fn propose(&self, query: &VisualQuery) -> Result<VisualContext> {
        let file_name = Path::new(&query.image_ref).file_name().and_then(|n| n.to_str());
        let entry = self
            .entries
            .get(query.image_ref.as_str())
            .or_else(|| file_name.and_then(|n| self.entries.get(n)))
            .ok_or_else(|| Error::Provider(format!("no fixture for `{}`", query.image_ref)))?;
        context_from(
            entry.candidates.clone(),
            query.scene_hints,
            entry.luminance,
            entry.complexity,
        )
    }
}

/// Counting semaphore capping concurrent requests.
struct InFlight {
    used: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().expect("semaphore lock");
        while *used >= self.cap {
            used = self.freed.wait(used).expect("semaphore lock");
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().expect("semaphore lock") -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    prompt: &'a str,
    image: String,
}

/// POSTs `{prompt, image}` (image as base64) and parses the JSON reply.
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    token: Option<String>,
    timeout_ms: u64,
    in_flight: InFlight,
}

impl HttpProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self> {
        config.validate()?;
        let token = match &config.auth_token_env_name {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Provider(format!("environment variable `{var}` is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: config.endpoint_url.clone().expect("validated"),
            token,
            timeout_ms: config.timeout_ms,
            in_flight: InFlight {
                used: Mutex::new(0),
                freed: Condvar::new(),
                cap: config.max_in_flight,
            },
        })
    }
}

impl VisualProvider for HttpProvider {
    fn propose(&self, query: &VisualQuery) -> Result<VisualContext> {
        let image = std::fs::read(&query.image_ref).map_err(|e| Error::io(&query.image_ref, e))?;
        let body = HttpRequest {
            prompt: &query.prompt_text,
            image: base64::engine::general_purpose::STANDARD.encode(image),
        };
        let _permit = self.in_flight.acquire();
        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Some(t) = &self.token {
            request = request.bearer_auth(t);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                Error::Timeout(self.timeout_ms)
            } else {
                Error::Transport(e.to_string())
            }
        };
        let response = request.send().map_err(classify)?;
        let status = response.status();
        let text = response.text().map_err(classify)?;
        if !status.is_success() {
            return Err(Error::Provider(format!("endpoint returned {status}")));
        }
        let parsed = parse_response(&text)?;
        context_from(
            parsed.candidates,
            query.scene_hints,
            parsed.luminance,
            parsed.complexity,
        )
    }
}
