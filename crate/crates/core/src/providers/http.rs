use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{require_text, ProviderSpec, StateSummary, TextProvider};
use crate::error::{Error, Result};
use crate::network::AgentProfile;
use crate::state::Message;
use crate::vector::{is_finite, normalized};

#[derive(Serialize)]
struct TextRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct VectorResponse {
    vector: Vec<f64>,
}

#[derive(Deserialize)]
struct TextResponse {
    text: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Cached {
    Vector { vector: Vec<f64> },
    Text { text: String },
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    #[serde(flatten)]
    value: Cached,
}

/// Append-only, digest-keyed response store. Readers share the map; writes
/// are serialized through the file handle.
struct ResponseCache {
    entries: RwLock<HashMap<String, Cached>>,
    file: Option<Mutex<File>>,
}

impl ResponseCache {
    fn open(path: Option<&Path>) -> Result<Self> {
        let mut entries = HashMap::new();
        let file = match path {
            None => None,
            Some(path) => {
                if path.exists() {
                    let reader = BufReader::new(File::open(path)?);
                    for line in reader.lines() {
                        let line = line?;
                        if line.trim().is_empty() {
                            continue;
                        }
                        // a torn final line from an interrupted run is skipped
                        if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
                            entries.insert(entry.key, entry.value);
                        }
                    }
                }
                Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?))
            }
        };
        Ok(Self {
            entries: RwLock::new(entries),
            file,
        })
    }

    fn get(&self, key: &str) -> Option<Cached> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    fn put(&self, key: String, value: Cached) -> Result<()> {
        if let Some(file) = &self.file {
            let line = serde_json::to_string(&CacheLine {
                key: key.clone(),
                value: value.clone(),
            })
            .map_err(|e| Error::provider(e.to_string()))?;
            let mut f = file.lock().expect("cache file lock");
            writeln!(f, "{line}")?;
        }
        self.entries.write().expect("cache lock").insert(key, value);
        Ok(())
    }
}

/// Client for an external JSON-over-HTTP embedding/emotion/generation
/// service exposing `POST {endpoint}/embed`, `/emote` and `/generate`.
pub struct HttpProvider {
    endpoint: String,
    agent: ureq::Agent,
    retry_budget: u32,
    dim: usize,
    emotion_dim: usize,
    cache: ResponseCache,
    calls: AtomicU64,
}

impl HttpProvider {
    pub fn new(spec: &ProviderSpec, dim: usize, emotion_dim: usize) -> Result<Self> {
        spec.validate()?;
        let endpoint = spec
            .endpoint
            .clone()
            .unwrap_or_default()
            .trim_end_matches('/')
            .to_string();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(spec.timeout_ms.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            endpoint,
            agent,
            retry_budget: spec.retry_budget,
            dim,
            emotion_dim,
            cache: ResponseCache::open(spec.cache_path.as_deref())?,
            calls: AtomicU64::new(0),
        })
    }

    /// Number of requests actually sent over the network (cache hits are
    /// not counted).
    pub fn external_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn cache_key(&self, route: &str, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.endpoint.as_bytes());
        h.update([0]);
        h.update(route.as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, route: &str, text: &str) -> Result<T> {
        let url = format!("{}/{route}", self.endpoint);
        let mut last = String::new();
        for _ in 0..=self.retry_budget {
            self.calls.fetch_add(1, Ordering::Relaxed);
            match self.agent.post(&url).send_json(TextRequest { text }) {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    if status >= 500 {
                        last = format!("{url} returned HTTP {status}");
                        continue;
                    }
                    if status >= 400 {
                        return Err(Error::provider(format!("{url} returned HTTP {status}")));
                    }
                    return resp
                        .into_body()
                        .read_json::<T>()
                        .map_err(|e| Error::provider(format!("{url}: malformed response: {e}")));
                }
                Err(e) => last = format!("{url}: {e}"),
            }
        }
        Err(Error::provider(format!(
            "retry budget of {} exhausted; last failure: {last}",
            self.retry_budget
        )))
    }

    fn vector(&self, route: &str, text: &str) -> Result<Vec<f64>> {
        require_text(text)?;
        let key = self.cache_key(route, text);
        if let Some(Cached::Vector { vector }) = self.cache.get(&key) {
            return Ok(vector);
        }
        let resp: VectorResponse = self.post(route, text)?;
        self.cache.put(
            key,
            Cached::Vector {
                vector: resp.vector.clone(),
            },
        )?;
        Ok(resp.vector)
    }
}

impl TextProvider for HttpProvider {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let v = self.vector("embed", text)?;
        if v.len() != self.dim {
            return Err(Error::provider(format!(
                "embedding has dimension {}, expected {}",
                v.len(),
                self.dim
            )));
        }
        if !is_finite(&v) {
            return Err(Error::provider("embedding contains non-finite values"));
        }
        normalized(&v, 1e-12).ok_or_else(|| Error::provider("service returned a zero embedding"))
    }

    fn emote(&self, text: &str) -> Result<Vec<f64>> {
        let v = self.vector("emote", text)?;
        if v.len() != self.emotion_dim {
            return Err(Error::provider(format!(
                "emotion vector has dimension {}, expected {}",
                v.len(),
                self.emotion_dim
            )));
        }
        if !is_finite(&v) {
            return Err(Error::provider("emotion vector contains non-finite values"));
        }
        Ok(v.into_iter().map(|x| x.clamp(-1.0, 1.0)).collect())
    }

    fn generate_post(&self, profile: &AgentProfile, summary: &StateSummary, msg: &Message) -> Result<String> {
        let prompt = format!(
            "persona: {}\nplatform: {}\nstance: {:?}\ndominant_emotion: {} ({:+.2})\nmessage: {}",
            if profile.persona_seed.is_empty() {
                &profile.agent_id
            } else {
                &profile.persona_seed
            },
            msg.platform,
            summary.stance,
            summary.dominant_emotion,
            summary.intensity,
            msg.text.as_deref().unwrap_or("(no text)")
        );
        let key = self.cache_key("generate", &prompt);
        let text = match self.cache.get(&key) {
            Some(Cached::Text { text }) => text,
            _ => {
                let resp: TextResponse = self.post("generate", &prompt)?;
                if resp.text.trim().is_empty() {
                    return Err(Error::provider("service generated an empty post"));
                }
                self.cache.put(
                    key,
                    Cached::Text {
                        text: resp.text.clone(),
                    },
                )?;
                resp.text
            }
        };
        Ok(text)
    }

    fn dims(&self) -> (usize, usize) {
        (self.dim, self.emotion_dim)
    }
}
