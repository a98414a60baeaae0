//! Text → vector and post-generation providers. The engine only ever talks
//! to [`TextProvider`]; the local implementation is fully deterministic and
//! the HTTP client forwards to any service speaking the JSON protocol.

mod http;
mod lexicon;
mod local;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use http::HttpProvider;
pub use local::LocalProvider;

use crate::error::{Error, Result};
use crate::network::AgentProfile;
use crate::state::Message;

/// Coarse relation between an agent's persona and the message it reacts to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StanceBucket {
    Disagree,
    Neutral,
    Agree,
}

impl StanceBucket {
    pub fn from_alignment(s: f64) -> Self {
        if s < -0.2 {
            StanceBucket::Disagree
        } else if s > 0.2 {
            StanceBucket::Agree
        } else {
            StanceBucket::Neutral
        }
    }
}

/// What a post generator may know about the author.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub stance: StanceBucket,
    /// Index of the strongest affect component.
    pub dominant_emotion: usize,
    /// Signed value of that component.
    pub intensity: f64,
}

impl StateSummary {
    pub fn new(alignment: f64, affect: &[f64]) -> Self {
        let (dominant_emotion, intensity) =
            affect.iter().copied().enumerate().fold(
                (0, 0.0f64),
                |best, (k, v)| if v.abs() > best.1.abs() { (k, v) } else { best },
            );
        Self {
            stance: StanceBucket::from_alignment(alignment),
            dominant_emotion,
            intensity,
        }
    }
}

pub trait TextProvider: Send + Sync {
    /// Unit-norm content embedding of dimension `dims().0`.
    fn embed(&self, text: &str) -> Result<Vec<f64>>;

    /// Emotion vector of dimension `dims().1` with components in [-1, 1].
    fn emote(&self, text: &str) -> Result<Vec<f64>>;

    fn generate_post(&self, profile: &AgentProfile, summary: &StateSummary, msg: &Message) -> Result<String>;

    /// `(embedding_dim, emotion_dim)`.
    fn dims(&self) -> (usize, usize);
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    DeterministicLocal,
    ExternalHttp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    #[serde(default)]
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retry_budget: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_path: Option<PathBuf>,
    /// Hashing seed of the local embedder.
    #[serde(default)]
    pub seed: u64,
}

fn default_timeout_ms() -> u64 {
    10_000
}

impl Default for ProviderSpec {
    fn default() -> Self {
        Self {
            kind: ProviderKind::DeterministicLocal,
            endpoint: None,
            timeout_ms: default_timeout_ms(),
            retry_budget: 0,
            cache_path: None,
            seed: 0,
        }
    }
}

impl ProviderSpec {
    pub fn local() -> Self {
        Self::default()
    }

    pub fn http(endpoint: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::ExternalHttp,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    /// Parses the command-line form: `local`, or an `http(s)://` endpoint.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "local" || s == "deterministic_local" {
            Ok(Self::local())
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(Self::http(s))
        } else {
            Err(Error::config(format!(
                "unrecognized provider {s:?}; use `local` or an http:// endpoint"
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ProviderKind::ExternalHttp && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(Error::config("external_http provider requires an endpoint"));
        }
        Ok(())
    }

    /// Instantiates the provider for the given dimensions.
    pub fn build(&self, dim: usize, emotion_dim: usize) -> Result<Arc<dyn TextProvider>> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::DeterministicLocal => Arc::new(LocalProvider::new(dim, emotion_dim, self.seed)),
            ProviderKind::ExternalHttp => Arc::new(HttpProvider::new(self, dim, emotion_dim)?),
        })
    }
}

pub(crate) fn require_text(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        return Err(Error::provider("empty input text"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        assert_eq!(
            ProviderSpec::parse("local").unwrap().kind,
            ProviderKind::DeterministicLocal
        );
        let h = ProviderSpec::parse("http://127.0.0.1:9000").unwrap();
        assert_eq!(h.kind, ProviderKind::ExternalHttp);
        assert!(ProviderSpec::parse("ftp://x").is_err());
        let bad = ProviderSpec {
            kind: ProviderKind::ExternalHttp,
            ..ProviderSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn summary_picks_strongest_component() {
        let s = StateSummary::new(0.5, &[0.1, -0.7, 0.3]);
        assert_eq!(s.stance, StanceBucket::Agree);
        assert_eq!(s.dominant_emotion, 1);
        assert_eq!(s.intensity, -0.7);
    }
}
