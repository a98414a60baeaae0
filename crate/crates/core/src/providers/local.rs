use sha2::{Digest, Sha256};

use super::lexicon::{self, EMOTIONS};
use super::{require_text, StanceBucket, StateSummary, TextProvider};
use crate::error::{Error, Result};
use crate::network::AgentProfile;
use crate::state::Message;
use crate::vector::normalized;

/// Signed feature-hashing embedder plus lexicon emotion scorer and template
/// post writer. Needs no model files and no network.
#[derive(Clone, Debug)]
pub struct LocalProvider {
    dim: usize,
    emotion_dim: usize,
    seed: u64,
}

impl LocalProvider {
    pub fn new(dim: usize, emotion_dim: usize, seed: u64) -> Self {
        Self {
            dim: dim.max(1),
            emotion_dim: emotion_dim.max(1),
            seed,
        }
    }

    fn bucket(&self, token: &str) -> (usize, f64) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let out = h.finalize();
        let word = u64::from_le_bytes(out[..8].try_into().expect("8 bytes"));
        let sign = if out[8] & 1 == 0 { 1.0 } else { -1.0 };
        ((word % self.dim as u64) as usize, sign)
    }
}

/// Lowercased alphanumeric runs.
pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl TextProvider for LocalProvider {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        require_text(text)?;
        let mut v = vec![0.0; self.dim];
        for tok in tokens(text) {
            let (k, sign) = self.bucket(&tok);
            v[k] += sign;
        }
        normalized(&v, 1e-12).ok_or_else(|| Error::provider(format!("text {text:?} hashes to the zero vector")))
    }

    fn emote(&self, text: &str) -> Result<Vec<f64>> {
        require_text(text)?;
        let mut acc = vec![0.0; self.emotion_dim];
        let mut hits = 0usize;
        for tok in tokens(text) {
            if let Some(loads) = lexicon::lookup(&tok) {
                hits += 1;
                for &(k, v) in loads {
                    acc[k % self.emotion_dim] += v;
                }
            }
        }
        if hits > 0 {
            for a in &mut acc {
                *a = (*a / hits as f64).clamp(-1.0, 1.0);
            }
        }
        Ok(acc)
    }

    fn generate_post(&self, profile: &AgentProfile, summary: &StateSummary, msg: &Message) -> Result<String> {
        let stance = match summary.stance {
            StanceBucket::Agree => "I'm with this",
            StanceBucket::Neutral => "Not sure what to make of this",
            StanceBucket::Disagree => "Hard disagree",
        };
        let feeling = if summary.intensity.abs() < 0.1 {
            "calm"
        } else {
            let name = EMOTIONS[summary.dominant_emotion % EMOTIONS.len()];
            if summary.intensity < 0.0 {
                match name {
                    "trust" => "distrust",
                    "joy" => "gloom",
                    "fear" => "unafraid",
                    _ => "subdued",
                }
            } else {
                name
            }
        };
        let voice = if profile.persona_seed.is_empty() {
            profile.agent_id.as_str()
        } else {
            profile.persona_seed.as_str()
        };
        let about = msg
            .text
            .as_deref()
            .map(|t| t.split_whitespace().take(8).collect::<Vec<_>>().join(" "))
            .filter(|t| !t.is_empty())
            .unwrap_or_else(|| format!("post {}", msg.id));
        Ok(format!("[{voice}] {stance} ({feeling}): re \"{about}\""))
    }

    fn dims(&self) -> (usize, usize) {
        (self.dim, self.emotion_dim)
    }
}
