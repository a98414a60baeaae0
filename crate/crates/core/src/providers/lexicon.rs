//! Bundled word → emotion table over eight basic emotions.

pub const EMOTIONS: [&str; 8] = [
    "anger",
    "anticipation",
    "disgust",
    "fear",
    "joy",
    "sadness",
    "surprise",
    "trust",
];

const ANGER: usize = 0;
const ANTICIPATION: usize = 1;
const DISGUST: usize = 2;
const FEAR: usize = 3;
const JOY: usize = 4;
const SADNESS: usize = 5;
const SURPRISE: usize = 6;
const TRUST: usize = 7;

type Entry = (&'static str, &'static [(usize, f64)]);

// sorted by word for binary search
const TABLE: &[Entry] = &[
    ("accountable", &[(TRUST, 0.6), (ANTICIPATION, 0.2)]),
    ("angry", &[(ANGER, 0.9)]),
    ("apologize", &[(TRUST, 0.5), (SADNESS, 0.3)]),
    ("apology", &[(TRUST, 0.5), (SADNESS, 0.3)]),
    ("awful", &[(DISGUST, 0.7), (SADNESS, 0.4)]),
    ("ban", &[(ANGER, 0.5), (FEAR, 0.3)]),
    ("betrayal", &[(ANGER, 0.8), (TRUST, -0.9), (SADNESS, 0.5)]),
    ("betrayed", &[(ANGER, 0.8), (TRUST, -0.9), (SADNESS, 0.5)]),
    ("boycott", &[(ANGER, 0.8), (DISGUST, 0.5), (TRUST, -0.6)]),
    ("calm", &[(FEAR, -0.5), (TRUST, 0.4)]),
    ("care", &[(TRUST, 0.5), (JOY, 0.3)]),
    ("celebrate", &[(JOY, 0.9), (ANTICIPATION, 0.4)]),
    ("commit", &[(TRUST, 0.5), (ANTICIPATION, 0.4)]),
    ("compensation", &[(TRUST, 0.5), (ANTICIPATION, 0.4), (JOY, 0.2)]),
    ("concern", &[(FEAR, 0.5), (ANTICIPATION, 0.3)]),
    ("cover", &[(DISGUST, 0.3), (TRUST, -0.4)]),
    ("crisis", &[(FEAR, 0.7), (SURPRISE, 0.3)]),
    ("danger", &[(FEAR, 0.9)]),
    ("disappointed", &[(SADNESS, 0.7), (ANGER, 0.3), (TRUST, -0.3)]),
    ("disgusting", &[(DISGUST, 1.0), (ANGER, 0.5)]),
    ("fix", &[(TRUST, 0.4), (ANTICIPATION, 0.4)]),
    ("fraud", &[(ANGER, 0.7), (DISGUST, 0.7), (TRUST, -1.0)]),
    ("furious", &[(ANGER, 1.0)]),
    ("glad", &[(JOY, 0.8)]),
    ("great", &[(JOY, 0.7), (TRUST, 0.3)]),
    ("happy", &[(JOY, 0.9)]),
    ("hate", &[(ANGER, 0.9), (DISGUST, 0.6)]),
    ("hope", &[(ANTICIPATION, 0.7), (JOY, 0.4)]),
    ("investigate", &[(ANTICIPATION, 0.5), (TRUST, 0.2)]),
    ("investigation", &[(ANTICIPATION, 0.5), (FEAR, 0.2)]),
    ("lawsuit", &[(ANGER, 0.4), (FEAR, 0.5)]),
    ("liar", &[(ANGER, 0.8), (DISGUST, 0.6), (TRUST, -1.0)]),
    ("lie", &[(ANGER, 0.6), (TRUST, -0.8)]),
    ("lies", &[(ANGER, 0.6), (TRUST, -0.8)]),
    ("love", &[(JOY, 1.0), (TRUST, 0.6)]),
    ("outrage", &[(ANGER, 1.0), (DISGUST, 0.6), (SURPRISE, 0.3)]),
    ("outraged", &[(ANGER, 1.0), (DISGUST, 0.6)]),
    ("panic", &[(FEAR, 1.0), (SURPRISE, 0.4)]),
    ("promise", &[(TRUST, 0.6), (ANTICIPATION, 0.5)]),
    ("proud", &[(JOY, 0.8), (TRUST, 0.4)]),
    ("recall", &[(FEAR, 0.5), (SURPRISE, 0.4), (TRUST, -0.2)]),
    ("refund", &[(TRUST, 0.4), (JOY, 0.3)]),
    ("regret", &[(SADNESS, 0.7)]),
    ("resign", &[(SURPRISE, 0.5), (ANTICIPATION, 0.3)]),
    ("responsible", &[(TRUST, 0.6)]),
    ("risk", &[(FEAR, 0.6), (ANTICIPATION, 0.3)]),
    ("sad", &[(SADNESS, 0.9)]),
    ("safe", &[(TRUST, 0.7), (FEAR, -0.6)]),
    ("scam", &[(ANGER, 0.7), (DISGUST, 0.8), (TRUST, -1.0)]),
    ("scandal", &[(DISGUST, 0.7), (SURPRISE, 0.5), (ANGER, 0.5)]),
    ("scary", &[(FEAR, 0.9)]),
    ("shame", &[(DISGUST, 0.6), (SADNESS, 0.5)]),
    ("shameful", &[(DISGUST, 0.8), (ANGER, 0.5)]),
    ("shocked", &[(SURPRISE, 1.0), (FEAR, 0.3)]),
    ("shocking", &[(SURPRISE, 1.0), (DISGUST, 0.4)]),
    ("sorry", &[(SADNESS, 0.6), (TRUST, 0.3)]),
    ("sudden", &[(SURPRISE, 0.8)]),
    ("support", &[(TRUST, 0.7), (JOY, 0.3)]),
    ("thank", &[(JOY, 0.7), (TRUST, 0.6)]),
    ("thanks", &[(JOY, 0.7), (TRUST, 0.6)]),
    ("toxic", &[(DISGUST, 0.9), (FEAR, 0.4)]),
    ("transparent", &[(TRUST, 0.8)]),
    ("trust", &[(TRUST, 1.0)]),
    ("unacceptable", &[(ANGER, 0.8), (DISGUST, 0.5)]),
    ("unsafe", &[(FEAR, 0.8), (TRUST, -0.6)]),
    ("upset", &[(ANGER, 0.6), (SADNESS, 0.5)]),
    ("victims", &[(SADNESS, 0.8), (FEAR, 0.4)]),
    ("wait", &[(ANTICIPATION, 0.6)]),
    ("worried", &[(FEAR, 0.8), (SADNESS, 0.3)]),
    ("wow", &[(SURPRISE, 0.9)]),
];

/// Emotion loadings of a lowercase token, if listed.
pub fn lookup(token: &str) -> Option<&'static [(usize, f64)]> {
    TABLE.binary_search_by(|(w, _)| w.cmp(&token)).ok().map(|k| TABLE[k].1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_sorted_and_bounded() {
        for pair in TABLE.windows(2) {
            assert!(pair[0].0 < pair[1].0, "{} >= {}", pair[0].0, pair[1].0);
        }
        for (_, loads) in TABLE {
            for &(k, v) in *loads {
                assert!(k < EMOTIONS.len());
                assert!((-1.0..=1.0).contains(&v));
            }
        }
        assert!(lookup("outrage").is_some());
        assert!(lookup("table").is_none());
    }
}
