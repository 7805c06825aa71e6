//! Token records and the text normalization shared by backends, keyword
//! handling and caching.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub id: u32,
    pub surface: String,
}

impl Token {
    pub fn new(id: u32, surface: impl Into<String>) -> Self {
        Self {
            id,
            surface: surface.into(),
        }
    }
}

/// One candidate's score breakdown at a decode step.
///
/// `final_score` is `w_confidence·confidence − w_degeneration·degeneration +
/// w_magic·magic`, minus the end penalty when the token terminates the
/// sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub token: Token,
    /// Raw probability reported by the language model.
    pub probability: f64,
    /// Probability renormalized over the step's candidates.
    pub confidence: f64,
    pub degeneration: f64,
    /// Raw cosine between the candidate-extended text and the audio.
    pub audio_similarity: f64,
    pub magic: f64,
    pub end_penalty: f64,
    #[serde(rename = "final")]
    pub final_score: f64,
}

/// Lowercase, trim and collapse inner whitespace runs to one space.
pub fn canonicalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

const SPLIT_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')'];

pub(crate) fn is_punct_surface(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| SPLIT_PUNCT.contains(&c))
}

/// Word-level tokenization: canonicalize, then peel leading and trailing
/// punctuation off each whitespace-separated word into its own token.
pub fn word_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in canonicalize(text).split(' ').filter(|w| !w.is_empty()) {
        let mut core = word;
        let mut lead = Vec::new();
        while let Some(c) = core.chars().next().filter(|c| SPLIT_PUNCT.contains(c)) {
            lead.push(c.to_string());
            core = &core[c.len_utf8()..];
        }
        let mut trail = Vec::new();
        while let Some(c) = core.chars().last().filter(|c| SPLIT_PUNCT.contains(c)) {
            trail.push(c.to_string());
            core = &core[..core.len() - c.len_utf8()];
        }
        out.extend(lead);
        if !core.is_empty() {
            out.push(core.to_string());
        }
        out.extend(trail.into_iter().rev());
    }
    out
}

/// Inverse of [`word_tokenize`] for canonical text: words are joined by a
/// single space and punctuation attaches to the preceding word.
pub fn join_words<'a>(surfaces: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for s in surfaces {
        if s.is_empty() {
            continue;
        }
        if !out.is_empty() && !is_punct_surface(s) {
            out.push(' ');
        }
        out.push_str(s);
    }
    out
}
