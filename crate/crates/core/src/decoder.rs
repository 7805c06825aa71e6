//! Audio-guided auto-regressive decoding.
//!
//! Each step asks the language model for its top-k next tokens and scores
//! every candidate `c` as
//!
//! ```text
//! final(c) = w_confidence · confidence(c)
//!          − w_degeneration · degeneration(c)
//!          + w_magic · magic(c)
//!          − [c ends the sentence] · w_end / (1 + generated)
//! ```
//!
//! where `confidence` is the LM probability renormalized over the k
//! candidates, `degeneration` is the largest cosine similarity between the
//! candidate token and any token generated so far, and `magic` is the
//! softmax over candidates of `tau · cos(text(generated ⊕ c), audio)`.
//! The highest score wins; ties go to the lowest token id.

use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::backends::{AudioTextMatcher, LanguageModel};
use crate::embedding::{cosine_similarity, softmax, Embedding};
use crate::error::{Error, Result};
use crate::keywords::{select_keywords_with_template, KeywordList, KeywordMatch};
use crate::prompt::{build_prompt, PromptTemplate};
use crate::token::{ScoredCandidate, Token};

/// Temperature used by the original image-guided MAGIC search.
pub const MAGIC_DEFAULT_TAU: f64 = 18.6612;
/// Temperature after tuning for the audio modality.
pub const TUNED_TAU: f64 = 10.0;
/// Candidate count per step.
pub const DEFAULT_K: usize = 45;

/// How the alignment term is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagicMode {
    /// Similarity between the candidate-extended caption and the audio.
    #[default]
    SequenceAudio,
    /// Literal token-pair form: largest similarity between the candidate
    /// token and a previously generated token, scaled by `tau`.
    TokenPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub k: usize,
    pub w_confidence: f64,
    pub w_degeneration: f64,
    pub w_magic: f64,
    pub tau: f64,
    pub w_end: f64,
    pub max_tokens: usize,
    pub end_tokens: BTreeSet<String>,
    /// Score the prompt together with the generated text in the alignment term.
    pub magic_includes_prompt: bool,
    pub magic_mode: MagicMode,
    /// Optional `{}` template applied to keywords before embedding them.
    pub keyword_embed_template: Option<String>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            w_confidence: 0.5,
            w_degeneration: 0.0,
            w_magic: 1.0,
            tau: TUNED_TAU,
            w_end: 1.0,
            max_tokens: 20,
            end_tokens: [".", "!", "?"].into_iter().map(String::from).collect(),
            magic_includes_prompt: false,
            magic_mode: MagicMode::SequenceAudio,
            keyword_embed_template: None,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidConfig("max_tokens must be >= 1".into()));
        }
        for (name, w) in [
            ("w_confidence", self.w_confidence),
            ("w_degeneration", self.w_degeneration),
            ("w_magic", self.w_magic),
            ("tau", self.tau),
            ("w_end", self.w_end),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }

    /// The audio-agnostic configuration: only model confidence is weighted.
    pub fn greedy(&self) -> Self {
        Self {
            w_degeneration: 0.0,
            w_magic: 0.0,
            w_end: 0.0,
            ..self.clone()
        }
    }
}

/// Premature-ending penalty after `generated` tokens: `1 / (1 + generated)`.
pub fn end_penalty(generated: usize) -> f64 {
    1.0 / (1.0 + generated as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub candidates: Vec<ScoredCandidate>,
    /// Index into `candidates` of the chosen token.
    pub selected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeState {
    pub prompt_tokens: Vec<Token>,
    pub generated: Vec<Token>,
    pub step_traces: Vec<StepTrace>,
    /// Set once a sentence-ending token is chosen.
    pub finished: bool,
}

impl DecodeState {
    pub fn new(prompt_tokens: Vec<Token>) -> Self {
        Self {
            prompt_tokens,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResult {
    pub clip_id: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub keywords_used: Vec<KeywordMatch>,
    pub prompt: String,
    pub trace: DecodeState,
}

/// Audio conditioning for one decode.
struct Guidance<'a> {
    matcher: &'a dyn AudioTextMatcher,
    audio: &'a Embedding,
}

fn is_end(token: &Token, lm: &dyn LanguageModel, cfg: &DecodeConfig) -> bool {
    cfg.end_tokens.contains(&token.surface) || lm.eos().is_some_and(|e| e.id == token.id)
}

/// Score one step's candidates. See the module docs for the formula.
pub fn score_candidates(
    state: &DecodeState,
    candidates: &[(Token, f64)],
    audio_emb: &Embedding,
    matcher: &dyn AudioTextMatcher,
    lm: &dyn LanguageModel,
    cfg: &DecodeConfig,
) -> Result<Vec<ScoredCandidate>> {
    let guidance = Guidance {
        matcher,
        audio: audio_emb,
    };
    score_step(state, candidates, Some(&guidance), lm, cfg)
}

fn score_step(
    state: &DecodeState,
    candidates: &[(Token, f64)],
    guidance: Option<&Guidance<'_>>,
    lm: &dyn LanguageModel,
    cfg: &DecodeConfig,
) -> Result<Vec<ScoredCandidate>> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("decode step candidates"));
    }
    let mass: f64 = candidates.iter().map(|(_, p)| p).sum();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidConfig(format!("candidate probabilities sum to {mass}")));
    }

    let n = candidates.len();
    let mut degeneration = vec![0.0; n];
    let mut raw_magic = vec![0.0; n];
    if let Some(g) = guidance {
        let previous: Vec<Embedding> = state
            .generated
            .iter()
            .map(|t| g.matcher.embed_text(&t.surface))
            .collect::<Result<_>>()?;
        let mut prefix: Vec<Token> = Vec::with_capacity(state.prompt_tokens.len() + state.generated.len() + 1);
        if cfg.magic_includes_prompt {
            prefix.extend_from_slice(&state.prompt_tokens);
        }
        prefix.extend_from_slice(&state.generated);

        for (i, (token, _)) in candidates.iter().enumerate() {
            let cand = g.matcher.embed_text(&token.surface)?;
            let mut max_sim = f64::NEG_INFINITY;
            for p in &previous {
                max_sim = max_sim.max(cosine_similarity(&cand, p)?);
            }
            degeneration[i] = if previous.is_empty() { 0.0 } else { max_sim };

            raw_magic[i] = match cfg.magic_mode {
                MagicMode::SequenceAudio => {
                    prefix.push(token.clone());
                    let text = lm.decode(&prefix);
                    prefix.pop();
                    cosine_similarity(&g.matcher.embed_text(&text)?, g.audio)?
                }
                MagicMode::TokenPair => degeneration[i],
            };
        }
    }
    let magic = softmax(&raw_magic.iter().map(|s| cfg.tau * s).collect::<Vec<_>>())?;
    let penalty = end_penalty(state.generated.len());

    Ok(candidates
        .iter()
        .enumerate()
        .map(|(i, (token, p))| {
            let confidence = p / mass;
            let end = if is_end(token, lm, cfg) { penalty } else { 0.0 };
            let final_score = cfg.w_confidence * confidence - cfg.w_degeneration * degeneration[i]
                + cfg.w_magic * magic[i]
                - cfg.w_end * end;
            ScoredCandidate {
                token: token.clone(),
                probability: *p,
                confidence,
                degeneration: degeneration[i],
                audio_similarity: raw_magic[i],
                magic: magic[i],
                end_penalty: end,
                final_score,
            }
        })
        .collect())
}

/// Index of the highest final score; ties go to the lowest token id.
pub fn select_candidate(scored: &[ScoredCandidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in scored.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &scored[b];
                if c.final_score > cur.final_score
                    || (c.final_score == cur.final_score && c.token.id < cur.token.id)
                {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

fn run_loop(
    lm: &dyn LanguageModel,
    prompt: &str,
    guidance: Option<&Guidance<'_>>,
    cfg: &DecodeConfig,
) -> Result<DecodeState> {
    cfg.validate()?;
    let mut state = DecodeState::new(lm.encode(prompt)?);
    let mut context = state.prompt_tokens.clone();
    while state.generated.len() < cfg.max_tokens {
        let candidates = lm.top_k_next(&context, cfg.k)?;
        let scored = score_step(&state, &candidates, guidance, lm, cfg)?;
        let selected = select_candidate(&scored).ok_or(Error::EmptyInput("decode step candidates"))?;
        let token = scored[selected].token.clone();
        let step = state.generated.len();
        let ends = is_end(&token, lm, cfg);
        if ends && step == 0 {
            warn!("first generated token `{}` ends the sentence", token.surface);
        }
        context.push(token.clone());
        state.generated.push(token);
        state.step_traces.push(StepTrace {
            step,
            candidates: scored,
            selected,
        });
        if ends {
            state.finished = true;
            break;
        }
    }
    Ok(state)
}

/// Cut `text` just after the first sentence-ending token.
pub fn truncate_at_end(text: &str, end_tokens: &BTreeSet<String>) -> String {
    end_tokens
        .iter()
        .filter(|e| !e.is_empty())
        .filter_map(|e| text.find(e.as_str()).map(|pos| pos + e.len()))
        .min()
        .map_or_else(|| text.to_string(), |cut| text[..cut].to_string())
}

fn finish(
    clip_id: &str,
    lm: &dyn LanguageModel,
    cfg: &DecodeConfig,
    prompt: String,
    keywords_used: Vec<KeywordMatch>,
    trace: DecodeState,
) -> CaptionResult {
    let mut tokens = Vec::with_capacity(trace.generated.len());
    for t in &trace.generated {
        tokens.push(t.clone());
        if !truncate_at_end(&lm.decode(&tokens), &cfg.end_tokens).eq(&lm.decode(&tokens)) {
            break;
        }
    }
    let text = truncate_at_end(&lm.decode(&tokens), &cfg.end_tokens);
    CaptionResult {
        clip_id: clip_id.to_string(),
        text,
        tokens,
        keywords_used,
        prompt,
        trace,
    }
}

/// Caption one clip: select `l` keywords, build the prompt, then run the
/// guided decode loop.
#[allow(clippy::too_many_arguments)]
pub fn decode(
    clip: &str,
    matcher: &dyn AudioTextMatcher,
    lm: &dyn LanguageModel,
    keywords: &KeywordList,
    template: &PromptTemplate,
    cfg: &DecodeConfig,
    l: usize,
) -> Result<CaptionResult> {
    cfg.validate()?;
    template.validate()?;
    let audio = matcher.embed_audio(clip)?;
    let keywords_used =
        select_keywords_with_template(matcher, clip, keywords, l, cfg.keyword_embed_template.as_deref())?;
    let prompt = build_prompt(template, &keywords_used);
    let guidance = Guidance {
        matcher,
        audio: &audio,
    };
    let trace = run_loop(lm, &prompt, Some(&guidance), cfg)?;
    Ok(finish(clip, lm, cfg, prompt, keywords_used, trace))
}

/// The audio-agnostic baseline: base prompt only, candidates ranked purely
/// by model confidence.
pub fn decode_greedy(
    clip: &str,
    lm: &dyn LanguageModel,
    template: &PromptTemplate,
    cfg: &DecodeConfig,
) -> Result<CaptionResult> {
    template.validate()?;
    let cfg = cfg.greedy();
    let prompt = build_prompt(template, &[]);
    let trace = run_loop(lm, &prompt, None, &cfg)?;
    Ok(finish(clip, lm, &cfg, prompt, Vec::new(), trace))
}
