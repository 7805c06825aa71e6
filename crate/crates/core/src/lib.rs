//! Zero-shot audio captioning: keyword-prompted language-model decoding
//! guided by an audio–text matcher.
//!
//! The pipeline for one clip:
//!
//! 1. embed the clip and every keyword, keep the `l` most similar keywords;
//! 2. build a prompt of the form `Objects: k1, k2. This is a sound of`;
//! 3. decode auto-regressively, scoring each of the language model's top-k
//!    candidates by model confidence, a degeneration penalty, and the
//!    softmax-normalized audio similarity of the extended caption;
//! 4. stop on a sentence terminator (penalized early on) or the length cap.
//!
//! Backends are traits ([`AudioTextMatcher`], [`LanguageModel`]) with toy
//! and file-fed implementations; [`metrics`] and [`harness`] cover
//! evaluation and ablation grids.

pub mod backends;
pub mod decoder;
pub mod demo;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod keywords;
pub mod metrics;
pub mod prompt;
pub mod token;

pub use backends::{AudioTextMatcher, CachedMatcher, LanguageModel};
pub use decoder::{decode, decode_greedy, score_candidates, CaptionResult, DecodeConfig, DecodeState};
pub use embedding::{cosine_similarity, softmax, Embedding};
pub use error::{Error, Result};
pub use keywords::{load_keywords, merge_keyword_lists, select_keywords, KeywordList, KeywordMatch};
pub use metrics::{MetricReport, ReferenceSet};
pub use prompt::{build_prompt, PromptTemplate};
pub use token::{ScoredCandidate, Token};
