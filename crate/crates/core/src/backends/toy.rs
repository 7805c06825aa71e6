//! Deterministic test-double backends.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{hashed_text_embedding, AudioTextMatcher, LanguageModel, BOS, EOS, UNK};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::token::{is_punct_surface, join_words, word_tokenize, Token};

/// Matcher whose text space is seeded hashing and whose "audio" is the
/// embedding of each clip's registered true description.
#[derive(Debug, Clone)]
pub struct ToyMatcher {
    seed: u64,
    dim: usize,
    noise: f64,
    clips: HashMap<String, String>,
}

pub fn toy_matcher(seed: u64, dim: usize) -> ToyMatcher {
    ToyMatcher::try_new(seed, dim).expect("toy matcher needs dim >= 2")
}

impl ToyMatcher {
    pub fn try_new(seed: u64, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(format!("toy matcher dim must be >= 2, got {dim}")));
        }
        Ok(Self {
            seed,
            dim,
            noise: 0.0,
            clips: HashMap::new(),
        })
    }

    /// Per-coordinate uniform noise in `[-noise, noise]` added to audio
    /// embeddings; zero by default.
    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise.abs();
        self
    }

    pub fn with_clip(mut self, clip_id: impl Into<String>, description: impl Into<String>) -> Self {
        self.register_clip(clip_id, description);
        self
    }

    pub fn register_clip(&mut self, clip_id: impl Into<String>, description: impl Into<String>) {
        self.clips.insert(clip_id.into(), description.into());
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn description(&self, clip_id: &str) -> Option<&str> {
        self.clips.get(clip_id).map(String::as_str)
    }
}

impl AudioTextMatcher for ToyMatcher {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_audio(&self, clip: &str) -> Result<Embedding> {
        let description = self
            .clips
            .get(clip)
            .ok_or_else(|| Error::UnknownClip(clip.to_string()))?;
        let base = hashed_text_embedding(self.seed, self.dim, description);
        if self.noise == 0.0 {
            return Ok(base);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(super::fnv1a(self.seed ^ 0xa0d1_0000, clip.as_bytes()));
        let values = base
            .values()
            .iter()
            .map(|v| v + rng.random_range(-self.noise..=self.noise))
            .collect();
        Embedding::new(values)
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        Ok(hashed_text_embedding(self.seed, self.dim, text))
    }
}

/// Word-level n-gram model with add-one smoothing.
///
/// The predictable vocabulary is every corpus word plus `<eos>`; `<bos>`
/// pads histories and `<unk>` stands in for out-of-vocabulary prefix words.
/// Neither is ever predicted.
///
/// An optional prompt cache interpolates the n-gram estimate with the
/// relative frequency of each content word in the whole prefix, letting
/// words that appear anywhere in the prompt (such as selected keywords)
/// lift their own probability beyond the n-gram window. Punctuation and
/// words found in more than half of the training sentences are not cached.
#[derive(Debug, Clone)]
pub struct ToyLm {
    order: usize,
    vocab: Vec<Token>,
    index: HashMap<String, u32>,
    predictable: Vec<u32>,
    counts: HashMap<Vec<u32>, HashMap<u32, u64>>,
    totals: HashMap<Vec<u32>, u64>,
    cache_weight: f64,
    uncached: HashSet<u32>,
}

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

pub fn toy_lm<S: AsRef<str>>(corpus: &[S], order: usize) -> Result<ToyLm> {
    ToyLm::train(corpus, order)
}

impl ToyLm {
    pub fn train<S: AsRef<str>>(corpus: &[S], order: usize) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidConfig(format!("n-gram order must be 1..=3, got {order}")));
        }
        let sentences: Vec<Vec<String>> = corpus
            .iter()
            .map(|s| word_tokenize(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        if sentences.is_empty() {
            return Err(Error::EmptyInput("language model corpus"));
        }

        let mut vocab = vec![Token::new(BOS_ID, BOS), Token::new(EOS_ID, EOS), Token::new(UNK_ID, UNK)];
        let mut index: HashMap<String, u32> =
            vocab.iter().map(|t| (t.surface.clone(), t.id)).collect();
        for word in sentences.iter().flatten() {
            if !index.contains_key(word) {
                let id = vocab.len() as u32;
                index.insert(word.clone(), id);
                vocab.push(Token::new(id, word.clone()));
            }
        }
        let predictable = vocab
            .iter()
            .map(|t| t.id)
            .filter(|&id| id != BOS_ID && id != UNK_ID)
            .collect();

        let mut sentence_freq: HashMap<u32, usize> = HashMap::new();
        for sentence in &sentences {
            let distinct: HashSet<u32> = sentence.iter().map(|w| index[w]).collect();
            for id in distinct {
                *sentence_freq.entry(id).or_default() += 1;
            }
        }
        let uncached = vocab
            .iter()
            .filter(|t| {
                is_punct_surface(&t.surface)
                    || 2 * sentence_freq.get(&t.id).copied().unwrap_or(0) > sentences.len()
            })
            .map(|t| t.id)
            .chain([BOS_ID, EOS_ID, UNK_ID])
            .collect();

        let mut counts: HashMap<Vec<u32>, HashMap<u32, u64>> = HashMap::new();
        let mut totals: HashMap<Vec<u32>, u64> = HashMap::new();
        for sentence in &sentences {
            let mut ids = vec![BOS_ID; order - 1];
            ids.extend(sentence.iter().map(|w| index[w]));
            ids.push(EOS_ID);
            for window in ids.windows(order) {
                let (history, next) = window.split_at(order - 1);
                *counts.entry(history.to_vec()).or_default().entry(next[0]).or_default() += 1;
                *totals.entry(history.to_vec()).or_default() += 1;
            }
        }

        Ok(Self {
            order,
            vocab,
            index,
            predictable,
            counts,
            totals,
            cache_weight: 0.0,
            uncached,
        })
    }

    /// Interpolation weight `λ ∈ [0, 1)` of the prompt cache.
    pub fn with_prompt_cache(mut self, weight: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&weight) {
            return Err(Error::InvalidConfig(format!("cache weight must be in [0, 1), got {weight}")));
        }
        self.cache_weight = weight;
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn cache_weight(&self) -> f64 {
        self.cache_weight
    }

    pub fn vocab(&self) -> &[Token] {
        &self.vocab
    }

    fn id_of(&self, surface: &str) -> u32 {
        self.index.get(surface).copied().unwrap_or(UNK_ID)
    }

    fn history(&self, prefix_ids: &[u32]) -> Vec<u32> {
        let n = self.order - 1;
        let mut padded = vec![BOS_ID; n.saturating_sub(prefix_ids.len())];
        padded.extend_from_slice(&prefix_ids[prefix_ids.len().saturating_sub(n)..]);
        padded
    }

    /// Smoothed n-gram probability of every predictable token, ignoring
    /// the cache.
    fn ngram_row(&self, history: &[u32]) -> Vec<(u32, f64)> {
        let v = self.predictable.len() as f64;
        let total = self.totals.get(history).copied().unwrap_or(0) as f64;
        let row = self.counts.get(history);
        self.predictable
            .iter()
            .map(|&id| {
                let c = row.and_then(|r| r.get(&id)).copied().unwrap_or(0) as f64;
                (id, (c + 1.0) / (total + v))
            })
            .collect()
    }

    /// Full next-token distribution over the predictable vocabulary.
    pub fn distribution(&self, prefix: &[Token]) -> Vec<(Token, f64)> {
        let ids: Vec<u32> = prefix.iter().map(|t| self.id_of(&t.surface)).collect();
        let mut row = self.ngram_row(&self.history(&ids));
        if self.cache_weight > 0.0 {
            let mut cache: HashMap<u32, f64> = HashMap::new();
            for &id in ids.iter().filter(|id| !self.uncached.contains(id)) {
                *cache.entry(id).or_default() += 1.0;
            }
            let n: f64 = cache.values().sum();
            if n > 0.0 {
                let lambda = self.cache_weight;
                for (id, p) in row.iter_mut() {
                    let c = cache.get(id).copied().unwrap_or(0.0) / n;
                    *p = (1.0 - lambda) * *p + lambda * c;
                }
            }
        }
        row.into_iter()
            .map(|(id, p)| (self.vocab[id as usize].clone(), p))
            .collect()
    }

    /// Every observed history's full smoothed row, plus the empty-history
    /// fallback row, keyed by space-joined surfaces. Cache is not included.
    pub fn export_tables(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        let surface_row = |row: Vec<(u32, f64)>| {
            row.into_iter()
                .map(|(id, p)| (self.vocab[id as usize].surface.clone(), p))
                .collect::<BTreeMap<_, _>>()
        };
        let mut tables = BTreeMap::new();
        for history in self.counts.keys() {
            let key = history
                .iter()
                .map(|&id| self.vocab[id as usize].surface.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            tables.insert(key, surface_row(self.ngram_row(history)));
        }
        // Unseen histories fall back to add-one over zero counts: uniform.
        tables
            .entry(String::new())
            .or_insert_with(|| surface_row(self.ngram_row(&[])));
        tables
    }
}

impl LanguageModel for ToyLm {
    fn vocab_size(&self) -> usize {
        self.predictable.len()
    }

    fn encode(&self, text: &str) -> Result<Vec<Token>> {
        Ok(word_tokenize(text)
            .iter()
            .map(|w| self.vocab[self.id_of(w) as usize].clone())
            .collect())
    }

    fn decode(&self, tokens: &[Token]) -> String {
        join_words(
            tokens
                .iter()
                .filter(|t| t.surface != BOS && t.surface != EOS)
                .map(|t| t.surface.as_str()),
        )
    }

    fn top_k_next(&self, prefix: &[Token], k: usize) -> Result<Vec<(Token, f64)>> {
        let mut dist = self.distribution(prefix);
        sort_by_probability(&mut dist);
        dist.truncate(k);
        Ok(dist)
    }

    fn eos(&self) -> Option<&Token> {
        Some(&self.vocab[EOS_ID as usize])
    }
}

/// Descending probability, ascending token id on ties.
pub(crate) fn sort_by_probability(dist: &mut [(Token, f64)]) {
    dist.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.id.cmp(&b.0.id)));
}
