//! Audio–text matcher and language-model interfaces with two concrete
//! implementations each: deterministic toys and file-fed fixtures.

use std::collections::HashMap;

use parking_lot::RwLock;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::Embedding;
use crate::error::Result;
use crate::token::{canonicalize, is_punct_surface, word_tokenize, Token};

pub mod fixture;
pub mod toy;

pub use fixture::{load_fixtures, FixtureLm, FixtureMatcher, LmFixture};
pub use toy::{toy_lm, toy_matcher, ToyLm, ToyMatcher};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// CLIP-style dual encoder mapping clips and text into one space.
pub trait AudioTextMatcher: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_audio(&self, clip: &str) -> Result<Embedding>;
    /// Must be deterministic: equal text yields an identical vector.
    fn embed_text(&self, text: &str) -> Result<Embedding>;
}

/// Auto-regressive next-token model.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<Token>>;
    fn decode(&self, tokens: &[Token]) -> String;
    /// At most `k` entries from one proper distribution over the vocabulary,
    /// sorted by probability descending, ties by ascending token id.
    fn top_k_next(&self, prefix: &[Token], k: usize) -> Result<Vec<(Token, f64)>>;
    /// The model's end-of-sequence token, if it has one.
    fn eos(&self) -> Option<&Token>;
}

impl<M: AudioTextMatcher + ?Sized> AudioTextMatcher for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed_audio(&self, clip: &str) -> Result<Embedding> {
        (**self).embed_audio(clip)
    }
    fn embed_text(&self, text: &str) -> Result<Embedding> {
        (**self).embed_text(text)
    }
}

impl<M: AudioTextMatcher + ?Sized> AudioTextMatcher for std::sync::Arc<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed_audio(&self, clip: &str) -> Result<Embedding> {
        (**self).embed_audio(clip)
    }
    fn embed_text(&self, text: &str) -> Result<Embedding> {
        (**self).embed_text(text)
    }
}

impl<L: LanguageModel + ?Sized> LanguageModel for std::sync::Arc<L> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn encode(&self, text: &str) -> Result<Vec<Token>> {
        (**self).encode(text)
    }
    fn decode(&self, tokens: &[Token]) -> String {
        (**self).decode(tokens)
    }
    fn top_k_next(&self, prefix: &[Token], k: usize) -> Result<Vec<(Token, f64)>> {
        (**self).top_k_next(prefix, k)
    }
    fn eos(&self) -> Option<&Token> {
        (**self).eos()
    }
}

/// Memoizes `embed_text` under the canonical form of the text.
///
/// Decoding embeds many near-identical prefixes; the cache is shared
/// across concurrent decodes and only ever inserts if absent.
pub struct CachedMatcher<M> {
    inner: M,
    cache: RwLock<HashMap<String, Embedding>>,
}

impl<M: AudioTextMatcher> CachedMatcher<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().len()
    }
}

impl<M: AudioTextMatcher> AudioTextMatcher for CachedMatcher<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_audio(&self, clip: &str) -> Result<Embedding> {
        self.inner.embed_audio(clip)
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        let key = canonicalize(text);
        if let Some(e) = self.cache.read().get(&key) {
            return Ok(e.clone());
        }
        let e = self.inner.embed_text(&key)?;
        Ok(self.cache.write().entry(key).or_insert(e).clone())
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Unit vector drawn from a seeded Gaussian keyed on `key`.
pub(crate) fn hashed_unit_vector(seed: u64, dim: usize, key: &str) -> Embedding {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, key.as_bytes()));
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return Embedding::new(v.into_iter().map(|x| x / norm).collect())
                .expect("finite gaussian sample");
        }
    }
}

/// The seeded-hash text embedding used by the toy matcher and as the
/// fixture matcher's fallback for unseen text.
///
/// Each word of the canonical text maps to its own pseudo-random unit
/// vector, and the text embedding is their normalized sum. Punctuation is
/// ignored unless the text has nothing else. Texts sharing words
/// therefore land near each other, and identical texts coincide.
pub fn hashed_text_embedding(seed: u64, dim: usize, text: &str) -> Embedding {
    let canon = canonicalize(text);
    let mut acc = vec![0.0; dim];
    let mut words = 0usize;
    for word in word_tokenize(&canon).iter().filter(|w| !is_punct_surface(w)) {
        let v = hashed_unit_vector(seed, dim, word);
        for (a, x) in acc.iter_mut().zip(v.values()) {
            *a += x;
        }
        words += 1;
    }
    if words == 0 {
        return hashed_unit_vector(seed, dim, &canon);
    }
    match Embedding::new(acc).and_then(|e| e.normalized()) {
        Ok(e) => e,
        // Words cancelled out exactly; fall back to hashing the whole text.
        Err(_) => hashed_unit_vector(seed, dim, &canon),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine_similarity;
    use std::sync::Arc;

    #[test]
    fn hashed_embedding_is_deterministic_and_canonical() {
        let a = hashed_text_embedding(3, 16, "Dog  barking");
        let b = hashed_text_embedding(3, 16, "dog barking");
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(hashed_text_embedding(3, 16, "").dim(), 16);
    }

    #[test]
    fn shared_words_increase_similarity() {
        let full = hashed_text_embedding(1, 256, "dog barking");
        let half = hashed_text_embedding(1, 256, "dog");
        let other = hashed_text_embedding(1, 256, "rain");
        let s_half = cosine_similarity(&full, &half).unwrap();
        let s_other = cosine_similarity(&full, &other).unwrap();
        assert!(s_half > 0.5, "{s_half}");
        assert!(s_other.abs() < 0.3, "{s_other}");
    }

    #[test]
    fn cache_is_safe_under_concurrent_inserts() {
        let m = Arc::new(CachedMatcher::new(toy_matcher(5, 32)));
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let m = Arc::clone(&m);
                std::thread::spawn(move || {
                    (0..50)
                        .map(|i| m.embed_text(&format!("word{} x{}", i % 10, t % 2)).unwrap())
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(m.cached_len(), 20);
        for (t, r) in results.iter().enumerate() {
            for (i, e) in r.iter().enumerate() {
                let direct = m.inner().embed_text(&format!("word{} x{}", i % 10, t % 2)).unwrap();
                assert_eq!(e, &direct);
            }
        }
    }
}
