//! Independent oracles and random instance builders shared by the
//! integration tests. Nothing here calls the scoring or metric code under
//! test; vector math and n-gram counting are re-done from scratch.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soundscribe::backends::{toy_matcher, ToyLm, ToyMatcher};
use soundscribe::{AudioTextMatcher, DecodeConfig, Embedding, LanguageModel, Token};

pub fn dot_cos(a: &Embedding, b: &Embedding) -> f64 {
    let (a, b) = (a.values(), b.values());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Brute-force step scoring: returns `(finals, chosen index)`.
pub fn eq5_oracle(
    prompt: &[Token],
    generated: &[Token],
    candidates: &[(Token, f64)],
    audio: &Embedding,
    matcher: &dyn AudioTextMatcher,
    lm: &dyn LanguageModel,
    cfg: &DecodeConfig,
) -> (Vec<f64>, usize) {
    let mass: f64 = candidates.iter().map(|c| c.1).sum();
    let mut sims = Vec::new();
    let mut degs = Vec::new();
    for (tok, _) in candidates {
        let e = matcher.embed_text(&tok.surface).unwrap();
        let mut deg = 0.0;
        for (j, g) in generated.iter().enumerate() {
            let s = dot_cos(&e, &matcher.embed_text(&g.surface).unwrap());
            deg = if j == 0 { s } else { f64::max(deg, s) };
        }
        degs.push(deg);
        let mut seq: Vec<Token> = if cfg.magic_includes_prompt { prompt.to_vec() } else { vec![] };
        seq.extend_from_slice(generated);
        seq.push(tok.clone());
        sims.push(dot_cos(&matcher.embed_text(&lm.decode(&seq)).unwrap(), audio));
    }
    let top = sims.iter().map(|s| cfg.tau * s).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = sims.iter().map(|s| (cfg.tau * s - top).exp()).collect();
    let z: f64 = exps.iter().sum();

    let mut finals = Vec::new();
    for (i, (tok, p)) in candidates.iter().enumerate() {
        let is_end = cfg.end_tokens.contains(&tok.surface) || lm.eos().map(|e| e.id) == Some(tok.id);
        let end = if is_end { 1.0 / (1.0 + generated.len() as f64) } else { 0.0 };
        finals.push(cfg.w_confidence * p / mass - cfg.w_degeneration * degs[i] + cfg.w_magic * exps[i] / z - cfg.w_end * end);
    }
    let mut best = 0;
    for i in 1..finals.len() {
        if finals[i] > finals[best] || (finals[i] == finals[best] && candidates[i].0.id < candidates[best].0.id) {
            best = i;
        }
    }
    (finals, best)
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn grams(t: &[String], n: usize) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for i in 0..t.len() {
        if i + n <= t.len() {
            *out.entry(t[i..i + n].join("\u{1}")).or_insert(0) += 1;
        }
    }
    out
}

/// Corpus BLEU-n by direct counting.
pub fn brute_bleu(pairs: &[(&str, Vec<&str>)], n: usize) -> f64 {
    let mut num = vec![0usize; n];
    let mut den = vec![0usize; n];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, refs) in pairs {
        let ct = words(cand);
        let rts: Vec<Vec<String>> = refs.iter().map(|x| words(x)).collect();
        for k in 1..=n {
            for (g, v) in grams(&ct, k) {
                let best = rts.iter().map(|rt| *grams(rt, k).get(&g).unwrap_or(&0)).max().unwrap();
                num[k - 1] += v.min(best);
                den[k - 1] += v;
            }
        }
        c += ct.len();
        let mut lens: Vec<usize> = rts.iter().map(Vec::len).collect();
        lens.sort();
        r += *lens.iter().min_by_key(|&&l| (l as i64 - ct.len() as i64).abs()).unwrap();
    }
    if c == 0 || num.contains(&0) {
        return 0.0;
    }
    let mut logs = 0.0;
    for k in 0..n {
        logs += (num[k] as f64 / den[k] as f64).ln();
    }
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (logs / n as f64).exp()
}

/// Twenty hand-built candidate/reference pairs.
pub fn twenty_pairs() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("the cat sat", vec!["the cat sat down"]),
        ("a dog barks", vec!["a dog barks", "the dog is barking"]),
        ("rain falls on a roof", vec!["rain falls on the roof", "heavy rain on a roof"]),
        ("a man speaks loudly", vec!["a man is speaking", "a man speaks"]),
        ("birds chirp in the trees", vec!["birds are chirping in trees", "the birds chirp"]),
        ("a car passes by", vec!["a car drives past", "a car passes by quickly"]),
        ("water flows in a stream", vec!["a stream of water flows", "water is flowing"]),
        ("a door slams shut", vec!["a door is slammed shut", "someone slams a door"]),
        ("the the the", vec!["the cat", "the dog on the mat"]),
        ("people talk and laugh", vec!["people are talking and laughing", "people talk"]),
        ("an engine idles", vec!["an engine is idling", "a motor idles"]),
        ("a bell rings twice", vec!["a bell rings", "a bell is ringing twice in the distance"]),
        ("wind blows hard", vec!["strong wind blows", "the wind blows hard outside"]),
        ("a baby cries", vec!["a baby is crying loudly", "an infant cries"]),
        ("thunder rumbles far away", vec!["thunder rumbles in the distance", "far away thunder"]),
        ("a siren wails", vec!["a siren is wailing", "an ambulance siren wails loudly"]),
        ("footsteps on gravel", vec!["someone walks on gravel", "footsteps crunch on gravel"]),
        ("a crowd applauds", vec!["a crowd is applauding", "applause from a crowd"]),
        ("typing on a keyboard", vec!["someone is typing on a keyboard", "keyboard typing"]),
        ("a helicopter flies overhead", vec!["a helicopter flies", "a helicopter is flying overhead"]),
    ]
}

/// Random toy world for step-level checks.
pub struct Instance {
    pub lm: ToyLm,
    pub matcher: ToyMatcher,
    pub clip: String,
    pub pool: Vec<String>,
    pub cfg: DecodeConfig,
}

pub const ENDS: [&str; 3] = [".", "!", "?"];

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_words = rng.random_range(3..40);
    let pool: Vec<String> = (0..n_words).map(|i| format!("w{i}")).collect();
    let mut corpus = Vec::new();
    for _ in 0..rng.random_range(5..40) {
        let len = rng.random_range(1..9);
        let mut s: Vec<String> = (0..len).map(|_| pool.choose(&mut rng).unwrap().clone()).collect();
        if rng.random_bool(0.8) {
            s.push(ENDS.choose(&mut rng).unwrap().to_string());
        }
        corpus.push(s.join(" "));
    }
    let order = rng.random_range(1..=3);
    let mut lm = ToyLm::train(&corpus, order).unwrap();
    if rng.random_bool(0.5) {
        lm = lm.with_prompt_cache(rng.random_range(0.0..0.5)).unwrap();
    }
    let desc: Vec<String> = (0..rng.random_range(1..6)).map(|_| pool.choose(&mut rng).unwrap().clone()).collect();
    let clip = desc.join(" ");
    let matcher = toy_matcher(rng.random(), rng.random_range(8..48)).with_clip(clip.clone(), clip.clone());
    let mut end_tokens: BTreeSet<String> = ENDS.iter().map(|s| s.to_string()).collect();
    if rng.random_bool(0.2) {
        end_tokens.remove(".");
    }
    let cfg = DecodeConfig {
        k: rng.random_range(1..=5),
        w_confidence: rng.random_range(0.0..2.0),
        w_degeneration: rng.random_range(0.0..1.0),
        w_magic: rng.random_range(0.0..2.0),
        tau: rng.random_range(0.0..20.0),
        w_end: rng.random_range(0.0..2.0),
        max_tokens: rng.random_range(1..12),
        end_tokens,
        magic_includes_prompt: rng.random_bool(0.3),
        ..DecodeConfig::default()
    };
    Instance {
        lm,
        matcher,
        clip,
        pool,
        cfg,
    }
}
