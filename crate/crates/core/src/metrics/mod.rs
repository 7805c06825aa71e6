//! Caption metrics: corpus BLEU-n, a dependency-free METEOR, CIDEr, and the
//! NLG mean over whichever of them are reported.
//!
//! All metrics share [`metric_tokenize`]: lowercase, split on whitespace,
//! strip punctuation from both ends of each word.

mod bleu;
mod cider;
mod meteor;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bleu::{bleu_n, bleu_n_smoothed, sentence_bleu};
pub use cider::{cider, cider_per_clip};
pub use meteor::{meteor, meteor_per_clip, meteor_sentence, stem_variants};

/// Candidate captions keyed by clip id.
pub type Candidates = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub clip_id: String,
    pub references: Vec<String>,
}

impl ReferenceSet {
    pub fn new<S: Into<String>>(clip_id: impl Into<String>, references: impl IntoIterator<Item = S>) -> Result<Self> {
        let clip_id = clip_id.into();
        let references: Vec<String> = references.into_iter().map(Into::into).collect();
        if references.iter().all(|r| r.trim().is_empty()) {
            return Err(Error::MissingReference(clip_id));
        }
        Ok(Self { clip_id, references })
    }
}

pub fn metric_tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Tokenized candidate and references for one clip.
pub(crate) struct Pair {
    pub clip_id: String,
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

/// Pair every candidate with its references, in clip-id order.
pub(crate) fn pair_up(candidates: &Candidates, refs: &[ReferenceSet]) -> Result<Vec<Pair>> {
    let by_id: HashMap<&str, &ReferenceSet> = refs.iter().map(|r| (r.clip_id.as_str(), r)).collect();
    candidates
        .iter()
        .map(|(clip, text)| {
            let set = by_id
                .get(clip.as_str())
                .ok_or_else(|| Error::MissingReference(clip.clone()))?;
            let references: Vec<Vec<String>> = set
                .references
                .iter()
                .map(|r| metric_tokenize(r))
                .filter(|r| !r.is_empty())
                .collect();
            if references.is_empty() {
                return Err(Error::MissingReference(clip.clone()));
            }
            Ok(Pair {
                clip_id: clip.clone(),
                candidate: metric_tokenize(text),
                references,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClipScores {
    pub bleu2: f64,
    pub bleu3: f64,
    pub meteor: f64,
    pub cider: f64,
}

/// Arithmetic mean of the metrics that were actually reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlgMean {
    pub value: f64,
    pub included: Vec<String>,
}

impl NlgMean {
    /// The same mean on a 0–10 scale, as some result tables print it.
    pub fn x10(&self) -> f64 {
        self.value * 10.0
    }
}

pub fn nlg_mean(metrics: &[(&str, f64)]) -> Result<NlgMean> {
    if metrics.is_empty() {
        return Err(Error::EmptyInput("nlg_mean metrics"));
    }
    let value = metrics.iter().map(|(_, v)| v).sum::<f64>() / metrics.len() as f64;
    Ok(NlgMean {
        value,
        included: metrics.iter().map(|(n, _)| n.to_string()).collect(),
    })
}

/// Names of the metrics averaged into [`MetricReport::nlg`].
pub const NLG_BASKET: [&str; 4] = ["bleu2", "bleu3", "meteor", "cider"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu2: f64,
    pub bleu3: f64,
    pub meteor: f64,
    pub cider: f64,
    pub nlg: NlgMean,
    pub per_clip: BTreeMap<String, ClipScores>,
}

impl MetricReport {
    pub fn nlg_mean(&self) -> f64 {
        self.nlg.value
    }

    pub fn to_table(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8}", "metric", "score")?;
        for (name, v) in [
            ("BLEU-2", self.bleu2),
            ("BLEU-3", self.bleu3),
            ("METEOR", self.meteor),
            ("CIDEr", self.cider),
            ("NLG mean", self.nlg.value),
            ("NLG x10", self.nlg.x10()),
        ] {
            writeln!(f, "{name:<10} {v:>8.4}")?;
        }
        Ok(())
    }
}

/// Every metric, corpus-level and per clip. Needs at least two clips.
pub fn evaluate(candidates: &Candidates, refs: &[ReferenceSet]) -> Result<MetricReport> {
    let bleu2 = bleu_n(candidates, refs, 2)?;
    let bleu3 = bleu_n(candidates, refs, 3)?;
    let meteor_clips = meteor_per_clip(candidates, refs)?;
    let cider_clips = cider_per_clip(candidates, refs)?;
    let pairs = pair_up(candidates, refs)?;

    let mut per_clip = BTreeMap::new();
    for p in &pairs {
        per_clip.insert(
            p.clip_id.clone(),
            ClipScores {
                bleu2: sentence_bleu(&p.candidate, &p.references, 2, 0.0),
                bleu3: sentence_bleu(&p.candidate, &p.references, 3, 0.0),
                meteor: meteor_clips[&p.clip_id],
                cider: cider_clips[&p.clip_id],
            },
        );
    }
    let n = per_clip.len() as f64;
    let meteor = meteor_clips.values().sum::<f64>() / n;
    let cider = cider_clips.values().sum::<f64>() / n;
    let nlg = nlg_mean(&[
        (NLG_BASKET[0], bleu2),
        (NLG_BASKET[1], bleu3),
        (NLG_BASKET[2], meteor),
        (NLG_BASKET[3], cider),
    ])?;
    Ok(MetricReport {
        bleu2,
        bleu3,
        meteor,
        cider,
        nlg,
        per_clip,
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

/// `{"clip_id": ["caption", ...]}`.
pub fn load_references(path: impl AsRef<Path>) -> Result<Vec<ReferenceSet>> {
    let map: BTreeMap<String, Vec<String>> = read_json(path.as_ref())?;
    map.into_iter().map(|(id, refs)| ReferenceSet::new(id, refs)).collect()
}

/// `{"clip_id": "caption"}` or `{"clip_id": ["caption"]}`.
pub fn load_candidates(path: impl AsRef<Path>) -> Result<Candidates> {
    let path = path.as_ref();
    let map: BTreeMap<String, OneOrMany> = read_json(path)?;
    map.into_iter()
        .map(|(id, v)| match v {
            OneOrMany::One(s) => Ok((id, s)),
            OneOrMany::Many(mut v) if v.len() == 1 => Ok((id, v.remove(0))),
            OneOrMany::Many(v) => Err(Error::parse(
                path,
                0,
                format!("clip {id}: expected one candidate, found {}", v.len()),
            )),
        })
        .collect()
}
