//! File-fed backends replaying exported embeddings and next-token tables.
//!
//! Embedding fixtures are line-delimited JSON:
//!
//! ```text
//! {"schema": "emb/1", "fallback_seed": 17}
//! {"id": "clip-001", "kind": "audio", "dim": 4, "v": [0.1, -0.2, 0.3, 0.0]}
//! {"id": "dog barking", "kind": "text", "dim": 4, "v": [0.4, 0.1, 0.0, 0.2]}
//! ```
//!
//! The header may also carry `"dim"`, which lets a file without records
//! still define the fallback space. LM fixtures are one JSON document with
//! `schema`, `granularity`, `vocab` and `ngrams` (context string to a map of
//! next token to probability).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::toy::sort_by_probability;
use super::{hashed_text_embedding, AudioTextMatcher, LanguageModel, BOS, EOS, UNK};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::token::{canonicalize, join_words, word_tokenize, Token};

pub const EMB_SCHEMA: &str = "emb/1";
pub const LM_SCHEMA: &str = "lm/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub schema: String,
    pub fallback_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Audio,
    Text,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub kind: RecordKind,
    pub dim: usize,
    pub v: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn new(id: impl Into<String>, kind: RecordKind, embedding: &Embedding) -> Self {
        Self {
            id: id.into(),
            kind,
            dim: embedding.dim(),
            v: embedding.values().to_vec(),
        }
    }
}

/// Matcher serving stored embeddings verbatim. Text missing from the file
/// falls back to the seeded-hash embedding with the header's seed.
#[derive(Debug, Clone)]
pub struct FixtureMatcher {
    dim: usize,
    fallback_seed: u64,
    audio: HashMap<String, Embedding>,
    text: HashMap<String, Embedding>,
}

impl FixtureMatcher {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&source, path)
    }

    pub fn parse(source: &str, path: &Path) -> Result<Self> {
        let mut lines = source
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (hline, htext) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "missing emb/1 header"))?;
        let header: EmbeddingHeader = serde_json::from_str(htext)
            .map_err(|e| Error::parse(path, hline, format!("bad header: {e}")))?;
        if header.schema != EMB_SCHEMA {
            return Err(Error::parse(
                path,
                hline,
                format!("unsupported schema `{}`, expected `{EMB_SCHEMA}`", header.schema),
            ));
        }

        let mut dim = header.dim;
        let mut audio = HashMap::new();
        let mut text = HashMap::new();
        for (line, raw) in lines {
            let rec: EmbeddingRecord = serde_json::from_str(raw)
                .map_err(|e| Error::parse(path, line, format!("bad record: {e}")))?;
            if rec.v.len() != rec.dim {
                return Err(Error::parse(
                    path,
                    line,
                    format!("record `{}` declares dim {} but has {} values", rec.id, rec.dim, rec.v.len()),
                ));
            }
            match dim {
                Some(d) if d != rec.dim => {
                    return Err(Error::Dimension {
                        expected: d,
                        found: rec.dim,
                    })
                }
                _ => dim = Some(rec.dim),
            }
            let emb = Embedding::new(rec.v)
                .map_err(|e| Error::parse(path, line, format!("record `{}`: {e}", rec.id)))?;
            if emb.norm() == 0.0 {
                return Err(Error::parse(path, line, format!("record `{}` is a zero vector", rec.id)));
            }
            let (map, key) = match rec.kind {
                RecordKind::Audio => (&mut audio, rec.id),
                RecordKind::Text => (&mut text, canonicalize(&rec.id)),
            };
            if map.contains_key(&key) {
                return Err(Error::DuplicateId(key));
            }
            map.insert(key, emb);
        }

        let dim = dim.ok_or_else(|| {
            Error::parse(path, hline, "no records and no header dim; cannot size fallback embeddings")
        })?;
        if dim < 2 {
            return Err(Error::parse(path, hline, format!("dim must be >= 2, got {dim}")));
        }
        Ok(Self {
            dim,
            fallback_seed: header.fallback_seed,
            audio,
            text,
        })
    }

    pub fn fallback_seed(&self) -> u64 {
        self.fallback_seed
    }

    pub fn audio_ids(&self) -> impl Iterator<Item = &str> {
        self.audio.keys().map(String::as_str)
    }

    pub fn text_count(&self) -> usize {
        self.text.len()
    }

    pub fn has_text(&self, text: &str) -> bool {
        self.text.contains_key(&canonicalize(text))
    }
}

impl AudioTextMatcher for FixtureMatcher {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_audio(&self, clip: &str) -> Result<Embedding> {
        self.audio
            .get(clip)
            .cloned()
            .ok_or_else(|| Error::UnknownClip(clip.to_string()))
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        match self.text.get(&canonicalize(text)) {
            Some(e) => Ok(e.clone()),
            None => Ok(hashed_text_embedding(self.fallback_seed, self.dim, text)),
        }
    }
}

/// Serialize an `emb/1` file. Records are written in the given order.
pub fn write_embedding_fixture(
    path: impl AsRef<Path>,
    header: &EmbeddingHeader,
    records: &[EmbeddingRecord],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = serde_json::to_string(header)?;
    out.push('\n');
    for rec in records {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Word,
    Subword,
}

/// On-disk shape of an `lm/1` document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmFixture {
    pub schema: String,
    pub granularity: Granularity,
    pub vocab: Vec<String>,
    pub ngrams: BTreeMap<String, BTreeMap<String, f64>>,
}

impl LmFixture {
    pub fn from_toy(lm: &super::ToyLm) -> Self {
        Self {
            schema: LM_SCHEMA.to_string(),
            granularity: Granularity::Word,
            vocab: lm.vocab().iter().map(|t| t.surface.clone()).collect(),
            ngrams: lm.export_tables(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Replays a stored next-token table.
///
/// Lookup uses the longest suffix of the prefix (left-padded with `<bos>`
/// when the vocabulary has it) that appears as a context key. Mass a row
/// leaves unassigned is spread uniformly over the predictable tokens the
/// row does not mention; with no matching key at all the distribution is
/// uniform.
#[derive(Debug, Clone)]
pub struct FixtureLm {
    granularity: Granularity,
    vocab: Vec<Token>,
    index: HashMap<String, u32>,
    predictable: Vec<u32>,
    rows: HashMap<String, Vec<(u32, f64)>>,
    max_context: usize,
    bos: Option<u32>,
    eos: Option<u32>,
    unk: Option<u32>,
}

fn line_of(source: &str, needle: &str) -> usize {
    line_at(source, source.find(needle))
}

fn line_at(source: &str, pos: Option<usize>) -> usize {
    pos.map(|p| source[..p].matches('\n').count() + 1).unwrap_or(1)
}

/// Line of the `ngrams` row whose context is `key`: the quoted key followed
/// by `:` and an object.
fn line_of_row(source: &str, key: &str) -> usize {
    let start = source.find("\"ngrams\"").unwrap_or(0);
    let quoted = serde_json::to_string(key).unwrap_or_default();
    let found = source[start..].match_indices(&quoted).find_map(|(i, _)| {
        let rest = source[start + i + quoted.len()..].trim_start();
        rest.strip_prefix(':')
            .filter(|r| r.trim_start().starts_with('{'))
            .map(|_| start + i)
    });
    line_at(source, found)
}

impl FixtureLm {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: LmFixture = serde_json::from_str(&source)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        Self::from_fixture(doc, &source, path)
    }

    pub fn from_fixture(doc: LmFixture, source: &str, path: &Path) -> Result<Self> {
        if doc.schema != LM_SCHEMA {
            return Err(Error::parse(
                path,
                line_of(source, "\"schema\""),
                format!("unsupported schema `{}`, expected `{LM_SCHEMA}`", doc.schema),
            ));
        }
        if doc.vocab.is_empty() {
            return Err(Error::parse(path, line_of(source, "\"vocab\""), "empty vocabulary"));
        }
        let mut vocab = Vec::with_capacity(doc.vocab.len());
        let mut index = HashMap::new();
        for (i, s) in doc.vocab.iter().enumerate() {
            if index.insert(s.clone(), i as u32).is_some() {
                return Err(Error::DuplicateId(s.clone()));
            }
            vocab.push(Token::new(i as u32, s.clone()));
        }
        let bos = index.get(BOS).copied();
        let eos = index.get(EOS).copied();
        let unk = index.get(UNK).copied();
        let predictable: Vec<u32> = vocab
            .iter()
            .map(|t| t.id)
            .filter(|id| Some(*id) != bos && Some(*id) != unk)
            .collect();
        if predictable.is_empty() {
            return Err(Error::parse(path, line_of(source, "\"vocab\""), "no predictable tokens"));
        }

        let mut rows = HashMap::new();
        let mut max_context = 0;
        for (context, row) in doc.ngrams {
            let line = line_of_row(source, &context);
            let mut entries = Vec::with_capacity(row.len());
            let mut total = 0.0;
            for (tok, p) in row {
                if !(p.is_finite() && p > 0.0 && p <= 1.0) {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("probability {p} for `{tok}` after `{context}` is outside (0, 1]"),
                    ));
                }
                match index.get(&tok) {
                    Some(&id) if Some(id) != bos && Some(id) != unk => {
                        entries.push((id, p));
                        total += p;
                    }
                    _ => warn!("{}: skipping non-dictionary token `{tok}` after `{context}`", path.display()),
                }
            }
            if total > 1.0 + 1e-9 {
                return Err(Error::parse(
                    path,
                    line,
                    format!("row for `{context}` sums to {total} > 1"),
                ));
            }
            let len = match doc.granularity {
                Granularity::Word => context.split(' ').filter(|w| !w.is_empty()).count(),
                Granularity::Subword => context.chars().count(),
            };
            max_context = max_context.max(len);
            rows.insert(context, entries);
        }

        Ok(Self {
            granularity: doc.granularity,
            vocab,
            index,
            predictable,
            rows,
            max_context,
            bos,
            eos,
            unk,
        })
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    fn separator(&self) -> &'static str {
        match self.granularity {
            Granularity::Word => " ",
            Granularity::Subword => "",
        }
    }

    fn lookup(&self, prefix: &[Token]) -> Option<&Vec<(u32, f64)>> {
        let mut context: Vec<&str> = Vec::new();
        if self.bos.is_some() {
            context.extend(std::iter::repeat_n(BOS, self.max_context));
        }
        context.extend(prefix.iter().map(|t| t.surface.as_str()));
        for m in (0..=self.max_context.min(context.len())).rev() {
            let key = context[context.len() - m..].join(self.separator());
            if let Some(row) = self.rows.get(&key) {
                return Some(row);
            }
        }
        None
    }

    pub fn distribution(&self, prefix: &[Token]) -> Vec<(Token, f64)> {
        let mut probs: BTreeMap<u32, f64> = BTreeMap::new();
        if let Some(row) = self.lookup(prefix) {
            probs.extend(row.iter().copied());
        }
        let assigned: f64 = probs.values().sum();
        let missing: Vec<u32> = self
            .predictable
            .iter()
            .copied()
            .filter(|id| !probs.contains_key(id))
            .collect();
        let rest = 1.0 - assigned;
        if !missing.is_empty() && rest > 1e-12 {
            let share = rest / missing.len() as f64;
            probs.extend(missing.into_iter().map(|id| (id, share)));
        }
        let mut dist: Vec<(Token, f64)> = probs
            .into_iter()
            .map(|(id, p)| (self.vocab[id as usize].clone(), p))
            .collect();
        sort_by_probability(&mut dist);
        dist
    }

    fn lookup_token(&self, piece: &str) -> Result<Token> {
        match (self.index.get(piece), self.unk) {
            (Some(&id), _) | (None, Some(id)) => Ok(self.vocab[id as usize].clone()),
            (None, None) => Err(Error::Tokenize(format!("`{piece}` is not in the vocabulary"))),
        }
    }
}

impl LanguageModel for FixtureLm {
    fn vocab_size(&self) -> usize {
        self.predictable.len()
    }

    fn encode(&self, text: &str) -> Result<Vec<Token>> {
        match self.granularity {
            Granularity::Word => word_tokenize(text).iter().map(|w| self.lookup_token(w)).collect(),
            Granularity::Subword => {
                let mut out = Vec::new();
                let mut rest = text;
                while !rest.is_empty() {
                    let best = self
                        .vocab
                        .iter()
                        .filter(|t| !t.surface.is_empty() && rest.starts_with(t.surface.as_str()))
                        .max_by(|a, b| a.surface.len().cmp(&b.surface.len()).then(b.id.cmp(&a.id)));
                    match best {
                        Some(t) => {
                            rest = &rest[t.surface.len()..];
                            out.push(t.clone());
                        }
                        None => {
                            let c = rest.chars().next().expect("non-empty");
                            out.push(self.lookup_token(&c.to_string())?);
                            rest = &rest[c.len_utf8()..];
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    fn decode(&self, tokens: &[Token]) -> String {
        let visible = tokens.iter().filter(|t| t.surface != BOS && t.surface != EOS);
        match self.granularity {
            Granularity::Word => join_words(visible.map(|t| t.surface.as_str())),
            Granularity::Subword => visible.fold(String::new(), |mut s, t| {
                let _ = write!(s, "{}", t.surface);
                s
            }),
        }
    }

    fn top_k_next(&self, prefix: &[Token], k: usize) -> Result<Vec<(Token, f64)>> {
        let mut dist = self.distribution(prefix);
        sort_by_probability(&mut dist);
        dist.truncate(k);
        Ok(dist)
    }

    fn eos(&self) -> Option<&Token> {
        self.eos.map(|id| &self.vocab[id as usize])
    }
}

/// Load an embedding fixture and an LM fixture.
pub fn load_fixtures(
    embeddings_path: impl AsRef<Path>,
    lm_path: impl AsRef<Path>,
) -> Result<(FixtureMatcher, FixtureLm)> {
    Ok((
        FixtureMatcher::from_path(embeddings_path)?,
        FixtureLm::from_path(lm_path)?,
    ))
}
