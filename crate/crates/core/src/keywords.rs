//! Keyword lists: loading, merging, and zero-shot selection against a clip.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::AudioTextMatcher;
use crate::embedding::cosine_similarity;
use crate::error::{Error, Result};
use crate::token::canonicalize;

/// Separator between the parts of a compound class, e.g. `Speech, Male speech`.
pub const COMPOUND_SEPARATOR: &str = ", ";

/// Ordered list of unique canonical keywords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordList {
    entries: Vec<String>,
    source_tag: String,
}

impl KeywordList {
    /// Canonicalize, drop empties, and dedup keeping the first occurrence.
    pub fn from_entries<I, S>(entries: I, source_tag: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let entries = entries
            .into_iter()
            .map(|e| canonicalize(e.as_ref()))
            .filter(|e| !e.is_empty() && seen.insert(e.clone()))
            .collect();
        Self {
            entries,
            source_tag: source_tag.into(),
        }
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = format!("# {}\n", self.source_tag);
        for e in &self.entries {
            out.push_str(e);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Split on [`COMPOUND_SEPARATOR`] outside parentheses.
pub fn split_compound(line: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let bytes = line.as_bytes();
    let sep = COMPOUND_SEPARATOR.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => depth += 1,
            b')' => depth -= 1,
            _ if depth <= 0 && bytes[i..].starts_with(sep) => {
                parts.push(&line[start..i]);
                i += sep.len();
                start = i;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    parts.push(&line[start..]);
    parts
}

/// Parse keyword-file text: one keyword per line, `#` comments, blank lines
/// ignored, compound classes split.
pub fn parse_keywords(text: &str, source_tag: impl Into<String>) -> KeywordList {
    let raw = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .flat_map(split_compound);
    KeywordList::from_entries(raw, source_tag)
}

pub fn load_keywords(path: impl AsRef<Path>) -> Result<KeywordList> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let list = parse_keywords(&text, tag);
    if list.is_empty() {
        return Err(Error::EmptyKeywordList);
    }
    Ok(list)
}

/// Base entries in order, then the extras not already present.
pub fn merge_keyword_lists(base: &KeywordList, extra: &KeywordList) -> KeywordList {
    let tag = match (base.source_tag.is_empty(), extra.source_tag.is_empty()) {
        (_, true) => base.source_tag.clone(),
        (true, false) => extra.source_tag.clone(),
        (false, false) => format!("{}+{}", base.source_tag, extra.source_tag),
    };
    KeywordList::from_entries(base.entries.iter().chain(&extra.entries), tag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordMatch {
    pub keyword: String,
    pub similarity: f64,
    pub rank: usize,
}

/// Top-`l` keywords by cosine similarity to the clip's audio embedding.
/// Ties keep list order.
pub fn select_keywords<M: AudioTextMatcher + ?Sized>(
    matcher: &M,
    clip: &str,
    list: &KeywordList,
    l: usize,
) -> Result<Vec<KeywordMatch>> {
    select_keywords_with_template(matcher, clip, list, l, None)
}

/// As [`select_keywords`], embedding each keyword through `template`
/// (`{}` is replaced by the keyword) when one is given.
pub fn select_keywords_with_template<M: AudioTextMatcher + ?Sized>(
    matcher: &M,
    clip: &str,
    list: &KeywordList,
    l: usize,
    template: Option<&str>,
) -> Result<Vec<KeywordMatch>> {
    if l > list.len() {
        return Err(Error::InvalidConfig(format!(
            "asked for {l} keywords from a list of {}",
            list.len()
        )));
    }
    if l == 0 {
        return Ok(Vec::new());
    }
    let audio = matcher.embed_audio(clip)?;
    let scored: Vec<(usize, f64)> = list
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, kw)| {
            let text = match template {
                Some(t) => t.replace("{}", kw),
                None => kw.clone(),
            };
            let emb = matcher.embed_text(&text)?;
            Ok((i, cosine_similarity(&emb, &audio)?))
        })
        .collect::<Result<_>>()?;
    Ok(rank_top(scored, l)
        .into_iter()
        .enumerate()
        .map(|(r, (i, similarity))| KeywordMatch {
            keyword: list.entries[i].clone(),
            similarity,
            rank: r + 1,
        })
        .collect())
}

fn rank_top(mut scored: Vec<(usize, f64)>, l: usize) -> Vec<(usize, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(l);
    scored
}
