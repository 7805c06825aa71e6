//! Batch captioning over a manifest, plus ablation and sweep grids written
//! as CSV tables with a JSON sidecar.

mod grid;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backends::{AudioTextMatcher, LanguageModel, ToyMatcher};
use crate::decoder::{decode, decode_greedy, CaptionResult, DecodeConfig};
use crate::error::{Error, Result};
use crate::keywords::KeywordList;
use crate::metrics::{evaluate, Candidates, MetricReport, ReferenceSet, NLG_BASKET};
use crate::prompt::PromptTemplate;

pub use grid::{
    best_index, AblationRow, AblationVariant, SweepAxis, SweepRow, SweepSpec, GREEDY_MODEL, GUIDED_MODEL, NO_KEYWORDS,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    /// Fixture audio id, or the clip's true description in toy mode.
    pub audio: String,
    #[serde(default)]
    pub refs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.clip_id.as_str()) {
                return Err(Error::DuplicateId(e.clip_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    /// One JSON object per line; blank lines are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry =
                serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            entries.push(entry);
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn references(&self) -> Result<Vec<ReferenceSet>> {
        self.entries
            .iter()
            .map(|e| ReferenceSet::new(e.clip_id.clone(), e.refs.iter().cloned()))
            .collect()
    }

    /// Register every entry's `audio` text as a toy clip keyed by itself.
    pub fn register_toy(&self, matcher: &mut ToyMatcher) {
        for e in &self.entries {
            matcher.register_clip(e.audio.clone(), e.audio.clone());
        }
    }
}

#[derive(Clone)]
pub struct Backends {
    pub matcher: Arc<dyn AudioTextMatcher>,
    pub lm: Arc<dyn LanguageModel>,
}

impl Backends {
    pub fn new(matcher: Arc<dyn AudioTextMatcher>, lm: Arc<dyn LanguageModel>) -> Self {
        Self { matcher, lm }
    }
}

/// How a batch decodes each clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Guided,
    Greedy,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchResult {
    pub captions: BTreeMap<String, CaptionResult>,
    /// Clips that failed to decode, with the error message. They are
    /// scored as empty captions.
    pub failures: BTreeMap<String, String>,
    pub report: MetricReport,
}

impl BatchResult {
    /// Caption text per clip; failed clips map to the empty string.
    pub fn candidates(&self) -> Candidates {
        let mut c: Candidates = self.captions.iter().map(|(k, v)| (k.clone(), v.text.clone())).collect();
        for k in self.failures.keys() {
            c.insert(k.clone(), String::new());
        }
        c
    }
}

/// Fixed inputs shared by every cell of an experiment.
#[derive(Clone)]
pub struct Experiment {
    pub manifest: Manifest,
    pub backends: Backends,
    pub template: PromptTemplate,
    /// List used when a run does not name one.
    pub keywords: KeywordList,
    /// Lists addressable by name from ablations and `keyword_list` sweeps.
    pub named_lists: BTreeMap<String, KeywordList>,
}

impl Experiment {
    pub fn new(manifest: Manifest, backends: Backends, template: PromptTemplate, keywords: KeywordList) -> Self {
        Self {
            manifest,
            backends,
            template,
            keywords,
            named_lists: BTreeMap::new(),
        }
    }

    pub fn with_list(mut self, name: impl Into<String>, list: KeywordList) -> Self {
        self.named_lists.insert(name.into(), list);
        self
    }

    /// Guided decode of every clip with `keywords` and `l`, then evaluation.
    pub fn run_batch(&self, cfg: &DecodeConfig, l: usize) -> Result<BatchResult> {
        self.run_with_list(&self.keywords, cfg, l, Method::Guided)
    }

    pub fn run_greedy(&self, cfg: &DecodeConfig) -> Result<BatchResult> {
        self.run_with_list(&self.keywords, cfg, 0, Method::Greedy)
    }

    pub fn run_with_list(&self, list: &KeywordList, cfg: &DecodeConfig, l: usize, method: Method) -> Result<BatchResult> {
        if self.manifest.is_empty() {
            return Err(Error::EmptyInput("manifest"));
        }
        cfg.validate()?;
        if l > list.len() {
            return Err(Error::InvalidConfig(format!(
                "l = {l} exceeds keyword list `{}` of {}",
                list.source_tag(),
                list.len()
            )));
        }
        let refs = self.manifest.references()?;
        let matcher = self.backends.matcher.as_ref();
        let lm = self.backends.lm.as_ref();
        let outcomes: Vec<(String, Result<CaptionResult>)> = self
            .manifest
            .entries
            .par_iter()
            .map(|e| {
                let r = match method {
                    Method::Guided => decode(&e.audio, matcher, lm, list, &self.template, cfg, l),
                    Method::Greedy => decode_greedy(&e.audio, lm, &self.template, cfg),
                };
                (
                    e.clip_id.clone(),
                    r.map(|mut c| {
                        c.clip_id = e.clip_id.clone();
                        c
                    }),
                )
            })
            .collect();

        let mut captions = BTreeMap::new();
        let mut failures = BTreeMap::new();
        for (clip, r) in outcomes {
            match r {
                Ok(c) => {
                    captions.insert(clip, c);
                }
                Err(e) => {
                    warn!("clip {clip} failed: {e}");
                    failures.insert(clip, e.to_string());
                }
            }
        }
        let mut candidates: Candidates = captions.iter().map(|(k, v)| (k.clone(), v.text.clone())).collect();
        for k in failures.keys() {
            candidates.insert(k.clone(), String::new());
        }
        let report = evaluate(&candidates, &refs)?;
        Ok(BatchResult {
            captions,
            failures,
            report,
        })
    }
}

/// Reproducibility record written next to every table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub table: String,
    pub rows: usize,
    pub clips: usize,
    /// Metrics averaged into `nlg_mean`; `nlg_mean_x10` is the same value
    /// on a 0–10 scale.
    pub nlg_basket: Vec<String>,
    pub config: serde_json::Value,
    #[serde(default)]
    pub failures: BTreeMap<String, String>,
}

impl Sidecar {
    pub fn new(table: impl Into<String>, rows: usize, clips: usize, config: serde_json::Value) -> Self {
        Self {
            table: table.into(),
            rows,
            clips,
            nlg_basket: NLG_BASKET.iter().map(|s| s.to_string()).collect(),
            config,
            failures: BTreeMap::new(),
        }
    }
}

/// `out.csv` → `out.csv.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut p = csv.as_os_str().to_owned();
    p.push(".meta.json");
    PathBuf::from(p)
}

pub fn table_to_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_table<T: Serialize>(path: impl AsRef<Path>, rows: &[T], sidecar: &Sidecar) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, table_to_string(rows)?).map_err(|e| Error::io(path, e))?;
    let meta = sidecar_path(path);
    fs::write(&meta, serde_json::to_string_pretty(sidecar)?).map_err(|e| Error::io(&meta, e))
}

pub fn read_table<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
