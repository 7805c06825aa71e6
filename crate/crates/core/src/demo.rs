//! A small built-in world for demos and direction checks: twenty clips
//! (ten sound sources, two actions each), a caption-style LM corpus that
//! over-represents a few sources, and a keyword list of the source nouns
//! plus distractors.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::backends::fixture::{write_embedding_fixture, EmbeddingHeader, EmbeddingRecord, RecordKind, EMB_SCHEMA};
use crate::backends::{toy_matcher, AudioTextMatcher, LmFixture, ToyLm, ToyMatcher};
use crate::decoder::DecodeConfig;
use crate::error::Result;
use crate::harness::{Backends, Experiment, Manifest, ManifestEntry};
use crate::keywords::KeywordList;
use crate::prompt::PromptTemplate;

/// Sources with their two actions and how often each appears in the LM
/// corpus (first action twice as often as the second).
const SOURCES: [(&str, [&str; 2], usize); 10] = [
    ("dog", ["barking", "growling"], 6),
    ("car", ["passing", "honking"], 5),
    ("bird", ["chirping", "singing"], 4),
    ("cat", ["meowing", "purring"], 1),
    ("baby", ["crying", "laughing"], 1),
    ("man", ["speaking", "coughing"], 1),
    ("stream", ["flowing", "trickling"], 1),
    ("door", ["slamming", "creaking"], 1),
    ("bell", ["ringing", "chiming"], 1),
    ("engine", ["idling", "revving"], 1),
];

const DISTRACTORS: [&str; 6] = ["thunder", "siren", "applause", "wind", "typing", "helicopter"];

pub const DIM: usize = 256;
pub const LM_ORDER: usize = 3;
pub const CACHE_WEIGHT: f64 = 0.1;

/// `(clip_id, true description)` for all twenty clips, `c1`..`c20`.
pub fn clips() -> Vec<(String, String)> {
    SOURCES
        .iter()
        .flat_map(|(s, actions, _)| actions.iter().map(move |a| format!("a {s} is {a}")))
        .enumerate()
        .map(|(i, d)| (format!("c{}", i + 1), d))
        .collect()
}

fn references(description: &str) -> Vec<String> {
    let (_, rest) = description.split_once(' ').expect("description has an article");
    vec![
        format!("{description}."),
        format!("the {rest}."),
        format!("{description} nearby."),
        format!("{description} loudly."),
        format!("somewhere {description}."),
    ]
}

pub fn manifest() -> Manifest {
    Manifest::new(
        clips()
            .into_iter()
            .map(|(clip_id, audio)| ManifestEntry {
                refs: references(&audio),
                clip_id,
                audio,
            })
            .collect(),
    )
    .expect("clip ids are unique")
}

/// Copies of every corpus sentence; sharpens the n-gram estimates.
const REPEAT: usize = 10;

pub fn corpus() -> Vec<String> {
    let mut out = Vec::new();
    for (s, [a1, a2], weight) in SOURCES {
        for _ in 0..weight * REPEAT {
            out.push(format!("this is a sound of a {s} is {a1}."));
            out.push(format!("this is a sound of a {s} is {a1}."));
            out.push(format!("this is a sound of a {s} is {a2}."));
        }
    }
    out
}

pub fn language_model() -> Result<ToyLm> {
    ToyLm::train(&corpus(), LM_ORDER)?.with_prompt_cache(CACHE_WEIGHT)
}

pub fn matcher(seed: u64) -> ToyMatcher {
    let mut m = toy_matcher(seed, DIM);
    manifest().register_toy(&mut m);
    m
}

pub fn keywords() -> KeywordList {
    KeywordList::from_entries(
        SOURCES.iter().map(|(s, _, _)| *s).chain(DISTRACTORS),
        "toy",
    )
}

/// Decoding preset for this world: a narrow candidate pool, so keywords
/// decide which sources are reachable and the audio decides among them.
pub fn config() -> DecodeConfig {
    DecodeConfig {
        k: 4,
        ..DecodeConfig::default()
    }
}

pub fn backends(seed: u64) -> Result<Backends> {
    Ok(Backends::new(Arc::new(matcher(seed)), Arc::new(language_model()?)))
}

pub fn experiment(seed: u64) -> Result<Experiment> {
    Ok(Experiment::new(manifest(), backends(seed)?, PromptTemplate::default(), keywords()))
}

/// Files written by [`write_fixtures`].
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub lm: PathBuf,
    pub keywords: PathBuf,
}

/// Export this world in the file formats the fixture backends read.
///
/// Audio records hold each clip's toy embedding under its clip id; text
/// records cover the keywords, and any other text falls back to the same
/// seeded hash. The LM file has no prompt cache (`lm/1` cannot express
/// one), so replays match a cache-free [`language_model`].
pub fn write_fixtures(dir: impl AsRef<Path>, seed: u64) -> Result<FixturePaths> {
    let dir = dir.as_ref();
    let paths = FixturePaths {
        manifest: dir.join("manifest.jsonl"),
        embeddings: dir.join("embeddings.jsonl"),
        lm: dir.join("lm.json"),
        keywords: dir.join("keywords.txt"),
    };
    let m = matcher(seed);
    let mut records = Vec::new();
    for (clip_id, description) in clips() {
        records.push(EmbeddingRecord::new(clip_id, RecordKind::Audio, &m.embed_audio(&description)?));
    }
    for kw in keywords().entries() {
        records.push(EmbeddingRecord::new(kw.clone(), RecordKind::Text, &m.embed_text(kw)?));
    }
    let header = EmbeddingHeader {
        schema: EMB_SCHEMA.to_string(),
        fallback_seed: seed,
        dim: Some(DIM),
    };
    write_embedding_fixture(&paths.embeddings, &header, &records)?;

    let mut fixture_manifest = manifest();
    for e in &mut fixture_manifest.entries {
        e.audio = e.clip_id.clone();
    }
    fixture_manifest.write(&paths.manifest)?;
    LmFixture::from_toy(&ToyLm::train(&corpus(), LM_ORDER)?).write(&paths.lm)?;
    keywords().write(&paths.keywords)?;
    Ok(paths)
}
