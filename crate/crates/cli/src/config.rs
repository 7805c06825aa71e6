//! Run configuration resolved from built-in defaults, then an optional
//! TOML file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use soundscribe::decoder::MagicMode;
use soundscribe::{demo, DecodeConfig, PromptTemplate};

use crate::Usage;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub lm: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
}

impl Paths {
    /// Resolve relative paths against `dir` (the config file's directory).
    fn relative_to(&mut self, dir: &Path) {
        for p in [&mut self.manifest, &mut self.embeddings, &mut self.lm, &mut self.keywords]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Use the built-in toy world instead of fixture files.
    pub toy: bool,
    pub seed: u64,
    /// Keywords placed in the prompt.
    pub l: usize,
    pub jobs: usize,
    pub decode: DecodeConfig,
    pub prompt: PromptTemplate,
    pub paths: Paths,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            toy: false,
            seed: 7,
            l: 2,
            jobs: 1,
            decode: DecodeConfig::default(),
            prompt: PromptTemplate::default(),
            paths: Paths::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file; flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Use the built-in toy world (20 clips, toy matcher and LM)
    #[arg(long)]
    pub toy: bool,
    /// Seed of the toy matcher
    #[arg(long)]
    pub seed: Option<u64>,
    /// Clip manifest (JSON lines)
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Embedding fixture (emb/1)
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Language-model fixture (lm/1)
    #[arg(long, value_name = "FILE")]
    pub lm: Option<PathBuf>,
    /// Keyword list, one entry per line
    #[arg(long, value_name = "FILE")]
    pub keywords: Option<PathBuf>,
    /// Number of keywords placed in the prompt
    #[arg(short = 'l', long = "l", visible_alias = "keyword-count", value_name = "N")]
    pub l: Option<usize>,
    /// Worker threads for clip- and cell-level parallelism
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DecodeArgs {
    /// Candidates considered per step
    #[arg(long)]
    pub k: Option<usize>,
    /// Weight on model confidence
    #[arg(long, visible_alias = "paper-alpha", value_name = "W")]
    pub w_confidence: Option<f64>,
    /// Weight on the degeneration penalty (subtracted)
    #[arg(long, visible_alias = "paper-beta", value_name = "W")]
    pub w_degeneration: Option<f64>,
    /// Weight on the audio-alignment (MAGIC) term
    #[arg(long, visible_alias = "paper-gamma", value_name = "W")]
    pub w_magic: Option<f64>,
    /// Softmax temperature of the alignment term
    #[arg(long)]
    pub tau: Option<f64>,
    /// Weight on the premature-ending penalty
    #[arg(long, value_name = "W")]
    pub w_end: Option<f64>,
    /// Length cap in generated tokens
    #[arg(long, value_name = "N")]
    pub max_tokens: Option<usize>,
    /// Sentence-ending tokens, comma separated
    #[arg(long, value_delimiter = ',', value_name = "TOKENS")]
    pub end_tokens: Option<Vec<String>>,
    /// Include the prompt in the text scored against the audio
    #[arg(long)]
    pub magic_includes_prompt: bool,
    /// Alignment term: sequence-audio or token-pair
    #[arg(long, value_name = "MODE", value_parser = parse_magic_mode)]
    pub magic_mode: Option<MagicMode>,
    /// Template applied to keywords before embedding, `{}` marks the keyword
    #[arg(long, value_name = "TEMPLATE")]
    pub keyword_embed_template: Option<String>,
    /// Header of the keyword block in the prompt
    #[arg(long, value_name = "TEXT")]
    pub keyword_header: Option<String>,
    /// Base prompt the caption continues
    #[arg(long, value_name = "TEXT")]
    pub base_prompt: Option<String>,
}

fn parse_magic_mode(s: &str) -> Result<MagicMode, String> {
    match s {
        "sequence-audio" | "sequence_audio" => Ok(MagicMode::SequenceAudio),
        "token-pair" | "token_pair" => Ok(MagicMode::TokenPair),
        _ => Err(format!("expected sequence-audio or token-pair, got `{s}`")),
    }
}

/// Recursively overlay `top` onto `base`; tables merge, other values replace.
fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn read_file(path: &Path) -> Result<toml::Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: toml::Table = toml::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
    Ok(toml::Value::Table(value))
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<CliConfig> {
        let file = self.config.as_deref().map(read_file).transpose()?;
        let file_toy = file
            .as_ref()
            .and_then(|f| f.get("toy"))
            .and_then(toml::Value::as_bool)
            .unwrap_or(false);
        let mut base = CliConfig::default();
        if self.toy || file_toy {
            base.decode = demo::config();
            base.l = 1;
        }
        let mut cfg = match file {
            Some(f) => {
                let mut v = toml::Value::try_from(&base)?;
                merge(&mut v, f);
                v.try_into::<CliConfig>()
                    .map_err(|e| Usage(format!("{}: {e}", self.config.as_ref().unwrap().display())))?
            }
            None => base,
        };
        if let Some(dir) = self.config.as_deref().and_then(Path::parent) {
            cfg.paths.relative_to(dir);
        }
        self.apply(&mut cfg);
        cfg.decode.validate().map_err(|e| Usage(e.to_string()))?;
        cfg.prompt.validate().map_err(|e| Usage(e.to_string()))?;
        if cfg.jobs == 0 {
            return Err(Usage("--jobs must be >= 1".into()).into());
        }
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut CliConfig) {
        cfg.toy |= self.toy;
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.l, self.l);
        set(&mut cfg.jobs, self.jobs);
        for (slot, flag) in [
            (&mut cfg.paths.manifest, &self.manifest),
            (&mut cfg.paths.embeddings, &self.embeddings),
            (&mut cfg.paths.lm, &self.lm),
            (&mut cfg.paths.keywords, &self.keywords),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        let d = &self.decode;
        let c = &mut cfg.decode;
        set(&mut c.k, d.k);
        set(&mut c.w_confidence, d.w_confidence);
        set(&mut c.w_degeneration, d.w_degeneration);
        set(&mut c.w_magic, d.w_magic);
        set(&mut c.tau, d.tau);
        set(&mut c.w_end, d.w_end);
        set(&mut c.max_tokens, d.max_tokens);
        set(&mut c.magic_mode, d.magic_mode);
        if let Some(e) = &d.end_tokens {
            c.end_tokens = e.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
        c.magic_includes_prompt |= d.magic_includes_prompt;
        if d.keyword_embed_template.is_some() {
            c.keyword_embed_template.clone_from(&d.keyword_embed_template);
        }
        set(&mut cfg.prompt.keyword_header, d.keyword_header.clone());
        set(&mut cfg.prompt.base_prompt, d.base_prompt.clone());
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Print the resolved configuration to stderr.
pub fn echo(cfg: &CliConfig) {
    eprintln!("config: {}", serde_json::to_string(cfg).expect("config serializes"));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "l = 3\n[decode]\ntau = 5.0\nk = 9\n[prompt]\nbase_prompt = \"Listen to\"\n").unwrap();
        let args = ConfigArgs {
            config: Some(path),
            decode: DecodeArgs {
                tau: Some(10.0),
                ..DecodeArgs::default()
            },
            ..ConfigArgs::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.l, 3);
        assert_eq!(cfg.decode.tau, 10.0);
        assert_eq!(cfg.decode.k, 9);
        assert_eq!(cfg.decode.w_magic, DecodeConfig::default().w_magic);
        assert_eq!(cfg.prompt.base_prompt, "Listen to");
        assert_eq!(cfg.prompt.keyword_header, "Objects");
    }

    #[test]
    fn toy_defaults_survive_partial_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "toy = true\n[decode]\ntau = 5.0\n").unwrap();
        let cfg = ConfigArgs {
            config: Some(path),
            ..ConfigArgs::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(cfg.decode.k, demo::config().k);
        assert_eq!(cfg.decode.tau, 5.0);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[decode]\ntemperature = 5.0\n").unwrap();
        let err = ConfigArgs {
            config: Some(path),
            ..ConfigArgs::default()
        }
        .resolve()
        .unwrap_err();
        assert!(err.is::<Usage>());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = CliConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<CliConfig>(&text).unwrap(), cfg);
    }
}
