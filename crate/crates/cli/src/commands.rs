use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use soundscribe::backends::{load_fixtures, toy_matcher, FixtureLm};
use soundscribe::harness::{
    write_table, AblationVariant, Backends, Experiment, Manifest, ManifestEntry, Sidecar, SweepAxis, SweepSpec,
};
use soundscribe::keywords::{parse_keywords, select_keywords_with_template};
use soundscribe::metrics::{evaluate as score, load_candidates, load_references};
use soundscribe::{
    decode, decode_greedy, demo, load_keywords, merge_keyword_lists, AudioTextMatcher, CachedMatcher, CaptionResult,
    KeywordList, LanguageModel,
};

use crate::config::{echo, CliConfig, Paths};
use crate::{AblateArgs, CaptionArgs, EvaluateArgs, FixturesCommand, KeywordsCommand, SweepArgs, Usage};

fn experiment(cfg: &CliConfig) -> Result<Experiment> {
    let p = &cfg.paths;
    let (manifest, matcher, lm): (Manifest, Arc<dyn AudioTextMatcher>, Arc<dyn LanguageModel>) = if cfg.toy {
        let manifest = match &p.manifest {
            Some(path) => Manifest::load(path)?,
            None => demo::manifest(),
        };
        let mut m = toy_matcher(cfg.seed, demo::DIM);
        manifest.register_toy(&mut m);
        let lm: Arc<dyn LanguageModel> = match &p.lm {
            Some(path) => Arc::new(FixtureLm::from_path(path)?),
            None => Arc::new(demo::language_model()?),
        };
        (manifest, Arc::new(CachedMatcher::new(m)), lm)
    } else {
        let (Some(manifest), Some(embeddings), Some(lm)) = (&p.manifest, &p.embeddings, &p.lm) else {
            return Err(Usage("fixture mode needs --manifest, --embeddings and --lm (or use --toy)".into()).into());
        };
        let (m, lm) = load_fixtures(embeddings, lm)?;
        (Manifest::load(manifest)?, Arc::new(CachedMatcher::new(m)), Arc::new(lm))
    };
    let keywords = match &p.keywords {
        Some(path) => load_keywords(path)?,
        None if cfg.toy => demo::keywords(),
        None => KeywordList::from_entries(Vec::<String>::new(), "none"),
    };
    if cfg.l > keywords.len() {
        return Err(Usage(format!("l = {} exceeds the keyword list of {}", cfg.l, keywords.len())).into());
    }
    Ok(Experiment::new(manifest, Backends::new(matcher, lm), cfg.prompt.clone(), keywords))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// `NAME=FILE` pairs.
fn named_lists(specs: &[String]) -> Result<Vec<(String, KeywordList)>> {
    specs
        .iter()
        .map(|s| {
            let (name, path) = s
                .split_once('=')
                .filter(|(n, p)| !n.is_empty() && !p.is_empty())
                .ok_or_else(|| Usage(format!("--list expects NAME=FILE, got `{s}`")))?;
            Ok((name.to_string(), load_keywords(path)?))
        })
        .collect()
}

fn list_name(list: &KeywordList) -> String {
    match list.source_tag() {
        "" => "default".to_string(),
        tag => tag.to_string(),
    }
}

fn emit_table<T: Serialize>(rows: &[T], out: Option<&Path>, sidecar: Sidecar) -> Result<()> {
    match out {
        Some(path) => {
            write_table(path, rows, &sidecar)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => print!("{}", soundscribe::harness::table_to_string(rows)?),
    }
    Ok(())
}

fn config_value(cfg: &CliConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn print_trace(c: &CaptionResult) {
    for step in &c.trace.step_traces {
        println!("  step {}: {:?}", step.step, step.candidates[step.selected].token.surface);
        println!(
            "    {:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "token", "conf", "deg", "sim", "magic", "end", "final"
        );
        for (i, s) in step.candidates.iter().enumerate() {
            println!(
                "  {} {:<16} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                if i == step.selected { '*' } else { ' ' },
                format!("{:?}", s.token.surface),
                s.confidence,
                s.degeneration,
                s.audio_similarity,
                s.magic,
                s.end_penalty,
                s.final_score
            );
        }
    }
}

pub fn caption(a: CaptionArgs) -> Result<ExitCode> {
    let cfg = a.config.resolve()?;
    echo(&cfg);
    let exp = experiment(&cfg)?;
    let entries: Vec<&ManifestEntry> = if a.clips.is_empty() {
        exp.manifest.entries.iter().collect()
    } else {
        a.clips
            .iter()
            .map(|id| {
                exp.manifest
                    .entries
                    .iter()
                    .find(|e| &e.clip_id == id)
                    .ok_or_else(|| anyhow!("unknown clip id `{id}`"))
            })
            .collect::<Result<_>>()?
    };
    let mut dcfg = cfg.decode.clone();
    if a.no_magic {
        dcfg.w_magic = 0.0;
    }
    let greedy = a.no_magic && cfg.l == 0;
    let matcher = exp.backends.matcher.as_ref();
    let lm = exp.backends.lm.as_ref();
    let results: Vec<_> = pool(cfg.jobs)?.install(|| {
        entries
            .par_iter()
            .map(|e| {
                let r = if greedy {
                    decode_greedy(&e.audio, lm, &exp.template, &dcfg)
                } else {
                    decode(&e.audio, matcher, lm, &exp.keywords, &exp.template, &dcfg, cfg.l)
                };
                (e.clip_id.clone(), r)
            })
            .collect()
    });

    let mut captions = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (id, r) in results {
        match r {
            Ok(c) => {
                println!("{id}\t{}", c.text);
                if a.trace {
                    println!("  prompt: {:?}", c.prompt);
                    print_trace(&c);
                }
                captions.insert(id, c.text);
            }
            Err(e) => {
                eprintln!("{id}: failed: {e}");
                failures.insert(id, e.to_string());
            }
        }
    }
    if let Some(out) = &a.out {
        fs::write(out, serde_json::to_string_pretty(&captions)? + "\n")
            .with_context(|| format!("writing {}", out.display()))?;
        let mut sidecar = Sidecar::new("captions", captions.len(), entries.len(), config_value(&cfg));
        sidecar.failures = failures.clone();
        let meta = soundscribe::harness::sidecar_path(out);
        fs::write(&meta, serde_json::to_string_pretty(&sidecar)?).with_context(|| format!("writing {}", meta.display()))?;
    }
    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} of {} clips failed", failures.len(), entries.len());
        Ok(ExitCode::from(1))
    }
}

pub fn evaluate(a: EvaluateArgs) -> Result<ExitCode> {
    let candidates = load_candidates(&a.candidates)?;
    let refs = load_references(&a.refs)?;
    let unscored = refs.iter().filter(|r| !candidates.contains_key(&r.clip_id)).count();
    if unscored > 0 {
        eprintln!("warning: {unscored} referenced clips have no candidate and are not scored");
    }
    let report = score(&candidates, &refs)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.to_table());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn ablate(a: AblateArgs) -> Result<ExitCode> {
    let cfg = a.config.resolve()?;
    echo(&cfg);
    let exp = experiment(&cfg)?;
    let mut variants = vec![AblationVariant::none()];
    if !exp.keywords.is_empty() {
        variants.push(AblationVariant::list(list_name(&exp.keywords), exp.keywords.clone()));
    }
    for (name, list) in named_lists(&a.lists)? {
        if cfg.l > list.len() {
            return Err(Usage(format!("l = {} exceeds list `{name}` of {}", cfg.l, list.len())).into());
        }
        variants.push(AblationVariant::list(name, list));
    }
    let rows = pool(cfg.jobs)?.install(|| exp.run_ablation(&variants, &cfg.decode, cfg.l, !a.no_greedy))?;
    let sidecar = Sidecar::new("ablation", rows.len(), exp.manifest.len(), config_value(&cfg));
    emit_table(&rows, a.out.as_deref(), sidecar)?;
    Ok(ExitCode::SUCCESS)
}

/// `(axis, values, fixed overrides)` of a named grid.
fn preset(name: &str, cfg: &mut CliConfig) -> Result<(SweepAxis, Vec<String>)> {
    let betas = || ["0.3", "0.5", "1.1", "1.5"].map(String::from).to_vec();
    Ok(match name {
        "keyword-count" => (SweepAxis::L, (0..=4).map(|l| l.to_string()).collect()),
        "beta-as-confidence" => {
            cfg.decode.w_degeneration = 0.0;
            (SweepAxis::WConfidence, betas())
        }
        "beta-as-magic" => {
            cfg.decode.w_degeneration = 0.0;
            (SweepAxis::WMagic, betas())
        }
        "temperature" => (
            SweepAxis::Tau,
            [soundscribe::decoder::TUNED_TAU, soundscribe::decoder::MAGIC_DEFAULT_TAU]
                .map(|t| t.to_string())
                .to_vec(),
        ),
        other => {
            return Err(Usage(format!(
                "unknown preset `{other}`; expected keyword-count, beta-as-confidence, beta-as-magic or temperature"
            ))
            .into())
        }
    })
}

pub fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let mut cfg = a.config.resolve()?;
    let (axis, values) = match (&a.preset, &a.axis) {
        (Some(p), _) => preset(p, &mut cfg)?,
        (None, Some(axis)) => (axis.parse::<SweepAxis>().map_err(|e| Usage(e.to_string()))?, a.values.clone()),
        (None, None) => return Err(Usage("pass --axis with --values, or --preset".into()).into()),
    };
    // The l axis sets the keyword count per cell.
    let l = if axis == SweepAxis::L { 0 } else { cfg.l };
    echo(&cfg);
    let mut exp = experiment(&CliConfig { l, ..cfg.clone() })?;
    exp.named_lists.insert(list_name(&exp.keywords), exp.keywords.clone());
    for (name, list) in named_lists(&a.lists)? {
        exp.named_lists.insert(name, list);
    }
    let spec = SweepSpec {
        axis,
        values,
        fixed: cfg.decode.clone(),
        l,
    };
    let rows = pool(cfg.jobs)?.install(|| exp.run_sweep(&spec))?;
    let mut config = config_value(&cfg);
    config["sweep"] = serde_json::to_value(&spec)?;
    let sidecar = Sidecar::new("sweep", rows.len(), exp.manifest.len(), config);
    emit_table(&rows, a.out.as_deref(), sidecar)?;
    Ok(ExitCode::SUCCESS)
}

pub fn keywords(c: KeywordsCommand) -> Result<ExitCode> {
    match c {
        KeywordsCommand::Merge { inputs, out } => {
            let base = load_keywords(&inputs[0])?;
            let mut merged = base.clone();
            for path in &inputs[1..] {
                merged = merge_keyword_lists(&merged, &load_keywords(path)?);
            }
            merged.write(&out)?;
            println!("{} + {} new = {}", base.len(), merged.len() - base.len(), merged.len());
        }
        KeywordsCommand::Normalize { input, out } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let tag = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let list = parse_keywords(&text, tag);
            list.write(&out)?;
            println!("{}", list.len());
        }
        KeywordsCommand::Select { config, clip } => {
            let cfg = config.resolve()?;
            echo(&cfg);
            let exp = experiment(&cfg)?;
            let entry = exp
                .manifest
                .entries
                .iter()
                .find(|e| e.clip_id == clip)
                .ok_or_else(|| anyhow!("unknown clip id `{clip}`"))?;
            let matches = select_keywords_with_template(
                exp.backends.matcher.as_ref(),
                &entry.audio,
                &exp.keywords,
                cfg.l,
                cfg.decode.keyword_embed_template.as_deref(),
            )?;
            for m in matches {
                println!("{}\t{}\t{:.6}", m.rank, m.keyword, m.similarity);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn file_name(p: &Path) -> Option<PathBuf> {
    p.file_name().map(PathBuf::from)
}

pub fn fixtures(c: FixturesCommand) -> Result<ExitCode> {
    match c {
        FixturesCommand::GenToy { dir, seed } => {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let paths = demo::write_fixtures(&dir, seed)?;
            let manifest = demo::manifest();
            let refs: BTreeMap<&str, &Vec<String>> =
                manifest.entries.iter().map(|e| (e.clip_id.as_str(), &e.refs)).collect();
            let refs_path = dir.join("references.json");
            fs::write(&refs_path, serde_json::to_string_pretty(&refs)? + "\n")?;
            let cfg = CliConfig {
                seed,
                l: 1,
                decode: demo::config(),
                paths: Paths {
                    manifest: file_name(&paths.manifest),
                    embeddings: file_name(&paths.embeddings),
                    lm: file_name(&paths.lm),
                    keywords: file_name(&paths.keywords),
                },
                ..CliConfig::default()
            };
            let cfg_path = dir.join("soundscribe.toml");
            fs::write(&cfg_path, toml::to_string(&cfg)?)?;
            for p in [&paths.manifest, &paths.embeddings, &paths.lm, &paths.keywords, &refs_path, &cfg_path] {
                println!("{}", p.display());
            }
        }
        FixturesCommand::Validate {
            embeddings,
            lm,
            manifest,
        } => {
            let (m, lm) = load_fixtures(&embeddings, &lm)?;
            let audio: Vec<&str> = m.audio_ids().collect();
            println!(
                "embeddings: dim {}, {} audio, {} text records",
                m.dim(),
                audio.len(),
                m.text_count()
            );
            println!("lm: {} predictable tokens, {:?} granularity", lm.vocab_size(), lm.granularity());
            if let Some(path) = manifest {
                let manifest = Manifest::load(&path)?;
                let missing: Vec<&str> = manifest
                    .entries
                    .iter()
                    .map(|e| e.audio.as_str())
                    .filter(|a| !audio.contains(a))
                    .collect();
                if !missing.is_empty() {
                    return Err(anyhow!("{} manifest clips have no audio record: {}", missing.len(), missing.join(", ")));
                }
                println!("manifest: {} clips, all embedded", manifest.len());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
