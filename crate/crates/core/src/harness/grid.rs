use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Experiment, Method};
use crate::decoder::DecodeConfig;
use crate::error::{Error, Result};
use crate::keywords::KeywordList;

/// Name of the no-keywords variant.
pub const NO_KEYWORDS: &str = "none";

#[derive(Debug, Clone)]
pub struct AblationVariant {
    pub name: String,
    /// `None` decodes with the bare base prompt.
    pub keywords: Option<KeywordList>,
}

impl AblationVariant {
    pub fn none() -> Self {
        Self {
            name: NO_KEYWORDS.to_string(),
            keywords: None,
        }
    }

    pub fn list(name: impl Into<String>, keywords: KeywordList) -> Self {
        Self {
            name: name.into(),
            keywords: Some(keywords),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub keyword_list: String,
    pub magic_search: bool,
    pub nlg_mean: f64,
    pub nlg_mean_x10: f64,
}

pub const GUIDED_MODEL: &str = "zero-shot";
pub const GREEDY_MODEL: &str = "greedy baseline";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    WConfidence,
    WDegeneration,
    WMagic,
    Tau,
    L,
    K,
    KeywordList,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 7] = [
        SweepAxis::WConfidence,
        SweepAxis::WDegeneration,
        SweepAxis::WMagic,
        SweepAxis::Tau,
        SweepAxis::L,
        SweepAxis::K,
        SweepAxis::KeywordList,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::WConfidence => "w_confidence",
            SweepAxis::WDegeneration => "w_degeneration",
            SweepAxis::WMagic => "w_magic",
            SweepAxis::Tau => "tau",
            SweepAxis::L => "l",
            SweepAxis::K => "k",
            SweepAxis::KeywordList => "keyword_list",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep axis `{s}`")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<String>,
    pub fixed: DecodeConfig,
    /// Keyword count for axes other than `l`.
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub bleu2: f64,
    pub bleu3: f64,
    pub meteor: f64,
    pub cider: f64,
    pub nlg_mean: f64,
    pub nlg_mean_x10: f64,
    pub best: bool,
}

/// First index holding the maximum.
pub fn best_index(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// One resolved sweep cell.
struct Cell {
    value: String,
    cfg: DecodeConfig,
    list: KeywordList,
    l: usize,
}

fn parse_weight(axis: SweepAxis, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{axis}: `{v}` is not a number")))?;
    if !x.is_finite() || x < 0.0 {
        return Err(Error::InvalidConfig(format!("{axis}: `{v}` must be finite and >= 0")));
    }
    Ok(x)
}

fn parse_count(axis: SweepAxis, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{axis}: `{v}` is not a non-negative integer")))
}

impl Experiment {
    fn sweep_cells(&self, spec: &SweepSpec) -> Result<Vec<Cell>> {
        if spec.values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value".into()));
        }
        spec.values
            .iter()
            .map(|v| {
                let mut cfg = spec.fixed.clone();
                let mut list = self.keywords.clone();
                let mut l = spec.l;
                let value = match spec.axis {
                    SweepAxis::WConfidence | SweepAxis::WDegeneration | SweepAxis::WMagic | SweepAxis::Tau => {
                        let x = parse_weight(spec.axis, v)?;
                        *match spec.axis {
                            SweepAxis::WConfidence => &mut cfg.w_confidence,
                            SweepAxis::WDegeneration => &mut cfg.w_degeneration,
                            SweepAxis::WMagic => &mut cfg.w_magic,
                            _ => &mut cfg.tau,
                        } = x;
                        x.to_string()
                    }
                    SweepAxis::K => {
                        cfg.k = parse_count(spec.axis, v)?;
                        cfg.k.to_string()
                    }
                    SweepAxis::L => {
                        l = parse_count(spec.axis, v)?;
                        l.to_string()
                    }
                    SweepAxis::KeywordList => {
                        let name = v.trim();
                        if name == NO_KEYWORDS {
                            list = KeywordList::from_entries(Vec::<String>::new(), NO_KEYWORDS);
                            l = 0;
                        } else {
                            list = self
                                .named_lists
                                .get(name)
                                .cloned()
                                .ok_or_else(|| Error::InvalidConfig(format!("unknown keyword list `{name}`")))?;
                        }
                        name.to_string()
                    }
                };
                cfg.validate()?;
                if l > list.len() {
                    return Err(Error::InvalidConfig(format!(
                        "{}: l = {l} exceeds list of {}",
                        spec.axis,
                        list.len()
                    )));
                }
                Ok(Cell { value, cfg, list, l })
            })
            .collect()
    }

    /// One row per value, in the order given; the highest NLG mean is
    /// marked `best`.
    pub fn run_sweep(&self, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
        let cells = self.sweep_cells(spec)?;
        let mut rows: Vec<SweepRow> = cells
            .par_iter()
            .map(|c| {
                let r = self.run_with_list(&c.list, &c.cfg, c.l, Method::Guided)?.report;
                Ok(SweepRow {
                    axis: spec.axis.to_string(),
                    value: c.value.clone(),
                    bleu2: r.bleu2,
                    bleu3: r.bleu3,
                    meteor: r.meteor,
                    cider: r.cider,
                    nlg_mean: r.nlg.value,
                    nlg_mean_x10: r.nlg.x10(),
                    best: false,
                })
            })
            .collect::<Result<_>>()?;
        let scores: Vec<f64> = rows.iter().map(|r| r.nlg_mean).collect();
        if let Some(b) = best_index(&scores) {
            rows[b].best = true;
        }
        Ok(rows)
    }

    /// Every keyword variant with MAGIC on and off (`w_magic = 0`), plus
    /// an optional plain greedy row.
    pub fn run_ablation(
        &self,
        variants: &[AblationVariant],
        cfg: &DecodeConfig,
        l: usize,
        include_greedy: bool,
    ) -> Result<Vec<AblationRow>> {
        if variants.is_empty() {
            return Err(Error::InvalidConfig("ablation needs at least one keyword variant".into()));
        }
        let empty = KeywordList::from_entries(Vec::<String>::new(), NO_KEYWORDS);
        let mut cells: Vec<(&AblationVariant, bool)> = Vec::new();
        for v in variants {
            cells.push((v, true));
            cells.push((v, false));
        }
        let mut rows: Vec<AblationRow> = cells
            .par_iter()
            .map(|(v, magic)| {
                let (list, l) = match &v.keywords {
                    Some(k) => (k, l),
                    None => (&empty, 0),
                };
                let cell_cfg = if *magic {
                    cfg.clone()
                } else {
                    DecodeConfig {
                        w_magic: 0.0,
                        ..cfg.clone()
                    }
                };
                let r = self.run_with_list(list, &cell_cfg, l, Method::Guided)?.report;
                Ok(AblationRow {
                    model: GUIDED_MODEL.to_string(),
                    keyword_list: v.name.clone(),
                    magic_search: *magic,
                    nlg_mean: r.nlg.value,
                    nlg_mean_x10: r.nlg.x10(),
                })
            })
            .collect::<Result<_>>()?;
        if include_greedy {
            let r = self.run_greedy(cfg)?.report;
            rows.push(AblationRow {
                model: GREEDY_MODEL.to_string(),
                keyword_list: NO_KEYWORDS.to_string(),
                magic_search: false,
                nlg_mean: r.nlg.value,
                nlg_mean_x10: r.nlg.x10(),
            });
        }
        Ok(rows)
    }
}
