use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{pair_up, Candidates, ReferenceSet};
use crate::error::Result;

const SUFFIXES: [&str; 4] = ["ing", "es", "ed", "s"];
/// Shortest stem left after stripping a suffix.
const MIN_STEM: usize = 2;

/// The word plus every form obtained by stripping one known suffix.
pub fn stem_variants(word: &str) -> Vec<&str> {
    let mut out = vec![word];
    for s in SUFFIXES {
        if let Some(stem) = word.strip_suffix(s) {
            if stem.chars().count() >= MIN_STEM {
                out.push(stem);
            }
        }
    }
    out
}

fn stems_match(a: &str, b: &str) -> bool {
    let vb = stem_variants(b);
    stem_variants(a).iter().any(|x| vb.contains(x))
}

/// Align candidate positions to reference positions in one stage. Each
/// candidate word prefers the reference slot right after its predecessor's
/// match (extending a chunk), else the earliest free slot.
fn align_stage(
    cand: &[String],
    reference: &[String],
    align: &mut [Option<usize>],
    used: &mut [bool],
    matches: impl Fn(&str, &str) -> bool,
) {
    for i in 0..cand.len() {
        if align[i].is_some() {
            continue;
        }
        let ok = |j: usize| !used[j] && matches(&cand[i], &reference[j]);
        let next = i
            .checked_sub(1)
            .and_then(|p| align[p])
            .map(|j| j + 1)
            .filter(|&j| j < reference.len() && ok(j));
        if let Some(j) = next.or_else(|| (0..reference.len()).find(|&j| ok(j))) {
            align[i] = Some(j);
            used[j] = true;
        }
    }
}

/// METEOR of one tokenized candidate against one reference.
pub fn meteor_sentence(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut align = vec![None; cand.len()];
    let mut used = vec![false; reference.len()];
    align_stage(cand, reference, &mut align, &mut used, |a, b| a == b);
    align_stage(cand, reference, &mut align, &mut used, stems_match);

    let m = align.iter().flatten().count();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 0;
    let mut prev: Option<usize> = None;
    for a in &align {
        match (prev, a) {
            (Some(p), Some(j)) if *j == p + 1 => {}
            (_, Some(_)) => chunks += 1,
            _ => {}
        }
        prev = *a;
    }
    let m = m as f64;
    let p = m / cand.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

/// Best score over each clip's references.
pub fn meteor_per_clip(candidates: &Candidates, refs: &[ReferenceSet]) -> Result<BTreeMap<String, f64>> {
    Ok(pair_up(candidates, refs)?
        .par_iter()
        .map(|p| {
            let best = p
                .references
                .iter()
                .map(|r| meteor_sentence(&p.candidate, r))
                .fold(0.0, f64::max);
            (p.clip_id.clone(), best)
        })
        .collect())
}

/// Mean per-clip METEOR.
pub fn meteor(candidates: &Candidates, refs: &[ReferenceSet]) -> Result<f64> {
    let per = meteor_per_clip(candidates, refs)?;
    if per.is_empty() {
        return Err(crate::error::Error::EmptyInput("METEOR candidates"));
    }
    Ok(per.values().sum::<f64>() / per.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::metric_tokenize as t;

    #[test]
    fn examples() {
        assert_eq!(meteor_sentence(&t("dog"), &t("dog")), 0.5);
        assert_eq!(meteor_sentence(&t("cats"), &t("cat")), 0.5);
        assert_eq!(meteor_sentence(&t("dog"), &t("rain")), 0.0);
        assert_eq!(meteor_sentence(&t("barking"), &t("barked")), 0.5);
    }

    #[test]
    fn perfect_match_formula() {
        for n in 1..12 {
            let s: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
            let expected = 1.0 - 0.5 * (1.0 / n as f64).powi(3);
            assert!((meteor_sentence(&s, &s) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn scrambling_raises_the_penalty() {
        let r = t("a man is speaking while a car passes by on the wet road");
        let mut scrambled = r.clone();
        scrambled.reverse();
        assert!(meteor_sentence(&scrambled, &r) < meteor_sentence(&r, &r));
    }

    #[test]
    fn stems() {
        assert_eq!(stem_variants("boxes"), ["boxes", "box", "boxe"]);
        assert_eq!(stem_variants("as"), ["as"]);
    }
}
