use std::collections::{BTreeMap, HashMap, HashSet};

use super::{ngram_counts, pair_up, Candidates, ReferenceSet};
use crate::error::{Error, Result};

const MAX_N: usize = 4;

type Vector<'a> = HashMap<&'a [String], f64>;

fn tfidf<'a>(tokens: &'a [String], n: usize, idf: &dyn Fn(&[String]) -> f64) -> Vector<'a> {
    ngram_counts(tokens, n)
        .into_iter()
        .map(|(g, c)| (g, c as f64 * idf(g)))
        .collect()
}

fn cosine(a: &Vector<'_>, b: &Vector<'_>) -> f64 {
    let dot: f64 = a.iter().map(|(g, x)| x * b.get(g).copied().unwrap_or(0.0)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Per-clip CIDEr. Document frequency counts the clips whose references
/// contain an n-gram; `idf = ln(N / max(1, df))`.
pub fn cider_per_clip(candidates: &Candidates, refs: &[ReferenceSet]) -> Result<BTreeMap<String, f64>> {
    let pairs = pair_up(candidates, refs)?;
    if pairs.len() < 2 {
        return Err(Error::InsufficientCorpus(pairs.len()));
    }
    let n_clips = pairs.len() as f64;
    let mut df: HashMap<&[String], usize> = HashMap::new();
    for p in &pairs {
        let mut seen: HashSet<&[String]> = HashSet::new();
        for r in &p.references {
            for n in 1..=MAX_N {
                seen.extend(ngram_counts(r, n).into_keys());
            }
        }
        for g in seen {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let idf = |g: &[String]| (n_clips / df.get(g).copied().unwrap_or(0).max(1) as f64).ln();

    Ok(pairs
        .iter()
        .map(|p| {
            let mut total = 0.0;
            for n in 1..=MAX_N {
                let c = tfidf(&p.candidate, n, &idf);
                let sum: f64 = p.references.iter().map(|r| cosine(&c, &tfidf(r, n, &idf))).sum();
                total += sum / p.references.len() as f64;
            }
            (p.clip_id.clone(), 10.0 * total / MAX_N as f64)
        })
        .collect())
}

/// Mean per-clip CIDEr.
pub fn cider(candidates: &Candidates, refs: &[ReferenceSet]) -> Result<f64> {
    let per = cider_per_clip(candidates, refs)?;
    Ok(per.values().sum::<f64>() / per.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::super::tests::corpus;
    use super::*;

    #[test]
    fn perfect_corpus_scores_ten() {
        let (c, r) = corpus(&[
            ("a", "a dog barks twice", &["a dog barks twice"]),
            ("b", "the rain falls hard", &["the rain falls hard"]),
            ("c", "birds sing in trees", &["birds sing in trees"]),
        ]);
        for v in cider_per_clip(&c, &r).unwrap().values() {
            assert!((v - 10.0).abs() < 1e-6);
        }
    }

    #[test]
    fn orders_longer_than_the_sentence_contribute_zero() {
        let (c, r) = corpus(&[("a", "a dog barks", &["a dog barks"]), ("b", "rain falls hard", &["rain falls hard"])]);
        assert!((cider_per_clip(&c, &r).unwrap()["a"] - 7.5).abs() < 1e-12);
    }

    #[test]
    fn matches_reference_implementation() {
        let (c, r) = corpus(&[
            ("a", "a dog barks loudly in the yard", &["a dog is barking in the yard", "the dog barks loudly"]),
            ("b", "rain falls on the roof", &["heavy rain falls on a metal roof", "rain is falling"]),
            ("c", "a car passes by on the road", &["a car drives by on a wet road", "traffic passes on the road"]),
        ]);
        let got = cider_per_clip(&c, &r).unwrap();
        for (clip, want) in [("a", 3.6731756610936617), ("b", 2.303299309919917), ("c", 2.841617207594123)] {
            assert!((got[clip] - want).abs() < 1e-9, "{clip}: {}", got[clip]);
        }
    }

    #[test]
    fn no_overlap_scores_zero() {
        let (c, r) = corpus(&[("a", "x y", &["a dog"]), ("b", "rain falls", &["rain falls"])]);
        assert_eq!(cider_per_clip(&c, &r).unwrap()["a"], 0.0);
    }

    #[test]
    fn single_clip_rejected() {
        let (c, r) = corpus(&[("a", "x", &["x"])]);
        assert!(matches!(cider(&c, &r), Err(Error::InsufficientCorpus(1))));
    }
}
