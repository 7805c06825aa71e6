use super::{ngram_counts, pair_up, Candidates, ReferenceSet};
use crate::error::{Error, Result};

/// Clipped matches and total candidate n-grams of order `n`.
fn clipped(candidate: &[String], references: &[Vec<String>], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let total = cand.values().sum();
    let mut matched = 0;
    for (gram, &count) in &cand {
        let max_ref = references
            .iter()
            .map(|r| ngram_counts(r, n).get(gram).copied().unwrap_or(0))
            .max()
            .unwrap_or(0);
        matched += count.min(max_ref);
    }
    (matched, total)
}

/// Reference length closest to `c`; ties go to the shorter reference.
fn closest_ref_len(c: usize, references: &[Vec<String>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

fn combine(matched: &[usize], totals: &[usize], c: usize, r: usize, epsilon: f64) -> f64 {
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for (&m, &t) in matched.iter().zip(totals) {
        let p = if t == 0 {
            0.0
        } else if m == 0 {
            epsilon / t as f64
        } else {
            m as f64 / t as f64
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * (log_sum / matched.len() as f64).exp()
}

fn check_order(n: usize) -> Result<()> {
    if !(1..=4).contains(&n) {
        return Err(Error::InvalidConfig(format!("BLEU order must be in 1..=4, got {n}")));
    }
    Ok(())
}

/// Corpus BLEU-n without smoothing.
pub fn bleu_n(candidates: &Candidates, refs: &[ReferenceSet], n: usize) -> Result<f64> {
    bleu_n_smoothed(candidates, refs, n, 0.0)
}

/// Corpus BLEU-n; a zero match count at some order is replaced by
/// `epsilon` (0 disables smoothing).
pub fn bleu_n_smoothed(candidates: &Candidates, refs: &[ReferenceSet], n: usize, epsilon: f64) -> Result<f64> {
    check_order(n)?;
    let pairs = pair_up(candidates, refs)?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("BLEU candidates"));
    }
    let mut matched = vec![0; n];
    let mut totals = vec![0; n];
    let (mut c, mut r) = (0, 0);
    for p in &pairs {
        for i in 0..n {
            let (m, t) = clipped(&p.candidate, &p.references, i + 1);
            matched[i] += m;
            totals[i] += t;
        }
        c += p.candidate.len();
        r += closest_ref_len(p.candidate.len(), &p.references);
    }
    Ok(combine(&matched, &totals, c, r, epsilon))
}

/// BLEU-n of a single tokenized candidate.
pub fn sentence_bleu(candidate: &[String], references: &[Vec<String>], n: usize, epsilon: f64) -> f64 {
    let (matched, totals): (Vec<usize>, Vec<usize>) =
        (1..=n).map(|i| clipped(candidate, references, i)).unzip();
    let r = closest_ref_len(candidate.len(), references);
    combine(&matched, &totals, candidate.len(), r, epsilon)
}

#[cfg(test)]
mod tests {
    use super::super::tests::corpus;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let (c, r) = corpus(&[("a", "the cat sat", &["the cat sat down"])]);
        let expected = (-1.0f64 / 3.0).exp();
        assert!((bleu_n(&c, &r, 2).unwrap() - expected).abs() < 1e-15);

        let (c, r) = corpus(&[("a", "dog barks", &["dog barks"])]);
        assert_eq!(bleu_n(&c, &r, 2).unwrap(), 1.0);

        let (c, r) = corpus(&[("a", "barks dog", &["dog barks"])]);
        assert_eq!(bleu_n(&c, &r, 2).unwrap(), 0.0);
        assert!(bleu_n_smoothed(&c, &r, 2, 0.1).unwrap() > 0.0);
    }

    #[test]
    fn clipping_and_closest_length() {
        // "the the the" vs "the cat": unigram precision 1/3.
        let (c, r) = corpus(&[("a", "the the the", &["the cat", "a cat on the mat"])]);
        assert!((bleu_n(&c, &r, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(closest_ref_len(3, &[vec!["x".into(); 2], vec!["x".into(); 4]]), 2);
    }

    #[test]
    fn higher_order_can_score_higher() {
        // Clipping caps unigram precision at 2/3 while both bigrams match.
        let (c, r) = corpus(&[("a", "y x y", &["x y x"])]);
        assert!(bleu_n(&c, &r, 2).unwrap() > bleu_n(&c, &r, 1).unwrap());
        // Pooling clips: the one-word miss adds no bigram slot.
        let (c, r) = corpus(&[("a", "q", &["x y"]), ("b", "x y", &["x y"])]);
        assert!(bleu_n(&c, &r, 2).unwrap() > bleu_n(&c, &r, 1).unwrap());
    }

    #[test]
    fn order_out_of_range() {
        let (c, r) = corpus(&[("a", "x", &["x"])]);
        assert!(bleu_n(&c, &r, 0).is_err());
        assert!(bleu_n(&c, &r, 5).is_err());
    }

    proptest! {
        /// Holds for one clip whose candidate repeats no word: every matched
        /// (n+1)-gram is a run of matched n-grams, so precisions fall with n.
        #[test]
        fn non_increasing_in_n_without_repeats(
            cand in prop::collection::hash_set(0u8..12, 1..8),
            refs in prop::collection::vec(prop::collection::vec(0u8..12, 1..10), 1..4),
        ) {
            let words = |v: &[u8]| v.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" ");
            let cand: Vec<u8> = cand.into_iter().collect();
            let c: Candidates = [("a".to_string(), words(&cand))].into();
            let r = vec![ReferenceSet::new("a", refs.iter().map(|x| words(x))).unwrap()];
            let mut prev = 1.0;
            for n in 1..=4 {
                let b = bleu_n(&c, &r, n).unwrap();
                prop_assert!((0.0..=1.0).contains(&b));
                prop_assert!(b <= prev + 1e-12);
                prev = b;
            }
        }

        #[test]
        fn unigram_bleu_is_order_blind(
            mut words in prop::collection::vec(0u8..6, 1..10),
            reference in prop::collection::vec(0u8..6, 1..10),
        ) {
            let join = |v: &[u8]| v.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" ");
            let r = vec![ReferenceSet::new("a", [join(&reference)]).unwrap()];
            let before = bleu_n(&[("a".to_string(), join(&words))].into(), &r, 1).unwrap();
            words.reverse();
            let after = bleu_n(&[("a".to_string(), join(&words))].into(), &r, 1).unwrap();
            prop_assert_eq!(before, after);
        }
    }
}
