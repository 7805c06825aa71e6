//! Shared inputs for the criterion benches.

use soundscribe::demo;
use soundscribe::harness::Experiment;
use soundscribe::metrics::{Candidates, ReferenceSet};

pub fn toy_experiment() -> Experiment {
    demo::experiment(7).expect("built-in toy world")
}

/// A corpus of `n` clips whose candidates paraphrase their references.
pub fn metric_corpus(n: usize) -> (Candidates, Vec<ReferenceSet>) {
    let sources = ["dog", "car", "bird", "cat", "rain", "bell", "door", "man"];
    let mut cands = Candidates::new();
    let mut refs = Vec::with_capacity(n);
    for i in 0..n {
        let s = sources[i % sources.len()];
        let id = format!("clip{i}");
        cands.insert(id.clone(), format!("a {s} makes noise while people talk {i}"));
        refs.push(
            ReferenceSet::new(
                id,
                [
                    format!("a {s} makes noise"),
                    format!("people talk while a {s} makes a noise"),
                    format!("the {s} is loud {i}"),
                ],
            )
            .expect("non-empty references"),
        );
    }
    (cands, refs)
}
