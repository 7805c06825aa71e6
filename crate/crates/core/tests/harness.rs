use std::sync::Arc;

use soundscribe::harness::{
    read_table, sidecar_path, table_to_string, write_table, AblationRow, AblationVariant, Backends, Experiment, Manifest,
    ManifestEntry, Method, Sidecar, SweepAxis, SweepRow, SweepSpec, GREEDY_MODEL, NO_KEYWORDS,
};
use soundscribe::{demo, DecodeConfig, Error, KeywordList, PromptTemplate};

const SEED: u64 = 7;

fn exp() -> Experiment {
    demo::experiment(SEED).unwrap()
}

fn variants() -> Vec<AblationVariant> {
    vec![AblationVariant::none(), AblationVariant::list("toy", demo::keywords())]
}

#[test]
fn ablation_grid_shape() {
    let rows = exp().run_ablation(&variants(), &demo::config(), 1, true).unwrap();
    assert_eq!(rows.len(), 5);
    let cells: Vec<(&str, bool)> = rows[..4].iter().map(|r| (r.keyword_list.as_str(), r.magic_search)).collect();
    assert_eq!(cells, [(NO_KEYWORDS, true), (NO_KEYWORDS, false), ("toy", true), ("toy", false)]);
    assert_eq!(rows[4].model, GREEDY_MODEL);
    let best = rows.iter().map(|r| r.nlg_mean).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(rows[2].nlg_mean, best, "{rows:?}");
    for r in &rows {
        assert!((r.nlg_mean_x10 - 10.0 * r.nlg_mean).abs() < 1e-12);
    }
}

#[test]
fn ablation_cells_match_direct_runs() {
    let e = exp();
    let cfg = demo::config();
    let rows = e.run_ablation(&variants(), &cfg, 1, true).unwrap();
    let no_magic = DecodeConfig { w_magic: 0.0, ..cfg.clone() };
    let empty = KeywordList::from_entries(Vec::<String>::new(), "x");
    let direct = [
        e.run_with_list(&empty, &cfg, 0, Method::Guided).unwrap(),
        e.run_with_list(&empty, &no_magic, 0, Method::Guided).unwrap(),
        e.run_batch(&cfg, 1).unwrap(),
        e.run_batch(&no_magic, 1).unwrap(),
        e.run_greedy(&cfg).unwrap(),
    ];
    for (row, batch) in rows.iter().zip(&direct) {
        assert_eq!(row.nlg_mean, batch.report.nlg_mean());
    }
    for c in direct[0].captions.values() {
        assert_eq!(c.prompt, "This is a sound of");
        assert!(c.keywords_used.is_empty());
    }
}

#[test]
fn keywords_and_guidance_beat_greedy() {
    let e = exp();
    let guided = e.run_batch(&demo::config(), 1).unwrap().report.nlg_mean();
    let greedy = e.run_greedy(&demo::config()).unwrap().report.nlg_mean();
    let bare = e.run_batch(&demo::config(), 0).unwrap().report.nlg_mean();
    assert!(guided > greedy && guided >= bare, "{guided} {greedy} {bare}");
}

#[test]
fn ten_clip_subset_prefers_guidance() {
    let mut e = exp();
    e.manifest = Manifest::new(e.manifest.entries[..10].to_vec()).unwrap();
    let guided = e.run_batch(&demo::config(), 1).unwrap();
    let greedy = e.run_greedy(&demo::config()).unwrap();
    assert_eq!(guided.captions.len(), 10);
    assert!(guided.report.nlg_mean() > greedy.report.nlg_mean());
}

#[test]
fn runs_are_reproducible() {
    let spec = SweepSpec {
        axis: SweepAxis::Tau,
        values: vec!["0".into(), "10".into(), "18.6612".into()],
        fixed: demo::config(),
        l: 1,
    };
    let a = table_to_string(&exp().run_sweep(&spec).unwrap()).unwrap();
    let b = table_to_string(&exp().run_sweep(&spec).unwrap()).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| table_to_string(&exp().run_sweep(&spec).unwrap()).unwrap());
    assert_eq!(a, c);
    assert!(a.starts_with("axis,value,bleu2,bleu3,meteor,cider,nlg_mean,nlg_mean_x10,best\n"));
}

#[test]
fn sweep_rows_follow_value_order() {
    let e = exp();
    let values = ["0", "0.5", "1", "2"];
    let spec = |vals: &[&str]| SweepSpec {
        axis: SweepAxis::WMagic,
        values: vals.iter().map(|v| v.to_string()).collect(),
        fixed: demo::config(),
        l: 1,
    };
    let forward = e.run_sweep(&spec(&values)).unwrap();
    let mut rev = values;
    rev.reverse();
    let backward = e.run_sweep(&spec(&rev)).unwrap();
    assert_eq!(forward.iter().map(|r| r.value.as_str()).collect::<Vec<_>>(), values);
    for r in &forward {
        let twin = backward.iter().find(|b| b.value == r.value).unwrap();
        assert_eq!(r.nlg_mean, twin.nlg_mean);
    }
    assert_eq!(forward.iter().filter(|r| r.best).count(), 1);
    let best = forward.iter().find(|r| r.best).unwrap();
    assert!(forward.iter().all(|r| r.nlg_mean <= best.nlg_mean));
}

#[test]
fn single_value_sweep_equals_batch() {
    let e = exp();
    let cfg = demo::config();
    for (axis, value) in [(SweepAxis::K, "4"), (SweepAxis::L, "1"), (SweepAxis::WConfidence, "0.5")] {
        let rows = e
            .run_sweep(&SweepSpec {
                axis,
                values: vec![value.into()],
                fixed: cfg.clone(),
                l: 1,
            })
            .unwrap();
        let batch = e.run_batch(&cfg, 1).unwrap().report;
        assert_eq!(rows[0].nlg_mean, batch.nlg_mean(), "{axis}");
        assert_eq!(rows[0].bleu2, batch.bleu2);
        assert!(rows[0].best);
    }
}

#[test]
fn keyword_count_helps_from_zero_to_one() {
    let rows = exp()
        .run_sweep(&SweepSpec {
            axis: SweepAxis::L,
            values: vec!["0".into(), "1".into(), "2".into()],
            fixed: demo::config(),
            l: 0,
        })
        .unwrap();
    assert!(rows[1].nlg_mean >= rows[0].nlg_mean, "{rows:?}");
}

#[test]
fn keyword_list_axis_uses_named_lists() {
    let e = exp().with_list("short", KeywordList::from_entries(["dog", "cat"], "short"));
    let rows = e
        .run_sweep(&SweepSpec {
            axis: SweepAxis::KeywordList,
            values: vec!["short".into()],
            fixed: demo::config(),
            l: 1,
        })
        .unwrap();
    assert_eq!(rows[0].axis, "keyword_list");
    let spec = SweepSpec {
        axis: SweepAxis::KeywordList,
        values: vec!["missing".into()],
        fixed: demo::config(),
        l: 1,
    };
    assert!(e.run_sweep(&spec).is_err());
}

#[test]
fn bad_sweep_values_are_rejected() {
    let e = exp();
    for (axis, value) in [(SweepAxis::K, "0"), (SweepAxis::Tau, "abc"), (SweepAxis::L, "99"), (SweepAxis::WMagic, "-1")] {
        let spec = SweepSpec {
            axis,
            values: vec![value.into()],
            fixed: demo::config(),
            l: 1,
        };
        assert!(e.run_sweep(&spec).is_err(), "{axis}={value}");
    }
    assert!("bogus".parse::<SweepAxis>().is_err());
    for a in SweepAxis::ALL {
        assert_eq!(a.name().parse::<SweepAxis>().unwrap(), a);
    }
}

#[test]
fn empty_manifest_is_an_error() {
    let mut e = exp();
    e.manifest = Manifest::new(vec![]).unwrap();
    assert!(matches!(e.run_batch(&demo::config(), 1), Err(Error::EmptyInput(_))));
    assert!(e.run_ablation(&[], &demo::config(), 1, false).is_err());
}

#[test]
fn failed_clips_are_flagged_and_scored_empty() {
    let mut entries = demo::manifest().entries;
    entries.push(ManifestEntry {
        clip_id: "ghost".into(),
        audio: "a ghost is wailing".into(),
        refs: vec!["a ghost is wailing.".into()],
    });
    let e = Experiment::new(
        Manifest::new(entries).unwrap(),
        Backends::new(Arc::new(demo::matcher(SEED)), Arc::new(demo::language_model().unwrap())),
        PromptTemplate::default(),
        demo::keywords(),
    );
    let r = e.run_batch(&demo::config(), 1).unwrap();
    assert_eq!(r.captions.len(), 20);
    assert!(r.failures["ghost"].contains("unknown clip"));
    assert_eq!(r.candidates()["ghost"], "");
    assert_eq!(r.report.per_clip["ghost"].meteor, 0.0);
}

#[test]
fn manifest_parsing() {
    let ok = "{\"clip_id\":\"a\",\"audio\":\"x.wav\"}\n\n{\"clip_id\":\"b\",\"audio\":\"y.wav\",\"refs\":[\"r\"]}\n";
    let m = Manifest::parse(ok, "m.jsonl".as_ref()).unwrap();
    assert_eq!(m.len(), 2);
    assert!(m.entries[0].refs.is_empty());
    let dup = "{\"clip_id\":\"a\",\"audio\":\"x\"}\n{\"clip_id\":\"a\",\"audio\":\"y\"}\n";
    assert!(matches!(Manifest::parse(dup, "m".as_ref()), Err(Error::DuplicateId(_))));
    match Manifest::parse("{\"clip_id\":\"a\",\"audio\":\"x\"}\n{oops}\n", "m".as_ref()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    assert!(m.references().is_err());
}

#[test]
fn tables_and_sidecars_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let e = exp();
    let ablation = e.run_ablation(&variants(), &demo::config(), 1, true).unwrap();
    let path = dir.path().join("ablation.csv");
    let config = serde_json::to_value(demo::config()).unwrap();
    write_table(&path, &ablation, &Sidecar::new("ablation", ablation.len(), 20, config.clone())).unwrap();
    let back: Vec<AblationRow> = read_table(&path).unwrap();
    assert_eq!(back, ablation);
    let meta: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
    assert_eq!(meta.rows, 5);
    assert_eq!(meta.config, config);
    assert_eq!(meta.nlg_basket, ["bleu2", "bleu3", "meteor", "cider"]);
    assert!(sidecar_path(&path).to_string_lossy().ends_with("ablation.csv.meta.json"));

    let sweep = e
        .run_sweep(&SweepSpec {
            axis: SweepAxis::WConfidence,
            values: vec!["0.1".into(), "0.5".into()],
            fixed: demo::config(),
            l: 1,
        })
        .unwrap();
    let path = dir.path().join("sweep.csv");
    write_table(&path, &sweep, &Sidecar::new("sweep", 2, 20, serde_json::Value::Null)).unwrap();
    let back: Vec<SweepRow> = read_table(&path).unwrap();
    assert_eq!(back, sweep);
}
