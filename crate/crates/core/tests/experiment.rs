mod common;

use std::collections::BTreeMap;
use std::path::Path;

use emoclass::experiment::{EmbeddingSource, LanguageMode, ModelConfig, SplitConfig};
use emoclass::{
    load_dataset, load_score_table, render_report, run_experiment, synth_dataset, Error,
    ExperimentConfig, HeadConfig, LabeledDataset, Record, Strategy, SynthParams, Variant,
};

fn write_copy(ds: &LabeledDataset, lang: &str, dir: &Path) -> std::path::PathBuf {
    let copy = LabeledDataset::new(lang, ds.schema().clone(), ds.records().to_vec()).unwrap();
    let path = dir.join(format!("{lang}.csv"));
    copy.save(&path).unwrap();
    path
}

fn config(
    datasets: BTreeMap<String, std::path::PathBuf>,
    out: &Path,
    mode: LanguageMode,
) -> ExperimentConfig {
    ExperimentConfig {
        datasets,
        embeddings: EmbeddingSource::Synth(SynthParams {
            d: 10,
            seed: 3,
            variant: Variant::Shared,
            noise: 0.05,
        }),
        split: SplitConfig {
            per_language_seed: false,
            ..SplitConfig::default()
        },
        model: ModelConfig::Head(HeadConfig::default()),
        language_mode: mode,
        class_weights: true,
        output_dir: out.to_path_buf(),
        model_name: "head".into(),
    }
}

#[test]
fn lang_mode_learns_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_dataset("eng", 200, 5, 0.3, 42).unwrap();
    let datasets = BTreeMap::from([("eng".to_string(), write_copy(&ds, "eng", dir.path()))]);
    let out = dir.path().join("out");
    let outcome = run_experiment(&config(datasets, &out, LanguageMode::Lang)).unwrap();
    assert!(
        outcome.reports[0].macro_f1 >= 0.95,
        "{}",
        outcome.reports[0].macro_f1
    );
    for file in [
        "eng/predictions.csv",
        "eng/model.json",
        "eng/report.json",
        "eng/split.json",
        "report.md",
        "report.csv",
    ] {
        assert!(out.join(file).exists(), "{file}");
    }
    let preds = load_dataset(out.join("eng/predictions.csv"), "eng").unwrap();
    assert_eq!(preds.len(), outcome.reports[0].n);
    assert_eq!(preds.schema(), ds.schema());
}

#[test]
fn all_mode_over_two_copies_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_dataset("base", 90, 3, 0.3, 5).unwrap();
    let datasets = BTreeMap::from([
        ("aaa".to_string(), write_copy(&ds, "aaa", dir.path())),
        ("bbb".to_string(), write_copy(&ds, "bbb", dir.path())),
    ]);
    let mut cfg = config(datasets, &dir.path().join("out"), LanguageMode::All);
    cfg.embeddings = EmbeddingSource::Synth(SynthParams {
        d: 10,
        seed: 3,
        variant: Variant::Shared,
        noise: 0.4,
    });
    let outcome = run_experiment(&cfg).unwrap();
    let (a, b) = (&outcome.reports[0], &outcome.reports[1]);
    assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
    for (x, y) in a.per_emotion.iter().zip(&b.per_emotion) {
        assert!((x.f1 - y.f1).abs() < 1e-12);
        assert_eq!((x.tp, x.fp, x.fn_), (y.tp, y.fp, y.fn_));
    }
}

#[test]
fn per_emotion_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_dataset("eng", 80, 3, 0.3, 2).unwrap();
    let datasets = BTreeMap::from([("eng".to_string(), write_copy(&ds, "eng", dir.path()))]);
    let mut cfg = config(datasets, &dir.path().join("out"), LanguageMode::Lang);
    cfg.model = ModelConfig::Head(HeadConfig {
        strategy: Strategy::PerEmotionEmbedding,
        epochs: 400,
        ..HeadConfig::default()
    });
    assert!(matches!(run_experiment(&cfg), Err(Error::Config { .. })));
    cfg.embeddings = EmbeddingSource::Synth(SynthParams {
        d: 10,
        seed: 3,
        variant: Variant::PerEmotion,
        noise: 0.05,
    });
    let outcome = run_experiment(&cfg).unwrap();
    assert!(
        outcome.reports[0].macro_f1 > 0.9,
        "{:?}",
        outcome.reports[0]
    );
}

#[test]
fn missing_embedding_file_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_dataset("eng", 20, 2, 0.5, 1).unwrap();
    let datasets = BTreeMap::from([("eng".to_string(), write_copy(&ds, "eng", dir.path()))]);
    let mut cfg = config(datasets, &dir.path().join("out"), LanguageMode::Lang);
    cfg.embeddings = EmbeddingSource::File {
        files: BTreeMap::from([("eng".to_string(), dir.path().join("missing.embs"))]),
    };
    match run_experiment(&cfg) {
        Err(Error::Config { key, .. }) => assert_eq!(key, "embeddings.files.eng"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn all_mode_rejects_mismatched_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth_dataset("eng", 20, 2, 0.5, 1).unwrap();
    let b = synth_dataset("deu", 20, 3, 0.5, 1).unwrap();
    let datasets = BTreeMap::from([
        ("eng".to_string(), write_copy(&a, "eng", dir.path())),
        ("deu".to_string(), write_copy(&b, "deu", dir.path())),
    ]);
    let cfg = config(datasets, &dir.path().join("out"), LanguageMode::All);
    assert!(matches!(run_experiment(&cfg), Err(Error::Config { .. })));
}

#[test]
fn config_file_paths_are_relative_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_dataset("eng", 40, 2, 0.4, 1).unwrap();
    write_copy(&ds, "eng", dir.path());
    let text = r#"{
        "datasets": {"eng": "eng.csv"},
        "embeddings": {"source": "synth", "d": 8, "seed": 1, "variant": "SHARED", "noise": 0.05},
        "model": {"kind": "gbdt", "n_trees": 10},
        "language_mode": "LANG",
        "output_dir": "out"
    }"#;
    std::fs::write(dir.path().join("cfg.json"), text).unwrap();
    let cfg = ExperimentConfig::load(dir.path().join("cfg.json")).unwrap();
    run_experiment(&cfg).unwrap();
    assert!(dir.path().join("out/eng/predictions.csv").exists());
}

#[test]
fn table_report_round_trips() {
    let table = load_score_table(common::fixture("table1_test_scores.csv")).unwrap();
    let (md, csv) = render_report(&table);
    let back =
        emoclass::dataset::read_score_table(csv.as_bytes(), Path::new("report.csv")).unwrap();
    assert_eq!(back.models(), table.models());
    for m in table.models() {
        for l in table.languages() {
            assert_eq!(back.score(m, l).unwrap(), table.score(m, l).unwrap());
        }
        let recomputed = emoclass::language_average(&table, m).unwrap();
        let printed = back.reported_average(m).unwrap().unwrap();
        assert!((printed - recomputed).abs() <= 0.005 + 1e-12);
    }
    assert!(md.contains("| amh | 50.29 | 51.18 | - |"));
    assert!(md.lines().last().unwrap().starts_with("| average |"));
}

#[test]
fn prediction_csv_mirrors_dataset_layout() {
    let dir = tempfile::tempdir().unwrap();
    let records = (0..30)
        .map(|i| Record {
            id: format!("q{i}"),
            text: format!("line, \"{i}\""),
            labels: vec![(i % 2) as u8, (i % 3 == 0) as u8],
        })
        .collect();
    let ds = LabeledDataset::new(
        "eng",
        emoclass::EmotionSchema::new(["joy", "fear"]).unwrap(),
        records,
    )
    .unwrap();
    let datasets = BTreeMap::from([("eng".to_string(), write_copy(&ds, "eng", dir.path()))]);
    let out = dir.path().join("out");
    run_experiment(&config(datasets, &out, LanguageMode::Lang)).unwrap();
    let header = std::fs::read_to_string(out.join("eng/predictions.csv")).unwrap();
    assert!(header.starts_with("id,text,joy,fear\n"));
}
