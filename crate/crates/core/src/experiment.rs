//! Config-driven pipeline: split, weight, train, predict, evaluate, report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{label_counts, load_dataset, LabeledDataset, Record, ScoreTable};
use crate::embedstore::{read_embeddings, synth_embeddings, EmbeddingSet, SynthParams, Variant};
use crate::error::{Error, Result};
use crate::gbdt::{predict_gbdt, train_gbdt, GbdtConfig, TreeEnsembleModel};
use crate::losses::{class_weights, ClassWeights};
use crate::metrics::{f1_scores, language_average, EvalReport};
use crate::par;
use crate::stratify::{iterative_stratified_split, language_seed, SplitFile, SplitResult};
use crate::trainer::{
    check_threshold, predict_proba, threshold_probs, train_head, HeadConfig, TrainedHead,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LanguageMode {
    All,
    Lang,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum EmbeddingSource {
    File { files: BTreeMap<String, PathBuf> },
    Synth(SynthParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    /// Offset the seed by a hash of the language code.
    pub per_language_seed: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
            seed: 42,
            per_language_seed: true,
        }
    }
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtModelConfig {
    #[serde(flatten)]
    pub gbdt: GbdtConfig,
    #[serde(default = "half")]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Head(HeadConfig),
    Gbdt(GbdtModelConfig),
}

impl ModelConfig {
    pub fn threshold(&self) -> f64 {
        match self {
            ModelConfig::Head(h) => h.threshold,
            ModelConfig::Gbdt(g) => g.threshold,
        }
    }

    /// Hyperparameter checks, reported as config errors under `model`.
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Head(h) => h
                .validate()
                .map_err(|e| Error::config("model", e.to_string())),
            ModelConfig::Gbdt(g) => {
                g.gbdt
                    .validate()
                    .map_err(|e| Error::config("model", e.to_string()))?;
                check_threshold(g.threshold)
                    .map_err(|e| Error::config("model.threshold", e.to_string()))
            }
        }
    }

    fn required_variant(&self) -> Variant {
        match self {
            ModelConfig::Head(h) => h.strategy.required_variant(),
            ModelConfig::Gbdt(_) => Variant::Shared,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_name() -> String {
    "model".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: BTreeMap<String, PathBuf>,
    pub embeddings: EmbeddingSource,
    #[serde(default)]
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub language_mode: LanguageMode,
    #[serde(default = "default_true")]
    pub class_weights: bool,
    pub output_dir: PathBuf,
    #[serde(default = "default_name")]
    pub model_name: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.datasets.values_mut().for_each(fix);
        if let EmbeddingSource::File { files } = &mut self.embeddings {
            files.values_mut().for_each(fix);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::config(
                "datasets",
                "at least one dataset is required",
            ));
        }
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::config(
                "split.train_fraction",
                format!("must lie in (0, 1), got {f}"),
            ));
        }
        self.model.validate()?;
        match &self.embeddings {
            EmbeddingSource::File { files } => {
                for lang in self.datasets.keys() {
                    if !files.contains_key(lang) {
                        return Err(Error::config(
                            format!("embeddings.files.{lang}"),
                            "no embedding file for this language",
                        ));
                    }
                }
            }
            EmbeddingSource::Synth(p) => {
                if p.variant != self.model.required_variant() {
                    return Err(Error::config(
                        "embeddings.variant",
                        format!("model needs {} embeddings", self.model.required_variant()),
                    ));
                }
            }
        }
        if self.model_name.is_empty() || self.model_name.contains(['/', '\\', ',']) {
            return Err(Error::config(
                "model_name",
                "must be non-empty without `/`, `\\` or `,`",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SavedModel {
    Head(TrainedHead),
    Gbdt(TreeEnsembleModel),
}

impl SavedModel {
    pub fn emotions(&self) -> &[String] {
        match self {
            SavedModel::Head(h) => &h.emotions,
            SavedModel::Gbdt(g) => &g.emotions,
        }
    }

    pub fn default_threshold(&self) -> f64 {
        match self {
            SavedModel::Head(h) => h.config.threshold,
            SavedModel::Gbdt(_) => 0.5,
        }
    }

    pub fn predict(
        &self,
        embs: &EmbeddingSet,
        threshold: f64,
    ) -> Result<(Array2<f64>, Array2<u8>)> {
        check_threshold(threshold)?;
        match self {
            SavedModel::Head(h) => {
                let probs = predict_proba(h, embs)?;
                let labels = threshold_probs(&probs, threshold);
                Ok((probs, labels))
            }
            SavedModel::Gbdt(g) => predict_gbdt(g, embs, threshold),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn fit_model(
    model: &ModelConfig,
    embs: &EmbeddingSet,
    ds: &LabeledDataset,
    weights: &ClassWeights,
) -> Result<SavedModel> {
    match model {
        ModelConfig::Head(h) => train_head(embs, ds, h, weights).map(SavedModel::Head),
        ModelConfig::Gbdt(g) => train_gbdt(embs, ds, &g.gbdt, weights).map(SavedModel::Gbdt),
    }
}

/// Class weights from a training set, or uniform when disabled.
pub fn training_weights(ds: &LabeledDataset, enabled: bool) -> Result<ClassWeights> {
    if enabled {
        class_weights(&label_counts(ds), ds.len())
    } else {
        Ok(ClassWeights::uniform(ds.schema().k()))
    }
}

struct LanguageData {
    dataset: LabeledDataset,
    embeddings: EmbeddingSet,
    split: SplitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub reports: Vec<EvalReport>,
    pub table: ScoreTable,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn prepare(cfg: &ExperimentConfig, lang: &str, path: &Path) -> Result<LanguageData> {
    let dataset = load_dataset(path, lang)?;
    let embeddings = match &cfg.embeddings {
        EmbeddingSource::File { files } => {
            let key = format!("embeddings.files.{lang}");
            let file = &files[lang];
            if !file.exists() {
                return Err(Error::config(
                    key,
                    format!("file not found: {}", file.display()),
                ));
            }
            let set = read_embeddings(file)?;
            if set.variant() != cfg.model.required_variant() {
                return Err(Error::config(
                    key,
                    format!(
                        "expected {} embeddings, found {}",
                        cfg.model.required_variant(),
                        set.variant()
                    ),
                ));
            }
            set.aligned_to(&dataset)
                .map_err(|e| Error::config(format!("embeddings.files.{lang}"), e.to_string()))?
        }
        EmbeddingSource::Synth(p) => synth_embeddings(&dataset, p)?,
    };
    let seed = if cfg.split.per_language_seed {
        language_seed(cfg.split.seed, lang)
    } else {
        cfg.split.seed
    };
    let split = iterative_stratified_split(&dataset, cfg.split.train_fraction, seed)?;
    Ok(LanguageData {
        dataset,
        embeddings,
        split,
    })
}

fn tagged(ds: &LabeledDataset, tag: &str) -> Vec<Record> {
    ds.records()
        .iter()
        .map(|r| Record {
            id: format!("{tag}/{}", r.id),
            ..r.clone()
        })
        .collect()
}

/// Evaluate on one language's validation split and write its artifacts.
fn evaluate_language(
    model: &SavedModel,
    data: &LanguageData,
    threshold: f64,
    dir: &Path,
) -> Result<EvalReport> {
    create_dir(dir)?;
    let val = data.dataset.subset(&data.split.val_indices)?;
    let val_embs = data.embeddings.aligned_to(&val)?;
    let (_, labels) = model.predict(&val_embs, threshold)?;
    let report = f1_scores(&labels, &val.label_matrix())?
        .with_labels(data.dataset.language(), data.dataset.schema().emotions());

    let predicted: Vec<Record> = val
        .records()
        .iter()
        .zip(labels.rows())
        .map(|(r, row)| Record {
            labels: row.to_vec(),
            ..r.clone()
        })
        .collect();
    LabeledDataset::new(val.language(), val.schema().clone(), predicted)?
        .save(dir.join("predictions.csv"))?;
    write_json(
        &dir.join("split.json"),
        &SplitFile::new(&data.dataset, &data.split),
    )?;
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let langs: Vec<(&String, &PathBuf)> = cfg.datasets.iter().collect();
    let data: Vec<LanguageData> = par::map_slice(&langs, |(lang, path)| prepare(cfg, lang, path))
        .into_iter()
        .collect::<Result<_>>()?;
    create_dir(&cfg.output_dir)?;
    let threshold = cfg.model.threshold();

    let reports: Vec<EvalReport> = match cfg.language_mode {
        LanguageMode::Lang => par::map_slice(&data, |d| {
            let dir = cfg.output_dir.join(d.dataset.language());
            let train = d.dataset.subset(&d.split.train_indices)?;
            let weights = training_weights(&train, cfg.class_weights)?;
            let model = fit_model(&cfg.model, &d.embeddings, &train, &weights)?;
            let report = evaluate_language(&model, d, threshold, &dir)?;
            model.save(dir.join("model.json"))?;
            Ok(report)
        })
        .into_iter()
        .collect::<Result<_>>()?,
        LanguageMode::All => {
            let schema = data[0].dataset.schema().clone();
            let mut records = Vec::new();
            let mut parts = Vec::new();
            for d in &data {
                if d.dataset.schema() != &schema {
                    return Err(Error::config(
                        format!("datasets.{}", d.dataset.language()),
                        "ALL mode needs identical emotion columns in every language",
                    ));
                }
                let train = d.dataset.subset(&d.split.train_indices)?;
                records.extend(tagged(&train, d.dataset.language()));
                parts.push((d.dataset.language(), d.embeddings.aligned_to(&train)?));
            }
            let union = LabeledDataset::new("ALL", schema, records)?;
            let refs: Vec<(&str, &EmbeddingSet)> = parts.iter().map(|(t, e)| (*t, e)).collect();
            let union_embs = EmbeddingSet::concat_tagged(&refs)?;
            let weights = training_weights(&union, cfg.class_weights)?;
            let model = fit_model(&cfg.model, &union_embs, &union, &weights)?;
            model.save(cfg.output_dir.join("model.json"))?;
            par::map_slice(&data, |d| {
                evaluate_language(
                    &model,
                    d,
                    threshold,
                    &cfg.output_dir.join(d.dataset.language()),
                )
            })
            .into_iter()
            .collect::<Result<_>>()?
        }
    };

    let table = ScoreTable::new(
        vec![cfg.model_name.clone()],
        reports.iter().map(|r| r.language.clone()).collect(),
        vec![reports.iter().map(|r| Some(r.macro_f1 * 100.0)).collect()],
    )?;
    let (md, csv) = render_report(&table);
    write_text(&cfg.output_dir.join("report.md"), &md)?;
    write_text(&cfg.output_dir.join("report.csv"), &csv)?;
    write_json(&cfg.output_dir.join("reports.json"), &reports)?;
    Ok(ExperimentOutcome { reports, table })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.2}"))
}

/// Languages as rows, models as columns, two decimals, `-` for missing
/// entries and a final `average` row over present scores.
pub fn render_report(table: &ScoreTable) -> (String, String) {
    let models = table.models();
    let averages: Vec<Option<f64>> = models
        .iter()
        .map(|m| language_average(table, m).ok())
        .collect();
    let rows: Vec<(String, Vec<String>)> = table
        .languages()
        .iter()
        .enumerate()
        .map(|(j, lang)| {
            let cells = models
                .iter()
                .map(|m| cell(table.model_scores(m).ok().and_then(|s| s[j])))
                .collect();
            (lang.clone(), cells)
        })
        .chain(std::iter::once((
            "average".to_owned(),
            averages.iter().map(|a| cell(*a)).collect(),
        )))
        .collect();

    let mut md = String::new();
    let _ = writeln!(md, "| language | {} |", models.join(" | "));
    let _ = writeln!(md, "|---|{}", "---:|".repeat(models.len()));
    for (lang, cells) in &rows {
        let _ = writeln!(md, "| {lang} | {} |", cells.join(" | "));
    }

    let mut csv = String::new();
    let _ = writeln!(csv, "language,{}", models.join(","));
    for (lang, cells) in &rows {
        let _ = writeln!(csv, "{lang},{}", cells.join(","));
    }
    (md, csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_score_table;

    #[test]
    fn report_layout() {
        let t = ScoreTable::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![vec![Some(50.0), Some(10.0)], vec![Some(40.123), None]],
        )
        .unwrap();
        let (md, csv) = render_report(&t);
        assert_eq!(
            csv,
            "language,a,b\nx,50.00,40.12\ny,10.00,-\naverage,30.00,40.12\n"
        );
        assert!(md.starts_with("| language | a | b |\n|---|---:|---:|\n| x | 50.00 | 40.12 |"));
        let back = read_score_table(csv.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back.score("a", "y").unwrap(), Some(10.0));
        assert_eq!(back.score("b", "y").unwrap(), None);
        assert_eq!(back.reported_average("a").unwrap(), Some(30.0));
    }

    #[test]
    fn single_cell() {
        let t =
            ScoreTable::new(vec!["m".into()], vec!["x".into()], vec![vec![Some(12.345)]]).unwrap();
        let (_, csv) = render_report(&t);
        assert_eq!(csv, "language,m\nx,12.35\naverage,12.35\n");
    }

    #[test]
    fn config_parsing_and_keys() {
        let cfg = ExperimentConfig::from_json(
            r#"{"datasets":{"eng":"eng.csv"},
                "embeddings":{"source":"file","files":{}},
                "model":{"kind":"gbdt","n_trees":5},
                "language_mode":"LANG","output_dir":"out"}"#,
        )
        .unwrap();
        match cfg.model {
            ModelConfig::Gbdt(g) => {
                assert_eq!(g.gbdt.n_trees, 5);
                assert_eq!(g.gbdt.max_depth, 4);
                assert_eq!(g.threshold, 0.5);
            }
            _ => panic!("wrong model kind"),
        }
        match cfg.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "embeddings.files.eng"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ExperimentConfig::from_json(r#"{"datasets":{}, "bogus":1}"#).is_err());
    }
}
