//! Multilabel emotion datasets and model score tables.
//!
//! Datasets are CSV files with header `id,text,<emotion_1>,...,<emotion_k>`;
//! the emotion inventory is whatever the header lists. Score tables hold
//! macro-F1 percentages, either model-major (`model,<lang_1>,...`) or
//! language-major (`language,<model_1>,...`, optionally closed by an
//! `average` row) as printed in result appendices.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered emotion inventory of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct EmotionSchema {
    emotions: Vec<String>,
}

impl EmotionSchema {
    pub fn new<S: Into<String>>(emotions: impl IntoIterator<Item = S>) -> Result<Self> {
        let emotions: Vec<String> = emotions.into_iter().map(Into::into).collect();
        if emotions.is_empty() {
            return Err(Error::Schema("emotion list is empty".into()));
        }
        let mut seen = HashSet::new();
        for e in &emotions {
            if e.is_empty() {
                return Err(Error::Schema("empty emotion name".into()));
            }
            if e.chars().any(char::is_uppercase) {
                return Err(Error::Schema(format!(
                    "emotion name `{e}` is not lowercase"
                )));
            }
            if !seen.insert(e.as_str()) {
                return Err(Error::Schema(format!("duplicate emotion `{e}`")));
            }
        }
        Ok(EmotionSchema { emotions })
    }

    pub fn emotions(&self) -> &[String] {
        &self.emotions
    }

    pub fn k(&self) -> usize {
        self.emotions.len()
    }

    pub fn index_of(&self, emotion: &str) -> Option<usize> {
        self.emotions.iter().position(|e| e == emotion)
    }
}

impl TryFrom<Vec<String>> for EmotionSchema {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        EmotionSchema::new(v)
    }
}

impl From<EmotionSchema> for Vec<String> {
    fn from(s: EmotionSchema) -> Self {
        s.emotions
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDataset {
    language: String,
    schema: EmotionSchema,
    records: Vec<Record>,
}

impl LabeledDataset {
    pub fn new(
        language: impl Into<String>,
        schema: EmotionSchema,
        records: Vec<Record>,
    ) -> Result<Self> {
        let k = schema.k();
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate record id `{}`",
                    r.id
                )));
            }
            if r.labels.len() != k {
                return Err(Error::Shape(format!(
                    "record `{}` has {} labels, schema has {k}",
                    r.id,
                    r.labels.len()
                )));
            }
            if r.labels.iter().any(|&l| l > 1) {
                return Err(Error::InvalidArgument(format!(
                    "record `{}` has a label outside {{0,1}}",
                    r.id
                )));
            }
        }
        Ok(LabeledDataset {
            language: language.into(),
            schema,
            records,
        })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn schema(&self) -> &EmotionSchema {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    /// Gold labels as an `n × k` matrix.
    pub fn label_matrix(&self) -> Array2<u8> {
        let k = self.schema.k();
        let mut m = Array2::zeros((self.len(), k));
        for (i, r) in self.records.iter().enumerate() {
            for (j, &l) in r.labels.iter().enumerate() {
                m[[i, j]] = l;
            }
        }
        m
    }

    /// New dataset holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let records = indices
            .iter()
            .map(|&i| {
                self.records
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("record index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(self.language.clone(), self.schema.clone(), records)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_label_csv(
            writer,
            &self.schema,
            self.records
                .iter()
                .map(|r| (r.id.as_str(), r.text.as_str(), r.labels.as_slice())),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Write rows in dataset layout. Also used for prediction files.
pub fn write_label_csv<'a, W, I>(writer: W, schema: &EmotionSchema, rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a str, &'a [u8])>,
{
    let csv_err = |source| Error::Csv {
        path: "<writer>".into(),
        source,
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id", "text"];
    header.extend(schema.emotions().iter().map(String::as_str));
    w.write_record(&header).map_err(csv_err)?;
    for (id, text, labels) in rows {
        let mut row: Vec<String> = Vec::with_capacity(labels.len() + 2);
        row.push(id.to_owned());
        row.push(text.to_owned());
        row.extend(labels.iter().map(|l| l.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>, language: &str) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, language, path)
}

pub fn read_dataset<R: Read>(reader: R, language: &str, origin: &Path) -> Result<LabeledDataset> {
    let csv_err = |source| Error::Csv {
        path: origin.to_path_buf(),
        source,
    };
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.first().map(|c| c.trim()) != Some("id") {
        return Err(parse_err(1, "missing `id` column (expected first)".into()));
    }
    if cols.get(1).map(|c| c.trim()) != Some("text") {
        return Err(parse_err(
            1,
            "missing `text` column (expected second)".into(),
        ));
    }
    let emotions: Vec<String> = cols[2..].iter().map(|c| c.trim().to_lowercase()).collect();
    let schema = EmotionSchema::new(emotions).map_err(|e| parse_err(1, e.to_string()))?;
    let k = schema.k();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != k + 2 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", k + 2, row.len()),
            ));
        }
        let id = row[0].to_owned();
        if !seen.insert(id.clone()) {
            return Err(parse_err(line, format!("duplicate id `{id}`")));
        }
        let labels = (0..k)
            .map(|j| match row[j + 2].trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(parse_err(
                    line,
                    format!(
                        "label `{other}` for `{}` is not 0 or 1",
                        schema.emotions()[j]
                    ),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(Record {
            id,
            text: row[1].to_owned(),
            labels,
        });
    }
    LabeledDataset::new(language, schema, records)
}

/// Per-emotion positive/negative counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCount {
    pub positives: usize,
    pub negatives: usize,
}

impl LabelCount {
    pub fn total(&self) -> usize {
        self.positives + self.negatives
    }
}

pub fn label_counts(ds: &LabeledDataset) -> Vec<LabelCount> {
    let n = ds.len();
    (0..ds.schema().k())
        .map(|j| {
            let positives = ds.records().iter().filter(|r| r.labels[j] == 1).count();
            LabelCount {
                positives,
                negatives: n - positives,
            }
        })
        .collect()
}

/// Model × language grid of macro-F1 percentages; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    models: Vec<String>,
    languages: Vec<String>,
    scores: Vec<Vec<Option<f64>>>,
    /// Averages printed alongside a language-major table, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reported_average: Option<Vec<Option<f64>>>,
}

impl ScoreTable {
    pub fn new(
        models: Vec<String>,
        languages: Vec<String>,
        scores: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if scores.len() != models.len() {
            return Err(Error::Shape(format!(
                "{} score rows for {} models",
                scores.len(),
                models.len()
            )));
        }
        let mut seen = HashSet::new();
        for m in &models {
            if !seen.insert(m.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate model name `{m}`"
                )));
            }
        }
        let mut seen = HashSet::new();
        for l in &languages {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate language `{l}`")));
            }
        }
        for (m, row) in models.iter().zip(&scores) {
            if row.len() != languages.len() {
                return Err(Error::Shape(format!(
                    "model `{m}` has {} scores for {} languages",
                    row.len(),
                    languages.len()
                )));
            }
            for s in row.iter().flatten() {
                if !(0.0..=100.0).contains(s) {
                    return Err(Error::InvalidArgument(format!(
                        "score {s} for `{m}` outside [0, 100]"
                    )));
                }
            }
        }
        Ok(ScoreTable {
            models,
            languages,
            scores,
            reported_average: None,
        })
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn model_index(&self, model: &str) -> Result<usize> {
        self.models
            .iter()
            .position(|m| m == model)
            .ok_or_else(|| Error::Unknown {
                what: "model",
                name: model.to_owned(),
            })
    }

    pub fn language_index(&self, language: &str) -> Result<usize> {
        self.languages
            .iter()
            .position(|l| l == language)
            .ok_or_else(|| Error::Unknown {
                what: "language",
                name: language.to_owned(),
            })
    }

    /// All language scores of one model, in language order.
    pub fn model_scores(&self, model: &str) -> Result<&[Option<f64>]> {
        Ok(&self.scores[self.model_index(model)?])
    }

    pub fn score(&self, model: &str, language: &str) -> Result<Option<f64>> {
        Ok(self.scores[self.model_index(model)?][self.language_index(language)?])
    }

    pub fn reported_average(&self, model: &str) -> Result<Option<f64>> {
        let i = self.model_index(model)?;
        Ok(self.reported_average.as_ref().and_then(|a| a[i]))
    }

    /// Write in model-major layout, missing cells as `-`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: "<writer>".into(),
            source,
        };
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["model".to_owned()];
        header.extend(self.languages.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (m, row) in self.models.iter().zip(&self.scores) {
            let mut out = vec![m.clone()];
            out.extend(row.iter().map(|s| match s {
                Some(v) => v.to_string(),
                None => "-".to_owned(),
            }));
            w.write_record(&out).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }
}

fn parse_score(cell: &str) -> std::result::Result<Option<f64>, String> {
    let cell = cell.trim();
    if cell.is_empty() || cell == "-" {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("score `{cell}` is not numeric"))
}

pub fn load_score_table(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_score_table(file, path)
}

pub fn read_score_table<R: Read>(reader: R, origin: &Path) -> Result<ScoreTable> {
    let csv_err = |source| Error::Csv {
        path: origin.to_path_buf(),
        source,
    };
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let corner = header.get(0).unwrap_or("").trim().to_lowercase();
    let model_major = match corner.as_str() {
        "model" => true,
        "language" | "lang" => false,
        other => {
            return Err(parse_err(
                1,
                format!("first header cell must be `model` or `language`, found `{other}`"),
            ))
        }
    };
    let columns: Vec<String> = header.iter().skip(1).map(|c| c.trim().to_owned()).collect();

    let mut row_names = Vec::new();
    let mut grid = Vec::new();
    let mut average = None;
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != columns.len() + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", columns.len() + 1, row.len()),
            ));
        }
        let name = row[0].trim().to_owned();
        let values = row
            .iter()
            .skip(1)
            .map(parse_score)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|m| parse_err(line, m))?;
        if !model_major && name.eq_ignore_ascii_case("average") {
            average = Some(values);
            continue;
        }
        if model_major && row_names.contains(&name) {
            return Err(parse_err(line, format!("duplicate model name `{name}`")));
        }
        row_names.push(name);
        grid.push(values);
    }

    let mut table = if model_major {
        ScoreTable::new(row_names, columns, grid)?
    } else {
        let scores = (0..columns.len())
            .map(|m| grid.iter().map(|r| r[m]).collect())
            .collect();
        ScoreTable::new(columns, row_names, scores)?
    };
    table.reported_average = average;
    Ok(table)
}
