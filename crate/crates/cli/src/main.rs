mod overrides;

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emoclass::ensemble::Member;
use emoclass::experiment::{fit_model, training_weights, ModelConfig};
use emoclass::stats::ComparisonFile;
use emoclass::stratify::SplitFile;
use emoclass::{
    dev_weights, f1_scores, iterative_stratified_split, label_counts, load_dataset,
    load_score_table, read_embeddings, render_prompt, render_report, run_experiment, synth_dataset,
    synth_embeddings, weighted_vote, write_embeddings, EnsembleSpec, Error, ErrorKind,
    ExperimentConfig, LabeledDataset, PromptTemplate, Record, SavedModel, SynthParams,
};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "emoclass",
    version,
    about = "Multilabel emotion classification toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config document
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set model.epochs=50` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset CSV (`id,text,<emotion>...`)
    #[arg(long)]
    dataset: PathBuf,
    /// Language code; defaults to the file stem
    #[arg(long)]
    language: Option<String>,
}

impl DatasetArgs {
    fn load(&self) -> Result<LabeledDataset, Error> {
        load_dataset(
            &self.dataset,
            &language_of(&self.dataset, self.language.as_deref()),
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Iterative stratified train/validation split
    Split {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Offset the seed by a hash of the language code
        #[arg(long)]
        per_language_seed: bool,
        /// Split file (JSON, record ids)
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        train_csv: Option<PathBuf>,
        #[arg(long)]
        val_csv: Option<PathBuf>,
    },
    /// Per-emotion class weights as JSON
    Weights {
        #[command(flatten)]
        data: DatasetArgs,
        /// Restrict to the train side of a split file
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Render an encoder prompt
    Prompt {
        /// ME5, BGEV1 or BGEV2
        #[arg(long)]
        template: PromptTemplate,
        #[arg(long)]
        text: String,
        #[arg(long)]
        emotion: Option<String>,
        /// Comma-separated emotion list
        #[arg(long, value_delimiter = ',', required_unless_present = "dataset")]
        emotions: Vec<String>,
        /// Take the emotion list from a dataset header instead
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Synthetic datasets and embeddings
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Embed an existing dataset instead of generating one
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        language: Option<String>,
        /// Where to write a generated dataset
        #[arg(long)]
        dataset_out: Option<PathBuf>,
        /// EMBS output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a head or boosted-tree model
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        embeddings: PathBuf,
        /// Train on the train side of this split file
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict labels with a saved model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        embeddings: PathBuf,
        /// Predict only the validation side of this split file
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Prediction CSV (dataset layout)
        #[arg(long)]
        out: PathBuf,
        /// Optional probability CSV
        #[arg(long)]
        probs: Option<PathBuf>,
    },
    /// Per-emotion F1 and macro-F1 of a prediction file
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        language: Option<String>,
        /// Write the report as JSON
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Weighted vote over member prediction files
    Ensemble {
        /// `NAME=PATH`; NAME is looked up in the score table (repeatable)
        #[arg(long = "member", required = true)]
        members: Vec<String>,
        /// Development score table for weights
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Use this language's scores instead of cross-language averages
        #[arg(long)]
        language: Option<String>,
        /// Explicit comma-separated weights
        #[arg(long, value_delimiter = ',', conflicts_with = "scores")]
        weights: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nonparametric model comparisons on a score table
    Stats {
        #[arg(long)]
        table: PathBuf,
        /// Comparison spec JSON (`{"comparisons": [...]}`)
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Print the pairs and groups behind each comparison
        #[arg(long)]
        verbose: bool,
    },
    /// Render a score table as markdown and CSV
    Report {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        md: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a full experiment from a config file
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn language_of(path: &Path, given: Option<&str>) -> String {
    given.map(str::to_owned).unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "xx".into())
    })
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source: e,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn split_side(
    ds: &LabeledDataset,
    split: Option<&Path>,
    train: bool,
) -> Result<LabeledDataset, Error> {
    let Some(path) = split else {
        return Ok(ds.clone());
    };
    let file: SplitFile = read_json(path)?;
    let s = file.resolve(ds)?;
    ds.subset(if train {
        &s.train_indices
    } else {
        &s.val_indices
    })
}

fn with_labels(ds: &LabeledDataset, labels: &ndarray::Array2<u8>) -> Result<LabeledDataset, Error> {
    let records = ds
        .records()
        .iter()
        .zip(labels.rows())
        .map(|(r, row)| Record {
            labels: row.to_vec(),
            ..r.clone()
        })
        .collect();
    LabeledDataset::new(ds.language(), ds.schema().clone(), records)
}

fn train_document(doc: &mut Value) -> Result<(ModelConfig, bool), Error> {
    let obj = doc.as_object_mut().expect("config documents are objects");
    let model = obj
        .remove("model")
        .unwrap_or_else(|| json!({"kind": "head"}));
    let class_weights = match obj.remove("class_weights") {
        None => true,
        Some(Value::Bool(b)) => b,
        Some(other) => {
            return Err(Error::Config {
                key: "class_weights".into(),
                message: format!("expected a boolean, got {other}"),
            })
        }
    };
    if let Some(key) = obj.keys().next() {
        return Err(Error::Config {
            key: key.clone(),
            message: "unknown key (expected `model` or `class_weights`)".into(),
        });
    }
    let model: ModelConfig = overrides::decode(model, "model")?;
    model.validate()?;
    Ok((model, class_weights))
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Split {
            data,
            fraction,
            seed,
            per_language_seed,
            out,
            train_csv,
            val_csv,
        } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::Config {
                    key: "fraction".into(),
                    message: format!("must lie in (0, 1), got {fraction}"),
                });
            }
            let ds = data.load()?;
            let seed = if per_language_seed {
                emoclass::stratify::language_seed(seed, ds.language())
            } else {
                seed
            };
            let split = iterative_stratified_split(&ds, fraction, seed)?;
            let file = SplitFile::new(&ds, &split);
            write_file(&out, &(serde_json::to_string_pretty(&file)? + "\n"))?;
            if let Some(p) = train_csv {
                ds.subset(&split.train_indices)?.save(p)?;
            }
            if let Some(p) = val_csv {
                ds.subset(&split.val_indices)?.save(p)?;
            }
            println!(
                "{}: {} train / {} validation records",
                ds.language(),
                split.train_indices.len(),
                split.val_indices.len()
            );
        }
        Command::Weights { data, split } => {
            let ds = split_side(&data.load()?, split.as_deref(), true)?;
            let counts = label_counts(&ds);
            let w = emoclass::class_weights(&counts, ds.len())?;
            let mut out = serde_json::Map::new();
            for ((name, c), e) in ds.schema().emotions().iter().zip(&counts).zip(w.iter()) {
                out.insert(
                    name.clone(),
                    json!({"positives": c.positives, "negatives": c.negatives, "pos": e.pos, "neg": e.neg}),
                );
            }
            println!("{}", serde_json::to_string_pretty(&Value::Object(out))?);
        }
        Command::Prompt {
            template,
            text,
            emotion,
            emotions,
            dataset,
        } => {
            let list = match dataset {
                Some(p) => load_dataset(&p, &language_of(&p, None))?
                    .schema()
                    .emotions()
                    .to_vec(),
                None => emotions,
            };
            let mut stdout = std::io::stdout();
            let rendered = render_prompt(template, &text, emotion.as_deref(), &list)?;
            writeln!(stdout, "{rendered}").map_err(|e| io_err(Path::new("<stdout>"), e))?;
        }
        Command::Synth {
            cfg,
            dataset,
            language,
            dataset_out,
            out,
        } => {
            let mut doc = overrides::load_document(cfg.config.as_deref())?;
            overrides::apply(&mut doc, &cfg.set)?;
            let obj = doc.as_object_mut().expect("config documents are objects");
            let generate = obj.remove("generate");
            let defaults = serde_json::to_value(SynthParams::default())?;
            let mut merged = defaults;
            for (k, v) in std::mem::take(obj) {
                overrides::set_value(&mut merged, &k, v)?;
            }
            let params: SynthParams = overrides::decode(merged, "synth")?;
            let ds = match (dataset, generate) {
                (Some(p), None) => load_dataset(&p, &language_of(&p, language.as_deref()))?,
                (None, g) => {
                    let g = g.unwrap_or_else(|| json!({}));
                    let get = |k: &str, d: f64| g.get(k).and_then(Value::as_f64).unwrap_or(d);
                    let lang = language.unwrap_or_else(|| "syn".into());
                    let ds = synth_dataset(
                        &lang,
                        get("n", 200.0) as usize,
                        get("k", 5.0) as usize,
                        get("density", 0.3),
                        get("seed", params.seed as f64) as u64,
                    )?;
                    if let Some(p) = dataset_out {
                        ds.save(p)?;
                    }
                    ds
                }
                (Some(_), Some(_)) => {
                    return Err(Error::Config {
                        key: "generate".into(),
                        message: "cannot generate records when --dataset is given".into(),
                    })
                }
            };
            let set = synth_embeddings(&ds, &params)?;
            write_embeddings(&set, &out)?;
            println!(
                "wrote {} rows of dimension {} to {}",
                set.vectors().nrows(),
                set.d(),
                out.display()
            );
        }
        Command::Train {
            cfg,
            data,
            embeddings,
            split,
            out,
        } => {
            let mut doc = overrides::load_document(cfg.config.as_deref())?;
            overrides::apply(&mut doc, &cfg.set)?;
            let (model_cfg, use_weights) = train_document(&mut doc)?;
            let ds = split_side(&data.load()?, split.as_deref(), true)?;
            let embs = read_embeddings(&embeddings)?;
            let weights = training_weights(&ds, use_weights)?;
            let model = fit_model(&model_cfg, &embs, &ds, &weights)?;
            model.save(&out)?;
            println!(
                "trained on {} records, model written to {}",
                ds.len(),
                out.display()
            );
        }
        Command::Predict {
            model,
            data,
            embeddings,
            split,
            threshold,
            out,
            probs,
        } => {
            if let Some(t) = threshold {
                if !(t > 0.0 && t < 1.0) {
                    return Err(Error::Config {
                        key: "threshold".into(),
                        message: format!("must lie in (0, 1), got {t}"),
                    });
                }
            }
            let model = SavedModel::load(&model)?;
            let ds = split_side(&data.load()?, split.as_deref(), false)?;
            if model.emotions() != ds.schema().emotions() {
                return Err(Error::Shape(format!(
                    "model emotions {:?} differ from dataset emotions {:?}",
                    model.emotions(),
                    ds.schema().emotions()
                )));
            }
            let embs = read_embeddings(&embeddings)?.aligned_to(&ds)?;
            let (p, labels) =
                model.predict(&embs, threshold.unwrap_or(model.default_threshold()))?;
            with_labels(&ds, &labels)?.save(&out)?;
            if let Some(path) = probs {
                let mut text = format!("id,{}\n", ds.schema().emotions().join(","));
                for (r, row) in ds.records().iter().zip(p.rows()) {
                    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    text.push_str(&format!("{},{}\n", r.id, cells.join(",")));
                }
                write_file(&path, &text)?;
            }
            println!("wrote {} predictions to {}", ds.len(), out.display());
        }
        Command::Evaluate {
            pred,
            gold,
            language,
            json,
        } => {
            let lang = language_of(&gold, language.as_deref());
            let gold = load_dataset(&gold, &lang)?;
            let pred = load_dataset(&pred, &lang)?;
            if pred.schema() != gold.schema() {
                return Err(Error::Schema(
                    "prediction and gold emotion columns differ".into(),
                ));
            }
            let index: HashMap<&str, usize> = gold
                .records()
                .iter()
                .enumerate()
                .map(|(i, r)| (r.id.as_str(), i))
                .collect();
            let rows = pred
                .records()
                .iter()
                .map(|r| {
                    index
                        .get(r.id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Unknown {
                            what: "record id in gold file",
                            name: r.id.clone(),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let gold = gold.subset(&rows)?;
            let report = f1_scores(&pred.label_matrix(), &gold.label_matrix())?
                .with_labels(&lang, gold.schema().emotions());
            println!("| emotion | precision | recall | F1 |");
            println!("|---|---:|---:|---:|");
            for s in &report.per_emotion {
                println!(
                    "| {} | {:.2} | {:.2} | {:.2} |",
                    s.emotion,
                    s.precision * 100.0,
                    s.recall * 100.0,
                    s.f1 * 100.0
                );
            }
            println!("| macro | | | {:.2} |", report.macro_f1 * 100.0);
            if let Some(p) = json {
                write_file(&p, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            }
        }
        Command::Ensemble {
            members,
            scores,
            language,
            weights,
            out,
        } => {
            let mut named = Vec::new();
            for m in &members {
                let (name, path) = m.split_once('=').ok_or_else(|| Error::Config {
                    key: "member".into(),
                    message: format!("expected NAME=PATH, got `{m}`"),
                })?;
                let path = PathBuf::from(path);
                let lang = language_of(&path, language.as_deref());
                named.push((name.to_owned(), load_dataset(&path, &lang)?));
            }
            let first = &named[0].1;
            for (name, ds) in &named[1..] {
                if ds.schema() != first.schema() || ds.ids() != first.ids() {
                    return Err(Error::Shape(format!(
                        "member `{name}` does not match the first member's ids and emotions"
                    )));
                }
            }
            let names: Vec<&str> = named.iter().map(|(n, _)| n.as_str()).collect();
            let (w, source) = match (&scores, weights.is_empty()) {
                (Some(path), _) => {
                    let table = load_score_table(path)?;
                    let source = match &language {
                        Some(l) => format!("{} ({l})", path.display()),
                        None => format!("{} (average)", path.display()),
                    };
                    (dev_weights(&table, &names, language.as_deref())?, source)
                }
                (None, false) => {
                    if weights.len() != names.len() {
                        return Err(Error::Config {
                            key: "weights".into(),
                            message: format!(
                                "{} weights for {} members",
                                weights.len(),
                                names.len()
                            ),
                        });
                    }
                    (weights.clone(), "explicit".to_owned())
                }
                (None, true) => (vec![1.0; names.len()], "uniform".to_owned()),
            };
            let spec = EnsembleSpec::new(
                named
                    .iter()
                    .zip(&w)
                    .map(|((name, ds), &weight)| Member {
                        name: name.clone(),
                        predictions: ds.label_matrix(),
                        weight,
                    })
                    .collect(),
                source,
            )?;
            let voted = weighted_vote(&spec);
            with_labels(first, &voted)?.save(&out)?;
            for m in spec.members() {
                println!("{}\t{}", m.name, m.weight);
            }
            println!(
                "weights from {}; wrote {}",
                spec.weight_source(),
                out.display()
            );
        }
        Command::Stats {
            table,
            spec,
            json,
            verbose,
        } => {
            let table = load_score_table(&table)?;
            let spec: ComparisonFile = read_json(&spec).map_err(|e| Error::Config {
                key: "comparisons".into(),
                message: e.to_string(),
            })?;
            let mut reports = Vec::new();
            println!("| comparison | test | statistic | p | n | method |");
            println!("|---|---|---:|---:|---:|---|");
            for cmp in &spec.comparisons {
                let rep = emoclass::compare_models(&table, cmp)?;
                let r = &rep.result;
                println!(
                    "| {} | {} | {} | {:.4e} | {} | {} |",
                    rep.name,
                    rep.test,
                    r.statistic,
                    r.p_value,
                    r.n_effective,
                    serde_json::to_value(r.method)?.as_str().unwrap_or_default()
                );
                reports.push(rep);
            }
            for rep in &reports {
                println!("{}", rep.narrative());
                if verbose {
                    for (label, a, b) in &rep.pairs {
                        println!("  {label}: {a} | {b}");
                    }
                    if !rep.group_a.is_empty() {
                        println!("  group a: {}", rep.group_a.join(", "));
                        println!("  group b: {}", rep.group_b.join(", "));
                    }
                }
            }
            if let Some(p) = json {
                write_file(&p, &(serde_json::to_string_pretty(&reports)? + "\n"))?;
            }
        }
        Command::Report { table, md, csv } => {
            let table = load_score_table(&table)?;
            let (markdown, text) = render_report(&table);
            match &md {
                Some(p) => write_file(p, &markdown)?,
                None => print!("{markdown}"),
            }
            if let Some(p) = csv {
                write_file(&p, &text)?;
            }
        }
        Command::Run { cfg, output_dir } => {
            let path = cfg.config.as_deref().ok_or_else(|| Error::Config {
                key: "<config>".into(),
                message: "`run` needs --config".into(),
            })?;
            let mut doc = overrides::load_document(Some(path))?;
            overrides::apply(&mut doc, &cfg.set)?;
            if let Some(dir) = output_dir {
                let abs = std::env::current_dir()
                    .map_err(|e| io_err(Path::new("."), e))?
                    .join(dir);
                overrides::set_value(&mut doc, "output_dir", json!(abs))?;
            }
            let mut exp: ExperimentConfig = overrides::decode(doc, "<config>")?;
            exp.rebase(path.parent().unwrap_or(Path::new("")));
            let outcome = run_experiment(&exp)?;
            for r in &outcome.reports {
                println!("{}", r.markdown_row());
            }
            println!("artifacts in {}", exp.output_dir.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
