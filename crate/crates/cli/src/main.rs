use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use dact_core::corpus::{
    compact_taxonomy, corpus_stats, load_jsonl, save_jsonl, split_dataset, synth_generate, Conversation, SynthSpec,
    Taxonomy, DEFAULT_RATIOS,
};
use dact_core::pipeline::{
    checkpoint_hash, evaluate_with_threshold, load_checkpoint, load_checkpoint_for, multi_seed_eval, save_checkpoint,
    thread_budget, train_and_evaluate, ModelConfig, ProbeRegistry,
};
use dact_core::{Error, Result};

#[derive(Parser)]
#[command(name = "dact", version, about = "Dialogue-act and question-type classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a JSONL corpus and write a checkpoint.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON config: {"preset": NAME, ...overrides}. Defaults to the desk preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        json: bool,
    },
    /// Score a checkpoint on a labelled JSONL corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Require the checkpoint to use this taxonomy (swda, nltk or a TSV path).
        #[arg(long)]
        taxonomy: Option<String>,
        /// Override the checkpoint's fallback threshold.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Classify one sentence, optionally after preceding context lines.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: String,
        /// Text file with one preceding utterance per line.
        #[arg(long)]
        context: Option<PathBuf>,
    },
    /// Generate a synthetic JSONL corpus.
    Synth {
        /// Spec JSON path, or the bundled `separable` / `ambiguous`.
        #[arg(long, default_value = "separable")]
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "swda")]
        taxonomy: String,
    },
    /// Train and evaluate once per seed and aggregate the test accuracies.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of seeds (0, 1, ..., N-1).
        #[arg(long, default_value_t = 8)]
        seeds: usize,
        /// Explicit comma-separated seeds; overrides --seeds.
        #[arg(long, value_delimiter = ',')]
        seed_list: Option<Vec<u64>>,
        /// Labelled JSONL corpus; defaults to the bundled separable synthetic corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Finite-difference gradient checks per module.
    Gradcheck {
        #[arg(long)]
        module: Option<String>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        json: bool,
    },
    /// Describe a checkpoint.
    Inspect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(clap::Args)]
struct DataArgs {
    /// Taxonomy: swda, nltk or a TSV path.
    #[arg(long, default_value = "swda")]
    taxonomy: String,
    /// Keep only the tags that occur in the corpus.
    #[arg(long)]
    compact: bool,
    /// Train/validation/test ratios.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    split: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            corpus,
            config,
            seed,
            out,
            data,
            json,
        } => {
            let config = load_config(config.as_deref())?;
            let (taxonomy, convs) = load_corpus(&corpus, &data)?;
            let split = split_dataset(convs, ratios(&data)?, data.split_seed)?;
            let (model, run) = train_and_evaluate(&config, &taxonomy, &split, seed)?;
            let hash = save_checkpoint(&model, &out)?;
            let report = json!({
                "checkpoint": out,
                "hash": hash,
                "seed": seed,
                "labels": taxonomy.len(),
                "train_conversations": split.train.len(),
                "validation_accuracy": run.validation_accuracy,
                "test_accuracy": run.test_accuracy,
                "best_epoch": run.training.best_epoch,
                "epochs_run": run.training.epochs_run,
                "wall_seconds": run.training.wall_seconds,
            });
            emit(json, &report, || {
                format!(
                    "saved {} (sha256 {hash})\nvalidation accuracy {}\ntest accuracy {:.4}",
                    out.display(),
                    run.validation_accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
                    run.test_accuracy
                )
            })
        }
        Command::Eval {
            model,
            corpus,
            taxonomy,
            threshold,
            json,
        } => {
            let model = match taxonomy {
                Some(t) => load_checkpoint_for(&model, &resolve_taxonomy(&t)?)?,
                None => load_checkpoint(&model)?,
            };
            let convs = load_jsonl(&corpus, &model.taxonomy)?;
            let threshold = threshold.unwrap_or(model.config.fallback_threshold);
            let report = evaluate_with_threshold(&model, &convs, threshold)?;
            emit(json, &serde_json::to_value(&report)?, || {
                format!(
                    "sentences {}\naccuracy {:.4}\nfallback rate {:.4} (threshold {threshold})",
                    report.sentences, report.accuracy, report.fallback_rate
                )
            })
        }
        Command::Predict { model, text, context } => {
            let model = load_checkpoint(&model)?;
            let mut texts: Vec<String> = match context {
                Some(path) => std::fs::read_to_string(&path)
                    .map_err(|e| Error::io(&path, e))?
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(str::to_owned)
                    .collect(),
                None => Vec::new(),
            };
            texts.push(text.clone());
            let conv = Conversation::from_texts("predict", &texts);
            let out = model.predict_conversation(&conv)?;
            let p = out.predictions.last().expect("one prediction per utterance");
            let report = json!({
                "text": text,
                "tokens": conv.utterances.last().map(|u| &u.tokens),
                "tag": model.taxonomy.tag(p.label)?,
                "name": model.taxonomy.entries()[p.label].name,
                "confidence": p.confidence,
                "fallback": p.used_fallback,
                "coarse": p.coarse,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Synth {
            spec,
            seed,
            out,
            taxonomy,
        } => {
            let spec = match spec.as_str() {
                "separable" => SynthSpec::separable(),
                "ambiguous" => SynthSpec::ambiguous(),
                path => SynthSpec::load(Path::new(path))?,
            };
            let taxonomy = resolve_taxonomy(&taxonomy)?;
            let convs = synth_generate(&spec, &taxonomy, seed)?;
            save_jsonl(&convs, &taxonomy, &out)?;
            let stats = corpus_stats(&convs, &taxonomy);
            eprintln!(
                "wrote {} conversations, {} sentences to {}",
                stats.conversations,
                stats.sentences,
                out.display()
            );
            Ok(())
        }
        Command::Bench {
            config,
            seeds,
            seed_list,
            corpus,
            data,
            out,
            json,
        } => {
            let config = load_config(config.as_deref())?;
            let seeds: Vec<u64> = seed_list.unwrap_or_else(|| (0..seeds as u64).collect());
            let (taxonomy, convs) = match corpus {
                Some(path) => load_corpus(&path, &data)?,
                None => {
                    let spec = SynthSpec::separable();
                    let taxonomy = Taxonomy::swda().restrict(&spec.labels())?;
                    let convs = synth_generate(&spec, &taxonomy, 0)?;
                    (taxonomy, convs)
                }
            };
            let split = split_dataset(convs, ratios(&data)?, data.split_seed)?;
            let report = multi_seed_eval(&config, &taxonomy, &split, &seeds, thread_budget())?;
            let value = serde_json::to_value(&report)?;
            if let Some(path) = &out {
                let text = serde_json::to_string_pretty(&value)?;
                std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
            }
            emit(json, &value, || {
                let mut s = String::new();
                for r in &report.runs {
                    s.push_str(&format!("seed {:>4}  test accuracy {:.4}\n", r.seed, r.test_accuracy));
                }
                s.push_str(&format!(
                    "mean {:.4}  std {:.4}  over {} runs",
                    report.mean_test_accuracy,
                    report.std_test_accuracy,
                    report.runs.len()
                ));
                s
            })
        }
        Command::Gradcheck { module, seeds, json } => {
            let registry = ProbeRegistry::default();
            let seeds: Vec<u64> = (0..seeds).collect();
            let results = match module {
                Some(m) => vec![registry.run(&m, &seeds)?],
                None => registry.run_all(&seeds)?,
            };
            emit(json, &serde_json::to_value(&results)?, || {
                results
                    .iter()
                    .map(|r| {
                        format!(
                            "{:<10} max rel error {:.3e}  {}",
                            r.module,
                            r.max_rel_error,
                            if r.passed { "ok" } else { "FAIL" }
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })?;
            match results.iter().find(|r| !r.passed) {
                Some(r) => Err(Error::Numeric(format!(
                    "gradient check failed for {} ({:.3e} at {})",
                    r.module, r.max_rel_error, r.worst_param
                ))),
                None => Ok(()),
            }
        }
        Command::Inspect { model, json } => {
            let m = load_checkpoint(&model)?;
            let params: Vec<Value> = m
                .params
                .iter()
                .map(|(n, p)| json!({"name": n, "shape": [p.value.rows(), p.value.cols()]}))
                .collect();
            let report = json!({
                "hash": checkpoint_hash(&m)?,
                "config": m.config,
                "encoder": m.encoder().name(),
                "labels": m.taxonomy.tags().collect::<Vec<_>>(),
                "vocabulary": m.vocab.len(),
                "parameters": m.params.num_values(),
                "tensors": params,
                "mixing_weights": m.encoder().mixing_weights(&m.params)?,
            });
            emit(json, &report, || {
                format!(
                    "encoder {}\nlabels {}\nvocabulary {}\nparameters {} in {} tensors\nsha256 {}",
                    m.encoder().name(),
                    m.taxonomy.len(),
                    m.vocab.len(),
                    m.params.num_values(),
                    m.params.len(),
                    report["hash"].as_str().unwrap_or_default()
                )
            })
        }
    }
}

fn emit(json: bool, value: &Value, text: impl FnOnce() -> String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        println!("{}", text());
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<ModelConfig> {
    match path {
        Some(p) => ModelConfig::load(p),
        None => Ok(ModelConfig::desk()),
    }
}

fn resolve_taxonomy(name: &str) -> Result<Taxonomy> {
    match name {
        "swda" => Ok(Taxonomy::swda()),
        "nltk" => Ok(Taxonomy::nltk()),
        path => Taxonomy::load(Path::new(path)),
    }
}

fn load_corpus(path: &Path, data: &DataArgs) -> Result<(Taxonomy, Vec<Conversation>)> {
    let taxonomy = resolve_taxonomy(&data.taxonomy)?;
    let mut convs = load_jsonl(path, &taxonomy)?;
    if data.compact {
        let compact = compact_taxonomy(&mut convs, &taxonomy)?;
        return Ok((compact, convs));
    }
    Ok((taxonomy, convs))
}

fn ratios(data: &DataArgs) -> Result<[f64; 3]> {
    match &data.split {
        None => Ok(DEFAULT_RATIOS),
        Some(v) => <[f64; 3]>::try_from(v.as_slice()).map_err(|_| Error::Config("--split takes three ratios".into())),
    }
}
