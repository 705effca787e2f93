//! Command-line entry point.
//!
//! Hyperparameters and default paths come from `--config FILE` plus any
//! number of `--set key=value` overrides; per-command flags override paths.
//! Exit codes: 0 success, 1 runtime or configuration failure, 2 usage error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::classify::{
    best_step, recursive_feature_elimination, train_troll_model, write_rfe_csv, ClassifierConfig, Kernel,
    SvmConfig,
};
use crate::config::{require, ConfigError, PipelineConfig};
use crate::corpus::{
    parse_comment_csv, parse_comment_packet, parse_emotion_corpus, parse_sentiment_corpus,
    parse_sighan_corpus, Preprocessor, StopWords,
};
use crate::embedding::train_embeddings;
use crate::emotion::EmotionModels;
use crate::eval::{
    comparison_table, compare_models, cross_validate, write_comparison_csv, ComparisonConfig, Trainer,
};
use crate::features::{
    build_feature_matrix, labeled_matrix, read_feature_csv, write_feature_csv, FeatureVector, FEATURE_NAMES,
    F_SENTIMENT,
};
use crate::pipeline::{Pipeline, PipelinePaths, TextScorer, Tokenizer};
use crate::seg_hmm::{segment, train_segmenter, SegmentationHmm};
use crate::sentiment::{score_histogram, train_polarity, write_histogram_csv};
use crate::service::{handle_score, serve, ScoreRequest, ServiceState};

#[derive(Debug, Parser)]
#[command(name = "trollwatch", version, about = "Troll detection for Weibo-style comments")]
pub struct Cli {
    /// Key-value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set seed=7`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub seg_model: Option<PathBuf>,
    #[arg(long)]
    pub w2v_model: Option<PathBuf>,
    #[arg(long)]
    pub sentiment_model: Option<PathBuf>,
    #[arg(long)]
    pub emotion_model: Option<PathBuf>,
    #[arg(long)]
    pub troll_model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the segmentation HMM on a space-segmented corpus.
    TrainSeg {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment each line of a file (or stdin with `-`).
    Segment {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "-")]
        input: PathBuf,
    },
    /// Train word vectors on a text file, one document per line.
    TrainW2v {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        seg_model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the polarity model on `positive|negative<TAB>text` lines.
    TrainSentiment {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        seg_model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the six emotion HMMs on `emotion<TAB>text` lines.
    TrainEmotion {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        seg_model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-word MI/CHI/TF-IDF table.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Turn comment CSVs into an F0..F18 feature CSV.
    ExtractFeatures {
        #[arg(long = "comments")]
        comments: Vec<PathBuf>,
        /// CSV with columns tweet_id,text.
        #[arg(long)]
        originals: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a histogram of comment sentiment scores.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Train the troll classifier on a labeled feature CSV.
    TrainTroll {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate the configured classifier, or all three with `--compare`.
    Evaluate {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        compare: bool,
    },
    /// Recursive feature elimination with the boosted model.
    Rfe {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a request (`{"original", "comments"}`) or a raw hotflow packet.
    Score {
        #[arg(long)]
        input: PathBuf,
        /// Original tweet text; overrides the one in the request.
        #[arg(long)]
        original: Option<String>,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Serve POST /score and GET /health.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[command(flatten)]
        models: ModelArgs,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Failed(String),
}

fn fail(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match execute(cli.command, &config, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, ConfigError> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::from_path(p)?,
        None => PipelineConfig::default(),
    };
    for o in &cli.overrides {
        config.apply_override(o)?;
    }
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(fail)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| fail(format!("cannot create {}: {e}", path.display())))
}

fn tokenizer(seg_model: &Path, config: &PipelineConfig) -> Result<Tokenizer, CliError> {
    let segmenter = SegmentationHmm::load_path(seg_model).map_err(fail)?;
    let stop_words = match &config.paths.stopwords {
        Some(p) => StopWords::from_file(p).map_err(fail)?,
        None => StopWords::builtin(),
    };
    Ok(Tokenizer::new(segmenter, Preprocessor::new(stop_words)))
}

fn pipeline_paths(models: ModelArgs, config: &PipelineConfig, troll: bool) -> Result<PipelinePaths, CliError> {
    let p = &config.paths;
    Ok(PipelinePaths {
        seg_model: require(models.seg_model, &p.seg_model, "seg.model")?,
        w2v_model: models.w2v_model.or_else(|| p.w2v_model.clone()),
        sentiment_model: require(models.sentiment_model, &p.sentiment_model, "sentiment.model")?,
        emotion_model: require(models.emotion_model, &p.emotion_model, "emotion.model")?,
        troll_model: if troll {
            require(models.troll_model, &p.troll_model, "troll.model")?
        } else {
            PathBuf::new()
        },
        stopwords: p.stopwords.clone(),
    })
}

fn read_features(path: &Path) -> Result<Vec<FeatureVector>, CliError> {
    let file = File::open(path).map_err(|e| fail(format!("cannot open {}: {e}", path.display())))?;
    read_feature_csv(BufReader::new(file)).map_err(fail)
}

fn read_originals(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(fail)?;
    let headers = rdr.headers().map_err(fail)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| fail(format!("{}: missing column `{name}`", path.display())))
    };
    let (id, text) = (col("tweet_id")?, col("text")?);
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(fail)?;
        out.insert(rec[id].to_string(), rec[text].to_string());
    }
    Ok(out)
}

fn execute(command: Command, config: &PipelineConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let p = &config.paths;
    match command {
        Command::TrainSeg { corpus, out: dest } => {
            let corpus = require(corpus, &p.seg_corpus, "seg.corpus")?;
            let dest = require(dest, &p.seg_model, "seg.model")?;
            let sentences = parse_sighan_corpus(&corpus).map_err(fail)?;
            let model = train_segmenter(&sentences).map_err(fail)?;
            model.save_to_path(&dest).map_err(fail)?;
            writeln!(
                out,
                "trained segmenter on {} sentences ({} characters) -> {}",
                sentences.len(),
                model.vocab().len(),
                dest.display()
            )
            .map_err(fail)?;
        }
        Command::Segment { model, input } => {
            let model = SegmentationHmm::load_path(require(model, &p.seg_model, "seg.model")?).map_err(fail)?;
            let reader: Box<dyn BufRead> = if input.as_os_str() == "-" {
                Box::new(BufReader::new(std::io::stdin()))
            } else {
                Box::new(BufReader::new(File::open(&input).map_err(fail)?))
            };
            for line in reader.lines() {
                let line = line.map_err(fail)?;
                writeln!(out, "{}", segment(&model, line.trim()).join(" ")).map_err(fail)?;
            }
        }
        Command::TrainW2v { corpus, seg_model, out: dest } => {
            let corpus = require(corpus, &p.w2v_corpus, "w2v.corpus")?;
            let dest = require(dest, &p.w2v_model, "w2v.model")?;
            let tok = tokenizer(&require(seg_model, &p.seg_model, "seg.model")?, config)?;
            let text = std::fs::read_to_string(&corpus).map_err(fail)?;
            let sentences: Vec<Vec<String>> = text.lines().filter_map(|l| tok.tokens(l).ok()).collect();
            let model = train_embeddings(&sentences, &config.embedding_config()).map_err(fail)?;
            model.save_to_path(&dest).map_err(fail)?;
            let loss = model.loss_history();
            writeln!(
                out,
                "trained {} vectors of dim {} on {} documents, loss {:.4} -> {:.4} -> {}",
                model.len(),
                model.dim(),
                sentences.len(),
                loss.first().copied().unwrap_or(f64::NAN),
                loss.last().copied().unwrap_or(f64::NAN),
                dest.display()
            )
            .map_err(fail)?;
        }
        Command::TrainSentiment { corpus, seg_model, out: dest } => {
            let corpus = require(corpus, &p.sentiment_corpus, "sentiment.corpus")?;
            let dest = require(dest, &p.sentiment_model, "sentiment.model")?;
            let tok = tokenizer(&require(seg_model, &p.seg_model, "seg.model")?, config)?;
            let docs = parse_sentiment_corpus(&corpus).map_err(fail)?;
            let data: Vec<_> = docs
                .iter()
                .filter_map(|d| tok.tokens(&d.text).ok().map(|w| (w, d.label)))
                .collect();
            let model = train_polarity(&data, config.smoothing).map_err(fail)?;
            model.save_to_path(&dest).map_err(fail)?;
            writeln!(
                out,
                "trained polarity model on {} of {} documents ({} words) -> {}",
                data.len(),
                docs.len(),
                model.vocabulary_len(),
                dest.display()
            )
            .map_err(fail)?;
        }
        Command::TrainEmotion { corpus, seg_model, out: dest, table } => {
            let corpus = require(corpus, &p.emotion_corpus, "emotion.corpus")?;
            let dest = require(dest, &p.emotion_model, "emotion.model")?;
            let tok = tokenizer(&require(seg_model, &p.seg_model, "seg.model")?, config)?;
            let docs = parse_emotion_corpus(&corpus).map_err(fail)?;
            let data: Vec<_> = docs
                .iter()
                .filter_map(|d| tok.tokens(&d.text).ok().map(|w| (w, d.emotion)))
                .collect();
            let models = crate::emotion::train_emotion_models(&data).map_err(fail)?;
            models.save_to_path(&dest).map_err(fail)?;
            if let Some(t) = table.or_else(|| p.emotion_table.clone()) {
                let mut w = create(&t)?;
                models.table().write_csv(&mut w).map_err(fail)?;
                w.flush().map_err(fail)?;
            }
            summarize_emotion(out, &models, data.len(), &dest)?;
        }
        Command::ExtractFeatures { comments, originals, models, out: dest, histogram } => {
            let files = if comments.is_empty() { p.comments.clone() } else { comments };
            if files.is_empty() {
                return Err(ConfigError::Missing("comments").into());
            }
            let dest = require(dest, &p.features, "features.csv")?;
            let scorer = TextScorer::load(&pipeline_paths(models, config, false)?).map_err(fail)?;
            let originals = match originals.or_else(|| p.originals.clone()) {
                Some(o) => read_originals(&o)?,
                None => HashMap::new(),
            };
            let mut records = Vec::new();
            for f in &files {
                records.extend(parse_comment_csv(f).map_err(fail)?);
            }
            let matrix = build_feature_matrix(&records, &scorer, &originals);
            let mut w = create(&dest)?;
            write_feature_csv(&mut w, &matrix.vectors).map_err(fail)?;
            w.flush().map_err(fail)?;
            if let Some(h) = histogram.or_else(|| p.histogram.clone()) {
                let scores: Vec<f64> = matrix.vectors.iter().map(|v| v.get(F_SENTIMENT)).collect();
                let bins = score_histogram(&scores, config.histogram_width).map_err(fail)?;
                let mut w = create(&h)?;
                write_histogram_csv(&mut w, &bins).map_err(fail)?;
                w.flush().map_err(fail)?;
            }
            writeln!(
                out,
                "extracted {} feature vectors from {} comments ({} rejected) -> {}",
                matrix.vectors.len(),
                records.len(),
                matrix.dropped.len(),
                dest.display()
            )
            .map_err(fail)?;
        }
        Command::TrainTroll { features, out: dest } => {
            let vectors = read_features(&require(features, &p.features, "features.csv")?)?;
            let dest = require(dest, &p.troll_model, "troll.model")?;
            let model = train_troll_model(&vectors, &config.features, &config.classifier_config()).map_err(fail)?;
            model.save_to_path(&dest).map_err(fail)?;
            let top: Vec<String> = model
                .feature_ranking()
                .iter()
                .take(5)
                .map(|(f, w)| format!("{}={w}", FEATURE_NAMES[*f]))
                .collect();
            writeln!(
                out,
                "trained {} on {} samples; top splits [{}] -> {}",
                model.metadata.config.name(),
                model.metadata.training_samples,
                top.join(", "),
                dest.display()
            )
            .map_err(fail)?;
        }
        Command::Evaluate { features, out: dest, compare } => {
            let vectors = read_features(&require(features, &p.features, "features.csv")?)?;
            let dest = require(dest, &p.report, "report")?;
            let all: Vec<usize> = (0..FEATURE_NAMES.len()).collect();
            let (x, y) = labeled_matrix(&vectors, &all).map_err(fail)?;
            let mut w = create(&dest)?;
            if compare {
                let boosted = ClassifierConfig::Boosted(config.boost_config());
                let svm = |kernel| {
                    ClassifierConfig::Svm(SvmConfig {
                        kernel,
                        seed: config.seed,
                        ..config.svm.clone()
                    })
                };
                let linear = svm(Kernel::Linear);
                let rbf = svm(match config.svm.kernel {
                    Kernel::Linear => Kernel::Rbf { gamma: None },
                    k => k,
                });
                let configs: Vec<ComparisonConfig> = [&boosted, &linear, &rbf]
                    .into_iter()
                    .map(|t| ComparisonConfig {
                        label: t.name(),
                        trainer: t,
                        features: config.features.clone(),
                    })
                    .collect();
                let rows = compare_models(&x, &y, &configs, config.folds, config.seed).map_err(fail)?;
                write_comparison_csv(&mut w, &rows).map_err(fail)?;
                write!(out, "{}", comparison_table(&rows)).map_err(fail)?;
            } else {
                let projected: Vec<Vec<f64>> = x
                    .iter()
                    .map(|r| config.features.iter().map(|&f| r[f]).collect())
                    .collect();
                let trainer = config.classifier_config();
                let mut report =
                    cross_validate(&projected, &y, &trainer, config.folds, config.seed).map_err(fail)?;
                report.features = config.features.clone();
                report.write_csv(&mut w).map_err(fail)?;
                writeln!(
                    out,
                    "{} {}-fold mean accuracy {:.4}",
                    report.classifier, config.folds, report.mean_accuracy
                )
                .map_err(fail)?;
            }
            w.flush().map_err(fail)?;
        }
        Command::Rfe { features, out: dest } => {
            let vectors = read_features(&require(features, &p.features, "features.csv")?)?;
            let dest = require(dest, &p.rfe_curve, "rfe.curve")?;
            let all: Vec<usize> = (0..FEATURE_NAMES.len()).collect();
            let (x, y) = labeled_matrix(&vectors, &all).map_err(fail)?;
            let curve = recursive_feature_elimination(
                &x,
                &y,
                &config.features,
                &config.boost_config(),
                config.folds,
                config.seed,
            )
            .map_err(fail)?;
            let mut w = create(&dest)?;
            write_rfe_csv(&mut w, &curve).map_err(fail)?;
            w.flush().map_err(fail)?;
            let best = best_step(&curve).expect("curve is never empty");
            let names: Vec<&str> = best.features.iter().map(|&f| FEATURE_NAMES[f]).collect();
            writeln!(
                out,
                "{} steps; best accuracy {:.4} with [{}] -> {}",
                curve.len(),
                best.accuracy,
                names.join(", "),
                dest.display()
            )
            .map_err(fail)?;
        }
        Command::Score { input, original, models } => {
            let pipeline = Pipeline::load(&pipeline_paths(models, config, true)?).map_err(fail)?;
            let bytes = std::fs::read(&input).map_err(|e| fail(format!("cannot read {}: {e}", input.display())))?;
            let mut request = read_request(&bytes)?;
            if let Some(o) = original {
                request.original = o;
            }
            let response = handle_score(&pipeline, &request);
            serde_json::to_writer_pretty(&mut *out, &response).map_err(fail)?;
            writeln!(out).map_err(fail)?;
        }
        Command::Serve { bind, models } => {
            let pipeline = Pipeline::load(&pipeline_paths(models, config, true)?).map_err(fail)?;
            let bind = bind.unwrap_or_else(|| config.bind.clone());
            let addr: SocketAddr = bind
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("cannot parse bind address `{bind}`")))?;
            let state = Arc::new(ServiceState::ready(pipeline));
            let runtime = tokio::runtime::Runtime::new().map_err(fail)?;
            runtime.block_on(serve(addr, state)).map_err(fail)?;
        }
    }
    Ok(())
}

fn summarize_emotion(out: &mut dyn Write, models: &EmotionModels, docs: usize, dest: &Path) -> Result<(), CliError> {
    writeln!(
        out,
        "trained 6 emotion HMMs on {docs} documents ({} words) -> {}",
        models.table().len(),
        dest.display()
    )
    .map_err(fail)
}

/// Accept either a score request or a recorded hotflow packet.
fn read_request(bytes: &[u8]) -> Result<ScoreRequest, CliError> {
    if let Ok(r) = serde_json::from_slice::<ScoreRequest>(bytes) {
        return Ok(r);
    }
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(fail)?;
    // Validates the packet shape; elements are re-parsed during scoring.
    parse_comment_packet(bytes).map_err(fail)?;
    let comments = value["data"]["data"].as_array().cloned().unwrap_or_default();
    Ok(ScoreRequest {
        original: String::new(),
        comments,
    })
}
