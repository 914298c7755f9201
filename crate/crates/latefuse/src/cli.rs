//! Batch command-line surface. Every subcommand reads and writes files;
//! diagnostics go to stderr and nothing lands on stdout unless
//! `--print-report` asks for it. An optional `--config` JSON file mirrors
//! the flag names, with explicit flags taking precedence.

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::automl::{self, SearchBudget};
use crate::core::{ClassVector, Polarity};
use crate::error::{Error, Result};
use crate::fusion::{self, Modality, ModalityPredictions};
use crate::imageprep::{self, pnm, ChannelStats, Image};
use crate::textprep::{self, Lexicon, StopwordSet};

#[derive(Parser)]
#[command(
    name = "latefuse",
    version,
    about = "Late-fusion sentiment pipeline: preprocessing, synthetic data, model search, prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean tweet text: entity decoding, stopwords, case, repeats, links, punctuation
    CleanText(CleanTextArgs),
    /// Classify cleaned text with a polarity lexicon, emitting one-hot probability rows
    LexiconClassify(LexiconClassifyArgs),
    /// Resize, optionally add a texture channel, and normalize a directory of images
    ImagePrep(ImagePrepArgs),
    /// Generate synthetic paired-modality prediction files with known accuracy
    Synth(SynthArgs),
    /// Join modality files, search for the best fusion model, evaluate on the test split
    Fuse(FuseArgs),
    /// Predict labels for joined modality files with a saved model
    Predict(PredictArgs),
}

/// Loads the optional JSON config file that mirrors flag names.
fn load_config(path: &Option<PathBuf>) -> Result<serde_json::Value> {
    match path {
        None => Ok(serde_json::Value::Object(Default::default())),
        Some(path) => {
            let file = std::fs::File::open(path)?;
            Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
        }
    }
}

fn config_path(config: &serde_json::Value, key: &str) -> Option<PathBuf> {
    config.get(key).and_then(|v| v.as_str()).map(PathBuf::from)
}

/// Flag wins over config file; a missing required value is a usage error.
fn resolve_path(
    flag: &Option<PathBuf>,
    config: &serde_json::Value,
    key: &str,
) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| config_path(config, key))
        .ok_or_else(|| Error::InvalidConfig(format!("missing required --{key}")))
}

fn require_exists(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::InvalidConfig(format!("path {} does not exist", path.display())));
    }
    Ok(())
}

/// Worker count: the LATEFUSE_THREADS environment variable caps parallel
/// trial workers; unset or 0 means one worker per available core.
fn worker_count() -> usize {
    match std::env::var("LATEFUSE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => n,
        _ => std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

#[derive(Args)]
struct CleanTextArgs {
    /// Input JSONL with {"id", "text"} objects
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output JSONL with cleaned text
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stopword file, one word per line
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// JSON config mirroring the flag names
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TextLine {
    id: String,
    text: String,
}

/// Applies `transform` to every well-formed line, reporting malformed ones
/// with their line numbers; returns the number of malformed lines.
fn process_text_lines(
    input: &Path,
    output: &Path,
    mut transform: impl FnMut(&TextLine, &mut dyn Write) -> Result<()>,
) -> Result<usize> {
    let reader = std::io::BufReader::new(std::fs::File::open(input)?);
    let mut writer = BufWriter::new(std::fs::File::create(output)?);
    let mut malformed = 0usize;
    for (number, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TextLine>(&line) {
            Ok(parsed) => transform(&parsed, &mut writer)?,
            Err(e) => {
                malformed += 1;
                eprintln!("line {}: {e}", number + 1);
            }
        }
    }
    writer.flush()?;
    Ok(malformed)
}

fn cmd_clean_text(args: &CleanTextArgs) -> Result<i32> {
    let config = load_config(&args.config)?;
    let input = resolve_path(&args.input, &config, "in")?;
    let out = resolve_path(&args.out, &config, "out")?;
    let stopwords_path = resolve_path(&args.stopwords, &config, "stopwords")?;
    require_exists(&input)?;
    require_exists(&stopwords_path)?;
    let stopwords = StopwordSet::from_path(&stopwords_path)?;

    let malformed = process_text_lines(&input, &out, |line, writer| {
        let cleaned = TextLine {
            id: line.id.clone(),
            text: textprep::clean_pipeline(&line.text, &stopwords),
        };
        serde_json::to_writer(&mut *writer, &cleaned)?;
        writeln!(writer)?;
        Ok(())
    })?;
    Ok(if malformed == 0 { 0 } else { 1 })
}

#[derive(Args)]
struct LexiconClassifyArgs {
    /// Input JSONL with cleaned {"id", "text"} objects
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Lexicon file, word<TAB>score per line
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Output modality JSONL with {"id", "probs"} objects
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_lexicon_classify(args: &LexiconClassifyArgs) -> Result<i32> {
    let config = load_config(&args.config)?;
    let input = resolve_path(&args.input, &config, "in")?;
    let lexicon_path = resolve_path(&args.lexicon, &config, "lexicon")?;
    let out = resolve_path(&args.out, &config, "out")?;
    require_exists(&input)?;
    require_exists(&lexicon_path)?;
    let lexicon = Lexicon::from_path(&lexicon_path)?;

    #[derive(Serialize)]
    struct ProbLine<'a> {
        id: &'a str,
        probs: [f64; 3],
    }

    let malformed = process_text_lines(&input, &out, |line, writer| {
        let (_, class) = textprep::lexicon_polarity(&line.text, &lexicon);
        let probs = ClassVector::one_hot(class).probs();
        serde_json::to_writer(&mut *writer, &ProbLine { id: &line.id, probs })?;
        writeln!(writer)?;
        Ok(())
    })?;
    Ok(if malformed == 0 { 0 } else { 1 })
}

#[derive(Args)]
struct ImagePrepArgs {
    /// Directory of .ppm / .pgm input images
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Directory for the normalized array files
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output path for the channel statistics JSON
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Append a local-binary-pattern plane as a fourth channel
    #[arg(long)]
    lbp: bool,
    /// Output height (square by default)
    #[arg(long)]
    height: Option<usize>,
    /// Output width
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub const ARRAY_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArrayDoc {
    schema_version: u32,
    #[serde(flatten)]
    image: Image,
}

#[derive(Serialize, Deserialize)]
struct StatsDoc {
    schema_version: u32,
    #[serde(flatten)]
    stats: ChannelStats,
}

fn cmd_image_prep(args: &ImagePrepArgs) -> Result<i32> {
    let config = load_config(&args.config)?;
    let input = resolve_path(&args.input, &config, "in")?;
    let out_dir = resolve_path(&args.out, &config, "out")?;
    let stats_path = resolve_path(&args.stats, &config, "stats")?;
    require_exists(&input)?;
    let lbp = args.lbp || config.get("lbp").and_then(|v| v.as_bool()).unwrap_or(false);
    let height = args.height.or_else(|| config.get("height").and_then(|v| v.as_u64()).map(|v| v as usize)).unwrap_or(224);
    let width = args.width.or_else(|| config.get("width").and_then(|v| v.as_u64()).map(|v| v as usize)).unwrap_or(224);

    let mut paths: Vec<PathBuf> = std::fs::read_dir(&input)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("ppm") | Some("pgm")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no .ppm or .pgm files in {}",
            input.display()
        )));
    }

    let mut prepared = Vec::with_capacity(paths.len());
    for path in &paths {
        let raw = pnm::read(path)?;
        let resized = imageprep::resize_bilinear(&raw, height, width)?;
        let staged = if lbp {
            imageprep::append_lbp_channel(&resized)?
        } else {
            resized
        };
        prepared.push(staged);
    }

    let stats = imageprep::channel_stats(&prepared)?;
    std::fs::create_dir_all(&out_dir)?;
    for (path, image) in paths.iter().zip(&prepared) {
        let normalized = imageprep::normalize(image, &stats)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidImage(format!("unusable file name {}", path.display())))?;
        let doc = ArrayDoc { schema_version: ARRAY_SCHEMA_VERSION, image: normalized };
        let file = std::fs::File::create(out_dir.join(format!("{stem}.json")))?;
        serde_json::to_writer(BufWriter::new(file), &doc)?;
    }
    let stats_doc = StatsDoc { schema_version: ARRAY_SCHEMA_VERSION, stats };
    let file = std::fs::File::create(&stats_path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), &stats_doc)?;
    eprintln!("prepared {} images", paths.len());
    Ok(0)
}

#[derive(Args)]
struct SynthArgs {
    /// Generator configuration JSON (n_train, n_valid, n_test, acc_img,
    /// acc_text, concentration, seed)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for img.jsonl, text.jsonl, gold.jsonl, splits.json
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Overrides the seed from the config file
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_synth(args: &SynthArgs) -> Result<i32> {
    let config_file = args
        .config
        .clone()
        .ok_or_else(|| Error::InvalidConfig("missing required --config".into()))?;
    require_exists(&config_file)?;
    let out_dir = args
        .out_dir
        .clone()
        .ok_or_else(|| Error::InvalidConfig("missing required --out-dir".into()))?;
    let mut synth_config: fusion::SynthConfig =
        serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(&config_file)?))?;
    if let Some(seed) = args.seed {
        synth_config.seed = seed;
    }
    let data = fusion::generate_synthetic(&synth_config)?;
    fusion::write_synthetic(&data, &out_dir)?;
    eprintln!(
        "wrote {} rows ({} train / {} valid / {} test) to {}",
        data.rows.len(),
        synth_config.n_train,
        synth_config.n_valid,
        synth_config.n_test,
        out_dir.display()
    );
    Ok(0)
}

#[derive(Args)]
struct FuseArgs {
    /// Image modality JSONL
    #[arg(long)]
    img: Option<PathBuf>,
    /// Text modality JSONL
    #[arg(long)]
    text: Option<PathBuf>,
    /// Gold label JSONL
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Split id lists JSON
    #[arg(long)]
    splits: Option<PathBuf>,
    /// Trial budget for the random search
    #[arg(long)]
    budget: Option<usize>,
    /// Optional wall-clock bound in seconds (stops at trial boundaries)
    #[arg(long = "max-seconds")]
    max_seconds: Option<f64>,
    /// Master seed for sampling and fitting
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON output path
    #[arg(long = "out-report")]
    out_report: Option<PathBuf>,
    /// Selected-model artifact output path
    #[arg(long = "out-model")]
    out_model: Option<PathBuf>,
    /// Leaderboard JSON output path
    #[arg(long = "out-leaderboard")]
    out_leaderboard: Option<PathBuf>,
    /// Replace each probability block by the one-hot of its argmax
    #[arg(long = "one-hot")]
    one_hot: bool,
    /// Also print the report JSON on stdout
    #[arg(long = "print-report")]
    print_report: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_fuse(args: &FuseArgs) -> Result<i32> {
    let config = load_config(&args.config)?;
    let img_path = resolve_path(&args.img, &config, "img")?;
    let text_path = resolve_path(&args.text, &config, "text")?;
    let gold_path = resolve_path(&args.gold, &config, "gold")?;
    let splits_path = resolve_path(&args.splits, &config, "splits")?;
    for path in [&img_path, &text_path, &gold_path, &splits_path] {
        require_exists(path)?;
    }
    let out_report = resolve_path(&args.out_report, &config, "out-report")?;
    let out_model = resolve_path(&args.out_model, &config, "out-model")?;
    let budget_trials = args
        .budget
        .or_else(|| config.get("budget").and_then(|v| v.as_u64()).map(|v| v as usize));
    let max_seconds = args
        .max_seconds
        .or_else(|| config.get("max-seconds").and_then(|v| v.as_f64()));
    let seed = args
        .seed
        .or_else(|| config.get("seed").and_then(|v| v.as_u64()))
        .unwrap_or(0);
    let one_hot =
        args.one_hot || config.get("one-hot").and_then(|v| v.as_bool()).unwrap_or(false);

    let budget = SearchBudget {
        max_trials: Some(budget_trials.unwrap_or(SearchBudget::DEFAULT_TRIALS)),
        max_wall_clock: max_seconds.map(std::time::Duration::from_secs_f64),
    };

    let image = ModalityPredictions::from_path(Modality::Image, &img_path)?;
    let text = ModalityPredictions::from_path(Modality::Text, &text_path)?;
    let gold = fusion::read_gold_path(&gold_path)?;
    let (features, join_report) = fusion::join_modalities(&image, &text, Some(&gold))?;
    if join_report.missing() > 0 {
        eprintln!(
            "join: {} features, dropped {} ids ({} image-only, {} text-only, {} without gold)",
            join_report.joined,
            join_report.missing(),
            join_report.image_only,
            join_report.text_only,
            join_report.missing_gold
        );
    }
    let splits = fusion::read_splits(&splits_path)?;
    let mut split = fusion::assemble_split(features, &splits)?;
    if one_hot {
        split = split.to_one_hot();
    }

    let workers = worker_count();
    let outcome = fusion::fuse_train_evaluate(&split, budget, seed, workers)?;

    for trial in outcome.leaderboard.all_trials() {
        match &trial.error {
            None => eprintln!(
                "trial {:>3} {:<32} objective {:.4} ({:.2}s)",
                trial.index,
                automl::family_name(&trial.setup),
                trial.objective,
                trial.fit_seconds
            ),
            Some(message) => eprintln!(
                "trial {:>3} {:<32} FAILED: {message}",
                trial.index,
                automl::family_name(&trial.setup)
            ),
        }
    }

    let report_json = serde_json::to_vec_pretty(&outcome.report)?;
    std::fs::write(&out_report, &report_json)?;
    std::fs::write(&out_model, automl::serialize_classifier(&outcome.selected_model)?)?;
    if let Some(leaderboard_path) =
        args.out_leaderboard.clone().or_else(|| config_path(&config, "out-leaderboard"))
    {
        outcome.leaderboard.save(leaderboard_path)?;
    }
    if args.print_report {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(&report_json)?;
        writeln!(stdout)?;
    }
    eprintln!(
        "selected trial {} ({}) validation {:.4}, test {:.4}",
        outcome.report.selected_trial.index,
        outcome.report.selected_trial.family,
        outcome.report.selected_trial.objective,
        outcome.report.test_accuracy.selected
    );
    Ok(0)
}

#[derive(Args)]
struct PredictArgs {
    /// Saved model artifact from the fuse step
    #[arg(long)]
    model: Option<PathBuf>,
    /// Image modality JSONL
    #[arg(long)]
    img: Option<PathBuf>,
    /// Text modality JSONL
    #[arg(long)]
    text: Option<PathBuf>,
    /// Output JSONL with {"id", "label"} predictions
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_predict(args: &PredictArgs) -> Result<i32> {
    let config = load_config(&args.config)?;
    let model_path = resolve_path(&args.model, &config, "model")?;
    let img_path = resolve_path(&args.img, &config, "img")?;
    let text_path = resolve_path(&args.text, &config, "text")?;
    let out = resolve_path(&args.out, &config, "out")?;
    for path in [&model_path, &img_path, &text_path] {
        require_exists(path)?;
    }

    let classifier = automl::deserialize_classifier(&std::fs::read(&model_path)?)?;
    let image = ModalityPredictions::from_path(Modality::Image, &img_path)?;
    let text = ModalityPredictions::from_path(Modality::Text, &text_path)?;
    let (features, join_report) = fusion::join_modalities(&image, &text, None)?;
    if join_report.missing() > 0 {
        eprintln!("join: dropped {} one-sided ids", join_report.missing());
    }

    #[derive(Serialize)]
    struct PredictionLine<'a> {
        id: &'a str,
        label: u8,
    }

    let mut writer = BufWriter::new(std::fs::File::create(&out)?);
    for f in &features {
        let label = classifier.predict(&f.x)?;
        serde_json::to_writer(
            &mut writer,
            &PredictionLine { id: &f.id, label: label as u8 },
        )?;
        writeln!(writer)?;
    }
    writer.flush()?;
    eprintln!("predicted {} rows", features.len());
    Ok(0)
}

/// Parses argv and runs the subcommand, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version through this path with code 0
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::CleanText(args) => cmd_clean_text(args),
        Command::LexiconClassify(args) => cmd_lexicon_classify(args),
        Command::ImagePrep(args) => cmd_image_prep(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Fuse(args) => cmd_fuse(args),
        Command::Predict(args) => cmd_predict(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Accuracy of a prediction file against a gold file, used by tests and
/// examples to cross-check reports.
pub fn prediction_file_accuracy(
    predictions: impl BufRead,
    gold: &BTreeMap<String, Polarity>,
) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (number, line) in predictions.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        struct PredictionLine {
            id: String,
            label: u8,
        }
        let parsed: PredictionLine =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                line: number + 1,
                detail: e.to_string(),
            })?;
        if let Some(&want) = gold.get(&parsed.id) {
            total += 1;
            if want as u8 == parsed.label {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no predictions overlap the gold labels".into()));
    }
    Ok(hits as f64 / total as f64)
}
