use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use taskguide_core::encoder::{
    ingest_embedding_file, write_embedding_file, EmbeddingManifest, FallbackEncoder, TextEncoder,
};
use taskguide_core::eval::{
    evaluate_retrieval, evaluate_transcript_retrieval, parse_gold, report_table, GoldSegment, Report, ReportRow,
};
use taskguide_core::frames::{FrameExtractor, RuleTagger};
use taskguide_core::matcher::item_vectors;
use taskguide_core::model::{load_spec, validate_chunks, EmbeddingStream, SlotName, Spec, TranscriptChunk};
use taskguide_core::questions::TemplateCatalog;
use taskguide_core::segmenter::{frame_accuracy, train, write_checkpoint, CausalTcnConfig, CausalTcnModel, Sequence};
use taskguide_core::session::{read_log, verify_replay};

#[derive(Debug, Parser)]
#[command(name = "taskguide", version, about = "Task-guidance engine tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Windowed spec retrieval scored by ROUGE-1/2/L and accuracy.
    Evaluate(EvaluateArgs),
    /// Write a synthetic stream, gold segmentation and transcripts for a spec.
    Synth(SynthArgs),
    /// Embed spec items or transcript chunks with the built-in encoder.
    Embed(EmbedArgs),
    /// Extract a semantic frame from text and suggest questions.
    Extract(ExtractArgs),
    /// Train an action segmenter.
    Train(TrainArgs),
    /// Check that a recorded session replays to identical events.
    Replay(ReplayArgs),
}

#[derive(Debug, clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Frame embeddings (TGEMB1).
    #[arg(long)]
    stream: PathBuf,
    /// Gold segments: `[{"start_ms", "end_ms", "item"}]`.
    #[arg(long)]
    gold: PathBuf,
    /// Window sizes in seconds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,6,8")]
    windows: Vec<f64>,
    /// Evaluation tick, in milliseconds.
    #[arg(long, default_value_t = 1000)]
    cadence: u64,
    #[arg(long)]
    out: PathBuf,
    /// Spec-item embeddings (TGEMB1, one row per item in order). Built-in
    /// text embeddings of the item texts otherwise.
    #[arg(long)]
    items: Option<PathBuf>,
    /// Transcript chunks (JSON); adds the text-only row.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Dimension of the built-in encoder for the text-only row.
    #[arg(long, default_value_t = 64)]
    encoder_dim: usize,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Time spent on each spec item.
    #[arg(long, default_value_t = 12_000)]
    segment_ms: u64,
    #[arg(long, default_value_t = 1000)]
    cadence: u64,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Uniform noise added to every vector component.
    #[arg(long, default_value_t = 0.0)]
    noise: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, clap::Args)]
struct EmbedArgs {
    /// Embed the items of this spec (row timestamp = item index).
    #[arg(long, conflicts_with = "transcripts", required_unless_present = "transcripts")]
    spec: Option<PathBuf>,
    /// Embed these transcript chunks (row timestamp = chunk start).
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct ExtractArgs {
    text: String,
    /// Slots a complete frame needs.
    #[arg(long, value_delimiter = ',', default_value = "Action,Tool,Receiver")]
    required: Vec<String>,
    #[arg(long, default_value_t = 3)]
    limit: usize,
    /// Question template catalog (JSON). Built-in templates otherwise.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    /// `[{"features": [[f32]], "labels": [usize]}]`
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the largest label + 1.
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 2)]
    stages: usize,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, clap::Args)]
struct ReplayArgs {
    /// Directory holding `<id>.header.json` and `<id>.jsonl`.
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    session: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evaluate(args) => evaluate(args),
        Command::Synth(args) => synth(args),
        Command::Embed(args) => embed(args),
        Command::Extract(args) => extract(args),
        Command::Train(args) => train_cmd(args),
        Command::Replay(args) => replay(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_spec(path: &Path) -> Result<Arc<Spec>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Arc::new(load_spec(&bytes).with_context(|| format!("parsing {}", path.display()))?))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_transcripts(path: &Path) -> Result<Vec<TranscriptChunk>> {
    let chunks: Vec<TranscriptChunk> = read_json(path)?;
    validate_chunks(&chunks)?;
    Ok(chunks)
}

fn window_label(seconds: f64) -> String {
    format!("n={seconds}s")
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let spec = read_spec(&args.spec)?;
    let (stream, _) = ingest_embedding_file(&args.stream).with_context(|| format!("reading {}", args.stream.display()))?;
    let gold: Vec<GoldSegment> = parse_gold(&std::fs::read(&args.gold)?).with_context(|| format!("parsing {}", args.gold.display()))?;

    let vectors = match &args.items {
        Some(path) => {
            let (items, _) = ingest_embedding_file(path).with_context(|| format!("reading {}", path.display()))?;
            if items.len() != spec.len() {
                bail!("{} has {} rows for {} spec items", path.display(), items.len(), spec.len());
            }
            items.entries().iter().map(|(_, v)| v.clone()).collect()
        }
        None => item_vectors(&spec, &FallbackEncoder::new(stream.dim())?),
    };

    let mut rows = Vec::new();
    if let Some(path) = &args.transcripts {
        let chunks = read_transcripts(path)?;
        let encoder = FallbackEncoder::new(args.encoder_dim)?;
        let scores = evaluate_transcript_retrieval(&spec, &chunks, &gold, &encoder, args.cadence)?;
        rows.push(ReportRow { config: "SBERT".into(), scores });
    }
    for &seconds in &args.windows {
        if !(seconds > 0.0 && seconds.is_finite()) {
            bail!("window {seconds} must be a positive number of seconds");
        }
        let window_ms = (seconds * 1000.0).round() as u64;
        let scores = evaluate_retrieval(&spec, &vectors, &stream, &gold, window_ms, args.cadence)?;
        rows.push(ReportRow { config: window_label(seconds), scores });
    }

    print!("{}", report_table(&rows));
    write_json(&args.out, &Report::new(rows))
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = read_spec(&args.spec)?;
    if args.cadence == 0 || args.segment_ms < args.cadence {
        bail!("segment_ms must be at least the cadence, which must be positive");
    }
    let encoder = FallbackEncoder::new(args.dim)?;
    let vectors = item_vectors(&spec, &encoder);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut entries = Vec::new();
    let mut gold = Vec::new();
    let mut chunks = Vec::new();
    for (i, item) in spec.items().iter().enumerate() {
        let start = i as u64 * args.segment_ms;
        gold.push(GoldSegment { start_ms: start, end_ms: start + args.segment_ms, item: i });
        chunks.push(TranscriptChunk::new(i as u64, item.text.clone(), start, start + args.segment_ms - 1)?);
        let mut t = start;
        while t < start + args.segment_ms {
            let v = vectors[i].iter().map(|x| x + args.noise * rng.random_range(-1.0f32..=1.0)).collect();
            entries.push((t, v));
            t += args.cadence;
        }
    }
    let stream = EmbeddingStream::from_entries(args.dim, args.cadence, entries)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let manifest = EmbeddingManifest { source_model: format!("synthetic/fallback-{}", args.dim), cadence_ms: args.cadence };
    write_embedding_file(&args.out_dir.join("stream.emb"), &stream, Some(&manifest))?;
    write_json(&args.out_dir.join("gold.json"), &gold)?;
    write_json(&args.out_dir.join("transcripts.json"), &chunks)?;
    println!("{} frames, {} segments -> {}", stream.len(), gold.len(), args.out_dir.display());
    Ok(())
}

fn embed(args: EmbedArgs) -> Result<()> {
    let encoder = FallbackEncoder::new(args.dim)?;
    let entries: Vec<(u64, Vec<f32>)> = match (&args.spec, &args.transcripts) {
        (Some(path), _) => {
            let spec = read_spec(path)?;
            item_vectors(&spec, &encoder).into_iter().enumerate().map(|(i, v)| (i as u64, v)).collect()
        }
        (None, Some(path)) => {
            let chunks = read_transcripts(path)?;
            let mut entries: Vec<(u64, Vec<f32>)> = Vec::with_capacity(chunks.len());
            for chunk in &chunks {
                if entries.last().is_some_and(|(t, _)| *t >= chunk.start_ms) {
                    bail!("chunk {} does not start after the previous one", chunk.chunk_index);
                }
                entries.push((chunk.start_ms, encoder.embed(&chunk.text).vector));
            }
            entries
        }
        (None, None) => bail!("either --spec or --transcripts is required"),
    };
    let rows = entries.len();
    let stream = EmbeddingStream::from_entries(args.dim, 1000, entries)?;
    let manifest = EmbeddingManifest { source_model: format!("fallback-{}", args.dim), cadence_ms: stream.cadence_ms() };
    write_embedding_file(&args.out, &stream, Some(&manifest))?;
    println!("{rows} rows of dimension {} -> {}", args.dim, args.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ExtractOutput {
    frame: taskguide_core::model::SemanticFrame,
    no_action: bool,
    missing: Vec<SlotName>,
    questions: Vec<taskguide_core::questions::GeneratedQuestion>,
}

fn extract(args: ExtractArgs) -> Result<()> {
    let required = args
        .required
        .iter()
        .map(|s| s.parse::<SlotName>().map_err(|e| anyhow::anyhow!("{e}")))
        .collect::<Result<taskguide_core::model::SlotSet>>()?;
    let templates = match &args.templates {
        Some(path) => TemplateCatalog::load(path)?,
        None => TemplateCatalog::default(),
    };
    let extraction = FrameExtractor::with_default_mapping().extract_text(&RuleTagger, &args.text)?;
    let missing = taskguide_core::model::frame_missing_slots(&extraction.frame, &required).into_iter().collect();
    let questions = templates.suggest(&extraction.frame, &required, args.limit);
    let out = ExtractOutput { frame: extraction.frame, no_action: extraction.no_action, missing, questions };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceFile {
    features: Vec<Vec<f32>>,
    labels: Vec<usize>,
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let raw: Vec<SequenceFile> = read_json(&args.data)?;
    let Some(first) = raw.iter().find_map(|s| s.features.first()) else {
        bail!("{} holds no frames", args.data.display());
    };
    let input_dim = first.len();
    let max_label = raw.iter().flat_map(|s| &s.labels).max().copied().unwrap_or(0);
    let classes = args.classes.unwrap_or(max_label + 1);
    let dataset: Vec<Sequence> = raw.into_iter().map(|s| Sequence { features: s.features, labels: s.labels }).collect();

    let config = CausalTcnConfig {
        num_stages: args.stages,
        layers_per_stage: args.layers,
        hidden_dim: args.hidden,
        ..CausalTcnConfig::new(input_dim, classes)
    };
    let model = CausalTcnModel::init(config, args.seed)?;
    let (trained, report) = train(&model, &dataset, args.steps, args.lr)?;
    write_checkpoint(&args.out, &trained)?;
    let first_loss = report.losses.first().copied().unwrap_or(f64::NAN);
    let last_loss = report.losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "{} steps, loss {first_loss:.4} -> {last_loss:.4}, frame accuracy {:.4} -> {}",
        args.steps,
        frame_accuracy(&trained, &dataset)?,
        args.out.display()
    );
    Ok(())
}

fn replay(args: ReplayArgs) -> Result<()> {
    let log = read_log(&args.logs, &args.session).with_context(|| format!("reading session {}", args.session))?;
    let report = verify_replay(&log)?;
    println!("{} inputs, {} derived events replayed identically", report.inputs, report.derived);
    Ok(())
}
