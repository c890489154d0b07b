use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pumpwatch::detector::ThresholdObjective;
use pumpwatch::windowing::LabelRule;
use pumpwatch::WindowMode;
use pumpwatch_service::{ExtractionMode, ReplaySpeed};

#[derive(Debug, Parser)]
#[command(name = "pumpwatch", version, about = "Detect pump-and-dump start announcements in chat message streams")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for generation, training and review sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Service config file (key=value).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for reports and artifacts.
    #[arg(long, global = true, default_value = "pumpwatch-out")]
    pub out_dir: PathBuf,
    /// Overwrite existing reports and artifacts.
    #[arg(long, global = true)]
    pub force: bool,
    /// Ticker lexicon, one symbol per line.
    #[arg(long, global = true)]
    pub tickers: Option<PathBuf>,
    /// Exchange lexicon, one name per line.
    #[arg(long, global = true)]
    pub exchanges: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus statistics.
    Stats(CorpusArg),
    /// Generate a labeled synthetic corpus.
    Synth(SynthArgs),
    /// Window a corpus and write its chronological split.
    Split(SplitArgs),
    /// Fit the TF-IDF vectorizer and tree ensemble and tune the threshold.
    Train(TrainArgs),
    /// Evaluate a trained detector on one split partition.
    Eval(EvalArgs),
    /// Measure coin/exchange extraction on annotated pump starts.
    ExtractEval(ExtractEvalArgs),
    /// Phrase rates in pump versus background text.
    Phrases(PhrasesArgs),
    /// Detector latency per window.
    Bench(BenchArgs),
    /// Time-ordered cross-validation.
    Cv(CvArgs),
    /// Window size, window mode and vocabulary size grid.
    Ablate(AblateArgs),
    /// Stream a corpus through the online cascade in time order.
    Replay(ReplayArgs),
    /// Run the HTTP ingestion and review service.
    Serve(ServeArgs),
    /// Write reviewed alerts as a labeled corpus.
    ExportLabels(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArg {
    /// Corpus file; read from the piped manifest when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct WindowArgs {
    /// Window half-width k; windows hold up to 2k+1 messages.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = parse_from_str::<WindowMode>)]
    pub mode: Option<WindowMode>,
    /// contains: positive if any member is a pump start; center: only the center.
    #[arg(long, value_parser = parse_from_str::<LabelRule>)]
    pub label_rule: Option<LabelRule>,
    /// Train,validation,test fractions.
    #[arg(long, value_parser = parse_fractions)]
    pub fractions: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Vocabulary size.
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_leaves: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub feature_subsample: Option<f64>,
    /// Train without inverse-frequency class weights.
    #[arg(long)]
    pub no_class_weighting: bool,
    /// max_f1 or min_recall_at:<r>.
    #[arg(long, value_parser = parse_from_str::<ThresholdObjective>)]
    pub objective: Option<ThresholdObjective>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub groups: usize,
    #[arg(long, default_value_t = 2000)]
    pub messages_per_group: usize,
    /// Probability that a message is a pump start.
    #[arg(long, default_value_t = 0.01)]
    pub prevalence: f64,
    /// Rate of misleading phrases in background text and of terse announcements.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub cancel_rate: Option<f64>,
    #[arg(long)]
    pub image_rate: Option<f64>,
    /// Phrase appended to every announcement.
    #[arg(long)]
    pub marker_phrase: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartitionArg {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    /// Directory with tfidf.txt and gbdt.txt.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, value_enum, default_value_t = PartitionArg::Test)]
    pub partition: PartitionArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rule,
    Llm,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractEvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Rule)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = PartitionArg::Test)]
    pub partition: PartitionArg,
    /// Concurrent LLM requests.
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PopulationArg {
    Window,
    Message,
}

#[derive(Debug, Clone, Args)]
pub struct PhrasesArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Comma-separated phrases.
    #[arg(long, value_delimiter = ',')]
    pub phrases: Vec<String>,
    /// Population reported first and summarized on standard output.
    #[arg(long, value_enum, default_value_t = PopulationArg::Window)]
    pub population: PopulationArg,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Windows timed per measurement.
    #[arg(long, default_value_t = 10_000)]
    pub windows: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [10_000usize, 15_000, 20_000])]
    pub feature_counts: Vec<usize>,
    /// Tree seeds; defaults to --seed, --seed+1, --seed+2.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Odd window sizes 2k+1.
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 7, 11])]
    pub window_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<WindowMode>)]
    pub modes: Vec<WindowMode>,
    #[arg(long, value_delimiter = ',', default_values_t = [10_000usize, 15_000, 20_000])]
    pub feature_counts: Vec<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ServiceArgs {
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Window half-width of the online trailing buffer.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = parse_from_str::<ExtractionMode>)]
    pub extraction: Option<ExtractionMode>,
    /// Messages after an alert during which a group cannot alert again.
    #[arg(long)]
    pub cooldown: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub service: ServiceArgs,
    /// max, realtime or realtime:<factor>.
    #[arg(long, default_value = "max", value_parser = parse_from_str::<ReplaySpeed>)]
    pub speed: ReplaySpeed,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    #[arg(long)]
    pub bind: Option<String>,
    /// Directory for the alert log and snapshot.
    #[arg(long)]
    pub state_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Service state directory; defaults to the config's state_dir.
    #[arg(long)]
    pub state_dir: Option<PathBuf>,
    /// Output corpus file; defaults to labels.jsonl in --out-dir.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn parse_fractions(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad fraction `{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] if [a, b, c].iter().all(|f| *f > 0.0) && ((a + b + c) - 1.0).abs() < 1e-9 => Ok((a, b, c)),
        _ => Err("expected three positive fractions summing to 1, e.g. 0.6,0.2,0.2".into()),
    }
}
