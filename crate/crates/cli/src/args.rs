use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use u1sym_core::ann::{IndexConfig, Metric};
use u1sym_core::classifier::ClassifierConfig;
use u1sym_core::manifest::Split;
use u1sym_core::symmetry::{Pairing, Weighting};
use u1sym_core::trainer::LabelKind;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "u1sym",
    version,
    about = "Pixel-vector memory classifier and U(1) symmetry analysis"
)]
pub struct Cli {
    /// Directory for the config echo and file artifacts.
    #[arg(long, global = true, default_value = "u1sym-out")]
    pub out: PathBuf,
    /// Run on a single worker thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Validate a manifest and every AMF file it lists.
    Ingest(IngestArgs),
    /// Build the ANN index over the memory maps.
    Index(IndexCmd),
    /// Class likelihoods for one query map.
    Classify(ClassifyArgs),
    /// Classify every query map and report accuracy.
    Eval(EvalArgs),
    /// Energy profiles and match-location statistics.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCmd,
    },
    /// Generate per-class 2-D target points.
    Labels(LabelArgs),
    /// Train the toy network.
    Train(TrainCmd),
    /// Compare label kinds over several seeds.
    Ablate(AblateArgs),
    /// Bundle CSV/PGM/JSON artifacts into one directory with an index.
    Report(ReportArgs),
    /// Write the synthetic lobe dataset as AMF files plus a manifest.
    Synth(SynthArgs),
}

fn parse_split(s: &str) -> Result<Split, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown split {s:?} (train, memory, query, test)"))
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IndexArgs {
    #[arg(long, default_value_t = 16)]
    pub trees: usize,
    #[arg(long, default_value_t = 8)]
    pub leaf_size: usize,
    #[arg(long, default_value_t = Metric::Euclidean)]
    pub metric: Metric,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Candidates examined per query (default: trees × k).
    #[arg(long)]
    pub budget: Option<usize>,
}

impl IndexArgs {
    pub fn config(&self) -> IndexConfig {
        IndexConfig {
            n_trees: self.trees,
            leaf_size: self.leaf_size,
            seed: self.seed,
            metric: self.metric,
            search_budget: self.budget,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MemoryArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Manifest splits that make up the memory bank.
    #[arg(long, value_delimiter = ',', value_parser = parse_split, default_values = ["memory", "train"])]
    pub memory_split: Vec<Split>,
    /// Unit-normalize pixel vectors before indexing.
    #[arg(long, num_args = 0..=1, default_value_t = true, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub normalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct IndexCmd {
    #[command(flatten)]
    pub memory: MemoryArgs,
    #[command(flatten)]
    pub index: IndexArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClassifierArgs {
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, num_args = 0..=1, default_value_t = true, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub exclude_same_image: bool,
    /// Scan the whole bank instead of the search budget.
    #[arg(long)]
    pub exact: bool,
}

impl ClassifierArgs {
    pub fn config(&self, metric: Metric, normalize: bool) -> ClassifierConfig {
        ClassifierConfig {
            k: self.k,
            epsilon: self.epsilon,
            metric,
            normalize_vectors: normalize,
            exclude_same_image: self.exclude_same_image,
            exact: self.exact,
        }
    }
}

/// Where the memory bank comes from: a manifest (indexed on the fly) or a
/// directory written by `index`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct BankArgs {
    #[arg(
        long,
        conflicts_with = "index_dir",
        required_unless_present = "index_dir"
    )]
    pub manifest: Option<PathBuf>,
    /// Directory holding index.u1ix and bank.json.
    #[arg(long = "index", value_name = "DIR")]
    pub index_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_split, default_values = ["memory", "train"])]
    pub memory_split: Vec<Split>,
    #[arg(long, num_args = 0..=1, default_value_t = true, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub normalize: bool,
    #[command(flatten)]
    pub index: IndexArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub bank: BankArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    #[arg(long)]
    pub query: PathBuf,
    /// Image id used for self-exclusion (default: the query file stem).
    #[arg(long)]
    pub query_id: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QueryArgs {
    #[command(flatten)]
    pub memory: MemoryArgs,
    #[command(flatten)]
    pub index: IndexArgs,
    #[command(flatten)]
    pub classifier: ClassifierArgs,
    /// Manifest splits used as queries; when none are present the memory maps
    /// are queried against themselves.
    #[arg(long, value_delimiter = ',', value_parser = parse_split, default_values = ["query", "test"])]
    pub query_split: Vec<Split>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub query: QueryArgs,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyzeCmd {
    /// Mean energy map and radial profile.
    Energy(EnergyArgs),
    /// Every K-NN match location.
    Matches(MatchArgs),
    /// Per-class circular statistics of match locations.
    Angular(MatchArgs),
    /// Match histograms conditioned on the query location.
    Conditional(ConditionalArgs),
    /// Radial and tangential variance of match displacements.
    Radtan(MatchArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EnergyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Restrict to these splits (default: every record).
    #[arg(long, value_delimiter = ',', value_parser = parse_split)]
    pub split: Vec<Split>,
}

fn parse_pairing(s: &str) -> Result<Pairing, String> {
    s.parse().map_err(|e: u1sym_core::Error| e.to_string())
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    s.parse().map_err(|e: u1sym_core::Error| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct MatchArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long, value_parser = parse_pairing, default_value = "same_class")]
    pub pairing: Pairing,
    #[arg(long, value_parser = parse_weighting, default_value = "uniform")]
    pub weighting: Weighting,
}

#[derive(Debug, Args, Serialize)]
pub struct ConditionalArgs {
    #[command(flatten)]
    pub matches: MatchArgs,
    /// Query location in centered coordinates; every location when omitted.
    #[arg(long, requires = "y", allow_negative_numbers = true)]
    pub x: Option<f64>,
    #[arg(long, requires = "x", allow_negative_numbers = true)]
    pub y: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct LabelArgs {
    #[arg(long, default_value_t = LabelKind::UnitCircle)]
    pub kind: LabelKind,
    #[arg(long, default_value_t = 8)]
    pub n_classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs,
    Images,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lr_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Seeds initialization, shuffling, labels and data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train the class head only.
    #[arg(long)]
    pub one_hot_only: bool,
    #[arg(long, value_enum, default_value_t = DatasetKind::Blobs)]
    pub dataset: DatasetKind,
    /// Flip and shift augmentation (image dataset only).
    #[arg(long)]
    pub augment: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [32])]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub u1_layers: usize,
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    /// Within-class standard deviation of the blob dataset.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainCmd {
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = LabelKind::UnitCircle)]
    pub kind: LabelKind,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, value_delimiter = ',', default_values_t = LabelKind::ALL)]
    pub kinds: Vec<LabelKind>,
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Let initial weights depend on the label kind.
    #[arg(long)]
    pub uncontrolled_init: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Run directories or individual files to bundle.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
    #[arg(long, default_value_t = 7)]
    pub height: usize,
    #[arg(long, default_value_t = 7)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
