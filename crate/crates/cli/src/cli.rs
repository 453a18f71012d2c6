use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use permassist_core::config::PredictorKind;
use permassist_core::icl::MockPolicy;
use permassist_core::Label;

#[derive(Debug, Parser)]
#[command(name = "permassist", version, about = "Predict and manage users' data-sharing permissions for AI agents")]
pub struct Cli {
    /// TOML settings file ([hybrid], [cf], [icl], [provider] sections).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel evaluation.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Log filter, e.g. `info` or `permassist_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check, summarize or generate datasets.
    #[command(subcommand)]
    Ingest(IngestCmd),
    /// Compute a descriptive report over a dataset.
    Analyze(AnalyzeArgs),
    /// Collaborative-filtering model.
    #[command(subcommand)]
    Cf(CfCmd),
    /// Predict one recorded request with the prompt-based predictor.
    Icl(PredictArgs),
    /// Predict one recorded request with CF recommendations in the prompt.
    Hybrid(HybridArgs),
    /// Evaluation harness.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run the HTTP decision service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum IngestCmd {
    /// Validate a dataset file; reports every offending record.
    Validate { path: PathBuf },
    /// Print counts for a dataset file.
    Stats {
        path: PathBuf,
        /// Report counts after the modeling filter.
        #[arg(long)]
        filtered: bool,
    },
    /// Write a synthetic two-group dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        users_per_group: usize,
        /// Allow probability of the first group; the second uses 1 - p.
        #[arg(long, default_value_t = 0.9)]
        allow_probability: f64,
        /// Domain labels, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "Finance,Travel")]
        domains: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Report name: table1-4, fig2-6, demographics, domain-rates.
    pub report: String,
    pub dataset: PathBuf,
    /// Also write `<report>.json` (and `<report>.csv` when available) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CfCmd {
    /// Train on a dataset and write the model document.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fit thresholds on this fraction of held-out edges instead of the training edges.
        #[arg(long)]
        held_out: Option<f64>,
        /// Skip the modeling filter.
        #[arg(long)]
        no_filter: bool,
    },
    /// Score one (user, query, tool, data type) request.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        query: String,
        #[arg(long)]
        tool: String,
        #[arg(long)]
        data_type: String,
        /// Confidence needed to count as covered.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
    },
    /// Coverage/accuracy and score-threshold curves.
    SweepThresholds {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MockKind {
    /// Majority label of the user's history.
    Majority,
    Allow,
    Deny,
}

impl MockKind {
    pub fn policy(self) -> MockPolicy {
        match self {
            MockKind::Majority => MockPolicy::MajorityOfHistory,
            MockKind::Allow => MockPolicy::FixedLabel { label: Label::Allow, confidence: 1.0 },
            MockKind::Deny => MockPolicy::FixedLabel { label: Label::Deny, confidence: 1.0 },
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub user: String,
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub data_type: String,
    /// Needed only when the query uses several tools.
    #[arg(long)]
    pub tool: Option<String>,
    /// Print the prompt and stop.
    #[arg(long)]
    pub prompt_only: bool,
    /// Policy of the mock used when no provider endpoint is configured.
    #[arg(long, value_enum, default_value_t = MockKind::Majority)]
    pub mock: MockKind,
}

#[derive(Debug, Args)]
pub struct HybridArgs {
    #[command(flatten)]
    pub predict: PredictArgs,
    /// Pre-trained CF model; by default CF is trained on every other query.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// k-fold cross-validation.
    Cv(CvArgs),
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long, value_parser = parse_predictor)]
    pub predictor: PredictorKind,
    #[arg(long, default_value_t = 1.0)]
    pub history_ratio: f64,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Repeat with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    /// Skip the modeling filter.
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long, value_enum, default_value_t = MockKind::Majority)]
    pub mock: MockKind,
}

fn parse_predictor(s: &str) -> Result<PredictorKind, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service database file; created when missing.
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Static API token; falls back to PERMASSIST_API_TOKEN.
    #[arg(long)]
    pub token: Option<String>,
    /// Seed a fresh database with this dataset's catalog, users and answers.
    #[arg(long)]
    pub import: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MockKind::Majority)]
    pub mock: MockKind,
}
