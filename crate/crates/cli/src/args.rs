use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use svemu::evaluation::ProtocolKind;
use svemu::{EntropyMethod, Strategy};

#[derive(Debug, Parser)]
#[command(
    name = "svemu",
    version,
    about = "Record, match and emulate opaque service interactions"
)]
pub struct Cli {
    /// JSON object whose keys mirror the subcommand's flags. Must precede
    /// the subcommand. A key also given on the command line is an error.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Proxy live traffic to an upstream service and append it to a library.
    Record(RecordArgs),
    /// Derive entropy position weights from a library.
    Weights(WeightsArgs),
    /// Answer live requests from a library.
    Serve(ServeArgs),
    /// Select the response for one request.
    Match(MatchArgs),
    /// Align two messages and print the gapped pair.
    Align(AlignArgs),
    /// Generate a synthetic interaction library.
    Generate(GenerateArgs),
    /// Cross-validate matching strategies on a library.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FramingArg {
    /// One message per connection.
    Conn,
    /// 4-byte big-endian length prefix.
    Len,
    /// Delimiter-terminated.
    Delim,
}

#[derive(Debug, Args)]
pub struct FramingArgs {
    #[arg(long, value_enum)]
    pub framing: FramingArg,
    /// Delimiter bytes as hex, delimited framing only.
    #[arg(long, value_name = "HEX")]
    pub delimiter: Option<String>,
    #[arg(long, value_name = "N", default_value_t = 1000)]
    pub timeout_ms: u64,
    #[arg(long, value_name = "N", default_value_t = svemu_wire::framing::DEFAULT_MAX_MESSAGE_BYTES)]
    pub max_message_bytes: usize,
}

#[derive(Debug, Args)]
pub struct ScoringArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub identical: f64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub differing: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalerArg {
    #[value(alias = "hyper")]
    Hyperbolic,
    #[value(alias = "exp")]
    Exponential,
    Sigmoid,
    Threshold,
}

#[derive(Debug, Args)]
pub struct ScalerArgs {
    #[arg(long, value_enum, default_value = "hyperbolic")]
    pub scaler: ScalerArg,
    /// Hyperbolic `a` (default 1).
    #[arg(long)]
    pub a: Option<f64>,
    /// Hyperbolic exponent `c` (default 10).
    #[arg(long)]
    pub c: Option<f64>,
    /// Exponential or sigmoid rate `k`.
    #[arg(long, value_name = "K")]
    pub scaler_k: Option<f64>,
    /// Sigmoid midpoint or threshold cut-off.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    #[arg(long, value_name = "H:P")]
    pub listen: String,
    #[arg(long, value_name = "H:P")]
    pub upstream: String,
    #[command(flatten)]
    pub framing: FramingArgs,
    /// Library file; records are appended.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[arg(long)]
    pub library: PathBuf,
    #[arg(long, default_value = "shannon")]
    pub method: EntropyMethod,
    #[command(flatten)]
    pub scaler: ScalerArgs,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatcherArgs {
    #[arg(long, default_value = "nw")]
    pub strategy: Strategy,
    /// Weights file, required by nw-weighted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_name = "H:P")]
    pub listen: String,
    #[arg(long)]
    pub library: PathBuf,
    #[command(flatten)]
    pub matcher: MatcherArgs,
    #[command(flatten)]
    pub framing: FramingArgs,
}

#[derive(Debug, Args)]
#[group(id = "input", required = true, multiple = false, args = ["request", "request_b64", "request_file"])]
pub struct MatchArgs {
    #[arg(long)]
    pub library: PathBuf,
    /// Request given as text.
    #[arg(long)]
    pub request: Option<String>,
    /// Request given as standard base64.
    #[arg(long)]
    pub request_b64: Option<String>,
    /// Request read raw from a file.
    #[arg(long)]
    pub request_file: Option<PathBuf>,
    #[command(flatten)]
    pub matcher: MatcherArgs,
    /// Write the per-candidate `index,distance` table here.
    #[arg(long, value_name = "FILE")]
    pub candidates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    /// Treat `--a` and `--b` as hex.
    #[arg(long)]
    pub hex: bool,
    /// Weights file for a weighted alignment.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Directory,
    Fixed,
}

impl From<KindArg> for ProtocolKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Directory => ProtocolKind::DirectoryText,
            KindArg::Fixed => ProtocolKind::FixedWidthBinary,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub ops: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `gen:directory`, `gen:fixed` or a library file.
    #[arg(long)]
    pub dataset: String,
    /// Protocol of a library file, used to classify responses.
    #[arg(long, value_enum)]
    pub protocol: Option<KindArg>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub ops: Option<usize>,
    #[arg(long)]
    pub gen_seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "hash,nw,nw-weighted")]
    pub strategies: Vec<Strategy>,
    #[arg(long, default_value = "shannon")]
    pub method: EntropyMethod,
    #[command(flatten)]
    pub scaler: ScalerArgs,
    /// Extra hyperbolic points at these exponents (uses `--a`).
    #[arg(long, value_delimiter = ',')]
    pub c_sweep: Vec<f64>,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// One seed per repeat; defaults to 1..=repeats.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// `.csv` writes the per-repeat table, anything else JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}
