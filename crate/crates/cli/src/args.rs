use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use softreg::trainer::BbMode;

#[derive(Debug, Parser)]
#[command(name = "softreg", version, about = "Softmax regression trainer and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full-batch gradient descent.
    Train(TrainArgs),
    /// Eigen-decomposition of diag(y) - y yᵀ.
    Spectrum(SpectrumArgs),
    /// Strict-convexity certificate and rate bounds.
    Certify(CertifyArgs),
    /// Finite-difference checks of the gradient and Hessian operator.
    Checkgrad(CheckgradArgs),
}

/// Where the training set comes from: an IDX image/label pair or a CSV.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// IDX image file.
    #[arg(long, requires = "labels", conflicts_with = "csv")]
    pub data: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "data")]
    pub labels: Option<PathBuf>,
    /// CSV file with one sample per row.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// 0-based index of the CSV label column.
    #[arg(long, default_value_t = 0)]
    pub label_column: usize,
    /// The CSV has a header row.
    #[arg(long)]
    pub header: bool,
    /// Number of classes (defaults to 10 for IDX input; required for CSV).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Append a constant-1 feature.
    #[arg(long)]
    pub bias: bool,
    /// Keep only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Use raw byte values for IDX pixels instead of scaling to [0, 1].
    #[arg(long)]
    pub raw_pixels: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TestDataArgs {
    /// IDX image file of a held-out set.
    #[arg(long, requires = "test_labels", conflicts_with = "test_csv")]
    pub test_data: Option<PathBuf>,
    /// IDX label file of a held-out set.
    #[arg(long, requires = "test_data")]
    pub test_labels: Option<PathBuf>,
    /// CSV held-out set, same layout as --csv.
    #[arg(long)]
    pub test_csv: Option<PathBuf>,
    /// Keep only the first N held-out samples.
    #[arg(long)]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    pub json: bool,
    /// Omit wall-clock timings so reports are reproducible byte for byte.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub test: TestDataArgs,
    /// Learning rate; the starting step when BB stepping is on.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Step-size rule.
    #[arg(long, default_value = "off", value_parser = parse_bb)]
    pub bb: BbMode,
    /// Recenter weight columns every N epochs (0 = never).
    #[arg(long, default_value_t = 10)]
    pub center_every: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub init_scale: f64,
    /// Stop once the Frobenius norm of the gradient is at most this.
    #[arg(long, default_value_t = 1e-8)]
    pub tol_grad: f64,
    #[arg(long, default_value_t = 1)]
    pub log_every: usize,
    /// Weights output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Probability vector, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["weights", "sample"])]
    pub y: Option<Vec<f64>>,
    /// Weights file; y is the softmax output for one sample.
    #[arg(long, requires = "sample")]
    pub weights: Option<PathBuf>,
    /// 0-based sample index.
    #[arg(long, requires = "weights")]
    pub sample: Option<usize>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Weights at which curvature is measured (default: zero weights).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Train this many BB2 epochs first and measure curvature there.
    #[arg(long, default_value_t = 0, conflicts_with = "weights")]
    pub train_epochs: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CheckgradArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    /// Maximum sizes, e.g. C=5,D=7,N=10.
    #[arg(long, value_parser = parse_sizes, default_value = "C=5,D=7,N=10")]
    pub sizes: softreg::gradcheck::InstanceSizes,
    /// Scale the gradient under test by (1 + 1e-3); negative control.
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_bb(s: &str) -> Result<BbMode, String> {
    s.parse::<BbMode>().map_err(|e| e.to_string())
}

fn parse_sizes(s: &str) -> Result<softreg::gradcheck::InstanceSizes, String> {
    let mut sizes = softreg::gradcheck::InstanceSizes::default();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected KEY=VALUE, got '{part}'"))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| format!("bad size '{value}'"))?;
        match key.trim() {
            "C" | "c" if value >= 2 => sizes.max_classes = value,
            "D" | "d" if value >= 1 => sizes.max_features = value,
            "N" | "n" if value >= 1 => sizes.max_samples = value,
            "C" | "c" | "D" | "d" | "N" | "n" => {
                return Err(format!("size {key}={value} too small"))
            }
            other => return Err(format!("unknown size key '{other}'")),
        }
    }
    Ok(sizes)
}
