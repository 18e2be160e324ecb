mod commands;
mod star;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Hypergraph neural networks from the command line.
#[derive(Debug, Parser)]
#[command(name = "hgx", version, about)]
struct Cli {
    /// Base seed; run i of an experiment uses seed + i.
    #[arg(long, global = true, env = "HGX_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Size and degree statistics of a `.hg` file or a dataset directory.
    Stats {
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Convert between dataset and hypergraph formats.
    Convert {
        #[arg(value_enum)]
        kind: ConvertKind,
        /// Source file (or directory for cora-linqs).
        input: PathBuf,
        /// Destination file (or directory for dataset conversions).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Apply a propagation rule to node features.
    Propagate {
        #[arg(long)]
        hg: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        rule: Rule,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        /// Tensor order for z-prop / h-prop; defaults to the uniform edge size.
        #[arg(long)]
        order: Option<usize>,
        /// Power-mean exponent for hypersage.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        beta: f64,
        /// The features CSV starts with a header row.
        #[arg(long)]
        header: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Class-conditional Gaussian node features.
    SynthFeatures {
        #[arg(long)]
        labels: PathBuf,
        /// Defaults to the largest label plus one.
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = hgx_core::train::SYNTHETIC_DIM)]
        dim: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a training experiment described by a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Where to write the results JSON (stdout if absent).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Save each run's parameters as `<stem>-run<i>.{json,bin}`.
        #[arg(long)]
        save_params: Option<PathBuf>,
    },
    /// Run acceptance targets and report PASS/FAIL per criterion.
    Reproduce {
        target: String,
        /// Directory holding `zoo/` and optionally `cora/`.
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long, env = "HGX_CORA_DIR")]
        cora: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        json: bool,
    },
    /// Compare taped gradients of every layer kind against finite differences.
    Gradcheck {
        /// Restrict to these layer kinds (default: all).
        #[arg(long)]
        layer: Vec<String>,
        #[arg(long, default_value_t = hgx_core::reproduce::GRADCHECK_SEEDS)]
        seeds: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConvertKind {
    /// UCI `zoo.data` to a dataset directory.
    ZooUci,
    /// LINQS `cora.content` + `cora.cites` directory to a dataset directory.
    CoraLinqs,
    /// `.hg` to star-expansion incidence list.
    ToStar,
    /// Star-expansion incidence list to `.hg`.
    FromStar,
    /// `.hg` to the zero-diagonal clique-expansion adjacency (CSV).
    CeAdj,
    /// `.hg` to `H Hᵀ` (CSV).
    CeInc,
    /// `.hg` to its canonical `.hg` form.
    Hg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Rule {
    CePropH,
    CePropA,
    ZProp,
    HProp,
    Hgnn,
    Hnhn,
    Hcha,
    Hypergcn,
    Hypersage,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(err) => {
            let (kind, message, code) = commands::classify(&err);
            let payload = serde_json::json!({ "error": { "kind": kind, "message": message } });
            eprintln!("{payload}");
            ExitCode::from(code)
        }
    }
}
