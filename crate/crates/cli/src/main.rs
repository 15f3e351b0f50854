use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "funlasso", version, about = "Sparse function-on-scalar regression")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write 0 for every timing field so outputs are byte-reproducible.
    #[arg(long, global = true)]
    no_timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one replication of a scenario.
    Simulate(SimulateArgs),
    /// Smooth raw curves and compute functional principal components.
    Smooth(SmoothArgs),
    /// Fit FSL or AFSL at a fixed lambda or along a tuned path.
    Fit(FitArgs),
    /// Run a replication campaign.
    Bench(BenchArgs),
    /// Eigenvalue, irrepresentability and signal diagnostics of a design.
    Diagnose(DiagnoseArgs),
    /// Plot coefficient functions as SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario key-value file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
}

#[derive(Args, Debug)]
pub struct SmoothArgs {
    /// Raw curves with the grid as header.
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline key-value file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline key-value file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Basis file; when given, rows of Y are coefficients in that basis.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    /// `fpca` smooths and projects the curves; `none` fits raw grid values.
    #[arg(long, default_value = "fpca")]
    pub preprocess: String,
    #[arg(long, default_value = "fsl")]
    pub mode: String,
    /// Fixed lambda (FSL stage in AFSL mode). Without it the path is tuned.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fixed lambda of the AFSL stage; defaults to `--lambda`.
    #[arg(long)]
    pub lambda_afsl: Option<f64>,
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long)]
    pub ebic_gamma: Option<f64>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Scenario key-value file; pipeline keys may be added to the same file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub x: PathBuf,
    /// True coefficient functions on a grid, one row per support index.
    #[arg(long)]
    pub beta_true: PathBuf,
    /// Comma-separated support; defaults to the first rows of the design.
    #[arg(long)]
    pub support: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// FSL estimate on a grid (header = grid).
    #[arg(long)]
    pub fsl: Option<PathBuf>,
    /// AFSL estimate on a grid.
    #[arg(long)]
    pub afsl: Option<PathBuf>,
    /// True coefficients; rows past its end are zero.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Comma-separated coefficient indices; defaults to every row of the
    /// truth file, or of the first estimate.
    #[arg(long)]
    pub index: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(CliError::config("--threads must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let ctx = commands::Context {
        threads,
        timing: !cli.no_timing,
    };
    pool.install(|| match cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, &a),
        Command::Smooth(a) => commands::smooth(&ctx, &a),
        Command::Fit(a) => commands::fit(&ctx, &a),
        Command::Bench(a) => commands::bench(&ctx, &a),
        Command::Diagnose(a) => commands::diagnose(&ctx, &a),
        Command::Plot(a) => commands::plot(&ctx, &a),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("funlasso: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
