use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use martsparse_harness::commands::{self, GenOptions};
use martsparse_harness::config::Arithmetic;

#[derive(Parser)]
#[command(name = "martsparse", version, about = "Sparse domination checks for martingale transforms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Float,
}

#[derive(Subcommand)]
enum Command {
    /// Run the property suites over a configured corpus.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `outputDir` and MARTSPARSE_OUTPUT_DIR.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Decompose a subordinate pair and write the report.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        arithmetic: Mode,
    },
    /// Sweep a weight family and fit the growth of the measured ratios.
    Sharpness {
        #[arg(long)]
        p: String,
        #[arg(long)]
        family: String,
        /// Comma-separated grid values.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a generated tree, pair, fixture or config.
    Gen {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        /// Root split of a jump tree; dyadic when absent.
        #[arg(long)]
        epsilon: Option<String>,
        #[arg(long, default_value_t = 1)]
        dimension: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long, default_value = "mixed")]
        profile: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify { config, output_dir } => commands::verify(&config, output_dir),
        Command::Decompose {
            input,
            output,
            arithmetic,
        } => {
            let mode = match arithmetic {
                Mode::Exact => Arithmetic::Exact,
                Mode::Float => Arithmetic::Float,
            };
            commands::decompose_pair(&input, &output, mode)
        }
        Command::Sharpness {
            p,
            family,
            grid,
            depth,
            output,
        } => commands::sharpness(&p, &family, &grid, depth, &output),
        Command::Gen {
            kind,
            output,
            depth,
            epsilon,
            dimension,
            seed,
            trial,
            profile,
        } => commands::generate(
            &GenOptions {
                kind,
                depth,
                epsilon,
                dimension,
                seed,
                trial,
                profile,
            },
            &output,
        ),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
