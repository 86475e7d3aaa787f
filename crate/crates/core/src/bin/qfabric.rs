use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qfabric::cli::{self, CliError};

#[derive(Parser)]
#[command(
    name = "qfabric",
    version,
    about = "Q-format CNN co-processor simulator and toolchain"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a text program into 64-bit words.
    Assemble { input: PathBuf, output: PathBuf },
    /// Turn a binary program back into canonical text.
    Disassemble { input: PathBuf, output: PathBuf },
    /// Execute a run manifest and write its output tensor.
    Run { manifest: PathBuf },
    /// Fixed-versus-float error sweep as CSV.
    Sweep {
        /// `3..9` or `3,5,7`
        #[arg(long, default_value = "3..9")]
        kernels: String,
        /// `lo:hi`; repeat for several ranges
        #[arg(long = "range", default_value = "0:50")]
        ranges: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Defaults to $QFABRIC_SEED, then 7.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multiplier, adder and DSP counts per cell body as CSV.
    Resources {
        /// `3`, `3..9` or `3,5,7`
        #[arg(long)]
        k: String,
        #[arg(long, default_value = "1")]
        din: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cycle model for one layer as CSV.
    Cycles {
        #[arg(long)]
        gamma: usize,
        #[arg(long)]
        din: usize,
        #[arg(long)]
        k: usize,
        /// Input `WxH`.
        #[arg(long, default_value = "224x224")]
        dims: String,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        zero_pad: bool,
        #[arg(long, default_value_t = 1)]
        pool: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Assemble { input, output } => {
            let n = cli::cmd_assemble(&input, &output)?;
            eprintln!("assembled {n} instructions");
        }
        Command::Disassemble { input, output } => {
            let n = cli::cmd_disassemble(&input, &output)?;
            eprintln!("disassembled {n} instructions");
        }
        Command::Run { manifest } => {
            let report = cli::cmd_run(&manifest)?;
            print!("{report}");
        }
        Command::Sweep {
            kernels,
            ranges,
            trials,
            seed,
            out,
        } => {
            let kernels = cli::parse_kernels(&kernels)?;
            let ranges = ranges
                .iter()
                .map(|r| cli::parse_range(r))
                .collect::<Result<Vec<_>, _>>()?;
            let env = std::env::var(cli::SEED_ENV).ok();
            let seed = cli::resolve_seed(seed, env.as_deref())?;
            cli::cmd_sweep(&kernels, &ranges, trials, seed, sink(out.as_deref())?)?;
        }
        Command::Resources { k, din, out } => {
            let ks = cli::parse_kernels(&k)?;
            let ds = cli::parse_kernels(&din)?;
            cli::cmd_resources(&ks, &ds, sink(out.as_deref())?)?;
        }
        Command::Cycles {
            gamma,
            din,
            k,
            dims,
            stride,
            zero_pad,
            pool,
            out,
        } => {
            let dims = cli::parse_dims(&dims)?;
            cli::cmd_cycles(gamma, din, k, dims, stride, zero_pad, pool, sink(out.as_deref())?)?;
            eprintln!("note: weight_load, compute and total are model estimates");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Args::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
