use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cluster_tomography::cli::{self, CommandOutcome, LeArgs};
use cluster_tomography::cluster::LeMode;
use cluster_tomography::process::NoiseChannel;
use cluster_tomography::simdata::NoiseSpec;

#[derive(Parser)]
#[command(name = "cluster-tomo", version, about = "Spin-photon process tomography and cluster-state entanglement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the ideal process, optionally composed with noise channels.
    Ideal {
        #[arg(long)]
        out: PathBuf,
        /// `depolarize:P`, `dephase:P[:axis]` or `depolarize_output:P`; repeatable.
        #[arg(long, value_name = "CHANNEL")]
        noise: Vec<NoiseChannel>,
    },
    /// Simulate the 36-record tomography dataset for a process.
    Simulate {
        #[arg(long)]
        process: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.02)]
        rate_sigma: f64,
        #[arg(long, default_value_t = 0.02)]
        spin_sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        init_polarization: f64,
    },
    /// Fit a process to a dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// JSON fit configuration; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print Choi spectrum, CP/TP diagnostics and fidelity as JSON.
    Analyze {
        /// Process file or fit report.
        #[arg(long)]
        process: PathBuf,
        /// `ideal` or a path to a process file.
        #[arg(long, default_value = "ideal")]
        reference: String,
    },
    /// Localizable entanglement curve (CSV) and its decay fit (JSON on stdout).
    Le {
        #[arg(long)]
        process: PathBuf,
        #[arg(long, default_value = "-X", allow_hyphen_values = true)]
        init: String,
        #[arg(long, default_value_t = 6)]
        dmax: usize,
        #[arg(long, default_value = "x")]
        basis: String,
        #[arg(long, default_value = "averaged")]
        mode: LeMode,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(command: Command) -> CommandOutcome {
    match command {
        Command::Ideal { out, noise } => cli::cmd_ideal(&out, &noise),
        Command::Simulate {
            process,
            out,
            seed,
            rate_sigma,
            spin_sigma,
            init_polarization,
        } => {
            let noise = NoiseSpec {
                rate_sigma,
                spin_sigma,
                init_polarization,
                seed,
            };
            cli::cmd_simulate(&process, &noise, &out)
        }
        Command::Fit { data, config, out } => cli::cmd_fit(&data, config.as_deref(), &out),
        Command::Analyze { process, reference } => cli::cmd_analyze(&process, &reference),
        Command::Le {
            process,
            init,
            dmax,
            basis,
            mode,
            m,
            out,
        } => match cli::parse_basis(&basis) {
            Ok(basis) => {
                let args = LeArgs {
                    init,
                    d_max: dmax,
                    basis,
                    mode,
                    m,
                };
                cli::cmd_le(&process, &args, &out)
            }
            Err(e) => CommandOutcome {
                exit_code: 1,
                summary: format!("error: {e}"),
                stdout: None,
            },
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = dispatch(cli.command);
    eprintln!("{}", outcome.summary);
    if let Some(text) = &outcome.stdout {
        println!("{text}");
    }
    ExitCode::from(outcome.exit_code as u8)
}
