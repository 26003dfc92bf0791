use clap::Parser;

use unmix_cli::{cmd_eval, cmd_sweep, cmd_synth, cmd_unmix, EvalArgs, SweepArgs, SynthArgs, UnmixArgs};

/// Spectral unmixing toolkit: synthetic scenes, NMF-family solvers,
/// angle metrics, and Monte Carlo sweeps.
#[derive(Debug, Parser)]
#[command(name = "unmix", version, about)]
enum Cli {
    /// Generate a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Factor an observation into endmembers and abundances.
    Unmix(UnmixArgs),
    /// Score an estimate against ground truth.
    Eval(EvalArgs),
    /// Monte Carlo SNR sweep across methods.
    Sweep(SweepArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli {
        Cli::Synth(args) => cmd_synth(args),
        Cli::Unmix(args) => cmd_unmix(args),
        Cli::Eval(args) => cmd_eval(args),
        Cli::Sweep(args) => cmd_sweep(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
