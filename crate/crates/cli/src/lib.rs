//! Library surface of the `unmix` command-line driver: argument types
//! and the subcommand implementations, exposed so integration tests and
//! harnesses can call them without spawning processes.

pub mod commands;
pub mod sweep;

pub use commands::{cmd_eval, cmd_synth, cmd_unmix, EvalArgs, SynthArgs, UnmixArgs};
pub use sweep::{cmd_sweep, run_sweep, SweepArgs, SweepOutcome, SweepSpec, SweepVariant};
