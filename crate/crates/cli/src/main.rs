use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use stn_cli::pipeline::{emit_tradeoff, run_compress, run_eval, run_report, run_train, Budget};
use stn_cli::verify::{run_verify, Suite};
use stn_cli::CliError;

#[derive(Parser)]
#[command(name = "stn", version, about = "Tensor-network compression of toy networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a dense model from a key = value config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the per-step training log as CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Decompose every layer into TN format at one global κ.
    #[command(group(ArgGroup::new("target").required(true).args(["budget", "kappa"])))]
    Compress {
        #[arg(long)]
        model: PathBuf,
        /// Target compression ratio dense / TN over all layers.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Seed for the ALS initializations.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Loss and accuracy on the split named by a data config.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Compression ratio and accuracy over a list of κ values.
    Tradeoff {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        kappas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the built-in oracle checks.
    Verify {
        #[arg(long, default_value = "all", value_parser = ["all", "oracle", "theorem1"])]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Describe a model file.
    Report {
        #[arg(long)]
        model: PathBuf,
    },
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train { config, out, log } => {
            let log = run_train(&config, &out, log.as_deref())?;
            if let Some(last) = log.rows.last() {
                println!(
                    "step {}: loss {:.4}, batch accuracy {:.3}, mu {:.4}",
                    last.step, last.loss, last.accuracy, last.mu
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Compress { model, budget, kappa, out, report, seed } => {
            let budget = match (budget, kappa) {
                (Some(r), None) => Budget::Ratio(r),
                (None, Some(k)) => Budget::Kappa(k),
                _ => unreachable!("clap enforces exactly one"),
            };
            let rep = run_compress(&model, budget, &out, report.as_deref(), seed)?;
            print!("{}", rep.summary());
            println!("wrote {}", out.display());
        }
        Command::Eval { model, data } => {
            let e = run_eval(&model, &data)?;
            println!("accuracy={:.6}", e.accuracy);
            println!("loss={:.6}", e.loss);
            println!("samples={}", e.samples);
        }
        Command::Tradeoff { model, kappas, out, seed } => {
            print!("{}", emit_tradeoff(&model, &kappas, &out, seed)?);
        }
        Command::Verify { suite, seed } => {
            let outcomes = run_verify(Suite::parse(&suite).expect("checked by clap"), seed)?;
            for o in &outcomes {
                println!("{}", o.line());
            }
            let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed()).map(|o| o.name).collect();
            if !failed.is_empty() {
                return Err(CliError::Verify(failed.join(", ")));
            }
        }
        Command::Report { model } => print!("{}", run_report(&model)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
