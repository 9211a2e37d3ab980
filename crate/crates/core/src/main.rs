use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use partdec::cli::{self, CliError, RunOutcome};
use partdec::config::Overrides;

#[derive(Parser)]
#[command(name = "partdec", version, about = "Check partial decoupling bounds against Monte Carlo estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config and PARTDEC_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config and PARTDEC_SAMPLES.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value = "partdec-out")]
        out: PathBuf,
    },
    /// Run every experiment and generated batch in a suite file.
    Sweep {
        #[arg(long)]
        suite: PathBuf,
        /// Overrides every seed in the suite and PARTDEC_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides every sample count in the suite and PARTDEC_SAMPLES.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value = "partdec-out")]
        out: PathBuf,
    },
    /// Flatten a run manifest into a CSV table.
    PlotData {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn summarize(outcome: &RunOutcome) {
    for (name, rep) in outcome.manifest.reports.iter().zip(&outcome.reports) {
        println!(
            "{name}: {} {} lhs={:.4e}±{:.1e} rhs={:.4e} margin={:.4e}{}",
            rep.mode,
            rep.decomposition,
            rep.lhs_mean,
            rep.lhs_stderr,
            rep.rhs_total,
            rep.margin,
            if rep.retried { " (retried)" } else { "" }
        );
    }
    let failed = outcome.reports.iter().filter(|r| !r.passed()).count();
    println!("{} report(s), {failed} with negative margin; manifest {}", outcome.reports.len(), outcome.manifest_path.display());
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Verify { config, seed, samples, out } => {
            let outcome = cli::verify(&config, Overrides { seed, samples }, &out)?;
            summarize(&outcome);
            Ok(outcome.exit_code())
        }
        Command::Sweep { suite, seed, samples, out } => {
            let outcome = cli::sweep(&suite, Overrides { seed, samples }, &out)?;
            summarize(&outcome);
            Ok(outcome.exit_code())
        }
        Command::PlotData { manifest, out } => {
            cli::plot_data(&manifest, &out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
