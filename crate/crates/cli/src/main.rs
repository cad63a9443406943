use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use binfilt::{Exact, Scalar};
use clap::{Args, Parser, Subcommand};

mod commands;
mod scenario;

use commands::{Outcome, ProcessArg, Under};
use scenario::{Arithmetic, FreeValueArg, Overrides, Scenario, ScenarioFile};

/// Binomial pricing over generalized filtrations.
///
/// Exit status: 0 when every check passes, 1 when a check fails, 2 on errors.
#[derive(Debug, Parser)]
#[command(name = "binfilt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Output directory; overrides `[output] dir`. Without either, nothing is written.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Exact rational arithmetic, whatever the scenario says.
    #[arg(long)]
    exact: bool,
    /// Equality tolerance for float checks.
    #[arg(long, value_name = "X")]
    tol: Option<f64>,
    /// Value for kernel entries the model leaves open: half, zero, one or table:PATH.
    #[arg(long, value_name = "POLICY")]
    free_value: Option<FreeValueArg>,
    /// Largest horizon accepted (at most 30).
    #[arg(long, value_name = "T")]
    max_horizon: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Schedule legality under P, non-triviality of p and the no-arbitrage precondition.
    Validate(Common),
    /// Solve for the risk-neutral measures and report the martingale condition.
    RiskNeutral(Common),
    /// Price and replicate the scenario's claim.
    Price(Common),
    /// Build or search for an arbitrage strategy.
    Arbitrage(Common),
    /// Test a process for the martingale property.
    CheckMartingale {
        #[command(flatten)]
        common: Common,
        /// discounted-stock, stock, bond or csv:PATH (columns n,word,value).
        #[arg(long, default_value = "discounted-stock")]
        process: ProcessArg,
        /// Measure family: the physical P or the solved risk-neutral Q.
        #[arg(long, value_enum, default_value = "q")]
        under: Under,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Validate(c) | Command::RiskNeutral(c) | Command::Price(c) | Command::Arbitrage(c) => c,
            Command::CheckMartingale { common, .. } => common,
        }
    }

    fn run<S: Scalar>(&self, sc: &Scenario<S>) -> Result<Outcome> {
        match self {
            Command::Validate(_) => commands::validate(sc),
            Command::RiskNeutral(_) => commands::risk_neutral(sc),
            Command::Price(_) => commands::price(sc),
            Command::Arbitrage(_) => commands::arbitrage(sc),
            Command::CheckMartingale { process, under, .. } => commands::check_martingale(sc, process, *under),
        }
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let common = cli.command.common();
    let file = ScenarioFile::load(&common.scenario)?;
    let overrides =
        Overrides { exact: common.exact, tol: common.tol, free_value: common.free_value.clone(), max_horizon: common.max_horizon };
    let outcome = match file.arithmetic(&overrides) {
        Arithmetic::Exact => cli.command.run(&file.build::<Exact>(&overrides)?)?,
        Arithmetic::Float => cli.command.run(&file.build::<f64>(&overrides)?)?,
    };
    let out_dir = common.out.clone().or_else(|| file.output_dir());
    if let Some(dir) = &out_dir {
        write_all(dir, &outcome.files)?;
    }
    print!("{}", outcome.report);
    if let Some(dir) = &out_dir {
        for (name, _) in &outcome.files {
            println!("wrote {}", dir.join(name).display());
        }
    }
    Ok(outcome.ok)
}

/// Each file goes to a temporary sibling first and is renamed into place.
fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let staged = files
        .iter()
        .map(|(name, bytes)| {
            let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot stage a file in {}", dir.display()))?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            Ok((tmp, dir.join(name)))
        })
        .collect::<Result<Vec<_>>>()?;
    for (tmp, target) in staged {
        tmp.persist(&target).with_context(|| format!("cannot write {}", target.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
