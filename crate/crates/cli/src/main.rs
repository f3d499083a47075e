use std::process::ExitCode;

use clap::Parser;

use fkplab_cli::args::Cli;
use fkplab_cli::{run, CliError, RunConfig};

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&cli.common.overrides());
    cfg.validate()?;
    if cli.common.print_effective_config {
        println!("{}", cfg.to_json_string());
        return Ok(0);
    }
    if let Some(t) = cfg.threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let outcome = run(cli.command.task(), &cfg)?;
    for a in &outcome.artifacts {
        println!("{}", a.display());
    }
    if outcome.flagged {
        eprintln!("fkplab: some results were flagged; see the artifacts");
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    // Exit status 2 is reserved for flagged results, so usage errors exit 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("fkplab: {e}");
            ExitCode::from(1)
        }
    }
}
