use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ergodyn::config::{parse_config, Command, Format, RunConfig};
use ergodyn::report::{write_report_file, ReportBody};
use ergodyn::runner::execute;
use ergodyn::Error;

/// Lyapunov spectra, joint splittings, entropy reports and the verification
/// suite for commuting maps, driven by a TOML config.
///
/// Exit status: 0 on success, 1 on error, 2 when the verification suite fails.
#[derive(Parser, Debug)]
#[command(name = "ergodyn", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Overrides `command` from the config.
    #[arg(long, value_name = "NAME")]
    command: Option<Command>,

    /// Overrides `seed` from the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Report directory; overrides `output` from the config.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// json or csv; overrides `format` from the config.
    #[arg(long, value_name = "FORMAT")]
    format: Option<Format>,

    /// Worker threads. Results do not depend on it.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,

    /// Show entropies in bits in the printed summary. Reports stay in nats.
    #[arg(long)]
    bits: bool,
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let src = std::fs::read_to_string(&cli.config)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut config = parse_config(&src)?;
    if let Some(c) = cli.command {
        config.command = c;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(f) = cli.format {
        config.format = f;
    }
    if let Some(o) = &cli.out {
        config.output = Some(o.clone());
    }
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let config = load(cli)?;
    if let Some(jobs) = config.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidState(format!("cannot start {jobs} worker threads: {e}")))?;
    }
    let report = execute(&config)?;
    let contents = report.render(config.format)?;
    let path = write_report_file(&config.output_dir(), &report, config.format, &contents)?;
    print!("{}", report.summary(cli.bits));
    println!("report: {}", path.display());

    if let ReportBody::Verify(v) = &report.result {
        if !v.passed {
            eprintln!("verification failed: {}", v.failing.join(", "));
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
