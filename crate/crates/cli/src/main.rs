//! `sumalign` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ColorChoice, CommandFactory, FromArgMatches, Parser, Subcommand};
use sumalign::experiment::{parse_override, Pipeline, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "sumalign",
    version,
    about = "Run and analyse summary-alignment experiments over a corpus of abstracts"
)]
struct Cli {
    /// Run config (TOML, or JSON by .json extension)
    #[arg(long, short = 'c', global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the global seed
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Use the offline mock generator instead of HTTP endpoints
    #[arg(long, global = true)]
    mock: bool,

    /// Override the output directory (relative to the working directory)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override any config key, e.g. --set analysis.replicates=2000
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// More log output on stderr (-v info, -vv debug)
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split abstracts into sentences (segments.json)
    Segment,
    /// Pick key and random sentences (selections.json)
    Select {
        /// Only these K values (1 or 2); repeatable. Defaults to the config's k_values
        #[arg(long = "k", value_name = "K")]
        k: Vec<usize>,
    },
    /// Generate every missing summary (summaries.jsonl)
    Generate,
    /// Score all summaries (results.jsonl)
    Evaluate,
    /// Paired significance tests (significance.csv)
    Analyze,
    /// Descriptive table and heatmap data (summary_table.csv, heatmap.csv)
    Report,
    /// All stages in order
    RunAll,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let Some(path) = &cli.config else {
        bail!("--config is required");
    };
    let mut overrides = Vec::new();
    for s in &cli.overrides {
        overrides.push(parse_override(s)?);
    }
    if let Some(seed) = cli.seed {
        overrides.push(("global_seed".into(), seed.to_string()));
    }
    if cli.mock {
        overrides.push(("mock_mode".into(), "true".into()));
    }
    let mut config = RunConfig::load(path, &overrides)?;
    if let Some(out) = &cli.out {
        config.output_dir = if out.is_absolute() {
            out.clone()
        } else {
            std::env::current_dir()
                .context("reading the working directory")?
                .join(out)
        };
    }
    Ok(config)
}

fn run(cli: &Cli, config: RunConfig) -> Result<()> {
    let p = Pipeline::new(config)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "run {} in {}", p.run_id(), p.run_dir().display())?;
    let stages: &[&str] = match &cli.command {
        Command::RunAll => &[
            "segment", "select", "generate", "evaluate", "analyze", "report",
        ],
        Command::Segment => &["segment"],
        Command::Select { .. } => &["select"],
        Command::Generate => &["generate"],
        Command::Evaluate => &["evaluate"],
        Command::Analyze => &["analyze"],
        Command::Report => &["report"],
    };
    for stage in stages {
        match *stage {
            "segment" => {
                let (papers, sentences) = p.segment()?;
                writeln!(out, "segment: {papers} abstracts, {sentences} sentences")?;
            }
            "select" => {
                let ks = match &cli.command {
                    Command::Select { k } if !k.is_empty() => Some(k.as_slice()),
                    _ => None,
                };
                let sel = p.select(ks)?;
                writeln!(out, "select: {} selections", sel.len())?;
            }
            "generate" => {
                let g = p.generate()?;
                writeln!(
                    out,
                    "generate: {} new, {} reused, {} failed",
                    g.generated, g.reused, g.failed
                )?;
            }
            "evaluate" => {
                let rows = p.evaluate()?;
                writeln!(out, "evaluate: {} metric rows", rows.len())?;
            }
            "analyze" => {
                let outcomes = p.analyze()?;
                let sig = outcomes.iter().filter(|o| o.significant_combined).count();
                writeln!(
                    out,
                    "analyze: {} cells, {sig} significant under both tests",
                    outcomes.len()
                )?;
            }
            "report" => {
                let r = p.report()?;
                writeln!(
                    out,
                    "report: {} table rows, {} heatmap cells",
                    r.table_rows, r.heatmap_cells
                )?;
            }
            _ => unreachable!(),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let no_color = std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty());
    let mut command = Cli::command();
    if no_color {
        command = command.color(ColorChoice::Never);
    }
    let cli = match command
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let mut logger = env_logger::Builder::new();
    logger.filter_level(level).parse_default_env();
    if no_color {
        logger.write_style(env_logger::WriteStyle::Never);
    }
    logger.init();

    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(if cli.config.is_none() { 1 } else { 2 });
        }
    };
    match run(&cli, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
