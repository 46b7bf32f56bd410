mod args;
mod commands;
mod output;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use heavytail::Error;

use crate::args::{parse_args, RunConfig};
use crate::commands::{default_format, dispatch, CliError};
use crate::output::{provenance_json, render, write_atomic, Format};

const EXIT_USAGE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_NUMERIC: u8 = 5;

fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Usage(_) => EXIT_USAGE,
        CliError::Lib(e) => match e {
            Error::Domain { .. } | Error::Empty(_) => EXIT_DOMAIN,
            Error::Io(_) | Error::Format { .. } | Error::Csv(_) => EXIT_IO,
            Error::Degenerate(_)
            | Error::BlowUp { .. }
            | Error::Divergence { .. }
            | Error::IllPosed(_)
            | Error::InsufficientData { .. } => EXIT_NUMERIC,
        },
    }
}

fn setup_threads(cfg: &RunConfig) -> Result<(), CliError> {
    let n = match cfg.get::<usize>("threads")? {
        Some(n) => Some(n),
        None => match std::env::var("HEAVYTAIL_THREADS") {
            Ok(v) => Some(
                v.parse()
                    .map_err(|_| CliError::Usage(format!("HEAVYTAIL_THREADS: `{v}` is not an integer")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    setup_threads(cfg)?;
    let seed = cfg.seed()?;
    let format = match cfg.raw("format").unwrap_or(default_format(&cfg.subcommand)) {
        "csv" => Format::Csv,
        "json" => Format::Json,
        other => return Err(CliError::Usage(format!("`--format` must be csv or json, got `{other}`"))),
    };
    let artifact = dispatch(cfg)?;
    let text = render(&artifact, format, cfg, seed);
    match cfg.raw("out") {
        Some(path) => write_atomic(Path::new(path), &text)?,
        None => print!("{text}"),
    }
    let mut prov = provenance_json(cfg, seed);
    prov["wall_seconds"] = serde_json::json!(start.elapsed().as_secs_f64());
    eprintln!("{prov}");
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let result = match parse_args(&argv) {
        Ok(cfg) => run(&cfg),
        Err(Ok(text)) => {
            print!("{text}");
            return ExitCode::SUCCESS;
        }
        Err(Err(e)) => Err(e.into()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
