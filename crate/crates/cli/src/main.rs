//! `capdis`: batch pipeline over the CSV/text schemas.
//!
//! Every config key is also a `--key` flag (underscores become hyphens);
//! flags win over the config file.

use std::path::Path;
use std::process::ExitCode;

use capdis_core::pipeline::config::{FLAG_KEYS, OPTION_KEYS, PATH_KEYS};
use capdis_core::pipeline::{load_config, run, run_pipeline, write_output, Command as Cmd, RunConfig};
use capdis_core::{error::SchemaError, Error};
use clap::{Arg, ArgAction, ArgMatches, Command};
use serde::Serialize;

const RUN_ALL: &str = "run-all";

fn about(cmd: Cmd) -> &'static str {
    match cmd {
        Cmd::CodeTranscripts => "Code transcripts into communication flags (codings.csv)",
        Cmd::TrainEmbedding => "Train skip-gram embeddings on management sentences",
        Cmd::ScreenTokens => "Screen placebo tokens against the anchor words",
        Cmd::BuildPanel => "Build the carrier-market-month panel (panel.csv)",
        Cmd::Estimate => "Fixed-effects regression of log seats",
        Cmd::Poisson => "Poisson fixed-effects regression of market flights",
        Cmd::Crowding => "Departure crowding and its regression",
        Cmd::Prices => "Passenger-weighted fare regressions",
        Cmd::Hubs => "Betweenness centrality and hub sets per carrier-period",
        Cmd::ControlFunction => "Control-function estimation with hub-distance instruments",
        Cmd::Diagnostics => "Lead exogeneity test and fixed-effects weights",
        Cmd::Simulate => "Write a synthetic fixture with known coefficients",
    }
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn cli() -> Command {
    let mut app = Command::new("capdis")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Capacity-discipline communication pipeline")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .global(true)
                .value_name("FILE")
                .help("key = value config file; relative paths resolve against its directory"),
        );
    for key in PATH_KEYS.iter().chain(OPTION_KEYS.iter()) {
        app = app.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .global(true)
                .value_name("VALUE")
                .help(format!("override `{key}`")),
        );
    }
    for key in FLAG_KEYS {
        app = app.arg(
            Arg::new(key)
                .long(flag_name(key))
                .global(true)
                .action(ArgAction::SetTrue)
                .help(format!("set `{key}`")),
        );
    }
    for cmd in Cmd::ALL {
        app = app.subcommand(Command::new(cmd.as_str()).about(about(cmd)));
    }
    app.subcommand(Command::new(RUN_ALL).about("Run every step from coding to token screening"))
}

fn configure(m: &ArgMatches) -> Result<RunConfig, Error> {
    let mut cfg = load_config(m.get_one::<String>("config").map(Path::new))?;
    let cwd = std::env::current_dir()?;
    for key in PATH_KEYS.iter().chain(OPTION_KEYS.iter()) {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v, &cwd)
                .map_err(|e| Error::Config(format!("--{}: {e}", flag_name(key))))?;
        }
    }
    for key in FLAG_KEYS {
        if m.get_flag(key) {
            cfg.set(key, "true", &cwd).map_err(Error::Config)?;
        }
    }
    Ok(cfg)
}

fn execute(m: &ArgMatches) -> Result<String, Error> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    let cfg = configure(sub)?;
    if name == RUN_ALL {
        return run_pipeline(&cfg);
    }
    let cmd = Cmd::parse(name).expect("registered subcommand");
    let out = run(cmd, &cfg)?;
    write_output(&out)?;
    Ok(out.text)
}

/// Machine-readable error record, one JSON line on stderr.
#[derive(Serialize)]
struct ErrorRecord {
    error: &'static str,
    exit_code: i32,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    column: Option<String>,
}

fn error_record(e: &Error) -> String {
    let mut rec = ErrorRecord {
        error: e.kind(),
        exit_code: e.exit_code(),
        message: e.to_string(),
        path: None,
        row: None,
        column: None,
    };
    if let Error::Schema(s) = e {
        let path = match s {
            SchemaError::Field { path, .. } | SchemaError::MissingColumn { path, .. } | SchemaError::File { path, .. } => path,
        };
        rec.path = Some(path.clone());
        if let Some((row, column)) = s.location() {
            rec.row = Some(row);
            rec.column = Some(column.to_string());
        }
    }
    serde_json::to_string(&rec).expect("plain record serializes")
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = Error::Config(e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string());
            eprintln!("{}", error_record(&err));
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match execute(&matches) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
