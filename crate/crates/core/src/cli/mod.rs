//! Command-line front end: data generation, training, prediction,
//! evaluation, gradient checking and ablation reports.
//!
//! Every command writes `<command>.config.toml` next to its outputs; passing
//! that file back with `--config` reproduces the run.

mod commands;
mod config;

pub use commands::{cmd_evaluate, cmd_gen_data, cmd_gradcheck, cmd_predict, cmd_report, cmd_train, REPORT_FILE};
pub use config::{RunConfig, Subset, KEYS};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgAction, Command};

use crate::autodiff::AutodiffError;
use crate::dosimetry::DosimetryError;
use crate::model::{CheckpointError, ModelError};
use crate::phantom::{DatasetError, PhantomError, TctdError};
use crate::training::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 configuration, 3 data, 4 numeric, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Phantom(p) => p.into(),
            DatasetError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PhantomError> for CliError {
    fn from(e: PhantomError) -> Self {
        match e {
            PhantomError::InvalidSpec(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TctdError> for CliError {
    fn from(e: TctdError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DosimetryError> for CliError {
    fn from(e: DosimetryError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<AutodiffError> for CliError {
    fn from(e: AutodiffError) -> Self {
        match e {
            AutodiffError::NonFinite(m) => CliError::Numeric(m),
            AutodiffError::InvalidArgument(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Config(m),
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Autodiff(a) => a.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Parsed invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: String,
    pub config: RunConfig,
    pub force: bool,
    /// Run directories for `report`.
    pub runs: Vec<PathBuf>,
}

pub fn command() -> Command {
    let mut globals = vec![
        Arg::new("config")
            .long("config")
            .value_name("PATH")
            .global(true)
            .help("flat key = value configuration file"),
        Arg::new("force")
            .long("force")
            .action(ArgAction::SetTrue)
            .global(true)
            .help("allow writing into a non-empty output directory"),
    ];
    for &(key, default, help) in KEYS {
        let help = if default.is_empty() {
            help.to_string()
        } else {
            format!("{help} [default: {default}]")
        };
        globals.push(Arg::new(key).long(key).value_name("VALUE").global(true).help(help));
    }
    Command::new("tctrans")
        .about("Transformer dose prediction with a PTV-guided triplet constraint")
        .subcommand_required(true)
        .args(globals)
        .subcommand(Command::new("gen-data").about("generate a synthetic phantom dataset"))
        .subcommand(Command::new("train").about("train a model on a dataset"))
        .subcommand(Command::new("predict").about("predict dose planes for a dataset subset"))
        .subcommand(Command::new("evaluate").about("dosimetric metrics of predictions against ground truth"))
        .subcommand(Command::new("gradcheck").about("finite-difference check of every gradient"))
        .subcommand(
            Command::new("report")
                .about("ablation table over evaluated runs")
                .arg(Arg::new("runs").value_name("RUN_DIR").num_args(1..).required(true)),
        )
}

pub fn parse<I, T>(args: I) -> Result<Invocation, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let m = command().try_get_matches_from(args)?;
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let mut config = RunConfig::default();
    if let Some(path) = sub.get_one::<String>("config") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| clap::Error::raw(clap::error::ErrorKind::Io, format!("{path}: {e}\n")))?;
        config
            .merge_toml(&text)
            .map_err(|e| clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("{path}: {e}\n")))?;
    }
    for &(key, _, _) in KEYS {
        if let Some(v) = sub.get_one::<String>(key) {
            config.set(key, v.clone()).expect("key comes from KEYS");
        }
    }
    // only `report` defines positional runs
    let runs = sub
        .try_get_many::<String>("runs")
        .ok()
        .flatten()
        .map(|v| v.map(PathBuf::from).collect())
        .unwrap_or_default();
    Ok(Invocation {
        command: name.to_string(),
        config,
        force: sub.get_flag("force"),
        runs,
    })
}

pub fn execute(inv: &Invocation) -> Result<(), CliError> {
    let c = &inv.config;
    match inv.command.as_str() {
        "gen-data" => cmd_gen_data(c, inv.force).map(|sum| println!("dataset checksum {sum}")),
        "train" => cmd_train(c, inv.force),
        "predict" => cmd_predict(c, inv.force).map(|n| println!("wrote {n} predictions")),
        "evaluate" => cmd_evaluate(c, inv.force).map(|n| println!("evaluated {n} cases")),
        "gradcheck" => {
            let (table, ok) = cmd_gradcheck(c)?;
            print!("{table}");
            if ok {
                Ok(())
            } else {
                Err(CliError::Numeric("gradient check failed".into()))
            }
        }
        "report" => cmd_report(&inv.runs, c, inv.force),
        other => Err(CliError::Config(format!("unknown command `{other}`"))),
    }
}

/// Parses, runs and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let inv = match parse(args) {
        Ok(i) => i,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(&inv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
