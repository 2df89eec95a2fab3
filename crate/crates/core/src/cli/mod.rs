//! `placecam` command line.
//!
//! Stages hand off through files in the output directory:
//!
//! | command    | reads                                   | writes                                  |
//! |------------|-----------------------------------------|-----------------------------------------|
//! | `simulate` | config                                  | `map.traverse`, `training.traverse`, `query.traverse` |
//! | `train`    | `training.traverse`                     | `selection.table`, `static.txt`         |
//! | `query`    | `query.traverse`, table/statics as needed | `results_<selector>.csv`              |
//! | `report`   | every `results_*.csv`                   | `slices.csv`, `summary.csv`, `places.csv` |
//!
//! The config is TOML, documented in [`config`]. Traverse, table and static
//! files are line-oriented text; a pose is always written as 12 decimal
//! numbers: the row-major 3×3 rotation followed by the translation x y z.
//! Frame poses are world-from-body, camera extrinsics body-from-camera.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::baselines::SelectorKind;
use crate::evaluation::records_from_csv;
use crate::pipeline::{self, PipelineConfig, PipelineError, QueryInputs, StaticSelection};
use crate::selection::{ExpectationMode, SelectionTable};
use crate::simulator::Traverse;

pub use config::{FieldError, RunConfig};

pub const TABLE_FILE: &str = "selection.table";
pub const STATIC_FILE: &str = "static.txt";

pub fn traverse_file(role: &str) -> String {
    format!("{role}.traverse")
}

pub fn results_file(kind: SelectorKind) -> String {
    format!("results_{kind}.csv")
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Field { path: PathBuf, source: FieldError },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("no results_*.csv files in {}; run `placecam query` first", .0.display())]
    NoResults(PathBuf),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Parser)]
#[command(
    name = "placecam",
    version,
    about = "Place-specific camera selection for multi-camera localization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the world and the map, training and query traverses.
    Simulate(Common),
    /// Localize the training traverse with every camera and pick a camera per place.
    Train(Common),
    /// Localize the query traverse with one or more selectors.
    Query {
        #[command(flatten)]
        common: Common,
        /// Selector to run (repeatable); defaults to the config's list.
        #[arg(long = "selector", value_name = "NAME")]
        selectors: Vec<SelectorKind>,
    },
    /// Aggregate per-frame results into slice, summary and place CSVs.
    Report(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `[seeds] master`.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Evaluate expected costs by numerical integration instead of Monte Carlo.
    #[arg(long)]
    pub quadrature: bool,
}

/// A loaded config with command-line overrides applied.
pub struct Session {
    pub config: PipelineConfig,
    pub out: PathBuf,
}

impl Common {
    pub fn load(&self) -> Result<Session, CliError> {
        let text = read(&self.config)?;
        let run: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            path: self.config.clone(),
            message: e.to_string(),
        })?;
        let mut config = run.to_pipeline().map_err(|source| CliError::Field {
            path: self.config.clone(),
            source,
        })?;
        if let Some(seed) = self.seed {
            config.seeds.master = seed;
        }
        if self.quadrature {
            config.kde.mode = ExpectationMode::Quadrature;
        }
        let out = self.out.clone().unwrap_or(run.output_dir);
        Ok(Session { config, out })
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load<T: std::str::FromStr>(path: &Path) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    read(path)?.parse().map_err(|e: T::Err| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing progress lines to `log`.
pub fn run<I, T>(args: I, log: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    execute(&cli.command, log)
}

pub fn execute(command: &Command, log: &mut dyn Write) -> Result<(), CliError> {
    let mut say = |line: String| {
        let _ = writeln!(log, "{line}");
    };
    match command {
        Command::Simulate(common) => {
            let Session { config, out } = common.load()?;
            fs::create_dir_all(&out).map_err(io_err(&out))?;
            let t = pipeline::simulate(&config)?;
            let s = &config.seeds;
            say(format!(
                "seeds: master {} world {} map {} training {} query {}",
                s.master,
                s.world(),
                s.map(),
                s.training(),
                s.query()
            ));
            for traverse in [&t.map, &t.training, &t.query] {
                let name = traverse_file(traverse.role.name());
                write(&out.join(&name), &traverse.to_string())?;
                let observations: usize = traverse.frames.iter().flat_map(|f| &f.observations).map(Vec::len).sum();
                say(format!(
                    "{name}: {} frames, {observations} observations",
                    traverse.len()
                ));
            }
        }
        Command::Train(common) => {
            let Session { config, out } = common.load()?;
            let training: Traverse = load(&out.join(traverse_file("training")))?;
            let trained = pipeline::train(&config, &training)?;
            write(&out.join(TABLE_FILE), &trained.table.to_text())?;
            write(&out.join(STATIC_FILE), &trained.statics.to_string())?;
            say(format!(
                "{TABLE_FILE}: {} places; {STATIC_FILE}: {} slices",
                trained.table.places.len(),
                trained.statics.cameras.len()
            ));
        }
        Command::Query { common, selectors } => {
            let Session { config, out } = common.load()?;
            let selectors = if selectors.is_empty() {
                config.selectors.clone()
            } else {
                selectors.clone()
            };
            let traverse: Traverse = load(&out.join(traverse_file("query")))?;
            let table: Option<SelectionTable> = selectors
                .contains(&SelectorKind::DynamicCam)
                .then(|| load(&out.join(TABLE_FILE)))
                .transpose()?;
            let statics: Option<StaticSelection> = selectors
                .contains(&SelectorKind::StaticCam)
                .then(|| load(&out.join(STATIC_FILE)))
                .transpose()?;
            // Several selectors share the single-camera localizations.
            let cached = (selectors.len() > 1).then(|| pipeline::query_batch(&config, &traverse));
            let inputs = QueryInputs {
                table: table.as_ref(),
                statics: statics.as_ref(),
                cached: cached.as_ref(),
            };
            for kind in selectors {
                let result = pipeline::query(&config, &traverse, &inputs, kind)?;
                let name = results_file(kind);
                write(&out.join(&name), &crate::evaluation::records_to_csv(&result.records))?;
                say(format!(
                    "{name}: {} frames, {} localizations",
                    result.records.len(),
                    result.localizations
                ));
            }
        }
        Command::Report(common) => {
            let Session { config, out } = common.load()?;
            let mut records = Vec::new();
            let mut found = false;
            for kind in SelectorKind::ALL {
                let path = out.join(results_file(kind));
                if !path.exists() {
                    continue;
                }
                found = true;
                records.extend(records_from_csv(&read(&path)?).map_err(|e| CliError::Parse {
                    path: path.clone(),
                    message: e.to_string(),
                })?);
            }
            if !found {
                return Err(CliError::NoResults(out));
            }
            let report = pipeline::report(&config, &records)?;
            write(&out.join("slices.csv"), &report.slices_csv)?;
            write(&out.join("summary.csv"), &report.summary_csv)?;
            write(&out.join("places.csv"), &report.places_csv)?;
            say(pipeline::describe(&report.summary));
        }
    }
    Ok(())
}
