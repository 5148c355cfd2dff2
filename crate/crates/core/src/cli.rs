//! `speller` command line: calibrate, validate, run, serve, report, replay.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::eventlog::{read_log, read_log_file, LogError};
use crate::metrics::{emit_report, records_from_log, report_for, MetricsError, PConvention, ReportFormat};
use crate::session::replay::replay;
use crate::session::{
    held_out_auc, derive_seed, make_provider, memory_log, run_calibration, run_online, run_validation, server,
    sink_log, Mode, ProviderKind, SessionConfig, SessionError,
};
use crate::swlda::{SwldaError, TrainedModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_PROVIDER: i32 = 5;
pub const EXIT_IO: i32 = 6;
pub const EXIT_RUNTIME: i32 = 7;

#[derive(Debug, Parser)]
#[command(name = "speller", version, about = "Simulated P300 row/column speller with word suggestions")]
pub struct Cli {
    /// TOML session configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    /// JSONL session log to write.
    #[arg(long, global = true)]
    pub log: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the calibration session and train a classifier.
    Calibrate {
        /// Where to write the trained model.
        #[arg(long, default_value = "model.json")]
        model: PathBuf,
    },
    /// Run the validation session against a trained model.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run one simulated online sentence.
    Run {
        /// Trained model; calibrates first when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Copy-spell target, overriding the configuration.
        #[arg(long)]
        target: Option<String>,
        /// Go online even if validation fails.
        #[arg(long)]
        skip_validation: bool,
    },
    /// Serve interactive sessions over the wire protocol.
    Serve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        host: Option<String>,
    },
    /// Compute performance metrics from session logs.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
        /// Accuracy used in bits per selection.
        #[arg(long, value_enum, default_value = "by-task")]
        p: PConvention,
    },
    /// Re-score a log's features with its model and compare every selection.
    Replay { log: PathBuf },
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Print the default configuration as TOML.
    PrintDefault,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Provider(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Provider(_) => EXIT_PROVIDER,
            CliError::Io(_) => EXIT_IO,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Config(m) => CliError::Config(m),
            SessionError::Provider(m) => CliError::Provider(m),
            SessionError::Io(e) => CliError::Io(e.to_string()),
            SessionError::Log(LogError::Io(e)) => CliError::Io(e.to_string()),
            SessionError::ValidationFailed { trials } => CliError::Validation(format!("after {trials} trials")),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        match e {
            LogError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<SessionConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => SessionConfig::load(p)?,
        None => SessionConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(p) = cli.provider {
        cfg.provider.kind = p;
    }
    if let Some(l) = &cli.log {
        cfg.log = Some(l.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<TrainedModel, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    TrainedModel::from_reader(std::io::BufReader::new(f)).map_err(|e| match e {
        SwldaError::Io(e) => CliError::Io(e.to_string()),
        other => CliError::Config(format!("{}: {other}", path.display())),
    })
}

fn save_model(model: &TrainedModel, path: &Path) -> Result<(), CliError> {
    let f = std::fs::File::create(path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    model.to_writer(std::io::BufWriter::new(f)).map_err(|e| CliError::Io(e.to_string()))
}

fn write_log_bytes(path: &Option<PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(p) = path {
        std::fs::write(p, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(())
}

/// Calibration trains on a separate simulated run; its log goes to `log` only
/// when calibration is the command.
fn calibrate(cfg: &SessionConfig, out: &mut dyn Write) -> Result<TrainedModel, CliError> {
    let cal = run_calibration(cfg, &mut sink_log())?;
    writeln!(out, "calibration: {} epochs, {} features selected ({:?})", cal.training.n_rows(), cal.model.selected.len(), cal.stop)?;
    Ok(cal.model)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    if let Command::Config { action: ConfigAction::PrintDefault } = &cli.command {
        write!(out, "{}", SessionConfig::default_toml())?;
        return Ok(());
    }
    if let Command::Report { logs, format, p } = &cli.command {
        let mut reports = Vec::new();
        for path in logs {
            let recs = read_log_file(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            for mut rec in records_from_log(&recs) {
                if logs.len() > 1 {
                    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("log");
                    rec.id = format!("{stem}:{}", rec.id);
                }
                reports.push(report_for(&rec, *p)?);
            }
        }
        write!(out, "{}", emit_report(&reports, *format)?)?;
        return Ok(());
    }
    if let Command::Replay { log } = &cli.command {
        let recs = read_log_file(log).map_err(|e| CliError::Io(format!("{}: {e}", log.display())))?;
        let rep = replay(&recs)?;
        writeln!(out, "replayed {} selections, {} mismatches", rep.selections, rep.mismatches.len())?;
        for m in &rep.mismatches {
            writeln!(out, "  trial {}: logged {} replayed {} (scores differ: {})", m.trial, m.logged, m.replayed, m.scores_differ)?;
        }
        return if rep.is_exact() { Ok(()) } else { Err(CliError::Runtime("replay diverged".into())) };
    }

    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Calibrate { model } => {
            let (mut log, sink) = memory_log();
            let cal = run_calibration(&cfg, &mut log)?;
            drop(log);
            write_log_bytes(&cfg.log, &sink.contents())?;
            let auc = held_out_auc(&cal.model, &cfg, derive_seed(cfg.seed, 77))?;
            save_model(&cal.model, &model)?;
            writeln!(
                out,
                "calibration: {} epochs, {} features selected ({:?}), held-out AUC {auc:.3}",
                cal.training.n_rows(),
                cal.model.selected.len(),
                cal.stop
            )?;
            writeln!(out, "model written to {}", model.display())?;
        }
        Command::Validate { model } => {
            let model = load_model(&model)?;
            let (mut log, sink) = memory_log();
            let res = run_validation(&model, &cfg, &mut log)?;
            drop(log);
            write_log_bytes(&cfg.log, &sink.contents())?;
            for (i, (key, got)) in res.trials.iter().enumerate() {
                writeln!(out, "trial {:2}: cued {key:<3} selected {got:<6} {}", i + 1, if key == got { "ok" } else { "miss" })?;
            }
            match res.passed_at {
                Some(t) => writeln!(out, "validation passed at trial {t}")?,
                None => return Err(CliError::Validation(format!("no run of 3 correct in {} trials", res.trials.len()))),
            }
        }
        Command::Run { model, target, skip_validation } => {
            let mut cfg = cfg;
            if let Some(t) = target {
                cfg.target = t;
                cfg.validate()?;
            }
            if !matches!(cfg.mode, Mode::Task1Chat | Mode::Task1LetterOnly | Mode::Task2Improvise) {
                return Err(CliError::Usage(format!(
                    "run needs mode task1_chat, task1_letter_only or task2_improvise, not {}",
                    cfg.mode.as_str()
                )));
            }
            let provider = make_provider(&cfg)?;
            let model = match model {
                Some(p) => load_model(&p)?,
                None => calibrate(&cfg, out)?,
            };
            if cfg.require_validation && !skip_validation {
                let res = run_validation(&model, &cfg, &mut sink_log())?;
                match res.passed_at {
                    Some(t) => writeln!(out, "validation passed at trial {t}")?,
                    None => return Err(CliError::Validation(format!("no run of 3 correct in {} trials", res.trials.len()))),
                }
            }
            let (log, sink) = memory_log();
            let res = run_online(&model, &cfg, provider, log)?;
            let bytes = sink.contents();
            write_log_bytes(&cfg.log, &bytes)?;
            writeln!(out, "composed: {:?}", res.final_composed)?;
            writeln!(out, "selections: {}  end: {:?}  duration: {:.2} s", res.n_selections, res.end, res.duration_ms as f64 / 1000.0)?;
            let recs = read_log(&bytes[..])?;
            let reports = records_from_log(&recs)
                .iter()
                .map(|r| report_for(r, PConvention::ByTask))
                .collect::<Result<Vec<_>, _>>()?;
            if !reports.is_empty() {
                write!(out, "{}", emit_report(&reports, ReportFormat::Text)?)?;
            }
        }
        Command::Serve { model, port, host } => {
            let mut cfg = cfg;
            if let Some(p) = port {
                cfg.server.port = p;
            }
            if let Some(h) = host {
                cfg.server.host = h;
            }
            let model = match model {
                Some(p) => load_model(&p)?,
                None => calibrate(&cfg, out)?,
            };
            let addr = format!("{}:{}", cfg.server.host, cfg.server.port);
            let handle = server::start(cfg, model, &addr)?;
            writeln!(out, "listening on {}", handle.addr)?;
            out.flush()?;
            handle.wait();
        }
        Command::Report { .. } | Command::Replay { .. } | Command::Config { .. } => unreachable!("handled above"),
    }
    Ok(())
}

/// Parse `args`, run, and map the outcome to an exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
