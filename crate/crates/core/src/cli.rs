//! Command-line front end. One subcommand per audit step.
//!
//! Exit codes: 0 success, 1 runtime error or bad usage, 2 validation
//! failure, 3 consistency stop (more CVRs than cards).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::AuditConfig;
use crate::engine::persist::write_atomic;
use crate::engine::report::table;
use crate::engine::{digest, AuditState, EstimateRow, ReportFormat, Store};
use crate::error::{Error, Result};
use crate::ingest::parse_mvrs_bytes;
use crate::model::validate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_FATAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Structured,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => ReportFormat::Table,
            Format::Csv => ReportFormat::Csv,
            Format::Structured => ReportFormat::Structured,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "csd-rla",
    version,
    about = "Risk-limiting audits with card-style data"
)]
pub struct Cli {
    /// Audit configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Audit state directory; overrides the configuration.
    #[arg(long, global = true, env = "RLA_STATE_DIR")]
    pub state_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "table")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read CVRs and manifest, validate them and create the audit state.
    Init,
    /// Validate CVRs against reported outcomes and the manifest.
    Check,
    /// Per-contest sample sizes.
    Estimate {
        /// Injected one-vote overstatement rate; repeatable.
        #[arg(long = "errors")]
        errors: Vec<f64>,
        #[arg(long)]
        risk_limit: Option<f64>,
    },
    /// Plan a round (or re-emit a planned one) and write its retrieval list.
    Sample {
        #[arg(long)]
        round: usize,
        #[arg(long)]
        seed: Option<String>,
    },
    /// Record manual vote records from a file.
    ImportMvrs { file: PathBuf },
    /// Measure risk for the open round and close it.
    Measure,
    /// Send a contest to a full hand count.
    Escalate { contest: String },
    /// Audit report.
    Report {
        /// Also total the workload without contests at or below this margin.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

/// Outcome of one command.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommandResult {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Fatal(_) => EXIT_FATAL,
        Error::WinnerMismatch(_)
        | Error::InvalidContest { .. }
        | Error::InvalidConfig(_)
        | Error::AssertionsUnavailable(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

/// Parse `argv` and run it, writing results to `out` and diagnostics to `err`.
pub fn execute<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_RUNTIME
                }
            };
            return CommandResult {
                exit_code: code,
                artifacts: Vec::new(),
            };
        }
    };
    let mut artifacts = Vec::new();
    match run(&cli, out, err, &mut artifacts) {
        Ok(code) => CommandResult {
            exit_code: code,
            artifacts,
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            CommandResult {
                exit_code: exit_code(&e),
                artifacts,
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<AuditConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("--config is required for this command".into()))?;
    AuditConfig::load(path)
}

fn state_dir(cli: &Cli, config: Option<&AuditConfig>) -> Result<PathBuf> {
    if let Some(d) = &cli.state_dir {
        return Ok(d.clone());
    }
    let config = match config {
        Some(c) => Some(c.clone()),
        None if cli.config.is_some() => Some(load_config(cli)?),
        None => None,
    };
    config.and_then(|c| c.state_dir()).ok_or_else(|| {
        Error::InvalidConfig("no state directory: pass --state-dir or set paths.state_dir".into())
    })
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn run(
    cli: &Cli,
    out: &mut dyn Write,
    err: &mut dyn Write,
    artifacts: &mut Vec<PathBuf>,
) -> Result<i32> {
    match &cli.command {
        Command::Init => init(cli, out, artifacts),
        Command::Check => check(cli, out),
        Command::Estimate { errors, risk_limit } => estimate(cli, out, errors, *risk_limit),
        Command::Sample { round, seed } => sample(cli, out, *round, seed.as_deref(), artifacts),
        Command::ImportMvrs { file } => import_mvrs(cli, out, err, file),
        Command::Measure => measure(cli, out),
        Command::Escalate { contest } => {
            let (mut store, mut state) = Store::open(&state_dir(cli, None)?)?;
            state.escalate(contest)?;
            store.save(&mut state)?;
            emit(
                out,
                &format!("{contest}: {}\n", state.contest(contest)?.status),
            )?;
            Ok(EXIT_OK)
        }
        Command::Report { threshold } => {
            let (_store, state) = Store::open(&state_dir(cli, None)?)?;
            emit(out, &state.report(*threshold).render(cli.format.into()))?;
            Ok(EXIT_OK)
        }
        Command::Serve { port } => serve(cli, *port),
    }
}

fn init(cli: &Cli, out: &mut dyn Write, artifacts: &mut Vec<PathBuf>) -> Result<i32> {
    let config = load_config(cli)?;
    let dir = state_dir(cli, Some(&config))?;
    let inputs = config.inputs()?;
    let rejected = inputs.parse_report.rejected.clone();
    let mut state = AuditState::initialize(
        inputs.spec,
        inputs.contests,
        inputs.raire,
        inputs.cvrs,
        inputs.manifest,
    )?;
    if Store::exists(&dir) {
        let (_store, existing) = Store::open(&dir)?;
        if existing.log.first() != state.log.first() {
            return Err(Error::InvalidConfig(format!(
                "{} already holds an audit with different inputs",
                dir.display()
            )));
        }
        emit(out, &format!("{} already initialised\n", dir.display()))?;
        return Ok(EXIT_OK);
    }
    drop(Store::create(&dir, &mut state)?);
    artifacts.push(dir.clone());
    let phantoms = state.cards.iter().filter(|c| c.phantom).count();
    let mut text = format!(
        "initialised {}\ncards: {} ({} phantom)\ncontests: {}\nassertions: {}\n",
        dir.display(),
        state.cards.len(),
        phantoms,
        state.contests.len(),
        state.assertions.len()
    );
    for r in &rejected {
        text += &format!("rejected {}: {}\n", r.location, r.reason);
    }
    emit(out, &text)?;
    Ok(EXIT_OK)
}

fn check(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let config = load_config(cli)?;
    let inputs = config.inputs()?;
    let report = validate(&inputs.contests, &inputs.cvrs, inputs.manifest.as_ref());
    #[derive(Serialize)]
    struct CheckOutput<'a> {
        records_read: u64,
        rejected: &'a [crate::ingest::Rejection],
        #[serde(flatten)]
        consistency: &'a crate::model::ConsistencyReport,
    }
    let text = match cli.format {
        Format::Structured => {
            serde_json::to_string_pretty(&CheckOutput {
                records_read: inputs.parse_report.records_read,
                rejected: &inputs.parse_report.rejected,
                consistency: &report,
            })? + "\n"
        }
        _ => {
            let mut t = format!("records read: {}\n", inputs.parse_report.records_read);
            for r in &inputs.parse_report.rejected {
                t += &format!("rejected {}: {}\n", r.location, r.reason);
            }
            for c in &report.winner_mismatches {
                t += &format!("winner mismatch: {c}\n");
            }
            for c in &report.tied_contests {
                t += &format!("tied: {c}\n");
            }
            for o in &report.overfull_contests {
                t += &format!(
                    "overfull: {} has {} CVRs for at most {} cards\n",
                    o.contest, o.cvr_count, o.upper_bound
                );
            }
            for (c, n) in &report.phantom_cvrs_needed {
                t += &format!("phantom CVRs needed for {c}: {n}\n");
            }
            t += &format!("phantom cards needed: {}\n", report.phantom_cards_needed);
            t
        }
    };
    emit(out, &text)?;
    Ok(if report.fatal {
        EXIT_FATAL
    } else if !report.winner_mismatches.is_empty() {
        EXIT_VALIDATION
    } else {
        EXIT_OK
    })
}

/// Stored state when there is one, otherwise an in-memory initialisation.
fn state_for_reading(cli: &Cli) -> Result<(Option<Store>, AuditState)> {
    let dir = state_dir(cli, None).ok();
    if let Some(dir) = dir.filter(|d| Store::exists(d)) {
        let (store, state) = Store::open(&dir)?;
        return Ok((Some(store), state));
    }
    let inputs = load_config(cli)?.inputs()?;
    let state = AuditState::initialize(
        inputs.spec,
        inputs.contests,
        inputs.raire,
        inputs.cvrs,
        inputs.manifest,
    )?;
    Ok((None, state))
}

fn estimate(
    cli: &Cli,
    out: &mut dyn Write,
    errors: &[f64],
    risk_limit: Option<f64>,
) -> Result<i32> {
    for &r in errors {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidConfig(format!(
                "error rate {r} outside [0, 1)"
            )));
        }
    }
    if let Some(a) = risk_limit {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "risk limit {a} outside (0, 1)"
            )));
        }
    }
    let (_store, state) = state_for_reading(cli)?;
    let rows = state.estimates(errors, risk_limit);
    emit(out, &render_estimates(&rows, errors, cli.format))?;
    Ok(EXIT_OK)
}

fn render_estimates(rows: &[EstimateRow], errors: &[f64], format: Format) -> String {
    if format == Format::Structured {
        return serde_json::to_string_pretty(rows).expect("rows serialize") + "\n";
    }
    let mut header: Vec<String> = [
        "contest",
        "status",
        "cards",
        "margin",
        "risk_limit",
        "estimated",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(errors.iter().map(|r| format!("errors_{r}")));
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.contest.clone(),
                r.status.to_string(),
                r.cards.to_string(),
                r.margin.map_or("-".into(), |m| format!("{m:.6}")),
                r.risk_limit.to_string(),
                r.configured.to_string(),
            ];
            v.extend(r.injected.iter().map(|(_, n)| n.to_string()));
            v
        })
        .collect();
    if format == Format::Csv {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&header).expect("in-memory");
        for row in &cells {
            w.write_record(row).expect("in-memory");
        }
        return String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    table(&header, &cells)
}

fn sample(
    cli: &Cli,
    out: &mut dyn Write,
    round: usize,
    seed: Option<&str>,
    artifacts: &mut Vec<PathBuf>,
) -> Result<i32> {
    let dir = state_dir(cli, None)?;
    let (mut store, mut state) = Store::open(&dir)?;
    if let Some(seed) = seed {
        state.set_seed(seed)?;
    }
    if round == state.rounds.len() + 1 {
        state.next_round(&BTreeMap::new())?;
    } else {
        state.round(round)?;
    }
    store.save(&mut state)?;
    let list = state.retrieval_list(round)?;
    let text = match cli.format {
        Format::Structured => serde_json::to_string_pretty(&list)? + "\n",
        _ => list.to_csv(),
    };
    let path = dir.join(format!("retrieval-round-{round}.csv"));
    write_atomic(&path, list.to_csv().as_bytes())?;
    artifacts.push(path);
    emit(out, &text)?;
    Ok(EXIT_OK)
}

fn import_mvrs(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write, file: &Path) -> Result<i32> {
    let (mut store, mut state) = Store::open(&state_dir(cli, None)?)?;
    let bytes = std::fs::read(file).map_err(|e| Error::io(file, e))?;
    let records = parse_mvrs_bytes(&bytes, &file.display().to_string())?;
    let summary = state.import_mvrs(records, Some(digest(&bytes)), false)?;
    store.save(&mut state)?;
    for id in &summary.ignored {
        let _ = writeln!(err, "warning: {id} is not selected for audit; ignored");
    }
    for (id, contests) in &summary.style_discrepancies {
        let _ = writeln!(
            err,
            "warning: {id} shows contests missing from its CVR: {}",
            contests.join(", ")
        );
    }
    emit(
        out,
        &format!(
            "imported {} records ({} ignored)\n",
            summary.accepted,
            summary.ignored.len()
        ),
    )?;
    Ok(EXIT_OK)
}

fn measure(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let (mut store, mut state) = Store::open(&state_dir(cli, None)?)?;
    state.measure(true)?;
    store.save(&mut state)?;
    let report = state.report(None);
    let text = match cli.format {
        Format::Structured => serde_json::to_string_pretty(&report.assertions)? + "\n",
        _ => {
            let rows: Vec<Vec<String>> = report
                .assertions
                .iter()
                .map(|a| {
                    vec![
                        a.contest.clone(),
                        a.assertion.clone(),
                        format!("{:?}", a.status).to_lowercase(),
                        a.drawn.to_string(),
                        format!("{:.6}", a.p_value),
                    ]
                })
                .collect();
            let mut t = table(
                &["contest", "assertion", "status", "drawn", "p_value"],
                &rows,
            );
            for c in &state.contests {
                t += &format!("{}: {}\n", c.id, c.status);
            }
            t
        }
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}

fn serve(cli: &Cli, port: Option<u16>) -> Result<i32> {
    let config = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
    let token = config
        .as_ref()
        .and_then(|c| c.server.auth_token.clone())
        .ok_or_else(|| Error::InvalidConfig("server.auth_token must be set to serve".into()))?;
    let port = port
        .or_else(|| config.as_ref().and_then(|c| c.server.port))
        .unwrap_or(8080);
    let (store, state) = Store::open(&state_dir(cli, config.as_ref())?)?;
    let shared = crate::server::Shared::new(store, state, token);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
    runtime
        .block_on(crate::server::serve(shared, addr))
        .map_err(|e| Error::io(format!("127.0.0.1:{port}"), e))?;
    Ok(EXIT_OK)
}
