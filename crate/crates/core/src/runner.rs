//! Batch execution of a command script against a netlist.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::dsl::{parse_script, ApplyError, ScriptError, Session};
use crate::layout::{to_svg, SvgOptions};
use crate::netlist::{parse_top, NetlistError};
use crate::tech::{TechError, Technology};
use crate::verify::{verify, Verdict, VerifyError, VerifyReport};

/// Wrapped errors are embedded in the message rather than exposed as a
/// source, so printing the error chain does not repeat them.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{}: {error}", path.display())]
    Io { path: PathBuf, error: std::io::Error },
    #[error("technology: {0}")]
    Tech(TechError),
    #[error("netlist: {0}")]
    Netlist(NetlistError),
    #[error("script {0}")]
    Script(ScriptError),
    #[error("script line {line} ({command}): {error}")]
    Command {
        line: usize,
        command: String,
        error: Box<ApplyError>,
    },
    #[error("verification: {0}")]
    Verify(VerifyError),
}

impl From<TechError> for RunError {
    fn from(e: TechError) -> Self {
        RunError::Tech(e)
    }
}

impl From<NetlistError> for RunError {
    fn from(e: NetlistError) -> Self {
        RunError::Netlist(e)
    }
}

impl From<ScriptError> for RunError {
    fn from(e: ScriptError) -> Self {
        RunError::Script(e)
    }
}

impl From<VerifyError> for RunError {
    fn from(e: VerifyError) -> Self {
        RunError::Verify(e)
    }
}

impl RunError {
    /// Script line the error points at, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            RunError::Script(e) => Some(e.line),
            RunError::Command { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub design: String,
    pub commands_executed: usize,
    pub drc_violations: usize,
    pub lvs_verdict: Verdict,
    pub total_wirelength: i64,
    pub via_count: usize,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn is_clean(&self) -> bool {
        self.drc_violations == 0 && self.lvs_verdict == Verdict::Match
    }
}

/// Runs `script` on the top cell of `netlist` without touching the disk.
pub fn run_text(tech: Arc<Technology>, netlist: &str, script: &str) -> Result<(Session, VerifyReport), RunError> {
    let commands = parse_script(script)?;
    let mut session = Session::new(tech, parse_top(netlist)?);
    for (line, cmd) in &commands {
        session.apply(cmd).map_err(|error| RunError::Command {
            line: *line,
            command: cmd.to_string(),
            error: Box::new(error),
        })?;
    }
    let report = verify(session.current(), session.netlist(), session.tech())?;
    Ok((session, report))
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|error| RunError::Io {
        path: path.to_path_buf(),
        error,
    })
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf, RunError> {
    std::fs::write(&path, bytes).map_err(|error| RunError::Io {
        path: path.clone(),
        error,
    })?;
    Ok(path)
}

/// Writes `layout.json`, `layout.svg` and `report.json` into `out_dir`.
pub fn write_artifacts(out_dir: &Path, session: &Session, report: &VerifyReport) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(out_dir).map_err(|error| RunError::Io {
        path: out_dir.to_path_buf(),
        error,
    })?;
    let layers = session.tech().layers.iter().map(|l| l.name.clone()).collect();
    let svg = to_svg(
        session.current(),
        &SvgOptions {
            layers,
            ..Default::default()
        },
    );
    Ok(vec![
        write(out_dir.join("layout.json"), &session.current().to_canonical_json())?,
        write(out_dir.join("layout.svg"), svg.as_bytes())?,
        write(out_dir.join("report.json"), report.to_json().as_bytes())?,
    ])
}

/// Loads the inputs, applies every command and writes the artifacts.
///
/// Verification failures are reported, not raised; callers decide whether
/// an unclean report is fatal.
pub fn run_script(tech_path: &Path, netlist_path: &Path, script_path: &Path, out_dir: &Path) -> Result<RunReport, RunError> {
    let tech = Arc::new(Technology::from_json(&read(tech_path)?)?);
    let (session, report) = run_text(tech, &read(netlist_path)?, &read(script_path)?)?;
    let artifacts = write_artifacts(out_dir, &session, &report)?;
    Ok(RunReport {
        design: session.netlist().name.clone(),
        commands_executed: session.log().len(),
        drc_violations: report.drc.len(),
        lvs_verdict: report.lvs.verdict,
        total_wirelength: report.wirelength.total,
        via_count: report.wirelength.via_count,
        artifacts,
    })
}
