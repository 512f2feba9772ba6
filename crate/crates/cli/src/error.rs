use std::process::ExitCode;

use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    /// Exit 2.
    Input,
    /// Exit 3.
    Solver,
    /// Exit 4.
    Verification,
}

/// A failed command, reported on stderr as one line of JSON.
#[derive(Debug, Clone)]
pub struct CliError {
    pub failure: Failure,
    pub field: Option<String>,
    pub message: String,
    pub failed: Vec<String>,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            failure: Failure::Input,
            field: Some(field.into()),
            message: message.into(),
            failed: Vec::new(),
        }
    }

    pub fn verification(failed: Vec<String>) -> Self {
        Self {
            failure: Failure::Verification,
            field: None,
            message: format!("failed checks: {}", failed.join(", ")),
            failed,
        }
    }

    pub fn output(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::input("out", format!("cannot write {}: {e}", path.display()))
    }

    /// Maps a core error, naming `field` when the error itself carries no name.
    pub fn from_core(e: ifp_core::Error, field: &str) -> Self {
        use ifp_core::Error as E;
        let message = e.to_string();
        let (failure, name) = match &e {
            E::InvalidArgument { name, .. } => (Failure::Input, Some(name.to_string())),
            E::InvalidSurvival(_) | E::InvalidBoundary(_) | E::Mismatch(_) => (Failure::Input, Some(field.to_string())),
            E::GridTooNarrow { .. } => (Failure::Solver, Some("half_width_sigmas".into())),
            E::MeshTooLarge { .. } => (Failure::Solver, Some("n".into())),
            E::NotMonotone { .. } | E::NotBracketed { .. } => (Failure::Solver, None),
        };
        Self {
            failure,
            field: name,
            message,
            failed: Vec::new(),
        }
    }

    pub fn from_clap(e: &clap::Error) -> Self {
        use clap::error::{ContextKind, ContextValue};
        let field = match e.get(ContextKind::InvalidArg) {
            Some(ContextValue::String(s)) => Some(s.clone()),
            Some(ContextValue::Strings(v)) => v.first().cloned(),
            _ => None,
        }
        .map(|s| flag_name(&s));
        let rendered = e.render().to_string();
        let message = rendered
            .lines()
            .take_while(|l| !l.trim().is_empty() && !l.starts_with("Usage:"))
            .map(str::trim)
            .collect::<Vec<_>>()
            .join(" ")
            .trim_start_matches("error: ")
            .to_string();
        Self {
            failure: Failure::Input,
            field,
            message,
            failed: Vec::new(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.failure {
            Failure::Input => 2,
            Failure::Solver => 3,
            Failure::Verification => 4,
        })
    }

    pub fn to_json(&self) -> Value {
        let kind = match self.failure {
            Failure::Input => "input",
            Failure::Solver => "solver",
            Failure::Verification => "verification",
        };
        let mut v = json!({ "error": kind, "field": self.field, "message": self.message });
        if self.failure == Failure::Verification {
            v["failed"] = json!(self.failed);
        }
        v
    }
}

/// `--tol-root <TOL_ROOT>` to `tol_root`.
fn flag_name(s: &str) -> String {
    let bare = s.trim_start_matches('-');
    let bare = bare.split([' ', '=']).next().unwrap_or(bare);
    bare.replace('-', "_")
}
