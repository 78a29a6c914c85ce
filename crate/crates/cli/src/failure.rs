use scd_core::{Error, Violation};
use serde::Serialize;

/// Exit status when the inputs could not be read, parsed or validated.
pub const EXIT_INPUT: i32 = 2;
/// Exit status when the simplex solver hit its iteration cap.
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_OTHER: i32 = 1;

/// A command failure with its exit status and machine-readable body.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub exit_code: i32,
    pub code: &'static str,
    pub message: String,
    pub violations: Vec<Violation>,
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "<[Violation]>::is_empty")]
    violations: &'a [Violation],
}

#[derive(Serialize)]
struct Report<'a> {
    error: Body<'a>,
}

impl Failure {
    pub fn input(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            exit_code: EXIT_INPUT,
            code,
            message: message.into(),
            violations: Vec::new(),
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error, writing: bool) -> Self {
        Self {
            exit_code: if writing { EXIT_OTHER } else { EXIT_INPUT },
            code: if writing { "write" } else { "read" },
            message: format!("{}: {err}", path.display()),
            violations: Vec::new(),
        }
    }

    /// `{"error": {"code", "message", "violations"}}` on one line.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&Report {
            error: Body {
                code: self.code,
                message: &self.message,
                violations: &self.violations,
            },
        })
        .expect("error report serializes")
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let message = err.to_string();
        let (exit_code, code, violations) = match err.root() {
            Error::Validation(v) => (EXIT_INPUT, "validation", v.violations.clone()),
            Error::Parse(_) => (EXIT_INPUT, "parse", Vec::new()),
            Error::Argument(_) => (EXIT_INPUT, "argument", Vec::new()),
            Error::NonConvergence { .. } => (EXIT_SOLVER, "solver", Vec::new()),
            Error::Domain(_) => (EXIT_OTHER, "domain", Vec::new()),
            Error::SweepRow { .. } => unreachable!("root() unwraps sweep rows"),
        };
        Self {
            exit_code,
            code,
            message,
            violations,
        }
    }
}

impl From<scd_core::ValidationError> for Failure {
    fn from(err: scd_core::ValidationError) -> Self {
        Error::from(err).into()
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}
