//! Configuration-driven front end for `medimax-core`: builds spaces and set
//! families from flags or JSON configs, runs experiment pipelines, writes
//! deterministic report artifacts, and hosts the property-suite verifier.

pub mod cli;
pub mod config;
pub mod io;
pub mod runner;
pub mod verify;

use std::fmt;

/// Errors surfaced to the shell, each with a stable exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config file, or parameters outside module contracts.
    Usage(String),
    /// A hard size or resolution cap was exceeded.
    Resource(String),
    /// One or more verified properties failed; carries the anchors.
    Property(Vec<String>),
    /// Filesystem trouble while writing artifacts.
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Property(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Resource(_) => "resource-cap",
            CliError::Property(_) => "property-failure",
            CliError::Io(_) => "io",
        }
    }

    /// Machine-readable form; printed as the last stderr line on failure.
    pub fn to_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        let mut inner = serde_json::Map::new();
        inner.insert("code".into(), serde_json::json!(self.code()));
        inner.insert("kind".into(), serde_json::json!(self.kind()));
        inner.insert("message".into(), serde_json::json!(self.to_string()));
        if let CliError::Property(anchors) = self {
            inner.insert("anchors".into(), serde_json::json!(anchors));
        }
        obj.insert("error".into(), serde_json::Value::Object(inner));
        serde_json::Value::Object(obj).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Resource(m) => write!(f, "{m}"),
            CliError::Property(anchors) => {
                write!(f, "property checks failed: {}", anchors.join(", "))
            }
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<medimax_core::Error> for CliError {
    fn from(e: medimax_core::Error) -> CliError {
        match e {
            medimax_core::Error::SizeCap { .. } | medimax_core::Error::ResolutionExhausted { .. } => {
                CliError::Resource(format!("{e}"))
            }
            other => CliError::Usage(format!("{other}")),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Io(format!("{e}"))
    }
}
