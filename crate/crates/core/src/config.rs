//! TOML configuration files with line-precise error messages.

use crate::bope_loop::RunConfig;
use serde::de::DeserializeOwned;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: String,
    /// 1-based.
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
            if let Some(col) = self.column {
                write!(f, ":{col}")?;
            }
        }
        write!(f, ": ")?;
        if let Some(field) = &self.field {
            if !self.message.starts_with(field.as_str()) {
                write!(f, "{field}: ")?;
            }
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, col)
}

/// Line where the dotted `field` is assigned, looking through `[table]`
/// headers and dotted keys.
pub fn locate_field(text: &str, field: &str) -> Option<usize> {
    let parts: Vec<&str> = field.split('.').collect();
    let mut table: Vec<String> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[') {
            let name = h.trim_start_matches('[').trim_end_matches(']').trim();
            table = name.split('.').map(|s| s.trim().to_string()).collect();
            if table == parts {
                return Some(n + 1);
            }
            continue;
        }
        let Some((key, _)) = line.split_once('=') else { continue };
        let mut full = table.clone();
        full.extend(key.trim().split('.').map(|s| s.trim().trim_matches('"').to_string()));
        if full.len() >= parts.len() && full[..parts.len()] == parts[..] {
            return Some(n + 1);
        }
    }
    None
}

fn leading_field(message: &str) -> Option<String> {
    let token: String = message
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == '.')
        .collect();
    let rest = &message[token.len()..];
    (!token.is_empty() && token.chars().next().is_some_and(|c| c.is_ascii_lowercase())
        && (rest.starts_with(':') || rest.starts_with(' ')))
    .then_some(token)
}

/// Parses `text` as TOML into `T`.
pub fn parse_toml<T: DeserializeOwned>(text: &str, source: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = match e.span() {
            Some(span) => {
                let (l, c) = line_col(text, span.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        ConfigError {
            source: source.to_string(),
            line,
            column,
            field: None,
            message: e.message().trim().to_string(),
        }
    })
}

/// Turns a semantic error about the config into a located one.
pub fn locate_error(text: &str, source: &str, err: &crate::Error) -> ConfigError {
    let message = match err {
        crate::Error::Config(m) => m.clone(),
        other => other.to_string(),
    };
    let field = leading_field(&message);
    let line = field.as_deref().and_then(|f| locate_field(text, f));
    ConfigError {
        source: source.to_string(),
        line,
        column: None,
        field,
        message,
    }
}

/// Parses and fully validates a run configuration, including the problem
/// and utility names.
pub fn parse_run_config(text: &str, source: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = parse_toml(text, source)?;
    cfg.validate()
        .and_then(|_| cfg.resolve().map(|_| ()))
        .map_err(|e| locate_error(text, source, &e))?;
    Ok(cfg)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let source = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        source: source.clone(),
        line: None,
        column: None,
        field: None,
        message: e.to_string(),
    })?;
    parse_run_config(&text, &source)
}
