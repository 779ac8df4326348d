//! Output rendering with embedded provenance. Every file carries the tool
//! version, the producing command, the seed and the full resolved config,
//! so `replay` can regenerate it byte for byte from the file alone.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "cvmbqc";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance block of one output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: ExperimentConfig,
}

impl Meta {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            seed: config.seed,
            config_sha256: config.sha256_hex(),
            config: config.clone(),
        }
    }
}

/// CSV with `#`-prefixed provenance comments before the header row. Cells
/// print with the shortest round-trip float representation.
pub fn render_csv(meta: &Meta, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {} {}\n", meta.tool, meta.version));
    out.push_str(&format!("# command: {}\n", meta.command));
    out.push_str(&format!("# seed: {}\n", meta.seed));
    out.push_str(&format!("# config_sha256: {}\n", meta.config_sha256));
    out.push_str(&format!("# config: {}\n", meta.config.canonical_json()));
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// JSON object `{ "meta": ..., "rows": [...] }`.
pub fn render_json<T: Serialize>(meta: &Meta, rows: &[T]) -> Result<String> {
    #[derive(Serialize)]
    struct Document<'a, T> {
        meta: &'a Meta,
        rows: &'a [T],
    }
    let mut text = serde_json::to_string_pretty(&Document { meta, rows })
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Recover the provenance block from a rendered output (either format).
pub fn parse_meta(text: &str) -> Result<Meta> {
    if text.trim_start().starts_with('{') {
        #[derive(Deserialize)]
        struct Document {
            meta: Meta,
        }
        let doc: Document = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("not a valid report file: {e}")))?;
        return Ok(doc.meta);
    }
    let mut command = None;
    let mut seed = None;
    let mut config = None;
    for line in text.lines() {
        let Some(comment) = line.strip_prefix("# ") else {
            if line.starts_with('#') {
                continue;
            }
            break;
        };
        if let Some(v) = comment.strip_prefix("command: ") {
            command = Some(v.trim().to_string());
        } else if let Some(v) = comment.strip_prefix("seed: ") {
            seed = Some(
                v.trim()
                    .parse::<u64>()
                    .map_err(|e| Error::Config(format!("bad seed comment: {e}")))?,
            );
        } else if let Some(v) = comment.strip_prefix("config: ") {
            let cfg: ExperimentConfig = serde_json::from_str(v.trim())
                .map_err(|e| Error::Config(format!("bad embedded config: {e}")))?;
            config = Some(cfg);
        }
    }
    let (Some(command), Some(seed), Some(config)) = (command, seed, config) else {
        return Err(Error::Config(
            "file does not carry a complete provenance block".into(),
        ));
    };
    Ok(Meta {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        command,
        seed,
        config_sha256: config.sha256_hex(),
        config,
    })
}

/// Shortest round-trip cell format for floats.
pub fn cell(v: f64) -> String {
    format!("{v}")
}
