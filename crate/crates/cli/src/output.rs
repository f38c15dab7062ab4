//! CSV/JSON emission and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::settings::Settings;

/// `%.12g`-style rendering: 12 significant digits, trailing zeros dropped,
/// exponent notation outside `[1e-4, 1e12)`.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (11 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// In-memory CSV table, rendered with `\n` line endings.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Table { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: Settings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, parameters: Settings) -> Self {
        let outputs = parameters.out.iter().cloned().collect();
        RunManifest {
            command: command.into(),
            master_seed: parameters.seed,
            parameters,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            outputs,
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Writes `body` to the manifest's output path (and the manifest beside it),
/// or to stdout when no path was given.
pub fn emit(manifest: &RunManifest, body: &str) -> anyhow::Result<()> {
    match &manifest.parameters.out {
        Some(out) => {
            std::fs::write(out, body).with_context(|| format!("writing {}", out.display()))?;
            let side = manifest_path(out);
            let mut json = serde_json::to_string_pretty(manifest)?;
            json.push('\n');
            std::fs::write(&side, json).with_context(|| format!("writing {}", side.display()))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes()).context("writing stdout")?;
            stdout.flush().context("writing stdout")?;
        }
    }
    Ok(())
}
