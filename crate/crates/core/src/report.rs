//! Experiment reports: a JSON document with the config hash, the constants
//! in force, named checks, and free-form data; plus CSV artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Constants {
    pub beta0: Option<f64>,
    pub c4: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    /// Boolean check; `value` is 0 or 1.
    #[serde(default)]
    pub flag: bool,
    pub detail: String,
}

impl Check {
    /// `value <= threshold`
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= threshold,
            value,
            threshold,
            flag: false,
            detail: String::new(),
        }
    }

    /// `value >= threshold`
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            pass: value >= threshold,
            value,
            threshold,
            flag: false,
            detail: String::new(),
        }
    }

    pub fn flag(name: &str, pass: bool) -> Self {
        Self {
            name: name.into(),
            pass,
            value: f64::from(u8::from(pass)),
            threshold: 1.0,
            flag: true,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// One human line, numbers at 4 significant digits.
    pub fn summary_line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let mut s = if self.flag {
            format!("{verdict} {}", self.name)
        } else {
            format!(
                "{verdict} {}: value={} threshold={}",
                self.name,
                sig4(self.value),
                sig4(self.threshold)
            )
        };
        if !self.detail.is_empty() {
            s.push_str(" (");
            s.push_str(&self.detail);
            s.push(')');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub constants: Constants,
    pub checks: Vec<Check>,
    pub data: serde_json::Value,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Pretty JSON. Floats are written in shortest round-trip form, which
    /// never loses digits.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join("report.json");
        fs::write(&path, self.to_json()?)?;
        Ok(path)
    }
}

pub fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    if name.contains('/') || name.contains("..") {
        return Err(Error::param("artifact", format!("bad file name {name}")));
    }
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}

/// SHA-256 of the config text, hex.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// `x` rounded to 4 significant digits for human summaries.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-3..4).contains(&e) {
        let decimals = (3 - e).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.3e}")
    }
}
