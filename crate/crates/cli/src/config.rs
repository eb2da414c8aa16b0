//! Loading experiment configs with line-level diagnostics.

use std::fmt;
use std::path::Path;

use peerhedge_core::sim::ExperimentSpec;
use peerhedge_core::Error as CoreError;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// A config problem, located in the source text where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source_name: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{}:{}:{}: {}", self.source_name, l, c, self.message),
            (Some(l), None) => write!(f, "{}:{}: {}", self.source_name, l, self.message),
            _ => write!(f, "{}: {}", self.source_name, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A parsed config plus the provenance stamped on every output file.
#[derive(Debug, Clone)]
pub struct ConfigDocument {
    pub source_name: String,
    pub text: String,
    pub value: Value,
    pub spec: ExperimentSpec,
    /// SHA-256 of the raw config bytes, hex encoded.
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ConfigDocument {
    pub fn load(path: &Path) -> Result<ConfigDocument, ConfigError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source_name: name.clone(),
            line: None,
            column: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&name, &text)
    }

    /// Parse and validate. Syntax, type and unknown-key errors carry the
    /// parser's position; semantic errors are located by key name.
    pub fn parse(source_name: &str, text: &str) -> Result<ConfigDocument, ConfigError> {
        let located = |e: serde_json::Error| ConfigError {
            source_name: source_name.to_string(),
            line: Some(e.line()),
            column: Some(e.column()),
            message: strip_position(&e.to_string()),
        };
        let value: Value = serde_json::from_str(text).map_err(located)?;
        // Deserialize from the text, not the value, to keep positions.
        let spec: ExperimentSpec = serde_json::from_str(text).map_err(located)?;
        let doc = ConfigDocument {
            source_name: source_name.to_string(),
            text: text.to_string(),
            value,
            spec,
            hash: sha256_hex(text.as_bytes()),
        };
        doc.validate(&doc.spec)?;
        Ok(doc)
    }

    /// Validate `spec` (usually this document's spec after overrides) and
    /// turn failures into located diagnostics.
    pub fn validate(&self, spec: &ExperimentSpec) -> Result<(), ConfigError> {
        spec.validate().map_err(|e| self.locate(e))
    }

    pub fn locate(&self, err: CoreError) -> ConfigError {
        let (line, message) = match &err {
            CoreError::Spec { path, .. } => (find_key_line(&self.text, path), err.to_string()),
            _ => (None, err.to_string()),
        };
        ConfigError {
            source_name: self.source_name.clone(),
            line,
            column: None,
            message,
        }
    }

    /// Re-read a modified JSON value as a spec; used by sweeps.
    pub fn spec_from_value(&self, value: Value) -> Result<ExperimentSpec, ConfigError> {
        let spec: ExperimentSpec = serde_json::from_value(value).map_err(|e| ConfigError {
            source_name: self.source_name.clone(),
            line: None,
            column: None,
            message: e.to_string(),
        })?;
        self.validate(&spec)?;
        Ok(spec)
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// 1-based line of the key named by a dotted field path such as
/// `world.horizon` or `experts[2].sigma`, found by walking the keys in
/// order through the text. Falls back to the deepest key found.
pub fn find_key_line(text: &str, path: &str) -> Option<usize> {
    let mut offset = 0;
    let mut found = None;
    for segment in path.split('.') {
        let (key, index) = match segment.find('[') {
            Some(i) => (
                &segment[..i],
                segment[i + 1..segment.len() - 1].parse::<usize>().ok(),
            ),
            None => (segment, None),
        };
        let needle = format!("\"{key}\"");
        match text[offset..].find(&needle) {
            Some(i) => {
                offset += i + needle.len();
                found = Some(offset);
            }
            None => break,
        }
        if let Some(k) = index {
            // Skip to the k-th element's opening brace.
            let mut seen = 0;
            let mut depth = 0i32;
            for (j, ch) in text[offset..].char_indices() {
                match ch {
                    '[' | '{' => {
                        if ch == '{' && depth == 1 {
                            if seen == k {
                                offset += j;
                                found = Some(offset);
                                break;
                            }
                            seen += 1;
                        }
                        depth += 1;
                    }
                    ']' | '}' => {
                        depth -= 1;
                        if depth <= 0 {
                            break;
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    found.map(|o| text[..o].matches('\n').count() + 1)
}

/// Named sweep axes and the JSON pointers they write to. `eta` moves the
/// channel rate and the known correction together.
pub fn axis_pointers(param: &str) -> Vec<String> {
    match param {
        "horizon" => vec!["/world/horizon".into()],
        "seed" => vec!["/seed".into()],
        "eta" => vec![
            "/aggregation/channel/eta".into(),
            "/peer_score/correction/eta".into(),
        ],
        "p_star" | "reveal_prob" => vec!["/estimator/reveal_prob".into()],
        "flip_prob" => vec!["/peer_score/flips/flip_prob".into()],
        other => vec![other.to_string()],
    }
}

/// Write `value` at every pointer of `param` that exists in `doc`. At least
/// one must exist.
pub fn apply_axis(doc: &Value, param: &str, value: &Value) -> Result<Value, String> {
    let mut out = doc.clone();
    let mut hits = 0;
    for ptr in axis_pointers(param) {
        if !ptr.starts_with('/') {
            return Err(format!(
                "unknown sweep parameter `{param}` (use an alias or a JSON pointer)"
            ));
        }
        if let Some(slot) = out.pointer_mut(&ptr) {
            *slot = value.clone();
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(format!(
            "sweep parameter `{param}` does not exist in this config"
        ));
    }
    Ok(out)
}
