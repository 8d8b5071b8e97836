use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::CliError;

/// Rounds to 12 significant digits; non-finite values pass through.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() && x != 0.0 {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

pub fn fmt12(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        let r = round12(x);
        if r != 0.0 && (r.abs() < 1e-5 || r.abs() >= 1e15) {
            format!("{r:e}")
        } else {
            r.to_string()
        }
    }
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| Number::from_f64(round12(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(items) => Value::Array(items.into_iter().map(round_value).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Inputs after defaults were applied, in loader-compatible form.
    pub config: Value,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn start(subcommand: &str) -> Self {
        let now = Utc::now().to_rfc3339();
        Self {
            subcommand: subcommand.into(),
            config: Value::Object(Map::new()),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: None,
            started_at: now.clone(),
            finished_at: now,
            outputs: Vec::new(),
        }
    }

    fn finish(&mut self, outputs: Vec<String>) {
        self.finished_at = Utc::now().to_rfc3339();
        self.outputs = outputs;
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn label(path: Option<&Path>) -> String {
    path.map_or_else(|| "-".to_string(), |p| p.display().to_string())
}

/// Writes a JSON report with the manifest embedded under `"manifest"`.
pub fn emit_json(result: impl Serialize, mut manifest: RunManifest, out: Option<&Path>) -> Result<(), CliError> {
    manifest.finish(vec![label(out)]);
    let doc = match serde_json::to_value(result).map_err(|e| CliError::Io(e.to_string()))? {
        Value::Object(map) => map,
        other => Map::from_iter([("result".to_string(), other)]),
    };
    let mut doc = match round_value(Value::Object(doc)) {
        Value::Object(map) => map,
        _ => unreachable!(),
    };
    // the manifest keeps full precision so its config reproduces the run
    doc.insert("manifest".into(), serde_json::to_value(&manifest).map_err(|e| CliError::Io(e.to_string()))?);
    let text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| CliError::Io(e.to_string()))?;
    write_text(out, &(text + "\n"))
}

/// Writes CSV rows; the manifest goes to `<out>.manifest.json`, or to stderr
/// when the CSV goes to stdout.
pub fn emit_csv(
    header: &[&str],
    rows: &[Vec<f64>],
    mut manifest: RunManifest,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|&x| fmt12(x))).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))?;
    match out {
        Some(p) => {
            let side = sidecar_path(p);
            manifest.finish(vec![p.display().to_string(), side.display().to_string()]);
            write_text(Some(p), &text)?;
            let m = serde_json::to_string_pretty(&manifest)
                .map_err(|e| CliError::Io(e.to_string()))?;
            write_text(Some(&side), &(m + "\n"))
        }
        None => {
            manifest.finish(vec!["-".into()]);
            write_text(None, &text)?;
            eprintln!("{}", serde_json::to_string(&manifest).unwrap_or_default());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt12(0.1 + 0.2), "0.3");
        assert_eq!(fmt12(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt12(12345.678901234567), "12345.6789012");
        assert_eq!(fmt12(1e-20 / 3.0), "3.33333333333e-21");
        assert_eq!(fmt12(f64::INFINITY), "inf");
        assert_eq!(fmt12(0.0), "0");
    }

    #[test]
    fn rounding_in_json() {
        let v = round_value(serde_json::json!({"a": [1.0 / 3.0, 2], "b": {"c": 7u64}}));
        assert_eq!(v["a"][0].as_f64().unwrap(), 0.333333333333);
        assert_eq!(v["a"][1], 2);
        assert_eq!(v["b"]["c"], 7);
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(sidecar_path(Path::new("/tmp/x/curve.csv")), PathBuf::from("/tmp/x/curve.csv.manifest.json"));
    }
}
