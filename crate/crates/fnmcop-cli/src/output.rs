//! Output plumbing: CSV with a consistent 6-significant-digit rounding,
//! JSON at full precision, seed echoing, and exit-code mapping.

use fnmcop::{Error, Result};
use serde::Serialize;
use std::io::Write;

/// Round to 6 significant digits; CSV cells all go through this.
pub fn round6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(5 - exp);
    if scale.is_finite() && scale != 0.0 {
        (x * scale).round() / scale
    } else {
        x
    }
}

pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    format!("{}", round6(x))
}

/// A CSV table with a leading `# key=value` metadata block.
pub struct CsvTable {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: Vec<&str>) -> Self {
        CsvTable {
            metadata: Vec::new(),
            header: header.into_iter().map(String::from).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            s.push_str(&format!("# {k}={v}\n"));
        }
        s.push_str(&self.header.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Write rendered output to `--out` or stdout.
pub fn emit(out: &Option<String>, contents: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, contents)
            .map_err(|e| Error::Input(format!("cannot write {path}: {e}"))),
        None => {
            std::io::stdout()
                .write_all(contents.as_bytes())
                .map_err(|e| Error::Input(format!("cannot write to stdout: {e}")))?;
            Ok(())
        }
    }
}

/// Wrap a serializable payload with run metadata for JSON output.
#[derive(Serialize)]
pub struct JsonEnvelope<T: Serialize> {
    pub seed: u64,
    #[serde(flatten)]
    pub payload: T,
}

pub fn render_json<T: Serialize>(seed: u64, payload: T) -> Result<String> {
    let env = JsonEnvelope { seed, payload };
    serde_json::to_string_pretty(&env)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Numeric(format!("serialization failed: {e}")))
}

/// The seed actually used: the flag when given, otherwise fresh entropy
/// (echoed in the output metadata either way).
pub fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.unwrap_or_else(|| {
        use std::time::{SystemTime, UNIX_EPOCH};
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        nanos ^ (std::process::id() as u64) << 32
    })
}

/// Process exit codes: 0 success, 1 input error, 2 convergence warning,
/// 3 numeric failure.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Input(_) | Error::Domain(_) => 1,
        Error::Numeric(_) => 3,
    }
}

pub const EXIT_CONVERGENCE_WARNING: u8 = 2;
