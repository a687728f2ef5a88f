//! CSV ingestion and output serialization for the CLI.
//!
//! CSV outputs carry `#`-prefixed comment lines embedding the tool version
//! and the effective configuration; `read_design` skips such comments, so
//! every CSV this tool writes with a `t,y` header can be fed back in.
//! Floats in CSV are written as `{:.16e}` (17 significant digits, exact
//! f64 round-trip); JSON floats rely on serde_json's shortest-round-trip
//! encoding, which is also exact.

use std::fs;
use std::path::Path;

use adaspline_core::Design;
use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Min-max rescale metadata recorded when `--rescale` mapped t to [0, 1].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RescaleInfo {
    pub t_min: f64,
    pub t_max: f64,
}

#[derive(Debug)]
pub struct LoadedDesign {
    pub design: Design,
    pub rescale: Option<RescaleInfo>,
}

/// Reads a strict `t,y[,w]` CSV. Comment lines starting with `#` are
/// skipped; parse and validation errors name the offending file line.
/// Without `rescale`, t must already lie in [0, 1]; with it, t is min-max
/// mapped onto [0, 1] and the original range is recorded.
pub fn read_design(path: &Path, rescale: bool) -> Result<LoadedDesign> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;

    let header: Vec<String> = rdr
        .headers()
        .with_context(|| format!("{}: cannot read header", path.display()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let has_w = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["t", "y"] => false,
        ["t", "y", "w"] => true,
        _ => bail!(
            "{}: expected header 't,y' or 't,y,w', found '{}'",
            path.display(),
            header.join(",")
        ),
    };

    // (file line, t, y, w)
    let mut rows: Vec<(u64, f64, f64, Option<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record.with_context(|| format!("{}: malformed CSV", path.display()))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize, name: &str| -> Result<f64> {
            let raw = record
                .get(idx)
                .ok_or_else(|| anyhow!("line {line}: missing column '{name}'"))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| anyhow!("line {line}: cannot parse {name} value '{raw}'"))?;
            if !v.is_finite() {
                bail!("line {line}: {name} = {v} is not finite");
            }
            Ok(v)
        };
        let t = field(0, "t")?;
        let y = field(1, "y")?;
        let w = if has_w {
            let w = field(2, "w")?;
            if w <= 0.0 {
                bail!("line {line}: weight must be positive, got {w}");
            }
            Some(w)
        } else {
            None
        };
        rows.push((line, t, y, w));
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }

    let mut info = None;
    if rescale {
        let t_min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let t_max = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        if t_max <= t_min {
            bail!("cannot rescale: every t equals {t_min}");
        }
        for row in &mut rows {
            row.1 = (row.1 - t_min) / (t_max - t_min);
        }
        info = Some(RescaleInfo { t_min, t_max });
    } else if let Some(row) = rows.iter().find(|r| !(0.0..=1.0).contains(&r.1)) {
        bail!(
            "line {}: t = {} outside [0, 1]; pass --rescale to map the range onto [0, 1]",
            row.0,
            row.1
        );
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].1.partial_cmp(&rows[b].1).expect("finite t"));
    for pair in order.windows(2) {
        let (a, b) = (&rows[pair[0]], &rows[pair[1]]);
        if a.1 == b.1 {
            bail!("duplicate t = {} at lines {} and {}", a.1, a.0, b.0);
        }
    }

    let t: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let w: Option<Vec<f64>> = has_w.then(|| rows.iter().map(|r| r.3.unwrap()).collect());
    let design =
        Design::new(t, y, w).with_context(|| format!("{}: invalid design", path.display()))?;
    Ok(LoadedDesign {
        design,
        rescale: info,
    })
}

/// 17-significant-digit float for CSV cells (exact f64 round-trip).
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV file with leading `# adaspline …` metadata comments.
pub struct CsvOut {
    buf: String,
}

impl CsvOut {
    pub fn new(command: &str, config: &serde_json::Value) -> Self {
        let mut buf = format!("# adaspline {VERSION} {command}\n");
        buf.push_str(&format!("# config: {config}\n"));
        CsvOut { buf }
    }

    pub fn comment(&mut self, text: &str) {
        self.buf.push_str(&format!("# {text}\n"));
    }

    pub fn header(&mut self, columns: &[&str]) {
        self.buf.push_str(&columns.join(","));
        self.buf.push('\n');
    }

    pub fn row(&mut self, cells: &[String]) {
        self.buf.push_str(&cells.join(","));
        self.buf.push('\n');
    }

    pub fn write(self, path: &Path) -> Result<()> {
        fs::write(path, self.buf).with_context(|| format!("cannot write {}", path.display()))
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("JSON serialization")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// JSON number that degrades to null for non-finite values instead of
/// panicking inside the `json!` macro.
pub fn num(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

pub fn opt_num(x: Option<f64>) -> serde_json::Value {
    x.map_or(serde_json::Value::Null, num)
}

/// Derives `<stem><suffix>` next to `out` (e.g. `fit.json` → `fit_grid.csv`).
pub fn sibling(out: &Path, suffix: &str) -> std::path::PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "out".to_owned(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}{suffix}"))
}
