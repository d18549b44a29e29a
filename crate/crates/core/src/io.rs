//! Matrix files: headerless CSV (one row per line, `#` comment lines) and
//! MatrixMarket `coordinate real general` (`%` comment lines). Readers
//! reject non-finite values and report `file:line` locations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::completion::{NoiseKind, ObservationParams, ObservationSet};
use crate::error::{Error, Result};
use crate::Matrix;

const MM_HEADER: &str = "%%MatrixMarket matrix coordinate real general";

fn parse_value(field: &str, location: impl Fn() -> String) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(location(), format!("'{}' is not a number", field.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(location(), format!("non-finite value '{}'", field.trim())));
    }
    Ok(v)
}

/// I/O errors carry the path they concern.
fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| with_path(path, e))
}

/// Parses headerless CSV text; `name` labels error locations.
pub fn parse_csv(text: &str, name: &str) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .quoting(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("{name}:{line}"), e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        // comments are skipped here rather than by the reader so that line
        // numbers stay physical
        if rec.iter().all(|f| f.is_empty()) || rec.get(0).is_some_and(|f| f.starts_with('#')) {
            continue;
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, f)| parse_value(f, || format!("{name}:{line}:{}", c + 1)))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    format!("{name}:{line}"),
                    format!("expected {} fields, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(name, "no matrix rows"));
    }
    Matrix::from_rows(&rows)
}

pub fn read_csv(path: &Path) -> Result<Matrix> {
    parse_csv(&read_text(path)?, &path.display().to_string())
}

/// Headerless CSV with `# key: value` lines first. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn format_csv(a: &Matrix, meta: &[(&str, String)]) -> Result<String> {
    let mut out = String::new();
    for (k, v) in meta {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for i in 0..a.rows() {
        w.write_record(a.row(i).iter().map(|x| x.to_string()))
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    out.push_str(std::str::from_utf8(&bytes).expect("utf-8"));
    Ok(out)
}

pub fn write_csv(path: &Path, a: &Matrix, meta: &[(&str, String)]) -> Result<()> {
    write_text(path, &format_csv(a, meta)?)?;
    Ok(())
}

/// Parses MatrixMarket coordinate text (real, general); entries not listed
/// are zero.
pub fn parse_matrix_market(text: &str, name: &str) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(name, "empty file"))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::parse(format!("{name}:1"), "missing %%MatrixMarket matrix header"));
    }
    if tokens[2] != "coordinate" || tokens[3] != "real" || tokens[4] != "general" {
        return Err(Error::parse(
            format!("{name}:1"),
            format!("unsupported format '{} {} {}'", tokens[2], tokens[3], tokens[4]),
        ));
    }
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('%'));
    let (size_line, size) = body
        .next()
        .ok_or_else(|| Error::parse(name, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(format!("{name}:{size_line}"), "size line must be 'rows cols entries'"))?;
    if dims.len() != 3 {
        return Err(Error::parse(format!("{name}:{size_line}"), "size line must be 'rows cols entries'"));
    }
    let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
    if rows == 0 || cols == 0 {
        return Err(Error::parse(format!("{name}:{size_line}"), "matrix must be at least 1x1"));
    }
    let mut data = vec![0.0; rows * cols];
    let mut seen = vec![false; rows * cols];
    let mut count = 0;
    for (ln, line) in body {
        let loc = || format!("{name}:{ln}");
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 3 {
            return Err(Error::parse(loc(), "entry must be 'row col value'"));
        }
        let idx = |s: &str, limit: usize| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(k) if (1..=limit).contains(&k) => Ok(k - 1),
                _ => Err(Error::parse(loc(), format!("index '{s}' outside 1..={limit}"))),
            }
        };
        let (i, j) = (idx(t[0], rows)?, idx(t[1], cols)?);
        let v = parse_value(t[2], loc)?;
        let k = i * cols + j;
        if seen[k] {
            return Err(Error::parse(loc(), format!("duplicate entry ({}, {})", i + 1, j + 1)));
        }
        seen[k] = true;
        data[k] = v;
        count += 1;
    }
    if count != nnz {
        return Err(Error::parse(name, format!("size line promises {nnz} entries, found {count}")));
    }
    Matrix::from_row_major(rows, cols, data)
}

pub fn read_matrix_market(path: &Path) -> Result<Matrix> {
    parse_matrix_market(&read_text(path)?, &path.display().to_string())
}

/// MatrixMarket coordinate text listing the nonzero entries, with
/// `% key: value` lines after the header.
pub fn format_matrix_market(a: &Matrix, meta: &[(&str, String)]) -> String {
    let mut out = String::from(MM_HEADER);
    out.push('\n');
    for (k, v) in meta {
        out.push_str(&format!("% {k}: {v}\n"));
    }
    out.push_str(&format!("{} {} {}\n", a.rows(), a.cols(), a.count_nonzero()));
    for (i, j, x) in a.entries() {
        if *x != 0.0 {
            out.push_str(&format!("{} {} {}\n", i + 1, j + 1, x));
        }
    }
    out
}

pub fn write_matrix_market(path: &Path, a: &Matrix, meta: &[(&str, String)]) -> Result<()> {
    write_text(path, &format_matrix_market(a, meta))?;
    Ok(())
}

/// Reads `.mtx` files as MatrixMarket and anything else as CSV.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mtx") => read_matrix_market(path),
        _ => read_csv(path),
    }
}

/// Writes `.mtx` paths as MatrixMarket and anything else as CSV.
pub fn write_matrix(path: &Path, a: &Matrix, meta: &[(&str, String)]) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mtx") => write_matrix_market(path, a, meta),
        _ => write_csv(path, a, meta),
    }
}

/// SHA-256 (hex) of a value's compact JSON form.
pub fn digest<S: Serialize>(value: &S) -> Result<String> {
    let canonical = serde_json::to_string(value)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)?;
    Ok(())
}

/// JSON file tying an observation's parameters to its two coordinate files
/// (paths relative to the manifest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ObservationManifest {
    #[serde(flatten)]
    pub params: ObservationParams,
    pub values_file: String,
    pub mask_file: String,
}

/// Writes `<stem>.values.mtx`, `<stem>.mask.mtx` and `<stem>.json` into
/// `dir`; returns the manifest path.
pub fn write_observation(dir: &Path, stem: &str, obs: &ObservationSet<f64>) -> Result<PathBuf> {
    let params = obs.params();
    let meta = [
        ("tool", params.tool_version.clone()),
        ("seed", params.seed.to_string()),
    ];
    let values_file = format!("{stem}.values.mtx");
    let mask_file = format!("{stem}.mask.mtx");
    write_matrix_market(&dir.join(&values_file), obs.observed(), &meta)?;
    write_matrix_market(&dir.join(&mask_file), &obs.mask_matrix(), &meta)?;
    let manifest = ObservationManifest {
        params,
        values_file,
        mask_file,
    };
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn read_observation(manifest_path: &Path) -> Result<ObservationSet<f64>> {
    let name = manifest_path.display().to_string();
    let text = read_text(manifest_path)?;
    let manifest: ObservationManifest = serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("{name}:{}:{}", e.line(), e.column()), e.to_string()))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let values = read_matrix_market(&base.join(&manifest.values_file))?;
    let mask_path = base.join(&manifest.mask_file);
    let mask_m = read_matrix_market(&mask_path)?;
    let p = &manifest.params;
    if values.dims() != (p.rows, p.cols) || mask_m.dims() != (p.rows, p.cols) {
        return Err(Error::parse(
            name,
            format!(
                "declared {}x{}, values {}x{}, mask {}x{}",
                p.rows,
                p.cols,
                values.rows(),
                values.cols(),
                mask_m.rows(),
                mask_m.cols()
            ),
        ));
    }
    let mut mask = Vec::with_capacity(mask_m.len());
    for (i, j, &x) in mask_m.entries() {
        if x != 0.0 && x != 1.0 {
            return Err(Error::parse(
                mask_path.display().to_string(),
                format!("mask entry ({}, {}) is {x}, expected 0 or 1", i + 1, j + 1),
            ));
        }
        mask.push(x == 1.0);
    }
    let noise: NoiseKind = p.noise;
    ObservationSet::from_parts(values, mask, p.p, noise, p.sigma, p.seed)
        .map_err(|e| Error::parse(name, e.to_string()))
}
