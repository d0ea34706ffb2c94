//! Machine-readable outputs: CSV traces with fixed float formatting and
//! JSON verification reports. Formatting is pinned (17 significant digits,
//! '.' decimal, lexicographic row order fixed by the pipelines) so that
//! identical runs produce bitwise identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use greeneq_core::verify::CheckReport;

/// 17 significant digits, scientific notation.
pub fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// One long-format series for plotting: `(series, x, value)` rows.
pub struct PlotSeries {
    pub name: String,
    pub rows: Vec<(f64, f64)>,
}

pub fn write_csv(
    dir: &Path,
    file: &str,
    header: &str,
    rows: &[Vec<String>],
) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(file);
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(&path, out)?;
    Ok(path)
}

/// Long-format plot data: `series,x,value`.
pub fn emit_plotdata(dir: &Path, file: &str, series: &[PlotSeries]) -> std::io::Result<PathBuf> {
    let rows: Vec<Vec<String>> = series
        .iter()
        .flat_map(|s| {
            s.rows
                .iter()
                .map(move |&(x, v)| vec![s.name.clone(), fmt_f(x), fmt_f(v)])
        })
        .collect();
    write_csv(dir, file, "series,n_or_r,value", &rows)
}

pub fn write_reports(dir: &Path, file: &str, reports: &[CheckReport]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(file);
    let mut f = fs::File::create(&path)?;
    let json = serde_json::to_string_pretty(reports).expect("reports serialize");
    f.write_all(json.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(path)
}

/// Write any serializable artifact as pretty JSON.
pub fn write_json<T: serde::Serialize>(
    dir: &Path,
    file: &str,
    value: &T,
) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(file);
    let mut f = fs::File::create(&path)?;
    let json = serde_json::to_string_pretty(value).expect("artifact serializes");
    f.write_all(json.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(path)
}
