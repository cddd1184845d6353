//! Deterministic artifact emission: CSV (RFC-4180, '.' decimal separator,
//! 17 significant digits for lossless f64 round-trips), flat JSON metadata,
//! and minimal SVG line charts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Format a float with 17 significant digits (1 leading + 16 after the
/// point in scientific notation); round-trips any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    format!("{v:.16e}")
}

/// Quote a CSV field when RFC-4180 requires it.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A CSV value: text or a float rendered via [`fmt_f64`].
pub enum Cell {
    Text(String),
    Num(f64),
    Int(i64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

fn render_cell(c: &Cell) -> String {
    match c {
        Cell::Text(s) => csv_field(s),
        Cell::Num(v) => fmt_f64(*v),
        Cell::Int(v) => v.to_string(),
    }
}

/// Write a CSV file with a header row.
pub fn write_csv(
    path: impl AsRef<Path>,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<Cell>>,
) -> io::Result<PathBuf> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(render_cell).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

/// Flat JSON object with deterministic key order.
pub fn write_flat_json(
    path: impl AsRef<Path>,
    entries: &[(&str, Cell)],
) -> io::Result<PathBuf> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = String::from("{\n");
    for (i, (k, v)) in entries.iter().enumerate() {
        let rendered = match v {
            Cell::Text(s) => format!("\"{}\"", s.replace('"', "\\\"")),
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(x) => x.to_string(),
        };
        let comma = if i + 1 < entries.len() { "," } else { "" };
        let _ = writeln!(text, "  \"{k}\": {rendered}{comma}");
    }
    text.push_str("}\n");
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

/// One named series for a line chart.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

const CHART_COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Minimal SVG line chart; log-scale y when `log_y` (non-positive points
/// are skipped there).
pub fn write_line_chart(
    path: impl AsRef<Path>,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
    log_y: bool,
) -> io::Result<PathBuf> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let (w, h, ml, mb, mt, mr) = (720.0, 480.0, 70.0, 50.0, 40.0, 20.0);
    let transform = |y: f64| if log_y { y.log10() } else { y };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for (x, y) in &s.points {
            if log_y && *y <= 0.0 {
                continue;
            }
            xs.push(*x);
            ys.push(transform(*y));
        }
    }
    if xs.is_empty() {
        xs = vec![0.0, 1.0];
        ys = vec![0.0, 1.0];
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| ml + (x - x0) / (x1 - x0).max(1e-300) * (w - ml - mr);
    let py = |y: f64| h - mb - (transform(y) - y0) / (y1 - y0).max(1e-300) * (h - mb - mt);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"22\" font-family=\"monospace\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        w / 2.0,
        title
    );
    // axes
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        h - mb,
        w - mr,
        h - mb
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>",
        h - mb
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        (w + ml - mr) / 2.0,
        h - 12.0,
        x_label
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}{}</text>",
        (h - mb + mt) / 2.0,
        (h - mb + mt) / 2.0,
        y_label,
        if log_y { " (log10)" } else { "" }
    );
    // axis ticks
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{:.3}</text>",
            ml + (w - ml - mr) * i as f64 / 4.0,
            h - mb + 16.0,
            fx
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">{:.3}</text>",
            ml - 6.0,
            h - mb - (h - mb - mt) * i as f64 / 4.0 + 4.0,
            fy
        );
    }
    for (si, s) in series.iter().enumerate() {
        let color = CHART_COLORS[si % CHART_COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(_, y)| !log_y || *y > 0.0)
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            pts.join(" "),
            color
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" fill=\"{}\">{}</text>",
            w - mr - 150.0,
            mt + 16.0 * si as f64 + 10.0,
            color,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(path.to_path_buf())
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
