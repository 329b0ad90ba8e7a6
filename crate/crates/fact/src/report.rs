//! records.csv, summary.json and a log-scale MSE-vs-code-length chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fact_core::eval::EvalRecord;
use serde_json::{json, Map, Value};

use crate::io::io_err;
use crate::Error;

pub const CSV_HEADER: &str = "tokenizer,code_length,vocab_size,mse,failure_rate,chunks,seed";

pub fn records_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.tokenizer, r.code_length, r.vocab_size, r.mse, r.failure_rate, r.chunks, r.seed
        );
    }
    out
}

/// The FACT record at the configured operating point, if present.
pub fn operating_point(records: &[EvalRecord], code_length: usize, bits: usize) -> Option<&EvalRecord> {
    records
        .iter()
        .find(|r| r.tokenizer == "fact" && r.code_length == code_length as f64 && r.vocab_size == 1 << bits)
}

pub fn summary(records: &[EvalRecord], code_length: usize, bits: usize, extra: Map<String, Value>) -> Value {
    let mut root = Map::new();
    root.insert(
        "records".into(),
        serde_json::to_value(records).expect("records serialize"),
    );
    root.insert(
        "operating_point".into(),
        match operating_point(records, code_length, bits) {
            Some(r) => json!({
                "tokenizer": r.tokenizer,
                "code_length": code_length,
                "bits": bits,
                "vocab_size": r.vocab_size,
                "mse": serde_json::to_value(r).expect("record")["mse"],
            }),
            None => json!({ "code_length": code_length, "bits": bits, "present": false }),
        },
    );
    root.extend(extra);
    Value::Object(root)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn series_name(tokenizer: &str) -> &str {
    // Budgeted binning variants share one series.
    tokenizer.split('@').next().unwrap_or(tokenizer)
}

/// Log-log scatter with one connected series per tokenizer.
pub fn chart_svg(records: &[EvalRecord]) -> String {
    let (w, h, margin) = (640.0, 420.0, 60.0);
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        if r.mse > 0.0 && r.mse.is_finite() && r.code_length > 0.0 {
            series
                .entry(series_name(&r.tokenizer))
                .or_default()
                .push((r.code_length, r.mse));
        }
    }
    let points: Vec<(f64, f64)> = series.values().flatten().copied().collect();
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min).log10().floor();
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max).log10().ceil();
        if lo.is_finite() && hi.is_finite() {
            (lo, hi.max(lo + 1.0))
        } else {
            (0.0, 1.0)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let px = |x: f64| margin + (x.log10() - x0) / (x1 - x0) * (w - 2.0 * margin);
    let py = |y: f64| h - margin - (y.log10() - y0) / (y1 - y0) * (h - 2.0 * margin);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * margin,
        h - 2.0 * margin
    );
    for e in x0 as i32..=x1 as i32 {
        let x = px(10f64.powi(e));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="gray" stroke-width="0.5"/><text x="{x:.1}" y="{}" text-anchor="middle">1e{e}</text>"#,
            margin,
            h - margin,
            h - margin + 18.0
        );
    }
    for e in y0 as i32..=y1 as i32 {
        let y = py(10f64.powi(e));
        let _ = writeln!(
            s,
            r#"<line x1="{margin}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="gray" stroke-width="0.5"/><text x="{}" y="{:.1}" text-anchor="end">1e{e}</text>"#,
            w - margin,
            margin - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">code length (tokens per chunk)</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">reconstruction MSE (standardized)</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, (name, pts)) in series.iter_mut().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        for &(x, y) in pts.iter() {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        let ly = margin + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly:.1}" fill="{color}">{}</text>"#,
            w - margin - 90.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes records.csv, summary.json and chart.svg into `dir`.
pub fn emit(records: &[EvalRecord], summary: &Value, dir: &Path) -> Result<(), Error> {
    if records.is_empty() {
        return Err(Error::Runtime("no records to report".into()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv = dir.join("records.csv");
    fs::write(&csv, records_csv(records)).map_err(io_err(&csv))?;
    crate::io::write_json(&dir.join("summary.json"), summary)?;
    let svg = dir.join("chart.svg");
    fs::write(&svg, chart_svg(records)).map_err(io_err(&svg))
}
