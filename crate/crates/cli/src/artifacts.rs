//! Trace CSV, SVG plots, and JSON output.

use std::fs;
use std::path::Path;

use geofb_core::solver::TraceMeta;
use geofb_core::{Error, Result, Trace};
use serde::Serialize;

pub const CSV_HEADER: [&str; 6] = ["n", "gap", "step", "resid", "dist", "support_size"];

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// Trace as CSV: 17 significant digits, empty cells for missing columns.
pub fn trace_to_csv(trace: &Trace) -> Result<String> {
    let sizes = trace.support_sizes();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(io)?;
    for n in 0..trace.len() {
        let dist = trace.dist.as_ref().map(|d| fmt_f(d[n])).unwrap_or_default();
        let supp = sizes.as_ref().map(|s| s[n].to_string()).unwrap_or_default();
        w.write_record([n.to_string(), fmt_f(trace.gap[n]), fmt_f(trace.step[n]), fmt_f(trace.resid[n]), dist, supp])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

fn parse_f(s: &str, row: usize, col: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Config(format!("row {row}: bad {col} value {s:?}")))
}

/// Reads a trace written by [`trace_to_csv`] or by an external solver using
/// the same header. Rows must be numbered `0, 1, 2, ...`.
pub fn trace_from_csv(text: &str) -> Result<Trace> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Config(format!("csv header: {e}")))?.clone();
    if header.iter().map(str::trim).collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Config(format!("expected header {}", CSV_HEADER.join(","))));
    }
    let (mut gap, mut step, mut resid, mut dist, mut sizes) = (vec![], vec![], vec![], vec![], vec![]);
    let (mut has_dist, mut has_supp) = (true, true);
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("csv row {row}: {e}")))?;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Config(format!("row {row}: expected 6 fields")));
        }
        let n: usize = rec[0].trim().parse().map_err(|_| Error::Config(format!("row {row}: bad index")))?;
        if n != row {
            return Err(Error::Config(format!("row {row}: index {n} out of sequence")));
        }
        gap.push(parse_f(&rec[1], row, "gap")?);
        step.push(parse_f(&rec[2], row, "step")?);
        resid.push(parse_f(&rec[3], row, "resid")?);
        if rec[4].trim().is_empty() {
            has_dist = false;
        } else {
            dist.push(parse_f(&rec[4], row, "dist")?);
        }
        if rec[5].trim().is_empty() {
            has_supp = false;
        } else {
            sizes.push(rec[5].trim().parse::<usize>().map_err(|_| Error::Config(format!("row {row}: bad support size")))?);
        }
    }
    if gap.is_empty() {
        return Err(Error::Config("trace has no rows".into()));
    }
    let support = (has_supp && sizes.len() == gap.len()).then(|| sizes.into_iter().map(|s| (0..s).collect()).collect());
    Ok(Trace {
        gap,
        step,
        resid,
        dist: (has_dist && !dist.is_empty()).then_some(dist),
        support,
        iterates: None,
        last_iterate: vec![],
        meta: TraceMeta { lambda: f64::NAN, lipschitz: f64::NAN, problem_hash: "external".into(), seed: None },
    })
}

/// Log-spaced indices `1..=n_last`, at most `max_points` of them.
fn plot_indices(n_last: usize, max_points: usize) -> Vec<usize> {
    if n_last <= max_points {
        return (1..=n_last).collect();
    }
    let ln = (n_last as f64).ln();
    let mut out: Vec<usize> = (0..max_points)
        .map(|i| (ln * i as f64 / (max_points - 1) as f64).exp().round() as usize)
        .collect();
    out.dedup();
    out
}

/// Log-log plot of the gap with an optional dashed envelope overlay.
pub fn plot_svg(title: &str, gap: &[f64], envelope: Option<&[f64]>) -> String {
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let idx = plot_indices(gap.len().saturating_sub(1), 800);
    let pos = |v: f64| v > 0.0 && v.is_finite();
    let mut ys: Vec<f64> = idx.iter().map(|&n| gap[n]).filter(|v| pos(*v)).collect();
    if let Some(e) = envelope {
        ys.extend(idx.iter().filter_map(|&n| e.get(n).copied()).filter(|v| pos(*v)));
    }
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{pad}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        escape(title)
    );
    let xmax = (*idx.last().unwrap_or(&1)).max(2) as f64;
    let (ylo, yhi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v.log10()), b.max(v.log10())));
    let (ylo, yhi) = if ylo.is_finite() { (ylo, if yhi > ylo { yhi } else { ylo + 1.0 }) } else { (0.0, 1.0) };
    let px = |n: usize| pad + (n as f64).log10() / xmax.log10() * (w - 2.0 * pad);
    let py = |v: f64| h - pad - (v.log10() - ylo) / (yhi - ylo) * (h - 2.0 * pad);
    svg.push_str(&format!(
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 2.0 * pad,
        h - 2.0 * pad
    ));
    svg.push_str(&format!(
        "<text x=\"{pad}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">n = 1 .. {xmax}, gap 1e{ylo:.1} .. 1e{yhi:.1} (log-log)</text>\n",
        h - 15.0
    ));
    let line = |series: &dyn Fn(usize) -> Option<f64>, style: &str| {
        let pts: Vec<String> = idx
            .iter()
            .filter_map(|&n| series(n).filter(|v| pos(*v)).map(|v| format!("{:.2},{:.2}", px(n), py(v))))
            .collect();
        format!("<polyline fill=\"none\" {style} points=\"{}\"/>\n", pts.join(" "))
    };
    svg.push_str(&line(&|n| gap.get(n).copied(), "stroke=\"#1f4e9c\" stroke-width=\"1.5\""));
    if let Some(e) = envelope {
        svg.push_str(&line(&|n| e.get(n).copied(), "stroke=\"#b33\" stroke-width=\"1.2\" stroke-dasharray=\"6 4\""));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn to_json_pretty<S: Serialize>(v: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Config(format!("json: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
