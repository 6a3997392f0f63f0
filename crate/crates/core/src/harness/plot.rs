//! Hand-written SVG plots: one WER-vs-saving curve per criterion and an
//! exit-layer histogram per report row.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::report::ReportRow;
use crate::error::{Error, Result};

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps `[lo, hi]` onto `[a, b]`; a degenerate range maps to the middle.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = ((hi - lo) * 0.1).max(0.5);
    (lo - pad, hi + pad)
}

/// WER (%) against op-count saving (%) for one criterion's rows, with the
/// baseline as a square marker.
pub fn tradeoff_svg(kind: &str, rows: &[&ReportRow], baseline: Option<&ReportRow>) -> String {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (100.0 * r.op_saving, 100.0 * r.wer)).collect();
    let all = pts.iter().copied().chain(baseline.map(|b| (100.0 * b.op_saving, 100.0 * b.wer)));
    let (xs, ys): (Vec<f64>, Vec<f64>) = all.unzip();
    let (x0, x1) = padded_range(xs.into_iter());
    let (y0, y1) = padded_range(ys.into_iter());
    let px = |x: f64| scale(x, x0, x1, MARGIN, WIDTH - MARGIN / 2.0);
    let py = |y: f64| scale(y, y0, y1, HEIGHT - MARGIN, MARGIN / 2.0);

    let mut s = String::new();
    svg_open(&mut s, WIDTH, HEIGHT);
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}" stroke="black"/><line x1="{m}" y1="{t:.2}" x2="{m}" y2="{b:.2}" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN / 2.0,
        t = MARGIN / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">op-count saving (%)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">WER (%)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="16" text-anchor="middle">{} criterion</text>"#, WIDTH / 2.0, escape(kind));
    for v in [x0, x1] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.1}</text>"#, px(v), HEIGHT - MARGIN + 14.0);
    }
    for v in [y0, y1] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, MARGIN - 4.0, py(v) + 4.0);
    }
    if pts.len() > 1 {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, path.join(" "));
    }
    for (r, &(x, y)) in rows.iter().zip(&pts) {
        let t = r.threshold.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="steelblue"><title>{} {t}</title></circle>"#,
            px(x),
            py(y),
            escape(kind)
        );
    }
    if let Some(b) = baseline {
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="7" height="7" fill="firebrick"><title>baseline</title></rect>"#,
            px(100.0 * b.op_saving) - 3.5,
            py(100.0 * b.wer) - 3.5
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One lane per row: bar heights are the share of utterances answered at each
/// layer.
pub fn histogram_svg(rows: &[&ReportRow]) -> Result<String> {
    let hists = rows.iter().map(|r| r.histogram()).collect::<Result<Vec<_>>>()?;
    let max_layer = hists.iter().flatten().map(|&(l, _)| l).max().unwrap_or(1);
    let lane = 48.0;
    let label_w = 130.0;
    let height = MARGIN + lane * rows.len() as f64;
    let bar_w = (WIDTH - label_w - 16.0) / max_layer as f64;

    let mut s = String::new();
    svg_open(&mut s, WIDTH, height);
    let _ = writeln!(s, r#"<text x="{:.2}" y="16" text-anchor="middle">exit layer share</text>"#, WIDTH / 2.0);
    for layer in 1..=max_layer {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="34" text-anchor="middle">{layer}</text>"#,
            label_w + bar_w * (layer as f64 - 0.5)
        );
    }
    for (i, (r, h)) in rows.iter().zip(&hists).enumerate() {
        let top = MARGIN - 8.0 + lane * i as f64;
        let base = top + lane - 8.0;
        let total: usize = h.iter().map(|&(_, n)| n).sum();
        let name = match r.threshold {
            Some(t) => format!("{} {t}", r.criterion),
            None => r.criterion.clone(),
        };
        let _ = writeln!(s, r#"<text x="4" y="{:.2}">{}</text>"#, base - 4.0, escape(&name));
        let _ = writeln!(
            s,
            r#"<line x1="{label_w}" y1="{base:.2}" x2="{:.2}" y2="{base:.2}" stroke="black"/>"#,
            WIDTH - 16.0
        );
        for &(layer, n) in h {
            let frac = n as f64 / total.max(1) as f64;
            let bh = frac * (lane - 12.0);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="seagreen"><title>layer {layer}: {n}</title></rect>"#,
                label_w + bar_w * (layer - 1) as f64 + 2.0,
                base - bh,
                bar_w - 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `tradeoff_<criterion>.svg` for every criterion in `rows` plus
/// `exit_histogram.svg`, returning the paths in that order.
pub fn emit_plots(rows: &[ReportRow], dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.len() < 2 {
        return Err(Error::TooFewRows(rows.len()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let baseline = rows.iter().find(|r| r.is_baseline());
    let mut kinds: Vec<&str> = Vec::new();
    for r in rows.iter().filter(|r| !r.is_baseline()) {
        if !kinds.contains(&r.criterion.as_str()) {
            kinds.push(&r.criterion);
        }
    }
    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for kind in kinds {
        let curve: Vec<&ReportRow> = rows.iter().filter(|r| r.criterion == kind).collect();
        write(format!("tradeoff_{kind}.svg"), tradeoff_svg(kind, &curve, baseline))?;
    }
    let all: Vec<&ReportRow> = rows.iter().collect();
    write("exit_histogram.svg".into(), histogram_svg(&all)?)?;
    Ok(written)
}
