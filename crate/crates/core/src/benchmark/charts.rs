//! SVG charts of a results table. Output is a pure function of the table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::aggregate::Table;
use super::write_atomic;
use crate::{Error, Result};

pub const DISTRIBUTION_CHART: &str = "distribution.svg";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

/// Quantile with linear interpolation between order statistics
/// (Hyndman and Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Evenly spaced "nice" tick values (1, 2 or 5 times a power of ten)
/// covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).floor() as i64;
    let last = (hi / step).ceil() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

/// Jitter in `[-0.5, 0.5)` derived from the job index only.
fn jitter(key: usize) -> f64 {
    let mut z = (key as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(body, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            body,
            r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        Self { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}"/>"#,
            fmt_num(x1),
            fmt_num(y1),
            fmt_num(x2),
            fmt_num(y2)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
            fmt_num(x),
            fmt_num(y),
            escape(s)
        );
    }

    fn point(&mut self, x: f64, y: f64) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{}" cy="{}" r="3" fill="steelblue" fill-opacity="0.7"/>"#,
            fmt_num(x),
            fmt_num(y)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            fmt_num(x),
            fmt_num(y),
            fmt_num(w),
            fmt_num(h)
        );
    }

    fn y_axis(&mut self, ticks: &[f64], map: impl Fn(f64) -> f64, label: &str) {
        self.line(LEFT, TOP, LEFT, HEIGHT - BOTTOM, "black");
        for &t in ticks {
            let y = map(t);
            self.line(LEFT - 4.0, y, LEFT, y, "black");
            self.line(LEFT, y, WIDTH - RIGHT, y, "#e0e0e0");
            self.text(LEFT - 6.0, y + 4.0, "end", &fmt_num(t));
        }
        let _ = writeln!(
            self.body,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            fmt_num(HEIGHT / 2.0),
            fmt_num(HEIGHT / 2.0),
            escape(label)
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn accuracy_y(a: f64) -> f64 {
    HEIGHT - BOTTOM - a.clamp(0.0, 1.0) * (HEIGHT - BOTTOM - TOP)
}

fn accuracy_ticks() -> Vec<f64> {
    (0..=5).map(|i| i as f64 * 0.2).collect()
}

/// Test accuracy of every successful run, one column per method, with a
/// quartile box for methods with at least two runs.
pub fn distribution_svg(table: &Table) -> Result<String> {
    let mut by_method: IndexMap<&str, Vec<(usize, f64)>> = IndexMap::new();
    for r in &table.rows {
        by_method.entry(r.method.as_str()).or_default();
        if let (true, Some(a)) = (r.ok, r.test_accuracy) {
            by_method[r.method.as_str()].push((r.job_index, a));
        }
    }
    if by_method.values().all(Vec::is_empty) {
        return Err(Error::InvalidConfig("no successful runs".into()));
    }
    let mut c = Canvas::new("test accuracy by method");
    c.y_axis(&accuracy_ticks(), accuracy_y, "test accuracy");
    c.line(LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, HEIGHT - BOTTOM, "black");
    let slot = (WIDTH - LEFT - RIGHT) / by_method.len() as f64;
    for (i, (method, points)) in by_method.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        c.text(cx, HEIGHT - BOTTOM + 16.0, "middle", method);
        c.text(cx, HEIGHT - BOTTOM + 30.0, "middle", &format!("n={}", points.len()));
        let mut sorted: Vec<f64> = points.iter().map(|p| p.1).collect();
        sorted.sort_by(f64::total_cmp);
        if sorted.len() >= 2 {
            let half = (slot * 0.3).min(40.0);
            let (q1, med, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75));
            c.rect(cx - half, accuracy_y(q3), 2.0 * half, accuracy_y(q1) - accuracy_y(q3));
            c.line(cx - half, accuracy_y(med), cx + half, accuracy_y(med), "black");
        }
        for &(job, a) in points {
            c.point(cx + jitter(job) * slot * 0.4, accuracy_y(a));
        }
    }
    Ok(c.finish())
}

/// Test accuracy against one parameter column of one method. Returns
/// `None` when the method has no successful run with that parameter.
pub fn scatter_svg(table: &Table, method: &str, param: &str) -> Result<Option<String>> {
    let col = table
        .param_columns
        .iter()
        .position(|c| c == param)
        .ok_or_else(|| Error::key("param", format!("no column `{param}`")))?;
    let points: Vec<(usize, &str, f64)> = table
        .rows
        .iter()
        .filter(|r| r.ok && r.method == method && !r.params[col].is_empty())
        .filter_map(|r| r.test_accuracy.map(|a| (r.job_index, r.params[col].as_str(), a)))
        .collect();
    if points.is_empty() {
        return Ok(None);
    }
    let numeric: Option<Vec<f64>> = points.iter().map(|p| p.1.parse::<f64>().ok()).collect();
    let plot_w = WIDTH - LEFT - RIGHT;
    let mut c = Canvas::new(&format!("{method}: test accuracy vs {param}"));
    c.y_axis(&accuracy_ticks(), accuracy_y, "test accuracy");
    c.line(LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, HEIGHT - BOTTOM, "black");
    c.text(LEFT + plot_w / 2.0, HEIGHT - 12.0, "middle", param);
    let xs: Vec<f64> = match numeric {
        Some(vals) => {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ticks = nice_ticks(lo, hi, 5);
            let (t0, t1) = (ticks[0], ticks[ticks.len() - 1]);
            let map = |v: f64| LEFT + 10.0 + (v - t0) / (t1 - t0) * (plot_w - 20.0);
            for &t in &ticks {
                c.line(map(t), HEIGHT - BOTTOM, map(t), HEIGHT - BOTTOM + 4.0, "black");
                c.text(map(t), HEIGHT - BOTTOM + 16.0, "middle", &fmt_num(t));
            }
            vals.into_iter().map(map).collect()
        }
        None => {
            let mut cats: Vec<&str> = Vec::new();
            for p in &points {
                if !cats.contains(&p.1) {
                    cats.push(p.1);
                }
            }
            let slot = plot_w / cats.len() as f64;
            for (i, cat) in cats.iter().enumerate() {
                c.text(LEFT + slot * (i as f64 + 0.5), HEIGHT - BOTTOM + 16.0, "middle", cat);
            }
            points
                .iter()
                .map(|p| {
                    let i = cats.iter().position(|c| *c == p.1).unwrap_or(0);
                    LEFT + slot * (i as f64 + 0.5) + jitter(p.0) * slot * 0.4
                })
                .collect()
        }
    };
    for (x, p) in xs.iter().zip(&points) {
        c.point(*x, accuracy_y(p.2));
    }
    Ok(Some(c.finish()))
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `distribution.svg` and one `scatter_<method>_<param>.svg` per
/// method and parameter with data. Errors when no run succeeded.
pub fn render_charts(table: &Table, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let path = out_dir.join(DISTRIBUTION_CHART);
    write_atomic(&path, distribution_svg(table)?.as_bytes())?;
    written.push(path);
    let mut methods: Vec<&str> = Vec::new();
    for r in &table.rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    for method in methods {
        for param in &table.param_columns {
            if let Some(svg) = scatter_svg(table, method, param)? {
                let path = out_dir.join(format!("scatter_{}_{}.svg", file_safe(method), file_safe(param)));
                write_atomic(&path, svg.as_bytes())?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
