//! Convergence reports: CSV tables and self-contained SVG line charts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::iteration::{num, IterationLog};
use crate::model::FeedbackGain;

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939",
];

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub width: f64,
    pub opacity: f64,
    pub dashed: bool,
    /// CSS class written on the `<polyline>`.
    pub class: &'static str,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, color: &str) -> Self {
        Series {
            label: label.into(),
            points,
            color: color.to_string(),
            width: 1.5,
            opacity: 1.0,
            dashed: false,
            class: "series",
        }
    }
}

/// Minimal line chart with linear x and linear or log10 y.
#[derive(Clone, Debug)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
    pub width: f64,
    pub height: f64,
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str, log_y: bool) -> Self {
        LineChart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y,
            series: Vec::new(),
            width: 720.0,
            height: 440.0,
        }
    }

    fn transform_y(&self, y: f64) -> Option<f64> {
        if !y.is_finite() {
            return None;
        }
        if self.log_y {
            (y > 0.0).then(|| y.log10())
        } else {
            Some(y)
        }
    }

    fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let mut pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter_map(|&(x, y)| self.transform_y(y).map(|ty| (x, ty)))
            .peekable();
        pts.peek()?;
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if self.log_y {
            y0 = y0.floor();
            y1 = y1.ceil().max(y0 + 1.0);
        } else if y1 - y0 < 1e-12 {
            let pad = y0.abs().max(1.0) * 0.1;
            y0 -= pad;
            y1 += pad;
        } else {
            let pad = (y1 - y0) * 0.05;
            y0 -= pad;
            y1 += pad;
        }
        Some((x0, x1, y0, y1))
    }

    /// SVG document; `None` when no series has a drawable point.
    pub fn render(&self) -> Option<String> {
        let (x0, x1, y0, y1) = self.bounds()?;
        let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
        let pw = self.width - left - right;
        let ph = self.height - top - bottom;
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = self.width,
            h = self.height
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            left + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{left}" y="{top}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##
        );

        for (v, label) in self.y_ticks(y0, y1) {
            let y = sy(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.1}" y="{:.2}" text-anchor="end">{label}</text>"##,
                left + pw,
                left - 6.0,
                y + 4.0
            );
        }
        for v in x_ticks(x0, x1) {
            let x = sx(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                top + ph,
                top + ph + 5.0,
                top + ph + 19.0,
                trim_number(v)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            left + pw / 2.0,
            self.height - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            top + ph / 2.0,
            top + ph / 2.0,
            escape(&self.y_label)
        );

        let mut legend_row = 0;
        for s in &self.series {
            let pts: Vec<String> = s
                .points
                .iter()
                .filter_map(|&(x, y)| self.transform_y(y).map(|ty| format!("{:.2},{:.2}", sx(x), sy(ty))))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<polyline class="{}" fill="none" stroke="{}" stroke-width="{}" stroke-opacity="{}"{dash} points="{}"/>"#,
                s.class,
                s.color,
                s.width,
                s.opacity,
                pts.join(" ")
            );
            if pts.len() == 1 {
                let (cx, cy) = pts[0].split_once(',').unwrap_or(("0", "0"));
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{}" fill-opacity="{}"/>"#,
                    s.color, s.opacity
                );
            }
            if !s.label.is_empty() {
                let ly = top + 10.0 + 16.0 * legend_row as f64;
                let lx = left + pw + 12.0;
                let _ = writeln!(
                    svg,
                    r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                    lx + 20.0,
                    s.color,
                    lx + 26.0,
                    ly + 4.0,
                    escape(&s.label)
                );
                legend_row += 1;
            }
        }
        svg.push_str("</svg>\n");
        Some(svg)
    }

    fn y_ticks(&self, y0: f64, y1: f64) -> Vec<(f64, String)> {
        if self.log_y {
            let (lo, hi) = (y0 as i32, y1 as i32);
            let step = ((hi - lo) / 8).max(1);
            (lo..=hi)
                .step_by(step as usize)
                .map(|e| (e as f64, format!("1e{e}")))
                .collect()
        } else {
            nice_ticks(y0, y1).into_iter().map(|v| (v, trim_number(v))).collect()
        }
    }
}

fn x_ticks(x0: f64, x1: f64) -> Vec<f64> {
    nice_ticks(x0, x1)
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|k| k * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut v = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while v <= hi + step * 1e-9 {
        out.push(if v.abs() < step * 1e-9 { 0.0 } else { v });
        v += step;
    }
    out
}

fn trim_number(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

type Metric = fn(&crate::iteration::IterationEntry) -> Option<f64>;

/// Files written by [`emit_convergence_report`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportFiles {
    pub csv: Vec<PathBuf>,
    pub svg: Vec<PathBuf>,
}

/// Per-iteration statistic over experiments. Iteration `k` uses the `k`-th
/// entry of every log that has one.
fn across<F: Fn(&crate::iteration::IterationEntry) -> Option<f64>>(logs: &[IterationLog], k: usize, get: F) -> Vec<f64> {
    logs.iter()
        .filter_map(|l| l.entries.get(k))
        .filter_map(get)
        .collect()
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-iteration mean of `rel_err_F` over experiments.
pub fn mean_rel_err_f(logs: &[IterationLog]) -> Vec<f64> {
    let len = logs.iter().map(|l| l.len()).max().unwrap_or(0);
    (0..len)
        .filter_map(|k| mean(&across(logs, k, |e| e.rel_err_f)))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes `learn_log.csv` (first experiment), and with several experiments
/// `experiments.csv` and `summary.csv`; then `convergence.svg` and
/// `gain_elements.svg` when there is anything to draw.
pub fn emit_convergence_report(
    logs: &[IterationLog],
    reference: Option<&FeedbackGain>,
    out_dir: &Path,
    timing: bool,
) -> Result<ReportFiles> {
    fs::create_dir_all(out_dir)?;
    let mut files = ReportFiles::default();
    let empty = IterationLog::default();
    let first = logs.first().unwrap_or(&empty);

    let path = out_dir.join("learn_log.csv");
    let mut buf = Vec::new();
    first.write_learning_csv(&mut buf, timing)?;
    fs::write(&path, buf)?;
    files.csv.push(path);

    if logs.len() > 1 {
        let mut long = String::from("experiment,iter,rel_err_F,rel_err_X,step_norm,Stil_min_eig\n");
        for (e, log) in logs.iter().enumerate() {
            for entry in &log.entries {
                let _ = writeln!(
                    long,
                    "{e},{},{},{},{},{}",
                    entry.iter + 1,
                    opt(entry.rel_err_f),
                    opt(entry.rel_err_x),
                    num(entry.step_norm),
                    opt(entry.stil_min_eig)
                );
            }
        }
        let path = out_dir.join("experiments.csv");
        fs::write(&path, long)?;
        files.csv.push(path);

        let mut summary = String::from(
            "iter,mean_rel_err_F,min_rel_err_F,max_rel_err_F,mean_rel_err_X,min_rel_err_X,max_rel_err_X\n",
        );
        let len = logs.iter().map(|l| l.len()).max().unwrap_or(0);
        for k in 0..len {
            let f = across(logs, k, |e| e.rel_err_f);
            let x = across(logs, k, |e| e.rel_err_x);
            let stats = |v: &[f64]| {
                let lo = v.iter().copied().reduce(f64::min);
                let hi = v.iter().copied().reduce(f64::max);
                format!("{},{},{}", opt(mean(v)), opt(lo), opt(hi))
            };
            let _ = writeln!(summary, "{},{},{}", k + 1, stats(&f), stats(&x));
        }
        let path = out_dir.join("summary.csv");
        fs::write(&path, summary)?;
        files.csv.push(path);
    }

    if logs.iter().all(|l| l.is_empty()) {
        return Ok(files);
    }

    if let Some(svg) = error_chart(logs).render() {
        let path = out_dir.join("convergence.svg");
        fs::write(&path, svg)?;
        files.svg.push(path);
    }
    if let Some(svg) = gain_chart(logs, reference).render() {
        let path = out_dir.join("gain_elements.svg");
        fs::write(&path, svg)?;
        files.svg.push(path);
    }
    Ok(files)
}

/// Relative errors against iteration, log scale. Individual experiments are
/// faint traces; the mean is drawn on top.
pub fn error_chart(logs: &[IterationLog]) -> LineChart {
    let mut chart = LineChart::new("Relative error of learned iterates", "iteration", "relative error", true);
    let metrics: [(&str, &str, Metric); 2] = [
        ("F", PALETTE[0], |e| e.rel_err_f),
        ("X", PALETTE[1], |e| e.rel_err_x),
    ];
    for (name, color, get) in metrics {
        if logs.len() > 1 {
            for log in logs {
                let pts = log
                    .entries
                    .iter()
                    .filter_map(|e| get(e).map(|v| ((e.iter + 1) as f64, v)))
                    .collect();
                let mut s = Series::new("", pts, color);
                s.opacity = 0.25;
                s.width = 1.0;
                s.class = "trial";
                chart.series.push(s);
            }
        }
        let len = logs.iter().map(|l| l.len()).max().unwrap_or(0);
        let pts = (0..len)
            .filter_map(|k| mean(&across(logs, k, get)).map(|m| ((k + 1) as f64, m)))
            .collect();
        let label = if logs.len() > 1 { format!("mean ‖{name}ⁱ-{name}*‖/‖{name}*‖") } else { format!("‖{name}ⁱ-{name}*‖/‖{name}*‖") };
        let mut s = Series::new(label, pts, color);
        s.width = 2.0;
        s.dashed = logs.len() > 1;
        s.class = "mean";
        chart.series.push(s);
    }
    chart
}

/// Element trajectories of the learned gain (mean over experiments), with
/// the reference values as dashed horizontal lines.
pub fn gain_chart(logs: &[IterationLog], reference: Option<&FeedbackGain>) -> LineChart {
    let mut chart = LineChart::new("Learned gain elements", "iteration", "gain entry", false);
    let len = logs.iter().map(|l| l.len()).max().unwrap_or(0);
    let Some(shape) = logs.iter().find_map(|l| l.entries.first()).map(|e| e.next_gain.shape()) else {
        return chart;
    };
    let (rows, cols) = shape;
    for r in 0..rows {
        for c in 0..cols {
            let color = PALETTE[(r * cols + c) % PALETTE.len()];
            let pts = (0..len)
                .filter_map(|k| mean(&across(logs, k, |e| Some(e.next_gain[(r, c)]))).map(|m| ((k + 1) as f64, m)))
                .collect();
            let mut s = Series::new(format!("F[{},{}]", r + 1, c + 1), pts, color);
            s.class = "trace";
            chart.series.push(s);
            if let Some(f) = reference {
                if f.matrix().shape() == shape {
                    let v = f.matrix()[(r, c)];
                    let mut s = Series::new("", vec![(1.0, v), (len.max(1) as f64, v)], color);
                    s.dashed = true;
                    s.opacity = 0.6;
                    s.width = 1.0;
                    s.class = "reference";
                    chart.series.push(s);
                }
            }
        }
    }
    chart
}
