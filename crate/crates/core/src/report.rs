//! Output artifacts: report CSV, calibration JSON, console table and the
//! accuracy-vs-layer SVG chart.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalReport, LayerCalibration, ReportRow, ShareStats};
use crate::geometry::StandardizeMode;
use crate::transforms::SettingKind;

/// Reference rows printed under every table.
pub const HUMAN_ACCURACY: f64 = 80.0;
pub const RANDOM_ACCURACY: f64 = 50.0;

pub const CSV_HEADER: [&str; 4] = ["layer", "acc_all", "acc_noun", "acc_verb"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Full-precision CSV; absent subgroups are empty fields.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut write = || -> std::result::Result<(), csv::Error> {
        w.write_record(CSV_HEADER)?;
        for r in rows {
            w.write_record([
                r.layer.to_string(),
                r.accuracy_all.to_string(),
                opt(r.accuracy_noun),
                opt(r.accuracy_verb),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().expect("writing CSV to memory");
    String::from_utf8(w.into_inner().expect("flushed")).expect("CSV is UTF-8")
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::format(Some(1), e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::format(
            Some(1),
            format!("unexpected CSV header {:?}", header),
        ));
    }
    let num = |s: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>()
            .map(Some)
            .map_err(|_| Error::format(Some(line), format!("not a number: {s:?}")))
    };
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::format(Some(line), e.to_string()))?;
            let layer = rec[0]
                .parse::<usize>()
                .map_err(|_| Error::format(Some(line), format!("bad layer {:?}", &rec[0])))?;
            Ok(ReportRow {
                layer,
                accuracy_all: num(&rec[1], line)?
                    .ok_or_else(|| Error::format(Some(line), "missing acc_all"))?,
                accuracy_noun: num(&rec[2], line)?,
                accuracy_verb: num(&rec[3], line)?,
            })
        })
        .collect()
}

/// Per-layer thresholds as written by `calibrate` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub model_name: String,
    pub setting: SettingKind,
    pub standardized: bool,
    pub standardize_mode: StandardizeMode,
    pub share_stats: ShareStats,
    pub layers: Vec<LayerCalibration>,
}

impl CalibrationFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("calibration serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::format(Some(e.line()), format!("calibration JSON: {e}")))
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into())
}

/// Human-readable table with one-decimal accuracies.
pub fn format_table(report: &EvalReport, calibrations: Option<&[LayerCalibration]>) -> String {
    let mut out = String::new();
    let dagger = if report.anisotropy_removed {
        ""
    } else {
        " (no anisotropy removal)"
    };
    let _ = writeln!(out, "setting: {}{dagger}", report.setting);
    let _ = writeln!(
        out,
        "{:>5}  {:>6}  {:>6}  {:>6}  {:>6}  {:>7}",
        "layer", "all", "noun", "verb", "gamma", "dev"
    );
    for row in &report.rows {
        let cal = calibrations.and_then(|c| c.get(row.layer));
        let star = if row.layer == report.best_layer {
            " *"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{:>5}  {:>6}  {:>6}  {:>6}  {:>6}  {:>7}{star}",
            row.layer,
            format!("{:.1}", row.accuracy_all),
            cell(row.accuracy_noun),
            cell(row.accuracy_verb),
            cal.map(|c| format!("{:.2}", c.gamma))
                .unwrap_or_else(|| "-".into()),
            cal.map(|c| format!("{:.1}", c.dev_accuracy))
                .unwrap_or_else(|| "-".into()),
        );
    }
    let _ = writeln!(
        out,
        "best layer (test): {} at {:.1}; best layer (dev): {}",
        report.best_layer, report.best_accuracy, report.best_dev_layer
    );
    let _ = writeln!(
        out,
        "reference: human {HUMAN_ACCURACY:.1}, random {RANDOM_ACCURACY:.1}"
    );
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub rows: Vec<ReportRow>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn star_points(cx: f64, cy: f64, outer: f64) -> String {
    let inner = outer * 0.4;
    (0..10)
        .map(|k| {
            let r = if k % 2 == 0 { outer } else { inner };
            let angle = std::f64::consts::PI * (k as f64) / 5.0 - std::f64::consts::FRAC_PI_2;
            format!("{:.2},{:.2}", cx + r * angle.cos(), cy + r * angle.sin())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Line chart of overall accuracy against layer index, one polyline per
/// series, with a star on each series' best layer.
pub fn render_svg(series: &[Series], title: &str) -> String {
    let max_layer = series
        .iter()
        .flat_map(|s| s.rows.iter().map(|r| r.layer))
        .max()
        .unwrap_or(0)
        .max(1);
    let (lo, hi) = series
        .iter()
        .flat_map(|s| s.rows.iter().map(|r| r.accuracy_all))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    let (y_min, y_max) = if lo.is_finite() {
        (
            ((lo - 2.0) / 10.0).floor().max(0.0) * 10.0,
            ((hi + 2.0) / 10.0).ceil().min(10.0) * 10.0,
        )
    } else {
        (0.0, 100.0)
    };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |layer: usize| LEFT + plot_w * layer as f64 / max_layer as f64;
    let y = |acc: f64| TOP + plot_h * (1.0 - (acc - y_min) / (y_max - y_min));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );

    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h
    );
    for layer in (0..=max_layer).step_by(4) {
        let px = x(layer);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{layer}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 18.0
        );
    }
    let mut tick = y_min;
    while tick <= y_max + 1e-9 {
        let py = y(tick);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{tick:.0}</text>"##,
            LEFT,
            LEFT + plot_w,
            LEFT - 6.0,
            py + 4.0
        );
        tick += 10.0;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">layer</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">accuracy (%)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points = s
            .rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.layer), y(r.accuracy_all)))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"/>"#
        );
        let best = s.rows.iter().fold(None::<&ReportRow>, |b, r| match b {
            Some(b) if r.accuracy_all <= b.accuracy_all => Some(b),
            _ => Some(r),
        });
        if let Some(b) = best {
            let _ = writeln!(
                svg,
                r#"<polygon class="best" fill="{color}" stroke="black" stroke-width="0.5" points="{}"/>"#,
                star_points(x(b.layer), y(b.accuracy_all), 9.0)
            );
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
