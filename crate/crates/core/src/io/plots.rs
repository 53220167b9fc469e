use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::results::{Metric, ResultsRow};
use crate::error::{Error, Result};
use crate::experiment::aggregate_seeds;

pub const PLOTS_DIR: &str = "plots";

const PLOT_HEIGHT: f64 = 300.0;
const TOP: f64 = 40.0;
const LEFT: f64 = 70.0;
const BAR_WIDTH: f64 = 24.0;
const GROUP_GAP: f64 = 24.0;
const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

/// One bar of a chart: mean and standard deviation over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Bar {
    pub method: String,
    pub strategy: String,
    pub mean: f64,
    pub std: f64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

/// Bars of one `(dataset, metric)` chart; empty when no row carries the
/// metric.
pub fn chart_bars(rows: &[ResultsRow], dataset: &str, metric: Metric) -> Vec<Bar> {
    let rows: Vec<&ResultsRow> = rows.iter().filter(|r| r.dataset == dataset).collect();
    let methods = first_seen(rows.iter().map(|r| r.method.as_str()));
    let strategies = first_seen(rows.iter().map(|r| r.strategy.as_str()));
    let mut bars = Vec::new();
    for m in &methods {
        for s in &strategies {
            let values = metric.displayed(rows.iter().copied().filter(|r| &r.method == m && &r.strategy == s));
            if let Ok(a) = aggregate_seeds(&values) {
                bars.push(Bar {
                    method: m.clone(),
                    strategy: s.clone(),
                    mean: a.mean,
                    std: a.std,
                });
            }
        }
    }
    bars
}

/// Render a grouped bar chart: methods along the x axis, one colored bar
/// per strategy inside each group, a whisker spanning mean ± std.
pub fn render_svg(title: &str, bars: &[Bar]) -> String {
    let methods = first_seen(bars.iter().map(|b| b.method.as_str()));
    let strategies = first_seen(bars.iter().map(|b| b.strategy.as_str()));
    let group_width = strategies.len() as f64 * BAR_WIDTH + GROUP_GAP;
    let width = LEFT + methods.len() as f64 * group_width + 140.0;
    let height = TOP + PLOT_HEIGHT + 60.0;

    let hi = bars.iter().map(|b| b.mean + b.std).fold(0.0f64, f64::max);
    let lo = bars.iter().map(|b| b.mean - b.std).fold(0.0f64, f64::min);
    let (lo, hi) = if hi - lo > 0.0 { (lo * 1.1, hi * 1.1) } else { (0.0, 1.0) };
    let scale = PLOT_HEIGHT / (hi - lo);
    let y = |v: f64| TOP + (hi - v) * scale;
    let baseline = y(0.0);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" data-scale="{scale:.6}" data-baseline="{baseline:.4}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    )
    .unwrap();
    for i in 0..=5 {
        let v = lo + (hi - lo) * i as f64 / 5.0;
        let yy = y(v);
        writeln!(
            s,
            r##"<line class="grid" x1="{LEFT}" y1="{yy:.4}" x2="{:.1}" y2="{yy:.4}" stroke="#dddddd"/>"##,
            width - 140.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.4}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.2}</text>"#,
            LEFT - 6.0,
            yy + 3.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r##"<line class="axis" x1="{LEFT}" y1="{baseline:.4}" x2="{:.1}" y2="{baseline:.4}" stroke="#000000"/>"##,
        width - 140.0
    )
    .unwrap();

    for (gi, m) in methods.iter().enumerate() {
        let gx = LEFT + GROUP_GAP / 2.0 + gi as f64 * group_width;
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            gx + strategies.len() as f64 * BAR_WIDTH / 2.0,
            TOP + PLOT_HEIGHT + 20.0,
            escape(m)
        )
        .unwrap();
        for (si, st) in strategies.iter().enumerate() {
            let Some(b) = bars.iter().find(|b| &b.method == m && &b.strategy == st) else {
                continue;
            };
            let x = gx + si as f64 * BAR_WIDTH;
            let top = y(b.mean.max(0.0));
            let h = (b.mean.abs() * scale).max(0.0);
            writeln!(
                s,
                r#"<rect class="bar" data-method="{}" data-strategy="{}" data-mean="{:.6}" data-std="{:.6}" x="{x:.1}" y="{top:.4}" width="{:.1}" height="{h:.4}" fill="{}"/>"#,
                escape(m),
                escape(st),
                b.mean,
                b.std,
                BAR_WIDTH - 2.0,
                PALETTE[si % PALETTE.len()]
            )
            .unwrap();
            let cx = x + (BAR_WIDTH - 2.0) / 2.0;
            writeln!(
                s,
                r##"<line class="whisker" x1="{cx:.1}" y1="{:.4}" x2="{cx:.1}" y2="{:.4}" stroke="#000000"/>"##,
                y(b.mean + b.std),
                y(b.mean - b.std)
            )
            .unwrap();
        }
    }

    for (si, st) in strategies.iter().enumerate() {
        let ly = TOP + 10.0 + si as f64 * 18.0;
        let lx = width - 130.0;
        writeln!(
            s,
            r#"<rect class="legend" x="{lx:.1}" y="{ly:.1}" width="12" height="12" fill="{}"/>"#,
            PALETTE[si % PALETTE.len()]
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 18.0,
            ly + 10.0,
            escape(st)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Write one SVG per `(dataset, metric)` with data into `out_dir/plots`.
/// Charts with no values are skipped.
pub fn emit_plots(rows: &[ResultsRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no results rows to plot".into()));
    }
    let dir = out_dir.join(PLOTS_DIR);
    let mut written = Vec::new();
    for dataset in first_seen(rows.iter().map(|r| r.dataset.as_str())) {
        for metric in Metric::ALL {
            let bars = chart_bars(rows, &dataset, metric);
            if bars.is_empty() {
                continue;
            }
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let path = dir.join(format!("{}_{}.svg", file_stem(&dataset), metric.column()));
            let svg = render_svg(&format!("{dataset}: {}", metric.column()), &bars);
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
