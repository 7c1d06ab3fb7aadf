use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{read_results, ResultRow};
use crate::error::{Error, Result};

const WIDTH: f64 = 520.0;
const HEIGHT: f64 = 340.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 44.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// A named polyline of `(rate, accuracy)` points.
pub type Series = (String, Vec<(f64, f64)>);

fn px(x: f64) -> f64 {
    LEFT + x * (WIDTH - LEFT - RIGHT)
}

fn py(y: f64) -> f64 {
    HEIGHT - BOTTOM - y * (HEIGHT - TOP - BOTTOM)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Accuracy-vs-rate line chart with both axes on [0, 1]. Points are joined
/// by straight segments in x order.
pub fn render_svg(title: &str, x_label: &str, series: &[Series]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        (px(0.0) + px(1.0)) / 2.0,
        escape(title)
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
            px(0.0),
            py(v),
            px(1.0),
            py(v)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#,
            px(0.0) - 6.0,
            py(v) + 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#,
            px(v),
            py(0.0) + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<polyline points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="none" stroke="black"/>"#,
        px(0.0),
        py(1.0),
        px(0.0),
        py(0.0),
        px(1.0),
        py(0.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (px(0.0) + px(1.0)) / 2.0,
        HEIGHT - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">accuracy</text>"#,
        (py(0.0) + py(1.0)) / 2.0,
        (py(0.0) + py(1.0)) / 2.0
    );
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for &(x, y) in &pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 24.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' }).collect()
}

/// Studies whose rows share one method and differ by group; their groups
/// become the series.
fn groups_are_series(kind: &str) -> bool {
    matches!(kind, "low-resource" | "unseen-domain")
}

/// Chart key → series name → x → accuracies.
type Charts = BTreeMap<(String, String, String), BTreeMap<String, BTreeMap<u64, Vec<f64>>>>;

fn collect(rows: &[ResultRow], charts: &mut Charts) {
    for r in rows {
        let x = if r.kind == "module-integrated" {
            (r.enc_rate + r.dec_rate) / 2.0
        } else {
            r.enc_rate.max(r.dec_rate)
        };
        let (chart_group, series) = if groups_are_series(&r.kind) {
            (String::new(), r.group.clone())
        } else {
            (r.group.clone(), r.method.clone())
        };
        charts
            .entry((r.kind.clone(), r.task.clone(), chart_group))
            .or_default()
            .entry(series)
            .or_default()
            .entry(x.to_bits())
            .or_default()
            .push(r.accuracy);
    }
}

/// One SVG per (kind, task, group) with one series per method; low-resource
/// and unseen-domain charts use one series per group instead. Every
/// (series, x) point is the mean accuracy of its rows; module-integrated
/// charts put the mean of the two stack rates on x. Nothing is written
/// unless every CSV parses and has rows.
pub fn render_plots(csvs: &[impl AsRef<Path>], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    let mut charts = Charts::new();
    for path in csvs {
        let path = path.as_ref();
        let rows = read_results(path)?;
        if rows.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 2,
                message: "no result rows".into(),
            });
        }
        collect(&rows, &mut charts);
    }
    if charts.is_empty() {
        return Err(Error::input("no CSV files given"));
    }
    let mut files = Vec::new();
    for ((kind, task, group), series) in &charts {
        let series: Vec<Series> = series
            .iter()
            .map(|(name, xs)| {
                let pts = xs
                    .iter()
                    .map(|(x, ys)| (f64::from_bits(*x), ys.iter().sum::<f64>() / ys.len() as f64))
                    .collect();
                (name.clone(), pts)
            })
            .collect();
        let title = if group.is_empty() {
            format!("{kind} / {task}")
        } else {
            format!("{kind} / {task} / {group}")
        };
        let x_label = if kind == "module-integrated" {
            "mean of encoder and decoder rate"
        } else {
            "pruning rate"
        };
        let mut name = format!("{}_{}", slug(kind), slug(task));
        if !group.is_empty() {
            name = format!("{name}_{}", slug(group));
        }
        files.push((out_dir.join(format!("{name}.svg")), render_svg(&title, x_label, &series)));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut out = Vec::with_capacity(files.len());
    for (path, svg) in files {
        fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}
