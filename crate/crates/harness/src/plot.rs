//! Standalone SVG charts from the CSV artifacts: grouped bars per metric
//! (scenarios on the x axis, one bar per method, deviation whiskers) and
//! per-site learning curves of each training run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::artifacts::{Table, LEARNING_LOG_FILE, SUMMARY_FILE};
use crate::config::Method;
use crate::error::{HarnessError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Metrics charted from the summary, with their axis labels.
pub const SUMMARY_METRICS: [(&str, &str); 3] = [
    ("g_aver", "average throughput (Mbit/s)"),
    ("g_min", "minimum throughput (Mbit/s)"),
    ("g_sd", "throughput deviation (Mbit/s)"),
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Rounded axis range and tick step covering `[lo, hi]`.
fn axis(lo: f64, hi: f64) -> (f64, f64, f64) {
    let (lo, hi) = if lo.is_finite() && hi.is_finite() && hi > lo {
        (lo, hi)
    } else if lo.is_finite() {
        (lo - 1.0, lo + 1.0)
    } else {
        (0.0, 1.0)
    };
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    ((lo / step).floor() * step, (hi / step).ceil() * step, step)
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    format!("{v:.decimals$}")
}

struct Frame {
    svg: String,
    x0: f64,
    x1: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn new(title: &str, x_label: &str, y_label: &str, y_range: (f64, f64)) -> Self {
        let (y_lo, y_hi, step) = axis(y_range.0, y_range.1);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (yb, yt) = (HEIGHT - BOTTOM, TOP);
        let mut f = Self { svg, x0, x1, y_lo, y_hi };
        let mut v = y_lo;
        while v <= y_hi + step * 1e-9 {
            let y = f.y(v);
            let _ = writeln!(f.svg, r##"<line class="grid" x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#e0e0e0"/>"##);
            let _ = writeln!(
                f.svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 6.0,
                y + 4.0,
                fmt_tick(v, step)
            );
            v += step;
        }
        let _ = writeln!(f.svg, r#"<line class="axis" x1="{x0}" y1="{yb}" x2="{x1}" y2="{yb}" stroke="black"/>"#);
        let _ = writeln!(f.svg, r#"<line class="axis" x1="{x0}" y1="{yb}" x2="{x0}" y2="{yt}" stroke="black"/>"#);
        let _ = writeln!(
            f.svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            f.svg,
            r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (yb + yt) / 2.0,
            escape(y_label)
        );
        f
    }

    fn y(&self, v: f64) -> f64 {
        let (yb, yt) = (HEIGHT - BOTTOM, TOP);
        yb - (v - self.y_lo) / (self.y_hi - self.y_lo) * (yb - yt)
    }

    fn legend(&mut self, labels: &[String]) {
        for (i, label) in labels.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * i as f64;
            let x = self.x1 + 14.0;
            let _ = writeln!(
                self.svg,
                r#"<rect x="{x}" y="{:.2}" width="12" height="12" fill="{}"/><text class="legend" x="{}" y="{:.2}">{}</text>"#,
                y - 10.0,
                PALETTE[i % PALETTE.len()],
                x + 18.0,
                y,
                escape(label)
            );
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

/// Grouped bars: `values[g][s]` is the (mean, deviation) of series `s` in
/// group `g`, if present.
pub fn bar_chart(
    title: &str,
    y_label: &str,
    groups: &[String],
    series: &[String],
    values: &[Vec<Option<(f64, f64)>>],
) -> String {
    let cells = values.iter().flatten().flatten();
    let lo = cells.clone().map(|(m, s)| m - s).fold(0.0, f64::min);
    let hi = cells.map(|(m, s)| m + s).fold(0.0, f64::max);
    let mut f = Frame::new(title, "scenario", y_label, (lo, if hi > lo { hi } else { lo + 1.0 }));
    let group_w = (f.x1 - f.x0) / groups.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (g, name) in groups.iter().enumerate() {
        let gx = f.x0 + group_w * g as f64;
        let _ = writeln!(
            f.svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            gx + group_w / 2.0,
            HEIGHT - BOTTOM + 16.0,
            escape(name)
        );
        for (s, _) in series.iter().enumerate() {
            let Some((mean, sd)) = values.get(g).and_then(|row| row.get(s)).copied().flatten() else {
                continue;
            };
            let x = gx + group_w * 0.1 + bar_w * s as f64;
            let (y0, y1) = (f.y(0.0), f.y(mean));
            let _ = writeln!(
                f.svg,
                r#"<rect class="bar" x="{x:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                y0.min(y1),
                bar_w * 0.9,
                (y0 - y1).abs(),
                PALETTE[s % PALETTE.len()]
            );
            if sd > 0.0 {
                let cx = x + bar_w * 0.45;
                let _ = writeln!(
                    f.svg,
                    r#"<line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                    f.y(mean - sd),
                    f.y(mean + sd)
                );
            }
        }
    }
    f.legend(series);
    f.finish()
}

/// One polyline per series over a shared x range.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (ylo, yhi) = pts.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, y)| (a.min(y), b.max(y)));
    let (xlo, xhi) = pts.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(x, _)| (a.min(x), b.max(x)));
    let (xlo, xhi) = if xlo.is_finite() && xhi > xlo { (xlo, xhi) } else { (0.0, 1.0) };
    let mut f = Frame::new(title, x_label, y_label, (ylo, yhi));
    let xpos = |x: f64| f.x0 + (x - xlo) / (xhi - xlo) * (f.x1 - f.x0);
    let _ = writeln!(
        f.svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="start">{}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
        f.x0,
        HEIGHT - BOTTOM + 16.0,
        xlo,
        f.x1,
        HEIGHT - BOTTOM + 16.0,
        xhi
    );
    let mut paths = String::new();
    for (i, (_, points)) in series.iter().enumerate() {
        let coords: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", xpos(x), f.y(y))).collect();
        let _ = writeln!(
            paths,
            r#"<polyline class="curve" fill="none" stroke-width="1.5" stroke="{}" points="{}"/>"#,
            PALETTE[i % PALETTE.len()],
            coords.join(" ")
        );
    }
    f.svg.push_str(&paths);
    let labels: Vec<String> = series.iter().map(|(l, _)| l.clone()).collect();
    f.legend(&labels);
    f.finish()
}

fn method_order(name: &str) -> (usize, String) {
    let pos = Method::ALL.iter().position(|m| m.name() == name).unwrap_or(Method::ALL.len());
    (pos, name.to_string())
}

/// One bar chart per metric from concatenated summary tables.
pub fn summary_charts(tables: &[Table]) -> Result<Vec<(String, String)>> {
    let mut groups: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String, &str), (f64, f64)> = BTreeMap::new();
    for t in tables {
        let (cm, cs, cd) = (t.column("method")?, t.column("scenario")?, t.column("day")?);
        let cols: Vec<(usize, usize)> = SUMMARY_METRICS
            .iter()
            .map(|(m, _)| Ok((t.column(&format!("{m}_mean"))?, t.column(&format!("{m}_sd"))?)))
            .collect::<Result<_>>()?;
        for r in 0..t.rows.len() {
            let scenario = t.text(r, cs);
            let group = if scenario == "C" { format!("C-day{}", t.text(r, cd)) } else { scenario.to_string() };
            let method = t.text(r, cm).to_string();
            if !groups.contains(&group) {
                groups.push(group.clone());
            }
            if !methods.contains(&method) {
                methods.push(method.clone());
            }
            for ((metric, _), &(mc, sc)) in SUMMARY_METRICS.iter().zip(&cols) {
                let mean = t.number(r, mc).unwrap_or(f64::NAN);
                let sd = t.number(r, sc).unwrap_or(0.0);
                cells.insert((group.clone(), method.clone(), metric), (mean, sd));
            }
        }
    }
    groups.sort();
    methods.sort_by_key(|m| method_order(m));
    Ok(SUMMARY_METRICS
        .iter()
        .map(|(metric, label)| {
            let values: Vec<Vec<Option<(f64, f64)>>> = groups
                .iter()
                .map(|g| methods.iter().map(|m| cells.get(&(g.clone(), m.clone(), *metric)).copied()).collect())
                .collect();
            (format!("{metric}.svg"), bar_chart(label, label, &groups, &methods, &values))
        })
        .collect())
}

/// Trailing mean over `window` points.
fn smooth(ys: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(ys.len());
    let mut sum = 0.0;
    for i in 0..ys.len() {
        sum += ys[i];
        if i >= window {
            sum -= ys[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// One chart per training run (method, scenario, seed) with a curve per site.
pub fn learning_charts(tables: &[Table]) -> Result<Vec<(String, String)>> {
    type Run = (String, String, u64);
    let mut runs: BTreeMap<Run, BTreeMap<u64, Vec<(f64, f64)>>> = BTreeMap::new();
    for t in tables {
        let cm = t.column("method")?;
        let cs = t.column("scenario")?;
        let cseed = t.column("seed")?;
        let ce = t.column("episode")?;
        let ca = t.column("agent")?;
        let cr = t.column("mean_reward")?;
        for r in 0..t.rows.len() {
            let key = (t.text(r, cm).to_string(), t.text(r, cs).to_string(), t.number(r, cseed).unwrap_or(0.0) as u64);
            let agent = t.number(r, ca).unwrap_or(0.0) as u64;
            let (Some(ep), Some(rew)) = (t.number(r, ce), t.number(r, cr)) else { continue };
            runs.entry(key).or_default().entry(agent).or_default().push((ep, rew));
        }
    }
    if runs.is_empty() {
        return Ok(vec![("learning-curves.svg".into(), line_chart("learning curves", "episode", "mean episode reward", &[]))]);
    }
    Ok(runs
        .into_iter()
        .map(|((method, scenario, seed), agents)| {
            let series: Vec<(String, Vec<(f64, f64)>)> = agents
                .into_iter()
                .map(|(agent, mut pts)| {
                    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
                    let sm = smooth(&ys, (pts.len() / 50).max(1));
                    (format!("BS {}", agent + 1), pts.iter().map(|p| p.0).zip(sm).collect())
                })
                .collect();
            let title = format!("{method} on {scenario}, seed {seed}");
            (
                format!("learning-{method}-{scenario}-seed{seed}.svg"),
                line_chart(&title, "episode", "mean episode reward", &series),
            )
        })
        .collect())
}

fn find_files(root: &Path, name: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    if root.is_file() {
        if root.file_name().is_some_and(|n| n == name) {
            out.push(root.to_path_buf());
        }
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| HarnessError::io(root, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| HarnessError::io(root, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        find_files(&p, name, out)?;
    }
    Ok(())
}

/// Charts every summary and learning log found under `inputs` (files or
/// directories, searched recursively) into `out_dir`.
pub fn emit_plots(inputs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (mut summaries, mut logs) = (Vec::new(), Vec::new());
    for input in inputs {
        find_files(input, SUMMARY_FILE, &mut summaries)?;
        find_files(input, LEARNING_LOG_FILE, &mut logs)?;
    }
    let read = |files: &[PathBuf]| files.iter().map(|p| Table::read(p)).collect::<Result<Vec<_>>>();
    let mut charts = summary_charts(&read(&summaries)?)?;
    charts.extend(learning_charts(&read(&logs)?)?);
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut written = Vec::new();
    for (name, svg) in charts {
        let path = out_dir.join(name);
        std::fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(columns: &[&str], rows: Vec<Vec<String>>) -> Table {
        Table { file: "t.csv".into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows }
    }

    const SUMMARY_COLS: [&str; 13] = [
        "schema_id",
        "method",
        "scenario",
        "day",
        "seed_count",
        "g_aver_mean",
        "g_aver_sd",
        "g_min_mean",
        "g_min_sd",
        "g_sd_mean",
        "g_sd_sd",
        "reward_mean",
        "reward_sd",
    ];

    #[test]
    fn six_methods_three_charts_six_bars() {
        let rows = Method::ALL
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut r = vec!["cellbal.summary.v1".to_string(), m.name().into(), "A".into(), "1".into(), "5".into()];
                r.extend((0..8).map(|k| format!("{}", 1.0 + i as f64 + 0.1 * k as f64)));
                r
            })
            .collect();
        let charts = summary_charts(&[table(&SUMMARY_COLS, rows)]).unwrap();
        assert_eq!(charts.len(), 3);
        for (_, svg) in &charts {
            assert_eq!(svg.matches(r#"class="bar""#).count(), 6);
            assert_eq!(svg.matches(r#"class="legend""#).count(), 6);
        }
    }

    #[test]
    fn seven_sites_seven_curves() {
        let cols = ["method", "scenario", "seed", "episode", "agent", "mean_reward"];
        let rows = (0..10)
            .flat_map(|ep| {
                (0..7).map(move |a| {
                    vec!["ma3c".into(), "A".into(), "0".into(), ep.to_string(), a.to_string(), format!("{}", ep * a)]
                })
            })
            .collect();
        let charts = learning_charts(&[table(&cols, rows)]).unwrap();
        assert_eq!(charts.len(), 1);
        let svg = &charts[0].1;
        assert_eq!(svg.matches(r#"class="curve""#).count(), 7);
        for k in 1..=7 {
            assert!(svg.contains(&format!(">BS {k}</text>")));
        }
    }

    #[test]
    fn empty_inputs_give_bare_axes() {
        let charts = summary_charts(&[table(&SUMMARY_COLS, vec![])]).unwrap();
        assert_eq!(charts.len(), 3);
        for (_, svg) in &charts {
            assert_eq!(svg.matches(r#"class="axis""#).count(), 2);
            assert!(!svg.contains(r#"class="bar""#));
        }
        let charts = learning_charts(&[]).unwrap();
        assert_eq!(charts.len(), 1);
        assert_eq!(charts[0].1.matches(r#"class="axis""#).count(), 2);
    }

    #[test]
    fn missing_column_is_named() {
        let err = summary_charts(&[table(&["method", "scenario", "day", "g_aver_mean"], vec![])]).unwrap_err();
        assert!(matches!(err, HarnessError::Schema { column, .. } if column == "g_aver_sd"));
    }

    #[test]
    fn axis_ranges_cover_data() {
        let (lo, hi, step) = axis(0.0, 2.3);
        assert_eq!((lo, hi, step), (0.0, 2.5, 0.5));
        let (lo, hi, _) = axis(-3.2, 7.9);
        assert!(lo <= -3.2 && hi >= 7.9);
        assert_eq!(smooth(&[1.0, 3.0, 5.0], 2), vec![1.0, 2.0, 4.0]);
    }
}
