use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::PipelineError;
use crate::tensorio::{format_float, write_score_table, ScoreTable};

/// Mean over one equal-width bin of layer indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMean {
    pub system: String,
    pub condition: String,
    pub metric: String,
    pub bin: usize,
    pub first_index: i64,
    pub last_index: i64,
    pub mean: f64,
    pub n: usize,
}

/// Splits the unit-index range of each (system, condition, metric) series
/// into `bins` equal-width bins and averages the values in each. Empty bins
/// are omitted. Meta rows are ignored.
pub fn bin_means(table: &ScoreTable, bins: usize) -> Result<Vec<BinMean>, PipelineError> {
    if table.is_empty() {
        return Err(PipelineError::Data("empty score table".into()));
    }
    if bins == 0 {
        return Err(PipelineError::Validation("zero bins".into()));
    }
    let series = group_series(table);
    let mut out = Vec::new();
    for ((system, condition, metric), points) in series {
        let lo = points.iter().map(|p| p.0).min().unwrap();
        let hi = points.iter().map(|p| p.0).max().unwrap();
        let width = (hi - lo + 1) as i128;
        let mut acc: BTreeMap<usize, (f64, usize, i64, i64)> = BTreeMap::new();
        for &(idx, v) in &points {
            let b = ((idx - lo) as i128 * bins as i128 / width) as usize;
            let e = acc.entry(b).or_insert((0.0, 0, idx, idx));
            e.0 += v;
            e.1 += 1;
            e.2 = e.2.min(idx);
            e.3 = e.3.max(idx);
        }
        for (bin, (sum, n, first, last)) in acc {
            out.push(BinMean {
                system: system.clone(),
                condition: condition.clone(),
                metric: metric.clone(),
                bin,
                first_index: first,
                last_index: last,
                mean: sum / n as f64,
                n,
            });
        }
    }
    Ok(out)
}

type SeriesKey = (String, String, String);

fn group_series(table: &ScoreTable) -> BTreeMap<SeriesKey, Vec<(i64, f64)>> {
    let mut series: BTreeMap<SeriesKey, Vec<(i64, f64)>> = BTreeMap::new();
    for r in table.rows().iter().filter(|r| r.system != "meta") {
        series
            .entry((r.system.clone(), r.condition.clone(), r.metric.clone()))
            .or_default()
            .push((r.unit_index, r.value));
    }
    for points in series.values_mut() {
        points.sort_by_key(|p| p.0);
    }
    series
}

/// Writes `layers.csv` (every row), `bins.csv` and one SVG line chart per
/// (system, metric) into `dir`. Returns the written paths.
pub fn report(table: &ScoreTable, bins: usize, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let means = bin_means(table, bins)?;
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Data(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();

    let layers = dir.join("layers.csv");
    write_score_table(table, &layers)?;
    written.push(layers);

    let mut csv = String::from("system,condition,metric,bin,first_index,last_index,mean,n\n");
    for m in &means {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            m.system,
            m.condition,
            m.metric,
            m.bin,
            m.first_index,
            m.last_index,
            format_float(m.mean),
            m.n
        );
    }
    let bins_path = dir.join("bins.csv");
    write_text(&bins_path, &csv)?;
    written.push(bins_path);

    let mut charts: BTreeMap<(String, String), Vec<(String, Vec<(i64, f64)>)>> = BTreeMap::new();
    for ((system, condition, metric), points) in group_series(table) {
        charts.entry((system, metric)).or_default().push((condition, points));
    }
    for ((system, metric), lines) in charts {
        let path = dir.join(format!("{}_{}.svg", sanitize(&system), sanitize(&metric)));
        write_text(&path, &line_chart(&format!("{system}: {metric}"), &lines))?;
        written.push(path);
    }
    Ok(written)
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

/// Minimal SVG line chart, one polyline per series.
fn line_chart(title: &str, lines: &[(String, Vec<(i64, f64)>)]) -> String {
    let (w, h, pad) = (640.0, 360.0, 48.0);
    let all = lines.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (i64::MAX, i64::MIN, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    y0 = y0.min(0.0);
    y1 = y1.max(0.0);
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let xs = |x: i64| pad + (x - x0) as f64 / ((x1 - x0).max(1) as f64) * (w - 2.0 * pad);
    let ys = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    let zero = ys(0.0);
    let _ = writeln!(
        s,
        r##"<line x1="{pad}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#bbb"/>"##,
        w - pad
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="{:.2}" font-family="sans-serif" font-size="10">{y1:.3}</text>"#,
        ys(y1) + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="{:.2}" font-family="sans-serif" font-size="10">{y0:.3}</text>"#,
        ys(y0) + 4.0
    );
    for (k, (label, points)) in lines.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", xs(x), ys(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            w - pad - 120.0,
            40 + 14 * k,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
