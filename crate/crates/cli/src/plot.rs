//! Deterministic SVG line charts of report CSVs.

use std::fmt::Write as _;
use std::path::Path;

use cqrlab_core::harness::CSV_HEADER;

use crate::error::{CliError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Reads `(epoch, metric)` pairs, skipping rows where the metric is empty.
pub fn read_series(path: &Path, metric: &str) -> Result<Series> {
    let col = CSV_HEADER
        .iter()
        .position(|h| *h == metric && *h != "epoch")
        .ok_or_else(|| {
            CliError::Usage(format!(
                "unknown metric `{metric}` (expected one of {})",
                CSV_HEADER[1..].join(", ")
            ))
        })?;
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Plot(format!("{}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| CliError::Plot(format!("{}: {e}", path.display())))?
        .clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(CliError::Plot(format!(
            "{}: header `{}` does not match `{}`",
            path.display(),
            header.iter().collect::<Vec<_>>().join(","),
            CSV_HEADER.join(",")
        )));
    }
    let mut points = Vec::new();
    let mut rows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Plot(format!("{}: {e}", path.display())))?;
        rows += 1;
        let field = |c: usize| -> Result<Option<f64>> {
            let s = rec.get(c).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| {
                CliError::Plot(format!(
                    "{}: row {}: bad number `{s}`",
                    path.display(),
                    i + 1
                ))
            })
        };
        if let (Some(x), Some(y)) = (field(0)?, field(col)?) {
            points.push((x, y));
        }
    }
    if rows == 0 {
        return Err(CliError::Plot(format!("{}: no data rows", path.display())));
    }
    if points.is_empty() {
        return Err(CliError::Plot(format!(
            "{}: column `{metric}` is empty",
            path.display()
        )));
    }
    let label = path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    Ok(Series { label, points })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
        (l.min(v), h.max(v))
    });
    if (hi - lo).abs() < 1e-12 {
        let pad = if lo.abs() > 1e-12 {
            lo.abs() * 0.05
        } else {
            1.0
        };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

/// Renders one polyline per series with a legend of series labels.
pub fn render_svg(series: &[Series], metric: &str) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0,
            fmt_tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            fmt_tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">epoch</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(metric)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

pub fn plot(csvs: &[impl AsRef<Path>], metric: &str, out: &Path) -> Result<()> {
    if csvs.is_empty() {
        return Err(CliError::Usage("plot needs at least one CSV".into()));
    }
    let series = csvs
        .iter()
        .map(|p| read_series(p.as_ref(), metric))
        .collect::<Result<Vec<_>>>()?;
    std::fs::write(out, render_svg(&series, metric)).map_err(|e| CliError::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const HEAD: &str = "epoch,mean_return,violation_pct,rscore,cvar10\n";

    #[test]
    fn one_csv_two_rows_one_polyline() {
        let d = tempfile::tempdir().unwrap();
        let p = write(
            d.path(),
            "cqr.csv",
            &format!("{HEAD}0,-1.5,20,,-2\n1,-1.0,5,,-1.5\n"),
        );
        let out = d.path().join("o.svg");
        plot(&[&p], "mean_return", &out).unwrap();
        let svg = std::fs::read_to_string(&out).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(pts.split(' ').count(), 2);
        assert!(svg.contains(">cqr</text>"));
    }

    #[test]
    fn legend_per_csv_and_deterministic() {
        let d = tempfile::tempdir().unwrap();
        let paths: Vec<_> = ["dqn", "qrdqn", "cql", "cqr"]
            .iter()
            .enumerate()
            .map(|(i, n)| {
                write(
                    d.path(),
                    &format!("{n}.csv"),
                    &format!("{HEAD}0,{i},1,,0\n5,{},1,,0\n", i * 2),
                )
            })
            .collect();
        let a = d.path().join("a.svg");
        let b = d.path().join("b.svg");
        plot(&paths, "mean_return", &a).unwrap();
        plot(&paths, "mean_return", &b).unwrap();
        let sa = std::fs::read(&a).unwrap();
        assert_eq!(sa, std::fs::read(&b).unwrap());
        let text = String::from_utf8(sa).unwrap();
        for n in ["dqn", "qrdqn", "cql", "cqr"] {
            assert!(text.contains(&format!(">{n}</text>")));
        }
        assert_eq!(text.matches("<polyline").count(), 4);
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = tempfile::tempdir().unwrap();
        let out = d.path().join("o.svg");
        let empty = write(d.path(), "e.csv", HEAD);
        assert!(matches!(
            plot(&[&empty], "mean_return", &out),
            Err(CliError::Plot(_))
        ));
        let wrong = write(d.path(), "w.csv", "epoch,score\n0,1\n");
        assert!(plot(&[&wrong], "mean_return", &out)
            .unwrap_err()
            .to_string()
            .contains("header"));
        let ok = write(d.path(), "ok.csv", &format!("{HEAD}0,1,,,0\n"));
        assert!(plot(&[&ok], "rscore", &out)
            .unwrap_err()
            .to_string()
            .contains("empty"));
        assert!(matches!(
            plot(&[&ok], "loss", &out),
            Err(CliError::Usage(_))
        ));
    }
}
