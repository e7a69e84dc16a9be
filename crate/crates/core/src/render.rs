//! SVG plots built from the sweep CSV files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A parsed CSV table with named columns.
#[derive(Clone, Debug)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::InvalidInput("empty CSV".into()))?;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let r: Vec<String> = l.split(',').map(|s| s.trim().to_string()).collect();
            if r.len() != columns.len() {
                return Err(Error::InvalidInput(format!(
                    "CSV row {} has {} fields, header has {}",
                    i + 1,
                    r.len(),
                    columns.len()
                )));
            }
            rows.push(r);
        }
        Ok(Self { columns, rows })
    }

    /// Numeric column; empty or unparsable cells become `None`.
    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidInput(format!("CSV has no column {name}")))?;
        Ok(self.rows.iter().map(|r| r[idx].parse().ok()).collect())
    }
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Line plot with markers; `log_x` plots against `log10 x`.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], log_x: bool) -> String {
    let (w, h) = (640.0, 420.0);
    let (l, r, t, b) = (70.0, 150.0, 40.0, 50.0);
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().map(|&(x, y)| (tx(x), y))).collect();
    let finite: Vec<&(f64, f64)> = pts.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &finite {
        x0 = x0.min(p.0);
        x1 = x1.max(p.0);
        y0 = y0.min(p.1);
        y1 = y1.max(p.1);
    }
    if finite.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    let px = |x: f64| l + (tx(x) - x0) / (x1 - x0) * (w - l - r);
    let py = |y: f64| h - b - (y - y0) / (y1 - y0) * (h - t - b);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="16" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        (l + w - r) / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - l - r,
        h - t - b
    );
    for k in 0..=4 {
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let yy = h - b - (h - t - b) * k as f64 / 4.0;
        let xx = l + (w - l - r) * k as f64 / 4.0;
        let xv = if log_x { 10f64.powf(fx) } else { fx };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end" font-family="sans-serif">{:.4}</text>"#,
            l - 6.0,
            yy + 4.0,
            fy
        );
        let _ = writeln!(
            s,
            r#"<text x="{xx}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">{:.4}</text>"#,
            h - b + 16.0,
            xv
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        (l + w - r) / 2.0,
        h - 8.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 16 {})">{}</text>"#,
        (t + h - b) / 2.0,
        (t + h - b) / 2.0,
        escape(ylabel)
    );
    for (i, ser) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let good: Vec<(f64, f64)> =
            ser.points.iter().cloned().filter(|p| tx(p.0).is_finite() && p.1.is_finite()).collect();
        if good.len() > 1 {
            let path: Vec<String> = good.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let dash = if ser.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"{dash}/>"#,
                path.join(" ")
            );
        }
        if !ser.dashed || good.len() == 1 {
            for &(x, y) in &good {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{c}"/>"#, px(x), py(y));
            }
        }
        let ly = t + 16.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#,
            w - r + 10.0,
            w - r + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" font-family="sans-serif">{}</text>"#,
            w - r + 36.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn pairs(x: &[Option<f64>], y: &[Option<f64>]) -> Vec<(f64, f64)> {
    x.iter().zip(y).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect()
}

/// Plots from `report.csv` (and `measure.csv` when present) in `dir`.
pub fn render(dir: &Path) -> Result<Vec<PathBuf>> {
    let report = Table::parse(&fs::read_to_string(dir.join("report.csv"))?)?;
    let mut written = Vec::new();
    for (name, svg) in render_tables(&report, fs::read_to_string(dir.join("measure.csv")).ok().as_deref())? {
        let p = dir.join(name);
        fs::write(&p, svg)?;
        written.push(p);
    }
    Ok(written)
}

/// Pure part of [`render`]: file name to SVG text.
pub fn render_tables(report: &Table, measure_csv: Option<&str>) -> Result<Vec<(String, String)>> {
    let eps = report.column("eps")?;
    let col = |n: &str| report.column(n);
    let mut out = Vec::new();
    let series =
        |name: &str, y: Vec<Option<f64>>, dashed: bool| Series { name: name.into(), points: pairs(&eps, &y), dashed };
    out.push((
        "f_eps.svg".to_string(),
        line_plot(
            "F_eps against its limit",
            "eps",
            "F_eps",
            &[series("F_eps", col("f_eps")?, false), series("target", col("target_f")?, true)],
            true,
        ),
    ));
    out.push((
        "splits.svg".to_string(),
        line_plot(
            "energy splits",
            "eps",
            "value",
            &[
                series("kinetic split", col("kinetic_split")?, false),
                series("I(mu)", col("target_energy")?, true),
                series("rotation split", col("rotation_split")?, false),
                series("-zeta_max mu(D)", col("target_rotation")?, true),
            ],
            true,
        ),
    ));
    out.push((
        "vorticity.svg".to_string(),
        line_plot(
            "vorticity distance",
            "eps",
            "H^-1 distance",
            &[series("distance", col("vorticity_distance")?, false)],
            true,
        ),
    ));
    if let Some(text) = measure_csv {
        let m = Table::parse(text)?;
        let t = m.column("t")?;
        let w = m.column("w")?;
        let tv: Vec<f64> = t.iter().map(|x| x.unwrap_or(f64::NAN)).collect();
        let n = tv.len();
        let mut pts = Vec::with_capacity(n);
        let mut spacing: HashMap<usize, f64> = HashMap::new();
        for i in 0..n {
            let left = if i > 0 {
                tv[i] - tv[i - 1]
            } else if n > 1 {
                tv[1] - tv[0]
            } else {
                1.0
            };
            let right = if i + 1 < n { tv[i + 1] - tv[i] } else { left };
            spacing.insert(i, 0.5 * (left + right));
        }
        for i in 0..n {
            if let (Some(x), Some(wi)) = (t[i], w[i]) {
                let s = spacing[&i];
                if s > 0.0 {
                    pts.push((x, wi / s));
                }
            }
        }
        out.push((
            "density.svg".to_string(),
            line_plot(
                "measure density along the curve",
                "arclength",
                "density",
                &[Series { name: "density".into(), points: pts, dashed: false }],
                false,
            ),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_plots() {
        let csv = "eps,f_eps,target_f,kinetic_split,target_energy,rotation_split,target_rotation,vorticity_distance\n0.04,-9.1,-9.0,7.7,9.0,-16.9,-18.1,6.4\n";
        let t = Table::parse(csv).unwrap();
        let plots = render_tables(&t, None).unwrap();
        assert_eq!(plots.len(), 3);
        for (_, svg) in plots {
            assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
            assert!(svg.contains("<circle"));
        }
    }

    #[test]
    fn flat_density_for_uniform_measure() {
        let mut m = String::from("t,x,y,w\n");
        for i in 0..8 {
            m.push_str(&format!("{},0,0,0.125\n", i as f64 / 8.0));
        }
        let t = Table::parse(
            "eps,f_eps,target_f,kinetic_split,target_energy,rotation_split,target_rotation,vorticity_distance\n",
        )
        .unwrap();
        let plots = render_tables(&t, Some(&m)).unwrap();
        assert!(plots.iter().any(|(n, _)| n == "density.svg"));
    }

    #[test]
    fn malformed_rows_rejected() {
        assert!(Table::parse("a,b\n1\n").is_err());
        assert!(Table::parse("").is_err());
    }
}
