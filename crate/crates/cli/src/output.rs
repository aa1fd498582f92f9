//! CSV tables, optional SVG charts and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context as _;
use serde::Serialize;

use crate::params::Params;

pub const OUT_DIR_ENV: &str = "CROPDP_OUT_DIR";

/// Everything needed to repeat a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub version: String,
    /// Accounting is deterministic, so no command draws random numbers.
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub derived: BTreeMap<String, serde_json::Value>,
    pub duration_seconds: f64,
}

pub struct Output {
    dir: Option<PathBuf>,
    written: Vec<String>,
    derived: BTreeMap<String, serde_json::Value>,
    started: Instant,
}

impl Output {
    /// `--out`, else `$CROPDP_OUT_DIR`, else stdout with no manifest.
    pub fn new(out: Option<PathBuf>) -> anyhow::Result<Self> {
        let dir = out.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from));
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Output {
            dir,
            written: Vec::new(),
            derived: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    pub fn has_dir(&self) -> bool {
        self.dir.is_some()
    }

    pub fn note(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.derived.insert(key.to_string(), value.into());
    }

    pub fn table(
        &mut self,
        name: &str,
        header: &[String],
        rows: &[Vec<f64>],
    ) -> anyhow::Result<()> {
        let bytes = csv_bytes(header, rows)?;
        match &self.dir {
            Some(d) => {
                let path = d.join(format!("{name}.csv"));
                std::fs::write(&path, bytes)
                    .with_context(|| format!("writing {}", path.display()))?;
                self.written.push(path.display().to_string());
            }
            None => std::io::stdout().write_all(&bytes)?,
        }
        Ok(())
    }

    /// SVGs are only written next to other outputs, never to stdout.
    pub fn svg(&mut self, name: &str, svg: &str) -> anyhow::Result<()> {
        let Some(d) = &self.dir else {
            eprintln!("note: --svg needs an output directory; skipped");
            return Ok(());
        };
        let path = d.join(format!("{name}.svg"));
        std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path.display().to_string());
        Ok(())
    }

    pub fn finish(self, command: &str, params: &Params) -> anyhow::Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(format!("{command}.manifest.json"));
        let manifest = RunManifest {
            command: command.to_string(),
            parameters: params.resolved().clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: Vec::new(),
            outputs: self.written,
            derived: self.derived,
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, json + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// 17 significant digits so values round-trip exactly.
pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn csv_bytes(header: &[String], rows: &[Vec<f64>]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        anyhow::ensure!(
            row.len() == header.len(),
            "row width {} != header width {}",
            row.len(),
            header.len()
        );
        w.write_record(row.iter().map(|&v| format_number(v)))?;
    }
    Ok(w.into_inner()?)
}

pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_y: bool,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// Polyline chart of one or more series over shared x values. On a log
/// axis, non-positive points are dropped.
pub fn line_chart(chart: &Chart, x: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let (w, h, m) = (720.0, 440.0, 60.0);
    let ty = |v: f64| if chart.log_y { v.log10() } else { v };
    let usable = |v: f64| v.is_finite() && (!chart.log_y || v > 0.0);
    let ys = series
        .iter()
        .flat_map(|(_, s)| s.iter().copied())
        .filter(|&v| usable(v))
        .map(ty);
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 < 1e-12 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let x0 = x.iter().copied().fold(f64::INFINITY, f64::min);
    let mut x1 = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    let px = |v: f64| m + (v - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |v: f64| h - m - (ty(v) - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(chart.title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 15.0,
        escape(chart.x_label)
    );
    let y_label = if chart.log_y {
        format!("{} (log10)", chart.y_label)
    } else {
        chart.y_label.to_string()
    };
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(&y_label)
    );
    for v in [x0, x1] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{v}</text>"#,
            px(v),
            h - m + 15.0
        );
    }
    for v in [y0, y1] {
        let label = if chart.log_y {
            format!("1e{v:.1}")
        } else {
            format!("{v:.4}")
        };
        let yy = h - m - (v - y0) / (y1 - y0) * (h - 2.0 * m);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{yy}" text-anchor="end">{label}</text>"#,
            m - 4.0
        );
    }
    for (i, (name, ys)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = x
            .iter()
            .zip(ys)
            .filter(|(_, &y)| usable(y))
            .map(|(&xv, &yv)| format!("{:.2},{:.2}", px(xv), py(yv)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = m + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{colour}">{}</text>"#,
            w - m - 160.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 4.878_453_381_2e-4, 1e-300, 123456.789] {
            assert_eq!(format_number(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_number(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_has_header_first() {
        let bytes = csv_bytes(&["a".into(), "b".into()], &[vec![1.0, 2.0]]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().next(), Some("a,b"));
        assert_eq!(text.lines().count(), 2);
        assert!(csv_bytes(&["a".into()], &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn chart_skips_nonpositive_on_log_axis() {
        let chart = Chart {
            title: "t",
            x_label: "x",
            y_label: "y",
            log_y: true,
        };
        let svg = line_chart(
            &chart,
            &[0.0, 1.0, 2.0],
            &[("s".into(), vec![1e-3, 0.0, 1e-5])],
        );
        assert!(svg.starts_with("<svg"));
        let pts = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(pts.split(' ').count(), 2);
    }
}
