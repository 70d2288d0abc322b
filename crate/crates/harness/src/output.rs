//! Tables, artifact directories and SVG line plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use trotter_core::state::{sidecar_path, StateVector};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            Cell::Text(s) => s.parse().ok(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn col(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric column values; non-numeric cells become NaN.
    pub fn numbers(&self, name: &str) -> Vec<f64> {
        let Some(k) = self.col(name) else { return vec![] };
        self.rows.iter().map(|r| r[k].as_f64().unwrap_or(f64::NAN)).collect()
    }

    /// Rows whose column `name` renders as `value`.
    pub fn filter(&self, name: &str, value: &str) -> Table {
        let k = self.col(name).expect("filter column");
        Table {
            columns: self.columns.clone(),
            rows: self.rows.iter().filter(|r| r[k].render() == value).cloned().collect(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    pub fn read_csv(path: &Path) -> Result<Table> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let columns: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(|s| Cell::Text(s.into())).collect());
        }
        Ok(Table { columns, rows })
    }
}

/// One line of an SVG plot.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Static line plot; `log_y` plots `log10 y` and drops nonpositive points.
pub fn svg_line_plot(title: &str, x_label: &str, series: &[Series], log_y: bool) -> String {
    let (w, h, m) = (640.0, 400.0, 60.0);
    let tf = |y: f64| if log_y { y.log10() } else { y };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite() && (!log_y || p.1 > 0.0))
                .map(|&(x, y)| (x, tf(y)))
                .collect()
        })
        .collect();
    let all: Vec<&(f64, f64)> = pts.iter().flatten().collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &all {
        x0 = x0.min(p.0);
        x1 = x1.max(p.0);
        y0 = y0.min(p.1);
        y1 = y1.max(p.1);
    }
    if all.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    let ylab = |v: f64| if log_y { format!("1e{v:.1}") } else { format!("{v:.3e}") };
    for (v, y) in [(y0, h - m), (y1, m)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, m - 4.0, ylab(v));
    }
    for (v, x) in [(x0, m), (x1, w - m)] {
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{v:.3}</text>"#, h - m + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 20.0, escape(x_label));
    for (i, (ser, p)) in series.iter().zip(&pts).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !p.is_empty() {
            let d: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                d.join(" ")
            );
        }
        let ly = m + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            w - m - 150.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Clone, Debug, Serialize)]
pub struct RunStamp {
    pub id: String,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub artifacts: Vec<String>,
    pub flags: Vec<String>,
    pub notes: Vec<String>,
}

/// Everything an experiment produces.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub tables: Vec<(String, Table)>,
    pub json: Vec<(String, serde_json::Value)>,
    pub text: Vec<(String, String)>,
    pub svgs: Vec<(String, String)>,
    pub binary: Vec<(String, Vec<u8>)>,
    /// Final states with their provenance strings.
    pub states: Vec<(String, StateVector, String)>,
    /// Cross-check violations; a flagged run is reported but still written.
    pub flags: Vec<String>,
    pub notes: Vec<String>,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn add_table(&mut self, name: &str, t: Table) {
        self.tables.push((name.into(), t));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        self.json.push((name.into(), serde_json::to_value(v)?));
        Ok(())
    }

    /// Writes artifacts plus `run.json`; returns the file names written.
    pub fn write(&self, dir: &Path, stamp_base: RunStamp) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut files = Vec::new();
        let mut put = |name: String, body: &[u8]| -> Result<()> {
            if name.contains(['/', '\\']) {
                bail!("artifact name '{name}' is not a plain file name");
            }
            let p = dir.join(&name);
            std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
            files.push(p);
            Ok(())
        };
        for (n, t) in &self.tables {
            put(format!("{n}.csv"), t.to_csv()?.as_bytes())?;
        }
        for (n, v) in &self.json {
            put(format!("{n}.json"), serde_json::to_string_pretty(v)?.as_bytes())?;
        }
        for (n, v) in &self.text {
            put(n.clone(), v.as_bytes())?;
        }
        for (n, v) in &self.svgs {
            put(format!("{n}.svg"), v.as_bytes())?;
        }
        for (n, v) in &self.binary {
            put(n.clone(), v)?;
        }
        for (n, psi, prov) in &self.states {
            if n.contains(['/', '\\']) {
                bail!("artifact name '{n}' is not a plain file name");
            }
            let p = dir.join(n);
            psi.write_binary(&p, Some(prov.clone()))?;
            files.push(sidecar_path(&p));
            files.push(p);
        }
        let mut stamp = stamp_base;
        stamp.artifacts = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        stamp.flags = self.flags.clone();
        stamp.notes = self.notes.clone();
        let p = dir.join("run.json");
        std::fs::write(&p, serde_json::to_string_pretty(&stamp)?)?;
        files.push(p);
        Ok(files)
    }
}
