//! Static SVG plots with a CSV twin holding the same numbers.
//!
//! Output is a pure function of the input table, so identical data give
//! identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::write_atomic;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// Columns `sample_index, gate_value[, cosine]`, drawn as lines.
    GateTrace,
    /// Columns `epoch, lr`.
    LrSchedule,
    /// Columns `freq_hz, gain_db`.
    FilterResponse,
    /// Columns `x, y[, label]`; points coloured by label.
    Scatter,
}

impl PlotKind {
    fn title(self) -> &'static str {
        match self {
            PlotKind::GateTrace => "gate trace",
            PlotKind::LrSchedule => "learning-rate schedule",
            PlotKind::FilterResponse => "filter magnitude response",
            PlotKind::Scatter => "t-SNE projection",
        }
    }
}

/// A rectangular numeric table with named columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }

    fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[k])
    }

    fn validate(&self, min_cols: usize) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "nothing to plot: the table has no rows",
            )));
        }
        if self.columns.len() < min_cols {
            return Err(Error::Dimension(format!(
                "plot needs at least {min_cols} columns, got {}",
                self.columns.len()
            )));
        }
        if let Some(r) = self.rows.iter().find(|r| r.len() != self.columns.len()) {
            return Err(Error::Dimension(format!(
                "row of {} values under {} columns",
                r.len(),
                self.columns.len()
            )));
        }
        if self.rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "plot data contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Comma-separated, header row, LF line endings, shortest round-trip
    /// float formatting.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format!("{v}")))
                .map_err(io)?;
        }
        w.into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn of(values: impl Iterator<Item = f64>) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo < 1e-12 * (1.0 + lo.abs()) {
            lo -= 0.5;
            hi += 0.5;
        }
        Axis { lo, hi }
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0)
            .collect()
    }
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders `table` as a self-contained SVG document.
pub fn render_svg(kind: PlotKind, table: &Table) -> Result<String> {
    table.validate(2)?;
    let xa = Axis::of(table.column(0));
    let n_y = if kind == PlotKind::Scatter {
        1
    } else {
        table.columns.len() - 1
    };
    let ya = Axis::of((1..=n_y).flat_map(|k| table.column(k)));
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |v: f64| MARGIN_L + (v - xa.lo) / (xa.hi - xa.lo) * pw;
    let sy = |v: f64| MARGIN_T + (1.0 - (v - ya.lo) / (ya.hi - ya.lo)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        kind.title()
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in xa.ticks() {
        let x = sx(t);
        let y0 = MARGIN_T + ph;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 18.0,
            fmt_tick(t)
        );
    }
    for t in ya.ticks() {
        let y = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN_L}" y2="{y:.2}" stroke="black"/>"#,
            MARGIN_L - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_L - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 10.0,
        escape(&table.columns[0])
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        escape(&table.columns[1..=n_y].join(", "))
    );

    if kind == PlotKind::Scatter {
        let has_label = table.columns.len() > 2;
        for r in &table.rows {
            let colour = if has_label {
                PALETTE[(r[2].round().abs() as usize) % PALETTE.len()]
            } else {
                PALETTE[0]
            };
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}" fill-opacity="0.7"/>"#,
                sx(r[0]),
                sy(r[1])
            );
        }
    } else {
        for k in 1..=n_y {
            let mut d = String::new();
            for (i, r) in table.rows.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2},{:.2}",
                    if i == 0 { "M" } else { " L" },
                    sx(r[0]),
                    sy(r[k])
                );
            }
            let colour = PALETTE[(k - 1) % PALETTE.len()];
            let _ = writeln!(
                s,
                r#"<path d="{d}" fill="none" stroke="{colour}" stroke-width="1.2"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" fill="{colour}">{}</text>"#,
                MARGIN_L + 10.0,
                MARGIN_T + 16.0 * k as f64,
                escape(&table.columns[k])
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `<path>.svg` and `<path>.csv` (any extension on `path` is
/// replaced). Nothing is written if the table is rejected.
pub fn emit_plot(kind: PlotKind, table: &Table, path: &Path) -> Result<(PathBuf, PathBuf)> {
    let svg = render_svg(kind, table)?;
    let csv = table.to_csv()?;
    let (svg_path, csv_path) = (path.with_extension("svg"), path.with_extension("csv"));
    write_atomic(&csv_path, &csv)?;
    write_atomic(&svg_path, svg.as_bytes())?;
    Ok((svg_path, csv_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_lf() {
        let mut t = Table::new(&["epoch", "lr"]);
        t.push(vec![0.0, 0.002]);
        t.push(vec![1.0, 0.001]);
        assert_eq!(
            String::from_utf8(t.to_csv().unwrap()).unwrap(),
            "epoch,lr\n0,0.002\n1,0.001\n"
        );
    }

    #[test]
    fn empty_table_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        let r = emit_plot(PlotKind::LrSchedule, &Table::new(&["epoch", "lr"]), &p);
        assert!(matches!(r, Err(Error::Io(_))));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
