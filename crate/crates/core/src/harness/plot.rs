//! SVG charts from the CSV outputs. The chart kind is picked from the file
//! name (`traces`, `challenges`, `maneuver`, `sweep`, `security`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::HarnessError;

/// A parsed CSV: header plus string cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub file: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let file = path.display().to_string();
        let text = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_slice());
        let mut records = r.records();
        let headers = match records.next() {
            Some(h) => h?.iter().map(str::to_string).collect(),
            None => Vec::new(),
        };
        let rows = records
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { file, headers, rows })
    }

    /// True for a zero-byte file; such a file gets bare axes.
    pub fn is_blank(&self) -> bool {
        self.headers.is_empty()
    }

    fn index(&self, column: &str) -> Result<usize, HarnessError> {
        self.headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| self.schema(column))
    }

    fn schema(&self, column: &str) -> HarnessError {
        HarnessError::Schema {
            file: self.file.clone(),
            column: column.to_string(),
        }
    }

    /// Numeric column; empty cells become `None`.
    pub fn numbers(&self, column: &str) -> Result<Vec<Option<f64>>, HarnessError> {
        let i = self.index(column)?;
        self.rows
            .iter()
            .map(|r| {
                let cell = r.get(i).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse().map(Some).map_err(|_| self.schema(column))
                }
            })
            .collect()
    }

    pub fn text(&self, column: &str) -> Result<Vec<String>, HarnessError> {
        let i = self.index(column)?;
        Ok(self
            .rows
            .iter()
            .map(|r| r.get(i).cloned().unwrap_or_default())
            .collect())
    }

    fn require(&self, columns: &[&str]) -> Result<(), HarnessError> {
        if self.is_blank() {
            return Ok(());
        }
        for c in columns {
            self.index(c)?;
        }
        Ok(())
    }
}

type Series = (String, Vec<(f64, f64)>);

struct Panel<'a> {
    title: &'a str,
    x_label: &'a str,
    y_label: &'a str,
    series: Vec<Series>,
    /// Vertical segments drawn without a legend entry.
    bars: Vec<(f64, f64, f64)>,
    points_only: Vec<Series>,
}

impl<'a> Panel<'a> {
    fn new(title: &'a str, x_label: &'a str, y_label: &'a str) -> Self {
        Self {
            title,
            x_label,
            y_label,
            series: Vec::new(),
            bars: Vec::new(),
            points_only: Vec::new(),
        }
    }

    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let pts = self
            .series
            .iter()
            .chain(&self.points_only)
            .flat_map(|s| s.1.iter().copied())
            .chain(self.bars.iter().flat_map(|&(x, lo, hi)| [(x, lo), (x, hi)]))
            .filter(|(x, y)| x.is_finite() && y.is_finite());
        let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
        let mut yr = xr;
        for (x, y) in pts {
            xr = (xr.0.min(x), xr.1.max(x));
            yr = (yr.0.min(y), yr.1.max(y));
        }
        let pad = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let m = (hi - lo) * 0.05;
                (lo - m, hi + m)
            }
        };
        (pad(xr), pad(yr))
    }
}

fn draw_panels(out: &Path, panels: &[Panel], size: (u32, u32)) -> Result<(), HarnessError> {
    let plot_err = |e: &dyn std::fmt::Display| HarnessError::Plot(format!("{}: {e}", out.display()));
    let root = SVGBackend::new(out, size).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let areas = root.split_evenly((panels.len(), 1));
    for (panel, area) in panels.iter().zip(areas.iter()) {
        let ((x0, x1), (y0, y1)) = panel.bounds();
        let mut chart = ChartBuilder::on(area)
            .caption(panel.title, ("sans-serif", 18))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(55)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(|e| plot_err(&e))?;
        chart
            .configure_mesh()
            .x_desc(panel.x_label)
            .y_desc(panel.y_label)
            .draw()
            .map_err(|e| plot_err(&e))?;
        for (i, (name, pts)) in panel.series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(|e| plot_err(&e))?
                .label(name.clone())
                .legend(move |(x, y)| PathElement::new([(x, y), (x + 15, y)], color.stroke_width(2)));
        }
        for &(x, lo, hi) in &panel.bars {
            chart
                .draw_series(LineSeries::new([(x, lo), (x, hi)], BLACK.stroke_width(1)))
                .map_err(|e| plot_err(&e))?;
        }
        for (i, (name, pts)) in panel.points_only.iter().enumerate() {
            let color = Palette99::pick(i + panel.series.len()).to_rgba();
            chart
                .draw_series(pts.iter().map(|&p| Circle::new(p, 4, color.filled())))
                .map_err(|e| plot_err(&e))?
                .label(name.clone())
                .legend(move |(x, y)| Circle::new((x + 7, y), 4, color.filled()));
        }
        if !panel.series.is_empty() || !panel.points_only.is_empty() {
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(|e| plot_err(&e))?;
        }
    }
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

fn pairs(xs: &[Option<f64>], ys: &[Option<f64>]) -> Vec<(f64, f64)> {
    xs.iter().zip(ys).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect()
}

/// Groups rows by the value of `key`, keeping first-seen order stable.
fn grouped(t: &Table, key: &str, x: &str, y: &str) -> Result<Vec<Series>, HarnessError> {
    if t.is_blank() {
        return Ok(Vec::new());
    }
    let keys = t.text(key)?;
    let xs = t.numbers(x)?;
    let ys = t.numbers(y)?;
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for ((k, x), y) in keys.into_iter().zip(xs).zip(ys) {
        if let (Some(x), Some(y)) = (x, y) {
            groups.entry(k).or_default().push((x, y));
        }
    }
    Ok(groups.into_iter().collect())
}

fn traces_chart(t: &Table, out: &Path) -> Result<(), HarnessError> {
    t.require(&["time", "vehicle", "velocity", "gap_to_verifier"])?;
    let mut gap = Panel::new("Distance behind the verifier", "time [s]", "gap [m]");
    let mut vel = Panel::new("Velocity", "time [s]", "velocity [m/s]");
    gap.series = grouped(t, "vehicle", "time", "gap_to_verifier")?;
    vel.series = grouped(t, "vehicle", "time", "velocity")?;
    draw_panels(out, &[gap, vel], (1000, 800))
}

fn challenges_chart(t: &Table, out: &Path) -> Result<(), HarnessError> {
    t.require(&["scheduled_time", "original_time", "distance", "measured"])?;
    let mut p = Panel::new("Challenge schedule", "time [s]", "distance [m]");
    if !t.is_blank() {
        let d = t.numbers("distance")?;
        p.series
            .push(("scheduled".into(), pairs(&t.numbers("scheduled_time")?, &d)));
        p.series
            .push(("original".into(), pairs(&t.numbers("original_time")?, &d)));
        p.points_only.push((
            "measured".into(),
            pairs(&t.numbers("scheduled_time")?, &t.numbers("measured")?),
        ));
    }
    draw_panels(out, &[p], (1000, 500))
}

fn maneuver_chart(t: &Table, out: &Path) -> Result<(), HarnessError> {
    t.require(&["lambda", "time", "acceleration", "velocity", "distance"])?;
    let mut panels = Vec::new();
    for (col, title, unit) in [
        ("acceleration", "Acceleration", "a [m/s²]"),
        ("velocity", "Velocity", "v [m/s]"),
        ("distance", "Distance", "d [m]"),
    ] {
        let mut p = Panel::new(title, "time [s]", unit);
        p.series = grouped(t, "lambda", "time", col)?
            .into_iter()
            .map(|(k, s)| (format!("lambda={k}"), s))
            .collect();
        panels.push(p);
    }
    draw_panels(out, &panels, (1000, 1000))
}

fn sweep_chart(t: &Table, out: &Path) -> Result<(), HarnessError> {
    t.require(&["param", "value", "mean_time", "std_time"])?;
    let name = t
        .text("param")
        .ok()
        .and_then(|v| v.first().cloned())
        .unwrap_or_default();
    let mut p = Panel::new("Verification time", &name, "time [s]");
    if !t.is_blank() {
        let x = t.numbers("value")?;
        let m = t.numbers("mean_time")?;
        let s = t.numbers("std_time")?;
        p.series.push(("mean".into(), pairs(&x, &m)));
        for ((x, m), s) in x.iter().zip(&m).zip(&s) {
            if let (Some(x), Some(m), Some(s)) = (x, m, s) {
                p.bars.push((*x, m - s, m + s));
            }
        }
    }
    draw_panels(out, &[p], (900, 600))
}

fn security_chart(t: &Table, out: &Path) -> Result<(), HarnessError> {
    let cols = [
        "interior_rate",
        "marginal_product",
        "exact_forward",
        "schedule_interior",
        "guess_bound",
    ];
    t.require(&["K"])?;
    t.require(&cols)?;
    let mut p = Panel::new("Follower pass probability", "K", "log10 probability");
    if !t.is_blank() {
        let k = t.numbers("K")?;
        for c in cols {
            let logs: Vec<(f64, f64)> = pairs(&k, &t.numbers(c)?)
                .into_iter()
                .filter(|&(_, y)| y > 0.0)
                .map(|(x, y)| (x, y.log10()))
                .collect();
            if c == "interior_rate" {
                p.points_only.push(("simulated".into(), logs));
            } else {
                p.series.push((c.to_string(), logs));
            }
        }
    }
    draw_panels(out, &[p], (900, 600))
}

/// Chart kind for a CSV path, from its file name.
pub fn chart_kind(path: &Path) -> Option<&'static str> {
    let stem = path.file_stem()?.to_str()?.to_ascii_lowercase();
    ["traces", "challenges", "maneuver", "sweep", "security"]
        .into_iter()
        .find(|k| stem.contains(k))
}

/// Renders one SVG per recognised CSV into `out_dir`; returns the files
/// written. Unrecognised CSVs are skipped.
pub fn emit_plots(inputs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut written = Vec::new();
    for input in inputs {
        let Some(kind) = chart_kind(input) else { continue };
        let table = Table::read(input)?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or(kind);
        let out = out_dir.join(format!("{stem}.svg"));
        match kind {
            "traces" => traces_chart(&table, &out)?,
            "challenges" => challenges_chart(&table, &out)?,
            "maneuver" => maneuver_chart(&table, &out)?,
            "sweep" => sweep_chart(&table, &out)?,
            _ => security_chart(&table, &out)?,
        }
        written.push(out);
    }
    Ok(written)
}

/// CSV files directly inside `dir`, sorted by name.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}
