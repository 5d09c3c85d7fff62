use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::run::ExperimentRecord;
use crate::error::{invalid, Error, Result};
use crate::metrics::WeightedCloud;

pub const CSV_HEADER: &str =
    "iteration,wall_seconds,w2,mean_err,cov_err,mode_mass,min_weight,max_weight,clamp_count,dk_event_count";

/// Column names, in CSV order.
pub const RECORD_FIELDS: [&str; 10] = [
    "iteration",
    "wall_seconds",
    "w2",
    "mean_err",
    "cov_err",
    "mode_mass",
    "min_weight",
    "max_weight",
    "clamp_count",
    "dk_event_count",
];

impl ExperimentRecord {
    /// Numeric value of a column by name; `None` for empty cells.
    pub fn field(&self, name: &str) -> Result<Option<f64>> {
        Ok(match name {
            "iteration" => Some(self.iteration as f64),
            "wall_seconds" => self.wall_seconds,
            "w2" => self.w2,
            "mean_err" => self.mean_err,
            "cov_err" => self.cov_err,
            "mode_mass" => self.mode_mass,
            "min_weight" => Some(self.min_weight),
            "max_weight" => Some(self.max_weight),
            "clamp_count" => Some(self.clamp_count as f64),
            "dk_event_count" => Some(self.dk_event_count as f64),
            _ => return Err(invalid(format!("unknown record field '{name}'"))),
        })
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn records_to_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            cell(r.wall_seconds),
            cell(r.w2),
            cell(r.mean_err),
            cell(r.cov_err),
            cell(r.mode_mass),
            r.min_weight,
            r.max_weight,
            r.clamp_count,
            r.dk_event_count
        );
    }
    out
}

pub fn write_csv(records: &[ExperimentRecord], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, records_to_csv(records))?;
    Ok(())
}

/// Reads a file produced by [`write_csv`].
pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<ExperimentRecord>> {
    let path = path.as_ref();
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| perr(0, e.to_string()))?;
    let header = reader.headers().map_err(|e| perr(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(perr(1, "unexpected header".into()));
    }
    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| perr(line, e.to_string()))?;
        let opt = |k: usize| -> Result<Option<f64>> {
            match &row[k] {
                "" => Ok(None),
                s => s
                    .parse()
                    .map(Some)
                    .map_err(|_| perr(line, format!("bad number '{s}' in {}", RECORD_FIELDS[k]))),
            }
        };
        let req = |k: usize| -> Result<f64> {
            opt(k)?.ok_or_else(|| perr(line, format!("{} is required", RECORD_FIELDS[k])))
        };
        let count = |k: usize| -> Result<u64> {
            row[k]
                .parse()
                .map_err(|_| perr(line, format!("bad integer in {}", RECORD_FIELDS[k])))
        };
        records.push(ExperimentRecord {
            iteration: count(0)?,
            wall_seconds: opt(1)?,
            w2: opt(2)?,
            mean_err: opt(3)?,
            cov_err: opt(4)?,
            mode_mass: opt(5)?,
            min_weight: req(6)?,
            max_weight: req(7)?,
            clamp_count: count(8)?,
            dk_event_count: count(9)?,
        });
    }
    Ok(records)
}

/// Single-polyline plot of `field` against iteration, with axes and min/max labels.
pub fn write_svg_lineplot(records: &[ExperimentRecord], field: &str, path: impl AsRef<Path>) -> Result<()> {
    let mut pts = Vec::new();
    for r in records {
        if let Some(v) = r.field(field)? {
            if v.is_finite() {
                pts.push((r.iteration as f64, v));
            }
        }
    }
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 0.5, lo + 0.5)
        } else {
            (0.0, 1.0)
        }
    };
    let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{b}" stroke="black"/>"#,
        b = h - pad
    );
    let label = |svg: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{text}</text>"#
        );
    };
    label(&mut svg, pad, h - pad + 18.0, "start", format!("{x0}"));
    label(&mut svg, w - pad, h - pad + 18.0, "end", format!("{x1}"));
    label(&mut svg, pad - 4.0, h - pad, "end", format!("{y0:.4e}"));
    label(&mut svg, pad - 4.0, pad + 4.0, "end", format!("{y1:.4e}"));
    label(&mut svg, w / 2.0, h - 12.0, "middle", "iteration".into());
    label(&mut svg, w / 2.0, pad - 20.0, "middle", escape(field));
    let coords: Vec<String> = pts
        .iter()
        .map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        coords.join(" ")
    );
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reads a point cloud: one point per row. An optional header whose last column is
/// `weight` supplies masses (normalized on load); otherwise masses are uniform.
pub fn load_cloud_csv(path: impl AsRef<Path>) -> Result<WeightedCloud> {
    let path = path.as_ref();
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| perr(0, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut weighted = false;
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| perr(line, e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if idx == 0 => weighted = rec.iter().next_back() == Some("weight"),
            Err(_) => return Err(perr(line, "non-numeric cell".into())),
        }
    }
    let width = rows.first().map(Vec::len).ok_or_else(|| perr(0, "no data rows".into()))?;
    let dim = if weighted { width - 1 } else { width };
    if dim == 0 {
        return Err(perr(1, "no coordinate columns".into()));
    }
    let mut points = Vec::with_capacity(rows.len() * dim);
    let mut masses = Vec::with_capacity(rows.len());
    for row in &rows {
        points.extend_from_slice(&row[..dim]);
        masses.push(if weighted { row[dim] } else { 1.0 });
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) || masses.iter().any(|m| !(*m >= 0.0)) {
        return Err(perr(0, "weights must be nonnegative with positive sum".into()));
    }
    let mut masses: Vec<f64> = masses.iter().map(|m| m / total).collect();
    let drift = 1.0 - masses.iter().sum::<f64>();
    if let Some(k) = (0..masses.len()).max_by(|&a, &b| masses[a].total_cmp(&masses[b])) {
        masses[k] += drift;
    }
    WeightedCloud::new(points, masses, dim)
}
