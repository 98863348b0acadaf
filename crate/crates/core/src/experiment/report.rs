use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::runner::{MERGED_FRONT_FILE, RUN_FRONT_FILE};
use crate::error::{Error, Result};
use crate::pareto::{
    axis_ranges, coverage, hypervolume, non_dominated_filter, read_front_csv, spacing, ParetoFront,
};

/// A metric value or the reason it is not available.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Value(f64),
    Unavailable(String),
}

impl Cell {
    fn from_result(r: Result<f64>) -> Self {
        match r {
            Ok(v) => Cell::Value(v),
            Err(Error::Undefined(_)) => Cell::Unavailable("undefined (|front| < 2)".into()),
            Err(Error::UnsupportedDimension(n)) => {
                Cell::Unavailable(format!("unsupported ({n} objectives)"))
            }
            Err(e) => Cell::Unavailable(e.to_string()),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            Cell::Unavailable(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Value(v) => format!("{v:.6}"),
            Cell::Unavailable(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontStats {
    pub label: String,
    pub points: usize,
    pub hypervolume: Cell,
    pub hypervolume_normalized: Cell,
    pub spacing: Cell,
    pub spacing_normalized: Cell,
}

fn front_stats(label: &str, front: &ParetoFront, ranges: &[(f64, f64)]) -> Result<FrontStats> {
    let normalized = front.normalized(ranges)?;
    Ok(FrontStats {
        label: label.to_string(),
        points: front.len(),
        hypervolume: Cell::from_result(hypervolume(front)),
        hypervolume_normalized: Cell::from_result(hypervolume(&normalized)),
        spacing: Cell::from_result(spacing(front)),
        spacing_normalized: Cell::from_result(spacing(&normalized)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisRange {
    pub objective: String,
    pub min: f64,
    pub max: f64,
}

/// `C(a, b)` and `C(b, a)` computed from the same pair of fronts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoveragePair {
    pub a: String,
    pub b: String,
    pub c_a_b: f64,
    pub c_b_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub objectives: Vec<String>,
    /// Ranges used for the normalized variants.
    pub axis_ranges: Vec<AxisRange>,
    pub fronts: Vec<FrontStats>,
    pub coverage: Option<CoveragePair>,
    pub notes: Vec<String>,
}

fn notes_for(objectives: &[String]) -> Vec<String> {
    let mut notes = vec![
        "normalized metrics use per-axis min-max ranges over all reported fronts".to_string(),
    ];
    if objectives
        .iter()
        .any(|o| o.starts_with("avg_price") || o.starts_with("avg_recency"))
    {
        notes.push(
            "avg_price@k and avg_recency@k are this toolkit's own evaluation axes: mean min-max normalized item weight over the top-k"
                .to_string(),
        );
    }
    notes
}

/// Hypervolume and spacing per labelled front, raw and normalized, plus
/// coverage in both directions when exactly two fronts are given.
pub fn build_report(objectives: &[String], fronts: &[(String, ParetoFront)]) -> Result<MetricsReport> {
    for (label, f) in fronts {
        if let Some(d) = f.dim() {
            if d != objectives.len() {
                return Err(Error::invalid(
                    "front",
                    format!("{label} has {d} objectives, expected {}", objectives.len()),
                ));
            }
        }
    }
    let ranges = axis_ranges(fronts.iter().map(|(_, f)| f));
    let stats = fronts
        .iter()
        .map(|(label, f)| front_stats(label, f, &ranges))
        .collect::<Result<Vec<_>>>()?;
    let coverage = match fronts {
        [(la, a), (lb, b)] => Some(CoveragePair {
            a: la.clone(),
            b: lb.clone(),
            c_a_b: coverage(a, b)?,
            c_b_a: coverage(b, a)?,
        }),
        _ => None,
    };
    Ok(MetricsReport {
        objectives: objectives.to_vec(),
        axis_ranges: objectives
            .iter()
            .zip(ranges)
            .map(|(o, (min, max))| AxisRange {
                objective: o.clone(),
                min,
                max,
            })
            .collect(),
        fronts: stats,
        coverage,
        notes: notes_for(objectives),
    })
}

/// Reads one or two front CSVs; two fronts must share objective names.
pub fn metrics_report(first: &Path, second: Option<&Path>) -> Result<MetricsReport> {
    let (names, a) = read_front_csv(first)?;
    let mut fronts = vec![(first.display().to_string(), a)];
    if let Some(second) = second {
        let (names_b, b) = read_front_csv(second)?;
        if names_b != names {
            return Err(Error::invalid(
                "fronts",
                format!("objective mismatch: {names:?} vs {names_b:?}"),
            ));
        }
        fronts.push((second.display().to_string(), b));
    }
    build_report(&names, &fronts)
}

/// The merged front of a variant directory, or a single run's front.
pub fn front_file_in(dir: &Path) -> Result<PathBuf> {
    for name in [MERGED_FRONT_FILE, RUN_FRONT_FILE] {
        let p = dir.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::invalid(
        "directory",
        format!("{} has no {MERGED_FRONT_FILE} or {RUN_FRONT_FILE}", dir.display()),
    ))
}

fn dir_label(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Compares the fronts stored in two variant directories.
pub fn compare_report(first: &Path, second: &Path) -> Result<MetricsReport> {
    let (names, a) = read_front_csv(&front_file_in(first)?)?;
    let (names_b, b) = read_front_csv(&front_file_in(second)?)?;
    if names != names_b {
        return Err(Error::invalid(
            "fronts",
            format!("objective mismatch: {names:?} vs {names_b:?}"),
        ));
    }
    let mut la = dir_label(first);
    let lb = dir_label(second);
    if la == lb {
        la = first.display().to_string();
    }
    build_report(&names, &[(la, a), (lb, b)])
}

/// Non-dominated union of the fronts in `dirs`, sorted by the first axis.
pub fn export_front(dirs: &[PathBuf]) -> Result<(Vec<String>, ParetoFront)> {
    let mut names: Option<Vec<String>> = None;
    let mut points = Vec::new();
    for dir in dirs {
        let path = if dir.is_file() { dir.clone() } else { front_file_in(dir)? };
        let (n, front) = read_front_csv(&path)?;
        match &names {
            Some(expected) if *expected != n => {
                return Err(Error::invalid(
                    "fronts",
                    format!("{} has objectives {n:?}, expected {expected:?}", path.display()),
                ))
            }
            Some(_) => {}
            None => names = Some(n),
        }
        points.extend(front.points().iter().cloned());
    }
    let names = names.ok_or(Error::Empty("run directories"))?;
    let mut merged = non_dominated_filter(&points)?;
    merged.sort_by_first_axis();
    Ok((names, merged))
}

impl MetricsReport {
    /// Aligned plain-text table.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = vec![[
            "front",
            "points",
            "hypervolume",
            "hypervolume(norm)",
            "spacing",
            "spacing(norm)",
        ]
        .map(String::from)
        .to_vec()];
        if self.coverage.is_some() {
            rows[0].push("coverage".into());
        }
        for (i, f) in self.fronts.iter().enumerate() {
            let mut row = vec![
                f.label.clone(),
                f.points.to_string(),
                f.hypervolume.render(),
                f.hypervolume_normalized.render(),
                f.spacing.render(),
                f.spacing_normalized.render(),
            ];
            if let Some(c) = &self.coverage {
                let (value, other) = if i == 0 { (c.c_a_b, &c.b) } else { (c.c_b_a, &c.a) };
                row.push(format!("C({}, {other}) = {value:.6}", f.label));
            }
            rows.push(row);
        }
        let cols = rows[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (cols - 1);
                let _ = writeln!(out, "{}", "-".repeat(total));
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "axis ranges (for normalized columns):");
        for r in &self.axis_ranges {
            let _ = writeln!(out, "  {}: [{:.6}, {:.6}]", r.objective, r.min, r.max);
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
