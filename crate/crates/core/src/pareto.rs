//! Pareto front quality indicators.
//!
//! Every axis is maximized. Hypervolume uses the origin as reference point,
//! coverage uses weak dominance ("covers": `>=` on every axis) and spacing
//! uses Euclidean nearest-neighbour distances.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{all_finite, KahanSum};

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint(Vec<f64>);

impl ParetoPoint {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("pareto point"));
        }
        if !all_finite(&values) {
            return Err(Error::NonFinite("pareto point".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<ParetoPoint> for Vec<f64> {
    fn from(p: ParetoPoint) -> Self {
        p.0
    }
}

/// A list of points of one dimension. Not necessarily non-dominated unless it
/// came out of [`non_dominated_filter`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParetoFront {
    points: Vec<ParetoPoint>,
}

impl ParetoFront {
    pub fn new(points: Vec<ParetoPoint>) -> Result<Self> {
        if let Some(first) = points.first() {
            let dim = first.dim();
            if let Some(bad) = points.iter().find(|p| p.dim() != dim) {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    actual: bad.dim(),
                });
            }
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(ParetoPoint::new).collect::<Result<_>>()?)
    }

    pub fn points(&self) -> &[ParetoPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dimension of the points, `None` when empty.
    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(ParetoPoint::dim)
    }

    /// Sorts ascending by the first axis, ties broken by the next axes.
    pub fn sort_by_first_axis(&mut self) {
        self.points.sort_by(|a, b| lexicographic(a.values(), b.values()));
    }

    /// Per-axis `(min, max)` over the points.
    pub fn axis_ranges(&self) -> Vec<(f64, f64)> {
        axis_ranges(std::iter::once(self))
    }

    /// Rescales every axis to [0, 1] using the given ranges. Degenerate axes
    /// (min == max) map to 1.
    pub fn normalized(&self, ranges: &[(f64, f64)]) -> Result<ParetoFront> {
        let rows = self
            .points
            .iter()
            .map(|p| {
                if p.dim() != ranges.len() {
                    return Err(Error::LengthMismatch {
                        expected: ranges.len(),
                        actual: p.dim(),
                    });
                }
                Ok(p.values()
                    .iter()
                    .zip(ranges)
                    .map(|(v, &(lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 1.0 })
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        ParetoFront::from_rows(rows)
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Joint per-axis ranges across several fronts of the same dimension.
pub fn axis_ranges<'a>(fronts: impl IntoIterator<Item = &'a ParetoFront>) -> Vec<(f64, f64)> {
    let mut ranges: Vec<(f64, f64)> = Vec::new();
    for front in fronts {
        for p in front.points() {
            if ranges.is_empty() {
                ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); p.dim()];
            }
            for (r, &v) in ranges.iter_mut().zip(p.values()) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
    }
    ranges
}

fn check_dims(p: &ParetoPoint, q: &ParetoPoint) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::LengthMismatch {
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    Ok(())
}

/// Weak dominance: `p` covers `q` when `p_i >= q_i` on every axis.
pub fn dominates(p: &ParetoPoint, q: &ParetoPoint) -> Result<bool> {
    check_dims(p, q)?;
    Ok(covers(p.values(), q.values()))
}

/// Strict dominance: covers and better on at least one axis.
pub fn strictly_dominates(p: &ParetoPoint, q: &ParetoPoint) -> Result<bool> {
    check_dims(p, q)?;
    Ok(covers(p.values(), q.values()) && p.values().iter().zip(q.values()).any(|(a, b)| a > b))
}

#[inline]
pub(crate) fn covers(p: &[f64], q: &[f64]) -> bool {
    p.iter().zip(q).all(|(a, b)| a >= b)
}

/// Keeps the points not strictly dominated by another; duplicates collapse to
/// their first occurrence. Preserves input order.
pub fn non_dominated_filter(points: &[ParetoPoint]) -> Result<ParetoFront> {
    let Some(first) = points.first() else {
        return Ok(ParetoFront::default());
    };
    for p in points {
        check_dims(first, p)?;
    }
    let mut kept: Vec<ParetoPoint> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let dominated = points.iter().enumerate().any(|(j, q)| {
            i != j
                && covers(q.values(), p.values())
                && q.values().iter().zip(p.values()).any(|(a, b)| a > b)
        });
        if dominated || kept.iter().any(|k| k == p) {
            continue;
        }
        kept.push(p.clone());
    }
    ParetoFront::new(kept)
}

/// Area dominated by 2-D points above the origin; tolerates dominated points.
fn hypervolume_2d(points: &mut [(f64, f64)]) -> f64 {
    points.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut y_max = 0.0_f64;
    let mut area = 0.0;
    for &(x, y) in points.iter() {
        if y > y_max {
            area += x * (y - y_max);
            y_max = y;
        }
    }
    area
}

/// Lebesgue measure of the union of boxes `[0, p]` for 2 or 3 objectives.
///
/// 2-D is a sort-and-sweep; 3-D slices along the third axis in descending
/// order and sweeps each slab's 2-D cross-section.
pub fn hypervolume(front: &ParetoFront) -> Result<f64> {
    let Some(dim) = front.dim() else {
        return Ok(0.0);
    };
    if front.points().iter().flat_map(|p| p.values()).any(|v| *v < 0.0) {
        return Err(Error::invalid(
            "front",
            "hypervolume requires non-negative coordinates (origin reference)",
        ));
    }
    match dim {
        2 => {
            let mut pts: Vec<(f64, f64)> =
                front.points().iter().map(|p| (p.0[0], p.0[1])).collect();
            Ok(hypervolume_2d(&mut pts))
        }
        3 => {
            let mut pts: Vec<[f64; 3]> = front
                .points()
                .iter()
                .map(|p| [p.0[0], p.0[1], p.0[2]])
                .collect();
            pts.sort_by(|a, b| b[2].total_cmp(&a[2]));
            let mut volume = 0.0;
            let mut slice: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
            for (k, p) in pts.iter().enumerate() {
                slice.push((p[0], p[1]));
                let next_z = pts.get(k + 1).map_or(0.0, |q| q[2]);
                let depth = p[2] - next_z;
                if depth > 0.0 {
                    volume += depth * hypervolume_2d(&mut slice.clone());
                }
            }
            Ok(volume)
        }
        n => Err(Error::UnsupportedDimension(n)),
    }
}

/// Fraction of `b`'s points covered by at least one point of `a`.
pub fn coverage(a: &ParetoFront, b: &ParetoFront) -> Result<f64> {
    if b.is_empty() {
        return Err(Error::Empty("coverage target front"));
    }
    if let (Some(da), Some(db)) = (a.dim(), b.dim()) {
        if da != db {
            return Err(Error::LengthMismatch {
                expected: da,
                actual: db,
            });
        }
    }
    let covered = b
        .points()
        .iter()
        .filter(|q| a.points().iter().any(|p| covers(p.values(), q.values())))
        .count();
    Ok(covered as f64 / b.len() as f64)
}

/// Distance used by [`spacing`].
pub fn spacing_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Sample standard deviation of nearest-neighbour distances.
pub fn spacing(front: &ParetoFront) -> Result<f64> {
    let n = front.len();
    if n < 2 {
        return Err(Error::Undefined("spacing needs |front| >= 2".into()));
    }
    let pts = front.points();
    let nearest: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| spacing_distance(pts[i].values(), pts[j].values()))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mean = nearest.iter().copied().collect::<KahanSum>().total() / n as f64;
    let ss = nearest
        .iter()
        .map(|d| (d - mean) * (d - mean))
        .collect::<KahanSum>()
        .total();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Column name prefix used in front CSV headers.
pub const OBJECTIVE_PREFIX: &str = "obj_";

/// Writes a front as CSV with header `obj_<name>,...`.
pub fn write_front_csv(path: &Path, names: &[String], front: &ParetoFront) -> Result<()> {
    if let Some(dim) = front.dim() {
        if dim != names.len() {
            return Err(Error::LengthMismatch {
                expected: names.len(),
                actual: dim,
            });
        }
    }
    let mut out = String::new();
    let header: Vec<String> = names.iter().map(|n| format!("{OBJECTIVE_PREFIX}{n}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for p in front.points() {
        let row: Vec<String> = p.values().iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a front CSV. Returns objective names (prefix stripped) and points.
pub fn read_front_csv(path: &Path) -> Result<(Vec<String>, ParetoFront)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let names: Vec<String> = header
        .iter()
        .map(|h| {
            h.strip_prefix(OBJECTIVE_PREFIX)
                .map(str::to_string)
                .ok_or_else(|| Error::Format {
                    path: path.into(),
                    reason: format!("column `{h}` lacks the `{OBJECTIVE_PREFIX}` prefix"),
                })
        })
        .collect::<Result<_>>()?;
    if names.is_empty() {
        return Err(Error::Format {
            path: path.into(),
            reason: "no objective columns".into(),
        });
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let row = record
            .iter()
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Format {
                    path: path.into(),
                    reason: format!("row {}: `{v}` is not a number", line + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let front = ParetoFront::from_rows(rows).map_err(|e| Error::Format {
        path: path.into(),
        reason: e.to_string(),
    })?;
    Ok((names, front))
}
