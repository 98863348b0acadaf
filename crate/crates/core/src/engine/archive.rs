use crate::error::{Error, Result};
use crate::pareto::{covers, ParetoFront, ParetoPoint};

/// A mutually non-dominated set of evaluation points, each tagged with the
/// checkpoint it came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoArchive {
    entries: Vec<(ParetoPoint, String)>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(ParetoPoint, String)] {
        &self.entries
    }

    pub fn front(&self) -> ParetoFront {
        ParetoFront::new(self.entries.iter().map(|(p, _)| p.clone()).collect())
            .expect("archive points share one dimension")
    }

    /// Inserts `point` unless an archived point covers it, then drops every
    /// archived point it dominates. Returns whether the point was inserted.
    pub fn update(&mut self, point: ParetoPoint, tag: impl Into<String>) -> Result<bool> {
        if let Some((first, _)) = self.entries.first() {
            if first.dim() != point.dim() {
                return Err(Error::LengthMismatch {
                    expected: first.dim(),
                    actual: point.dim(),
                });
            }
        }
        if self
            .entries
            .iter()
            .any(|(p, _)| covers(p.values(), point.values()))
        {
            return Ok(false);
        }
        self.entries
            .retain(|(p, _)| !covers(point.values(), p.values()));
        self.entries.push((point, tag.into()));
        Ok(true)
    }
}

/// Free-function form of [`ParetoArchive::update`].
pub fn update_pareto_archive(
    archive: &mut ParetoArchive,
    point: ParetoPoint,
    tag: impl Into<String>,
) -> Result<bool> {
    archive.update(point, tag)
}
