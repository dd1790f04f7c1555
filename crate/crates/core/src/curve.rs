use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("grid has {grid} points but {column} has {len}")]
    LengthMismatch {
        grid: usize,
        column: &'static str,
        len: usize,
    },
    #[error("grid is not strictly increasing at index {0}")]
    UnsortedGrid(usize),
    #[error("grid contains a non-finite time at index {0}")]
    NonFiniteTime(usize),
}

/// A function of time stored on a strictly increasing grid, optionally with
/// pointwise 95% bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
    bounds: Option<(Vec<f64>, Vec<f64>)>,
}

impl StepCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self, CurveError> {
        for (i, w) in grid.windows(2).enumerate() {
            if w[1].is_nan() || w[1] <= w[0] {
                return Err(CurveError::UnsortedGrid(i + 1));
            }
        }
        if let Some(i) = grid.iter().position(|t| !t.is_finite()) {
            return Err(CurveError::NonFiniteTime(i));
        }
        if values.len() != grid.len() {
            return Err(CurveError::LengthMismatch {
                grid: grid.len(),
                column: "values",
                len: values.len(),
            });
        }
        Ok(StepCurve {
            grid,
            values,
            bounds: None,
        })
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, CurveError> {
        for (column, v) in [("lower", &lower), ("upper", &upper)] {
            if v.len() != self.grid.len() {
                return Err(CurveError::LengthMismatch {
                    grid: self.grid.len(),
                    column,
                    len: v.len(),
                });
            }
        }
        self.bounds = Some((lower, upper));
        Ok(self)
    }

    /// Attaches `value ± z * se` bounds.
    pub fn with_standard_errors(self, se: &[f64], z: f64) -> Result<Self, CurveError> {
        let lower = self.values.iter().zip(se).map(|(v, s)| v - z * s).collect();
        let upper = self.values.iter().zip(se).map(|(v, s)| v + z * s).collect();
        self.with_bounds(lower, upper)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lower(&self) -> Option<&[f64]> {
        self.bounds.as_ref().map(|(l, _)| l.as_slice())
    }

    pub fn upper(&self) -> Option<&[f64]> {
        self.bounds.as_ref().map(|(_, u)| u.as_slice())
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Right-continuous step evaluation: the value at the last grid point
    /// `<= t`, or `None` before the first grid point.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let idx = self.grid.partition_point(|&g| g <= t);
        idx.checked_sub(1).map(|i| self.values[i])
    }

    /// Index of the grid point closest to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        (0..self.grid.len()).min_by(|&a, &b| {
            (self.grid[a] - t)
                .abs()
                .partial_cmp(&(self.grid[b] - t).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.iter().copied().zip(self.values.iter().copied())
    }
}

/// Evenly spaced grid `start, start + step, ...` up to `end` (inclusive within
/// rounding). Points are computed as `start + i * step` to avoid drift.
pub fn uniform_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && end >= start, "invalid grid [{start}, {end}] step {step}");
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}
