//! Two-dimensional phase-shift windows.

use crate::error::{Error, Result};

/// Spatial window size (fiber bins) of the reference configuration.
pub const REF_H: usize = 64;
/// Temporal window size (samples) of the reference configuration.
pub const REF_W: usize = 512;

/// An H x W matrix of phase-shift samples. Rows are consecutive fiber bins,
/// columns are consecutive time samples; values are radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseWindow {
    h: usize,
    w: usize,
    data: Vec<f32>,
    /// Fiber bin index of the first row within the source recording.
    pub origin_bin: usize,
    /// Timestamp of the first column, seconds since the recording epoch.
    pub origin_time: f64,
    /// Identifier of the node that produced the window.
    pub node_id: String,
}

impl PhaseWindow {
    /// Build a window from row-major data, checking shape and finiteness.
    pub fn from_data(
        h: usize,
        w: usize,
        data: Vec<f32>,
        origin_bin: usize,
        origin_time: f64,
        node_id: impl Into<String>,
    ) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w {
            return Err(Error::invalid(format!(
                "window data length {} does not match {}x{}",
                data.len(),
                h,
                w
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite phase value at flat index {i}"
            )));
        }
        Ok(PhaseWindow {
            h,
            w,
            data,
            origin_bin,
            origin_time,
            node_id: node_id.into(),
        })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.w + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.w..(row + 1) * self.w]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Largest absolute phase value in the window.
    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_shape_and_nan() {
        assert!(PhaseWindow::from_data(2, 2, vec![0.0; 3], 0, 0.0, "n").is_err());
        assert!(PhaseWindow::from_data(2, 2, vec![0.0, f32::NAN, 0.0, 0.0], 0, 0.0, "n").is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let w = PhaseWindow::from_data(2, 3, vec![0., 1., 2., 3., 4., 5.], 0, 0.0, "n").unwrap();
        assert_eq!(w.get(0, 2), 2.0);
        assert_eq!(w.get(1, 0), 3.0);
        assert_eq!(w.row(1), &[3., 4., 5.]);
        assert_eq!(w.max_abs(), 5.0);
    }
}
