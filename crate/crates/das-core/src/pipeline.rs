//! Preprocessing: timing synchronization, window sampling, cleaning.
//!
//! Continuous recordings carry a phase matrix (bins x time) with a known
//! sampling rate and bin spacing. Position tracks (the synthetic ground
//! truth standing in for GPS) are aligned to (bin, column) indices, windows
//! are cut at those origins, and a phase-extreme threshold separates valid
//! event windows from empty ones.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSample;
use crate::error::{Error, Result};
use crate::window::PhaseWindow;

/// A continuous phase recording from one node.
#[derive(Debug, Clone)]
pub struct Recording {
    pub node_id: String,
    pub sampling_rate: u32,
    pub bin_spacing: f64,
    n_bins: usize,
    n_cols: usize,
    data: Vec<f32>,
    /// Epoch of the first column, seconds.
    pub t0: f64,
}

impl Recording {
    pub fn new(
        node_id: String,
        sampling_rate: u32,
        bin_spacing: f64,
        n_bins: usize,
        n_cols: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if data.len() != n_bins * n_cols {
            return Err(Error::invalid(format!(
                "recording data length {} does not match {}x{}",
                data.len(),
                n_bins,
                n_cols
            )));
        }
        if sampling_rate == 0 || bin_spacing <= 0.0 {
            return Err(Error::invalid("recording needs positive rate and spacing"));
        }
        Ok(Recording {
            node_id,
            sampling_rate,
            bin_spacing,
            n_bins,
            n_cols,
            data,
            t0: 0.0,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, bin: usize, col: usize) -> f32 {
        self.data[bin * self.n_cols + col]
    }

    /// Time span covered by the columns, inclusive.
    pub fn time_span(&self) -> (f64, f64) {
        (
            self.t0,
            self.t0 + (self.n_cols.saturating_sub(1)) as f64 / self.sampling_rate as f64,
        )
    }
}

/// One timestamped source position along the fiber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    /// Seconds, same epoch as the recording.
    pub time: f64,
    /// Position along the fiber, meters.
    pub position_m: f64,
}

/// A track point resolved to recording indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignedIndex {
    pub track: usize,
    pub point: usize,
    pub col: usize,
    pub bin: usize,
}

/// Nearest integer with ties broken toward the lower index.
fn nearest_low(x: f64) -> f64 {
    (x - 0.5).ceil()
}

/// Align every track point to its nearest recording column and bin.
///
/// Timestamps must fall inside the recording span; a point outside produces
/// a [`Error::TimestampGap`]. Positions round to the nearest bin, ties to
/// the lower index.
pub fn synchronize(tracks: &[Vec<TrackPoint>], recording: &Recording) -> Result<Vec<AlignedIndex>> {
    let (start, end) = recording.time_span();
    let fs = recording.sampling_rate as f64;
    let mut out = Vec::new();
    for (ti, track) in tracks.iter().enumerate() {
        for (pi, p) in track.iter().enumerate() {
            if p.time < start || p.time > end {
                return Err(Error::TimestampGap {
                    t: p.time,
                    start,
                    end,
                });
            }
            let col = nearest_low((p.time - recording.t0) * fs) as usize;
            let bin_f = nearest_low(p.position_m / recording.bin_spacing);
            if bin_f < 0.0 || bin_f as usize >= recording.n_bins {
                return Err(Error::OutOfBounds {
                    bin: bin_f.max(0.0) as usize,
                    bin_end: bin_f.max(0.0) as usize,
                    col,
                    col_end: col,
                    h: recording.n_bins,
                    w: recording.n_cols,
                });
            }
            out.push(AlignedIndex {
                track: ti,
                point: pi,
                col: col.min(recording.n_cols - 1),
                bin: bin_f as usize,
            });
        }
    }
    Ok(out)
}

/// Cut the H x W submatrix with rows `[bin, bin+h)` and columns
/// `[col, col+w)` out of the recording. Pure read.
pub fn window_sample(
    recording: &Recording,
    bin: usize,
    col: usize,
    h: usize,
    w: usize,
) -> Result<PhaseWindow> {
    if h == 0 || w == 0 || bin + h > recording.n_bins || col + w > recording.n_cols {
        return Err(Error::OutOfBounds {
            bin,
            bin_end: bin + h,
            col,
            col_end: col + w,
            h: recording.n_bins,
            w: recording.n_cols,
        });
    }
    let mut data = Vec::with_capacity(h * w);
    for r in bin..bin + h {
        let row_start = r * recording.n_cols + col;
        data.extend_from_slice(&recording.data[row_start..row_start + w]);
    }
    PhaseWindow::from_data(
        h,
        w,
        data,
        bin,
        recording.t0 + col as f64 / recording.sampling_rate as f64,
        recording.node_id.clone(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid,
}

/// A window is valid iff its phase extreme exceeds the threshold
/// (`max |x| <= x_th` is invalid, boundary included).
pub fn validity(window: &PhaseWindow, x_th: f64) -> Validity {
    debug_assert!(x_th >= 0.0);
    if (window.max_abs() as f64) > x_th {
        Validity::Valid
    } else {
        Validity::Invalid
    }
}

/// Default cleaning threshold for a node: three sigma of its noise floor.
pub fn default_threshold(noise_std: f64) -> f64 {
    3.0 * noise_std
}

/// Drop invalid samples; returns survivors and the rejection count.
pub fn clean(samples: Vec<LabeledSample>, x_th: f64) -> (Vec<LabeledSample>, usize) {
    let before = samples.len();
    let kept: Vec<LabeledSample> = samples
        .into_iter()
        .filter(|s| validity(&s.window, x_th) == Validity::Valid)
        .collect();
    let rejected = before - kept.len();
    (kept, rejected)
}
