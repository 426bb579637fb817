//! Electrode layouts and windowed spectral observations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DomainSpec, Point};

/// Rectangular electrode array. Channels are numbered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeLayout {
    pub rows: usize,
    pub cols: usize,
    /// Inter-electrode distance in normalized spatial units.
    pub spacing: f64,
}

/// Dirichlet margin around the array, as a fraction of its extent per side.
pub const DOMAIN_MARGIN: f64 = 0.2;

impl ElectrodeLayout {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("electrode layout needs rows, cols >= 1".into()));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::Config("electrode spacing must be > 0".into()));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.rows * self.cols
    }

    fn extent(&self, count: usize) -> f64 {
        if count > 1 {
            (count - 1) as f64 * self.spacing
        } else {
            self.spacing
        }
    }

    /// Side lengths of the enclosing domain: the array's bounding box grown
    /// by [`DOMAIN_MARGIN`] of its extent on every side.
    pub fn domain_lengths(&self) -> (f64, f64) {
        let scale = 1.0 + 2.0 * DOMAIN_MARGIN;
        (self.extent(self.cols) * scale, self.extent(self.rows) * scale)
    }

    /// Rectangle domain around a 2D array, or an interval around a single row.
    pub fn domain(&self, alpha: f64) -> DomainSpec {
        let (lx, ly) = self.domain_lengths();
        if self.rows == 1 {
            DomainSpec::interval(lx, alpha)
        } else {
            DomainSpec::rectangle(lx, ly, alpha)
        }
    }

    pub fn position(&self, row: usize, col: usize) -> Point {
        let (lx, ly) = self.domain_lengths();
        let x0 = 0.5 * (lx - (self.cols - 1) as f64 * self.spacing);
        let y0 = 0.5 * (ly - (self.rows - 1) as f64 * self.spacing);
        let y = if self.rows == 1 { 0.0 } else { y0 + row as f64 * self.spacing };
        [x0 + col as f64 * self.spacing, y]
    }

    pub fn positions(&self) -> Vec<Point> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| self.position(r, c))
            .collect()
    }

    /// (row, col) of a channel index.
    pub fn cell(&self, channel: usize) -> (usize, usize) {
        (channel / self.cols, channel % self.cols)
    }

    pub fn channel_ids(&self) -> Vec<String> {
        (0..self.n_channels())
            .map(|ch| {
                let (r, c) = self.cell(ch);
                format!("r{r}c{c}")
            })
            .collect()
    }
}

/// One window of observed spectra, `power[channel][freq]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWindow {
    pub t: f64,
    pub positions: Vec<Point>,
    pub freqs_hz: Vec<f64>,
    pub power: Vec<Vec<f64>>,
}

impl SpectralWindow {
    pub fn n_channels(&self) -> usize {
        self.positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.power.len() != self.positions.len() {
            return Err(Error::InvalidArgument(format!(
                "{} spectra for {} channels",
                self.power.len(),
                self.positions.len()
            )));
        }
        for (ch, row) in self.power.iter().enumerate() {
            if row.len() != self.freqs_hz.len() {
                return Err(Error::InvalidArgument(format!(
                    "channel {ch}: {} values for {} frequencies",
                    row.len(),
                    self.freqs_hz.len()
                )));
            }
            if row.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "channel {ch}: power must be finite and > 0"
                )));
            }
        }
        Ok(())
    }

    /// Observations flattened channel-major in log10 power.
    pub fn log10_flat(&self) -> Vec<f64> {
        self.power.iter().flatten().map(|p| p.log10()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_sits_inside_its_domain() {
        let layout = ElectrodeLayout { rows: 4, cols: 5, spacing: 1.0 };
        let (lx, ly) = layout.domain_lengths();
        assert!((lx - 5.6).abs() < 1e-12 && (ly - 4.2).abs() < 1e-12);
        let pos = layout.positions();
        assert_eq!(pos.len(), 20);
        assert!((pos[0][0] - 0.8).abs() < 1e-12 && (pos[0][1] - 0.6).abs() < 1e-12);
        assert!((pos[19][0] - 4.8).abs() < 1e-12 && (pos[19][1] - 3.6).abs() < 1e-12);
        let d = layout.domain(1.0);
        assert!(pos.iter().all(|p| d.contains(*p)));
        assert_eq!(layout.cell(7), (1, 2));
        assert_eq!(layout.channel_ids()[7], "r1c2");
    }

    #[test]
    fn single_row_uses_interval() {
        let layout = ElectrodeLayout { rows: 1, cols: 8, spacing: 0.5 };
        let d = layout.domain(1.0);
        assert!(matches!(d.shape, crate::field::DomainShape::Interval { .. }));
        assert!(layout.positions().iter().all(|p| p[1] == 0.0 && d.contains(*p)));
    }

    #[test]
    fn window_validation() {
        let w = SpectralWindow {
            t: 0.0,
            positions: vec![[0.5, 0.5]],
            freqs_hz: vec![1.0, 2.0],
            power: vec![vec![1.0, 0.0]],
        };
        assert!(w.validate().is_err());
    }
}
