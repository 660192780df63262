use serde::{Deserialize, Serialize};

use super::PcrepError;

/// Spherical range-image layout.
///
/// Rows are addressed by a per-row inclination table (radians); columns
/// split the azimuth span `[azimuth[0], azimuth[1])` into `width` equal bins.
/// A point lands on the row whose inclination is nearest to its own and is
/// dropped when it lies more than half a row spacing beyond the outermost rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeLayout {
    height: usize,
    width: usize,
    inclinations: Vec<f64>,
    azimuth: [f64; 2],
}

impl RangeLayout {
    pub fn new(width: usize, inclinations: Vec<f64>, azimuth: [f64; 2]) -> Result<Self, PcrepError> {
        let height = inclinations.len();
        if height == 0 || width == 0 {
            return Err(PcrepError::InvalidSpec("range layout needs H >= 1 and W >= 1".into()));
        }
        if inclinations.iter().any(|v| !v.is_finite()) {
            return Err(PcrepError::InvalidSpec("inclinations must be finite".into()));
        }
        if !(azimuth[0].is_finite() && azimuth[1].is_finite() && azimuth[1] > azimuth[0]) {
            return Err(PcrepError::InvalidSpec("azimuth span must be increasing".into()));
        }
        Ok(Self { height, width, inclinations, azimuth })
    }

    /// `height` rows evenly spaced from `inc_max` (row 0) down to `inc_min`; full 360° azimuth.
    pub fn uniform(height: usize, width: usize, inc_min: f64, inc_max: f64) -> Result<Self, PcrepError> {
        let inc = (0..height)
            .map(|r| {
                if height == 1 {
                    0.5 * (inc_min + inc_max)
                } else {
                    inc_max - (inc_max - inc_min) * r as f64 / (height - 1) as f64
                }
            })
            .collect();
        Self::new(width, inc, [-std::f64::consts::PI, std::f64::consts::PI])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn inclinations(&self) -> &[f64] {
        &self.inclinations
    }

    pub fn azimuth_span(&self) -> [f64; 2] {
        self.azimuth
    }

    /// Image size after `level` stride-2 downsamples.
    pub fn extent_at(&self, level: u32) -> (usize, usize) {
        let f = 1usize << level;
        (self.height.div_ceil(f), self.width.div_ceil(f))
    }

    /// Base-resolution pixel `(row, col)` hit by `p`, plus its range.
    pub fn project(&self, p: [f64; 3]) -> Option<(u32, u32, f64)> {
        let rxy = p[0].hypot(p[1]);
        let range = rxy.hypot(p[2]);
        if !(range > 0.0) || !range.is_finite() {
            return None;
        }
        let inc = p[2].atan2(rxy);
        let row = self.nearest_row(inc)?;
        let az = p[1].atan2(p[0]);
        let frac = (az - self.azimuth[0]) / (self.azimuth[1] - self.azimuth[0]);
        if !(0.0..=1.0).contains(&frac) {
            return None;
        }
        let col = ((frac * self.width as f64).floor() as usize).min(self.width - 1);
        Some((row as u32, col as u32, range))
    }

    /// Pixel `(row, col)` of `p` after `level` downsamples.
    pub fn project_at(&self, p: [f64; 3], level: u32) -> Option<(u32, u32)> {
        self.project(p).map(|(r, c, _)| (r >> level, c >> level))
    }

    fn nearest_row(&self, inc: f64) -> Option<usize> {
        let (mut best, mut best_d) = (0usize, f64::INFINITY);
        for (r, &v) in self.inclinations.iter().enumerate() {
            let d = (v - inc).abs();
            if d < best_d {
                best = r;
                best_d = d;
            }
        }
        if self.height == 1 {
            return Some(best);
        }
        let spacing = if best == 0 {
            (self.inclinations[1] - self.inclinations[0]).abs()
        } else if best == self.height - 1 {
            (self.inclinations[best] - self.inclinations[best - 1]).abs()
        } else {
            let a = (self.inclinations[best] - self.inclinations[best - 1]).abs();
            let b = (self.inclinations[best + 1] - self.inclinations[best]).abs();
            a.max(b)
        };
        (best_d <= 0.5 * spacing + 1e-12).then_some(best)
    }

    /// Unit ray direction through the center of base pixel `(row, col)`.
    pub fn ray(&self, row: usize, col: usize) -> [f64; 3] {
        let inc = self.inclinations[row];
        let az = self.azimuth[0] + (col as f64 + 0.5) / self.width as f64 * (self.azimuth[1] - self.azimuth[0]);
        [inc.cos() * az.cos(), inc.cos() * az.sin(), inc.sin()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rays_project_back_to_their_pixel() {
        let layout = RangeLayout::uniform(8, 64, -0.3, 0.05).unwrap();
        for row in 0..8 {
            for col in (0..64).step_by(7) {
                let d = layout.ray(row, col);
                let p = [d[0] * 12.0, d[1] * 12.0, d[2] * 12.0];
                let (r, c, range) = layout.project(p).unwrap();
                assert_eq!((r as usize, c as usize), (row, col));
                assert!((range - 12.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn far_out_of_band_points_are_dropped() {
        let layout = RangeLayout::uniform(4, 16, -0.2, 0.1).unwrap();
        assert!(layout.project([1.0, 0.0, 5.0]).is_none());
        assert!(layout.project([0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn downsampled_extent_rounds_up() {
        let layout = RangeLayout::uniform(5, 9, -0.2, 0.1).unwrap();
        assert_eq!(layout.extent_at(1), (3, 5));
        assert_eq!(layout.extent_at(2), (2, 3));
    }
}
