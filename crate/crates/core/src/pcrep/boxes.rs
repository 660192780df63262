use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::PcrepError;

/// Oriented 3D box: center, `[length, width, height]`, heading about +z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: [f64; 3],
    pub dims: [f64; 3],
    pub heading: f64,
}

impl Box3D {
    pub fn new(center: [f64; 3], dims: [f64; 3], heading: f64) -> Result<Self, PcrepError> {
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(PcrepError::InvalidData(format!("box dims must be > 0, got {dims:?}")));
        }
        if center.iter().any(|v| !v.is_finite()) || !heading.is_finite() {
            return Err(PcrepError::InvalidData("box center/heading must be finite".into()));
        }
        Ok(Self { center, dims, heading: wrap_angle(heading) })
    }

    /// `p` expressed in the box frame.
    #[inline]
    pub fn local(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.heading.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        [c * dx + s * dy, -s * dx + c * dy, p[2] - self.center[2]]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let l = self.local(p);
        l[0].abs() <= 0.5 * self.dims[0] && l[1].abs() <= 0.5 * self.dims[1] && l[2].abs() <= 0.5 * self.dims[2]
    }

    /// Footprint containment, z ignored.
    pub fn contains_xy(&self, p: [f64; 2]) -> bool {
        let l = self.local([p[0], p[1], self.center[2]]);
        l[0].abs() <= 0.5 * self.dims[0] && l[1].abs() <= 0.5 * self.dims[1]
    }

    /// Nearest positive ray parameter `t` with `origin + t * dir` on the box surface.
    pub fn ray_hit(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
        let o = self.local(origin);
        let (s, c) = self.heading.sin_cos();
        let d = [c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1], dir[2]];
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for a in 0..3 {
            let half = 0.5 * self.dims[a];
            if d[a].abs() < 1e-15 {
                if o[a].abs() > half {
                    return None;
                }
                continue;
            }
            let ta = (-half - o[a]) / d[a];
            let tb = (half - o[a]) / d[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
        if t1 < t0 || t1 <= 0.0 {
            return None;
        }
        Some(if t0 > 0.0 { t0 } else { t1 })
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotated_containment() {
        let b = Box3D::new([1.0, 1.0, 0.0], [4.0, 1.0, 2.0], PI / 2.0).unwrap();
        assert!(b.contains([1.0, 2.8, 0.5]));
        assert!(!b.contains([2.8, 1.0, 0.5]));
        assert!(b.contains_xy([1.0, 2.8]));
        assert!(!b.contains([1.0, 2.8, 1.2]));
    }

    #[test]
    fn heading_is_wrapped() {
        let b = Box3D::new([0.0; 3], [1.0; 3], 3.0 * PI).unwrap();
        assert!(b.heading >= -PI && b.heading < PI);
        assert!(Box3D::new([0.0; 3], [1.0, 0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn ray_hits_front_face() {
        let b = Box3D::new([10.0, 0.0, 0.0], [2.0, 2.0, 2.0], 0.0).unwrap();
        let t = b.ray_hit([0.0; 3], [1.0, 0.0, 0.0]).unwrap();
        assert!((t - 9.0).abs() < 1e-12);
        assert!(b.ray_hit([0.0; 3], [0.0, 1.0, 0.0]).is_none());
    }
}
