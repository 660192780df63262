//! Synthetic egocentric scans: ground-plane returns plus returns from
//! randomized boxes, ray-cast through a spherical range-image layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pcrep::{io::Scan, Box3D, Matrix, PcrepError, PointSet, RangeLayout};
use crate::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub boxes: usize,
    pub height: usize,
    pub width: usize,
    /// Lowest and highest beam inclination, radians.
    pub inclination: [f64; 2],
    /// Returns outside `[range[0], range[1]]` are discarded.
    pub range: [f64; 2],
    /// Box centers lie within this horizontal distance of the sensor.
    pub placement_radius: f64,
    /// Sensor height above the ground plane.
    pub sensor_height: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            boxes: 10,
            height: 32,
            width: 512,
            inclination: [-0.45, 0.05],
            range: [1.0, 60.0],
            placement_radius: 30.0,
            sensor_height: 1.8,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn check(&self) -> Result<(), PcrepError> {
        let bad = |m: &str| Err(PcrepError::InvalidSpec(m.to_string()));
        if self.height == 0 || self.width == 0 {
            return bad("layout needs H >= 1 and W >= 1");
        }
        if !(self.inclination[1] > self.inclination[0]) {
            return bad("inclination bounds must increase");
        }
        if !(self.range[0] >= 0.0 && self.range[1] > self.range[0] && self.range[1].is_finite()) {
            return bad("range bounds must satisfy 0 <= min < max");
        }
        if !(self.placement_radius > 3.0 && self.placement_radius.is_finite()) {
            return bad("placement radius must exceed 3 m");
        }
        if !(self.sensor_height > 0.0 && self.sensor_height.is_finite()) {
            return bad("sensor height must be > 0");
        }
        Ok(())
    }
}

/// A scan with its ground-truth boxes.
#[derive(Clone, Debug)]
pub struct SynthScene<T> {
    pub scan: Scan<T>,
    pub boxes: Vec<Box3D>,
}

/// Features per point: `[intensity, range / max_range]`.
pub const SYNTH_CHANNELS: usize = 2;

fn place_boxes(p: &SynthParams, rng: &mut ChaCha8Rng) -> Vec<Box3D> {
    let ground = -p.sensor_height;
    let mut out: Vec<Box3D> = Vec::with_capacity(p.boxes);
    let mut attempts = 0;
    while out.len() < p.boxes && attempts < 1000 * (p.boxes + 1) {
        attempts += 1;
        let dims = [rng.gen_range(3.5..5.0), rng.gen_range(1.6..2.2), rng.gen_range(1.4..1.9)];
        let r = rng.gen_range(3.0..p.placement_radius);
        let az = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let center = [r * az.cos(), r * az.sin(), ground + 0.5 * dims[2]];
        let radius = 0.5 * dims[0].hypot(dims[1]);
        let clear = out.iter().all(|b: &Box3D| {
            let other = 0.5 * b.dims[0].hypot(b.dims[1]);
            (b.center[0] - center[0]).hypot(b.center[1] - center[1]) > radius + other
        });
        if clear && r > radius + 1.0 {
            out.push(Box3D::new(center, dims, heading).expect("positive dims"));
        }
    }
    out
}

/// Deterministic scan for `params`.
pub fn synth_scene<T: Real>(params: &SynthParams) -> Result<SynthScene<T>, PcrepError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let layout = RangeLayout::uniform(params.height, params.width, params.inclination[0], params.inclination[1])?;
    let boxes = place_boxes(params, &mut rng);
    let mut coords = Vec::new();
    let mut feats = Vec::new();
    for row in 0..layout.height() {
        for col in 0..layout.width() {
            let dir = layout.ray(row, col);
            let mut best: Option<(f64, f64)> = None;
            if dir[2] < 0.0 {
                best = Some((-params.sensor_height / dir[2], 0.2));
            }
            for b in &boxes {
                if let Some(t) = b.ray_hit([0.0; 3], dir) {
                    if best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, 0.8));
                    }
                }
            }
            let Some((t, base)) = best else { continue };
            if t < params.range[0] || t > params.range[1] {
                continue;
            }
            let intensity: f64 = (base + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0);
            coords.push([T::of(t * dir[0]), T::of(t * dir[1]), T::of(t * dir[2])]);
            feats.push(T::of(intensity));
            feats.push(T::of(t / params.range[1]));
        }
    }
    let n = coords.len();
    let points = PointSet::new(coords, Matrix::from_vec(n, SYNTH_CHANNELS, feats)?)?;
    Ok(SynthScene { scan: Scan { points, layout: Some(layout) }, boxes })
}
