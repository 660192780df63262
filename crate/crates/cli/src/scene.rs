use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use lidarnas::frame::{Frame, Region};
use lidarnas::pcrep::io::{read_boxes, read_scan};
use lidarnas::pcrep::{Box3D, PointSet};
use lidarnas::synth::{synth_scene, SynthParams};

use crate::fail::{Fail, OrFail};

/// Ground-truth sidecar written next to a scene: `scene.lnpc` -> `scene.boxes.csv`.
pub fn sidecar_path(scene: &Path) -> PathBuf {
    scene.with_extension("boxes.csv")
}

pub struct LoadedScene {
    pub points: PointSet<f64>,
    pub frame: Frame,
    pub boxes: Vec<Box3D>,
}

pub fn region(half: f64, z_min: f64, z_max: f64) -> Result<Region, Fail> {
    Region::square(half, z_min, z_max).input("region")
}

/// Loads a scan and its box sidecar (missing sidecar means no boxes unless `boxes` is given).
pub fn load(path: &Path, boxes: Option<&Path>, region: Region) -> Result<LoadedScene, Fail> {
    let scan = read_scan::<f64>(path).input(&format!("scene {}", path.display()))?;
    let side = boxes.map(Path::to_path_buf).unwrap_or_else(|| sidecar_path(path));
    let boxes = if side.exists() {
        let f = File::open(&side).input(&format!("boxes {}", side.display()))?;
        read_boxes(BufReader::new(f)).input(&format!("boxes {}", side.display()))?
    } else if let Some(p) = boxes {
        return Err(Fail::Input(format!("boxes {}: file not found", p.display())));
    } else {
        Vec::new()
    };
    let frame = Frame::for_scan(&scan, region);
    Ok(LoadedScene { points: scan.points, frame, boxes })
}

pub fn synthesize(params: &SynthParams, region: Region) -> Result<LoadedScene, Fail> {
    let s = synth_scene::<f64>(params).input("synthetic scene")?;
    let frame = Frame::for_scan(&s.scan, region);
    Ok(LoadedScene { points: s.scan.points, frame, boxes: s.boxes })
}
