//! Scan files.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! "LNPC" | version u32 | N u32 | C u32 | has_range_layout u8
//! N x 3 f32 coordinates
//! N x C f32 features
//! [H u32 | W u32 | H x f32 inclinations | 2 x f32 azimuth span]   if has_range_layout
//! ```
//!
//! A CSV form with rows `x,y,z,f1,...,fC` is also accepted; a header row is
//! skipped when its first field is not numeric.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Box3D, Matrix, PcrepError, PointSet, RangeLayout};
use crate::Real;

pub const MAGIC: &[u8; 4] = b"LNPC";
pub const VERSION: u32 = 1;

/// A point cloud together with the range-image layout of the sensor, when known.
#[derive(Clone, Debug, PartialEq)]
pub struct Scan<T> {
    pub points: PointSet<T>,
    pub layout: Option<RangeLayout>,
}

pub fn write_lnpc<T: Real, W: Write>(mut w: W, scan: &Scan<T>) -> Result<(), PcrepError> {
    let n = scan.points.len();
    let c = scan.points.channels();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(c as u32).to_le_bytes())?;
    w.write_all(&[scan.layout.is_some() as u8])?;
    for p in scan.points.coords() {
        for v in p {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    for v in scan.points.features().as_slice() {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    if let Some(layout) = &scan.layout {
        w.write_all(&(layout.height() as u32).to_le_bytes())?;
        w.write_all(&(layout.width() as u32).to_le_bytes())?;
        for &inc in layout.inclinations() {
            w.write_all(&(inc as f32).to_le_bytes())?;
        }
        for v in layout.azimuth_span() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const K: usize>(&mut self, what: &str) -> Result<[u8; K], PcrepError> {
        let mut buf = [0u8; K];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| PcrepError::Malformed(format!("truncated while reading {what}")))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32, PcrepError> {
        Ok(u32::from_le_bytes(self.bytes::<4>(what)?))
    }

    fn f32(&mut self, what: &str) -> Result<f32, PcrepError> {
        Ok(f32::from_le_bytes(self.bytes::<4>(what)?))
    }
}

pub fn read_lnpc<T: Real, R: Read>(r: R) -> Result<Scan<T>, PcrepError> {
    let mut r = Reader { inner: r };
    if &r.bytes::<4>("magic")? != MAGIC {
        return Err(PcrepError::Malformed("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(PcrepError::Malformed(format!("unsupported version {version}")));
    }
    let n = r.u32("point count")? as usize;
    let c = r.u32("channel count")? as usize;
    let has_layout = r.bytes::<1>("layout flag")?[0];
    let mut coords = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let x = r.f32("coordinates")?;
        let y = r.f32("coordinates")?;
        let z = r.f32("coordinates")?;
        coords.push([T::of(x as f64), T::of(y as f64), T::of(z as f64)]);
    }
    let mut data = Vec::with_capacity((n * c).min(1 << 26));
    for _ in 0..n * c {
        data.push(T::of(r.f32("features")? as f64));
    }
    let layout = match has_layout {
        0 => None,
        1 => {
            let h = r.u32("layout height")? as usize;
            let w = r.u32("layout width")? as usize;
            let mut inc = Vec::with_capacity(h.min(1 << 16));
            for _ in 0..h {
                inc.push(r.f32("inclination table")? as f64);
            }
            let a0 = r.f32("azimuth span")? as f64;
            let a1 = r.f32("azimuth span")? as f64;
            Some(RangeLayout::new(w, inc, [a0, a1])?)
        }
        v => return Err(PcrepError::Malformed(format!("bad layout flag {v}"))),
    };
    let points = PointSet::new(coords, Matrix::from_vec(n, c, data)?)?;
    Ok(Scan { points, layout })
}

pub fn read_csv<T: Real, R: BufRead>(r: R) -> Result<PointSet<T>, PcrepError> {
    let mut coords = Vec::new();
    let mut data = Vec::new();
    let mut channels = None;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if coords.is_empty() && channels.is_none() => {
                channels = Some(fields.len().saturating_sub(3));
                continue;
            }
            Err(e) => return Err(PcrepError::Malformed(format!("line {}: {e}", lineno + 1))),
        };
        if values.len() < 3 {
            return Err(PcrepError::Malformed(format!("line {}: need x,y,z", lineno + 1)));
        }
        let c = *channels.get_or_insert(values.len() - 3);
        if values.len() != 3 + c {
            return Err(PcrepError::Malformed(format!("line {}: expected {} fields", lineno + 1, 3 + c)));
        }
        coords.push([T::of(values[0]), T::of(values[1]), T::of(values[2])]);
        data.extend(values[3..].iter().map(|&v| T::of(v)));
    }
    let n = coords.len();
    PointSet::new(coords, Matrix::from_vec(n, channels.unwrap_or(0), data)?)
}

/// Reads either format, detected from the leading magic bytes.
pub fn read_scan<T: Real>(path: impl AsRef<Path>) -> Result<Scan<T>, PcrepError> {
    let mut reader = BufReader::new(File::open(path)?);
    let head = reader.fill_buf()?;
    if head.starts_with(MAGIC) {
        read_lnpc(reader)
    } else {
        Ok(Scan { points: read_csv(reader)?, layout: None })
    }
}

pub fn write_scan<T: Real>(path: impl AsRef<Path>, scan: &Scan<T>) -> Result<(), PcrepError> {
    write_lnpc(BufWriter::new(File::create(path)?), scan)
}

const BOX_HEADER: &str = "cx,cy,cz,length,width,height,heading";

/// Ground-truth box sidecar: one CSV row per box after a fixed header.
pub fn write_boxes<W: Write>(mut w: W, boxes: &[Box3D]) -> Result<(), PcrepError> {
    writeln!(w, "{BOX_HEADER}")?;
    for b in boxes {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            b.center[0], b.center[1], b.center[2], b.dims[0], b.dims[1], b.dims[2], b.heading
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_boxes<R: BufRead>(r: R) -> Result<Vec<Box3D>, PcrepError> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line == BOX_HEADER || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| PcrepError::Malformed(format!("box line {}: {e}", lineno + 1)))?;
        if v.len() != 7 {
            return Err(PcrepError::Malformed(format!("box line {}: expected 7 fields", lineno + 1)));
        }
        out.push(Box3D::new([v[0], v[1], v[2]], [v[3], v[4], v[5]], v[6])?);
    }
    Ok(out)
}
