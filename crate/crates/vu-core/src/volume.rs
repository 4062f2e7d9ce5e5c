//! Voxel volumes with physical spacing and the GVOL container format.
//!
//! A volume is a dense 3-D grid stored x-fastest (then y, then z). Voxel
//! `(i, j, k)` has its center at world coordinates `(i*sx, j*sy, k*sz)`
//! millimeters; there is no separate origin, world coordinates are always
//! relative to the first voxel center.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::Vec3;

/// Label code for voxels outside any segmented region.
pub const LABEL_BACKGROUND: u8 = 0;
/// Label code for stomach-wall tissue.
pub const LABEL_WALL: u8 = 1;
/// Label code for insufflated lumen air.
pub const LABEL_AIR: u8 = 2;

/// Intensity returned for samples outside the grid (CT air convention).
pub const BACKGROUND_INTENSITY: i16 = -1024;

const GVOL_MAGIC: &[u8; 4] = b"GVOL";
const GVOL_VERSION: u32 = 1;
const GVOL_HEADER_LEN: usize = 4 + 4 + 1 + 3 * 4 + 3 * 8;

/// Errors produced by volume construction and GVOL I/O.
#[derive(Debug, thiserror::Error)]
pub enum VolumeError {
    #[error("bad magic: expected \"GVOL\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported GVOL version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("non-positive dims: {0}x{1}x{2}")]
    BadDims(u32, u32, u32),
    #[error("non-positive or non-finite spacing: ({0}, {1}, {2})")]
    BadSpacing(f64, f64, f64),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("data length {found} does not match dims {nx}x{ny}x{nz}")]
    DataLengthMismatch { found: usize, nx: usize, ny: usize, nz: usize },
    #[error("expected a {expected} volume, file holds {found}")]
    DtypeMismatch { expected: &'static str, found: &'static str },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Voxel payload types storable in a GVOL file.
pub trait Voxel: Copy + PartialEq + fmt::Debug + 'static {
    const DTYPE_CODE: u8;
    const DTYPE_NAME: &'static str;
    const BYTES: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Voxel for i16 {
    const DTYPE_CODE: u8 = 0;
    const DTYPE_NAME: &'static str = "int16 scalar";
    const BYTES: usize = 2;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        i16::from_le_bytes([bytes[0], bytes[1]])
    }
}

impl Voxel for u8 {
    const DTYPE_CODE: u8 = 1;
    const DTYPE_NAME: &'static str = "uint8 label";
    const BYTES: usize = 1;
    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn read_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
}

/// Dense voxel grid with per-axis spacing in millimeters.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T: Voxel> {
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    data: Vec<T>,
}

/// Signed 16-bit intensity volume (Hounsfield-like units).
pub type ScalarVolume = Volume<i16>;
/// Unsigned 8-bit label volume (0 background, 1 wall, 2 lumen air).
pub type LabelVolume = Volume<u8>;

impl<T: Voxel> Volume<T> {
    pub fn new(
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
        data: Vec<T>,
    ) -> Result<Self, VolumeError> {
        if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
            return Err(VolumeError::BadDims(dims.0 as u32, dims.1 as u32, dims.2 as u32));
        }
        if !(spacing.0 > 0.0 && spacing.1 > 0.0 && spacing.2 > 0.0)
            || !(spacing.0.is_finite() && spacing.1.is_finite() && spacing.2.is_finite())
        {
            return Err(VolumeError::BadSpacing(spacing.0, spacing.1, spacing.2));
        }
        let expected = dims.0 * dims.1 * dims.2;
        if data.len() != expected {
            return Err(VolumeError::DataLengthMismatch {
                found: data.len(),
                nx: dims.0,
                ny: dims.1,
                nz: dims.2,
            });
        }
        Ok(Self { dims, spacing, data })
    }

    /// Constant-valued volume.
    pub fn filled(
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
        value: T,
    ) -> Result<Self, VolumeError> {
        let n = dims.0.checked_mul(dims.1).and_then(|v| v.checked_mul(dims.2)).unwrap_or(0);
        Self::new(dims, spacing, vec![value; n])
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.0.max(self.spacing.1).max(self.spacing.2)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims.0 && j < self.dims.1 && k < self.dims.2);
        i + self.dims.0 * (j + self.dims.1 * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.dims.0;
        let j = (idx / self.dims.0) % self.dims.1;
        let k = idx / (self.dims.0 * self.dims.1);
        (i, j, k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: T) {
        let idx = self.index(i, j, k);
        self.data[idx] = value;
    }

    #[inline]
    pub fn in_bounds(&self, i: i64, j: i64, k: i64) -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < self.dims.0
            && (j as usize) < self.dims.1
            && (k as usize) < self.dims.2
    }

    /// World position of a voxel center in millimeters.
    #[inline]
    pub fn world(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            i as f64 * self.spacing.0,
            j as f64 * self.spacing.1,
            k as f64 * self.spacing.2,
        )
    }

    /// Voxel index containing a world point, or None when outside the grid.
    pub fn voxel_at(&self, p: &Vec3) -> Option<(usize, usize, usize)> {
        let i = (p.x / self.spacing.0).round() as i64;
        let j = (p.y / self.spacing.1).round() as i64;
        let k = (p.z / self.spacing.2).round() as i64;
        if self.in_bounds(i, j, k) {
            Some((i as usize, j as usize, k as usize))
        } else {
            None
        }
    }

    /// Serializes to the GVOL byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(GVOL_HEADER_LEN + self.data.len() * T::BYTES);
        out.extend_from_slice(GVOL_MAGIC);
        out.extend_from_slice(&GVOL_VERSION.to_le_bytes());
        out.push(T::DTYPE_CODE);
        out.extend_from_slice(&(self.dims.0 as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims.1 as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims.2 as u32).to_le_bytes());
        out.extend_from_slice(&self.spacing.0.to_le_bytes());
        out.extend_from_slice(&self.spacing.1.to_le_bytes());
        out.extend_from_slice(&self.spacing.2.to_le_bytes());
        for v in &self.data {
            v.write_le(&mut out);
        }
        out
    }
}

/// Either payload type a GVOL file can hold.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyVolume {
    Scalar(ScalarVolume),
    Label(LabelVolume),
}

impl AnyVolume {
    pub fn into_scalar(self) -> Result<ScalarVolume, VolumeError> {
        match self {
            AnyVolume::Scalar(v) => Ok(v),
            AnyVolume::Label(_) => Err(VolumeError::DtypeMismatch {
                expected: <i16 as Voxel>::DTYPE_NAME,
                found: <u8 as Voxel>::DTYPE_NAME,
            }),
        }
    }

    pub fn into_label(self) -> Result<LabelVolume, VolumeError> {
        match self {
            AnyVolume::Label(v) => Ok(v),
            AnyVolume::Scalar(_) => Err(VolumeError::DtypeMismatch {
                expected: <u8 as Voxel>::DTYPE_NAME,
                found: <i16 as Voxel>::DTYPE_NAME,
            }),
        }
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn read_f64(bytes: &[u8], at: usize) -> f64 {
    let mut b = [0u8; 8];
    b.copy_from_slice(&bytes[at..at + 8]);
    f64::from_le_bytes(b)
}

/// Parses a GVOL byte stream.
pub fn volume_from_bytes(bytes: &[u8]) -> Result<AnyVolume, VolumeError> {
    if bytes.len() < 4 {
        return Err(VolumeError::Truncated { expected: GVOL_HEADER_LEN, found: bytes.len() });
    }
    if &bytes[0..4] != GVOL_MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[0..4]);
        return Err(VolumeError::BadMagic { found });
    }
    if bytes.len() < GVOL_HEADER_LEN {
        return Err(VolumeError::Truncated { expected: GVOL_HEADER_LEN, found: bytes.len() });
    }
    let version = read_u32(bytes, 4);
    if version != GVOL_VERSION {
        return Err(VolumeError::UnsupportedVersion(version));
    }
    let dtype = bytes[8];
    let nx = read_u32(bytes, 9);
    let ny = read_u32(bytes, 13);
    let nz = read_u32(bytes, 17);
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(VolumeError::BadDims(nx, ny, nz));
    }
    let sx = read_f64(bytes, 21);
    let sy = read_f64(bytes, 29);
    let sz = read_f64(bytes, 37);
    let dims = (nx as usize, ny as usize, nz as usize);
    let spacing = (sx, sy, sz);
    let count = dims.0 * dims.1 * dims.2;
    let payload = &bytes[GVOL_HEADER_LEN..];

    fn parse<T: Voxel>(
        payload: &[u8],
        count: usize,
        dims: (usize, usize, usize),
        spacing: (f64, f64, f64),
    ) -> Result<Volume<T>, VolumeError> {
        let expected = count * T::BYTES;
        if payload.len() != expected {
            return Err(VolumeError::Truncated {
                expected: GVOL_HEADER_LEN + expected,
                found: GVOL_HEADER_LEN + payload.len(),
            });
        }
        let mut data = Vec::with_capacity(count);
        for c in payload.chunks_exact(T::BYTES) {
            data.push(T::read_le(c));
        }
        Volume::new(dims, spacing, data)
    }

    match dtype {
        0 => Ok(AnyVolume::Scalar(parse::<i16>(payload, count, dims, spacing)?)),
        1 => Ok(AnyVolume::Label(parse::<u8>(payload, count, dims, spacing)?)),
        other => Err(VolumeError::UnknownDtype(other)),
    }
}

/// Reads a GVOL file from disk.
pub fn read_volume(path: &Path) -> Result<AnyVolume, VolumeError> {
    let bytes = fs::read(path)
        .map_err(|source| VolumeError::Io { path: path.display().to_string(), source })?;
    volume_from_bytes(&bytes)
}

/// Writes a volume as a GVOL file. `read_volume` inverts it bit-exactly.
pub fn write_volume<T: Voxel>(volume: &Volume<T>, path: &Path) -> Result<(), VolumeError> {
    fs::write(path, volume.to_bytes())
        .map_err(|source| VolumeError::Io { path: path.display().to_string(), source })
}

/// Trilinear interpolation of the 8 voxel centers surrounding a world point.
/// Points outside the grid return `BACKGROUND_INTENSITY`.
pub fn trilinear_sample(volume: &ScalarVolume, p: &Vec3) -> f64 {
    let (nx, ny, nz) = volume.dims();
    let (sx, sy, sz) = volume.spacing();
    let fx = p.x / sx;
    let fy = p.y / sy;
    let fz = p.z / sz;
    let eps = 1e-9;
    if fx < -eps
        || fy < -eps
        || fz < -eps
        || fx > (nx - 1) as f64 + eps
        || fy > (ny - 1) as f64 + eps
        || fz > (nz - 1) as f64 + eps
    {
        return BACKGROUND_INTENSITY as f64;
    }

    fn split(f: f64, n: usize) -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let mut i0 = f.floor() as i64;
        if i0 < 0 {
            i0 = 0;
        }
        let mut i0 = i0 as usize;
        if i0 > n - 2 {
            i0 = n - 2;
        }
        let t = (f - i0 as f64).clamp(0.0, 1.0);
        (i0, i0 + 1, t)
    }

    let (x0, x1, tx) = split(fx, nx);
    let (y0, y1, ty) = split(fy, ny);
    let (z0, z1, tz) = split(fz, nz);

    let v = |i: usize, j: usize, k: usize| volume.get(i, j, k) as f64;
    let c00 = v(x0, y0, z0) * (1.0 - tx) + v(x1, y0, z0) * tx;
    let c10 = v(x0, y1, z0) * (1.0 - tx) + v(x1, y1, z0) * tx;
    let c01 = v(x0, y0, z1) * (1.0 - tx) + v(x1, y0, z1) * tx;
    let c11 = v(x0, y1, z1) * (1.0 - tx) + v(x1, y1, z1) * tx;
    let c0 = c00 * (1.0 - ty) + c10 * ty;
    let c1 = c01 * (1.0 - ty) + c11 * ty;
    c0 * (1.0 - tz) + c1 * tz
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_identity() {
        let v = ScalarVolume::filled((3, 3, 3), (1.0, 1.0, 1.0), 0).unwrap();
        let back = volume_from_bytes(&v.to_bytes()).unwrap().into_scalar().unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = ScalarVolume::filled((1, 1, 1), (1.0, 1.0, 1.0), 0).unwrap().to_bytes();
        bytes[3] = b'X'; // "GVOX"
        match volume_from_bytes(&bytes) {
            Err(VolumeError::BadMagic { found }) => assert_eq!(&found, b"GVOX"),
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn x_fastest_ordering() {
        // Hand-enumerated layout for a 2x2x2 volume with data 0..8:
        // linear index i + 2*(j + 2*k), so voxel (1,0,0) holds 1 and
        // (0,1,0) holds 2, (0,0,1) holds 4.
        let data: Vec<i16> = (0..8).collect();
        let v = ScalarVolume::new((2, 2, 2), (1.0, 1.0, 1.0), data).unwrap();
        assert_eq!(v.get(1, 0, 0), 1);
        assert_eq!(v.get(0, 1, 0), 2);
        assert_eq!(v.get(0, 0, 1), 4);
        let back = volume_from_bytes(&v.to_bytes()).unwrap().into_scalar().unwrap();
        assert_eq!(back.get(1, 0, 0), 1);
        assert_eq!(back, v);
    }

    #[test]
    fn int16_payload_little_endian() {
        // -1024 as int16 LE is 0x00 0xFC.
        let v = ScalarVolume::filled((1, 1, 1), (1.0, 1.0, 1.0), -1024).unwrap();
        let bytes = v.to_bytes();
        assert_eq!(&bytes[bytes.len() - 2..], &[0x00, 0xFC]);
    }

    #[test]
    fn zero_dim_rejected_before_write() {
        match ScalarVolume::new((0, 3, 3), (1.0, 1.0, 1.0), vec![]) {
            Err(VolumeError::BadDims(0, 3, 3)) => {}
            other => panic!("expected BadDims, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_rejected() {
        let v = ScalarVolume::filled((2, 2, 2), (1.0, 1.0, 1.0), 7).unwrap();
        let mut bytes = v.to_bytes();
        bytes.pop();
        assert!(matches!(volume_from_bytes(&bytes), Err(VolumeError::Truncated { .. })));
    }

    #[test]
    fn unknown_dtype_rejected() {
        let mut bytes = ScalarVolume::filled((1, 1, 1), (1.0, 1.0, 1.0), 0).unwrap().to_bytes();
        bytes[8] = 9;
        assert!(matches!(volume_from_bytes(&bytes), Err(VolumeError::UnknownDtype(9))));
    }

    #[test]
    fn trilinear_at_voxel_center() {
        let mut v = ScalarVolume::filled((3, 3, 3), (0.5, 0.5, 0.5), 0).unwrap();
        v.set(1, 2, 1, 123);
        let p = v.world(1, 2, 1);
        assert_eq!(trilinear_sample(&v, &p), 123.0);
    }

    #[test]
    fn trilinear_midpoint_is_average() {
        let mut v = ScalarVolume::filled((2, 1, 1), (2.0, 1.0, 1.0), 0).unwrap();
        v.set(1, 0, 0, 100);
        let p = Vec3::new(1.0, 0.0, 0.0); // halfway between centers at x=0 and x=2
        assert_eq!(trilinear_sample(&v, &p), 50.0);
    }

    #[test]
    fn trilinear_outside_returns_background() {
        let v = ScalarVolume::filled((3, 3, 3), (1.0, 1.0, 1.0), 77).unwrap();
        let p = Vec3::new(-5.0, 0.0, 0.0);
        assert_eq!(trilinear_sample(&v, &p), BACKGROUND_INTENSITY as f64);
    }
}
