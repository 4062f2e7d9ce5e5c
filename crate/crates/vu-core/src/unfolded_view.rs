//! Unfolded-volume generation and rendering.
//!
//! The deformed model carries each hexahedron's trilinear map; resampling
//! inverts it per output voxel (Newton iteration seeded at the cell center),
//! maps the local coordinates through the rest-shape map, and samples the
//! source volume there. Rendering projects the unfolded volume orthographically
//! along the plane normal.

use std::collections::BTreeMap;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::unfold_geometry::UnfoldPlane;
use crate::volume::{trilinear_sample, LabelVolume, ScalarVolume, BACKGROUND_INTENSITY};
use crate::wall_model::WallModel;
use crate::Vec3;

#[derive(Debug, thiserror::Error)]
pub enum ViewError {
    #[error("model has no vertices")]
    EmptyModel,
    #[error("window width must be positive, got {0}")]
    ZeroWindowWidth(f64),
    #[error("deformed positions give an unusable grid extent ({0} voxels per axis max)")]
    GridTooLarge(usize),
    #[error("deformed positions are non-finite")]
    NonFinitePositions,
}

/// Voxel-count cap per grid axis; a deformed model wider than this is a
/// runaway state, not a renderable sheet.
const MAX_GRID_AXIS: usize = 4096;

/// Rendering reduction along the thickness axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderMode {
    /// Maximum intensity projection.
    Mip,
    /// Mean of masked-in samples.
    SlabAverage,
}

/// Axis-aligned grid in plane coordinates: `origin` is the world position of
/// voxel (0,0,0), axes are `(v1, v2, normal)`.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub origin: Vec3,
    pub axes: [Vec3; 3],
    pub spacing: (f64, f64, f64),
    pub dims: (usize, usize, usize),
}

impl GridSpec {
    pub fn world(&self, a: usize, b: usize, c: usize) -> Vec3 {
        self.origin
            + self.axes[0] * (a as f64 * self.spacing.0)
            + self.axes[1] * (b as f64 * self.spacing.1)
            + self.axes[2] * (c as f64 * self.spacing.2)
    }
}

/// Unfolded volume plus its inside-the-deformed-model mask.
#[derive(Clone, Debug)]
pub struct UnfoldedVolume {
    pub grid: GridSpec,
    pub volume: ScalarVolume,
    /// 1 where the voxel center lies inside a deformed hexahedron.
    pub mask: LabelVolume,
}

/// Bounding grid of the deformed model in plane coordinates. The in-plane
/// extent grows by `margin_mm` on every side; the thickness axis spans the
/// deformed extent along the normal exactly.
pub fn build_unfolded_grid(
    plane: &UnfoldPlane,
    positions: &[Vec3],
    margin_mm: f64,
    spacing: (f64, f64, f64),
) -> Result<GridSpec, ViewError> {
    if positions.is_empty() {
        return Err(ViewError::EmptyModel);
    }
    let mut lo = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in positions {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(ViewError::NonFinitePositions);
        }
        let (a, b, c) = plane.local_coords(p);
        lo = (lo.0.min(a), lo.1.min(b), lo.2.min(c));
        hi = (hi.0.max(a), hi.1.max(b), hi.2.max(c));
    }
    let lo = (lo.0 - margin_mm, lo.1 - margin_mm, lo.2);
    let hi = (hi.0 + margin_mm, hi.1 + margin_mm, hi.2);
    let count = |extent: f64, step: f64| -> usize {
        ((extent / step - 1e-9).ceil().max(0.0) as usize) + 1
    };
    let dims = (
        count(hi.0 - lo.0, spacing.0),
        count(hi.1 - lo.1, spacing.1),
        count(hi.2 - lo.2, spacing.2),
    );
    if dims.0 > MAX_GRID_AXIS || dims.1 > MAX_GRID_AXIS || dims.2 > MAX_GRID_AXIS {
        return Err(ViewError::GridTooLarge(MAX_GRID_AXIS));
    }
    let origin =
        plane.point + plane.v1 * lo.0 + plane.v2 * lo.1 + plane.normal * lo.2;
    Ok(GridSpec { origin, axes: [plane.v1, plane.v2, plane.normal], spacing, dims })
}

/// Trilinear weight of corner `c` (bit-coded offsets) at local coordinates.
#[inline]
fn corner_weight(c: usize, xi: &Vec3) -> f64 {
    let wx = if c & 1 == 1 { xi.x } else { 1.0 - xi.x };
    let wy = if (c >> 1) & 1 == 1 { xi.y } else { 1.0 - xi.y };
    let wz = if (c >> 2) & 1 == 1 { xi.z } else { 1.0 - xi.z };
    wx * wy * wz
}

/// Forward trilinear map of a hexahedron.
pub fn trilinear_map(corners: &[Vec3; 8], xi: &Vec3) -> Vec3 {
    let mut out = Vec3::zeros();
    for (c, p) in corners.iter().enumerate() {
        out += p * corner_weight(c, xi);
    }
    out
}

fn trilinear_jacobian(corners: &[Vec3; 8], xi: &Vec3) -> Matrix3<f64> {
    let mut cols = [Vec3::zeros(); 3];
    for (c, p) in corners.iter().enumerate() {
        let wx = if c & 1 == 1 { xi.x } else { 1.0 - xi.x };
        let wy = if (c >> 1) & 1 == 1 { xi.y } else { 1.0 - xi.y };
        let wz = if (c >> 2) & 1 == 1 { xi.z } else { 1.0 - xi.z };
        let sx = if c & 1 == 1 { 1.0 } else { -1.0 };
        let sy = if (c >> 1) & 1 == 1 { 1.0 } else { -1.0 };
        let sz = if (c >> 2) & 1 == 1 { 1.0 } else { -1.0 };
        cols[0] += p * (sx * wy * wz);
        cols[1] += p * (wx * sy * wz);
        cols[2] += p * (wx * wy * sz);
    }
    Matrix3::from_columns(&cols)
}

const NEWTON_MAX_STEPS: usize = 10;
const NEWTON_TOL: f64 = 1e-9;

/// Inverts the trilinear map by Newton iteration from the cell center.
/// Returns local coordinates when the iteration converges, whether or not
/// they lie inside the unit cell.
pub fn invert_trilinear(corners: &[Vec3; 8], q: &Vec3) -> Option<Vec3> {
    let mut xi = Vec3::new(0.5, 0.5, 0.5);
    for _ in 0..NEWTON_MAX_STEPS {
        let x = trilinear_map(corners, &xi);
        let r = q - x;
        let j = trilinear_jacobian(corners, &xi);
        let inv = j.try_inverse()?;
        let delta = inv * r;
        xi += delta;
        if delta.amax() < NEWTON_TOL {
            return Some(xi);
        }
        if xi.amax() > 5.0 {
            return None; // wandered far outside; not this cell
        }
    }
    None
}

fn inside_loose(xi: &Vec3) -> bool {
    let e = 1e-9;
    xi.x >= -e && xi.x <= 1.0 + e && xi.y >= -e && xi.y <= 1.0 + e && xi.z >= -e && xi.z <= 1.0 + e
}

fn inside_strict(xi: &Vec3) -> bool {
    let e = 1e-6;
    xi.x > e && xi.x < 1.0 - e && xi.y > e && xi.y < 1.0 - e && xi.z > e && xi.z < 1.0 - e
}

/// Resampling diagnostics and defect metrics tied to the unfolded volume.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ResampleReport {
    pub masked_in: usize,
    /// Fraction of masked-in voxels claimed strictly by two or more
    /// deformed hexahedra.
    pub overlap_fraction: f64,
    /// Deformed hexahedra skipped for non-positive center Jacobian.
    pub degenerate_hexes: usize,
    /// Voxels where Newton failed on some candidate and no cell matched.
    pub nonconverged_voxels: usize,
}

fn hex_corners(model_nodes: &[u32; 8], positions: &[Vec3]) -> [Vec3; 8] {
    let mut out = [Vec3::zeros(); 8];
    for (i, &n) in model_nodes.iter().enumerate() {
        out[i] = positions[n as usize];
    }
    out
}

/// Generates the unfolded volume: for each output voxel, finds the deformed
/// hexahedron containing it (ties to the lowest id), inverts the deformed
/// trilinear map, pushes the local coordinates through the rest-shape map,
/// and samples the source volume. Voxels in no hexahedron hold -1024 with
/// the mask off.
pub fn resample_unfolded(
    source: &ScalarVolume,
    model: &WallModel,
    rest: &[Vec3],
    deformed: &[Vec3],
    grid: &GridSpec,
) -> (UnfoldedVolume, ResampleReport) {
    // Deformed corner sets, skipping degenerate cells.
    let center = Vec3::new(0.5, 0.5, 0.5);
    let mut cells: Vec<(u32, [Vec3; 8], Vec3, Vec3)> = Vec::new(); // (id, corners, lo, hi)
    let mut degenerate = 0usize;
    for (id, h) in model.hexahedra.iter().enumerate() {
        let corners = hex_corners(&h.nodes, deformed);
        if trilinear_jacobian(&corners, &center).determinant() <= 0.0 {
            degenerate += 1;
            continue;
        }
        let mut lo = corners[0];
        let mut hi = corners[0];
        for c in &corners[1..] {
            lo = lo.inf(c);
            hi = hi.sup(c);
        }
        cells.push((id as u32, corners, lo, hi));
    }

    // Uniform spatial hash over the deformed bounding boxes; the hash cell
    // edge is the largest box extent so each box spans few hash cells.
    let mut h = 1.0f64;
    for (_, _, lo, hi) in &cells {
        h = h.max((hi - lo).amax());
    }
    let key_of = |p: &Vec3| -> (i64, i64, i64) {
        ((p.x / h).floor() as i64, (p.y / h).floor() as i64, (p.z / h).floor() as i64)
    };
    let mut hash: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (slot, (_, _, lo, hi)) in cells.iter().enumerate() {
        let k0 = key_of(lo);
        let k1 = key_of(hi);
        for kz in k0.2..=k1.2 {
            for ky in k0.1..=k1.1 {
                for kx in k0.0..=k1.0 {
                    hash.entry((kx, ky, kz)).or_default().push(slot);
                }
            }
        }
    }

    let dims = grid.dims;
    let mut volume = ScalarVolume::filled(dims, grid.spacing, BACKGROUND_INTENSITY)
        .expect("grid dims positive");
    let mut mask = LabelVolume::filled(dims, grid.spacing, 0).expect("grid dims positive");
    let mut masked_in = 0usize;
    let mut overlapped = 0usize;
    let mut nonconverged = 0usize;

    for c in 0..dims.2 {
        for b in 0..dims.1 {
            for a in 0..dims.0 {
                let q = grid.world(a, b, c);
                let Some(slots) = hash.get(&key_of(&q)) else { continue };
                let mut hit: Option<(u32, Vec3)> = None;
                let mut strict_hits = 0usize;
                let mut any_fail = false;
                for &slot in slots {
                    let (id, corners, lo, hi) = &cells[slot];
                    if q.x < lo.x || q.y < lo.y || q.z < lo.z || q.x > hi.x || q.y > hi.y || q.z > hi.z
                    {
                        continue;
                    }
                    match invert_trilinear(corners, &q) {
                        Some(xi) => {
                            if inside_strict(&xi) {
                                strict_hits += 1;
                            }
                            if inside_loose(&xi) && hit.is_none() {
                                hit = Some((*id, xi));
                            }
                        }
                        None => any_fail = true,
                    }
                }
                match hit {
                    Some((id, xi)) => {
                        let rest_corners =
                            hex_corners(&model.hexahedra[id as usize].nodes, rest);
                        let src_pt = trilinear_map(&rest_corners, &xi);
                        let value = trilinear_sample(source, &src_pt);
                        let idx = volume.index(a, b, c);
                        volume.data_mut()[idx] =
                            value.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
                        mask.data_mut()[idx] = 1;
                        masked_in += 1;
                        if strict_hits >= 2 {
                            overlapped += 1;
                        }
                    }
                    None => {
                        if any_fail {
                            nonconverged += 1;
                        }
                    }
                }
            }
        }
    }

    let overlap_fraction =
        if masked_in > 0 { overlapped as f64 / masked_in as f64 } else { 0.0 };
    let report = ResampleReport {
        masked_in,
        overlap_fraction,
        degenerate_hexes: degenerate,
        nonconverged_voxels: nonconverged,
    };
    (UnfoldedVolume { grid: grid.clone(), volume, mask }, report)
}

/// Fraction of springs stretched beyond `stretch_ratio` times their rest
/// length: the tear ("broken") defect measure. Zero for the rest state.
pub fn broken_fraction(model: &WallModel, positions: &[Vec3], stretch_ratio: f64) -> f64 {
    if model.springs.is_empty() {
        return 0.0;
    }
    let broken = model
        .springs
        .iter()
        .filter(|s| {
            let len = (positions[s.a as usize] - positions[s.b as usize]).norm();
            len > stretch_ratio * s.rest_len
        })
        .count();
    broken as f64 / model.springs.len() as f64
}

/// RMS deviation of the sheet mid-surface from the plane: for every in-plane
/// column with masked-in voxels, the mean normal offset of those voxels is
/// the local mid-surface height; the RMS over columns is the residual
/// curvature ("bending") defect measure.
pub fn bending_rms(uv: &UnfoldedVolume, plane: &UnfoldPlane) -> f64 {
    let (na, nb, nc) = uv.grid.dims;
    let n0 = plane.signed_distance(&uv.grid.world(0, 0, 0));
    let step = uv.grid.spacing.2 * uv.grid.axes[2].dot(&plane.normal);
    let mut sum = 0.0;
    let mut columns = 0usize;
    for b in 0..nb {
        for a in 0..na {
            let mut acc = 0.0;
            let mut count = 0usize;
            for c in 0..nc {
                if uv.mask.get(a, b, c) != 0 {
                    acc += n0 + c as f64 * step;
                    count += 1;
                }
            }
            if count > 0 {
                let mid = acc / count as f64;
                sum += mid * mid;
                columns += 1;
            }
        }
    }
    if columns == 0 {
        0.0
    } else {
        (sum / columns as f64).sqrt()
    }
}

/// 8-bit grayscale image, row-major, row 0 at v2 = minimum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Binary PPM (P5, maxval 255) encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Orthographic projection of the unfolded volume along the plane normal,
/// reduced per pixel by `mode` over masked-in samples and mapped through a
/// linear window to 8 bits. Pixels with no masked-in sample are black.
pub fn render_view(
    uv: &UnfoldedVolume,
    window_center: f64,
    window_width: f64,
    mode: RenderMode,
) -> Result<GrayImage, ViewError> {
    if !(window_width > 0.0) {
        return Err(ViewError::ZeroWindowWidth(window_width));
    }
    let (width, height, depth) = uv.grid.dims;
    let mut pixels = vec![0u8; width * height];
    for b in 0..height {
        for a in 0..width {
            let mut acc = f64::NEG_INFINITY;
            let mut sum = 0.0;
            let mut count = 0usize;
            for c in 0..depth {
                if uv.mask.get(a, b, c) == 0 {
                    continue;
                }
                let v = uv.volume.get(a, b, c) as f64;
                acc = acc.max(v);
                sum += v;
                count += 1;
            }
            if count == 0 {
                continue;
            }
            let value = match mode {
                RenderMode::Mip => acc,
                RenderMode::SlabAverage => sum / count as f64,
            };
            let t = ((value - window_center) / window_width + 0.5).clamp(0.0, 1.0);
            pixels[b * width + a] = (255.0 * t).round() as u8;
        }
    }
    Ok(GrayImage { width, height, pixels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{LabelVolume, ScalarVolume, LABEL_WALL};
    use crate::wall_model::{build_hex_model, WallModelConfig};
    use approx::assert_abs_diff_eq;

    fn axis_plane(point: Vec3) -> UnfoldPlane {
        UnfoldPlane {
            normal: Vec3::new(0.0, 0.0, 1.0),
            point,
            v1: Vec3::new(1.0, 0.0, 0.0),
            v2: Vec3::new(0.0, 1.0, 0.0),
        }
    }

    fn block_model(dims: (usize, usize, usize), d: usize) -> WallModel {
        let mut wall = LabelVolume::filled(dims, (1.0, 1.0, 1.0), 0).unwrap();
        for k in 0..dims.2 {
            for j in 0..dims.1 {
                for i in 0..dims.0 {
                    wall.set(i, j, k, LABEL_WALL);
                }
            }
        }
        let air = LabelVolume::filled(dims, (1.0, 1.0, 1.0), 0).unwrap();
        build_hex_model(&wall, &air, &[], &WallModelConfig { d, ..WallModelConfig::default() })
            .unwrap()
    }

    #[test]
    fn grid_covers_bbox_plus_margin() {
        let plane = axis_plane(Vec3::zeros());
        let positions = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(100.0, 60.0, 0.0),
        ];
        let grid = build_unfolded_grid(&plane, &positions, 5.0, (1.0, 1.0, 1.0)).unwrap();
        let first = grid.world(0, 0, 0);
        assert_abs_diff_eq!(first.x, -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(first.y, -5.0, epsilon = 1e-12);
        let last = grid.world(grid.dims.0 - 1, grid.dims.1 - 1, grid.dims.2 - 1);
        assert!(last.x >= 105.0 - 1e-9 && last.y >= 65.0 - 1e-9);
        // Orthonormal axes.
        assert_abs_diff_eq!(grid.axes[0].dot(&grid.axes[1]), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grid.axes[0].dot(&grid.axes[2]), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_vertex_zero_margin_is_one_voxel() {
        let plane = axis_plane(Vec3::zeros());
        let grid = build_unfolded_grid(
            &plane,
            &[Vec3::new(3.0, 4.0, 5.0)],
            0.0,
            (1.0, 1.0, 1.0),
        )
        .unwrap();
        assert_eq!(grid.dims, (1, 1, 1));
    }

    #[test]
    fn newton_inverts_forward_map() {
        // A mildly sheared cell round-trips local coordinates.
        let mut corners = [Vec3::zeros(); 8];
        for c in 0..8 {
            let x = (c & 1) as f64 * 4.0;
            let y = ((c >> 1) & 1) as f64 * 3.0;
            let z = ((c >> 2) & 1) as f64 * 2.0;
            corners[c] = Vec3::new(x + 0.3 * y, y + 0.2 * z, z + 0.1 * x);
        }
        let xi_true = Vec3::new(0.25, 0.7, 0.6);
        let q = trilinear_map(&corners, &xi_true);
        let xi = invert_trilinear(&corners, &q).unwrap();
        assert!((xi - xi_true).norm() < 1e-8);
        // Re-applying the forward map reproduces q.
        let back = trilinear_map(&corners, &xi);
        assert!((back - q).norm() <= 1e-5);
    }

    #[test]
    fn identity_resample_matches_direct_sampling() {
        let model = block_model((8, 8, 8), 4);
        // A source with spatial variation: value = x + 10 y + 100 z.
        let mut source = ScalarVolume::filled((8, 8, 8), (1.0, 1.0, 1.0), 0).unwrap();
        for k in 0..8 {
            for j in 0..8 {
                for i in 0..8 {
                    source.set(i, j, k, (i + 10 * j + 100 * k) as i16);
                }
            }
        }
        let plane = axis_plane(Vec3::zeros());
        let grid =
            build_unfolded_grid(&plane, &model.positions, 2.0, source.spacing()).unwrap();
        let (uv, report) =
            resample_unfolded(&source, &model, &model.positions, &model.positions, &grid);
        assert_eq!(report.degenerate_hexes, 0);
        assert_eq!(report.overlap_fraction, 0.0);
        assert!(report.masked_in > 0);
        for c in 0..grid.dims.2 {
            for b in 0..grid.dims.1 {
                for a in 0..grid.dims.0 {
                    if uv.mask.get(a, b, c) == 0 {
                        continue;
                    }
                    let q = grid.world(a, b, c);
                    let direct = trilinear_sample(&source, &q);
                    let stored = uv.volume.get(a, b, c) as f64;
                    assert!(
                        (stored - direct).abs() <= 1e-6,
                        "voxel ({a},{b},{c}): stored {stored}, direct {direct}"
                    );
                }
            }
        }
    }

    #[test]
    fn translation_equivariance() {
        let model = block_model((8, 8, 8), 4);
        let mut source = ScalarVolume::filled((8, 8, 8), (1.0, 1.0, 1.0), 0).unwrap();
        for k in 0..8 {
            for j in 0..8 {
                for i in 0..8 {
                    source.set(i, j, k, (7 * i + 3 * j + 11 * k) as i16);
                }
            }
        }
        let plane = axis_plane(Vec3::zeros());
        let grid =
            build_unfolded_grid(&plane, &model.positions, 2.0, source.spacing()).unwrap();
        let (uv_id, _) =
            resample_unfolded(&source, &model, &model.positions, &model.positions, &grid);

        let t = Vec3::new(3.0, -2.0, 5.0);
        let moved: Vec<Vec3> = model.positions.iter().map(|p| p + t).collect();
        let plane_t = axis_plane(t);
        let grid_t = build_unfolded_grid(&plane_t, &moved, 2.0, source.spacing()).unwrap();
        let (uv_t, _) = resample_unfolded(&source, &model, &model.positions, &moved, &grid_t);
        assert_eq!(uv_id.volume.data(), uv_t.volume.data());
        assert_eq!(uv_id.mask.data(), uv_t.mask.data());
    }

    #[test]
    fn defect_metrics_zero_for_flat_slab() {
        let model = block_model((8, 8, 4), 4);
        assert_eq!(broken_fraction(&model, &model.positions, 2.0), 0.0);
        // Resample the identity slab against a plane through its middle:
        // every column's mid-surface sits on the plane.
        let source = ScalarVolume::filled((8, 8, 4), (1.0, 1.0, 1.0), 40).unwrap();
        let plane = axis_plane(Vec3::new(0.0, 0.0, 2.0));
        let grid =
            build_unfolded_grid(&plane, &model.positions, 0.0, source.spacing()).unwrap();
        let (uv, _) =
            resample_unfolded(&source, &model, &model.positions, &model.positions, &grid);
        let b = bending_rms(&uv, &plane);
        assert_abs_diff_eq!(b, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn bending_sees_column_offsets() {
        // A hand-built mask with all columns offset +3 mm from the plane.
        let grid = GridSpec {
            origin: Vec3::new(0.0, 0.0, 3.0),
            axes: [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)],
            spacing: (1.0, 1.0, 1.0),
            dims: (2, 2, 1),
        };
        let volume = ScalarVolume::filled(grid.dims, grid.spacing, 0).unwrap();
        let mut mask = LabelVolume::filled(grid.dims, grid.spacing, 0).unwrap();
        for idx in 0..mask.len() {
            mask.data_mut()[idx] = 1;
        }
        let plane = axis_plane(Vec3::zeros());
        let uv = UnfoldedVolume { grid, volume, mask };
        assert_abs_diff_eq!(bending_rms(&uv, &plane), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn window_mapping_and_modes() {
        // Uniform value 40, window (40, 400): everything maps to 128.
        let grid = GridSpec {
            origin: Vec3::zeros(),
            axes: [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)],
            spacing: (1.0, 1.0, 1.0),
            dims: (4, 3, 2),
        };
        let volume = ScalarVolume::filled(grid.dims, grid.spacing, 40).unwrap();
        let mut mask = LabelVolume::filled(grid.dims, grid.spacing, 0).unwrap();
        for idx in 0..mask.len() {
            mask.data_mut()[idx] = 1;
        }
        let uv = UnfoldedVolume { grid, volume, mask };
        let img = render_view(&uv, 40.0, 400.0, RenderMode::Mip).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 128));

        // MIP dominates the slab average pixelwise.
        let mip = render_view(&uv, 40.0, 400.0, RenderMode::Mip).unwrap();
        let avg = render_view(&uv, 40.0, 400.0, RenderMode::SlabAverage).unwrap();
        for (m, s) in mip.pixels.iter().zip(&avg.pixels) {
            assert!(m >= s);
        }
    }

    #[test]
    fn empty_mask_renders_black() {
        let grid = GridSpec {
            origin: Vec3::zeros(),
            axes: [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)],
            spacing: (1.0, 1.0, 1.0),
            dims: (3, 3, 3),
        };
        let volume = ScalarVolume::filled(grid.dims, grid.spacing, 500).unwrap();
        let mask = LabelVolume::filled(grid.dims, grid.spacing, 0).unwrap();
        let uv = UnfoldedVolume { grid, volume, mask };
        let img = render_view(&uv, 40.0, 400.0, RenderMode::Mip).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn zero_window_rejected() {
        let grid = GridSpec {
            origin: Vec3::zeros(),
            axes: [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)],
            spacing: (1.0, 1.0, 1.0),
            dims: (1, 1, 1),
        };
        let volume = ScalarVolume::filled(grid.dims, grid.spacing, 0).unwrap();
        let mask = LabelVolume::filled(grid.dims, grid.spacing, 0).unwrap();
        let uv = UnfoldedVolume { grid, volume, mask };
        assert!(matches!(
            render_view(&uv, 40.0, 0.0, RenderMode::Mip),
            Err(ViewError::ZeroWindowWidth(_))
        ));
    }

    #[test]
    fn ppm_bytes_are_exact() {
        let img = GrayImage { width: 2, height: 2, pixels: vec![0, 128, 255, 7] };
        let ppm = img.to_ppm();
        assert_eq!(&ppm[..11], b"P5\n2 2\n255\n");
        assert_eq!(&ppm[11..], &[0, 128, 255, 7]);
    }
}
