//! Segmentation and landmark-driven curve extraction: air region, wall
//! region, centerline, and incision line.
//!
//! The only manual inputs of the whole pipeline are the cardia and pylorus
//! world points; everything here is a deterministic function of them and the
//! volumes.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::volume::{LabelVolume, ScalarVolume, LABEL_AIR, LABEL_BACKGROUND, LABEL_WALL};
use crate::Vec3;

/// Tunables for every preprocessing stage. Distances are millimeters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Voxels at or below this intensity count as air.
    pub air_threshold: f64,
    /// Voxels above this intensity count as candidate wall tissue.
    pub wall_intensity_threshold: f64,
    /// Geodesic shell thickness grown outward from the air boundary.
    pub wall_shell_mm: f64,
    /// Arc-length step for centerline/incision resampling.
    pub resample_step_mm: f64,
    pub centerline_smooth_passes: usize,
    pub incision_smooth_passes: usize,
    /// Half-width of the cross-section slab used for ridge selection.
    pub slab_half_width_mm: f64,
    /// Landmarks may sit up to this far from the air region.
    pub landmark_snap_mm: f64,
    /// Incision endpoints must land within this distance of the landmarks.
    pub endpoint_tolerance_mm: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            air_threshold: -700.0,
            wall_intensity_threshold: -500.0,
            wall_shell_mm: 4.0,
            resample_step_mm: 2.0,
            centerline_smooth_passes: 5,
            incision_smooth_passes: 3,
            slab_half_width_mm: 1.5,
            landmark_snap_mm: 5.0,
            endpoint_tolerance_mm: 20.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("seed at {seed:?} is outside the volume")]
    SeedOutsideVolume { seed: [f64; 3] },
    #[error("seed voxel intensity {found} is not air-like (threshold {threshold})")]
    SeedNotAir { found: i16, threshold: f64 },
    #[error("empty wall: no voxel within {shell_mm} mm shell above intensity {threshold}")]
    EmptyWall { shell_mm: f64, threshold: f64 },
    #[error("landmark at {landmark:?} has no air voxel within {snap_mm} mm")]
    LandmarkNotNearAir { landmark: [f64; 3], snap_mm: f64 },
    #[error("unreachable: landmarks are not connected through the air region")]
    LandmarksDisconnected,
    #[error("landmarks resolve to the same voxel")]
    LandmarksCoincide,
    #[error("cross-section at centerline index {k} has no inner-surface voxel")]
    NoInnerSurfaceInSlab { k: usize },
    #[error("centerline invariant violated: {0}")]
    BadCenterline(String),
    #[error("incision invariant violated: {0}")]
    BadIncision(String),
}

/// Ordered point sequence along the lumen, cardia to pylorus.
#[derive(Clone, Debug, PartialEq)]
pub struct Centerline {
    points: Vec<Vec3>,
}

impl Centerline {
    /// Validates the type invariants: at least two points, consecutive
    /// spacing at most twice the largest voxel spacing, every point inside
    /// the air region.
    pub fn new(points: Vec<Vec3>, air: &LabelVolume) -> Result<Self, PreprocessError> {
        if points.len() < 2 {
            return Err(PreprocessError::BadCenterline(format!(
                "needs at least 2 points, got {}",
                points.len()
            )));
        }
        let max_step = 2.0 * air.max_spacing() + 1e-9;
        for (a, b) in points.iter().zip(points.iter().skip(1)) {
            let step = (b - a).norm();
            if step > max_step {
                return Err(PreprocessError::BadCenterline(format!(
                    "consecutive step {step} exceeds {max_step}"
                )));
            }
        }
        for p in &points {
            let inside = air
                .voxel_at(p)
                .map(|(i, j, k)| air.get(i, j, k) == LABEL_AIR)
                .unwrap_or(false);
            if !inside {
                return Err(PreprocessError::BadCenterline(format!(
                    "point {p:?} lies outside the air region"
                )));
            }
        }
        Ok(Self { points })
    }

    /// Constructor for hand-built test inputs; skips invariant checks.
    pub fn from_points_unchecked(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arc_length(&self) -> f64 {
        polyline_length(&self.points)
    }
}

/// Ordered incision polyline on the inner wall surface; the point count is
/// always even so the midpoint indexing of the unfolding equations is defined.
#[derive(Clone, Debug, PartialEq)]
pub struct IncisionLine {
    points: Vec<Vec3>,
}

impl IncisionLine {
    /// Validates: even J >= 2, endpoints near the landmarks, every point on
    /// the inner surface (a wall and an air voxel within one voxel), and
    /// no self-intersection at voxel resolution.
    pub fn new(
        points: Vec<Vec3>,
        wall: &LabelVolume,
        air: &LabelVolume,
        cardia: &Vec3,
        pylorus: &Vec3,
        cfg: &PreprocessConfig,
    ) -> Result<Self, PreprocessError> {
        if points.len() < 2 {
            return Err(PreprocessError::BadIncision(format!(
                "needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.len() % 2 != 0 {
            return Err(PreprocessError::BadIncision(format!(
                "point count {} is odd",
                points.len()
            )));
        }
        let d_start = (points[0] - cardia).norm();
        let d_end = (points[points.len() - 1] - pylorus).norm();
        if d_start > cfg.endpoint_tolerance_mm {
            return Err(PreprocessError::BadIncision(format!(
                "first point is {d_start:.2} mm from the cardia (limit {})",
                cfg.endpoint_tolerance_mm
            )));
        }
        if d_end > cfg.endpoint_tolerance_mm {
            return Err(PreprocessError::BadIncision(format!(
                "last point is {d_end:.2} mm from the pylorus (limit {})",
                cfg.endpoint_tolerance_mm
            )));
        }
        for (n, p) in points.iter().enumerate() {
            if !on_inner_surface(p, wall, air) {
                return Err(PreprocessError::BadIncision(format!(
                    "point {n} at {p:?} is not on the inner wall surface"
                )));
            }
        }
        // Simplicity at voxel resolution: points at least 3 apart in the
        // sequence must not share a voxel.
        let voxels: Vec<Option<(usize, usize, usize)>> =
            points.iter().map(|p| wall.voxel_at(p)).collect();
        for a in 0..voxels.len() {
            for b in (a + 3)..voxels.len() {
                if voxels[a].is_some() && voxels[a] == voxels[b] {
                    return Err(PreprocessError::BadIncision(format!(
                        "self-intersection at voxel resolution between points {a} and {b}"
                    )));
                }
            }
        }
        Ok(Self { points })
    }

    /// Constructor for hand-built test inputs; skips invariant checks.
    pub fn from_points_unchecked(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// True when the point has both a wall voxel and an air voxel within a
/// one-voxel (Chebyshev) neighborhood of its containing voxel.
fn on_inner_surface(p: &Vec3, wall: &LabelVolume, air: &LabelVolume) -> bool {
    let Some((i, j, k)) = wall.voxel_at(p) else { return false };
    let mut has_wall = false;
    let mut has_air = false;
    for dk in -1i64..=1 {
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                if !wall.in_bounds(ni, nj, nk) {
                    continue;
                }
                let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
                has_wall |= wall.get(ni, nj, nk) == LABEL_WALL;
                has_air |= air.get(ni, nj, nk) == LABEL_AIR;
            }
        }
    }
    has_wall && has_air
}

const FACE_NEIGHBORS: [(i64, i64, i64); 6] =
    [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];

fn neighbors26() -> Vec<(i64, i64, i64)> {
    let mut out = Vec::with_capacity(26);
    for dk in -1i64..=1 {
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di != 0 || dj != 0 || dk != 0 {
                    out.push((di, dj, dk));
                }
            }
        }
    }
    out
}

/// f64 ordering wrapper for deterministic priority queues.
#[derive(Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Extracts the 6-connected air component containing `seed` from voxels at
/// or below the air threshold, then closes it with a one-voxel ball and
/// keeps the seed component of the closing.
pub fn extract_air_region(
    scalar: &ScalarVolume,
    seed: &Vec3,
    cfg: &PreprocessConfig,
) -> Result<LabelVolume, PreprocessError> {
    let (nx, ny, nz) = scalar.dims();
    let seed_voxel = scalar
        .voxel_at(seed)
        .ok_or(PreprocessError::SeedOutsideVolume { seed: [seed.x, seed.y, seed.z] })?;
    let seed_value = scalar.get(seed_voxel.0, seed_voxel.1, seed_voxel.2);
    if (seed_value as f64) > cfg.air_threshold {
        return Err(PreprocessError::SeedNotAir {
            found: seed_value,
            threshold: cfg.air_threshold,
        });
    }

    let is_air = |idx: usize| (scalar.data()[idx] as f64) <= cfg.air_threshold;
    let mut region = vec![false; scalar.len()];
    flood_fill_6(
        scalar.dims(),
        scalar.index(seed_voxel.0, seed_voxel.1, seed_voxel.2),
        &mut region,
        &|idx| is_air(idx),
    );

    // Morphological closing with a one-voxel (6-neighborhood) ball.
    let dilated = dilate6(scalar.dims(), &region);
    let mut closed = erode6(scalar.dims(), &dilated);
    // Closing is not guaranteed to stay connected; keep the seed component.
    let mut component = vec![false; scalar.len()];
    flood_fill_6(
        scalar.dims(),
        scalar.index(seed_voxel.0, seed_voxel.1, seed_voxel.2),
        &mut component,
        &|idx| closed[idx],
    );
    closed = component;

    let mut out = LabelVolume::filled((nx, ny, nz), scalar.spacing(), LABEL_BACKGROUND)
        .expect("dims from an existing volume");
    for (idx, &inside) in closed.iter().enumerate() {
        if inside {
            out.data_mut()[idx] = LABEL_AIR;
        }
    }
    Ok(out)
}

fn flood_fill_6(
    dims: (usize, usize, usize),
    seed_idx: usize,
    visited: &mut [bool],
    accept: &dyn Fn(usize) -> bool,
) {
    if !accept(seed_idx) {
        return;
    }
    let (nx, ny, _nz) = dims;
    let mut stack = vec![seed_idx];
    visited[seed_idx] = true;
    while let Some(idx) = stack.pop() {
        let i = (idx % nx) as i64;
        let j = ((idx / nx) % ny) as i64;
        let k = (idx / (nx * ny)) as i64;
        for (di, dj, dk) in FACE_NEIGHBORS {
            let (ni, nj, nk) = (i + di, j + dj, k + dk);
            if ni < 0
                || nj < 0
                || nk < 0
                || ni as usize >= dims.0
                || nj as usize >= dims.1
                || nk as usize >= dims.2
            {
                continue;
            }
            let nidx = ni as usize + nx * (nj as usize + ny * nk as usize);
            if !visited[nidx] && accept(nidx) {
                visited[nidx] = true;
                stack.push(nidx);
            }
        }
    }
}

fn dilate6(dims: (usize, usize, usize), mask: &[bool]) -> Vec<bool> {
    let (nx, ny, nz) = dims;
    let mut out = mask.to_vec();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                if mask[idx] {
                    continue;
                }
                let near = FACE_NEIGHBORS.iter().any(|&(di, dj, dk)| {
                    let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                    ni >= 0
                        && nj >= 0
                        && nk >= 0
                        && (ni as usize) < nx
                        && (nj as usize) < ny
                        && (nk as usize) < nz
                        && mask[ni as usize + nx * (nj as usize + ny * nk as usize)]
                });
                if near {
                    out[idx] = true;
                }
            }
        }
    }
    out
}

fn erode6(dims: (usize, usize, usize), mask: &[bool]) -> Vec<bool> {
    let (nx, ny, nz) = dims;
    let mut out = mask.to_vec();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                if !mask[idx] {
                    continue;
                }
                let all = FACE_NEIGHBORS.iter().all(|&(di, dj, dk)| {
                    let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                    ni >= 0
                        && nj >= 0
                        && nk >= 0
                        && (ni as usize) < nx
                        && (nj as usize) < ny
                        && (nk as usize) < nz
                        && mask[ni as usize + nx * (nj as usize + ny * nk as usize)]
                });
                if !all {
                    out[idx] = false;
                }
            }
        }
    }
    out
}

/// Grows the wall region: a geodesic shell of `wall_shell_mm` outward from
/// the air boundary through voxels above the wall intensity threshold.
pub fn extract_wall_region(
    scalar: &ScalarVolume,
    air: &LabelVolume,
    cfg: &PreprocessConfig,
) -> Result<LabelVolume, PreprocessError> {
    let dims = scalar.dims();
    let (nx, ny, nz) = dims;
    let spacing = scalar.spacing();
    let candidate = |idx: usize| {
        air.data()[idx] != LABEL_AIR && (scalar.data()[idx] as f64) > cfg.wall_intensity_threshold
    };

    // Seeds: candidate voxels face-adjacent to air, geodesic distance 0.
    let mut dist = vec![f64::INFINITY; scalar.len()];
    let mut heap: BinaryHeap<Reverse<(OrdF64, usize)>> = BinaryHeap::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                if !candidate(idx) {
                    continue;
                }
                let touches_air = FACE_NEIGHBORS.iter().any(|&(di, dj, dk)| {
                    let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                    air.in_bounds(ni, nj, nk)
                        && air.get(ni as usize, nj as usize, nk as usize) == LABEL_AIR
                });
                if touches_air {
                    dist[idx] = 0.0;
                    heap.push(Reverse((OrdF64(0.0), idx)));
                }
            }
        }
    }

    let offsets = neighbors26();
    let step_len: Vec<f64> = offsets
        .iter()
        .map(|&(di, dj, dk)| {
            let dx = di as f64 * spacing.0;
            let dy = dj as f64 * spacing.1;
            let dz = dk as f64 * spacing.2;
            (dx * dx + dy * dy + dz * dz).sqrt()
        })
        .collect();

    while let Some(Reverse((OrdF64(d), idx))) = heap.pop() {
        if d > dist[idx] {
            continue;
        }
        if d > cfg.wall_shell_mm {
            continue;
        }
        let i = (idx % nx) as i64;
        let j = ((idx / nx) % ny) as i64;
        let k = (idx / (nx * ny)) as i64;
        for (n, &(di, dj, dk)) in offsets.iter().enumerate() {
            let (ni, nj, nk) = (i + di, j + dj, k + dk);
            if !scalar.in_bounds(ni, nj, nk) {
                continue;
            }
            let nidx = ni as usize + nx * (nj as usize + ny * nk as usize);
            if !candidate(nidx) {
                continue;
            }
            let nd = d + step_len[n];
            if nd < dist[nidx] && nd <= cfg.wall_shell_mm {
                dist[nidx] = nd;
                heap.push(Reverse((OrdF64(nd), nidx)));
            }
        }
    }

    let mut out = LabelVolume::filled(dims, spacing, LABEL_BACKGROUND)
        .expect("dims from an existing volume");
    let mut count = 0usize;
    for (idx, d) in dist.iter().enumerate() {
        if d.is_finite() && *d <= cfg.wall_shell_mm {
            out.data_mut()[idx] = LABEL_WALL;
            count += 1;
        }
    }
    if count == 0 {
        return Err(PreprocessError::EmptyWall {
            shell_mm: cfg.wall_shell_mm,
            threshold: cfg.wall_intensity_threshold,
        });
    }
    Ok(out)
}

/// Squared Euclidean distance transform, one axis at a time
/// (Felzenszwalb-Huttenlocher lower envelope), with physical spacing.
/// `f` holds 0 at feature voxels and infinity elsewhere.
fn edt_squared(dims: (usize, usize, usize), spacing: (f64, f64, f64), f: &mut [f64]) {
    let (nx, ny, nz) = dims;

    fn dt_1d(f: &mut Vec<f64>, h: f64, scratch: &mut Vec<f64>) {
        let n = f.len();
        if n == 0 {
            return;
        }
        let mut v = vec![0usize; n];
        let mut z = vec![0.0f64; n + 1];
        let mut k = 0usize;
        v[0] = 0;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        let x = |i: usize| i as f64 * h;
        for q in 1..n {
            if f[q].is_infinite() && f[v[k]].is_infinite() {
                // Both parabolas are at infinity; keep the earlier one.
                continue;
            }
            let mut s;
            loop {
                let p = v[k];
                s = if f[q].is_infinite() {
                    f64::INFINITY
                } else if f[p].is_infinite() {
                    f64::NEG_INFINITY
                } else {
                    ((f[q] + x(q) * x(q)) - (f[p] + x(p) * x(p))) / (2.0 * x(q) - 2.0 * x(p))
                };
                if s <= z[k] {
                    if k == 0 {
                        // Replace the sole parabola.
                        v[0] = q;
                        z[0] = f64::NEG_INFINITY;
                        z[1] = f64::INFINITY;
                        break;
                    }
                    k -= 1;
                } else {
                    k += 1;
                    v[k] = q;
                    z[k] = s;
                    z[k + 1] = f64::INFINITY;
                    break;
                }
            }
        }
        scratch.clear();
        scratch.resize(n, 0.0);
        let mut k2 = 0usize;
        for q in 0..n {
            while z[k2 + 1] < x(q) {
                k2 += 1;
            }
            let p = v[k2];
            scratch[q] = if f[p].is_infinite() {
                f64::INFINITY
            } else {
                let d = x(q) - x(p);
                d * d + f[p]
            };
        }
        f.copy_from_slice(scratch);
    }

    let mut line = Vec::new();
    let mut scratch = Vec::new();

    // x pass
    for k in 0..nz {
        for j in 0..ny {
            line.clear();
            for i in 0..nx {
                line.push(f[i + nx * (j + ny * k)]);
            }
            dt_1d(&mut line, spacing.0, &mut scratch);
            for i in 0..nx {
                f[i + nx * (j + ny * k)] = line[i];
            }
        }
    }
    // y pass
    for k in 0..nz {
        for i in 0..nx {
            line.clear();
            for j in 0..ny {
                line.push(f[i + nx * (j + ny * k)]);
            }
            dt_1d(&mut line, spacing.1, &mut scratch);
            for j in 0..ny {
                f[i + nx * (j + ny * k)] = line[j];
            }
        }
    }
    // z pass
    for j in 0..ny {
        for i in 0..nx {
            line.clear();
            for k in 0..nz {
                line.push(f[i + nx * (j + ny * k)]);
            }
            dt_1d(&mut line, spacing.2, &mut scratch);
            for k in 0..nz {
                f[i + nx * (j + ny * k)] = line[k];
            }
        }
    }
}

/// Distance (mm) from each air voxel to the nearest non-air voxel.
pub fn air_distance_transform(air: &LabelVolume) -> Vec<f64> {
    let mut f: Vec<f64> = air
        .data()
        .iter()
        .map(|&l| if l == LABEL_AIR { f64::INFINITY } else { 0.0 })
        .collect();
    edt_squared(air.dims(), air.spacing(), &mut f);
    f.iter_mut().for_each(|d| *d = d.sqrt());
    f
}

fn snap_to_air(
    air: &LabelVolume,
    landmark: &Vec3,
    snap_mm: f64,
) -> Result<usize, PreprocessError> {
    // Nearest air voxel center within snap_mm; ties break to the lowest
    // linear index via strict improvement in scan order.
    let mut best: Option<(f64, usize)> = None;
    for (idx, &l) in air.data().iter().enumerate() {
        if l != LABEL_AIR {
            continue;
        }
        let (i, j, k) = air.coords(idx);
        let d = (air.world(i, j, k) - landmark).norm();
        if best.map(|(bd, _)| d < bd).unwrap_or(true) {
            best = Some((d, idx));
        }
    }
    match best {
        Some((d, idx)) if d <= snap_mm => Ok(idx),
        _ => Err(PreprocessError::LandmarkNotNearAir {
            landmark: [landmark.x, landmark.y, landmark.z],
            snap_mm,
        }),
    }
}

/// Minimal-cost path between two voxel indices through the air region.
/// Step cost is Euclidean step length divided by (1 + DT(target)).
/// Returns the voxel-center path and its total cost.
pub fn air_path(
    air: &LabelVolume,
    dt: &[f64],
    from: usize,
    to: usize,
) -> Result<(Vec<usize>, f64), PreprocessError> {
    let (nx, ny, _nz) = air.dims();
    let spacing = air.spacing();
    let offsets = neighbors26();
    let step_len: Vec<f64> = offsets
        .iter()
        .map(|&(di, dj, dk)| {
            let dx = di as f64 * spacing.0;
            let dy = dj as f64 * spacing.1;
            let dz = dk as f64 * spacing.2;
            (dx * dx + dy * dy + dz * dz).sqrt()
        })
        .collect();

    let mut cost = vec![f64::INFINITY; air.len()];
    let mut prev = vec![usize::MAX; air.len()];
    let mut heap: BinaryHeap<Reverse<(OrdF64, usize)>> = BinaryHeap::new();
    cost[from] = 0.0;
    heap.push(Reverse((OrdF64(0.0), from)));
    while let Some(Reverse((OrdF64(c), idx))) = heap.pop() {
        if c > cost[idx] {
            continue;
        }
        if idx == to {
            break;
        }
        let i = (idx % nx) as i64;
        let j = ((idx / nx) % ny) as i64;
        let k = (idx / (nx * ny)) as i64;
        for (n, &(di, dj, dk)) in offsets.iter().enumerate() {
            let (ni, nj, nk) = (i + di, j + dj, k + dk);
            if !air.in_bounds(ni, nj, nk) {
                continue;
            }
            let nidx = ni as usize + nx * (nj as usize + ny * nk as usize);
            if air.data()[nidx] != LABEL_AIR {
                continue;
            }
            let nc = c + step_len[n] / (1.0 + dt[nidx]);
            if nc < cost[nidx] {
                cost[nidx] = nc;
                prev[nidx] = idx;
                heap.push(Reverse((OrdF64(nc), nidx)));
            }
        }
    }
    if !cost[to].is_finite() {
        return Err(PreprocessError::LandmarksDisconnected);
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    Ok((path, cost[to]))
}

fn smooth_polyline(points: &mut Vec<Vec3>, passes: usize, keep_inside: Option<&LabelVolume>) {
    for _ in 0..passes {
        if points.len() < 3 {
            return;
        }
        let mut next = points.clone();
        for n in 1..points.len() - 1 {
            let avg = (points[n - 1] + points[n] + points[n + 1]) / 3.0;
            let ok = keep_inside
                .map(|air| {
                    air.voxel_at(&avg)
                        .map(|(i, j, k)| air.get(i, j, k) == LABEL_AIR)
                        .unwrap_or(false)
                })
                .unwrap_or(true);
            if ok {
                next[n] = avg;
            }
        }
        *points = next;
    }
}

fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Resamples a polyline at fixed arc-length steps, keeping both endpoints.
fn resample_polyline(points: &[Vec3], step: f64) -> Vec<Vec3> {
    if points.len() < 2 {
        return points.to_vec();
    }
    let total = polyline_length(points);
    if total < 1e-12 {
        return vec![points[0], points[points.len() - 1]];
    }
    let count = (total / step).ceil() as usize;
    let mut out = Vec::with_capacity(count + 1);
    out.push(points[0]);
    let mut target = step;
    let mut seg = 0usize;
    let mut seg_start = 0.0f64;
    while target < total - 1e-9 {
        let mut seg_len = (points[seg + 1] - points[seg]).norm();
        while seg_start + seg_len < target && seg + 2 < points.len() {
            seg_start += seg_len;
            seg += 1;
            seg_len = (points[seg + 1] - points[seg]).norm();
        }
        let local = if seg_len > 1e-12 { (target - seg_start) / seg_len } else { 0.0 };
        out.push(points[seg] + (points[seg + 1] - points[seg]) * local.clamp(0.0, 1.0));
        target += step;
    }
    out.push(points[points.len() - 1]);
    out
}

/// Extracts the centerline between the two landmarks: minimal-cost path
/// through the air region (cost favors the lumen interior via the distance
/// transform), smoothed and resampled.
pub fn extract_centerline(
    air: &LabelVolume,
    cardia: &Vec3,
    pylorus: &Vec3,
    cfg: &PreprocessConfig,
) -> Result<Centerline, PreprocessError> {
    let from = snap_to_air(air, cardia, cfg.landmark_snap_mm)?;
    let to = snap_to_air(air, pylorus, cfg.landmark_snap_mm)?;
    if from == to {
        return Err(PreprocessError::LandmarksCoincide);
    }
    let dt = air_distance_transform(air);
    let (path, _cost) = air_path(air, &dt, from, to)?;

    let mut points: Vec<Vec3> = path
        .iter()
        .map(|&idx| {
            let (i, j, k) = air.coords(idx);
            air.world(i, j, k)
        })
        .collect();
    smooth_polyline(&mut points, cfg.centerline_smooth_passes, Some(air));
    let step = cfg.resample_step_mm.min(2.0 * air.max_spacing());
    let mut resampled = resample_polyline(&points, step);
    // Interpolated points may fall just outside a thin lumen; nudge them to
    // the nearest air voxel center in their immediate neighborhood.
    for p in resampled.iter_mut() {
        let inside = air
            .voxel_at(p)
            .map(|(i, j, k)| air.get(i, j, k) == LABEL_AIR)
            .unwrap_or(false);
        if inside {
            continue;
        }
        if let Some((i, j, k)) = air.voxel_at(p) {
            let mut best: Option<(f64, Vec3)> = None;
            for dk in -1i64..=1 {
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                        if !air.in_bounds(ni, nj, nk) {
                            continue;
                        }
                        let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
                        if air.get(ni, nj, nk) != LABEL_AIR {
                            continue;
                        }
                        let c = air.world(ni, nj, nk);
                        let d = (c - *p).norm();
                        if best.map(|(bd, _)| d < bd).unwrap_or(true) {
                            best = Some((d, c));
                        }
                    }
                }
            }
            if let Some((_, c)) = best {
                *p = c;
            }
        }
    }
    resampled.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    Centerline::new(resampled, air)
}

/// Inner-surface voxels: wall voxels face-adjacent to air. Returned as
/// (linear index, world center), ordered by linear index.
pub fn inner_surface_voxels(wall: &LabelVolume, air: &LabelVolume) -> Vec<(usize, Vec3)> {
    let (nx, ny, nz) = wall.dims();
    let mut out = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if wall.get(i, j, k) != LABEL_WALL {
                    continue;
                }
                let touches_air = FACE_NEIGHBORS.iter().any(|&(di, dj, dk)| {
                    let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                    air.in_bounds(ni, nj, nk)
                        && air.get(ni as usize, nj as usize, nk as usize) == LABEL_AIR
                });
                if touches_air {
                    out.push((wall.index(i, j, k), wall.world(i, j, k)));
                }
            }
        }
    }
    out
}

/// Determines the incision line: for each centerline point, the inner-surface
/// voxel farthest from it within a thin cross-section slab orthogonal to the
/// local tangent (greater-curvature ridge analogue), then smoothed, resampled
/// to an even count, and clamped to the landmarks.
///
/// This substitutes for the incision-line method of the cited prior work,
/// preserving the geometric relationship the downstream stages consume.
pub fn determine_incision_line(
    wall: &LabelVolume,
    air: &LabelVolume,
    centerline: &Centerline,
    cardia: &Vec3,
    pylorus: &Vec3,
    cfg: &PreprocessConfig,
) -> Result<IncisionLine, PreprocessError> {
    let surface = inner_surface_voxels(wall, air);
    if surface.is_empty() {
        return Err(PreprocessError::NoInnerSurfaceInSlab { k: 0 });
    }
    let pts = centerline.points();
    let tangent_at = |k: usize| -> Vec3 {
        let t = if k == 0 {
            pts[1] - pts[0]
        } else if k == pts.len() - 1 {
            pts[k] - pts[k - 1]
        } else {
            pts[k + 1] - pts[k - 1]
        };
        t.normalize()
    };

    // Ridge direction per cross section: away from the local curvature
    // center, estimated on a wide stencil so voxel noise averages out.
    // Straight stretches inherit the nearest curved section's direction;
    // a fully straight centerline falls back to the farthest-surface-voxel
    // direction of the middle cross section.
    let stencil = 5usize.min(pts.len().saturating_sub(1) / 2).max(1);
    let mut dirs: Vec<Option<Vec3>> = vec![None; pts.len()];
    for k in 0..pts.len() {
        let lo = k.saturating_sub(stencil);
        let hi = (k + stencil).min(pts.len() - 1);
        if lo == k || hi == k {
            continue;
        }
        let away = pts[k] - (pts[lo] + pts[hi]) / 2.0;
        if away.norm() < 0.5 {
            continue;
        }
        let tangent = tangent_at(k);
        let perp = away - tangent * away.dot(&tangent);
        if perp.norm() > 1e-9 {
            dirs[k] = Some(perp.normalize());
        }
    }
    if dirs.iter().all(|d| d.is_none()) {
        let k_mid = pts.len() / 2;
        let tangent = tangent_at(k_mid);
        let mut best: Option<(f64, usize, Vec3)> = None;
        for &(idx, ref p) in &surface {
            let rel = p - pts[k_mid];
            if rel.dot(&tangent).abs() > cfg.slab_half_width_mm {
                continue;
            }
            let d = rel.norm();
            let better = match best {
                None => true,
                Some((bd, bidx, _)) => d > bd || (d == bd && idx < bidx),
            };
            if better {
                best = Some((d, idx, *p));
            }
        }
        let Some((_, _, p)) = best else {
            return Err(PreprocessError::NoInnerSurfaceInSlab { k: k_mid });
        };
        let rel = p - pts[k_mid];
        let perp = rel - tangent * rel.dot(&tangent);
        if perp.norm() > 1e-9 {
            dirs[k_mid] = Some(perp.normalize());
        }
    }
    // Fill gaps from the nearest defined neighbor (lower k wins ties).
    let filled: Vec<Vec3> = (0..pts.len())
        .map(|k| {
            if let Some(d) = dirs[k] {
                return d;
            }
            let mut step = 1usize;
            loop {
                if step > pts.len() {
                    return Vec3::new(1.0, 0.0, 0.0);
                }
                if k >= step {
                    if let Some(d) = dirs[k - step] {
                        return d;
                    }
                }
                if k + step < pts.len() {
                    if let Some(d) = dirs[k + step] {
                        return d;
                    }
                }
                step += 1;
            }
        })
        .collect();

    // Select the surface voxel reaching farthest along the ridge direction
    // within each cross-section slab.
    let mut selected: Vec<Vec3> = Vec::with_capacity(pts.len());
    for k in 0..pts.len() {
        let tangent = tangent_at(k);
        let dir = filled[k];
        let mut best: Option<(f64, usize, Vec3)> = None;
        for &(idx, ref p) in &surface {
            let rel = p - pts[k];
            if rel.dot(&tangent).abs() > cfg.slab_half_width_mm {
                continue;
            }
            let proj = rel.dot(&dir);
            let better = match best {
                None => true,
                Some((bp, bidx, _)) => proj > bp || (proj == bp && idx < bidx),
            };
            if better {
                best = Some((proj, idx, *p));
            }
        }
        let Some((_, _, p)) = best else {
            return Err(PreprocessError::NoInnerSurfaceInSlab { k });
        };
        selected.push(p);
    }
    selected.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    if selected.len() < 2 {
        return Err(PreprocessError::BadIncision(
            "ridge selection collapsed to fewer than 2 points".into(),
        ));
    }

    smooth_polyline(&mut selected, cfg.incision_smooth_passes, None);
    let step = cfg.resample_step_mm.min(2.0 * wall.max_spacing());
    let mut resampled = resample_polyline(&selected, step);
    if resampled.len() % 2 != 0 {
        resampled.pop();
    }
    if resampled.len() < 2 {
        return Err(PreprocessError::BadIncision("resampling left fewer than 2 points".into()));
    }

    // Clamp endpoints to the inner-surface voxels nearest the landmarks.
    let nearest_surface = |target: &Vec3| -> Vec3 {
        let mut best: Option<(f64, usize, Vec3)> = None;
        for &(idx, ref p) in &surface {
            let d = (p - target).norm();
            let better = match best {
                None => true,
                Some((bd, bidx, _)) => d < bd || (d == bd && idx < bidx),
            };
            if better {
                best = Some((d, idx, *p));
            }
        }
        best.expect("surface nonempty").2
    };
    let first = nearest_surface(cardia);
    let last = nearest_surface(pylorus);
    *resampled.first_mut().expect("nonempty") = first;
    *resampled.last_mut().expect("nonempty") = last;

    IncisionLine::new(resampled, wall, air, cardia, pylorus, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{gen_phantom, PhantomShape, PhantomSpec};
    use crate::volume::ScalarVolume;

    fn spec(shape: PhantomShape) -> PhantomSpec {
        PhantomSpec {
            shape,
            radius_mm: 20.0,
            wall_mm: 4.0,
            length_mm: 100.0,
            spacing: (1.0, 1.0, 1.0),
            dims: None,
        }
    }

    fn dice(a: &LabelVolume, b: &LabelVolume, label_a: u8, label_b: u8) -> f64 {
        let mut inter = 0usize;
        let mut ca = 0usize;
        let mut cb = 0usize;
        for (x, y) in a.data().iter().zip(b.data()) {
            let xa = *x == label_a;
            let yb = *y == label_b;
            ca += xa as usize;
            cb += yb as usize;
            inter += (xa && yb) as usize;
        }
        2.0 * inter as f64 / (ca + cb) as f64
    }

    #[test]
    fn air_region_recovers_phantom_lumen() {
        let (scalar, labels, truth) = gen_phantom(&spec(PhantomShape::StraightTube)).unwrap();
        let seed = Vec3::from(truth.axis_mm[truth.axis_mm.len() / 2]);
        let cfg = PreprocessConfig::default();
        let air = extract_air_region(&scalar, &seed, &cfg).unwrap();
        let d = dice(&air, &labels, LABEL_AIR, LABEL_AIR);
        assert!(d >= 0.98, "air dice {d}");
    }

    #[test]
    fn seed_in_wall_rejected() {
        let (scalar, _, truth) = gen_phantom(&spec(PhantomShape::StraightTube)).unwrap();
        // 2 mm outside the outer surface along +x from the axis midpoint.
        let mid = Vec3::from(truth.axis_mm[truth.axis_mm.len() / 2]);
        let seed = mid + Vec3::new(18.0, 0.0, 0.0);
        let cfg = PreprocessConfig::default();
        match extract_air_region(&scalar, &seed, &cfg) {
            Err(PreprocessError::SeedNotAir { found, .. }) => assert_eq!(found, 40),
            other => panic!("expected SeedNotAir, got {other:?}"),
        }
    }

    #[test]
    fn disjoint_pockets_stay_separate() {
        let mut scalar = ScalarVolume::filled((30, 10, 10), (1.0, 1.0, 1.0), 0).unwrap();
        for i in 2..8 {
            scalar.set(i, 5, 5, -1000);
        }
        for i in 20..26 {
            scalar.set(i, 5, 5, -1000);
        }
        let cfg = PreprocessConfig::default();
        let air = extract_air_region(&scalar, &Vec3::new(4.0, 5.0, 5.0), &cfg).unwrap();
        assert_eq!(air.get(4, 5, 5), LABEL_AIR);
        for i in 20..26 {
            assert_eq!(air.get(i, 5, 5), LABEL_BACKGROUND, "pocket B voxel {i} was labeled");
        }
    }

    #[test]
    fn wall_region_recovers_phantom_wall() {
        let (scalar, labels, truth) = gen_phantom(&spec(PhantomShape::StraightTube)).unwrap();
        let seed = Vec3::from(truth.axis_mm[truth.axis_mm.len() / 2]);
        let cfg = PreprocessConfig::default();
        let air = extract_air_region(&scalar, &seed, &cfg).unwrap();
        let wall = extract_wall_region(&scalar, &air, &cfg).unwrap();
        let d = dice(&wall, &labels, LABEL_WALL, LABEL_WALL);
        assert!(d >= 0.95, "wall dice {d}");
    }

    #[test]
    fn wall_clips_at_volume_border() {
        // Air slab reaching the -x border, wall-like material around it.
        let mut scalar = ScalarVolume::filled((20, 20, 20), (1.0, 1.0, 1.0), 40).unwrap();
        for k in 5..15 {
            for j in 5..15 {
                for i in 0..6 {
                    scalar.set(i, j, k, -1000);
                }
            }
        }
        let cfg = PreprocessConfig::default();
        let air = extract_air_region(&scalar, &Vec3::new(1.0, 10.0, 10.0), &cfg).unwrap();
        let wall = extract_wall_region(&scalar, &air, &cfg).unwrap();
        assert!(wall.data().iter().any(|&l| l == LABEL_WALL));
    }

    #[test]
    fn zero_shell_is_empty_wall() {
        let (scalar, _, truth) = gen_phantom(&spec(PhantomShape::StraightTube)).unwrap();
        let seed = Vec3::from(truth.axis_mm[0]);
        let cfg = PreprocessConfig::default();
        let air = extract_air_region(&scalar, &seed, &cfg).unwrap();
        let cfg0 = PreprocessConfig { wall_shell_mm: -1.0, ..cfg };
        assert!(matches!(
            extract_wall_region(&scalar, &air, &cfg0),
            Err(PreprocessError::EmptyWall { .. })
        ));
    }

    #[test]
    fn straight_centerline_tracks_axis() {
        let (scalar, _, truth) = gen_phantom(&spec(PhantomShape::StraightTube)).unwrap();
        let cfg = PreprocessConfig::default();
        let cardia = Vec3::from(truth.cardia_mm);
        let pylorus = Vec3::from(truth.pylorus_mm);
        let air = extract_air_region(&scalar, &cardia, &cfg).unwrap();
        let line = extract_centerline(&air, &cardia, &pylorus, &cfg).unwrap();
        let axis: Vec<Vec3> = truth.axis_mm.iter().map(|p| Vec3::from(*p)).collect();
        let max_dev = line
            .points()
            .iter()
            .map(|c| {
                axis.windows(2)
                    .map(|w| point_segment_distance(c, &w[0], &w[1]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        assert!(max_dev <= 1.5, "max deviation {max_dev}");
    }

    #[test]
    fn j_tube_centerline_arc_length() {
        let (scalar, _, truth) = gen_phantom(&spec(PhantomShape::JTube)).unwrap();
        let cfg = PreprocessConfig::default();
        let cardia = Vec3::from(truth.cardia_mm);
        let pylorus = Vec3::from(truth.pylorus_mm);
        let air = extract_air_region(&scalar, &cardia, &cfg).unwrap();
        let line = extract_centerline(&air, &cardia, &pylorus, &cfg).unwrap();
        let got = line.arc_length();
        let expect = truth.axis_arc_length_mm;
        let rel = (got - expect).abs() / expect;
        assert!(rel <= 0.10, "arc length {got} vs {expect} (rel {rel})");
    }

    #[test]
    fn unreachable_pylorus_errors() {
        let (scalar, _, truth) = gen_phantom(&spec(PhantomShape::StraightTube)).unwrap();
        let cfg = PreprocessConfig::default();
        let cardia = Vec3::from(truth.cardia_mm);
        let air = extract_air_region(&scalar, &cardia, &cfg).unwrap();
        let outside = Vec3::new(1.0, 1.0, 1.0); // background corner
        assert!(matches!(
            extract_centerline(&air, &cardia, &outside, &cfg),
            Err(PreprocessError::LandmarkNotNearAir { .. })
        ));
    }

    #[test]
    fn centerline_cost_monotone_under_lumen_dilation() {
        // Dilating the lumen raises DT everywhere, so the optimal cost
        // cannot increase.
        let (scalar, _, truth) = gen_phantom(&PhantomSpec {
            shape: PhantomShape::StraightTube,
            radius_mm: 8.0,
            wall_mm: 2.0,
            length_mm: 30.0,
            spacing: (1.0, 1.0, 1.0),
            dims: None,
        })
        .unwrap();
        let cfg = PreprocessConfig::default();
        let cardia = Vec3::from(truth.cardia_mm);
        let pylorus = Vec3::from(truth.pylorus_mm);
        let air = extract_air_region(&scalar, &cardia, &cfg).unwrap();
        let from = snap_to_air(&air, &cardia, cfg.landmark_snap_mm).unwrap();
        let to = snap_to_air(&air, &pylorus, cfg.landmark_snap_mm).unwrap();
        let dt = air_distance_transform(&air);
        let (_, cost) = air_path(&air, &dt, from, to).unwrap();

        let mask: Vec<bool> = air.data().iter().map(|&l| l == LABEL_AIR).collect();
        let dilated_mask = dilate6(air.dims(), &mask);
        let mut dilated = air.clone();
        for (idx, &m) in dilated_mask.iter().enumerate() {
            dilated.data_mut()[idx] = if m { LABEL_AIR } else { LABEL_BACKGROUND };
        }
        let dt2 = air_distance_transform(&dilated);
        let (_, cost2) = air_path(&dilated, &dt2, from, to).unwrap();
        assert!(cost2 <= cost + 1e-9, "cost grew after dilation: {cost} -> {cost2}");
    }

    #[test]
    fn straight_incision_lies_on_inner_surface() {
        let (scalar, _, truth) = gen_phantom(&spec(PhantomShape::StraightTube)).unwrap();
        let cfg = PreprocessConfig::default();
        let cardia = Vec3::from(truth.cardia_mm);
        let pylorus = Vec3::from(truth.pylorus_mm);
        let air = extract_air_region(&scalar, &cardia, &cfg).unwrap();
        let wall = extract_wall_region(&scalar, &air, &cfg).unwrap();
        let center = extract_centerline(&air, &cardia, &pylorus, &cfg).unwrap();
        let incision =
            determine_incision_line(&wall, &air, &center, &cardia, &pylorus, &cfg).unwrap();
        assert_eq!(incision.len() % 2, 0);
        // Interior points ride the ring at the inner radius; the endpoints
        // are clamped to the surface nearest the landmarks (the end caps).
        let axis: Vec<Vec3> = truth.axis_mm.iter().map(|p| Vec3::from(*p)).collect();
        let u = incision.points();
        for p in &u[1..u.len() - 1] {
            let rho = axis
                .windows(2)
                .map(|w| point_segment_distance(p, &w[0], &w[1]))
                .fold(f64::INFINITY, f64::min);
            assert!((rho - 16.0).abs() <= 1.0 + 1e-9, "radius {rho} not within 1 voxel of 16");
        }
    }

    #[test]
    fn j_tube_incision_prefers_outer_bend() {
        let (scalar, _, truth) = gen_phantom(&spec(PhantomShape::JTube)).unwrap();
        let cfg = PreprocessConfig::default();
        let cardia = Vec3::from(truth.cardia_mm);
        let pylorus = Vec3::from(truth.pylorus_mm);
        let air = extract_air_region(&scalar, &cardia, &cfg).unwrap();
        let wall = extract_wall_region(&scalar, &air, &cfg).unwrap();
        let center = extract_centerline(&air, &cardia, &pylorus, &cfg).unwrap();
        let incision =
            determine_incision_line(&wall, &air, &center, &cardia, &pylorus, &cfg).unwrap();
        let bend_center = Vec3::from(truth.bend_center_mm.unwrap());
        let bend_radius = truth.bend_radius_mm.unwrap();
        let outer = incision
            .points()
            .iter()
            .filter(|u| (*u - bend_center).norm() > bend_radius)
            .count();
        let frac = outer as f64 / incision.len() as f64;
        assert!(frac >= 0.9, "outer-bend fraction {frac}");
    }

    fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
        let ab = b - a;
        let len2 = ab.norm_squared();
        if len2 < 1e-18 {
            return (p - a).norm();
        }
        let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
        (p - (a + ab * t)).norm()
    }
}
