//! Hexahedral mass-spring-damper model of the organ wall.
//!
//! Hexahedra live on a regular lattice of stride `d` voxels in x/y and
//! `d_hat` in z, where `d_hat = d * pixel_spacing / slice_spacing` rounded to
//! the nearest integer (at least 1). A lattice cell becomes a hexahedron when
//! it covers at least one wall voxel; cells crossed by the incision polyline
//! are removed so the wall can open along the cut. Shared vertices merge
//! exactly through lattice indexing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::volume::{LabelVolume, LABEL_AIR, LABEL_WALL};
use crate::Vec3;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WallModelConfig {
    /// Hexahedron edge length in voxels (x and y).
    pub d: usize,
    /// Mass density in kg per cubic millimeter.
    pub rho: f64,
    /// Edge spring stiffness (force units per mm extension).
    pub edge_stiffness: f64,
    /// Face-diagonal spring stiffness.
    pub diagonal_stiffness: f64,
    /// Damper coefficient co-located with every spring.
    pub damper_coefficient: f64,
    /// Cut-edge vertices must lie within
    /// `svb_radius_factor * d * max(spacing)` of the incision polyline.
    pub svb_radius_factor: f64,
}

impl Default for WallModelConfig {
    fn default() -> Self {
        Self {
            d: 8,
            rho: 1.5e-7,
            edge_stiffness: 0.01,
            diagonal_stiffness: 0.002,
            damper_coefficient: 1.0e-4,
            svb_radius_factor: 2.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WallModelError {
    #[error("d must be at least 2, got {0}")]
    BadStride(usize),
    #[error("no lattice cell covers a wall voxel (d = {d} too large or wall empty)")]
    NoCells { d: usize },
    #[error("incision removal left no hexahedra")]
    AllRemoved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpringKind {
    Edge,
    FaceDiagonal,
}

#[derive(Clone, Copy, Debug)]
pub struct Spring {
    pub a: u32,
    pub b: u32,
    pub rest_len: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub kind: SpringKind,
}

#[derive(Clone, Copy, Debug)]
pub struct Hexahedron {
    /// Node ids; corner c has lattice offset (c&1, c>>1&1, c>>2&1).
    pub nodes: [u32; 8],
    pub cell: (i32, i32, i32),
}

#[derive(Clone, Copy, Debug)]
pub struct Lattice {
    pub d: usize,
    pub d_hat: usize,
    pub spacing: (f64, f64, f64),
}

impl Lattice {
    /// World position of lattice node (a, b, c).
    pub fn node_world(&self, a: i32, b: i32, c: i32) -> Vec3 {
        Vec3::new(
            a as f64 * self.d as f64 * self.spacing.0,
            b as f64 * self.d as f64 * self.spacing.1,
            c as f64 * self.d_hat as f64 * self.spacing.2,
        )
    }

    pub fn cell_volume(&self) -> f64 {
        (self.d as f64 * self.spacing.0)
            * (self.d as f64 * self.spacing.1)
            * (self.d_hat as f64 * self.spacing.2)
    }
}

/// The assembled elastic model. Immutable after construction.
#[derive(Clone, Debug)]
pub struct WallModel {
    /// Rest positions of the vertices (world mm).
    pub positions: Vec<Vec3>,
    /// Lumped vertex masses (kg); infinite mass pins a vertex.
    pub masses: Vec<f64>,
    pub springs: Vec<Spring>,
    pub hexahedra: Vec<Hexahedron>,
    pub lattice: Lattice,
    cell_index: BTreeMap<(i32, i32, i32), u32>,
    removed_for_incision: BTreeSet<(i32, i32, i32)>,
    /// Connected components dropped after incision removal.
    pub dropped_components: usize,
    /// Hexahedra dropped with those components.
    pub dropped_cells: usize,
}

impl WallModel {
    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn cell(&self, key: (i32, i32, i32)) -> Option<u32> {
        self.cell_index.get(&key).copied()
    }

    pub fn is_removed_for_incision(&self, key: (i32, i32, i32)) -> bool {
        self.removed_for_incision.contains(&key)
    }

    pub fn total_cell_volume(&self) -> f64 {
        self.hexahedra.len() as f64 * self.lattice.cell_volume()
    }

    /// Hand-built model for tests and small experiments: no hexahedra, just
    /// vertices and springs.
    pub fn from_parts(positions: Vec<Vec3>, masses: Vec<f64>, springs: Vec<Spring>) -> Self {
        assert_eq!(positions.len(), masses.len());
        for s in &springs {
            assert!(s.a != s.b, "self-spring");
            assert!((s.a as usize) < positions.len() && (s.b as usize) < positions.len());
        }
        Self {
            positions,
            masses,
            springs,
            hexahedra: Vec::new(),
            lattice: Lattice { d: 1, d_hat: 1, spacing: (1.0, 1.0, 1.0) },
            cell_index: BTreeMap::new(),
            removed_for_incision: BTreeSet::new(),
            dropped_components: 0,
            dropped_cells: 0,
        }
    }

    /// Line-oriented diagnostic dump: `v i x y z m`, `s i j L k kind`,
    /// `h id v0..v7`, `set vo|vi|vb i...`.
    pub fn dump(&self, sets: Option<&VertexSets>) -> String {
        let mut out = String::new();
        for (i, (p, m)) in self.positions.iter().zip(&self.masses).enumerate() {
            out.push_str(&format!("v {} {} {} {} {}\n", i, p.x, p.y, p.z, m));
        }
        for s in &self.springs {
            let kind = match s.kind {
                SpringKind::Edge => "edge",
                SpringKind::FaceDiagonal => "face-diagonal",
            };
            out.push_str(&format!("s {} {} {} {} {}\n", s.a, s.b, s.rest_len, s.stiffness, kind));
        }
        for (id, h) in self.hexahedra.iter().enumerate() {
            out.push_str(&format!(
                "h {} {} {} {} {} {} {} {} {}\n",
                id,
                h.nodes[0],
                h.nodes[1],
                h.nodes[2],
                h.nodes[3],
                h.nodes[4],
                h.nodes[5],
                h.nodes[6],
                h.nodes[7]
            ));
        }
        if let Some(sets) = sets {
            for (name, set) in [("vo", &sets.vo), ("vi", &sets.vi), ("vb", &sets.vb)] {
                out.push_str(&format!("set {name}"));
                for v in set {
                    out.push_str(&format!(" {v}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Vertex index sets: outer surface, inner surface, and cut edge.
#[derive(Clone, Debug, Default)]
pub struct VertexSets {
    pub vo: Vec<u32>,
    pub vi: Vec<u32>,
    pub vb: Vec<u32>,
}

/// `d_hat = d * pixel_spacing / slice_spacing`, rounded, at least 1.
pub fn slice_stride(d: usize, spacing: (f64, f64, f64)) -> usize {
    let raw = d as f64 * spacing.0 / spacing.2;
    (raw.round() as i64).max(1) as usize
}

fn segment_intersects_box(a: &Vec3, b: &Vec3, lo: &Vec3, hi: &Vec3) -> bool {
    // Slab test in each axis.
    let d = b - a;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for axis in 0..3 {
        let da = d[axis];
        if da.abs() < 1e-12 {
            if a[axis] < lo[axis] || a[axis] > hi[axis] {
                return false;
            }
            continue;
        }
        let mut ta = (lo[axis] - a[axis]) / da;
        let mut tb = (hi[axis] - a[axis]) / da;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}

fn point_polyline_distance(p: &Vec3, polyline: &[Vec3]) -> f64 {
    if polyline.is_empty() {
        return f64::INFINITY;
    }
    if polyline.len() == 1 {
        return (p - polyline[0]).norm();
    }
    polyline
        .windows(2)
        .map(|w| {
            let ab = w[1] - w[0];
            let len2 = ab.norm_squared();
            if len2 < 1e-18 {
                (p - w[0]).norm()
            } else {
                let t = ((p - w[0]).dot(&ab) / len2).clamp(0.0, 1.0);
                (p - (w[0] + ab * t)).norm()
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Outward cut direction at an incision point: away from the centroid of
/// nearby lumen air, so the cut sweeps from the inner surface through the
/// full wall thickness.
fn outward_cut_dir(air: &LabelVolume, point: &Vec3) -> Option<Vec3> {
    let radius = 2.5 * air.max_spacing();
    let Some((ci, cj, ck)) = air.voxel_at(point) else { return None };
    let reach = (radius / air.spacing().0.min(air.spacing().1).min(air.spacing().2)).ceil() as i64;
    let mut centroid = Vec3::zeros();
    let mut count = 0usize;
    for dk in -reach..=reach {
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let (i, j, k) = (ci as i64 + di, cj as i64 + dj, ck as i64 + dk);
                if !air.in_bounds(i, j, k) {
                    continue;
                }
                let (i, j, k) = (i as usize, j as usize, k as usize);
                if air.get(i, j, k) != LABEL_AIR {
                    continue;
                }
                let c = air.world(i, j, k);
                if (c - point).norm() <= radius {
                    centroid += c;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return None;
    }
    let dir = point - centroid / count as f64;
    let n = dir.norm();
    if n < 1e-9 {
        None
    } else {
        Some(dir / n)
    }
}

/// Builds the hexahedral model from the wall region.
///
/// The incision polyline is given in world mm; the cells it crosses are
/// removed, and so are cells crossed by the polyline swept outward from the
/// lumen, so the cut opens the full wall thickness. If removal splits the
/// model, the largest connected component is kept and the drop is reported
/// on the returned model, not treated as fatal.
pub fn build_hex_model(
    wall: &LabelVolume,
    air: &LabelVolume,
    incision: &[Vec3],
    cfg: &WallModelConfig,
) -> Result<WallModel, WallModelError> {
    if cfg.d < 2 {
        return Err(WallModelError::BadStride(cfg.d));
    }
    let (nx, ny, nz) = wall.dims();
    let spacing = wall.spacing();
    let d = cfg.d;
    let d_hat = slice_stride(d, spacing);
    let lattice = Lattice { d, d_hat, spacing };

    // Lattice cells covering at least one wall voxel.
    let cells_x = nx.div_ceil(d);
    let cells_y = ny.div_ceil(d);
    let cells_z = nz.div_ceil(d_hat);
    let mut candidates: BTreeSet<(i32, i32, i32)> = BTreeSet::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if wall.get(i, j, k) == LABEL_WALL {
                    candidates.insert(((i / d) as i32, (j / d) as i32, (k / d_hat) as i32));
                }
            }
        }
    }
    let _ = (cells_x, cells_y, cells_z);
    if candidates.is_empty() {
        return Err(WallModelError::NoCells { d });
    }

    // Remove cells crossed by the incision cut: the polyline itself plus a
    // per-point sweep outward through the wall.
    let mut removed: BTreeSet<(i32, i32, i32)> = BTreeSet::new();
    if incision.len() >= 2 {
        let sweep = 2.0 * d as f64 * wall.max_spacing();
        let mut cut_segments: Vec<(Vec3, Vec3)> =
            incision.windows(2).map(|w| (w[0], w[1])).collect();
        for u in incision {
            if let Some(dir) = outward_cut_dir(air, u) {
                cut_segments.push((*u, u + dir * sweep));
            }
        }
        for &(a, b, c) in &candidates {
            let lo = lattice.node_world(a, b, c);
            let hi = lattice.node_world(a + 1, b + 1, c + 1);
            let crossed = cut_segments
                .iter()
                .any(|(p, q)| segment_intersects_box(p, q, &lo, &hi));
            if crossed {
                removed.insert((a, b, c));
            }
        }
    }
    let kept: BTreeSet<(i32, i32, i32)> = candidates.difference(&removed).copied().collect();
    if kept.is_empty() {
        return Err(WallModelError::AllRemoved);
    }

    // Connected components: cells sharing at least one lattice node are
    // neighbors (Chebyshev distance 1 in cell space).
    let mut component: BTreeMap<(i32, i32, i32), usize> = BTreeMap::new();
    let mut comp_count = 0usize;
    for &start in &kept {
        if component.contains_key(&start) {
            continue;
        }
        let id = comp_count;
        comp_count += 1;
        let mut stack = vec![start];
        component.insert(start, id);
        while let Some((a, b, c)) = stack.pop() {
            for dc in -1i32..=1 {
                for db in -1i32..=1 {
                    for da in -1i32..=1 {
                        if da == 0 && db == 0 && dc == 0 {
                            continue;
                        }
                        let n = (a + da, b + db, c + dc);
                        if kept.contains(&n) && !component.contains_key(&n) {
                            component.insert(n, id);
                            stack.push(n);
                        }
                    }
                }
            }
        }
    }
    let mut sizes = vec![0usize; comp_count];
    for &id in component.values() {
        sizes[id] += 1;
    }
    // Largest component wins; ties break to the component containing the
    // lexicographically smallest cell (the first one discovered).
    let mut best = 0usize;
    for (id, &sz) in sizes.iter().enumerate() {
        if sz > sizes[best] {
            best = id;
        }
    }
    let dropped_components = comp_count - 1;
    let final_cells: Vec<(i32, i32, i32)> =
        kept.iter().copied().filter(|c| component[c] == best).collect();
    let dropped_cells = kept.len() - final_cells.len();

    // Node ids in sorted lattice order.
    let mut node_keys: BTreeSet<(i32, i32, i32)> = BTreeSet::new();
    for &(a, b, c) in &final_cells {
        for corner in 0..8u32 {
            node_keys.insert((
                a + (corner & 1) as i32,
                b + ((corner >> 1) & 1) as i32,
                c + ((corner >> 2) & 1) as i32,
            ));
        }
    }
    let node_id: BTreeMap<(i32, i32, i32), u32> =
        node_keys.iter().enumerate().map(|(n, &k)| (k, n as u32)).collect();
    let positions: Vec<Vec3> =
        node_keys.iter().map(|&(a, b, c)| lattice.node_world(a, b, c)).collect();

    let mut hexahedra = Vec::with_capacity(final_cells.len());
    let mut cell_index = BTreeMap::new();
    for (hid, &(a, b, c)) in final_cells.iter().enumerate() {
        let mut nodes = [0u32; 8];
        for corner in 0..8usize {
            let key = (
                a + (corner & 1) as i32,
                b + ((corner >> 1) & 1) as i32,
                c + ((corner >> 2) & 1) as i32,
            );
            nodes[corner] = node_id[&key];
        }
        hexahedra.push(Hexahedron { nodes, cell: (a, b, c) });
        cell_index.insert((a, b, c), hid as u32);
    }

    // Springs: 12 edges (corner pairs differing in one bit) and 12 face
    // diagonals (two bits) per hexahedron, deduplicated globally.
    let mut spring_map: BTreeMap<(u32, u32), SpringKind> = BTreeMap::new();
    for h in &hexahedra {
        for c1 in 0..8usize {
            for c2 in (c1 + 1)..8usize {
                let bits = (c1 ^ c2).count_ones();
                let kind = match bits {
                    1 => SpringKind::Edge,
                    2 => SpringKind::FaceDiagonal,
                    _ => continue,
                };
                let (i, j) = (h.nodes[c1].min(h.nodes[c2]), h.nodes[c1].max(h.nodes[c2]));
                let prev = spring_map.insert((i, j), kind);
                debug_assert!(prev.is_none() || prev == Some(kind));
            }
        }
    }
    let springs: Vec<Spring> = spring_map
        .into_iter()
        .map(|((a, b), kind)| {
            let rest_len = (positions[b as usize] - positions[a as usize]).norm();
            let stiffness = match kind {
                SpringKind::Edge => cfg.edge_stiffness,
                SpringKind::FaceDiagonal => cfg.diagonal_stiffness,
            };
            Spring { a, b, rest_len, stiffness, damping: cfg.damper_coefficient, kind }
        })
        .collect();

    // Lumped masses: each hexahedron spreads rho * cell volume over its
    // eight corners.
    let corner_mass = cfg.rho * lattice.cell_volume() / 8.0;
    let mut masses = vec![0.0f64; positions.len()];
    for h in &hexahedra {
        for &n in &h.nodes {
            masses[n as usize] += corner_mass;
        }
    }

    Ok(WallModel {
        positions,
        masses,
        springs,
        hexahedra,
        lattice,
        cell_index,
        removed_for_incision: removed,
        dropped_components,
        dropped_cells,
    })
}

/// Face corner indices for each of the six lattice directions.
const FACES: [((i32, i32, i32), [usize; 4]); 6] = [
    ((-1, 0, 0), [0, 2, 4, 6]),
    ((1, 0, 0), [1, 3, 5, 7]),
    ((0, -1, 0), [0, 1, 4, 5]),
    ((0, 1, 0), [2, 3, 6, 7]),
    ((0, 0, -1), [0, 1, 2, 3]),
    ((0, 0, 1), [4, 5, 6, 7]),
];

/// Classifies vertices into outer-surface, inner-surface, and cut-edge sets.
///
/// A hexahedron face is inner when its outward neighbor cell overlaps air
/// voxels or was removed for the incision; outer when the neighbor cell is
/// absent for any other reason. The cut edge is the part of both surfaces
/// exposed by the incision removal, restricted to vertices near the
/// incision polyline.
pub fn classify_vertex_sets(
    model: &WallModel,
    air: &LabelVolume,
    incision: &[Vec3],
    cfg: &WallModelConfig,
) -> VertexSets {
    let lattice = model.lattice;
    let (nx, ny, nz) = air.dims();
    let cell_has_air = |a: i32, b: i32, c: i32| -> bool {
        if a < 0 || b < 0 || c < 0 {
            return false;
        }
        let i0 = a as usize * lattice.d;
        let j0 = b as usize * lattice.d;
        let k0 = c as usize * lattice.d_hat;
        if i0 >= nx || j0 >= ny || k0 >= nz {
            return false;
        }
        let i1 = (i0 + lattice.d).min(nx);
        let j1 = (j0 + lattice.d).min(ny);
        let k1 = (k0 + lattice.d_hat).min(nz);
        for k in k0..k1 {
            for j in j0..j1 {
                for i in i0..i1 {
                    if air.get(i, j, k) == LABEL_AIR {
                        return true;
                    }
                }
            }
        }
        false
    };

    let mut vo: BTreeSet<u32> = BTreeSet::new();
    let mut vi: BTreeSet<u32> = BTreeSet::new();
    let mut cut_exposed: BTreeSet<u32> = BTreeSet::new();
    for h in &model.hexahedra {
        let (a, b, c) = h.cell;
        for (off, corners) in FACES {
            let nkey = (a + off.0, b + off.1, c + off.2);
            if model.cell(nkey).is_some() {
                continue; // interior face
            }
            let removed = model.is_removed_for_incision(nkey);
            let inner = removed || cell_has_air(nkey.0, nkey.1, nkey.2);
            for &corner in &corners {
                let v = h.nodes[corner];
                if inner {
                    vi.insert(v);
                    if removed {
                        cut_exposed.insert(v);
                    }
                } else {
                    vo.insert(v);
                }
            }
        }
    }

    let radius = cfg.svb_radius_factor
        * lattice.d as f64
        * lattice.spacing.0.max(lattice.spacing.1).max(lattice.spacing.2);
    let vb: Vec<u32> = vo
        .intersection(&vi)
        .copied()
        .filter(|v| cut_exposed.contains(v))
        .filter(|&v| {
            point_polyline_distance(&model.positions[v as usize], incision) <= radius
        })
        .collect();

    VertexSets { vo: vo.into_iter().collect(), vi: vi.into_iter().collect(), vb }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{LabelVolume, LABEL_BACKGROUND};

    fn wall_block(dims: (usize, usize, usize), lo: (usize, usize, usize), hi: (usize, usize, usize)) -> LabelVolume {
        let mut v = LabelVolume::filled(dims, (1.0, 1.0, 1.0), LABEL_BACKGROUND).unwrap();
        for k in lo.2..hi.2 {
            for j in lo.1..hi.1 {
                for i in lo.0..hi.0 {
                    v.set(i, j, k, LABEL_WALL);
                }
            }
        }
        v
    }

    fn cfg(d: usize) -> WallModelConfig {
        WallModelConfig { d, ..WallModelConfig::default() }
    }

    fn no_air(dims: (usize, usize, usize)) -> LabelVolume {
        LabelVolume::filled(dims, (1.0, 1.0, 1.0), LABEL_BACKGROUND).unwrap()
    }

    #[test]
    fn single_cell_counts() {
        let wall = wall_block((4, 4, 4), (0, 0, 0), (4, 4, 4));
        let model = build_hex_model(&wall, &no_air(wall.dims()), &[], &cfg(4)).unwrap();
        assert_eq!(model.vertex_count(), 8);
        assert_eq!(model.hexahedra.len(), 1);
        let edges = model.springs.iter().filter(|s| s.kind == SpringKind::Edge).count();
        let diags = model.springs.iter().filter(|s| s.kind == SpringKind::FaceDiagonal).count();
        assert_eq!(edges, 12);
        assert_eq!(diags, 12);
    }

    #[test]
    fn two_adjacent_cells_share_vertices_and_springs() {
        let wall = wall_block((8, 4, 4), (0, 0, 0), (8, 4, 4));
        let model = build_hex_model(&wall, &no_air(wall.dims()), &[], &cfg(4)).unwrap();
        assert_eq!(model.hexahedra.len(), 2);
        assert_eq!(model.vertex_count(), 12);
        let edges = model.springs.iter().filter(|s| s.kind == SpringKind::Edge).count();
        let diags = model.springs.iter().filter(|s| s.kind == SpringKind::FaceDiagonal).count();
        assert_eq!(edges, 20);
        assert_eq!(diags, 22);
    }

    #[test]
    fn slice_stride_follows_spacing_ratio() {
        assert_eq!(slice_stride(8, (0.7, 0.7, 1.0)), 6); // round(8*0.7/1.0)
        assert_eq!(slice_stride(8, (1.0, 1.0, 1.0)), 8);
        assert_eq!(slice_stride(2, (0.2, 0.2, 1.0)), 1); // floor at 1
    }

    #[test]
    fn mass_conservation() {
        let wall = wall_block((8, 4, 4), (0, 0, 0), (8, 4, 4));
        let c = cfg(4);
        let model = build_hex_model(&wall, &no_air(wall.dims()), &[], &c).unwrap();
        let total: f64 = model.masses.iter().sum();
        let expected = c.rho * model.total_cell_volume();
        assert!((total - expected).abs() <= 1e-9 * expected.abs());
    }

    #[test]
    fn springs_unique_no_self() {
        let wall = wall_block((12, 8, 8), (0, 0, 0), (12, 8, 8));
        let model = build_hex_model(&wall, &no_air(wall.dims()), &[], &cfg(4)).unwrap();
        let mut seen = BTreeSet::new();
        for s in &model.springs {
            assert_ne!(s.a, s.b);
            assert!(s.a < s.b, "springs stored with a < b");
            assert!(seen.insert((s.a, s.b)), "duplicate spring ({}, {})", s.a, s.b);
        }
    }

    #[test]
    fn isolated_hex_has_no_inner_faces() {
        let wall = wall_block((4, 4, 4), (0, 0, 0), (4, 4, 4));
        let air = LabelVolume::filled((4, 4, 4), (1.0, 1.0, 1.0), LABEL_BACKGROUND).unwrap();
        let c = cfg(4);
        let model = build_hex_model(&wall, &no_air(wall.dims()), &[], &c).unwrap();
        let sets = classify_vertex_sets(&model, &air, &[], &c);
        assert!(sets.vi.is_empty());
        assert_eq!(sets.vo.len(), 8);
        assert!(sets.vb.is_empty());
    }

    #[test]
    fn air_facing_side_is_inner() {
        // Wall slab with air on its -x side.
        let wall = wall_block((8, 4, 4), (4, 0, 0), (8, 4, 4));
        let mut air = LabelVolume::filled((8, 4, 4), (1.0, 1.0, 1.0), LABEL_BACKGROUND).unwrap();
        for k in 0..4 {
            for j in 0..4 {
                for i in 0..4 {
                    air.set(i, j, k, LABEL_AIR);
                }
            }
        }
        let c = cfg(4);
        let model = build_hex_model(&wall, &no_air(wall.dims()), &[], &c).unwrap();
        let sets = classify_vertex_sets(&model, &air, &[], &c);
        assert_eq!(sets.vi.len(), 4, "inner face has 4 vertices");
        assert_eq!(sets.vo.len(), 8, "all non-air-facing faces are outer");
        // Inner vertices sit on the -x face (x = 4 mm).
        for &v in &sets.vi {
            assert_eq!(model.positions[v as usize].x, 4.0);
        }
    }

    #[test]
    fn incision_removal_reports_split() {
        // A 3-cell row; cutting the middle cell splits the model.
        let wall = wall_block((12, 4, 4), (0, 0, 0), (12, 4, 4));
        let c = cfg(4);
        let incision =
            vec![Vec3::new(6.0, -1.0, 2.0), Vec3::new(6.0, 5.0, 2.0)];
        let model = build_hex_model(&wall, &no_air(wall.dims()), &incision, &c).unwrap();
        assert_eq!(model.hexahedra.len(), 1, "one component kept");
        assert_eq!(model.dropped_components, 1);
        assert_eq!(model.dropped_cells, 1);
        assert!(model.is_removed_for_incision((1, 0, 0)));
    }

    #[test]
    fn stride_too_large_errors() {
        let wall = wall_block((4, 4, 4), (0, 0, 0), (4, 4, 4));
        // d=16 still covers the wall with one cell, so use an empty wall to
        // trigger the error path.
        let empty = LabelVolume::filled((4, 4, 4), (1.0, 1.0, 1.0), LABEL_BACKGROUND).unwrap();
        assert!(matches!(build_hex_model(&empty, &no_air(empty.dims()), &[], &cfg(4)), Err(WallModelError::NoCells { .. })));
        assert!(build_hex_model(&wall, &no_air(wall.dims()), &[], &cfg(16)).is_ok());
    }

    #[test]
    fn rest_lengths_match_rest_positions() {
        let wall = wall_block((8, 8, 8), (0, 0, 0), (8, 8, 8));
        let model = build_hex_model(&wall, &no_air(wall.dims()), &[], &cfg(4)).unwrap();
        for s in &model.springs {
            let len = (model.positions[s.b as usize] - model.positions[s.a as usize]).norm();
            assert!((len - s.rest_len).abs() < 1e-12);
        }
    }
}
