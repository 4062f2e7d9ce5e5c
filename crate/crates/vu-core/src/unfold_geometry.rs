//! Unfolding geometry: the target plane, per-vertex stomach radii, the base
//! line, destination points for the cut edge, and force directions.
//!
//! All argmin/argmax ties break to the lowest index so identical inputs give
//! identical outputs.

use serde::{Deserialize, Serialize};

use crate::preprocess::{Centerline, IncisionLine};
use crate::wall_model::{VertexSets, WallModel};
use crate::Vec3;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate incision: {0}")]
    DegenerateIncision(String),
    #[error("inner-surface vertex set is empty")]
    EmptyInnerSurface,
    #[error("cut-edge vertex set is empty")]
    EmptyCutEdge,
    #[error("centerline is empty")]
    EmptyCenterline,
    #[error("projected incision points are all coincident")]
    DegenerateProjection,
}

/// The plane the wall is stretched onto: unit normal, a point on the plane,
/// and an orthonormal in-plane frame. `v1`/`v2` start as a provisional
/// complement of the normal and become the base-line frame after
/// [`compute_base_line`]; the frame is right-handed: `(v1 x v2) . normal = 1`.
#[derive(Clone, Copy, Debug)]
pub struct UnfoldPlane {
    pub normal: Vec3,
    pub point: Vec3,
    pub v1: Vec3,
    pub v2: Vec3,
}

impl UnfoldPlane {
    /// Signed distance of a point from the plane along the normal.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    /// Orthogonal projection onto the plane.
    pub fn project(&self, p: &Vec3) -> Vec3 {
        p - self.normal * self.signed_distance(p)
    }

    /// In-plane coordinates (along v1, v2) and the normal offset.
    pub fn local_coords(&self, p: &Vec3) -> (f64, f64, f64) {
        let rel = p - self.point;
        (rel.dot(&self.v1), rel.dot(&self.v2), rel.dot(&self.normal))
    }
}

/// Which of the two base-line sides a destination lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Plus,
    Minus,
}

/// Stomach radius and nearest-index bookkeeping for one cut-edge vertex.
#[derive(Clone, Copy, Debug)]
pub struct RadiusEntry {
    pub vertex: u32,
    /// Distance from the centerline to the incision at this vertex (mm).
    pub eps: f64,
    /// 0-based index of the nearest incision point.
    pub j_idx: usize,
    /// 0-based index of the centerline point nearest that incision point.
    pub k_idx: usize,
}

/// Destination of one cut-edge vertex on the unfolded plane.
#[derive(Clone, Copy, Debug)]
pub struct DestEntry {
    pub vertex: u32,
    pub eps: f64,
    pub j_idx: usize,
    pub k_idx: usize,
    pub side: Side,
    pub goal: Vec3,
}

/// Destinations for every cut-edge vertex, ordered by vertex id.
#[derive(Clone, Debug, Default)]
pub struct DestinationSet {
    pub entries: Vec<DestEntry>,
}

impl DestinationSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Points of the base line on the unfolded plane, one per incision point.
#[derive(Clone, Debug)]
pub struct BaseLine {
    pub points: Vec<Vec3>,
}

/// Sign convention for the base-line direction. `Paper` keeps the printed
/// rule (v1 opposes the projected incision direction); `Forward` flips it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineOrientation {
    Paper,
    Forward,
}

impl Default for BaselineOrientation {
    fn default() -> Self {
        BaselineOrientation::Paper
    }
}

/// Deterministic orthonormal complement of a unit vector.
fn plane_basis(normal: &Vec3) -> (Vec3, Vec3) {
    let candidates = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
    let mut pick = candidates[0];
    let mut best = f64::INFINITY;
    for c in candidates {
        let d = c.dot(normal).abs();
        if d < best {
            best = d;
            pick = c;
        }
    }
    let e1 = (pick - normal * pick.dot(normal)).normalize();
    let e2 = normal.cross(&e1);
    (e1, e2)
}

/// Midpoint of the incision in the paper's 1-based indexing: `u_{J/2}`.
fn mid_index(len: usize) -> usize {
    len / 2 - 1
}

/// Computes the unfolded plane: the normal points from the chord between the
/// incision endpoints toward the incision midpoint, and the plane passes
/// through the inner-surface vertex farthest along that normal.
pub fn compute_unfold_plane(
    incision: &IncisionLine,
    model: &WallModel,
    sets: &VertexSets,
) -> Result<UnfoldPlane, GeometryError> {
    let u = incision.points();
    if u.len() < 2 {
        return Err(GeometryError::DegenerateIncision(format!(
            "needs at least 2 points, got {}",
            u.len()
        )));
    }
    let first = u[0];
    let last = u[u.len() - 1];
    let mid = u[mid_index(u.len())];
    let chord = last - first;
    let chord_len2 = chord.norm_squared();
    if chord_len2 < 1e-12 {
        return Err(GeometryError::DegenerateIncision(
            "incision endpoints coincide".into(),
        ));
    }
    let t = ((mid - first).dot(&chord) / chord_len2).clamp(0.0, 1.0);
    let foot = first + chord * t;
    let offset = mid - foot;
    let norm = offset.norm();
    if norm <= 1e-6 {
        return Err(GeometryError::DegenerateIncision(
            "incision midpoint is collinear with its endpoints".into(),
        ));
    }
    let normal = offset / norm;

    if sets.vi.is_empty() {
        return Err(GeometryError::EmptyInnerSurface);
    }
    let mut best_v = sets.vi[0];
    let mut best_dot = model.positions[best_v as usize].dot(&normal);
    for &v in sets.vi.iter().skip(1) {
        let d = model.positions[v as usize].dot(&normal);
        if d > best_dot {
            best_dot = d;
            best_v = v;
        }
    }
    let point = model.positions[best_v as usize];
    let (v1, v2) = plane_basis(&normal);
    Ok(UnfoldPlane { normal, point, v1, v2 })
}

/// Stomach radius for each cut-edge vertex: nearest incision point, the
/// centerline point nearest that, and their distance.
pub fn compute_radii(
    model: &WallModel,
    sets: &VertexSets,
    centerline: &Centerline,
    incision: &IncisionLine,
) -> Result<Vec<RadiusEntry>, GeometryError> {
    if sets.vb.is_empty() {
        return Err(GeometryError::EmptyCutEdge);
    }
    if centerline.is_empty() {
        return Err(GeometryError::EmptyCenterline);
    }
    if incision.is_empty() {
        return Err(GeometryError::DegenerateIncision("incision is empty".into()));
    }
    let u = incision.points();
    let c = centerline.points();
    let mut out = Vec::with_capacity(sets.vb.len());
    for &vertex in &sets.vb {
        let r0 = model.positions[vertex as usize];
        let mut j_idx = 0usize;
        let mut best = (u[0] - r0).norm();
        for (j, uj) in u.iter().enumerate().skip(1) {
            let d = (uj - r0).norm();
            if d < best {
                best = d;
                j_idx = j;
            }
        }
        let uj = u[j_idx];
        let mut k_idx = 0usize;
        let mut best_c = (c[0] - uj).norm();
        for (k, ck) in c.iter().enumerate().skip(1) {
            let d = (ck - uj).norm();
            if d < best_c {
                best_c = d;
                k_idx = k;
            }
        }
        out.push(RadiusEntry { vertex, eps: best_c, j_idx, k_idx });
    }
    Ok(out)
}

/// Symmetric 2x2 eigen-decomposition; returns unit eigenvectors for the
/// larger and smaller eigenvalue, sign-canonicalized.
fn eigen2(cxx: f64, cxy: f64, cyy: f64) -> ((f64, f64), (f64, f64), f64, f64) {
    let tr = cxx + cyy;
    let half_diff = (cxx - cyy) / 2.0;
    let disc = (half_diff * half_diff + cxy * cxy).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = tr / 2.0 - disc;
    let vec_for = |l: f64| -> (f64, f64) {
        // Two algebraic candidates; take the better-conditioned one.
        let a = (cxy, l - cxx);
        let b = (l - cyy, cxy);
        let (vx, vy) = if a.0 * a.0 + a.1 * a.1 >= b.0 * b.0 + b.1 * b.1 { a } else { b };
        let n = (vx * vx + vy * vy).sqrt();
        if n < 1e-30 {
            return (1.0, 0.0);
        }
        let (vx, vy) = (vx / n, vy / n);
        // Canonical sign: first nonzero component positive.
        if vx < 0.0 || (vx == 0.0 && vy < 0.0) {
            (-vx, -vy)
        } else {
            (vx, vy)
        }
    };
    (vec_for(l1), vec_for(l2), l1, l2)
}

/// Computes the base line: projects the incision onto the plane, takes the
/// principal axes of the projected points, orients them, and lays out points
/// with the same consecutive arc lengths as the projected incision.
///
/// Returns the base line together with the plane carrying the final
/// `(v1, v2)` frame.
pub fn compute_base_line(
    incision: &IncisionLine,
    plane: &UnfoldPlane,
    orientation: BaselineOrientation,
) -> Result<(BaseLine, UnfoldPlane), GeometryError> {
    let u = incision.points();
    if u.len() < 2 {
        return Err(GeometryError::DegenerateIncision(format!(
            "needs at least 2 points, got {}",
            u.len()
        )));
    }
    let projected: Vec<Vec3> = u.iter().map(|p| plane.project(p)).collect();

    // PCA in a fixed in-plane basis.
    let (e1, e2) = plane_basis(&plane.normal);
    let origin = plane.point;
    let coords: Vec<(f64, f64)> = projected
        .iter()
        .map(|p| {
            let rel = p - origin;
            (rel.dot(&e1), rel.dot(&e2))
        })
        .collect();
    let n = coords.len() as f64;
    let mean = coords
        .iter()
        .fold((0.0, 0.0), |acc, c| (acc.0 + c.0 / n, acc.1 + c.1 / n));
    let mut cxx = 0.0;
    let mut cxy = 0.0;
    let mut cyy = 0.0;
    for (x, y) in &coords {
        let dx = x - mean.0;
        let dy = y - mean.1;
        cxx += dx * dx / n;
        cxy += dx * dy / n;
        cyy += dy * dy / n;
    }
    let ((p1x, p1y), (p2x, p2y), l1, l2) = eigen2(cxx, cxy, cyy);
    if l1 < 1e-18 {
        return Err(GeometryError::DegenerateProjection);
    }
    let v1_raw = (e1 * p1x + e2 * p1y).normalize();

    let forward = projected[projected.len() - 1] - projected[0];
    let keep = v1_raw.dot(&forward) < 0.0;
    let keep = match orientation {
        BaselineOrientation::Paper => keep,
        BaselineOrientation::Forward => !keep,
    };
    let v1 = if keep { v1_raw } else { -v1_raw };

    // Second axis; collinear projections fall back to the in-plane normal
    // complement of v1.
    let v2_raw = if l2 > 1e-12 * l1 {
        (e1 * p2x + e2 * p2y).normalize()
    } else {
        plane.normal.cross(&v1).normalize()
    };
    let v2 = if v2_raw.cross(&v1).dot(&plane.normal) < 0.0 { v2_raw } else { -v2_raw };

    // Base line: arc lengths of the projected incision, laid out along v1
    // from the projected midpoint.
    let m = mid_index(u.len());
    let seg: Vec<f64> = projected.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let mut points = vec![Vec3::zeros(); u.len()];
    points[m] = projected[m];
    let mut acc = 0.0;
    for j in (0..m).rev() {
        acc += seg[j];
        points[j] = projected[m] - v1 * acc;
    }
    acc = 0.0;
    for j in (m + 1)..u.len() {
        acc += seg[j - 1];
        points[j] = projected[m] + v1 * acc;
    }

    let plane_out = UnfoldPlane { normal: plane.normal, point: plane.point, v1, v2 };
    Ok((BaseLine { points }, plane_out))
}

/// Places each cut-edge vertex's destination `pi * eps` away from the base
/// line, on the side selected by the triple-product test against the local
/// incision direction.
pub fn compute_destinations(
    model: &WallModel,
    radii: &[RadiusEntry],
    baseline: &BaseLine,
    plane: &UnfoldPlane,
    centerline: &Centerline,
    incision: &IncisionLine,
) -> DestinationSet {
    let u = incision.points();
    let c = centerline.points();
    let entries = radii
        .iter()
        .map(|r| {
            let uj = u[r.j_idx];
            let ck = c[r.k_idx];
            let r0 = model.positions[r.vertex as usize];
            // Local incision direction; the first point uses the forward
            // difference since u_{j'-1} does not exist there.
            let ue = if r.j_idx >= 1 { u[r.j_idx] - u[r.j_idx - 1] } else { u[1] - u[0] };
            let s = (uj - ck).cross(&(r0 - ck)).dot(&ue);
            let side = if s >= 0.0 { Side::Plus } else { Side::Minus };
            let offset = plane.v2 * (std::f64::consts::PI * r.eps);
            let goal = match side {
                Side::Plus => baseline.points[r.j_idx] + offset,
                Side::Minus => baseline.points[r.j_idx] - offset,
            };
            DestEntry { vertex: r.vertex, eps: r.eps, j_idx: r.j_idx, k_idx: r.k_idx, side, goal }
        })
        .collect();
    DestinationSet { entries }
}

/// Unfolding force directions: destination minus current position, one entry
/// per cut-edge vertex, recomputed every iteration.
pub fn force_direction(positions: &[Vec3], dest: &DestinationSet) -> Vec<Vec3> {
    dest.entries
        .iter()
        .map(|e| e.goal - positions[e.vertex as usize])
        .collect()
}

/// Line-oriented diagnostic dump of the plane, base line, and destinations.
pub fn dump_geometry(plane: &UnfoldPlane, baseline: &BaseLine, dest: &DestinationSet) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "plane n {} {} {} b {} {} {} v1 {} {} {} v2 {} {} {}\n",
        plane.normal.x,
        plane.normal.y,
        plane.normal.z,
        plane.point.x,
        plane.point.y,
        plane.point.z,
        plane.v1.x,
        plane.v1.y,
        plane.v1.z,
        plane.v2.x,
        plane.v2.y,
        plane.v2.z
    ));
    for (j, p) in baseline.points.iter().enumerate() {
        out.push_str(&format!("p {} {} {} {}\n", j, p.x, p.y, p.z));
    }
    for e in &dest.entries {
        let side = match e.side {
            Side::Plus => '+',
            Side::Minus => '-',
        };
        out.push_str(&format!(
            "g {} {} {} {} eps {} j {} k {} side {}\n",
            e.vertex, e.goal.x, e.goal.y, e.goal.z, e.eps, e.j_idx, e.k_idx, side
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{Centerline, IncisionLine};
    use crate::wall_model::WallModel;
    use approx::assert_abs_diff_eq;

    fn model_with_positions(positions: Vec<Vec3>) -> WallModel {
        let masses = vec![1.0; positions.len()];
        WallModel::from_parts(positions, masses, Vec::new())
    }

    #[test]
    fn plane_from_right_angle_incision() {
        // u_1=(0,0,0), u_J=(10,0,0), u_{J/2}=(5,5,0): foot (5,0,0), normal +y.
        let incision = IncisionLine::from_points_unchecked(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(5.0, 5.0, 0.0),
            Vec3::new(8.0, 4.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
        ]);
        let model = model_with_positions(vec![
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 7.0, 0.0),
            Vec3::new(0.0, 3.0, 0.0),
        ]);
        let sets = VertexSets { vo: vec![], vi: vec![0, 1, 2], vb: vec![] };
        let plane = compute_unfold_plane(&incision, &model, &sets).unwrap();
        assert_abs_diff_eq!(plane.normal.x, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(plane.normal.y, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(plane.normal.z, 0.0, epsilon = 1e-9);
        // argmax of r0 . n is (0,7,0).
        assert_abs_diff_eq!(plane.point.y, 7.0, epsilon = 1e-12);
    }

    #[test]
    fn collinear_midpoint_is_degenerate() {
        let incision = IncisionLine::from_points_unchecked(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(5.0, 0.0, 0.0),
            Vec3::new(7.0, 0.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
        ]);
        let model = model_with_positions(vec![Vec3::new(0.0, 1.0, 0.0)]);
        let sets = VertexSets { vo: vec![], vi: vec![0], vb: vec![] };
        assert!(matches!(
            compute_unfold_plane(&incision, &model, &sets),
            Err(GeometryError::DegenerateIncision(_))
        ));
    }

    #[test]
    fn radius_formula_on_hand_input() {
        // Vertex exactly at u_3 (0-based index 2); centerline point c_5
        // (0-based 4) nearest to u_3 at distance 20.
        let u: Vec<Vec3> = (0..6).map(|j| Vec3::new(j as f64 * 10.0, 0.0, 0.0)).collect();
        let incision = IncisionLine::from_points_unchecked(u.clone());
        let mut c: Vec<Vec3> = (0..8).map(|k| Vec3::new(k as f64 * 10.0, 100.0, 0.0)).collect();
        c[4] = Vec3::new(20.0, 20.0, 0.0); // distance 20 from u_3 = (20, 0, 0)
        let centerline = Centerline::from_points_unchecked(c);
        let model = model_with_positions(vec![Vec3::new(20.0, 0.0, 0.0)]);
        let sets = VertexSets { vo: vec![0], vi: vec![0], vb: vec![0] };
        let radii = compute_radii(&model, &sets, &centerline, &incision).unwrap();
        assert_eq!(radii.len(), 1);
        assert_eq!(radii[0].j_idx, 2);
        assert_eq!(radii[0].k_idx, 4);
        assert_abs_diff_eq!(radii[0].eps, 20.0, epsilon = 1e-12);
    }

    #[test]
    fn radius_tie_takes_lower_incision_index() {
        // Vertex equidistant from u_0 and u_1.
        let incision = IncisionLine::from_points_unchecked(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ]);
        let centerline = Centerline::from_points_unchecked(vec![Vec3::new(1.0, 5.0, 0.0)]);
        let model = model_with_positions(vec![Vec3::new(1.0, 1.0, 0.0)]);
        let sets = VertexSets { vo: vec![0], vi: vec![0], vb: vec![0] };
        let radii = compute_radii(&model, &sets, &centerline, &incision).unwrap();
        assert_eq!(radii[0].j_idx, 0);
    }

    #[test]
    fn base_line_preserves_arc_lengths() {
        // Projected points along x on the z=0 plane; p_2 (1-based) equals
        // u'_2 and the spacing stays 1 mm.
        let incision = IncisionLine::from_points_unchecked(vec![
            Vec3::new(1.0, 0.0, 0.3),
            Vec3::new(2.0, 0.0, -0.4),
            Vec3::new(3.0, 0.0, 0.1),
            Vec3::new(4.0, 0.0, 0.9),
        ]);
        let plane = UnfoldPlane {
            normal: Vec3::new(0.0, 0.0, 1.0),
            point: Vec3::zeros(),
            v1: Vec3::new(1.0, 0.0, 0.0),
            v2: Vec3::new(0.0, 1.0, 0.0),
        };
        let (baseline, plane) =
            compute_base_line(&incision, &plane, BaselineOrientation::Paper).unwrap();
        // p_{J/2} = u'_{J/2} (1-based index 2 -> 0-based 1).
        assert_abs_diff_eq!((baseline.points[1] - Vec3::new(2.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        for (j, w) in incision.points().windows(2).enumerate() {
            let up0 = plane.project(&w[0]);
            let up1 = plane.project(&w[1]);
            let src = (up1 - up0).norm();
            let dst = (baseline.points[j + 1] - baseline.points[j]).norm();
            assert_abs_diff_eq!(src, dst, epsilon = 1e-9);
        }
        // Collinear points along v1.
        for p in &baseline.points {
            assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(p.z, 0.0, epsilon = 1e-9);
        }
        // Paper orientation points v1 against the projected incision run.
        assert!(plane.v1.dot(&Vec3::new(1.0, 0.0, 0.0)) < 0.0);
    }

    #[test]
    fn v2_sign_rule_keeps_candidate_when_triple_product_negative() {
        // v1=(1,0,0), n=(0,0,1), candidate v'_2=(0,1,0):
        // (v'_2 x v1) . n = -1 < 0, so v2 stays (0,1,0).
        let v2_raw = Vec3::new(0.0, 1.0, 0.0);
        let v1 = Vec3::new(1.0, 0.0, 0.0);
        let n = Vec3::new(0.0, 0.0, 1.0);
        assert_abs_diff_eq!(v2_raw.cross(&v1).dot(&n), -1.0, epsilon = 1e-12);
        let v2 = if v2_raw.cross(&v1).dot(&n) < 0.0 { v2_raw } else { -v2_raw };
        assert_abs_diff_eq!((v2 - Vec3::new(0.0, 1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        // The resulting frame is right-handed.
        assert_abs_diff_eq!(v1.cross(&v2).dot(&n), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn destination_distance_is_pi_eps() {
        let incision = IncisionLine::from_points_unchecked(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(4.0, 0.0, 0.0),
            Vec3::new(6.0, 0.0, 0.0),
        ]);
        let centerline = Centerline::from_points_unchecked(vec![Vec3::new(2.0, -20.0, 0.0)]);
        let model = model_with_positions(vec![Vec3::new(2.0, 0.5, 0.0)]);
        let radii = vec![RadiusEntry { vertex: 0, eps: 20.0, j_idx: 1, k_idx: 0 }];
        let plane = UnfoldPlane {
            normal: Vec3::new(0.0, 0.0, 1.0),
            point: Vec3::zeros(),
            v1: Vec3::new(1.0, 0.0, 0.0),
            v2: Vec3::new(0.0, 1.0, 0.0),
        };
        let (baseline, plane) =
            compute_base_line(&incision, &plane, BaselineOrientation::Paper).unwrap();
        let dest = compute_destinations(&model, &radii, &baseline, &plane, &centerline, &incision);
        let d = (dest.entries[0].goal - baseline.points[1]).norm();
        assert_abs_diff_eq!(d, std::f64::consts::PI * 20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d, 62.83185307179586, epsilon = 1e-9);
    }

    #[test]
    fn boundary_triple_product_takes_plus_side() {
        // r0 exactly at u_{j'} makes the triple product zero; the >= 0
        // branch applies.
        let incision = IncisionLine::from_points_unchecked(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ]);
        let centerline = Centerline::from_points_unchecked(vec![Vec3::new(0.0, -5.0, 0.0)]);
        let model = model_with_positions(vec![Vec3::new(2.0, 0.0, 0.0)]);
        let radii = vec![RadiusEntry { vertex: 0, eps: 5.0, j_idx: 1, k_idx: 0 }];
        let plane = UnfoldPlane {
            normal: Vec3::new(0.0, 0.0, 1.0),
            point: Vec3::zeros(),
            v1: Vec3::new(1.0, 0.0, 0.0),
            v2: Vec3::new(0.0, 1.0, 0.0),
        };
        let (baseline, plane) =
            compute_base_line(&incision, &plane, BaselineOrientation::Paper).unwrap();
        let dest = compute_destinations(&model, &radii, &baseline, &plane, &centerline, &incision);
        assert_eq!(dest.entries[0].side, Side::Plus);
    }

    #[test]
    fn force_direction_is_goal_minus_position() {
        let dest = DestinationSet {
            entries: vec![DestEntry {
                vertex: 0,
                eps: 1.0,
                j_idx: 0,
                k_idx: 0,
                side: Side::Plus,
                goal: Vec3::new(10.0, 0.0, 0.0),
            }],
        };
        let positions = vec![Vec3::new(4.0, 0.0, 0.0)];
        let e = force_direction(&positions, &dest);
        assert_abs_diff_eq!((e[0] - Vec3::new(6.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        // Fixed point: at the goal the direction vanishes.
        let at_goal = vec![Vec3::new(10.0, 0.0, 0.0)];
        assert_abs_diff_eq!(force_direction(&at_goal, &dest)[0].norm(), 0.0, epsilon = 1e-12);
    }
}
