//! Synthetic tube phantoms standing in for clinical CT volumes.
//!
//! Phantoms are air-insufflated hollow tubes (straight or J-bent) with known
//! analytic geometry; the returned [`PhantomTruth`] is the oracle every
//! downstream stage is tested against.

use serde::{Deserialize, Serialize};

use crate::volume::{LabelVolume, ScalarVolume, LABEL_AIR, LABEL_BACKGROUND, LABEL_WALL};
use crate::Vec3;

/// Scalar intensity of lumen air voxels.
pub const LUMEN_INTENSITY: i16 = -1000;
/// Scalar intensity of wall voxels.
pub const WALL_INTENSITY: i16 = 40;
/// Scalar intensity outside the tube.
pub const OUTSIDE_INTENSITY: i16 = -1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomShape {
    /// Straight tube along +z.
    StraightTube,
    /// Straight run, quarter-torus bend, straight tail (a "J").
    JTube,
}

/// Parameters for [`gen_phantom`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub shape: PhantomShape,
    /// Outer tube radius in mm.
    pub radius_mm: f64,
    /// Wall thickness in mm; lumen radius is `radius_mm - wall_mm`.
    pub wall_mm: f64,
    /// Lumen length along the axis in mm (caps sit beyond both ends).
    pub length_mm: f64,
    pub spacing: (f64, f64, f64),
    /// Explicit grid dims; when absent the grid is auto-sized with a
    /// 5-voxel margin around the solid.
    #[serde(default)]
    pub dims: Option<(usize, usize, usize)>,
}

#[derive(Debug, thiserror::Error)]
pub enum PhantomError {
    #[error("phantom requires radius > wall > 0, got radius {radius} wall {wall}")]
    BadShellParams { radius: f64, wall: f64 },
    #[error("non-positive length {0}")]
    BadLength(f64),
    #[error("non-positive spacing ({0}, {1}, {2})")]
    BadSpacing(f64, f64, f64),
    #[error("tube does not fit the grid: needs at least {needed:?} voxels, got {got:?}")]
    DoesNotFit { needed: (usize, usize, usize), got: (usize, usize, usize) },
}

/// Analytic ground truth carried alongside a generated phantom.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhantomTruth {
    /// Axis samples in world mm, ordered cardia end to pylorus end,
    /// restricted to the lumen.
    pub axis_mm: Vec<[f64; 3]>,
    /// Tube outer radius at each axis sample.
    pub radius_mm: Vec<f64>,
    /// Total analytic axis arc length over the lumen span.
    pub axis_arc_length_mm: f64,
    pub cardia_mm: [f64; 3],
    pub pylorus_mm: [f64; 3],
    /// Expected incision path on the inner wall surface (greater-curvature
    /// analogue: the outer side of the bend for J tubes).
    pub ridge_mm: Vec<[f64; 3]>,
    /// Center of the J bend, when the shape has one.
    pub bend_center_mm: Option<[f64; 3]>,
    /// Axis radius of curvature of the J bend, when the shape has one.
    pub bend_radius_mm: Option<f64>,
}

/// One piece of the tube axis. `t` is global arc length along the nominal
/// axis: 0 at the lumen start, `length_mm` at the lumen end; the end pieces
/// extend beyond that range so the caps can be labeled.
enum AxisPiece {
    /// `end_segment` distances use the perpendicular component and an
    /// unclamped axial parameter, which yields flat end caps.
    Segment { a: Vec3, b: Vec3, t0: f64, end_segment: bool },
    Arc { center: Vec3, e1: Vec3, e2: Vec3, radius: f64, angle: f64, t0: f64 },
}

struct AxisProbe {
    /// Distance used to select the nearest piece.
    select: f64,
    /// Radial distance used for shell classification.
    radial: f64,
    /// Global axial parameter of the closest axis point.
    t: f64,
}

impl AxisPiece {
    fn probe(&self, p: &Vec3) -> AxisProbe {
        match self {
            AxisPiece::Segment { a, b, t0, end_segment } => {
                let ab = b - a;
                let len = ab.norm();
                let dir = ab / len;
                let s = (p - a).dot(&dir);
                let s_clamped = s.clamp(0.0, len);
                let closest = a + dir * s_clamped;
                let select = (p - closest).norm();
                if *end_segment {
                    let radial = (p - (a + dir * s)).norm();
                    AxisProbe { select, radial, t: t0 + s }
                } else {
                    AxisProbe { select, radial: select, t: t0 + s_clamped }
                }
            }
            AxisPiece::Arc { center, e1, e2, radius, angle, t0 } => {
                let d = p - center;
                let x = d.dot(e1);
                let y = d.dot(e2);
                let phi = y.atan2(x).clamp(0.0, *angle);
                let closest = center + (e1 * phi.cos() + e2 * phi.sin()) * *radius;
                let dist = (p - closest).norm();
                AxisProbe { select: dist, radial: dist, t: t0 + radius * phi }
            }
        }
    }

    fn point_at_local(&self, s: f64) -> Vec3 {
        match self {
            AxisPiece::Segment { a, b, .. } => {
                let ab = b - a;
                let dir = ab / ab.norm();
                a + dir * s
            }
            AxisPiece::Arc { center, e1, e2, radius, .. } => {
                let phi = s / radius;
                center + (e1 * phi.cos() + e2 * phi.sin()) * *radius
            }
        }
    }

    /// Unit direction from the axis toward the ridge side.
    fn outward_at_local(&self, s: f64, shape: PhantomShape) -> Vec3 {
        match self {
            AxisPiece::Segment { a, b, .. } => match shape {
                PhantomShape::StraightTube => Vec3::new(1.0, 0.0, 0.0),
                PhantomShape::JTube => {
                    let dir = (b - a).normalize();
                    if dir.z.abs() > dir.x.abs() {
                        // pre-bend run along +z: outer bend side is -x
                        Vec3::new(-1.0, 0.0, 0.0)
                    } else {
                        // post-bend tail along +x: outer bend side is +z
                        Vec3::new(0.0, 0.0, 1.0)
                    }
                }
            },
            AxisPiece::Arc { e1, e2, radius, .. } => {
                let phi = s / radius;
                e1 * phi.cos() + e2 * phi.sin()
            }
        }
    }

    fn local_len(&self) -> f64 {
        match self {
            AxisPiece::Segment { a, b, .. } => (b - a).norm(),
            AxisPiece::Arc { radius, angle, .. } => radius * angle,
        }
    }

    fn t_start(&self) -> f64 {
        match self {
            AxisPiece::Segment { t0, .. } => *t0,
            AxisPiece::Arc { t0, .. } => *t0,
        }
    }
}

struct Axis {
    pieces: Vec<AxisPiece>,
    shape: PhantomShape,
}

impl Axis {
    /// Axis in a local frame starting at the origin; the cap extensions are
    /// separate pieces so `t` spans `[-wall, length + wall]`.
    fn build(shape: PhantomShape, length: f64, wall: f64) -> Axis {
        let z = Vec3::new(0.0, 0.0, 1.0);
        let x = Vec3::new(1.0, 0.0, 0.0);
        let mut pieces = Vec::new();
        match shape {
            PhantomShape::StraightTube => {
                let o = Vec3::zeros();
                pieces.push(AxisPiece::Segment {
                    a: o - z * wall,
                    b: o,
                    t0: -wall,
                    end_segment: true,
                });
                pieces.push(AxisPiece::Segment {
                    a: o,
                    b: o + z * length,
                    t0: 0.0,
                    end_segment: false,
                });
                pieces.push(AxisPiece::Segment {
                    a: o + z * length,
                    b: o + z * (length + wall),
                    t0: length,
                    end_segment: true,
                });
            }
            PhantomShape::JTube => {
                // Straight run 35%, quarter bend 40%, tail 25% of the length.
                let run = 0.35 * length;
                let arc_len = 0.40 * length;
                let tail = length - run - arc_len;
                let bend_radius = arc_len / (std::f64::consts::PI / 2.0);
                let o = Vec3::zeros();
                let bend_start = o + z * run;
                let center = bend_start + x * bend_radius;
                // arc point(phi) = center + R*(-cos phi, 0, sin phi)
                let e1 = -x;
                let e2 = z;
                let phi_end = std::f64::consts::PI / 2.0;
                let arc_end = center + (e1 * phi_end.cos() + e2 * phi_end.sin()) * bend_radius;
                let tail_dir = x;
                pieces.push(AxisPiece::Segment {
                    a: o - z * wall,
                    b: o,
                    t0: -wall,
                    end_segment: true,
                });
                pieces.push(AxisPiece::Segment { a: o, b: bend_start, t0: 0.0, end_segment: false });
                pieces.push(AxisPiece::Arc {
                    center,
                    e1,
                    e2,
                    radius: bend_radius,
                    angle: phi_end,
                    t0: run,
                });
                pieces.push(AxisPiece::Segment {
                    a: arc_end,
                    b: arc_end + tail_dir * tail,
                    t0: run + arc_len,
                    end_segment: false,
                });
                pieces.push(AxisPiece::Segment {
                    a: arc_end + tail_dir * tail,
                    b: arc_end + tail_dir * (tail + wall),
                    t0: length,
                    end_segment: true,
                });
            }
        }
        Axis { pieces, shape }
    }

    /// Radial distance and axial parameter of the nearest axis point.
    fn probe(&self, p: &Vec3) -> AxisProbe {
        let mut best: Option<AxisProbe> = None;
        for piece in &self.pieces {
            let probe = piece.probe(p);
            let better = match &best {
                None => true,
                Some(b) => probe.select < b.select,
            };
            if better {
                best = Some(probe);
            }
        }
        best.expect("axis has pieces")
    }

    /// Axis point at global parameter t within the nominal range.
    fn point_at(&self, t: f64) -> Vec3 {
        let piece = self.piece_for(t);
        piece.point_at_local(t - piece.t_start())
    }

    fn outward_at(&self, t: f64) -> Vec3 {
        let piece = self.piece_for(t);
        piece.outward_at_local(t - piece.t_start(), self.shape)
    }

    fn piece_for(&self, t: f64) -> &AxisPiece {
        for piece in &self.pieces {
            let lo = piece.t_start();
            let hi = lo + piece.local_len();
            if t >= lo - 1e-9 && t <= hi + 1e-9 {
                return piece;
            }
        }
        self.pieces.last().expect("axis has pieces")
    }

    fn bend(&self) -> Option<(Vec3, f64)> {
        self.pieces.iter().find_map(|p| match p {
            AxisPiece::Arc { center, radius, .. } => Some((*center, *radius)),
            _ => None,
        })
    }

    /// Axis-aligned bounding box of the solid (axis swept by radius R).
    fn solid_bbox(&self, radius: f64) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for piece in &self.pieces {
            let len = piece.local_len();
            let steps = (len / 0.5).ceil().max(1.0) as usize;
            for s in 0..=steps {
                let p = piece.point_at_local(len * s as f64 / steps as f64);
                lo = lo.inf(&(p - Vec3::new(radius, radius, radius)));
                hi = hi.sup(&(p + Vec3::new(radius, radius, radius)));
            }
        }
        (lo, hi)
    }
}

/// Generates a phantom: scalar intensities, labels, and analytic truth.
///
/// Lumen voxels (radial distance < R - w along the nominal axis) are label 2
/// at -1000; wall voxels (R - w <= distance <= R, plus flat caps of thickness
/// w beyond both lumen ends) are label 1 at +40; everything else is label 0
/// at -1024. The lumen is a closed cavity.
pub fn gen_phantom(
    spec: &PhantomSpec,
) -> Result<(ScalarVolume, LabelVolume, PhantomTruth), PhantomError> {
    let r = spec.radius_mm;
    let w = spec.wall_mm;
    let length = spec.length_mm;
    let (sx, sy, sz) = spec.spacing;
    if !(r > w && w > 0.0) {
        return Err(PhantomError::BadShellParams { radius: r, wall: w });
    }
    if !(length > 0.0) {
        return Err(PhantomError::BadLength(length));
    }
    if !(sx > 0.0 && sy > 0.0 && sz > 0.0) {
        return Err(PhantomError::BadSpacing(sx, sy, sz));
    }

    let axis = Axis::build(spec.shape, length, w);
    let (lo, hi) = axis.solid_bbox(r);

    // Shift the axis so the solid starts a 5-voxel margin inside the grid.
    let margin = Vec3::new(5.0 * sx, 5.0 * sy, 5.0 * sz);
    let shift = margin - lo;
    let extent = hi - lo;
    let needed = (
        (extent.x / sx).ceil() as usize + 11,
        (extent.y / sy).ceil() as usize + 11,
        (extent.z / sz).ceil() as usize + 11,
    );
    let dims = spec.dims.unwrap_or(needed);
    if dims.0 < needed.0 || dims.1 < needed.1 || dims.2 < needed.2 {
        return Err(PhantomError::DoesNotFit { needed, got: dims });
    }

    let mut scalar =
        ScalarVolume::filled(dims, spec.spacing, OUTSIDE_INTENSITY).expect("valid dims");
    let mut labels =
        LabelVolume::filled(dims, spec.spacing, LABEL_BACKGROUND).expect("valid dims");

    let lumen_r = r - w;
    for k in 0..dims.2 {
        for j in 0..dims.1 {
            for i in 0..dims.0 {
                let world = scalar.world(i, j, k);
                let local = world - shift;
                let probe = axis.probe(&local);
                let in_solid = probe.radial <= r && probe.t >= -w && probe.t <= length + w;
                if !in_solid {
                    continue;
                }
                let in_lumen = probe.radial < lumen_r && probe.t >= 0.0 && probe.t <= length;
                let idx = scalar.index(i, j, k);
                if in_lumen {
                    scalar.data_mut()[idx] = LUMEN_INTENSITY;
                    labels.data_mut()[idx] = LABEL_AIR;
                } else {
                    scalar.data_mut()[idx] = WALL_INTENSITY;
                    labels.data_mut()[idx] = LABEL_WALL;
                }
            }
        }
    }

    // Truth: axis and ridge sampled at 1 mm inside the lumen span, landmarks
    // on the ridge side just inside the inner surface near each end.
    let t_lo = 1.5_f64.min(length / 4.0);
    let t_hi = length - t_lo;
    let steps = ((t_hi - t_lo) / 1.0).floor().max(1.0) as usize;
    let mut axis_samples = Vec::with_capacity(steps + 1);
    let mut radius_samples = Vec::with_capacity(steps + 1);
    let mut ridge_samples = Vec::with_capacity(steps + 1);
    for s in 0..=steps {
        let t = t_lo + (t_hi - t_lo) * s as f64 / steps as f64;
        let p = axis.point_at(t) + shift;
        let outward = axis.outward_at(t);
        axis_samples.push([p.x, p.y, p.z]);
        radius_samples.push(r);
        let ridge = p + outward * lumen_r;
        ridge_samples.push([ridge.x, ridge.y, ridge.z]);
    }
    // Landmarks sit on the axis just inside each lumen end, mirroring the
    // cardia/pylorus orifices the centerline must pass through.
    let landmark_t = (2.5_f64).min(length / 4.0);
    let cardia = axis.point_at(landmark_t) + shift;
    let pylorus = axis.point_at(length - landmark_t) + shift;

    let bend = axis.bend();
    let truth = PhantomTruth {
        axis_mm: axis_samples,
        radius_mm: radius_samples,
        axis_arc_length_mm: t_hi - t_lo,
        cardia_mm: [cardia.x, cardia.y, cardia.z],
        pylorus_mm: [pylorus.x, pylorus.y, pylorus.z],
        ridge_mm: ridge_samples,
        bend_center_mm: bend.map(|(c, _)| {
            let c = c + shift;
            [c.x, c.y, c.z]
        }),
        bend_radius_mm: bend.map(|(_, radius)| radius),
    };

    Ok((scalar, labels, truth))
}
