//! Selector shapes, hand-relative poses, and the exact geometric predicates
//! used by the district classifier and the per-ribbon collision test.
//!
//! World frame convention: Z is up, so the ground plane is XY and a cuboid's
//! only free rotation is yaw about Z. Euler angles are applied X first, then
//! Y, then Z (`R = Rz * Ry * Rx`). A cylinder's axis is its local X axis and
//! `width` is its full axial extent.

use std::fmt;
use std::str::FromStr;

use glam::{DMat3, DQuat, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Cyan,
    Magenta,
}

impl Color {
    pub const ALL: [Color; 6] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Cyan,
        Color::Magenta,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [255, 0, 0],
            Color::Green => [0, 255, 0],
            Color::Blue => [0, 0, 255],
            Color::Yellow => [255, 255, 0],
            Color::Cyan => [0, 255, 255],
            Color::Magenta => [255, 0, 255],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Cyan => "cyan",
            Color::Magenta => "magenta",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Color {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Color::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown color `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Sphere,
    Cylinder,
    Cuboid,
}

/// Size parameters of a selector. All lengths are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SelectorShape {
    Sphere { radius: f64 },
    Cylinder { radius: f64, width: f64 },
    Cuboid { size: DVec3 },
}

impl SelectorShape {
    pub fn kind(&self) -> ShapeKind {
        match self {
            SelectorShape::Sphere { .. } => ShapeKind::Sphere,
            SelectorShape::Cylinder { .. } => ShapeKind::Cylinder,
            SelectorShape::Cuboid { .. } => ShapeKind::Cuboid,
        }
    }

    pub fn default_for(kind: ShapeKind) -> Self {
        match kind {
            ShapeKind::Sphere => SelectorShape::Sphere { radius: 0.5 },
            ShapeKind::Cylinder => SelectorShape::Cylinder { radius: 0.1, width: 1.0 },
            ShapeKind::Cuboid => SelectorShape::Cuboid { size: DVec3::ONE },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let valid = match *self {
            SelectorShape::Sphere { radius } => ok(radius),
            SelectorShape::Cylinder { radius, width } => ok(radius) && ok(width),
            SelectorShape::Cuboid { size } => ok(size.x) && ok(size.y) && ok(size.z),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("non-positive or non-finite size in {self:?}")))
        }
    }
}

/// Offset and Euler rotation relative to the anchor frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectorPose {
    pub offset: DVec3,
    pub rotation: DVec3,
}

/// A rigid frame: the user's hand, a cursor, or a fixed point in the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorFrame {
    pub position: DVec3,
    #[serde(default = "identity_quat")]
    pub rotation: DQuat,
}

fn identity_quat() -> DQuat {
    DQuat::IDENTITY
}

impl Default for AnchorFrame {
    fn default() -> Self {
        AnchorFrame::IDENTITY
    }
}

impl AnchorFrame {
    pub const IDENTITY: AnchorFrame = AnchorFrame { position: DVec3::ZERO, rotation: DQuat::IDENTITY };

    pub fn at(position: DVec3) -> Self {
        AnchorFrame { position, rotation: DQuat::IDENTITY }
    }

    /// Yaw of the frame's X axis projected on the ground plane.
    fn yaw(&self) -> f64 {
        let x = self.rotation * DVec3::X;
        if x.x.hypot(x.y) > 1e-9 {
            x.y.atan2(x.x)
        } else {
            let y = self.rotation * DVec3::Y;
            y.y.atan2(y.x) - std::f64::consts::FRAC_PI_2
        }
    }
}

pub fn euler_matrix(rotation: DVec3) -> DMat3 {
    DMat3::from_rotation_z(rotation.z) * DMat3::from_rotation_y(rotation.y) * DMat3::from_rotation_x(rotation.x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selector {
    pub shape: SelectorShape,
    pose: SelectorPose,
    pub color: Color,
    pub persistent: bool,
    /// Fixed world anchor of a persistent selector. Hand-held selectors take
    /// their anchor from the caller on every resolve.
    pub world_anchor: Option<AnchorFrame>,
}

impl Selector {
    pub fn new(shape: SelectorShape, pose: SelectorPose, color: Color) -> Self {
        let mut s = Selector { shape, pose, color, persistent: false, world_anchor: None };
        s.set_pose(pose);
        s
    }

    pub fn sphere(radius: f64, color: Color) -> Self {
        Selector::new(SelectorShape::Sphere { radius }, SelectorPose::default(), color)
    }

    pub fn pose(&self) -> SelectorPose {
        self.pose
    }

    /// Cuboids keep only their yaw component.
    pub fn set_pose(&mut self, mut pose: SelectorPose) {
        if self.shape.kind() == ShapeKind::Cuboid {
            pose.rotation.x = 0.0;
            pose.rotation.y = 0.0;
        }
        self.pose = pose;
    }

    pub fn set_shape(&mut self, shape: SelectorShape) {
        self.shape = shape;
        self.set_pose(self.pose);
    }

    /// Clone fixed at `hand` in world space.
    pub fn to_persistent(&self, hand: AnchorFrame) -> Selector {
        Selector { persistent: true, world_anchor: Some(hand), ..self.clone() }
    }

    /// Resolves against the stored anchor for persistent selectors, otherwise `hand`.
    pub fn resolve(&self, hand: AnchorFrame) -> WorldShape {
        resolve_world(self, self.world_anchor.unwrap_or(hand))
    }
}

/// A selector placed in world space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorldShape {
    Sphere { center: DVec3, radius: f64 },
    /// `frame` columns are the cylinder's local axes; column 0 is the axis.
    Cylinder { center: DVec3, frame: DMat3, radius: f64, half_width: f64 },
    Cuboid { center: DVec3, yaw: f64, half_extents: DVec3 },
}

pub fn resolve_world(selector: &Selector, anchor: AnchorFrame) -> WorldShape {
    let center = anchor.position + anchor.rotation * selector.pose.offset;
    match selector.shape {
        SelectorShape::Sphere { radius } => WorldShape::Sphere { center, radius },
        SelectorShape::Cylinder { radius, width } => WorldShape::Cylinder {
            center,
            frame: DMat3::from_quat(anchor.rotation) * euler_matrix(selector.pose.rotation),
            radius,
            half_width: width / 2.0,
        },
        SelectorShape::Cuboid { size } => WorldShape::Cuboid {
            center,
            yaw: anchor.yaw() + selector.pose.rotation.z,
            half_extents: size / 2.0,
        },
    }
}

fn closest_on_segment(a: DVec3, b: DVec3, p: DVec3) -> DVec3 {
    let d = b - a;
    let len2 = d.length_squared();
    if len2 == 0.0 {
        return a;
    }
    a + d * ((p - a).dot(d) / len2).clamp(0.0, 1.0)
}

/// Clips the parametric segment `a + t*d`, `t` in `[lo, hi]`, to `|x| <= half`.
fn clip_slab(a: f64, d: f64, half: f64, lo: &mut f64, hi: &mut f64) -> bool {
    if d == 0.0 {
        return a.abs() <= half;
    }
    let (mut t0, mut t1) = ((-half - a) / d, (half - a) / d);
    if t0 > t1 {
        std::mem::swap(&mut t0, &mut t1);
    }
    *lo = lo.max(t0);
    *hi = hi.min(t1);
    *lo <= *hi
}

fn golden_min(f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    f(0.0).min(f(1.0)).min(f1).min(f2)
}

impl WorldShape {
    pub fn center(&self) -> DVec3 {
        match *self {
            WorldShape::Sphere { center, .. }
            | WorldShape::Cylinder { center, .. }
            | WorldShape::Cuboid { center, .. } => center,
        }
    }

    /// Grows every extent by `margin`. The result contains the Minkowski sum
    /// of the shape with a ball of that radius.
    pub fn inflated(&self, margin: f64) -> WorldShape {
        match *self {
            WorldShape::Sphere { center, radius } => WorldShape::Sphere { center, radius: radius + margin },
            WorldShape::Cylinder { center, frame, radius, half_width } => WorldShape::Cylinder {
                center,
                frame,
                radius: radius + margin,
                half_width: half_width + margin,
            },
            WorldShape::Cuboid { center, yaw, half_extents } => WorldShape::Cuboid {
                center,
                yaw,
                half_extents: half_extents + DVec3::splat(margin),
            },
        }
    }

    /// Same shape with every extent multiplied by `factor` about its center.
    pub fn scaled(&self, factor: f64) -> WorldShape {
        match *self {
            WorldShape::Sphere { center, radius } => WorldShape::Sphere { center, radius: radius * factor },
            WorldShape::Cylinder { center, frame, radius, half_width } => WorldShape::Cylinder {
                center,
                frame,
                radius: radius * factor,
                half_width: half_width * factor,
            },
            WorldShape::Cuboid { center, yaw, half_extents } => {
                WorldShape::Cuboid { center, yaw, half_extents: half_extents * factor }
            }
        }
    }

    /// World-space bounding box (exact for all three kinds).
    pub fn aabb(&self) -> (DVec3, DVec3) {
        let half = match *self {
            WorldShape::Sphere { radius, .. } => DVec3::splat(radius),
            WorldShape::Cylinder { frame, radius, half_width, .. } => {
                let a = frame.x_axis;
                let radial = |c: f64| (1.0 - c * c).max(0.0).sqrt();
                DVec3::new(
                    half_width * a.x.abs() + radius * radial(a.x),
                    half_width * a.y.abs() + radius * radial(a.y),
                    half_width * a.z.abs() + radius * radial(a.z),
                )
            }
            WorldShape::Cuboid { yaw, half_extents: h, .. } => {
                let (s, c) = yaw.sin_cos();
                DVec3::new(h.x * c.abs() + h.y * s.abs(), h.x * s.abs() + h.y * c.abs(), h.z)
            }
        };
        let c = self.center();
        (c - half, c + half)
    }

    fn to_local(&self, p: DVec3) -> DVec3 {
        match *self {
            WorldShape::Sphere { center, .. } => p - center,
            WorldShape::Cylinder { center, frame, .. } => frame.transpose() * (p - center),
            WorldShape::Cuboid { center, yaw, .. } => {
                let d = p - center;
                let (s, c) = yaw.sin_cos();
                DVec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
            }
        }
    }

    /// Euclidean distance from `p` to the solid shape (0 inside).
    pub fn distance_to_point(&self, p: DVec3) -> f64 {
        let l = self.to_local(p);
        match *self {
            WorldShape::Sphere { radius, .. } => (l.length() - radius).max(0.0),
            WorldShape::Cylinder { radius, half_width, .. } => {
                let dx = (l.x.abs() - half_width).max(0.0);
                let dr = (l.y.hypot(l.z) - radius).max(0.0);
                dx.hypot(dr)
            }
            WorldShape::Cuboid { half_extents, .. } => (l.abs() - half_extents).max(DVec3::ZERO).length(),
        }
    }

    pub fn contains_point(&self, p: DVec3) -> bool {
        let l = self.to_local(p);
        match *self {
            WorldShape::Sphere { radius, .. } => l.length_squared() <= radius * radius,
            WorldShape::Cylinder { radius, half_width, .. } => {
                l.x.abs() <= half_width && l.y * l.y + l.z * l.z <= radius * radius
            }
            WorldShape::Cuboid { half_extents: h, .. } => {
                l.x.abs() <= h.x && l.y.abs() <= h.y && l.z.abs() <= h.z
            }
        }
    }

    /// True iff the axis-aligned box `[min, max]` lies entirely in the shape.
    /// Checking the eight corners suffices because every kind is convex.
    pub fn contains_box(&self, min: DVec3, max: DVec3) -> bool {
        (0..8).all(|i| {
            let corner = DVec3::new(
                if i & 1 == 0 { min.x } else { max.x },
                if i & 2 == 0 { min.y } else { max.y },
                if i & 4 == 0 { min.z } else { max.z },
            );
            self.contains_point(corner)
        })
    }

    /// True iff the shape and the closed box `[min, max]` share a point.
    /// Exact for spheres, cuboids and axis-aligned cylinders; conservative
    /// (may answer true within ~1e-7 of the box size) for oblique cylinders.
    pub fn intersects_box(&self, min: DVec3, max: DVec3) -> bool {
        let (lo, hi) = self.aabb();
        if lo.cmpgt(max).any() || hi.cmplt(min).any() {
            return false;
        }
        match *self {
            WorldShape::Sphere { center, radius } => {
                center.clamp(min, max).distance_squared(center) <= radius * radius
            }
            WorldShape::Cuboid { center, yaw, half_extents: h } => {
                // z overlap is implied by the AABB test; separate in XY.
                let (s, c) = yaw.sin_cos();
                let u = glam::DVec2::new(c, s);
                let v = glam::DVec2::new(-s, c);
                let bc = glam::DVec2::new((min.x + max.x) / 2.0, (min.y + max.y) / 2.0);
                let bh = glam::DVec2::new((max.x - min.x) / 2.0, (max.y - min.y) / 2.0);
                let d = bc - center.truncate();
                for axis in [u, v] {
                    let box_r = bh.x * axis.x.abs() + bh.y * axis.y.abs();
                    let own = if axis == u { h.x } else { h.y };
                    if d.dot(axis).abs() > box_r + own {
                        return false;
                    }
                }
                true
            }
            WorldShape::Cylinder { center, frame, radius, half_width } => {
                cylinder_intersects_box(center, frame, radius, half_width, min, max)
            }
        }
    }

    /// True iff the distance between segment `[a, b]` and the solid shape
    /// is at most `tolerance`.
    pub fn segment_intersects(&self, a: DVec3, b: DVec3, tolerance: f64) -> bool {
        if tolerance > 0.0 {
            if let WorldShape::Sphere { center, radius } = *self {
                let r = radius + tolerance;
                return closest_on_segment(a, b, center).distance_squared(center) <= r * r;
            }
            if self.segment_intersects(a, b, 0.0) {
                return true;
            }
            let d = b - a;
            return golden_min(|t| self.distance_to_point(a + d * t)) <= tolerance;
        }
        match *self {
            WorldShape::Sphere { center, radius } => {
                closest_on_segment(a, b, center).distance_squared(center) <= radius * radius
            }
            WorldShape::Cuboid { half_extents: h, .. } => {
                let la = self.to_local(a);
                let d = self.to_local(b) - la;
                let (mut lo, mut hi) = (0.0, 1.0);
                clip_slab(la.x, d.x, h.x, &mut lo, &mut hi)
                    && clip_slab(la.y, d.y, h.y, &mut lo, &mut hi)
                    && clip_slab(la.z, d.z, h.z, &mut lo, &mut hi)
            }
            WorldShape::Cylinder { radius, half_width, .. } => {
                let la = self.to_local(a);
                let d = self.to_local(b) - la;
                let (mut lo, mut hi) = (0.0, 1.0);
                if !clip_slab(la.x, d.x, half_width, &mut lo, &mut hi) {
                    return false;
                }
                // Minimise |yz(t)|^2 = q2 t^2 + 2 q1 t + q0 over [lo, hi].
                let q2 = d.y * d.y + d.z * d.z;
                let q1 = la.y * d.y + la.z * d.z;
                let q0 = la.y * la.y + la.z * la.z;
                let t = if q2 > 0.0 { (-q1 / q2).clamp(lo, hi) } else { lo };
                q2 * t * t + 2.0 * q1 * t + q0 <= radius * radius
            }
        }
    }
}

fn project_on_cylinder(p: DVec3, center: DVec3, frame: DMat3, radius: f64, half_width: f64) -> DVec3 {
    let mut l = frame.transpose() * (p - center);
    l.x = l.x.clamp(-half_width, half_width);
    let r = l.y.hypot(l.z);
    if r > radius {
        let s = radius / r;
        l.y *= s;
        l.z *= s;
    }
    center + frame * l
}

fn cylinder_support(n: DVec3, center: DVec3, axis: DVec3, radius: f64, half_width: f64) -> f64 {
    let c = n.dot(axis);
    n.dot(center) + half_width * c.abs() + radius * (n.length_squared() - c * c).max(0.0).sqrt()
}

fn box_min_along(n: DVec3, min: DVec3, max: DVec3) -> f64 {
    let pick = |k: f64, lo: f64, hi: f64| if k >= 0.0 { k * lo } else { k * hi };
    pick(n.x, min.x, max.x) + pick(n.y, min.y, max.y) + pick(n.z, min.z, max.z)
}

const REFINE_STEPS: usize = 32;

fn cylinder_intersects_box(
    center: DVec3,
    frame: DMat3,
    radius: f64,
    half_width: f64,
    min: DVec3,
    max: DVec3,
) -> bool {
    let axis = frame.x_axis;
    // Axis-aligned cylinder: interval along the axis times disk-vs-rectangle.
    for k in 0..3 {
        if axis[k].abs() >= 1.0 - 1e-12 {
            if center[k] + half_width < min[k] || center[k] - half_width > max[k] {
                return false;
            }
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let dx = center[i] - center[i].clamp(min[i], max[i]);
            let dy = center[j] - center[j].clamp(min[j], max[j]);
            return dx * dx + dy * dy <= radius * radius;
        }
    }
    // Separation along the cylinder axis.
    let lo = box_min_along(axis, min, max);
    let hi = -box_min_along(-axis, min, max);
    let c = axis.dot(center);
    if lo > c + half_width || hi < c - half_width {
        return false;
    }
    // Alternating projections between box and cylinder; each step either
    // finds a common point or certifies a separating plane.
    let eps = 1e-7 * (max - min).min_element().max(f64::MIN_POSITIVE);
    let mut q = center;
    for _ in 0..REFINE_STEPS {
        let p = q.clamp(min, max);
        let q_next = project_on_cylinder(p, center, frame, radius, half_width);
        let gap = p - q_next;
        if gap.length() <= eps {
            return true;
        }
        let n = gap.normalize();
        if box_min_along(n, min, max) > cylinder_support(n, center, axis, radius, half_width) {
            return false;
        }
        q = q_next;
    }
    true
}
