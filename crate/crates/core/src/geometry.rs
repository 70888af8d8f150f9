//! Oriented boxes, point clouds, and the ground-plane geometry built on them.
//!
//! Conventions used throughout the crate:
//!
//! * Right-handed LiDAR frame, `z` up.
//! * Box yaw is counterclockwise about `+z` and the box heading points along
//!   its local `x` axis, so `length` is measured along the heading and
//!   `width` across it.
//! * Yaw is kept in `(-pi, pi]`.
//! * Boxes are closed: a point on a face is inside.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on 2D cross products during polygon clipping.
const CROSS_EPS: f64 = 1e-9;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if yaw > -PI && yaw <= PI {
        return yaw;
    }
    let r = yaw.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// One LiDAR return.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl Point {
    pub const fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Self { x, y, z, intensity }
    }
}

/// A flat sequence of LiDAR returns (one sweep, or one object crop).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    /// Checks that every coordinate is finite and every intensity lies in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite() && p.intensity.is_finite()) {
                return Err(Error::Validation(format!("point {i} has a non-finite value")));
            }
            if !(0.0..=1.0).contains(&p.intensity) {
                return Err(Error::Validation(format!(
                    "point {i} has intensity {} outside [0, 1]",
                    p.intensity
                )));
            }
        }
        Ok(())
    }

    /// Keeps the points whose mask flag equals `keep`, preserving order.
    pub fn select(&self, mask: &[bool], keep: bool) -> PointCloud {
        debug_assert_eq!(mask.len(), self.points.len());
        self.points
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m == keep)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn extend_from(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}

/// Oriented 3D bounding box in the LiDAR frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

impl Box3D {
    /// Builds a validated box; yaw is normalized into `(-pi, pi]`.
    pub fn new(center: [f64; 3], dims: [f64; 3], yaw: f64) -> Result<Self> {
        let b = Self {
            cx: center[0],
            cy: center[1],
            cz: center[2],
            length: dims[0],
            width: dims[1],
            height: dims[2],
            yaw: normalize_yaw(yaw),
        };
        b.validate()?;
        Ok(b)
    }

    /// Builds a box from `[cx, cy, cz, length, width, height, yaw]`.
    pub fn from_array(v: [f64; 7]) -> Result<Self> {
        Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5]], v[6])
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.cx,
            self.cy,
            self.cz,
            self.length,
            self.width,
            self.height,
            self.yaw,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::Validation(format!("box has non-finite field: {self:?}")));
        }
        if !(self.length > 0.0 && self.width > 0.0 && self.height > 0.0) {
            return Err(Error::Validation(format!(
                "box dimensions must be positive: {} x {} x {}",
                self.length, self.width, self.height
            )));
        }
        if !(self.yaw > -PI && self.yaw <= PI) {
            return Err(Error::Validation(format!("box yaw {} outside (-pi, pi]", self.yaw)));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn center(&self) -> [f64; 3] {
        [self.cx, self.cy, self.cz]
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    pub fn bev_area(&self) -> f64 {
        self.length * self.width
    }

    pub fn z_min(&self) -> f64 {
        self.cz - self.height / 2.0
    }

    pub fn z_max(&self) -> f64 {
        self.cz + self.height / 2.0
    }

    /// Ground-plane footprint corners, counterclockwise, starting at the
    /// front-left corner `(+l/2, +w/2)` in the local frame.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[lx, ly]| [self.cx + lx * c - ly * s, self.cy + lx * s + ly * c])
    }

    /// Expresses a point in the box's local frame.
    #[inline]
    pub fn to_local(&self, x: f64, y: f64, z: f64) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        [dx * c + dy * s, -dx * s + dy * c, z - self.cz]
    }

    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        let [lx, ly, lz] = self.to_local(p.x as f64, p.y as f64, p.z as f64);
        lx.abs() <= self.length / 2.0
            && ly.abs() <= self.width / 2.0
            && lz.abs() <= self.height / 2.0
    }
}

/// Cuboid corners in a fixed order: the four bottom corners (`z = -h/2`)
/// followed by the four top corners, each face in [`Box3D::bev_corners`] order.
pub fn box_corners(b: &Box3D) -> [[f64; 3]; 8] {
    let bev = b.bev_corners();
    let mut out = [[0.0; 3]; 8];
    for (i, [x, y]) in bev.iter().copied().enumerate() {
        out[i] = [x, y, b.z_min()];
        out[i + 4] = [x, y, b.z_max()];
    }
    out
}

/// Flags the points inside `b`, boundary included.
pub fn points_in_box(cloud: &PointCloud, b: &Box3D) -> Vec<bool> {
    let (s, c) = b.yaw.sin_cos();
    let (hl, hw, hh) = (b.length / 2.0, b.width / 2.0, b.height / 2.0);
    cloud
        .points
        .iter()
        .map(|p| {
            let dx = p.x as f64 - b.cx;
            let dy = p.y as f64 - b.cy;
            let lz = p.z as f64 - b.cz;
            let lx = dx * c + dy * s;
            let ly = -dx * s + dy * c;
            lx.abs() <= hl && ly.abs() <= hw && lz.abs() <= hh
        })
        .collect()
}

/// Splits a cloud into the points inside and outside `b`, each in input order.
pub fn crop(cloud: &PointCloud, b: &Box3D) -> (PointCloud, PointCloud) {
    let mask = points_in_box(cloud, b);
    let mut inside = Vec::new();
    let mut outside = Vec::with_capacity(cloud.len());
    for (p, m) in cloud.points.iter().zip(mask) {
        if m {
            inside.push(*p);
        } else {
            outside.push(*p);
        }
    }
    (PointCloud::from_points(inside), PointCloud::from_points(outside))
}

/// Rotation about `+z` through the origin followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub yaw: f64,
    pub translation: [f64; 3],
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub const fn identity() -> Self {
        Self {
            yaw: 0.0,
            translation: [0.0; 3],
        }
    }

    pub const fn new(yaw: f64, translation: [f64; 3]) -> Self {
        Self { yaw, translation }
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.yaw.sin_cos();
        let [tx, ty, tz] = self.translation;
        // R^T * -t
        Self {
            yaw: -self.yaw,
            translation: [-(c * tx + s * ty), -(-s * tx + c * ty), -tz],
        }
    }

    #[inline]
    pub fn apply_xyz(&self, [x, y, z]: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            c * x - s * y + self.translation[0],
            s * x + c * y + self.translation[1],
            z + self.translation[2],
        ]
    }

    pub fn apply_point(&self, p: &Point) -> Point {
        let [x, y, z] = self.apply_xyz([p.x as f64, p.y as f64, p.z as f64]);
        Point::new(x as f32, y as f32, z as f32, p.intensity)
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        cloud.iter().map(|p| self.apply_point(p)).collect()
    }

    pub fn apply_box(&self, b: &Box3D) -> Box3D {
        let [cx, cy, cz] = self.apply_xyz(b.center());
        Box3D {
            cx,
            cy,
            cz,
            yaw: normalize_yaw(b.yaw + self.yaw),
            ..*b
        }
    }
}

/// Things that can be moved by a [`RigidTransform`].
pub trait Transformable {
    fn transform(&self, t: &RigidTransform) -> Self;
}

impl Transformable for Box3D {
    fn transform(&self, t: &RigidTransform) -> Self {
        t.apply_box(self)
    }
}

impl Transformable for PointCloud {
    fn transform(&self, t: &RigidTransform) -> Self {
        t.apply_cloud(self)
    }
}

impl Transformable for Point {
    fn transform(&self, t: &RigidTransform) -> Self {
        t.apply_point(self)
    }
}

/// Rigid transform of a box or point set: rotate by `yaw` about the origin, then translate.
pub fn transform<T: Transformable>(item: &T, yaw: f64, translation: [f64; 3]) -> T {
    item.transform(&RigidTransform::new(yaw, translation))
}

#[inline]
fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Clips convex polygon `subject` against convex counterclockwise polygon `clip`.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().unwrap();
        let mut prev_side = cross(e0, e1, prev);
        for &cur in &input {
            let cur_side = cross(e0, e1, cur);
            let cur_in = cur_side >= -CROSS_EPS;
            let prev_in = prev_side >= -CROSS_EPS;
            if cur_in != prev_in {
                let denom = prev_side - cur_side;
                if denom.abs() > CROSS_EPS {
                    let t = prev_side / denom;
                    output.push([
                        prev[0] + t * (cur[0] - prev[0]),
                        prev[1] + t * (cur[1] - prev[1]),
                    ]);
                } else {
                    output.push(prev);
                }
            }
            if cur_in {
                output.push(cur);
            }
            prev = cur;
            prev_side = cur_side;
        }
    }
    output
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        twice += a[0] * b[1] - a[1] * b[0];
    }
    twice.abs() / 2.0
}

/// Area of the intersection of the two ground-plane footprints.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    // Cheap reject on circumscribed circles.
    let ra = a.length.hypot(a.width) / 2.0;
    let rb = b.length.hypot(b.width) / 2.0;
    let d = (a.cx - b.cx).hypot(a.cy - b.cy);
    if d > ra + rb {
        return 0.0;
    }
    polygon_area(&clip_convex(&a.bev_corners(), &b.bev_corners()))
}

fn same_footprint(a: &Box3D, b: &Box3D) -> bool {
    a.cx == b.cx && a.cy == b.cy && a.length == b.length && a.width == b.width && a.yaw == b.yaw
}

/// Intersection-over-union of the two yaw-rotated footprints in the ground plane.
pub fn bev_iou(a: &Box3D, b: &Box3D) -> f64 {
    if same_footprint(a, b) {
        return 1.0;
    }
    let inter = bev_intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.bev_area() + b.bev_area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Volumetric IoU: footprint intersection times vertical overlap, over the union of volumes.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    if same_footprint(a, b) && a.cz == b.cz && a.height == b.height {
        return 1.0;
    }
    let dz = a.z_max().min(b.z_max()) - a.z_min().max(b.z_min());
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn unit_box(cx: f64, cy: f64, yaw: f64) -> Box3D {
        Box3D::new([cx, cy, 0.0], [1.0, 1.0, 1.0], yaw).unwrap()
    }

    #[test]
    fn yaw_normalization_range() {
        assert_eq!(normalize_yaw(PI), PI);
        assert!((normalize_yaw(-PI) - PI).abs() < 1e-15);
        assert!((normalize_yaw(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-12);
        assert_eq!(normalize_yaw(0.0), 0.0);
    }

    #[test]
    fn box_rejects_bad_dimensions() {
        assert!(Box3D::new([0.0; 3], [0.0, 1.0, 1.0], 0.0).is_err());
        assert!(Box3D::new([0.0; 3], [1.0, -1.0, 1.0], 0.0).is_err());
        assert!(Box3D::new([f64::NAN, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let a = Box3D::new([1.0, 2.0, 0.5], [4.0, 1.7, 1.5], 0.3).unwrap();
        assert_eq!(bev_iou(&a, &a), 1.0);
        assert_eq!(iou_3d(&a, &a), 1.0);
        let far = unit_box(100.0, 0.0, 0.0);
        assert_eq!(bev_iou(&unit_box(0.0, 0.0, 0.0), &far), 0.0);
        assert_eq!(iou_3d(&unit_box(0.0, 0.0, 0.0), &far), 0.0);
    }

    #[test]
    fn iou_of_half_offset_unit_boxes() {
        // Frozen from a 10^6-sample Monte-Carlo estimate (tests/geometry_oracles.rs); exact value 1/3.
        let a = unit_box(0.0, 0.0, 0.0);
        let b = unit_box(0.5, 0.0, 0.0);
        assert!((bev_iou(&a, &b) - 1.0 / 3.0).abs() < 0.01);
        assert!((iou_3d(&a, &b) - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn raised_box_has_no_volume_overlap() {
        let a = unit_box(0.0, 0.0, 0.0);
        let mut b = a;
        b.cz += b.height;
        assert_eq!(iou_3d(&a, &b), 0.0);
        assert_eq!(bev_iou(&a, &b), 1.0);
    }

    #[test]
    fn rectangle_yaw_symmetry() {
        let a = Box3D::new([0.0; 3], [4.0, 2.0, 1.0], 0.4).unwrap();
        let b = Box3D::new([0.0; 3], [4.0, 2.0, 1.0], 0.4 - PI).unwrap();
        assert!((bev_iou(&a, &b) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        let a = unit_box(0.0, 0.0, 0.0);
        let b = unit_box(1.0, 0.0, 0.0);
        assert_eq!(bev_iou(&a, &b), 0.0);
    }

    #[test]
    fn center_inside_and_just_beyond_outside() {
        let b = Box3D::new([3.0, -2.0, 1.0], [4.0, 2.0, 1.5], 0.7).unwrap();
        let cloud = PointCloud::from_points(vec![Point::new(3.0, -2.0, 1.0, 0.5)]);
        assert_eq!(points_in_box(&cloud, &b), vec![true]);

        let eps = 1e-3;
        let t = RigidTransform::new(b.yaw, b.center());
        let outside = t.apply_xyz([b.length / 2.0 + eps, 0.0, 0.0]);
        let inside = t.apply_xyz([b.length / 2.0 - eps, 0.0, 0.0]);
        let cloud = PointCloud::from_points(vec![
            Point::new(outside[0] as f32, outside[1] as f32, outside[2] as f32, 0.0),
            Point::new(inside[0] as f32, inside[1] as f32, inside[2] as f32, 0.0),
        ]);
        assert_eq!(points_in_box(&cloud, &b), vec![false, true]);
    }

    #[test]
    fn boundary_is_inside() {
        let b = unit_box(0.0, 0.0, 0.0);
        let cloud = PointCloud::from_points(vec![Point::new(0.5, -0.5, 0.5, 0.0)]);
        assert_eq!(points_in_box(&cloud, &b), vec![true]);
    }

    #[test]
    fn crop_edge_cases() {
        let b = unit_box(0.0, 0.0, 0.0);
        let (i, o) = crop(&PointCloud::new(), &b);
        assert!(i.is_empty() && o.is_empty());

        let cloud = PointCloud::from_points(vec![
            Point::new(0.1, 0.1, 0.1, 0.2),
            Point::new(-0.2, 0.3, -0.4, 0.9),
        ]);
        let (i, o) = crop(&cloud, &b);
        assert_eq!(i, cloud);
        assert!(o.is_empty());
    }

    #[test]
    fn corners_of_unit_box() {
        let c = box_corners(&unit_box(0.0, 0.0, 0.0));
        for corner in c {
            for v in corner {
                assert!((v.abs() - 0.5).abs() < 1e-12);
            }
        }
        // bottom face first
        assert!(c[..4].iter().all(|p| p[2] < 0.0));
        assert!(c[4..].iter().all(|p| p[2] > 0.0));
    }

    #[test]
    fn quarter_turn_swaps_extents() {
        let b = Box3D::new([0.0; 3], [4.0, 2.0, 1.0], FRAC_PI_2).unwrap();
        let c = box_corners(&b);
        let max_x = c.iter().map(|p| p[0]).fold(f64::MIN, f64::max);
        let max_y = c.iter().map(|p| p[1]).fold(f64::MIN, f64::max);
        assert!((max_x - 1.0).abs() < 1e-12);
        assert!((max_y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_half_turn_transforms() {
        let b = Box3D::new([1.0, 2.0, 3.0], [4.0, 2.0, 1.5], 0.3).unwrap();
        assert_eq!(transform(&b, 0.0, [0.0; 3]), b);
        let twice = transform(&transform(&b, PI, [0.0; 3]), PI, [0.0; 3]);
        for (x, y) in twice.to_array().iter().zip(b.to_array()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    fn arb_box() -> impl Strategy<Value = Box3D> {
        (
            -20.0..20.0f64,
            -20.0..20.0f64,
            -2.0..2.0f64,
            0.2..6.0f64,
            0.2..6.0f64,
            0.2..3.0f64,
            -PI..PI,
        )
            .prop_map(|(x, y, z, l, w, h, yaw)| Box3D::new([x, y, z], [l, w, h], yaw).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = bev_iou(&a, &b);
            let ba = bev_iou(&b, &a);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - ba).abs() < 1e-9);
            let ab3 = iou_3d(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab3));
            prop_assert!((ab3 - iou_3d(&b, &a)).abs() < 1e-9);
            prop_assert!(ab3 <= 1.0);
        }

        #[test]
        fn transform_roundtrip(b in arb_box(), yaw in -PI..PI, tx in -50.0..50.0f64, ty in -50.0..50.0f64) {
            let t = RigidTransform::new(yaw, [tx, ty, 0.5]);
            let back = t.inverse().apply_box(&t.apply_box(&b));
            prop_assert!((back.cx - b.cx).abs() < 1e-6);
            prop_assert!((back.cy - b.cy).abs() < 1e-6);
            prop_assert!((back.cz - b.cz).abs() < 1e-6);
            let dyaw = normalize_yaw(back.yaw - b.yaw);
            prop_assert!(dyaw.abs() < 1e-6 || (dyaw.abs() - 2.0 * PI).abs() < 1e-6);
        }

        #[test]
        fn corner_centroid_is_center(b in arb_box()) {
            let c = box_corners(&b);
            for axis in 0..3 {
                let mean = c.iter().map(|p| p[axis]).sum::<f64>() / 8.0;
                prop_assert!((mean - b.center()[axis]).abs() < 1e-9);
            }
        }

        #[test]
        fn crop_is_partition(b in arb_box(), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cloud: PointCloud = (0..200)
                .map(|_| Point::new(
                    rng.random_range(-25.0..25.0),
                    rng.random_range(-25.0..25.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(0.0..1.0),
                ))
                .collect();
            let mask = points_in_box(&cloud, &b);
            let (inside, outside) = crop(&cloud, &b);
            prop_assert_eq!(inside.len() + outside.len(), cloud.len());
            prop_assert_eq!(inside, cloud.select(&mask, true));
            prop_assert_eq!(outside, cloud.select(&mask, false));
        }
    }
}
