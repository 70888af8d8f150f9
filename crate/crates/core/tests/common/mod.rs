//! Independent oracles shared by the integration tests. Nothing here calls the
//! geometry routines under test.

#![allow(dead_code)]

use std::f64::consts::PI;

use hass_core::{Box3D, Point, PointCloud, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_box(rng: &mut ChaCha8Rng, around: [f64; 3], spread: f64) -> Box3D {
    Box3D::new(
        [
            around[0] + rng.random_range(-spread..=spread),
            around[1] + rng.random_range(-spread..=spread),
            around[2] + rng.random_range(-spread / 2.0..=spread / 2.0),
        ],
        [
            rng.random_range(0.3..5.0),
            rng.random_range(0.3..3.0),
            rng.random_range(0.3..2.5),
        ],
        rng.random_range(-PI..PI),
    )
    .unwrap()
}

/// Six outward face normals with their support distances from the center.
fn half_spaces(b: &Box3D) -> [([f64; 3], f64); 6] {
    let (c, s) = (b.yaw.cos(), b.yaw.sin());
    let ex = [c, s, 0.0];
    let ey = [-s, c, 0.0];
    let ez = [0.0, 0.0, 1.0];
    let neg = |v: [f64; 3]| [-v[0], -v[1], -v[2]];
    [
        (ex, b.length / 2.0),
        (neg(ex), b.length / 2.0),
        (ey, b.width / 2.0),
        (neg(ey), b.width / 2.0),
        (ez, b.height / 2.0),
        (neg(ez), b.height / 2.0),
    ]
}

pub fn inside_halfspaces(b: &Box3D, x: f64, y: f64, z: f64) -> bool {
    let d = [x - b.cx, y - b.cy, z - b.cz];
    half_spaces(b)
        .iter()
        .all(|(n, h)| n[0] * d[0] + n[1] * d[1] + n[2] * d[2] <= *h)
}

pub fn inside_footprint(b: &Box3D, x: f64, y: f64) -> bool {
    let d = [x - b.cx, y - b.cy];
    half_spaces(b)[..4].iter().all(|(n, h)| n[0] * d[0] + n[1] * d[1] <= *h)
}

pub fn halfspace_mask(cloud: &PointCloud, b: &Box3D) -> Vec<bool> {
    cloud
        .iter()
        .map(|p| inside_halfspaces(b, p.x as f64, p.y as f64, p.z as f64))
        .collect()
}

/// A uniform point of `a`'s footprint (or volume) in world coordinates.
fn sample_in(a: &Box3D, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let u = rng.random_range(-0.5..0.5) * a.length;
    let v = rng.random_range(-0.5..0.5) * a.width;
    let w = rng.random_range(-0.5..0.5) * a.height;
    let (c, s) = (a.yaw.cos(), a.yaw.sin());
    [a.cx + u * c - v * s, a.cy + u * s + v * c, a.cz + w]
}

/// Area-sampling estimate of the footprint IoU.
pub fn mc_bev_iou(a: &Box3D, b: &Box3D, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let hits = (0..samples)
        .filter(|_| {
            let [x, y, _] = sample_in(a, rng);
            inside_footprint(b, x, y)
        })
        .count();
    let area_a = a.length * a.width;
    let area_b = b.length * b.width;
    let inter = area_a * hits as f64 / samples as f64;
    inter / (area_a + area_b - inter)
}

/// Volume-sampling estimate of the 3D IoU.
pub fn mc_iou_3d(a: &Box3D, b: &Box3D, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let hits = (0..samples)
        .filter(|_| {
            let [x, y, z] = sample_in(a, rng);
            inside_halfspaces(b, x, y, z)
        })
        .count();
    let vol_a = a.length * a.width * a.height;
    let vol_b = b.length * b.width * b.height;
    let inter = vol_a * hits as f64 / samples as f64;
    inter / (vol_a + vol_b - inter)
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> PointCloud {
    (0..n)
        .map(|_| {
            Point::new(
                rng.random_range(-extent..extent) as f32,
                rng.random_range(-extent..extent) as f32,
                rng.random_range(-extent / 4.0..extent / 4.0) as f32,
                rng.random_range(0.0..1.0) as f32,
            )
        })
        .collect()
}

/// Footprints overlap with positive area. Separating-axis test on the four
/// edge normals, strict so that touching rectangles do not count.
pub fn footprints_overlap(a: &Box3D, b: &Box3D) -> bool {
    fn axes(b: &Box3D) -> [[f64; 2]; 2] {
        [[b.yaw.cos(), b.yaw.sin()], [-b.yaw.sin(), b.yaw.cos()]]
    }
    fn radius(b: &Box3D, axis: [f64; 2]) -> f64 {
        let [ex, ey] = axes(b);
        b.length / 2.0 * (ex[0] * axis[0] + ex[1] * axis[1]).abs()
            + b.width / 2.0 * (ey[0] * axis[0] + ey[1] * axis[1]).abs()
    }
    let gap = [b.cx - a.cx, b.cy - a.cy];
    axes(a).into_iter().chain(axes(b)).all(|axis| {
        let dist = (gap[0] * axis[0] + gap[1] * axis[1]).abs();
        dist < radius(a, axis) + radius(b, axis) - 1e-9
    })
}

/// Every pair of annotations whose footprints overlap.
pub fn overlapping_pairs(scene: &Scene) -> Vec<(usize, usize)> {
    let n = scene.objects.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if footprints_overlap(&scene.objects[i].bbox, &scene.objects[j].bbox) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Angle of `(x, y)` lies within `width / 2` of `center`.
pub fn in_sector(center: f64, width: f64, x: f64, y: f64) -> bool {
    let mut d = y.atan2(x) - center;
    while d > PI {
        d -= 2.0 * PI;
    }
    while d <= -PI {
        d += 2.0 * PI;
    }
    d.abs() <= width / 2.0
}
