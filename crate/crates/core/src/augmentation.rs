//! Scene-level augmentations: mirror flip and angular-sector PointCutMix.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, normalize_yaw, points_in_box, Box3D, Point, PointCloud};
use crate::scene_io::{Annotation, Scene};

/// Mirrors a scene across the x-z plane (`y -> -y`, `yaw -> -yaw`).
pub fn flip(scene: &Scene) -> Scene {
    let cloud = scene
        .cloud
        .iter()
        .map(|p| Point::new(p.x, -p.y, p.z, p.intensity))
        .collect();
    let objects = scene
        .objects
        .iter()
        .map(|a| Annotation {
            bbox: Box3D {
                cy: -a.bbox.cy,
                yaw: normalize_yaw(-a.bbox.yaw),
                ..a.bbox
            },
            ..a.clone()
        })
        .collect();
    Scene::new(scene.id.clone(), cloud, objects)
}

/// Angular width of the swapped bird's-eye-view sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    /// Radians, strictly between 0 and 2 pi.
    pub width: f64,
}

impl RegionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width > 0.0 && self.width < 2.0 * PI {
            Ok(())
        } else {
            Err(Error::Config(format!("sector width {} outside (0, 2pi)", self.width)))
        }
    }
}

/// A sector about the origin, `center +- width/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub center: f64,
    pub width: f64,
}

impl Sector {
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        normalize_yaw(y.atan2(x) - self.center).abs() <= self.width / 2.0
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.contains_xy(p.x as f64, p.y as f64)
    }

    /// Draws the sector center uniformly in `[-pi, pi)`.
    pub fn draw(region: &RegionSpec, seed: u64) -> Result<Self> {
        region.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            center: rng.random_range(-PI..PI),
            width: region.width,
        })
    }
}

/// Replaces the points of `a` inside a random sector by the points of `b` in it.
///
/// Annotations go with their box centers. A `b` box that overlaps any kept
/// box is dropped together with its points.
pub fn point_cutmix(a: &Scene, b: &Scene, region: &RegionSpec, rng_seed: u64) -> Result<Scene> {
    let sector = Sector::draw(region, rng_seed)?;
    Ok(cutmix_with_sector(a, b, &sector))
}

pub fn cutmix_with_sector(a: &Scene, b: &Scene, sector: &Sector) -> Scene {
    let mut objects: Vec<Annotation> = a
        .objects
        .iter()
        .filter(|o| !sector.contains_xy(o.bbox.cx, o.bbox.cy))
        .cloned()
        .collect();

    let mut b_points: PointCloud = b.cloud.iter().filter(|p| sector.contains(p)).copied().collect();
    for o in b.objects.iter().filter(|o| sector.contains_xy(o.bbox.cx, o.bbox.cy)) {
        if objects.iter().any(|k| bev_iou(&k.bbox, &o.bbox) > 0.0) {
            b_points = b_points.select(&points_in_box(&b_points, &o.bbox), false);
            continue;
        }
        objects.push(o.clone());
    }

    let cloud = a
        .cloud
        .iter()
        .filter(|p| !sector.contains(p))
        .copied()
        .chain(b_points.points)
        .collect();
    Scene::new(a.id.clone(), cloud, objects)
}
