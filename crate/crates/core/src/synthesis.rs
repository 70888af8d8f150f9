//! Collision-free scene synthesis: paste database objects onto a labeled
//! background, removing the background points they cover.
//!
//! The merged annotation list is the background's annotations followed by the
//! inserted ones. An object is only placed where its footprint does not
//! overlap (BEV IoU > 0) any box already in the scene.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, points_in_box, Box3D, RigidTransform};
use crate::pseudo_database::{DatabaseSnapshot, ObjectSample};
use crate::scene_io::{Annotation, Scene};
use crate::seed;

/// Placement attempts per candidate under [`PlacementPolicy::Jitter`].
pub const JITTER_RETRIES: usize = 10;

const STREAM_SAMPLE: u64 = 1;
const STREAM_PLACE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlacementPolicy {
    /// Paste at the recorded source pose.
    #[default]
    OriginalPose,
    /// Rotate about the scene origin by a uniform yaw in `[-pi/4, pi/4]`, then
    /// shift in the ground plane by a vector whose length lies in `[r_min, r_max]`.
    Jitter { r_min: f64, r_max: f64 },
}

impl PlacementPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PlacementPolicy::OriginalPose => Ok(()),
            PlacementPolicy::Jitter { r_min, r_max } => {
                if !(r_min.is_finite() && r_max.is_finite() && r_min >= 0.0 && r_min <= r_max) {
                    Err(Error::Config(format!(
                        "jitter annulus must satisfy 0 <= r_min <= r_max (got {r_min}, {r_max})"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn attempts(&self) -> usize {
        match self {
            PlacementPolicy::OriginalPose => 1,
            PlacementPolicy::Jitter { .. } => JITTER_RETRIES,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> RigidTransform {
        match *self {
            PlacementPolicy::OriginalPose => RigidTransform::identity(),
            PlacementPolicy::Jitter { r_min, r_max } => {
                let yaw = rng.random_range(-FRAC_PI_4..=FRAC_PI_4);
                // uniform over the annulus area
                let u: f64 = rng.random();
                let r = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
                let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                RigidTransform::new(yaw, [r * phi.cos(), r * phi.sin(), 0.0])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    #[serde(default)]
    pub placement: PlacementPolicy,
    /// Relative share of each category; defaults to uniform over the
    /// categories present in the database.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_weights: Option<BTreeMap<String, f64>>,
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        self.placement.validate()?;
        if let Some(w) = &self.category_weights {
            for (c, v) in w {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(Error::Config(format!("weight for {c:?} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }
}

/// Where the points of a synthesized cloud came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    /// Leading points kept from the background.
    pub background_points: usize,
    /// Index of the first inserted annotation.
    pub first_inserted: usize,
    /// Point range of each inserted object, in insertion order.
    pub inserted_ranges: Vec<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub scene: Scene,
    /// Inserted objects at their final pose.
    pub inserted: Vec<ObjectSample>,
    pub rejected_collisions: usize,
    pub removed_background_points: usize,
    pub provenance: Provenance,
}

impl SynthesisResult {
    fn passthrough(background: &Scene) -> Self {
        Self {
            scene: background.clone(),
            inserted: Vec::new(),
            rejected_collisions: 0,
            removed_background_points: 0,
            provenance: Provenance {
                background_points: background.cloud.len(),
                first_inserted: background.objects.len(),
                inserted_ranges: Vec::new(),
            },
        }
    }
}

/// Splits `k` across categories proportionally to `weights`, handing the
/// remainder out by largest fractional part (ties to the earlier category).
pub fn apportion(k: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if k == 0 || total <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| k as f64 * w / total).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(k.saturating_sub(assigned)) {
        quota[i] += 1;
    }
    quota
}

/// Orders the apportioned slots so that each prefix stays as close to the
/// weights as the quotas allow; with equal weights this is round-robin.
fn interleave(quota: &[usize], weights: &[f64]) -> Vec<usize> {
    let total_w: f64 = weights.iter().sum();
    let k: usize = quota.iter().sum();
    let mut used = vec![0usize; quota.len()];
    let mut order = Vec::with_capacity(k);
    for step in 1..=k {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..quota.len() {
            if used[c] >= quota[c] {
                continue;
            }
            let deficit = weights[c] * step as f64 / total_w - used[c] as f64;
            if best.is_none_or(|(_, d)| deficit > d + 1e-12) {
                best = Some((c, deficit));
            }
        }
        let (c, _) = best.expect("remaining quota");
        used[c] += 1;
        order.push(c);
    }
    order
}

fn collides(candidate: &Box3D, placed: &[Box3D]) -> bool {
    placed.iter().any(|b| bev_iou(candidate, b) > 0.0)
}

/// Pastes up to `k` database objects onto `background`.
pub fn synthesize(
    background: &Scene,
    db: &DatabaseSnapshot,
    k: usize,
    config: &SynthesisConfig,
    rng_seed: u64,
) -> Result<SynthesisResult> {
    config.validate()?;
    if k == 0 || db.is_empty() {
        return Ok(SynthesisResult::passthrough(background));
    }

    // Categories with a non-empty pool and a positive weight.
    let mut cats: Vec<(usize, &str, f64)> = Vec::new();
    for (ci, c) in db.categories().iter().enumerate() {
        if db.pool(c)?.is_empty() {
            continue;
        }
        let w = match &config.category_weights {
            Some(m) => m.get(c).copied().unwrap_or(0.0),
            None => 1.0,
        };
        if w > 0.0 {
            cats.push((ci, c.as_str(), w));
        }
    }
    if cats.is_empty() {
        return Ok(SynthesisResult::passthrough(background));
    }
    let weights: Vec<f64> = cats.iter().map(|c| c.2).collect();
    let quota = apportion(k, &weights);
    let drawn: Vec<Vec<&ObjectSample>> = cats
        .iter()
        .zip(&quota)
        .map(|(&(ci, name, _), &q)| db.sample(name, q, seed::derive(rng_seed, &[STREAM_SAMPLE, ci as u64])))
        .collect::<Result<_>>()?;

    let mut placed_boxes: Vec<Box3D> = background.objects.iter().map(|a| a.bbox).collect();
    let mut inserted: Vec<ObjectSample> = Vec::new();
    let mut rejected = 0;
    let mut next = vec![0usize; cats.len()];
    for (slot, c) in interleave(&quota, &weights).into_iter().enumerate() {
        let Some(&obj) = drawn[c].get(next[c]) else {
            continue; // pool exhausted
        };
        next[c] += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(rng_seed, &[STREAM_PLACE, slot as u64]));
        let mut accepted = None;
        for _ in 0..config.placement.attempts() {
            let t = config.placement.draw(&mut rng);
            let bbox = t.apply_box(&obj.bbox);
            if !collides(&bbox, &placed_boxes) {
                accepted = Some((t, bbox));
                break;
            }
        }
        match accepted {
            Some((t, bbox)) => {
                placed_boxes.push(bbox);
                let points = if t == RigidTransform::identity() {
                    obj.points.clone()
                } else {
                    t.apply_cloud(&obj.points)
                };
                inserted.push(ObjectSample {
                    bbox,
                    points,
                    ..obj.clone()
                });
            }
            None => rejected += 1,
        }
    }

    // Remove background points covered by any inserted box.
    let mut covered = vec![false; background.cloud.len()];
    for o in &inserted {
        for (c, m) in covered.iter_mut().zip(points_in_box(&background.cloud, &o.bbox)) {
            *c |= m;
        }
    }
    let mut cloud = background.cloud.select(&covered, false);
    let removed = background.cloud.len() - cloud.len();
    let background_points = cloud.len();

    let mut objects = background.objects.clone();
    let mut ranges = Vec::with_capacity(inserted.len());
    for o in &inserted {
        let start = cloud.len();
        cloud.extend_from(&o.points);
        ranges.push(start..cloud.len());
        objects.push(Annotation {
            category: o.category.clone(),
            bbox: o.bbox,
            score: o.score,
            estimated_iou: None,
        });
    }

    Ok(SynthesisResult {
        scene: Scene::new(background.id.clone(), cloud, objects),
        inserted,
        rejected_collisions: rejected,
        removed_background_points: removed,
        provenance: Provenance {
            background_points,
            first_inserted: background.objects.len(),
            inserted_ranges: ranges,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    Overlap { first: usize, second: usize, iou: f64 },
    InvalidBox { index: usize, reason: String },
    /// Points lying inside an inserted box that were not inserted with it.
    ForeignPoints { annotation: usize, count: usize },
}

/// Reports overlapping annotation pairs and invalid boxes.
pub fn check_scene_valid(scene: &Scene) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, a) in scene.objects.iter().enumerate() {
        if let Err(e) = a.bbox.validate() {
            out.push(Violation::InvalidBox {
                index: i,
                reason: e.to_string(),
            });
        }
    }
    for i in 0..scene.objects.len() {
        for j in i + 1..scene.objects.len() {
            let (a, b) = (&scene.objects[i].bbox, &scene.objects[j].bbox);
            if !(a.is_valid() && b.is_valid()) {
                continue;
            }
            let iou = bev_iou(a, b);
            if iou > 0.0 {
                out.push(Violation::Overlap { first: i, second: j, iou });
            }
        }
    }
    out
}

/// [`check_scene_valid`] plus the point-ownership check for inserted objects.
pub fn check_scene_with_provenance(scene: &Scene, provenance: &Provenance) -> Vec<Violation> {
    let mut out = check_scene_valid(scene);
    for (n, range) in provenance.inserted_ranges.iter().enumerate() {
        let idx = provenance.first_inserted + n;
        let Some(a) = scene.objects.get(idx) else {
            out.push(Violation::InvalidBox {
                index: idx,
                reason: "provenance refers to a missing annotation".into(),
            });
            continue;
        };
        if !a.bbox.is_valid() {
            continue;
        }
        let count = points_in_box(&scene.cloud, &a.bbox)
            .iter()
            .enumerate()
            .filter(|&(p, &inside)| inside && !range.contains(&p))
            .count();
        if count > 0 {
            out.push(Violation::ForeignPoints { annotation: idx, count });
        }
    }
    out
}

/// Checks the point-conservation identity of a result against its background.
pub fn conserves_points(background: &Scene, result: &SynthesisResult) -> bool {
    let inserted: usize = result.inserted.iter().map(|o| o.points.len()).sum();
    result.scene.cloud.len() + result.removed_background_points == background.cloud.len() + inserted
}
