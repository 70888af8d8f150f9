//! A stochastic stand-in for a trained detector whose accuracy improves with
//! training progress `t` in `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, normalize_yaw, points_in_box, Box3D};
use crate::scene_io::{Annotation, Scene};

use super::generator::GeneratorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherSimConfig {
    pub recall_start: f64,
    pub recall_end: f64,
    /// Std of the center error in meters (x and y; z uses half of it).
    pub sigma_center_start: f64,
    pub sigma_center_end: f64,
    /// Relative std of each box dimension.
    pub sigma_dims: f64,
    /// Std of the heading error in radians.
    pub sigma_yaw: f64,
    /// Confidence is `clamp(true_iou + N(0, sigma_conf(t)), 0, 1)`.
    pub sigma_conf_start: f64,
    pub sigma_conf_end: f64,
    /// Std of the estimated-IoU score around the true IoU.
    pub sigma_est_iou: f64,
    /// Expected false positives per scene at `t = 0`, decaying linearly to `fp_floor`.
    pub fp_start: f64,
    pub fp_floor: f64,
    /// Objects with fewer points are detected proportionally less often; 0 disables.
    pub p_ref: usize,
}

impl Default for TeacherSimConfig {
    fn default() -> Self {
        Self {
            recall_start: 0.5,
            recall_end: 0.9,
            sigma_center_start: 0.5,
            sigma_center_end: 0.1,
            sigma_dims: 0.05,
            sigma_yaw: 0.1,
            sigma_conf_start: 0.25,
            sigma_conf_end: 0.1,
            sigma_est_iou: 0.15,
            fp_start: 2.0,
            fp_floor: 0.5,
            p_ref: 50,
        }
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (1.0 - t) * a + t * b
}

impl TeacherSimConfig {
    /// Perfect recall, no noise, no false positives.
    pub fn noiseless() -> Self {
        Self {
            recall_start: 1.0,
            recall_end: 1.0,
            sigma_center_start: 0.0,
            sigma_center_end: 0.0,
            sigma_dims: 0.0,
            sigma_yaw: 0.0,
            sigma_conf_start: 0.0,
            sigma_conf_end: 0.0,
            sigma_est_iou: 0.0,
            fp_start: 0.0,
            fp_floor: 0.0,
            p_ref: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.recall_start) || !unit.contains(&self.recall_end) {
            return Err(Error::Config("recall values must lie in [0, 1]".into()));
        }
        if self.recall_end < self.recall_start {
            return Err(Error::Config("recall_end must be >= recall_start".into()));
        }
        let sigmas = [
            self.sigma_center_start,
            self.sigma_center_end,
            self.sigma_dims,
            self.sigma_yaw,
            self.sigma_conf_start,
            self.sigma_conf_end,
            self.sigma_est_iou,
            self.fp_start,
            self.fp_floor,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("noise levels and false-positive rates must be finite and >= 0".into()));
        }
        if self.sigma_center_end > self.sigma_center_start
            || self.sigma_conf_end > self.sigma_conf_start
            || self.fp_floor > self.fp_start
        {
            return Err(Error::Config("end-of-training noise must not exceed the start values".into()));
        }
        Ok(())
    }

    pub fn recall(&self, t: f64) -> f64 {
        lerp(self.recall_start, self.recall_end, t)
    }

    pub fn sigma_center(&self, t: f64) -> f64 {
        lerp(self.sigma_center_start, self.sigma_center_end, t)
    }

    pub fn sigma_conf(&self, t: f64) -> f64 {
        lerp(self.sigma_conf_start, self.sigma_conf_end, t)
    }

    pub fn fp_rate(&self, t: f64) -> f64 {
        lerp(self.fp_start, self.fp_floor, t)
    }

    /// Detection-probability factor of an object with `points` interior points.
    pub fn hardness_factor(&self, points: usize) -> f64 {
        if self.p_ref == 0 {
            1.0
        } else {
            (points as f64 / self.p_ref as f64).min(1.0)
        }
    }
}

/// One teacher output, with the bookkeeping needed to test the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub annotation: Annotation,
    /// Ground-truth index this prediction was derived from; `None` for false positives.
    pub origin: Option<usize>,
    pub true_iou: f64,
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// Simulated detections on a scene with known ground truth.
pub fn predict_detailed(
    scene_gt: &Scene,
    progress: f64,
    config: &TeacherSimConfig,
    fp_area: &GeneratorConfig,
    rng_seed: u64,
) -> Vec<Prediction> {
    let t = progress.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let recall = config.recall(t);
    let sigma_c = config.sigma_center(t);
    let sigma_conf = config.sigma_conf(t);
    let mut out = Vec::new();

    for (i, gt) in scene_gt.objects.iter().enumerate() {
        let points = points_in_box(&scene_gt.cloud, &gt.bbox).iter().filter(|m| **m).count();
        let p_detect = recall * config.hardness_factor(points);
        if rng.random::<f64>() >= p_detect {
            continue;
        }
        let g = gt.bbox;
        let dim = |rng: &mut ChaCha8Rng, d: f64| d * (1.0 + gauss(rng, config.sigma_dims)).max(0.2);
        let bbox = Box3D {
            cx: g.cx + gauss(&mut rng, sigma_c),
            cy: g.cy + gauss(&mut rng, sigma_c),
            cz: g.cz + gauss(&mut rng, sigma_c / 2.0),
            length: dim(&mut rng, g.length),
            width: dim(&mut rng, g.width),
            height: dim(&mut rng, g.height),
            yaw: normalize_yaw(g.yaw + gauss(&mut rng, config.sigma_yaw)),
        };
        let iou = bev_iou(&bbox, &g);
        let confidence = (iou + gauss(&mut rng, sigma_conf)).clamp(0.0, 1.0);
        let estimated = (iou + gauss(&mut rng, config.sigma_est_iou)).clamp(0.0, 1.0);
        out.push(Prediction {
            annotation: Annotation {
                category: gt.category.clone(),
                bbox,
                score: Some(confidence),
                estimated_iou: Some(estimated),
            },
            origin: Some(i),
            true_iou: iou,
        });
    }

    let rate = config.fp_rate(t);
    let n_fp = if rate > 0.0 {
        Poisson::new(rate).map(|d| d.sample(&mut rng) as usize).unwrap_or(0)
    } else {
        0
    };
    let extent = fp_area.extent;
    for _ in 0..n_fp {
        let tmpl = fp_area.pick_template(&mut rng).clone();
        let dims = tmpl.dims.map(|d| d * rng.random_range(0.5..=1.0));
        let mut placed = None;
        for _ in 0..10 {
            let b = Box3D::new(
                [
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent..extent),
                    fp_area.ground_z + dims[2] / 2.0,
                ],
                dims,
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            )
            .expect("positive dims");
            if scene_gt.objects.iter().all(|o| bev_iou(&o.bbox, &b) == 0.0) {
                placed = Some(b);
                break;
            }
        }
        let Some(bbox) = placed else { continue };
        let confidence = gauss(&mut rng, sigma_conf).clamp(0.0, 1.0);
        let estimated = gauss(&mut rng, config.sigma_est_iou).clamp(0.0, 1.0);
        out.push(Prediction {
            annotation: Annotation {
                category: tmpl.name,
                bbox,
                score: Some(confidence),
                estimated_iou: Some(estimated),
            },
            origin: None,
            true_iou: 0.0,
        });
    }
    out
}

/// Teacher predictions with scores, as a detector would emit them.
pub fn predict(
    scene_gt: &Scene,
    progress: f64,
    config: &TeacherSimConfig,
    fp_area: &GeneratorConfig,
    rng_seed: u64,
) -> Vec<Annotation> {
    predict_detailed(scene_gt, progress, config, fp_area, rng_seed)
        .into_iter()
        .map(|p| p.annotation)
        .collect()
}

/// A source of pseudo-labels for the unlabeled pool.
pub trait Teacher: Sync {
    /// Predictions for unlabeled scene `index`, whose points are `cloud_only`.
    fn predict(&self, index: usize, cloud_only: &Scene, progress: f64, rng_seed: u64) -> Vec<Annotation>;
}

/// The simulated teacher. It keeps the hidden ground truth to itself; the
/// training loop only ever sees its predictions.
#[derive(Debug, Clone)]
pub struct SimulatedTeacher {
    config: TeacherSimConfig,
    fp_area: GeneratorConfig,
    truth: Vec<Vec<Annotation>>,
}

impl SimulatedTeacher {
    pub fn new(config: TeacherSimConfig, fp_area: GeneratorConfig, truth: Vec<Vec<Annotation>>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, fp_area, truth })
    }
}

impl Teacher for SimulatedTeacher {
    fn predict(&self, index: usize, cloud_only: &Scene, progress: f64, rng_seed: u64) -> Vec<Annotation> {
        let scene = Scene::new(
            cloud_only.id.clone(),
            cloud_only.cloud.clone(),
            self.truth.get(index).cloned().unwrap_or_default(),
        );
        predict(&scene, progress, &self.config, &self.fp_area, rng_seed)
    }
}
