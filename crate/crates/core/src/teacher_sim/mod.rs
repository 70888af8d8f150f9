//! Desk-scale simulation of the hardness-aware training loop.
//!
//! Each epoch synthesizes every labeled scene from the current database
//! snapshot, then (in the hard stage) lets the teacher label the unlabeled
//! pool and admits the candidates that clear the epoch's threshold. Hidden
//! ground truth of the unlabeled pool is only used to score database quality.

mod generator;
mod teacher;

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use generator::{CategoryTemplate, GeneratorConfig};
pub use teacher::{predict, predict_detailed, Prediction, SimulatedTeacher, Teacher, TeacherSimConfig};

use crate::error::{Error, Result};
use crate::geometry::crop;
use crate::pseudo_database::{AdmitOutcome, ObjectSample, PseudoDatabase, QualityReport};
use crate::quality_eval::IouKind;
use crate::scene_io::{self, Annotation, CategorySet, Scene};
use crate::scheduler::{HardnessSchedule, Stage};
use crate::seed;
use crate::synthesis::{check_scene_with_provenance, synthesize, SynthesisConfig};

const STREAM_SYNTH: u64 = 10;
const STREAM_PREDICT: u64 = 20;

/// How pseudo-labels enter the database.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdmissionPolicy {
    /// Stage-gated, with the schedule's falling threshold.
    #[default]
    Scheduled,
    /// One pass of the untrained (progress 0) teacher before training, filtered
    /// at a fixed threshold; the database is not updated afterwards.
    Fixed(f64),
}

impl FromStr for AdmissionPolicy {
    type Err = Error;

    /// Parses `scheduled` or `fixed:<threshold>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "scheduled" {
            return Ok(AdmissionPolicy::Scheduled);
        }
        let tau = s
            .strip_prefix("fixed:")
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| (0.0..=1.0).contains(v))
            .ok_or_else(|| Error::Config(format!("expected `scheduled` or `fixed:<0..1>`, got {s:?}")))?;
        Ok(AdmissionPolicy::Fixed(tau))
    }
}

/// An unlabeled scene with the ground truth kept aside for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledScene {
    /// Points only; `objects` is empty.
    pub scene: Scene,
    pub hidden_gt: Vec<Annotation>,
}

impl UnlabeledScene {
    pub fn from_labeled(scene: Scene) -> Self {
        let hidden_gt = scene.objects;
        Self {
            scene: Scene::new(scene.id, scene.cloud, Vec::new()),
            hidden_gt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOptions {
    pub categories: CategorySet,
    pub synthesis: SynthesisConfig,
    pub admission: AdmissionPolicy,
    pub iou: IouKind,
    /// Write the first `dump_scenes` synthesized scenes of every epoch here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_dir: Option<PathBuf>,
    #[serde(default)]
    pub dump_scenes: usize,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            categories: CategorySet::kitti(),
            synthesis: SynthesisConfig::default(),
            admission: AdmissionPolicy::Scheduled,
            iou: IouKind::Bev,
            dump_dir: None,
            dump_scenes: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub scenes: usize,
    pub inserted: usize,
    pub rejected_collisions: usize,
    pub removed_background_points: usize,
    pub violations: usize,
    pub conservation_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub progress: f64,
    pub stage: Stage,
    /// Admission threshold in force at the end of this epoch, if any.
    pub threshold: Option<f64>,
    pub density: u32,
    pub candidates: usize,
    pub admitted: usize,
    pub rejected: usize,
    pub database_entries: usize,
    pub pseudo_entries: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityReport>,
    pub synthesis: SynthesisSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub seed: u64,
    pub schedule: HardnessSchedule,
    pub admission: AdmissionPolicy,
    pub labeled_scenes: usize,
    pub unlabeled_scenes: usize,
    pub epochs: Vec<EpochRecord>,
}

impl LoopReport {
    pub fn final_quality(&self) -> Option<&QualityReport> {
        self.epochs.last().and_then(|e| e.quality.as_ref())
    }
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub report: LoopReport,
    pub database: PseudoDatabase,
}

/// Training progress of 0-indexed `epoch`.
pub fn progress(epoch: u32, total_epochs: u32) -> f64 {
    if total_epochs <= 1 {
        0.0
    } else {
        epoch as f64 / (total_epochs - 1) as f64
    }
}

fn candidates_for(
    teacher: &dyn Teacher,
    unlabeled: &[Scene],
    t: f64,
    epoch: u32,
    run_seed: u64,
) -> Vec<ObjectSample> {
    unlabeled
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let preds = teacher.predict(i, s, t, seed::derive(run_seed, &[STREAM_PREDICT, epoch as u64, i as u64]));
            preds
                .into_iter()
                .map(|a| {
                    let (inside, _) = crop(&s.cloud, &a.bbox);
                    let score = a.score.unwrap_or(0.0);
                    ObjectSample::candidate(a.category, a.bbox, inside, score, Some(s.id.clone()))
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Runs the loop against any teacher. `report_gt`, keyed by unlabeled scene
/// id, is read only when building quality reports.
pub fn run_loop_with_teacher(
    labeled: &[Scene],
    unlabeled: &[Scene],
    teacher: &dyn Teacher,
    report_gt: Option<&HashMap<String, Vec<Annotation>>>,
    schedule: &HardnessSchedule,
    options: &LoopOptions,
    run_seed: u64,
) -> Result<LoopOutcome> {
    if labeled.is_empty() {
        return Err(Error::Config("the loop needs at least one labeled scene".into()));
    }
    schedule.validate()?;
    options.synthesis.validate()?;
    for s in labeled.iter().chain(unlabeled) {
        s.validate(&options.categories)?;
    }

    let mut db = PseudoDatabase::from_ground_truth(labeled, &options.categories)?;
    let mut epochs = Vec::with_capacity(schedule.total_epochs as usize);

    let mut offline: Option<AdmitOutcome> = None;
    let mut offline_candidates = 0;
    if let AdmissionPolicy::Fixed(tau) = options.admission {
        let cands = candidates_for(teacher, unlabeled, 0.0, 0, run_seed);
        offline_candidates = cands.len();
        offline = Some(db.admit_with_threshold(cands, 0, tau)?);
    }

    for epoch in 0..schedule.total_epochs {
        let t = progress(epoch, schedule.total_epochs);
        let stage = schedule.stage(epoch);
        let density = schedule.density(epoch);
        let snapshot = db.snapshot();

        let results = labeled
            .par_iter()
            .enumerate()
            .map(|(i, bg)| {
                synthesize(
                    bg,
                    &snapshot,
                    density as usize,
                    &options.synthesis,
                    seed::derive(run_seed, &[STREAM_SYNTH, epoch as u64, i as u64]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut summary = SynthesisSummary {
            scenes: results.len(),
            ..Default::default()
        };
        for (bg, r) in labeled.iter().zip(&results) {
            summary.inserted += r.inserted.len();
            summary.rejected_collisions += r.rejected_collisions;
            summary.removed_background_points += r.removed_background_points;
            summary.violations += check_scene_with_provenance(&r.scene, &r.provenance).len();
            if !crate::synthesis::conserves_points(bg, r) {
                summary.conservation_failures += 1;
            }
        }
        if let Some(dir) = &options.dump_dir {
            let epoch_dir = dir.join(format!("epoch_{epoch:03}"));
            std::fs::create_dir_all(&epoch_dir).map_err(|e| Error::io(&epoch_dir, e))?;
            for r in results.iter().take(options.dump_scenes) {
                scene_io::write_scene(&r.scene, epoch_dir.join(format!("{}.jsonl", r.scene.id)))?;
            }
        }
        drop(results);

        let (threshold, candidates, outcome) = match (options.admission, stage) {
            (AdmissionPolicy::Scheduled, Stage::Hard) => {
                let cands = candidates_for(teacher, unlabeled, t, epoch, run_seed);
                let n = cands.len();
                let out = db.admit(cands, epoch, schedule)?;
                (Some(schedule.threshold(epoch)?), n, out)
            }
            (AdmissionPolicy::Scheduled, Stage::Easy) => (None, 0, AdmitOutcome::default()),
            (AdmissionPolicy::Fixed(tau), _) if epoch == 0 => {
                (Some(tau), offline_candidates, offline.take().unwrap_or_default())
            }
            (AdmissionPolicy::Fixed(_), _) => (None, 0, AdmitOutcome::default()),
        };

        let snap = db.snapshot();
        epochs.push(EpochRecord {
            epoch,
            progress: t,
            stage,
            threshold,
            density,
            candidates,
            admitted: outcome.accepted,
            rejected: outcome.rejected,
            database_entries: snap.len(),
            pseudo_entries: snap.pseudo_count(),
            quality: report_gt.map(|gt| snap.stats(Some(gt), options.iou)),
            synthesis: summary,
        });
        log::debug!(
            "epoch {epoch}: stage {stage:?}, density {density}, admitted {}/{candidates}, db {}",
            outcome.accepted,
            snap.len()
        );
    }

    Ok(LoopOutcome {
        report: LoopReport {
            seed: run_seed,
            schedule: *schedule,
            admission: options.admission,
            labeled_scenes: labeled.len(),
            unlabeled_scenes: unlabeled.len(),
            epochs,
        },
        database: db,
    })
}

/// Runs the loop with the simulated teacher built from the unlabeled scenes' hidden ground truth.
pub fn run_loop(
    labeled: &[Scene],
    unlabeled: &[UnlabeledScene],
    schedule: &HardnessSchedule,
    teacher_config: &TeacherSimConfig,
    fp_area: &GeneratorConfig,
    options: &LoopOptions,
    run_seed: u64,
) -> Result<LoopOutcome> {
    let truth: Vec<Vec<Annotation>> = unlabeled.iter().map(|u| u.hidden_gt.clone()).collect();
    let teacher = SimulatedTeacher::new(teacher_config.clone(), fp_area.clone(), truth)?;
    let clouds: Vec<Scene> = unlabeled.iter().map(|u| u.scene.clone()).collect();
    let gt: HashMap<String, Vec<Annotation>> =
        unlabeled.iter().map(|u| (u.scene.id.clone(), u.hidden_gt.clone())).collect();
    run_loop_with_teacher(labeled, &clouds, &teacher, Some(&gt), schedule, options, run_seed)
}

/// Sizes and models of a self-contained desk simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeskSimConfig {
    pub labeled_scenes: usize,
    pub unlabeled_scenes: usize,
    pub generator: GeneratorConfig,
    pub teacher: TeacherSimConfig,
}

impl Default for DeskSimConfig {
    fn default() -> Self {
        Self {
            labeled_scenes: 50,
            unlabeled_scenes: 200,
            generator: GeneratorConfig::default(),
            teacher: TeacherSimConfig::default(),
        }
    }
}

impl DeskSimConfig {
    /// Labeled and unlabeled scene pools for a run seed.
    pub fn scenes(&self, run_seed: u64) -> (Vec<Scene>, Vec<UnlabeledScene>) {
        let labeled = self
            .generator
            .generate_many("l", self.labeled_scenes, seed::derive(run_seed, &[1]));
        let unlabeled = self
            .generator
            .generate_many("u", self.unlabeled_scenes, seed::derive(run_seed, &[2]))
            .into_iter()
            .map(UnlabeledScene::from_labeled)
            .collect();
        (labeled, unlabeled)
    }

    pub fn run(&self, schedule: &HardnessSchedule, options: &LoopOptions, run_seed: u64) -> Result<LoopOutcome> {
        self.generator.validate(&options.categories)?;
        self.teacher.validate()?;
        let (labeled, unlabeled) = self.scenes(run_seed);
        run_loop(&labeled, &unlabeled, schedule, &self.teacher, &self.generator, options, run_seed)
    }
}
