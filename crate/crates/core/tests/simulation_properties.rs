mod common;

use std::collections::HashMap;

use hass_core::geometry::bev_iou;
use hass_core::quality_eval::{filter_report, greedy_match, IouKind, ScoreField, SceneLabels, DEFAULT_BINS};
use hass_core::teacher_sim::{
    predict, predict_detailed, run_loop_with_teacher, DeskSimConfig, GeneratorConfig, LoopOptions,
    SimulatedTeacher, TeacherSimConfig,
};
use hass_core::{Annotation, HardnessSchedule, SampleSource, Scene};

fn dense_objects() -> GeneratorConfig {
    GeneratorConfig {
        clutter_points: 0,
        min_objects: 8,
        max_objects: 8,
        min_points: 60,
        max_points: 200,
        ..GeneratorConfig::default()
    }
}

#[test]
fn detection_rate_at_start_matches_recall() {
    let g = dense_objects();
    let cfg = TeacherSimConfig::default();
    let mut objects = 0usize;
    let mut detected = 0usize;
    let mut seed = 0;
    while objects < 10_000 {
        let scene = g.generate("s", seed);
        objects += scene.objects.len();
        detected += predict_detailed(&scene, 0.0, &cfg, &g, seed + 1_000_000)
            .iter()
            .filter(|p| p.origin.is_some())
            .count();
        seed += 1;
    }
    let rate = detected as f64 / objects as f64;
    assert!((rate - cfg.recall(0.0)).abs() <= 0.02, "rate {rate} over {objects} objects");
}

#[test]
fn later_teacher_localizes_better() {
    let g = dense_objects();
    let cfg = TeacherSimConfig::default();
    let mean_iou = |t: f64| {
        let mut ious = Vec::new();
        for seed in 0..200 {
            let scene = g.generate("s", seed);
            ious.extend(
                predict_detailed(&scene, t, &cfg, &g, seed + 7)
                    .iter()
                    .filter(|p| p.origin.is_some())
                    .map(|p| p.true_iou),
            );
        }
        assert!(ious.len() >= 500);
        ious.iter().sum::<f64>() / ious.len() as f64
    };
    let (m0, m5, m1) = (mean_iou(0.0), mean_iou(0.5), mean_iou(1.0));
    assert!(m0 <= m5 && m5 <= m1, "{m0} {m5} {m1}");
}

#[test]
fn hidden_truth_never_steers_admission() {
    let sim = DeskSimConfig {
        labeled_scenes: 8,
        unlabeled_scenes: 20,
        ..DeskSimConfig::default()
    };
    let (labeled, unlabeled) = sim.scenes(3);
    let truth: Vec<Vec<Annotation>> = unlabeled.iter().map(|u| u.hidden_gt.clone()).collect();
    let clouds: Vec<Scene> = unlabeled.iter().map(|u| u.scene.clone()).collect();
    let gt: HashMap<String, Vec<Annotation>> =
        unlabeled.iter().map(|u| (u.scene.id.clone(), u.hidden_gt.clone())).collect();
    let teacher = SimulatedTeacher::new(sim.teacher.clone(), sim.generator.clone(), truth).unwrap();
    let schedule = HardnessSchedule::new(6, 3, (0.6, 0.4), (2, 6)).unwrap();
    let opts = LoopOptions::default();

    let with = run_loop_with_teacher(&labeled, &clouds, &teacher, Some(&gt), &schedule, &opts, 3).unwrap();
    let without = run_loop_with_teacher(&labeled, &clouds, &teacher, None, &schedule, &opts, 3).unwrap();
    assert_eq!(with.database.manifest(), without.database.manifest());
    for (a, b) in with.report.epochs.iter().zip(&without.report.epochs) {
        assert_eq!((a.candidates, a.admitted, a.rejected), (b.candidates, b.admitted, b.rejected));
        assert_eq!(a.synthesis, b.synthesis);
    }
    assert!(with.report.final_quality().is_some());
    assert!(without.report.final_quality().is_none());
}

#[test]
fn database_stats_match_recount() {
    let sim = DeskSimConfig {
        labeled_scenes: 10,
        unlabeled_scenes: 30,
        ..DeskSimConfig::default()
    };
    let schedule = HardnessSchedule::new(6, 2, (0.6, 0.4), (2, 6)).unwrap();
    let out = sim.run(&schedule, &LoopOptions::default(), 8).unwrap();
    let (_, unlabeled) = sim.scenes(8);
    let gt: HashMap<String, Vec<Annotation>> =
        unlabeled.iter().map(|u| (u.scene.id.clone(), u.hidden_gt.clone())).collect();
    let report = out.database.stats(Some(&gt), IouKind::Bev);

    let snap = out.database.snapshot();
    let mut hist = vec![0u64; DEFAULT_BINS.len() - 1];
    let mut sum = 0.0;
    let mut pseudo = 0;
    for e in snap.entries().iter().filter(|e| e.source == SampleSource::Pseudo) {
        pseudo += 1;
        let scene_gt = &gt[e.source_scene.as_ref().unwrap()];
        let best = scene_gt
            .iter()
            .filter(|g| g.category == e.category)
            .map(|g| bev_iou(&g.bbox, &e.bbox))
            .fold(0.0, f64::max);
        let bin = if best < 0.6 { 0 } else if best < 0.8 { 1 } else { 2 };
        hist[bin] += 1;
        sum += best;
    }
    assert!(pseudo > 0);
    assert_eq!(report.pseudo_entries, pseudo);
    assert_eq!(report.evaluated, pseudo);
    assert_eq!(report.entries, snap.len());
    assert_eq!(report.histogram, hist);
    assert!((report.mean_iou.unwrap() - sum / pseudo as f64).abs() < 1e-12);
}

#[test]
fn mean_kept_iou_rises_with_threshold_under_monotone_scores() {
    let sim = DeskSimConfig::default();
    let (_, unlabeled) = sim.scenes(12);
    // Score every prediction by its own matched IoU.
    let scenes: Vec<SceneLabels> = unlabeled
        .iter()
        .take(60)
        .enumerate()
        .map(|(i, u)| {
            let truth = Scene::new(u.scene.id.clone(), u.scene.cloud.clone(), u.hidden_gt.clone());
            let mut pseudo = predict(&truth, 0.3, &sim.teacher, &sim.generator, i as u64);
            let m = greedy_match(&pseudo, &u.hidden_gt, IouKind::Bev);
            for (p, pm) in pseudo.iter_mut().zip(&m.matches) {
                p.score = Some(pm.iou);
            }
            SceneLabels {
                pseudo,
                gt: u.hidden_gt.clone(),
            }
        })
        .collect();
    let thresholds: Vec<f64> = (0..=18).map(|i| i as f64 * 0.05).collect();
    let report = filter_report(&scenes, &thresholds, ScoreField::Confidence, IouKind::Bev).unwrap();
    let means: Vec<f64> = report.rows.iter().filter_map(|r| r.mean_iou).collect();
    assert!(means.len() > 10);
    assert!(means.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{means:?}");
    let kept: Vec<usize> = report.rows.iter().map(|r| r.kept).collect();
    assert!(kept.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(report.rows[0].histogram.total() as usize, report.rows[0].kept);
}
