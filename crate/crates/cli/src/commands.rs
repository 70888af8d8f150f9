use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use hass_core::augmentation::{flip as flip_scene, point_cutmix, RegionSpec};
use hass_core::quality_eval::{filter_report, scatter_export, SceneLabels, ScoreField};
use hass_core::scene_io::{build_gt_database, list_scene_files, read_labels, read_scene, write_scene};
use hass_core::seed::{derive, hash_str};
use hass_core::synthesis::check_scene_with_provenance;
use hass_core::teacher_sim::{AdmissionPolicy, LoopOptions, LoopOutcome};
use hass_core::{synthesize, PseudoDatabase, Scene, Stage};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{write_json, RunConfig};

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| anyhow!("no {flag} given on the command line or in the config"))
}

fn output_dir(cfg: &RunConfig) -> anyhow::Result<&Path> {
    let dir = required(&cfg.paths.out, "--out")?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Scene files named on the command line; directories expand to their `*.jsonl` files.
fn expand_inputs(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            files.extend(list_scene_files(p)?);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn load_scenes(cfg: &RunConfig, files: &[PathBuf]) -> anyhow::Result<Vec<Scene>> {
    files
        .par_iter()
        .map(|f| {
            let loaded = read_scene(f, &cfg.categories).with_context(|| format!("loading {}", f.display()))?;
            for w in &loaded.warnings {
                log::warn!("{w}");
            }
            Ok(loaded.scene)
        })
        .collect()
}

fn file_name(p: &Path) -> anyhow::Result<&std::ffi::OsStr> {
    p.file_name().ok_or_else(|| anyhow!("{} has no file name", p.display()))
}

pub fn dbgen(cfg: &RunConfig) -> anyhow::Result<()> {
    let scenes_dir = required(&cfg.paths.scenes, "--scenes")?;
    let out = output_dir(cfg)?;
    let files = list_scene_files(scenes_dir)?;
    let scenes = load_scenes(cfg, &files)?;
    let manifest = build_gt_database(&scenes, &cfg.categories, out)?;
    cfg.echo(out)?;
    eprintln!("{} scenes, {} objects", scenes.len(), manifest.entries.len());
    for (c, n) in manifest.counts_by_category() {
        eprintln!("  {c}: {n}");
    }
    Ok(())
}

#[derive(Serialize)]
struct SceneSummary {
    file: String,
    scene: String,
    inserted: usize,
    rejected_collisions: usize,
    removed_background_points: usize,
    violations: usize,
}

#[derive(Serialize)]
struct SynthSummary {
    seed: u64,
    epoch: u32,
    stage: Stage,
    density: u32,
    database_entries: usize,
    inserted: usize,
    rejected_collisions: usize,
    scenes: Vec<SceneSummary>,
}

pub fn synth(cfg: &RunConfig, epoch: u32) -> anyhow::Result<()> {
    let schedule = cfg.schedule()?;
    if epoch > schedule.total_epochs {
        bail!("epoch {epoch} is past the schedule's {} epochs", schedule.total_epochs);
    }
    let scenes_dir = required(&cfg.paths.scenes, "--scenes")?;
    let db_dir = required(&cfg.paths.db, "--db")?;
    let out = output_dir(cfg)?;
    let db = PseudoDatabase::open(db_dir).with_context(|| format!("opening database {}", db_dir.display()))?;
    let snapshot = db.snapshot();
    let density = schedule.density(epoch);
    let files = list_scene_files(scenes_dir)?;
    let scenes = load_scenes(cfg, &files)?;

    let seed = cfg.seed();
    let summaries = files
        .par_iter()
        .zip(&scenes)
        .map(|(f, s)| {
            let scene_seed = derive(seed, &[epoch as u64, hash_str(&s.id)]);
            let r = synthesize(s, &snapshot, density as usize, &cfg.synthesis, scene_seed)?;
            let name = file_name(f)?;
            write_scene(&r.scene, out.join(name))?;
            Ok(SceneSummary {
                file: name.to_string_lossy().into_owned(),
                scene: s.id.clone(),
                inserted: r.inserted.len(),
                rejected_collisions: r.rejected_collisions,
                removed_background_points: r.removed_background_points,
                violations: check_scene_with_provenance(&r.scene, &r.provenance).len(),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let summary = SynthSummary {
        seed,
        epoch,
        stage: schedule.stage(epoch),
        density,
        database_entries: snapshot.len(),
        inserted: summaries.iter().map(|s| s.inserted).sum(),
        rejected_collisions: summaries.iter().map(|s| s.rejected_collisions).sum(),
        scenes: summaries,
    };
    write_json(&out.join("synth_summary.json"), &summary)?;
    cfg.echo(out)?;
    eprintln!(
        "epoch {epoch}: {} scenes, k = {density}, {} objects inserted",
        summary.scenes.len(),
        summary.inserted
    );
    Ok(())
}

#[derive(Serialize)]
struct RunTotals {
    mean_iou: Option<f64>,
    pseudo_entries: usize,
    database_entries: usize,
}

impl RunTotals {
    fn of(o: &LoopOutcome) -> Self {
        let q = o.report.final_quality();
        Self {
            mean_iou: q.and_then(|q| q.mean_iou),
            pseudo_entries: o.database.snapshot().pseudo_count(),
            database_entries: o.database.len(),
        }
    }
}

#[derive(Serialize)]
struct Comparison {
    seed: u64,
    baseline: AdmissionPolicy,
    scheduled: RunTotals,
    fixed: RunTotals,
    scheduled_iou_at_least_baseline: bool,
    scheduled_entries_at_least_baseline: bool,
}

pub fn simulate(cfg: &RunConfig, baseline: Option<AdmissionPolicy>) -> anyhow::Result<()> {
    let schedule = cfg.schedule()?;
    let out = output_dir(cfg)?;
    let seed = cfg.seed();
    let options = |admission| LoopOptions {
        categories: cfg.categories.clone(),
        synthesis: cfg.synthesis.clone(),
        admission,
        iou: cfg.iou,
        dump_dir: None,
        dump_scenes: 0,
    };
    let mut main = cfg.simulation.run(&schedule, &options(AdmissionPolicy::Scheduled), seed)?;
    write_json(&out.join("loop_report.json"), &main.report)?;
    main.database.flush(out.join("db"))?;
    let totals = RunTotals::of(&main);
    eprintln!(
        "scheduled: {} pseudo entries, mean IoU {}",
        totals.pseudo_entries,
        fmt_iou(totals.mean_iou)
    );

    if let Some(policy) = baseline {
        if policy == AdmissionPolicy::Scheduled {
            bail!("--baseline must be fixed:<threshold>");
        }
        let base = cfg.simulation.run(&schedule, &options(policy), seed)?;
        write_json(&out.join("baseline_report.json"), &base.report)?;
        let fixed = RunTotals::of(&base);
        eprintln!(
            "baseline: {} pseudo entries, mean IoU {}",
            fixed.pseudo_entries,
            fmt_iou(fixed.mean_iou)
        );
        let cmp = Comparison {
            seed,
            baseline: policy,
            scheduled_iou_at_least_baseline: totals.mean_iou.unwrap_or(0.0) >= fixed.mean_iou.unwrap_or(0.0),
            scheduled_entries_at_least_baseline: totals.pseudo_entries >= fixed.pseudo_entries,
            scheduled: totals,
            fixed,
        };
        write_json(&out.join("comparison.json"), &cmp)?;
    }
    cfg.echo(out)
}

fn fmt_iou(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
}

/// Pairs pseudo-label files with ground-truth files of the same name.
fn label_pairs(pseudo: &Path, gt: &Path) -> anyhow::Result<Vec<(PathBuf, PathBuf)>> {
    match (pseudo.is_dir(), gt.is_dir()) {
        (false, false) => Ok(vec![(pseudo.to_path_buf(), gt.to_path_buf())]),
        (true, true) => list_scene_files(pseudo)?
            .into_iter()
            .map(|p| {
                let g = gt.join(file_name(&p)?);
                if !g.is_file() {
                    bail!("no ground truth {} for {}", g.display(), p.display());
                }
                Ok((p, g))
            })
            .collect(),
        _ => bail!("--pseudo and --gt must both be files or both be directories"),
    }
}

pub fn eval_quality(
    cfg: &RunConfig,
    pseudo: &Path,
    gt: &Path,
    thresholds: &[f64],
    field: ScoreField,
) -> anyhow::Result<()> {
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        bail!("threshold {t} outside [0, 1]");
    }
    let out = output_dir(cfg)?;
    let scenes = label_pairs(pseudo, gt)?
        .into_iter()
        .map(|(p, g)| {
            let read = |f: &Path| read_labels(f, &cfg.categories).with_context(|| format!("loading {}", f.display()));
            Ok(SceneLabels {
                pseudo: read(&p)?.objects,
                gt: read(&g)?.objects,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = filter_report(&scenes, thresholds, field, cfg.iou)?;
    write_json(&out.join("filter_report.json"), &report)?;
    let rows = scatter_export(&scenes, out.join("scatter.csv"), cfg.iou)?;
    cfg.echo(out)?;
    for r in &report.rows {
        eprintln!("tau {:.2}: kept {}, mean IoU {}", r.threshold, r.kept, fmt_iou(r.mean_iou));
    }
    eprintln!("{rows} scatter rows");
    Ok(())
}

pub fn flip(cfg: &RunConfig, inputs: &[PathBuf]) -> anyhow::Result<()> {
    let out = output_dir(cfg)?;
    let files = expand_inputs(inputs)?;
    let mut seen = BTreeMap::new();
    for f in &files {
        if let Some(prev) = seen.insert(file_name(f)?.to_owned(), f) {
            bail!("{} and {} would write the same output", prev.display(), f.display());
        }
    }
    let scenes = load_scenes(cfg, &files)?;
    files.par_iter().zip(&scenes).try_for_each(|(f, s)| -> anyhow::Result<()> {
        write_scene(&flip_scene(s), out.join(file_name(f)?))?;
        Ok(())
    })?;
    cfg.echo(out)?;
    eprintln!("flipped {} scenes", scenes.len());
    Ok(())
}

pub fn cutmix(cfg: &RunConfig, a: &Path, b: &Path, width: f64) -> anyhow::Result<()> {
    let out = output_dir(cfg)?;
    let scenes = load_scenes(cfg, &[a.to_path_buf(), b.to_path_buf()])?;
    let seed = derive(cfg.seed(), &[hash_str(&scenes[0].id), hash_str(&scenes[1].id)]);
    let mixed = point_cutmix(&scenes[0], &scenes[1], &RegionSpec { width }, seed)?;
    write_scene(&mixed, out.join(file_name(a)?))?;
    cfg.echo(out)?;
    eprintln!("{} objects, {} points", mixed.objects.len(), mixed.cloud.len());
    Ok(())
}
