//! The dynamic object database: ground-truth crops plus pseudo-labeled crops
//! admitted at epoch boundaries.
//!
//! The database is append-only. Readers work on a [`DatabaseSnapshot`], an
//! immutable view that later admissions do not affect.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{points_in_box, Box3D, PointCloud};
use crate::quality_eval::{greedy_match, IouHistogram, IouKind, DEFAULT_BINS};
use crate::scene_io::{
    self, blob_name, blob_path, ground_truth_crops, ground_truth_id, pseudo_id, Annotation, CategorySet,
    DatabaseLock, DatabaseManifest, ManifestEntry, SampleSource, Scene,
};
use crate::scheduler::{HardnessSchedule, Stage};

/// One foreground object: its box and the points cropped from its source scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSample {
    /// Assigned on admission; empty for candidates.
    pub id: String,
    pub category: String,
    pub bbox: Box3D,
    pub points: PointCloud,
    pub score: Option<f64>,
    pub source: SampleSource,
    pub epoch_added: u32,
    pub source_scene: Option<String>,
}

impl ObjectSample {
    /// A pseudo-labeled candidate awaiting admission.
    pub fn candidate(
        category: impl Into<String>,
        bbox: Box3D,
        points: PointCloud,
        score: f64,
        source_scene: Option<String>,
    ) -> Self {
        Self {
            id: String::new(),
            category: category.into(),
            bbox,
            points,
            score: Some(score),
            source: SampleSource::Pseudo,
            epoch_added: 0,
            source_scene,
        }
    }

    pub fn annotation(&self) -> Annotation {
        Annotation {
            category: self.category.clone(),
            bbox: self.bbox,
            score: self.score,
            estimated_iou: None,
        }
    }

    fn manifest_entry(&self) -> ManifestEntry {
        ManifestEntry {
            id: self.id.clone(),
            category: self.category.clone(),
            bbox: self.bbox,
            score: self.score,
            source: self.source,
            epoch_added: self.epoch_added,
            source_scene: self.source_scene.clone(),
            blob: blob_name(&self.id),
            point_count: self.points.len(),
            empty: self.points.is_empty(),
        }
    }

    fn validate(&self, categories: &CategorySet) -> Result<()> {
        if !categories.contains(&self.category) {
            return Err(Error::Validation(format!("unknown category {:?}", self.category)));
        }
        self.bbox.validate()?;
        match (self.source, self.score) {
            (SampleSource::GroundTruth, Some(_)) => {
                return Err(Error::Validation("ground-truth sample carries a score".into()))
            }
            (SampleSource::Pseudo, None) => return Err(Error::Validation("pseudo sample has no score".into())),
            (_, Some(s)) if !(0.0..=1.0).contains(&s) => {
                return Err(Error::Validation(format!("score {s} outside [0, 1]")))
            }
            _ => {}
        }
        if let Some(i) = points_in_box(&self.points, &self.bbox).iter().position(|inside| !inside) {
            return Err(Error::Validation(format!("sample point {i} lies outside its box")));
        }
        Ok(())
    }
}

/// Result of one end-of-epoch admission batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AdmitOutcome {
    pub accepted: usize,
    pub rejected: usize,
}

/// An immutable view of the database.
#[derive(Debug, Clone)]
pub struct DatabaseSnapshot {
    categories: CategorySet,
    entries: Arc<Vec<Arc<ObjectSample>>>,
}

impl DatabaseSnapshot {
    pub fn categories(&self) -> &CategorySet {
        &self.categories
    }

    pub fn entries(&self) -> &[Arc<ObjectSample>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pseudo_count(&self) -> usize {
        self.entries.iter().filter(|e| e.source == SampleSource::Pseudo).count()
    }

    pub fn pool(&self, category: &str) -> Result<Vec<&ObjectSample>> {
        if !self.categories.contains(category) {
            return Err(Error::Validation(format!("unknown category {category:?}")));
        }
        Ok(self
            .entries
            .iter()
            .filter(|e| e.category == category)
            .map(|e| e.as_ref())
            .collect())
    }

    /// Draws up to `n` entries of `category` uniformly without replacement.
    ///
    /// The draw is a prefix of a seeded permutation of the pool, so for a
    /// fixed seed the result for `n` is a prefix of the result for `n + 1`.
    pub fn sample(&self, category: &str, n: usize, seed: u64) -> Result<Vec<&ObjectSample>> {
        let mut pool = self.pool(category)?;
        if n == 0 || pool.is_empty() {
            return Ok(Vec::new());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pool.shuffle(&mut rng);
        pool.truncate(n);
        Ok(pool)
    }

    /// Quality statistics. With ground truth (keyed by scene id), each pseudo
    /// entry is matched alone against the ground truth of its source scene.
    pub fn stats(&self, gt: Option<&HashMap<String, Vec<Annotation>>>, kind: IouKind) -> QualityReport {
        let mut per_category: BTreeMap<String, CategoryQuality> = self
            .categories
            .iter()
            .map(|c| (c.clone(), CategoryQuality::new(DEFAULT_BINS.len() - 1)))
            .collect();
        let mut hist = IouHistogram::new(&DEFAULT_BINS);
        let mut iou_sums: HashMap<&str, f64> = HashMap::new();

        for e in self.entries.iter() {
            let q = per_category.get_mut(&e.category).expect("category checked on admission");
            q.entries += 1;
            if e.score.is_some() {
                q.scored += 1;
            }
            if e.source != SampleSource::Pseudo {
                continue;
            }
            q.pseudo_entries += 1;
            let Some(scene_gt) = gt.and_then(|g| e.source_scene.as_ref().and_then(|s| g.get(s))) else {
                continue;
            };
            let iou = greedy_match(std::slice::from_ref(&e.annotation()), scene_gt, kind).matches[0].iou;
            q.evaluated += 1;
            q.histogram[hist.bin_of(iou)] += 1;
            hist.add(&e.category, iou);
            *iou_sums.entry(e.category.as_str()).or_default() += iou;
        }

        for (cat, q) in per_category.iter_mut() {
            if q.evaluated > 0 {
                q.mean_iou = Some(iou_sums.get(cat.as_str()).copied().unwrap_or(0.0) / q.evaluated as f64);
            }
        }
        let evaluated: usize = per_category.values().map(|q| q.evaluated).sum();
        let total_iou: f64 = iou_sums.values().sum();
        QualityReport {
            bins: DEFAULT_BINS.to_vec(),
            entries: self.entries.len(),
            pseudo_entries: per_category.values().map(|q| q.pseudo_entries).sum(),
            evaluated,
            mean_iou: (evaluated > 0).then(|| total_iou / evaluated as f64),
            histogram: hist.totals(),
            per_category,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryQuality {
    pub entries: usize,
    pub scored: usize,
    pub pseudo_entries: usize,
    /// Pseudo entries whose source scene has ground truth.
    pub evaluated: usize,
    /// Mean best-match IoU over evaluated entries; unmatched entries count as 0.
    pub mean_iou: Option<f64>,
    pub histogram: Vec<u64>,
}

impl CategoryQuality {
    fn new(bins: usize) -> Self {
        Self {
            entries: 0,
            scored: 0,
            pseudo_entries: 0,
            evaluated: 0,
            mean_iou: None,
            histogram: vec![0; bins],
        }
    }
}

/// Database quality summary. Ground-truth entries never enter the histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub bins: Vec<f64>,
    pub entries: usize,
    pub pseudo_entries: usize,
    pub evaluated: usize,
    pub mean_iou: Option<f64>,
    pub histogram: Vec<u64>,
    pub per_category: BTreeMap<String, CategoryQuality>,
}

/// The mutable database owned by the single writer.
#[derive(Debug, Clone)]
pub struct PseudoDatabase {
    categories: CategorySet,
    entries: Arc<Vec<Arc<ObjectSample>>>,
    persisted: usize,
}

impl PseudoDatabase {
    pub fn empty(categories: CategorySet) -> Self {
        Self {
            categories,
            entries: Arc::new(Vec::new()),
            persisted: 0,
        }
    }

    /// In-memory ground-truth database, in the same entry order as
    /// [`scene_io::build_gt_database`].
    pub fn from_ground_truth(scenes: &[Scene], categories: &CategorySet) -> Result<Self> {
        let entries = ground_truth_crops(scenes, categories)?
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                Arc::new(ObjectSample {
                    id: ground_truth_id(i),
                    category: c.category,
                    bbox: c.bbox,
                    points: c.points,
                    score: None,
                    source: SampleSource::GroundTruth,
                    epoch_added: 0,
                    source_scene: Some(c.scene_id),
                })
            })
            .collect();
        Ok(Self {
            categories: categories.clone(),
            entries: Arc::new(entries),
            persisted: 0,
        })
    }

    /// Loads a database directory written by [`scene_io::build_gt_database`] or [`PseudoDatabase::flush`].
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = scene_io::read_manifest(dir)?;
        let entries = manifest
            .entries
            .iter()
            .map(|e| {
                let points = scene_io::read_cloud(blob_path(dir, &e.blob))?;
                Ok(Arc::new(ObjectSample {
                    id: e.id.clone(),
                    category: e.category.clone(),
                    bbox: e.bbox,
                    points,
                    score: e.score,
                    source: e.source,
                    epoch_added: e.epoch_added,
                    source_scene: e.source_scene.clone(),
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        let persisted = entries.len();
        Ok(Self {
            categories: manifest.categories,
            entries: Arc::new(entries),
            persisted,
        })
    }

    pub fn categories(&self) -> &CategorySet {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn snapshot(&self) -> DatabaseSnapshot {
        DatabaseSnapshot {
            categories: self.categories.clone(),
            entries: Arc::clone(&self.entries),
        }
    }

    pub fn manifest(&self) -> DatabaseManifest {
        DatabaseManifest {
            version: scene_io::MANIFEST_VERSION,
            categories: self.categories.clone(),
            entries: self.entries.iter().map(|e| e.manifest_entry()).collect(),
        }
    }

    /// End-of-epoch admission under the schedule. Easy-stage epochs reject every candidate.
    pub fn admit(
        &mut self,
        candidates: Vec<ObjectSample>,
        epoch: u32,
        schedule: &HardnessSchedule,
    ) -> Result<AdmitOutcome> {
        self.check_candidates(&candidates)?;
        match schedule.stage(epoch) {
            Stage::Easy => Ok(AdmitOutcome {
                accepted: 0,
                rejected: candidates.len(),
            }),
            Stage::Hard => {
                let tau = schedule.threshold(epoch)?;
                self.admit_checked(candidates, epoch, tau)
            }
        }
    }

    /// Admits candidates whose score is at least `threshold`, bypassing the schedule.
    pub fn admit_with_threshold(
        &mut self,
        candidates: Vec<ObjectSample>,
        epoch: u32,
        threshold: f64,
    ) -> Result<AdmitOutcome> {
        self.check_candidates(&candidates)?;
        self.admit_checked(candidates, epoch, threshold)
    }

    fn check_candidates(&self, candidates: &[ObjectSample]) -> Result<()> {
        for (i, c) in candidates.iter().enumerate() {
            if c.source != SampleSource::Pseudo {
                return Err(Error::Validation(format!("candidate {i} is not a pseudo sample")));
            }
            c.validate(&self.categories)
                .map_err(|e| Error::Validation(format!("candidate {i}: {e}")))?;
        }
        Ok(())
    }

    fn admit_checked(&mut self, candidates: Vec<ObjectSample>, epoch: u32, tau: f64) -> Result<AdmitOutcome> {
        let mut outcome = AdmitOutcome::default();
        let entries = Arc::make_mut(&mut self.entries);
        for mut c in candidates {
            if c.score.expect("checked") >= tau {
                c.id = pseudo_id(entries.len());
                c.epoch_added = epoch;
                entries.push(Arc::new(c));
                outcome.accepted += 1;
            } else {
                outcome.rejected += 1;
            }
        }
        Ok(outcome)
    }

    /// Writes blobs of entries added since the last flush, then the manifest.
    pub fn flush(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let objects = dir.join(scene_io::OBJECTS_DIR);
        fs::create_dir_all(&objects).map_err(|e| Error::io(&objects, e))?;
        let _lock = DatabaseLock::acquire(dir)?;
        for e in &self.entries[self.persisted..] {
            scene_io::write_cloud(&e.points, blob_path(dir, &blob_name(&e.id)))?;
        }
        scene_io::write_manifest(dir, &self.manifest())?;
        self.persisted = self.entries.len();
        Ok(())
    }

    pub fn sample(&self, category: &str, n: usize, seed: u64) -> Result<Vec<ObjectSample>> {
        Ok(self
            .snapshot()
            .sample(category, n, seed)?
            .into_iter()
            .cloned()
            .collect())
    }

    pub fn stats(&self, gt: Option<&HashMap<String, Vec<Annotation>>>, kind: IouKind) -> QualityReport {
        self.snapshot().stats(gt, kind)
    }
}
