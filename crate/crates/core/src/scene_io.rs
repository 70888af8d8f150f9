//! On-disk formats: KITTI-style `.bin` sweeps, `.jsonl` scene annotations, and
//! the object database directory (`manifest.json` + `objects/<id>.bin`).
//!
//! Every writer here is deterministic, so identical inputs give identical bytes.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{crop, normalize_yaw, Box3D, Point, PointCloud};

const POINT_BYTES: usize = 16;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const OBJECTS_DIR: &str = "objects";
pub const LOCK_FILE: &str = ".lock";
pub const MANIFEST_VERSION: u32 = 1;

/// The configured set of object categories, in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategorySet(Vec<String>);

impl CategorySet {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::Config("empty category name".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Config(format!("duplicate category {n:?}")));
            }
        }
        Ok(Self(names))
    }

    /// `Car`, `Pedestrian`, `Cyclist`.
    pub fn kitti() -> Self {
        Self(vec!["Car".into(), "Pedestrian".into(), "Cyclist".into()])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.iter().any(|c| c == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|c| c == name)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }
}

impl Default for CategorySet {
    fn default() -> Self {
        Self::kitti()
    }
}

/// One labeled (or predicted) object in a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub category: String,
    #[serde(rename = "box", with = "box_array")]
    pub bbox: Box3D,
    /// Detector confidence; absent for ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Detector-estimated localization quality, consumed as an opaque score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated_iou: Option<f64>,
}

impl Annotation {
    pub fn ground_truth(category: impl Into<String>, bbox: Box3D) -> Self {
        Self {
            category: category.into(),
            bbox,
            score: None,
            estimated_iou: None,
        }
    }

    pub fn scored(category: impl Into<String>, bbox: Box3D, score: f64) -> Self {
        Self {
            category: category.into(),
            bbox,
            score: Some(score),
            estimated_iou: None,
        }
    }

    pub fn validate(&self, categories: &CategorySet) -> Result<()> {
        if !categories.contains(&self.category) {
            return Err(Error::Validation(format!("unknown category {:?}", self.category)));
        }
        self.bbox.validate()?;
        for (name, v) in [("score", self.score), ("estimated_iou", self.estimated_iou)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Validation(format!("{name} {v} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

mod box_array {
    use super::Box3D;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(b: &Box3D, s: S) -> Result<S::Ok, S::Error> {
        b.to_array().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Box3D, D::Error> {
        let v = <[f64; 7]>::deserialize(d)?;
        // Validation (and yaw normalization) happens in the scene reader so
        // that it can report warnings.
        Ok(Box3D {
            cx: v[0],
            cy: v[1],
            cz: v[2],
            length: v[3],
            width: v[4],
            height: v[5],
            yaw: v[6],
        })
    }
}

/// A point cloud and its annotations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub id: String,
    pub cloud: PointCloud,
    pub objects: Vec<Annotation>,
}

impl Scene {
    pub fn new(id: impl Into<String>, cloud: PointCloud, objects: Vec<Annotation>) -> Self {
        Self {
            id: id.into(),
            cloud,
            objects,
        }
    }

    pub fn validate(&self, categories: &CategorySet) -> Result<()> {
        self.cloud.validate()?;
        for (i, a) in self.objects.iter().enumerate() {
            a.validate(categories)
                .map_err(|e| Error::Validation(format!("scene {:?} object {i}: {e}", self.id)))?;
        }
        Ok(())
    }
}

/// A scene read from disk, with any non-fatal issues found while reading.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScene {
    pub scene: Scene,
    pub warnings: Vec<String>,
}

// ---------------------------------------------------------------------------
// Point clouds

pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for p in cloud.iter() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_cloud(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let tail = bytes.len() % POINT_BYTES;
    if tail != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (bytes.len() - tail) as u64,
            message: format!("trailing {tail} bytes do not form a 16-byte point record"),
        });
    }
    let points: Vec<Point> = bytes
        .chunks_exact(POINT_BYTES)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[i * 4..i * 4 + 4].try_into().unwrap());
            Point::new(f(0), f(1), f(2), f(3))
        })
        .collect();
    let cloud = PointCloud::from_points(points);
    cloud
        .validate()
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    Ok(cloud)
}

/// Reads a sweep of little-endian `f32` quadruples `(x, y, z, intensity)`.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cloud(&bytes, path)
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    cloud.validate()?;
    fs::write(path, encode_cloud(cloud)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Scenes

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneHeader {
    scene_id: String,
    cloud: String,
}

/// The cloud file written next to a scene file: same stem, `.bin` extension.
pub fn cloud_path_for(scene_path: &Path) -> PathBuf {
    scene_path.with_extension("bin")
}

/// Serializes the annotation part of a scene (header line + one line per object).
pub fn encode_scene_annotations(scene: &Scene, cloud_ref: &str) -> Vec<u8> {
    let mut out = Vec::new();
    let header = SceneHeader {
        scene_id: scene.id.clone(),
        cloud: cloud_ref.to_string(),
    };
    serde_json::to_writer(&mut out, &header).expect("header serializes");
    out.push(b'\n');
    for a in &scene.objects {
        serde_json::to_writer(&mut out, a).expect("annotation serializes");
        out.push(b'\n');
    }
    out
}

/// Writes `path` (annotations) and its sibling `.bin` cloud file.
pub fn write_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    scene.cloud.validate()?;
    for a in &scene.objects {
        a.bbox.validate()?;
    }
    let cloud_path = cloud_path_for(path);
    let cloud_ref = cloud_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Validation(format!("bad scene path {}", path.display())))?
        .to_string();
    write_cloud(&scene.cloud, &cloud_path)?;
    fs::write(path, encode_scene_annotations(scene, &cloud_ref)).map_err(|e| Error::io(path, e))
}

/// The annotation part of a scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFile {
    pub scene_id: String,
    /// Cloud file name, relative to the scene file's directory.
    pub cloud: String,
    pub objects: Vec<Annotation>,
    pub warnings: Vec<String>,
}

/// Parses the header and annotation lines of a scene file without touching
/// its cloud. Yaw values outside `(-pi, pi]` are normalized and reported as warnings.
pub fn read_labels(path: impl AsRef<Path>, categories: &CategorySet) -> Result<LabelFile> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut offset = 0u64;
    let mut warnings = Vec::new();

    let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    if n == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: "missing header line".into(),
        });
    }
    let header: SceneHeader = serde_json::from_str(line.trim_end()).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        offset,
        message: format!("bad header: {e}"),
    })?;
    offset += n as u64;

    let mut objects = Vec::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        let text = line.trim_end();
        if !text.is_empty() {
            let mut a: Annotation = serde_json::from_str(text).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                offset,
                message: format!("bad annotation: {e}"),
            })?;
            if a.bbox.yaw.is_finite() && !(a.bbox.yaw > -std::f64::consts::PI && a.bbox.yaw <= std::f64::consts::PI) {
                let fixed = normalize_yaw(a.bbox.yaw);
                let msg = format!(
                    "{}: object {} yaw {} normalized to {}",
                    path.display(),
                    objects.len(),
                    a.bbox.yaw,
                    fixed
                );
                log::warn!("{msg}");
                warnings.push(msg);
                a.bbox.yaw = fixed;
            }
            a.validate(categories).map_err(|e| {
                Error::Validation(format!("{} object {}: {e}", path.display(), objects.len()))
            })?;
            objects.push(a);
        }
        offset += n as u64;
    }

    Ok(LabelFile {
        scene_id: header.scene_id,
        cloud: header.cloud,
        objects,
        warnings,
    })
}

/// Parses a scene file and loads its cloud.
pub fn read_scene(path: impl AsRef<Path>, categories: &CategorySet) -> Result<LoadedScene> {
    let path = path.as_ref();
    let labels = read_labels(path, categories)?;
    let cloud = read_cloud(path.parent().unwrap_or(Path::new(".")).join(&labels.cloud))?;
    Ok(LoadedScene {
        scene: Scene::new(labels.scene_id, cloud, labels.objects),
        warnings: labels.warnings,
    })
}

/// Lists `*.jsonl` files in a directory, sorted by file name.
pub fn list_scene_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "jsonl") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

// ---------------------------------------------------------------------------
// Object database

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSource {
    GroundTruth,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub category: String,
    #[serde(rename = "box", with = "box_array")]
    pub bbox: Box3D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub source: SampleSource,
    pub epoch_added: u32,
    /// Scene the object was cropped from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_scene: Option<String>,
    /// Blob file name relative to the `objects/` directory.
    pub blob: String,
    pub point_count: usize,
    #[serde(default)]
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseManifest {
    pub version: u32,
    pub categories: CategorySet,
    pub entries: Vec<ManifestEntry>,
}

impl DatabaseManifest {
    pub fn empty(categories: CategorySet) -> Self {
        Self {
            version: MANIFEST_VERSION,
            categories,
            entries: Vec::new(),
        }
    }

    /// Entry counts per category, in category-set order.
    pub fn counts_by_category(&self) -> Vec<(String, usize)> {
        self.categories
            .iter()
            .map(|c| (c.clone(), self.entries.iter().filter(|e| &e.category == c).count()))
            .collect()
    }

    /// Entries of one category, in manifest order.
    pub fn entries_for<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries.iter().filter(move |e| e.category == category)
    }
}

/// Exclusive writer guard for a database directory; released on drop.
#[derive(Debug)]
pub struct DatabaseLock {
    path: PathBuf,
}

impl DatabaseLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DatabaseLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn blob_name(entry_id: &str) -> String {
    format!("{entry_id}.bin")
}

pub fn blob_path(dir: &Path, blob: &str) -> PathBuf {
    dir.join(OBJECTS_DIR).join(blob)
}

/// Writes the manifest through a temporary file and a rename.
pub fn write_manifest(dir: impl AsRef<Path>, manifest: &DatabaseManifest) -> Result<()> {
    let dir = dir.as_ref();
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    let target = dir.join(MANIFEST_FILE);
    let mut bytes = serde_json::to_vec_pretty(manifest).map_err(|e| Error::json(&target, e))?;
    bytes.push(b'\n');
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))
}

/// Reads a manifest and checks entry-id uniqueness and blob sizes.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<DatabaseManifest> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatabaseManifest = serde_json::from_slice(&bytes).map_err(|e| Error::json(&path, e))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Validation(format!(
            "{}: unsupported manifest version {}",
            path.display(),
            manifest.version
        )));
    }
    let mut ids = HashSet::new();
    for e in &manifest.entries {
        if !ids.insert(e.id.as_str()) {
            return Err(Error::Validation(format!("duplicate entry id {:?}", e.id)));
        }
        if !manifest.categories.contains(&e.category) {
            return Err(Error::Validation(format!("entry {:?}: unknown category {:?}", e.id, e.category)));
        }
        let blob = blob_path(dir, &e.blob);
        let len = fs::metadata(&blob).map_err(|err| Error::io(&blob, err))?.len();
        if len != (e.point_count * POINT_BYTES) as u64 {
            return Err(Error::Validation(format!(
                "entry {:?}: blob holds {} bytes, expected {} points",
                e.id, len, e.point_count
            )));
        }
    }
    Ok(manifest)
}

/// A ground-truth object crop, before it is given an id.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthCrop {
    pub category: String,
    pub bbox: Box3D,
    pub points: PointCloud,
    pub scene_id: String,
}

/// Crops every annotation of every scene, grouped by category (category-set
/// order), then by scene order, then by annotation order.
pub fn ground_truth_crops(scenes: &[Scene], categories: &CategorySet) -> Result<Vec<GroundTruthCrop>> {
    for s in scenes {
        for a in &s.objects {
            if !categories.contains(&a.category) {
                return Err(Error::Validation(format!(
                    "scene {:?}: unknown category {:?}",
                    s.id, a.category
                )));
            }
        }
    }
    let mut out = Vec::new();
    for cat in categories.iter() {
        for s in scenes {
            for a in s.objects.iter().filter(|a| &a.category == cat) {
                let (inside, _) = crop(&s.cloud, &a.bbox);
                out.push(GroundTruthCrop {
                    category: cat.clone(),
                    bbox: a.bbox,
                    points: inside,
                    scene_id: s.id.clone(),
                });
            }
        }
    }
    Ok(out)
}

pub fn ground_truth_id(index: usize) -> String {
    format!("gt-{index:06}")
}

pub fn pseudo_id(index: usize) -> String {
    format!("ps-{index:06}")
}

/// Harvests ground-truth object crops into a new database directory.
pub fn build_gt_database(
    scenes: &[Scene],
    categories: &CategorySet,
    out_dir: impl AsRef<Path>,
) -> Result<DatabaseManifest> {
    let dir = out_dir.as_ref();
    let objects = dir.join(OBJECTS_DIR);
    fs::create_dir_all(&objects).map_err(|e| Error::io(&objects, e))?;
    let _lock = DatabaseLock::acquire(dir)?;

    let mut manifest = DatabaseManifest::empty(categories.clone());
    for (i, c) in ground_truth_crops(scenes, categories)?.into_iter().enumerate() {
        let id = ground_truth_id(i);
        let blob = blob_name(&id);
        write_cloud(&c.points, blob_path(dir, &blob))?;
        manifest.entries.push(ManifestEntry {
            id,
            category: c.category,
            bbox: c.bbox,
            score: None,
            source: SampleSource::GroundTruth,
            epoch_added: 0,
            source_scene: Some(c.scene_id),
            blob,
            point_count: c.points.len(),
            empty: c.points.is_empty(),
        });
    }
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn bx(cx: f64) -> Box3D {
        Box3D::new([cx, 0.0, 0.0], [2.0, 2.0, 2.0], 0.0).unwrap()
    }

    #[test]
    fn empty_cloud_file() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("e.bin");
        fs::write(&p, b"").unwrap();
        assert!(read_cloud(&p).unwrap().is_empty());
    }

    #[test]
    fn misaligned_cloud_reports_offset() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        fs::write(&p, [0u8; 17]).unwrap();
        match read_cloud(&p) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_cloud_names_point() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("nan.bin");
        let mut bytes = encode_cloud(&PointCloud::from_points(vec![Point::default(); 3]));
        bytes[2 * 16..2 * 16 + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        let err = read_cloud(&p).unwrap_err().to_string();
        assert!(err.contains("point 2"), "{err}");
    }

    #[test]
    fn header_only_scene_file() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let scene = Scene::new("s0", PointCloud::new(), vec![]);
        write_scene(&scene, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back = read_scene(&p, &CategorySet::kitti()).unwrap();
        assert_eq!(back.scene, scene);
        assert!(back.warnings.is_empty());
    }

    #[test]
    fn score_out_of_range_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        fs::write(dir.path().join("s.bin"), b"").unwrap();
        fs::write(
            &p,
            "{\"scene_id\":\"x\",\"cloud\":\"s.bin\"}\n{\"category\":\"Car\",\"box\":[0,0,0,1,1,1,0],\"score\":1.2}\n",
        )
        .unwrap();
        assert!(matches!(read_scene(&p, &CategorySet::kitti()), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_category_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        fs::write(dir.path().join("s.bin"), b"").unwrap();
        fs::write(
            &p,
            "{\"scene_id\":\"x\",\"cloud\":\"s.bin\"}\n{\"category\":\"Tram\",\"box\":[0,0,0,1,1,1,0]}\n",
        )
        .unwrap();
        assert!(matches!(read_scene(&p, &CategorySet::kitti()), Err(Error::Validation(_))));
    }

    #[test]
    fn yaw_outside_range_is_normalized_with_warning() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        fs::write(dir.path().join("s.bin"), b"").unwrap();
        fs::write(
            &p,
            "{\"scene_id\":\"x\",\"cloud\":\"s.bin\"}\n{\"category\":\"Car\",\"box\":[0,0,0,1,1,1,4.0]}\n",
        )
        .unwrap();
        let loaded = read_scene(&p, &CategorySet::kitti()).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        let yaw = loaded.scene.objects[0].bbox.yaw;
        assert!((yaw - (4.0 - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn malformed_annotation_line_is_format_error() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        fs::write(dir.path().join("s.bin"), b"").unwrap();
        let header = "{\"scene_id\":\"x\",\"cloud\":\"s.bin\"}\n";
        fs::write(&p, format!("{header}{{not json\n")).unwrap();
        match read_scene(&p, &CategorySet::kitti()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, header.len() as u64),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gt_database_counts_and_grouping() {
        let dir = tempdir().unwrap();
        let cloud: PointCloud = (0..50)
            .map(|i| Point::new(-0.9 + i as f32 * 0.03, 0.0, 0.0, 0.5))
            .chain((0..7).map(|i| Point::new(30.0 + i as f32, 5.0, 0.0, 0.1)))
            .collect();
        let s0 = Scene::new(
            "a",
            cloud,
            vec![Annotation::ground_truth("Car", bx(0.0)), Annotation::ground_truth("Pedestrian", bx(-10.0))],
        );
        let s1 = Scene::new("b", PointCloud::new(), vec![Annotation::ground_truth("Car", bx(5.0))]);
        let m = build_gt_database(&[s0, s1], &CategorySet::kitti(), dir.path()).unwrap();
        assert_eq!(m.entries.len(), 3);
        let cats: Vec<_> = m.entries.iter().map(|e| e.category.as_str()).collect();
        assert_eq!(cats, ["Car", "Car", "Pedestrian"]);
        assert_eq!(m.entries[0].point_count, 50);
        assert!(m.entries[1].empty && m.entries[2].empty);
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
        assert!(!dir.path().join(LOCK_FILE).exists());
    }

    #[test]
    fn no_objects_gives_empty_manifest() {
        let dir = tempdir().unwrap();
        let m = build_gt_database(&[Scene::new("a", PointCloud::new(), vec![])], &CategorySet::kitti(), dir.path())
            .unwrap();
        assert!(m.entries.is_empty());
    }

    #[test]
    fn lock_blocks_second_writer() {
        let dir = tempdir().unwrap();
        let _held = DatabaseLock::acquire(dir.path()).unwrap();
        assert!(matches!(
            build_gt_database(&[], &CategorySet::kitti(), dir.path()),
            Err(Error::Locked(_))
        ));
    }

    #[test]
    fn manifest_detects_short_blob() {
        let dir = tempdir().unwrap();
        let s = Scene::new(
            "a",
            PointCloud::from_points(vec![Point::new(0.0, 0.0, 0.0, 0.0); 4]),
            vec![Annotation::ground_truth("Car", bx(0.0))],
        );
        let m = build_gt_database(&[s], &CategorySet::kitti(), dir.path()).unwrap();
        fs::write(blob_path(dir.path(), &m.entries[0].blob), [0u8; 16]).unwrap();
        assert!(matches!(read_manifest(dir.path()), Err(Error::Validation(_))));
    }
}
