//! Pseudo-label quality against ground truth: greedy IoU matching, IoU
//! histograms, threshold sweeps, and confidence/IoU scatter export.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, iou_3d, Box3D};
use crate::scene_io::Annotation;

/// Bin edges for the default quality histogram: `[0, .6)`, `[.6, .8)`, `[.8, 1]`.
pub const DEFAULT_BINS: [f64; 4] = [0.0, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IouKind {
    #[default]
    Bev,
    #[serde(rename = "3d")]
    ThreeD,
}

impl IouKind {
    pub fn iou(self, a: &Box3D, b: &Box3D) -> f64 {
        match self {
            IouKind::Bev => bev_iou(a, b),
            IouKind::ThreeD => iou_3d(a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreField {
    Confidence,
    EstimatedIou,
}

impl ScoreField {
    pub fn get(self, a: &Annotation) -> Option<f64> {
        match self {
            ScoreField::Confidence => a.score,
            ScoreField::EstimatedIou => a.estimated_iou,
        }
    }
}

impl std::str::FromStr for ScoreField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "confidence" => Ok(ScoreField::Confidence),
            "estimated-iou" => Ok(ScoreField::EstimatedIou),
            other => Err(Error::Config(format!("unknown score field {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoMatch {
    pub category: String,
    /// Index into the ground-truth list, if matched.
    pub gt: Option<usize>,
    /// IoU with the matched ground truth; 0 when unmatched.
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// One record per pseudo-label, in input order.
    pub matches: Vec<PseudoMatch>,
}

impl MatchResult {
    pub fn matched(&self) -> impl Iterator<Item = &PseudoMatch> {
        self.matches.iter().filter(|m| m.gt.is_some())
    }

    pub fn mean_iou(&self) -> Option<f64> {
        if self.matches.is_empty() {
            None
        } else {
            Some(self.matches.iter().map(|m| m.iou).sum::<f64>() / self.matches.len() as f64)
        }
    }
}

/// Greedy one-to-one matching within each category: repeatedly pair the
/// highest-IoU unmatched (pseudo, gt) couple whose IoU is positive.
/// Ties break on the lower pseudo index, then the lower gt index.
pub fn greedy_match(pseudo: &[Annotation], gt: &[Annotation], kind: IouKind) -> MatchResult {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pseudo.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            if p.category != g.category {
                continue;
            }
            let iou = kind.iou(&p.bbox, &g.bbox);
            if iou > 0.0 {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut matches: Vec<PseudoMatch> = pseudo
        .iter()
        .map(|p| PseudoMatch {
            category: p.category.clone(),
            gt: None,
            iou: 0.0,
        })
        .collect();
    let mut gt_used = vec![false; gt.len()];
    for (iou, i, j) in pairs {
        if matches[i].gt.is_none() && !gt_used[j] {
            matches[i].gt = Some(j);
            matches[i].iou = iou;
            gt_used[j] = true;
        }
    }
    MatchResult { matches }
}

/// Per-category counts over IoU bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouHistogram {
    pub edges: Vec<f64>,
    pub counts: BTreeMap<String, Vec<u64>>,
}

impl IouHistogram {
    pub fn new(edges: &[f64]) -> Self {
        Self {
            edges: edges.to_vec(),
            counts: BTreeMap::new(),
        }
    }

    pub fn bins(&self) -> usize {
        self.edges.len().saturating_sub(1)
    }

    /// Bin of an IoU value; the top bin is closed, everything below the first edge goes to bin 0.
    pub fn bin_of(&self, iou: f64) -> usize {
        let n = self.bins();
        (1..n).rev().find(|&b| iou >= self.edges[b]).unwrap_or(0)
    }

    pub fn add(&mut self, category: &str, iou: f64) {
        let b = self.bin_of(iou);
        let n = self.bins();
        self.counts.entry(category.to_string()).or_insert_with(|| vec![0; n])[b] += 1;
    }

    /// Counts summed over categories.
    pub fn totals(&self) -> Vec<u64> {
        let mut t = vec![0; self.bins()];
        for c in self.counts.values() {
            for (a, b) in t.iter_mut().zip(c) {
                *a += b;
            }
        }
        t
    }

    pub fn total(&self) -> u64 {
        self.totals().iter().sum()
    }
}

pub fn histogram(matches: &MatchResult, edges: &[f64]) -> IouHistogram {
    let mut h = IouHistogram::new(edges);
    for m in &matches.matches {
        h.add(&m.category, m.iou);
    }
    h
}

/// Predictions and ground truth of one scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneLabels {
    pub pseudo: Vec<Annotation>,
    pub gt: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRow {
    pub threshold: f64,
    pub kept: usize,
    pub histogram: IouHistogram,
    /// Mean IoU of the kept pseudo-labels (unmatched count as 0); absent when nothing is kept.
    pub mean_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub score_field: ScoreField,
    pub iou: IouKind,
    pub rows: Vec<FilterRow>,
}

/// For each threshold, keeps pseudo-labels whose score is at least the
/// threshold, matches them against their scene's ground truth, and bins them.
pub fn filter_report(
    scenes: &[SceneLabels],
    thresholds: &[f64],
    field: ScoreField,
    kind: IouKind,
) -> Result<FilterReport> {
    for (s, labels) in scenes.iter().enumerate() {
        for (i, p) in labels.pseudo.iter().enumerate() {
            if field.get(p).is_none() {
                return Err(Error::Validation(format!(
                    "scene {s} pseudo-label {i} has no {field:?} score"
                )));
            }
        }
    }
    let rows = thresholds
        .iter()
        .map(|&tau| {
            let mut hist = IouHistogram::new(&DEFAULT_BINS);
            let mut kept = 0;
            let mut iou_sum = 0.0;
            for labels in scenes {
                let kept_labels: Vec<Annotation> = labels
                    .pseudo
                    .iter()
                    .filter(|p| field.get(p).is_some_and(|s| s >= tau))
                    .cloned()
                    .collect();
                let m = greedy_match(&kept_labels, &labels.gt, kind);
                kept += kept_labels.len();
                for pm in &m.matches {
                    hist.add(&pm.category, pm.iou);
                    iou_sum += pm.iou;
                }
            }
            FilterRow {
                threshold: tau,
                kept,
                histogram: hist,
                mean_iou: (kept > 0).then(|| iou_sum / kept as f64),
            }
        })
        .collect();
    Ok(FilterReport {
        score_field: field,
        iou: kind,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub category: String,
    pub confidence: f64,
    pub iou: f64,
}

/// One row per pseudo-label: its confidence and matched IoU.
pub fn scatter_rows(scenes: &[SceneLabels], kind: IouKind) -> Result<Vec<ScatterRow>> {
    let mut rows = Vec::new();
    for (s, labels) in scenes.iter().enumerate() {
        let m = greedy_match(&labels.pseudo, &labels.gt, kind);
        for (i, (p, pm)) in labels.pseudo.iter().zip(&m.matches).enumerate() {
            let confidence = p.score.ok_or_else(|| {
                Error::Validation(format!("scene {s} pseudo-label {i} has no confidence"))
            })?;
            rows.push(ScatterRow {
                category: p.category.clone(),
                confidence,
                iou: pm.iou,
            });
        }
    }
    Ok(rows)
}

pub fn write_scatter_csv<W: std::io::Write>(rows: &[ScatterRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["category", "confidence", "iou"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Writes the confidence-vs-IoU CSV (`category,confidence,iou`).
pub fn scatter_export(scenes: &[SceneLabels], path: impl AsRef<Path>, kind: IouKind) -> Result<usize> {
    let path = path.as_ref();
    let rows = scatter_rows(scenes, kind)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_scatter_csv(&rows, std::io::BufWriter::new(file))?;
    Ok(rows.len())
}

pub fn read_scatter(path: impl AsRef<Path>) -> Result<Vec<ScatterRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(cat: &str, cx: f64, cy: f64, score: Option<f64>) -> Annotation {
        Annotation {
            category: cat.into(),
            bbox: Box3D::new([cx, cy, 0.0], [2.0, 2.0, 2.0], 0.0).unwrap(),
            score,
            estimated_iou: None,
        }
    }

    #[test]
    fn identical_lists_match_perfectly() {
        let gt = vec![ann("Car", 0.0, 0.0, None), ann("Car", 10.0, 0.0, None), ann("Cyclist", 0.0, 9.0, None)];
        let m = greedy_match(&gt, &gt, IouKind::Bev);
        for (i, pm) in m.matches.iter().enumerate() {
            assert_eq!(pm.gt, Some(i));
            assert_eq!(pm.iou, 1.0);
        }
    }

    #[test]
    fn disjoint_boxes_unmatched() {
        let p = vec![ann("Car", 0.0, 0.0, Some(0.9))];
        let g = vec![ann("Car", 50.0, 0.0, None)];
        let m = greedy_match(&p, &g, IouKind::Bev);
        assert_eq!(m.matches[0].gt, None);
        assert_eq!(m.matches[0].iou, 0.0);
    }

    #[test]
    fn categories_never_cross_match() {
        let p = vec![ann("Pedestrian", 0.0, 0.0, Some(0.9))];
        let g = vec![ann("Car", 0.0, 0.0, None)];
        assert_eq!(greedy_match(&p, &g, IouKind::Bev).matches[0].gt, None);
    }

    #[test]
    fn greedy_takes_best_pair_first() {
        // p0 overlaps g0 a lot; p1 overlaps g0 slightly more than g1.
        let g = vec![ann("Car", 0.0, 0.0, None), ann("Car", 1.6, 0.0, None)];
        let p = vec![ann("Car", 0.1, 0.0, Some(0.5)), ann("Car", 0.7, 0.0, Some(0.5))];
        let m = greedy_match(&p, &g, IouKind::Bev);
        assert_eq!(m.matches[0].gt, Some(0));
        assert_eq!(m.matches[1].gt, Some(1));
    }

    #[test]
    fn histogram_bins() {
        let h = IouHistogram::new(&DEFAULT_BINS);
        assert_eq!(h.bin_of(0.0), 0);
        assert_eq!(h.bin_of(0.59), 0);
        assert_eq!(h.bin_of(0.6), 1);
        assert_eq!(h.bin_of(0.8), 2);
        assert_eq!(h.bin_of(1.0), 2);

        let all_one = MatchResult {
            matches: vec![
                PseudoMatch {
                    category: "Car".into(),
                    gt: Some(0),
                    iou: 1.0
                };
                3
            ],
        };
        assert_eq!(histogram(&all_one, &DEFAULT_BINS).totals(), vec![0, 0, 3]);
        assert_eq!(histogram(&MatchResult::default(), &DEFAULT_BINS).totals(), vec![0, 0, 0]);
    }

    #[test]
    fn filter_extremes() {
        let gt = vec![ann("Car", 0.0, 0.0, None)];
        let scenes = vec![SceneLabels {
            pseudo: vec![ann("Car", 0.0, 0.0, Some(0.3)), ann("Car", 20.0, 0.0, Some(0.95))],
            gt,
        }];
        let r = filter_report(&scenes, &[0.0, 1.0 + 1e-9], ScoreField::Confidence, IouKind::Bev).unwrap();
        assert_eq!(r.rows[0].kept, 2);
        assert_eq!(r.rows[0].histogram.totals(), vec![1, 0, 1]);
        assert_eq!(r.rows[0].mean_iou, Some(0.5));
        assert_eq!(r.rows[1].kept, 0);
        assert_eq!(r.rows[1].mean_iou, None);
    }

    #[test]
    fn filter_requires_selected_score() {
        let scenes = vec![SceneLabels {
            pseudo: vec![ann("Car", 0.0, 0.0, Some(0.3))],
            gt: vec![],
        }];
        assert!(filter_report(&scenes, &[0.5], ScoreField::EstimatedIou, IouKind::Bev).is_err());
    }

    #[test]
    fn scatter_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scatter.csv");
        assert_eq!(scatter_export(&[], &path, IouKind::Bev).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "category,confidence,iou\n");

        let g = ann("Car", 0.0, 0.0, None);
        let mut p = g.clone();
        p.score = Some(0.9);
        let scenes = vec![SceneLabels { pseudo: vec![p], gt: vec![g] }];
        scatter_export(&scenes, &path, IouKind::Bev).unwrap();
        let rows = read_scatter(&path).unwrap();
        assert_eq!(
            rows,
            vec![ScatterRow {
                category: "Car".into(),
                confidence: 0.9,
                iou: 1.0
            }]
        );
    }
}
