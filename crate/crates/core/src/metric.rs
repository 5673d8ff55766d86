//! Temporal bookkeeping and the tracking/change scores.
//!
//! Each aligned frame pair is matched independently; the matches are then
//! walked in time order. The tracking term penalizes identifier mismatches
//! (a match whose ground-truth id was most recently matched to a different
//! proposal id, or vice versa). The change term keeps only footprints whose
//! id makes its first appearance in its own series after the earliest frame.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polygon;
use crate::matching::{match_frame, MatchResult, DEFAULT_IOU_THRESHOLD};

/// One building outline at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    pub id: String,
    pub polygon: Polygon,
}

impl Footprint {
    pub fn new(id: impl Into<String>, polygon: Polygon) -> Self {
        Footprint { id: id.into(), polygon }
    }
}

impl AsRef<Polygon> for Footprint {
    fn as_ref(&self) -> &Polygon {
        &self.polygon
    }
}

/// All footprints of one area of interest at one timestep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    /// Sortable timestep token, canonically `YYYY_MM`.
    pub label: String,
    pub footprints: Vec<Footprint>,
    /// Unusable-data polygons (clouds, registration errors).
    pub udm: Vec<Polygon>,
}

impl Frame {
    pub fn new(label: impl Into<String>, footprints: Vec<Footprint>) -> Self {
        Frame {
            label: label.into(),
            footprints,
            udm: Vec::new(),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.footprints.iter().map(|f| f.id.as_str())
    }
}

/// Ordered frames of one area of interest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeries {
    pub aoi_id: String,
    pub frames: Vec<Frame>,
}

impl TimeSeries {
    /// Sorts frames by label and checks label and per-frame id uniqueness.
    pub fn new(aoi_id: impl Into<String>, mut frames: Vec<Frame>) -> Result<Self> {
        frames.sort_by(|a, b| a.label.cmp(&b.label));
        let series = TimeSeries {
            aoi_id: aoi_id.into(),
            frames,
        };
        series.check()?;
        Ok(series)
    }

    pub fn check(&self) -> Result<()> {
        for w in self.frames.windows(2) {
            if w[0].label >= w[1].label {
                return Err(Error::InvalidConfig(format!(
                    "series {:?}: frame labels must be unique and increasing ({:?} then {:?})",
                    self.aoi_id, w[0].label, w[1].label
                )));
            }
        }
        for frame in &self.frames {
            let mut seen = HashSet::new();
            for id in frame.ids() {
                if !seen.insert(id) {
                    return Err(Error::DuplicateId {
                        label: frame.label.clone(),
                        id: id.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn frame(&self, label: &str) -> Option<&Frame> {
        self.frames
            .binary_search_by(|f| f.label.as_str().cmp(label))
            .ok()
            .map(|i| &self.frames[i])
    }

    pub fn footprint_count(&self) -> usize {
        self.frames.iter().map(|f| f.footprints.len()).sum()
    }

    /// Applies `f` to every footprint id in every frame.
    pub fn map_ids(&self, mut f: impl FnMut(&str) -> String) -> TimeSeries {
        let mut out = self.clone();
        for frame in &mut out.frames {
            for fp in &mut frame.footprints {
                fp.id = f(&fp.id);
            }
        }
        out
    }
}

/// Match tallies over one area of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub mm: u64,
    pub tp_new: u64,
    pub fp_new: u64,
    pub fn_new: u64,
}

impl MatchCounts {
    /// Ground-truth footprints scored (matched or missed).
    pub fn total_gt(&self) -> u64 {
        self.tp + self.fn_
    }
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.mm += o.mm;
        self.tp_new += o.tp_new;
        self.fp_new += o.fp_new;
        self.fn_new += o.fn_new;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScotConfig {
    pub beta: f64,
    pub iou_threshold: f64,
    /// Footprints smaller than this (px²) are not scored.
    pub min_area: f64,
}

impl Default for ScotConfig {
    fn default() -> Self {
        ScotConfig {
            beta: 2.0,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            min_area: 4.0,
        }
    }
}

impl ScotConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "iou threshold must lie in (0, 1), got {}",
                self.iou_threshold
            )));
        }
        if !(self.min_area.is_finite() && self.min_area >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "min area must be non-negative, got {}",
                self.min_area
            )));
        }
        Ok(())
    }
}

/// Pairs every ground-truth frame with the proposal frame of the same label.
/// Ground-truth frames without proposals are scored against an empty frame;
/// proposal frames without ground truth are an error.
pub fn align<'a>(gt: &'a TimeSeries, props: &'a TimeSeries) -> Result<Vec<(&'a Frame, Option<&'a Frame>)>> {
    if let Some(orphan) = props.frames.iter().find(|p| gt.frame(&p.label).is_none()) {
        return Err(Error::MisalignedSeries {
            label: orphan.label.clone(),
        });
    }
    Ok(gt.frames.iter().map(|g| (g, props.frame(&g.label))).collect())
}

/// Matches every aligned frame pair. Frames are independent, so this runs in
/// parallel.
pub fn match_series(gt: &TimeSeries, props: &TimeSeries, cfg: &ScotConfig) -> Result<Vec<MatchResult>> {
    let aligned = align(gt, props)?;
    Ok(aligned
        .par_iter()
        .map(|(g, p)| {
            let empty: &[Footprint] = &[];
            let props = p.map_or(empty, |p| p.footprints.as_slice());
            match_frame(&g.footprints, props, cfg.iou_threshold)
        })
        .collect())
}

/// Counts tp/fp/fn and identifier mismatches over the series.
pub fn track_bookkeeping(
    gt: &TimeSeries,
    props: &TimeSeries,
    cfg: &ScotConfig,
) -> Result<(Vec<MatchResult>, MatchCounts)> {
    let matches = match_series(gt, props, cfg)?;
    let counts = count_tracking(gt, props, &matches)?;
    Ok((matches, counts))
}

fn count_tracking(gt: &TimeSeries, props: &TimeSeries, matches: &[MatchResult]) -> Result<MatchCounts> {
    let aligned = align(gt, props)?;
    let mut last_prop_of_gt: HashMap<&str, &str> = HashMap::new();
    let mut last_gt_of_prop: HashMap<&str, &str> = HashMap::new();
    let mut counts = MatchCounts::default();
    for ((g, p), m) in aligned.iter().zip(matches) {
        counts.fn_ += m.unmatched_gt.len() as u64;
        counts.fp += m.unmatched_prop.len() as u64;
        let Some(p) = p else {
            continue;
        };
        for pair in &m.pairs {
            let gid = g.footprints[pair.gt].id.as_str();
            let pid = p.footprints[pair.prop].id.as_str();
            counts.tp += 1;
            let gt_moved = last_prop_of_gt.get(gid).is_some_and(|&prev| prev != pid);
            let prop_moved = last_gt_of_prop.get(pid).is_some_and(|&prev| prev != gid);
            if gt_moved || prop_moved {
                counts.mm += 1;
            }
            last_prop_of_gt.insert(gid, pid);
            last_gt_of_prop.insert(pid, gid);
        }
    }
    Ok(counts)
}

/// Ids whose first appearance is at each frame, excluding the first frame.
fn new_ids(series: &TimeSeries) -> HashMap<&str, HashSet<&str>> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut out = HashMap::new();
    for (k, frame) in series.frames.iter().enumerate() {
        let mut fresh = HashSet::new();
        for id in frame.ids() {
            if seen.insert(id) && k > 0 {
                fresh.insert(id);
            }
        }
        out.insert(frame.label.as_str(), fresh);
    }
    out
}

/// Fills the `*_new` counts from the per-frame matches produced by
/// [`track_bookkeeping`]. Only the new-footprint fields of the result are set.
pub fn change_bookkeeping(gt: &TimeSeries, props: &TimeSeries, matches: &[MatchResult]) -> Result<MatchCounts> {
    let aligned = align(gt, props)?;
    let gt_new = new_ids(gt);
    let prop_new = new_ids(props);
    let none = HashSet::new();
    let mut counts = MatchCounts::default();
    for ((g, p), m) in aligned.iter().zip(matches) {
        let g_fresh = &gt_new[g.label.as_str()];
        let p_fresh = p.map_or(&none, |p| &prop_new[p.label.as_str()]);
        let is_new_gt = |i: usize| g_fresh.contains(g.footprints[i].id.as_str());
        let is_new_prop = |i: usize| p.is_some_and(|p| p_fresh.contains(p.footprints[i].id.as_str()));
        for pair in &m.pairs {
            match (is_new_gt(pair.gt), is_new_prop(pair.prop)) {
                (true, true) => counts.tp_new += 1,
                (true, false) => counts.fn_new += 1,
                (false, true) => counts.fp_new += 1,
                (false, false) => {}
            }
        }
        counts.fn_new += m.unmatched_gt.iter().filter(|&&i| is_new_gt(i)).count() as u64;
        counts.fp_new += m.unmatched_prop.iter().filter(|&&i| is_new_prop(i)).count() as u64;
    }
    Ok(counts)
}

fn f_score(tp: u64, fp: u64, fn_: u64, numerator: f64) -> f64 {
    let denom = tp as f64 + 0.5 * (fp + fn_) as f64;
    if denom == 0.0 {
        1.0
    } else {
        numerator / denom
    }
}

/// `tp / (tp + (fp + fn) / 2)`; 1 when there is nothing to score.
pub fn legacy_f1(c: &MatchCounts) -> f64 {
    f_score(c.tp, c.fp, c.fn_, c.tp as f64)
}

/// `(tp - mm) / (tp + (fp + fn) / 2)`; 1 when there is nothing to score.
pub fn f_track(c: &MatchCounts) -> f64 {
    f_score(c.tp, c.fp, c.fn_, (c.tp - c.mm) as f64)
}

/// F1 over new footprints only; 1 when no new footprints exist on either side.
pub fn f_change(c: &MatchCounts) -> f64 {
    f_score(c.tp_new, c.fp_new, c.fn_new, c.tp_new as f64)
}

/// Weighted harmonic mean of the two terms; `beta > 1` favors tracking.
pub fn combine(f_track: f64, f_change: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * f_change + f_track;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * f_change * f_track / denom
    }
}

/// `1 - (fn + fp + mm) / total_gt`. Unbounded below.
pub fn mota(c: &MatchCounts, total_gt: u64) -> Result<f64> {
    if total_gt == 0 {
        return Err(Error::ZeroGroundTruth);
    }
    Ok(1.0 - (c.fn_ + c.fp + c.mm) as f64 / total_gt as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiScore {
    pub counts: MatchCounts,
    pub f1: f64,
    pub f_track: f64,
    pub f_change: f64,
    pub f_scot: f64,
    /// Absent when the ground truth holds no footprints.
    pub mota: Option<f64>,
}

/// Scores one filtered ground-truth/proposal series pair.
pub fn score_aoi(gt: &TimeSeries, props: &TimeSeries, cfg: &ScotConfig) -> Result<AoiScore> {
    cfg.check()?;
    let (matches, mut counts) = track_bookkeeping(gt, props, cfg)?;
    let new = change_bookkeeping(gt, props, &matches)?;
    counts.tp_new = new.tp_new;
    counts.fp_new = new.fp_new;
    counts.fn_new = new.fn_new;
    Ok(score_counts(counts, cfg.beta))
}

/// All scalar scores derived from accumulated counts.
pub fn score_counts(counts: MatchCounts, beta: f64) -> AoiScore {
    let ft = f_track(&counts);
    let fc = f_change(&counts);
    AoiScore {
        counts,
        f1: legacy_f1(&counts),
        f_track: ft,
        f_change: fc,
        f_scot: combine(ft, fc, beta),
        mota: mota(&counts, counts.total_gt()).ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_aoi: usize,
    pub f1: Stat,
    pub f_track: Stat,
    pub f_change: Stat,
    pub f_scot: Stat,
    /// Over the AOIs where MOTA is defined.
    pub mota: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub config: ScotConfig,
    pub per_aoi: BTreeMap<String, AoiScore>,
    pub dataset: DatasetSummary,
}

impl ScoreReport {
    pub fn from_scores(config: ScotConfig, per_aoi: BTreeMap<String, AoiScore>) -> Result<Self> {
        if per_aoi.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let col = |f: fn(&AoiScore) -> f64| per_aoi.values().map(f).collect::<Vec<_>>();
        let stat = |f: fn(&AoiScore) -> f64| Stat::of(&col(f)).expect("non-empty");
        let motas: Vec<f64> = per_aoi.values().filter_map(|s| s.mota).collect();
        let dataset = DatasetSummary {
            n_aoi: per_aoi.len(),
            f1: stat(|s| s.f1),
            f_track: stat(|s| s.f_track),
            f_change: stat(|s| s.f_change),
            f_scot: stat(|s| s.f_scot),
            mota: Stat::of(&motas),
        };
        Ok(ScoreReport {
            config,
            per_aoi,
            dataset,
        })
    }
}

/// Scores every AOI (in parallel) and aggregates with unweighted means.
pub fn score_dataset(aois: &[(TimeSeries, TimeSeries)], cfg: &ScotConfig) -> Result<ScoreReport> {
    if aois.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.check()?;
    let scored: Vec<(String, AoiScore)> = aois
        .par_iter()
        .map(|(gt, props)| Ok((gt.aoi_id.clone(), score_aoi(gt, props, cfg)?)))
        .collect::<Result<_>>()?;
    let mut per_aoi = BTreeMap::new();
    for (id, score) in scored {
        if per_aoi.insert(id.clone(), score).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate AOI id {id:?}")));
        }
    }
    ScoreReport::from_scores(*cfg, per_aoi)
}
