//! Seeded synthetic scenarios and an exhaustive matching oracle.
//!
//! All randomness comes from ChaCha8 seeded through `seed_from_u64`, so a
//! spec and seed reproduce the same series on every platform.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, Polygon, RawPolygon};
use crate::matching::{iou_key, MatchPair, MatchResult};
use crate::metric::{Footprint, Frame, TimeSeries};

/// Label of the `k`-th monthly frame, starting at `2018_01`.
pub fn month_label(k: usize) -> String {
    format!("{:04}_{:02}", 2018 + k / 12, k % 12 + 1)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn poisson(rng: &mut ChaCha8Rng, rate: f64) -> usize {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as usize
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub aoi_id: String,
    pub n_initial_buildings: usize,
    pub n_frames: usize,
    /// Expected buildings constructed per frame after the first (Poisson).
    pub construction_rate: f64,
    /// Probability that an existing building is hidden in a frame.
    pub occlusion_rate: f64,
    /// Side of the square scene, px.
    pub grid_extent: f64,
    /// Minimum gap between buildings, px.
    pub min_separation: f64,
    pub min_size: f64,
    pub max_size: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            aoi_id: "synthetic".into(),
            n_initial_buildings: 50,
            n_frames: 12,
            construction_rate: 1.0,
            occlusion_rate: 0.0,
            grid_extent: 1024.0,
            min_separation: 2.0,
            min_size: 6.0,
            max_size: 16.0,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn check(&self) -> Result<()> {
        if self.n_frames < 2 {
            return Err(Error::InvalidConfig("scenario needs at least 2 frames".into()));
        }
        check_rate("construction_rate", self.construction_rate)?;
        check_probability("occlusion_rate", self.occlusion_rate)?;
        if !(self.min_size > 0.0 && self.max_size >= self.min_size) {
            return Err(Error::InvalidConfig(format!(
                "building sizes must satisfy 0 < min_size <= max_size, got {} and {}",
                self.min_size, self.max_size
            )));
        }
        check_rate("min_separation", self.min_separation)?;
        check_rate("grid_extent", self.grid_extent)?;
        Ok(())
    }

    fn slot_size(&self) -> f64 {
        self.max_size + self.min_separation
    }

    /// Number of building slots on the placement lattice.
    pub fn capacity(&self) -> usize {
        let per_side = (self.grid_extent / self.slot_size()).floor() as usize;
        per_side * per_side
    }
}

/// What the generator did, for computing expected scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioTrace {
    /// Frame index at which each building was constructed.
    pub constructed_at: BTreeMap<String, usize>,
    /// Frame index of each building's first visible appearance.
    pub first_appearance: BTreeMap<String, usize>,
    /// `(frame index, building id)` for every hidden building.
    pub occlusions: Vec<(usize, String)>,
    /// Buildings requested by the construction process that did not fit.
    pub unplaced: usize,
}

impl ScenarioTrace {
    /// Buildings that first appear after frame 0.
    pub fn new_footprints(&self) -> usize {
        self.first_appearance.values().filter(|&&k| k > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub series: TimeSeries,
    pub trace: ScenarioTrace,
}

/// Ground truth of non-overlapping rectangles with persistent ids. Buildings
/// occupy cells of a lattice of pitch `max_size + min_separation`, which
/// guarantees the separation.
pub fn gen_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.check()?;
    let capacity = spec.capacity();
    if spec.n_initial_buildings > capacity {
        return Err(Error::InfeasiblePacking {
            requested: spec.n_initial_buildings,
            capacity,
        });
    }
    let mut rng = rng(spec.seed);
    let per_side = (spec.grid_extent / spec.slot_size()).floor() as usize;
    let mut slots: Vec<usize> = (0..capacity).collect();
    slots.shuffle(&mut rng);
    let mut slots = slots.into_iter();

    let place = |rng: &mut ChaCha8Rng, slot: usize| -> Polygon {
        let (cx, cy) = ((slot % per_side) as f64, (slot / per_side) as f64);
        let w = rng.random_range(spec.min_size..=spec.max_size);
        let h = rng.random_range(spec.min_size..=spec.max_size);
        let x = cx * spec.slot_size() + spec.min_separation / 2.0 + rng.random_range(0.0..=spec.max_size - w);
        let y = cy * spec.slot_size() + spec.min_separation / 2.0 + rng.random_range(0.0..=spec.max_size - h);
        RawPolygon::rect(x, y, x + w, y + h)
            .validate()
            .expect("positive rectangle")
    };

    let mut trace = ScenarioTrace::default();
    let mut buildings: Vec<(String, Polygon)> = Vec::new();
    for _ in 0..spec.n_initial_buildings {
        let slot = slots.next().expect("capacity checked");
        let id = format!("b{}", buildings.len());
        trace.constructed_at.insert(id.clone(), 0);
        buildings.push((id, place(&mut rng, slot)));
    }

    let mut frames = Vec::with_capacity(spec.n_frames);
    for t in 0..spec.n_frames {
        if t > 0 {
            for _ in 0..poisson(&mut rng, spec.construction_rate) {
                match slots.next() {
                    Some(slot) => {
                        let id = format!("b{}", buildings.len());
                        trace.constructed_at.insert(id.clone(), t);
                        buildings.push((id, place(&mut rng, slot)));
                    }
                    None => trace.unplaced += 1,
                }
            }
        }
        let mut footprints = Vec::with_capacity(buildings.len());
        for (id, poly) in &buildings {
            if spec.occlusion_rate > 0.0 && rng.random_bool(spec.occlusion_rate) {
                trace.occlusions.push((t, id.clone()));
                continue;
            }
            trace.first_appearance.entry(id.clone()).or_insert(t);
            footprints.push(Footprint::new(id.clone(), poly.clone()));
        }
        frames.push(Frame::new(month_label(t), footprints));
    }
    Ok(Scenario {
        series: TimeSeries::new(spec.aoi_id.clone(), frames)?,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    /// Each vertex coordinate moves by up to this many px.
    pub jitter_px: f64,
    /// Probability that a ground-truth footprint is not proposed.
    pub drop_rate: f64,
    /// Expected false footprints per frame (Poisson).
    pub spurious_rate: f64,
    /// Probability that a previously proposed building gets a fresh id.
    pub id_swap_rate: f64,
    /// Frames before a newly constructed building is first proposed.
    pub delay_frames: usize,
    /// Scene side used to place spurious footprints, px.
    pub extent: f64,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            jitter_px: 0.0,
            drop_rate: 0.0,
            spurious_rate: 0.0,
            id_swap_rate: 0.0,
            delay_frames: 0,
            extent: 1024.0,
            seed: 0,
        }
    }
}

impl PerturbationSpec {
    pub fn check(&self) -> Result<()> {
        check_rate("jitter_px", self.jitter_px)?;
        check_probability("drop_rate", self.drop_rate)?;
        check_rate("spurious_rate", self.spurious_rate)?;
        check_probability("id_swap_rate", self.id_swap_rate)?;
        check_rate("extent", self.extent)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapEvent {
    pub frame: String,
    pub gt_id: String,
    pub old_id: String,
    pub new_id: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerturbationLog {
    pub swaps: Vec<SwapEvent>,
    /// `(frame label, gt id)` of dropped footprints.
    pub drops: Vec<(String, String)>,
    /// `(frame label, gt id)` of footprints withheld by the detection delay.
    pub delayed: Vec<(String, String)>,
    pub spurious: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub series: TimeSeries,
    pub log: PerturbationLog,
}

fn jitter(rng: &mut ChaCha8Rng, poly: &Polygon, amount: f64) -> Polygon {
    if amount == 0.0 {
        return poly.clone();
    }
    let mut raw = poly.to_raw();
    for p in raw.exterior.iter_mut().chain(raw.holes.iter_mut().flatten()) {
        p[0] += rng.random_range(-amount..=amount);
        p[1] += rng.random_range(-amount..=amount);
    }
    raw.validate().unwrap_or_else(|_| poly.clone())
}

/// Proposal series derived from `gt` under the noise model in `spec`.
/// Proposal ids are a fresh bijection of ground-truth ids (`p0`, `p1`, ...
/// in order of first proposal); every swap is logged.
pub fn perturb(gt: &TimeSeries, spec: &PerturbationSpec) -> Result<Perturbed> {
    spec.check()?;
    let mut rng = rng(spec.seed);
    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    for (t, frame) in gt.frames.iter().enumerate() {
        for id in frame.ids() {
            first_seen.entry(id).or_insert(t);
        }
    }

    let mut log = PerturbationLog::default();
    let mut prop_id: HashMap<&str, String> = HashMap::new();
    let mut emitted: HashSet<&str> = HashSet::new();
    let mut counter = 0usize;
    let mut frames = Vec::with_capacity(gt.frames.len());
    for (t, frame) in gt.frames.iter().enumerate() {
        let mut footprints = Vec::with_capacity(frame.footprints.len());
        for fp in &frame.footprints {
            let gid = fp.id.as_str();
            let born = first_seen[gid];
            if born > 0 && t < born + spec.delay_frames {
                log.delayed.push((frame.label.clone(), fp.id.clone()));
                continue;
            }
            if spec.drop_rate > 0.0 && rng.random_bool(spec.drop_rate) {
                log.drops.push((frame.label.clone(), fp.id.clone()));
                continue;
            }
            if !prop_id.contains_key(gid) {
                prop_id.insert(gid, format!("p{counter}"));
                counter += 1;
            } else if emitted.contains(gid) && spec.id_swap_rate > 0.0 && rng.random_bool(spec.id_swap_rate) {
                let new_id = format!("p{counter}");
                counter += 1;
                let old_id = prop_id.insert(gid, new_id.clone()).expect("present");
                log.swaps.push(SwapEvent {
                    frame: frame.label.clone(),
                    gt_id: fp.id.clone(),
                    old_id,
                    new_id,
                });
            }
            emitted.insert(gid);
            footprints.push(Footprint::new(
                prop_id[gid].clone(),
                jitter(&mut rng, &fp.polygon, spec.jitter_px),
            ));
        }
        for _ in 0..poisson(&mut rng, spec.spurious_rate) {
            let s = rng.random_range(4.0..=16.0);
            let x = rng.random_range(0.0..=(spec.extent - s).max(0.0));
            let y = rng.random_range(0.0..=(spec.extent - s).max(0.0));
            let poly = RawPolygon::rect(x, y, x + s, y + s)
                .validate()
                .expect("positive rectangle");
            footprints.push(Footprint::new(format!("s{}", log.spurious), poly));
            log.spurious += 1;
        }
        frames.push(Frame::new(frame.label.clone(), footprints));
    }
    Ok(Perturbed {
        series: TimeSeries::new(gt.aoi_id.clone(), frames)?,
        log,
    })
}

/// Proposals that never change: the first ground-truth frame repeated at
/// every label with fixed ids.
pub fn static_proposals(gt: &TimeSeries) -> TimeSeries {
    let first: Vec<Footprint> = gt
        .frames
        .first()
        .map(|f| {
            f.footprints
                .iter()
                .enumerate()
                .map(|(i, fp)| Footprint::new(format!("static{i}"), fp.polygon.clone()))
                .collect()
        })
        .unwrap_or_default();
    TimeSeries {
        aoi_id: gt.aoi_id.clone(),
        frames: gt
            .frames
            .iter()
            .map(|f| Frame::new(f.label.clone(), first.clone()))
            .collect(),
    }
}

/// Four buildings in a row over five monthly frames. `A` and `B` exist from
/// the start, `C` is built in frame 1 and `D` in frame 2; `A` is hidden in
/// frame 1 and `C` in frame 3. Proposals reproduce the geometry exactly and
/// give `B` a fresh id from frame 2 on.
pub fn four_building_scenario() -> (TimeSeries, TimeSeries) {
    let building = |slot: usize| {
        let x = 4.0 + 20.0 * slot as f64;
        RawPolygon::rect(x, 4.0, x + 12.0, 16.0).validate().expect("rectangle")
    };
    let gt_frames: [&[usize]; 5] = [&[0, 1], &[1, 2], &[0, 1, 2, 3], &[0, 1, 3], &[0, 1, 2, 3]];
    let names = ["A", "B", "C", "D"];
    let mut gt = Vec::new();
    let mut props = Vec::new();
    for (t, present) in gt_frames.iter().enumerate() {
        let label = month_label(t);
        gt.push(Frame::new(
            label.clone(),
            present.iter().map(|&s| Footprint::new(names[s], building(s))).collect(),
        ));
        props.push(Frame::new(
            label,
            present
                .iter()
                .map(|&s| {
                    let id = if s == 1 && t >= 2 {
                        "b2".to_string()
                    } else {
                        names[s].to_lowercase()
                    };
                    Footprint::new(id, building(s))
                })
                .collect(),
        ));
    }
    (
        TimeSeries::new("four_buildings", gt).expect("valid fixture"),
        TimeSeries::new("four_buildings", props).expect("valid fixture"),
    )
}

/// Largest smaller side accepted by [`brute_force_match`].
pub const BRUTE_FORCE_LIMIT: usize = 10;

/// Exhaustive counterpart of [`crate::matching::match_frame`]: enumerates
/// every one-to-one matching over pairs with `iou >= threshold` and keeps
/// the best by cardinality, then summed IOU, then smallest pair list.
pub fn brute_force_match<G, P>(gt: &[G], props: &[P], threshold: f64) -> Result<MatchResult>
where
    G: AsRef<Polygon>,
    P: AsRef<Polygon>,
{
    let smaller = gt.len().min(props.len());
    if smaller > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            got: smaller,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let options: Vec<Vec<(usize, f64)>> = gt
        .iter()
        .map(|g| {
            props
                .iter()
                .enumerate()
                .map(|(j, p)| (j, iou(g.as_ref(), p.as_ref())))
                .filter(|&(_, v)| v >= threshold)
                .collect()
        })
        .collect();

    struct Search<'a> {
        options: &'a [Vec<(usize, f64)>],
        used: Vec<bool>,
        current: Vec<MatchPair>,
        best: Vec<MatchPair>,
        best_key: (usize, u128),
    }

    impl Search<'_> {
        fn better(&self, key: (usize, u128)) -> bool {
            if key != self.best_key {
                return key > self.best_key;
            }
            let a = self.current.iter().map(|p| (p.gt, p.prop));
            let b = self.best.iter().map(|p| (p.gt, p.prop));
            a.lt(b)
        }

        fn run(&mut self, i: usize) {
            if i == self.options.len() {
                let key = (
                    self.current.len(),
                    self.current.iter().map(|p| iou_key(p.iou) as u128).sum(),
                );
                if self.better(key) {
                    self.best = self.current.clone();
                    self.best_key = key;
                }
                return;
            }
            for k in 0..self.options[i].len() {
                let (j, v) = self.options[i][k];
                if self.used[j] {
                    continue;
                }
                self.used[j] = true;
                self.current.push(MatchPair { gt: i, prop: j, iou: v });
                self.run(i + 1);
                self.current.pop();
                self.used[j] = false;
            }
            self.run(i + 1);
        }
    }

    let mut search = Search {
        options: &options,
        used: vec![false; props.len()],
        current: Vec::new(),
        best: Vec::new(),
        best_key: (0, 0),
    };
    search.run(0);
    Ok(MatchResult::from_pairs(gt.len(), props.len(), search.best))
}
