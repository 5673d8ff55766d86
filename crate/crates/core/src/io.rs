//! On-disk formats: GeoJSON footprint series, UDM siblings, raster masks,
//! JSON score reports, and the filters applied before scoring.
//!
//! A series is a directory holding one feature collection per timestep. The
//! timestep label is the first `YYYY_MM` token in the file name; files whose
//! stem contains `UDM` hold the unusable-data polygons for that label.
//! Coordinates are planar pixel units.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use log::warn;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{intersection_area, Point, Polygon, RawPolygon};
use crate::metric::{score_dataset, Footprint, Frame, ScoreReport, ScotConfig, TimeSeries};
use crate::synth::{gen_scenario, perturb, PerturbationLog, PerturbationSpec, ScenarioSpec, ScenarioTrace};
use crate::tracker::{polygonize_mask, track_series, BinaryMask, TrackerConfig};

pub const DEFAULT_ID_PROPERTY: &str = "id";

fn label_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\d{4}_\d{2})").expect("valid regex"))
}

/// Timestep label embedded in a file name, if any.
pub fn label_of(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    label_regex().find(stem).map(|m| m.as_str().to_string())
}

fn is_udm(path: &Path) -> bool {
    path.file_stem()
        .and_then(|s| s.to_str())
        .is_some_and(|s| s.to_ascii_uppercase().contains("UDM"))
}

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        out.push(entry.map_err(io_err(dir))?.path());
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub id_property: String,
    /// When false, features without an id get their index as id.
    pub require_ids: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            id_property: DEFAULT_ID_PROPERTY.into(),
            require_ids: true,
        }
    }
}

fn parse_ring(v: &Value) -> Option<Vec<Point>> {
    v.as_array()?
        .iter()
        .map(|p| {
            let c = p.as_array()?;
            if c.len() < 2 {
                return None;
            }
            Some([c[0].as_f64()?, c[1].as_f64()?])
        })
        .collect()
}

fn parse_polygon_coords(v: &Value) -> std::result::Result<RawPolygon, String> {
    let rings = v.as_array().ok_or("polygon coordinates must be an array")?;
    let mut rings = rings
        .iter()
        .map(|r| parse_ring(r).ok_or_else(|| "malformed ring".to_string()));
    let exterior = rings.next().ok_or("polygon has no rings")??;
    let holes = rings.collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(RawPolygon::with_holes(exterior, holes))
}

fn parse_geometry(v: &Value) -> std::result::Result<Polygon, String> {
    let kind = v.get("type").and_then(Value::as_str).ok_or("geometry has no type")?;
    let coords = v.get("coordinates").ok_or("geometry has no coordinates")?;
    let raw = match kind {
        "Polygon" => parse_polygon_coords(coords)?,
        "MultiPolygon" => {
            let parts = coords.as_array().ok_or("multipolygon coordinates must be an array")?;
            if parts.len() != 1 {
                return Err(format!(
                    "multipolygon with {} parts; footprints are single polygons",
                    parts.len()
                ));
            }
            parse_polygon_coords(&parts[0])?
        }
        other => return Err(format!("unsupported geometry type {other:?}")),
    };
    raw.validate().map_err(|e| e.to_string())
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn features(path: &Path, doc: &Value) -> Result<Vec<Value>> {
    match doc.get("features").and_then(Value::as_array) {
        Some(f) => Ok(f.clone()),
        None => Err(Error::InvalidGeometry {
            path: path.to_path_buf(),
            index: 0,
            reason: "not a feature collection".into(),
        }),
    }
}

/// Reads one footprint feature collection.
pub fn read_footprints(path: &Path, opts: &LoadOptions) -> Result<Vec<Footprint>> {
    let doc = read_json(path)?;
    features(path, &doc)?
        .iter()
        .enumerate()
        .map(|(index, feat)| {
            let id = feat
                .get("properties")
                .and_then(|p| p.get(&opts.id_property))
                .and_then(id_string);
            let id = match (id, opts.require_ids) {
                (Some(id), _) => id,
                (None, false) => index.to_string(),
                (None, true) => {
                    return Err(Error::MissingId {
                        path: path.to_path_buf(),
                        index,
                        property: opts.id_property.clone(),
                    })
                }
            };
            let geometry = feat.get("geometry").unwrap_or(&Value::Null);
            let polygon = parse_geometry(geometry).map_err(|reason| Error::InvalidGeometry {
                path: path.to_path_buf(),
                index,
                reason,
            })?;
            Ok(Footprint::new(id, polygon))
        })
        .collect()
}

/// Reads a feature collection of unusable-data polygons.
pub fn read_udm(path: &Path) -> Result<Vec<Polygon>> {
    let doc = read_json(path)?;
    features(path, &doc)?
        .iter()
        .enumerate()
        .map(|(index, feat)| {
            parse_geometry(feat.get("geometry").unwrap_or(&Value::Null)).map_err(|reason| Error::InvalidGeometry {
                path: path.to_path_buf(),
                index,
                reason,
            })
        })
        .collect()
}

/// Label → path for footprint files and for UDM files in `dir`.
type LabelledFiles = (BTreeMap<String, PathBuf>, BTreeMap<String, PathBuf>);

fn labelled_files(dir: &Path, exts: &[&str]) -> Result<LabelledFiles> {
    let mut data = BTreeMap::new();
    let mut udm = BTreeMap::new();
    for path in list_dir(dir)? {
        if !path.is_file() || !has_extension(&path, exts) {
            continue;
        }
        let Some(label) = label_of(&path) else {
            warn!("{}: no YYYY_MM label in file name, skipped", path.display());
            continue;
        };
        let target = if is_udm(&path) { &mut udm } else { &mut data };
        if target.insert(label.clone(), path.clone()).is_some() {
            return Err(Error::DuplicateLabel { path, label });
        }
    }
    if data.is_empty() {
        return Err(Error::EmptyDirectory {
            path: dir.to_path_buf(),
        });
    }
    for (label, path) in &udm {
        if !data.contains_key(label) {
            warn!("{}: UDM without a footprint file for {label}, ignored", path.display());
        }
    }
    Ok((data, udm))
}

fn dir_name(dir: &Path) -> String {
    dir.file_name().and_then(|n| n.to_str()).unwrap_or("aoi").to_string()
}

/// Loads a directory of monthly footprint files into a series named after
/// the directory. Files are parsed in parallel.
pub fn load_series(dir: &Path, opts: &LoadOptions) -> Result<TimeSeries> {
    let (data, udm) = labelled_files(dir, &["geojson", "json"])?;
    let frames = data
        .into_par_iter()
        .map(|(label, path)| {
            let footprints = read_footprints(&path, opts)?;
            let udm = match udm.get(&label) {
                Some(p) => read_udm(p)?,
                None => Vec::new(),
            };
            Ok(Frame { label, footprints, udm })
        })
        .collect::<Result<Vec<_>>>()?;
    TimeSeries::new(dir_name(dir), frames)
}

fn ring_json(ring: &[Point]) -> Value {
    let mut pts: Vec<Value> = ring.iter().map(|p| json!([p[0], p[1]])).collect();
    if let Some(first) = pts.first().cloned() {
        pts.push(first);
    }
    Value::Array(pts)
}

fn polygon_json(p: &Polygon) -> Value {
    let rings: Vec<Value> = p.rings().map(ring_json).collect();
    json!({ "type": "Polygon", "coordinates": rings })
}

fn collection(features: Vec<Value>) -> Value {
    json!({ "type": "FeatureCollection", "features": features })
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Writes `series` as `<label>.geojson` files (plus `<label>_UDM.geojson`
/// where a frame has UDM polygons) under `dir`, creating it if needed.
pub fn write_series(series: &TimeSeries, dir: &Path, id_property: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for frame in &series.frames {
        let feats = frame
            .footprints
            .iter()
            .map(|fp| {
                let mut props = Map::new();
                props.insert(id_property.to_string(), Value::String(fp.id.clone()));
                json!({ "type": "Feature", "properties": props, "geometry": polygon_json(&fp.polygon) })
            })
            .collect();
        write_json(&dir.join(format!("{}.geojson", frame.label)), &collection(feats))?;
        if !frame.udm.is_empty() {
            let feats = frame
                .udm
                .iter()
                .map(|p| json!({ "type": "Feature", "properties": {}, "geometry": polygon_json(p) }))
                .collect();
            write_json(&dir.join(format!("{}_UDM.geojson", frame.label)), &collection(feats))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    /// Footprints below this area (px²) are dropped.
    pub min_area: f64,
    /// Footprints with more than this fraction of their area under UDM are
    /// dropped.
    pub udm_overlap_fraction: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            min_area: 4.0,
            udm_overlap_fraction: 0.5,
        }
    }
}

/// Area of `p` covered by `udm`. UDM polygons of one frame are treated as
/// disjoint.
fn udm_covered(p: &Polygon, udm: &[Polygon]) -> f64 {
    udm.iter().map(|u| intersection_area(p, u)).sum::<f64>().min(p.area())
}

/// Drops small footprints and footprints mostly under the UDM of the
/// same-label frame in `udm_source` (normally the ground truth).
pub fn apply_filters(series: &TimeSeries, udm_source: &TimeSeries, policy: &FilterPolicy) -> TimeSeries {
    let frames = series
        .frames
        .par_iter()
        .map(|frame| {
            let udm = udm_source.frame(&frame.label).map_or(&[][..], |f| f.udm.as_slice());
            let footprints = frame
                .footprints
                .iter()
                .filter(|fp| {
                    let area = fp.polygon.area();
                    area >= policy.min_area && udm_covered(&fp.polygon, udm) <= policy.udm_overlap_fraction * area
                })
                .cloned()
                .collect();
            Frame {
                label: frame.label.clone(),
                footprints,
                udm: frame.udm.clone(),
            }
        })
        .collect();
    TimeSeries {
        aoi_id: series.aoi_id.clone(),
        frames,
    }
}

/// Filters both series with the ground truth's UDMs.
pub fn filter_pair(gt: &TimeSeries, props: &TimeSeries, policy: &FilterPolicy) -> (TimeSeries, TimeSeries) {
    if props.frames.iter().any(|f| !f.udm.is_empty()) {
        warn!(
            "series {:?}: proposal UDM files are ignored; ground-truth UDMs apply",
            props.aoi_id
        );
    }
    (apply_filters(gt, gt, policy), apply_filters(props, gt, policy))
}

fn has_series_files(dir: &Path) -> Result<bool> {
    Ok(list_dir(dir)?
        .iter()
        .any(|p| p.is_file() && has_extension(p, &["geojson", "json"]) && label_of(p).is_some()))
}

/// Ground-truth/proposal pairs from two directories. Either both hold the
/// monthly files of a single AOI, or the ground-truth directory holds one
/// subdirectory per AOI, matched by name in the proposal directory. An AOI
/// without proposals is scored against empty frames.
pub fn load_dataset(gt_dir: &Path, prop_dir: &Path, opts: &LoadOptions) -> Result<Vec<(TimeSeries, TimeSeries)>> {
    if has_series_files(gt_dir)? {
        let gt = load_series(gt_dir, opts)?;
        let mut props = load_series(prop_dir, opts)?;
        props.aoi_id = gt.aoi_id.clone();
        return Ok(vec![(gt, props)]);
    }
    let aois: Vec<PathBuf> = list_dir(gt_dir)?.into_iter().filter(|p| p.is_dir()).collect();
    if aois.is_empty() {
        return Err(Error::EmptyDirectory {
            path: gt_dir.to_path_buf(),
        });
    }
    aois.par_iter()
        .map(|aoi| {
            let gt = load_series(aoi, opts)?;
            let prop_path = prop_dir.join(aoi.file_name().expect("directory entry"));
            let props = if prop_path.is_dir() {
                let mut p = load_series(&prop_path, opts)?;
                p.aoi_id = gt.aoi_id.clone();
                p
            } else {
                warn!("no proposals for AOI {:?}; scoring against empty frames", gt.aoi_id);
                TimeSeries {
                    aoi_id: gt.aoi_id.clone(),
                    frames: Vec::new(),
                }
            };
            Ok((gt, props))
        })
        .collect()
}

/// Loads, filters and scores ground truth against proposals.
pub fn score_directories(
    gt_dir: &Path,
    prop_dir: &Path,
    cfg: &ScotConfig,
    policy: &FilterPolicy,
    opts: &LoadOptions,
) -> Result<ScoreReport> {
    let filtered: Vec<_> = load_dataset(gt_dir, prop_dir, opts)?
        .iter()
        .map(|(g, p)| filter_pair(g, p, policy))
        .collect();
    score_dataset(&filtered, cfg)
}

/// Writes a report as pretty-printed JSON. Keys keep a fixed order and
/// floats are written in shortest round-trip form.
pub fn write_report(report: &ScoreReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_json(path, report)
}

pub fn read_report(path: &Path) -> Result<ScoreReport> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Polygonizes every labelled mask raster in `dir` and tracks the result.
pub fn track_masks(dir: &Path, cfg: &TrackerConfig, min_area: f64) -> Result<TimeSeries> {
    let (data, _) = labelled_files(dir, &["png", "tif", "tiff"])?;
    let frames = data
        .into_par_iter()
        .map(|(label, path)| {
            let mask = BinaryMask::load(&path)?;
            let footprints = polygonize_mask(&mask, min_area)
                .into_iter()
                .enumerate()
                .map(|(i, p)| Footprint::new(i.to_string(), p))
                .collect();
            Ok(Frame::new(label, footprints))
        })
        .collect::<Result<Vec<_>>>()?;
    let series = TimeSeries::new(dir_name(dir), frames)?;
    Ok(track_series(&series, cfg))
}

/// Tracks a directory of footprint files; incoming ids are ignored.
pub fn track_footprints(dir: &Path, cfg: &TrackerConfig, min_area: f64, opts: &LoadOptions) -> Result<TimeSeries> {
    let opts = LoadOptions {
        require_ids: false,
        ..opts.clone()
    };
    let (data, _) = labelled_files(dir, &["geojson", "json"])?;
    let frames = data
        .into_par_iter()
        .map(|(label, path)| {
            let footprints = read_footprints(&path, &opts)?
                .into_iter()
                .filter(|fp| fp.polygon.area() >= min_area)
                .enumerate()
                .map(|(i, fp)| Footprint::new(i.to_string(), fp.polygon))
                .collect();
            Ok(Frame::new(label, footprints))
        })
        .collect::<Result<Vec<_>>>()?;
    let series = TimeSeries::new(dir_name(dir), frames)?;
    Ok(track_series(&series, cfg))
}

/// Input of the `synth` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
    /// Number of AOIs; more than one writes a subdirectory per AOI.
    #[serde(default = "one")]
    pub n_aoi: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthTrace {
    pub aoi_id: String,
    pub scenario_seed: u64,
    pub perturbation_seed: Option<u64>,
    pub scenario: ScenarioTrace,
    pub perturbation: Option<PerturbationLog>,
}

pub fn read_synth_spec(path: &Path) -> Result<SynthSpec> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Generates `spec.n_aoi` scenarios seeded from `seed` and writes them as
/// `out/ground_truth[/<aoi>]` and, with a perturbation model,
/// `out/proposals[/<aoi>]`, plus `out/trace.json`. AOI `i` uses scenario
/// seed `seed + 2i` and perturbation seed `seed + 2i + 1`.
pub fn write_synth(spec: &SynthSpec, seed: u64, out: &Path) -> Result<Vec<SynthTrace>> {
    if spec.n_aoi == 0 {
        return Err(Error::InvalidConfig("n_aoi must be at least 1".into()));
    }
    let mut traces = Vec::with_capacity(spec.n_aoi);
    for i in 0..spec.n_aoi {
        let aoi_id = if spec.n_aoi == 1 {
            spec.scenario.aoi_id.clone()
        } else {
            format!("{}_{i:03}", spec.scenario.aoi_id)
        };
        let scenario_seed = seed.wrapping_add(2 * i as u64);
        let scenario = gen_scenario(&ScenarioSpec {
            aoi_id: aoi_id.clone(),
            seed: scenario_seed,
            ..spec.scenario.clone()
        })?;
        let sub = |root: &str| {
            let base = out.join(root);
            if spec.n_aoi == 1 {
                base
            } else {
                base.join(&scenario.series.aoi_id)
            }
        };
        write_series(&scenario.series, &sub("ground_truth"), DEFAULT_ID_PROPERTY)?;
        let mut trace = SynthTrace {
            aoi_id,
            scenario_seed,
            perturbation_seed: None,
            scenario: scenario.trace.clone(),
            perturbation: None,
        };
        let prop_dir = sub("proposals");
        if let Some(p) = &spec.perturbation {
            let pseed = seed.wrapping_add(2 * i as u64 + 1);
            let perturbed = perturb(
                &scenario.series,
                &PerturbationSpec {
                    seed: pseed,
                    ..p.clone()
                },
            )?;
            write_series(&perturbed.series, &prop_dir, DEFAULT_ID_PROPERTY)?;
            trace.perturbation_seed = Some(pseed);
            trace.perturbation = Some(perturbed.log);
        }
        traces.push(trace);
    }
    write_json(&out.join("trace.json"), &traces)?;
    Ok(traces)
}
