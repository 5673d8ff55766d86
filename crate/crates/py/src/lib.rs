//! Python bindings for `scot_core`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use scot_core::io::{FilterPolicy, LoadOptions};
use scot_core::matching::DEFAULT_IOU_THRESHOLD;
use scot_core::metric::{self, AoiScore, MatchCounts as CoreCounts};
use scot_core::synth::{self, PerturbationSpec, ScenarioSpec};
use scot_core::tracker::TrackerConfig;
use scot_core::{geometry, io, Error, Footprint, Frame, RawPolygon, ScotConfig, TimeSeries};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Image { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_json<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_json<T: serde::de::DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A validated simple polygon with optional holes, in pixel coordinates.
#[pyclass(name = "Polygon", module = "scot", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPolygon {
    inner: geometry::Polygon,
}

#[pymethods]
impl PyPolygon {
    #[new]
    #[pyo3(signature = (exterior, holes = None))]
    fn new(exterior: Vec<[f64; 2]>, holes: Option<Vec<Vec<[f64; 2]>>>) -> PyResult<Self> {
        let raw = RawPolygon::with_holes(exterior, holes.unwrap_or_default());
        let inner = raw.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyPolygon { inner })
    }

    #[staticmethod]
    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> PyResult<Self> {
        PyPolygon::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]], None)
    }

    #[getter]
    fn area(&self) -> f64 {
        self.inner.area()
    }

    #[getter]
    fn exterior(&self) -> Vec<[f64; 2]> {
        self.inner.exterior().to_vec()
    }

    #[getter]
    fn holes(&self) -> Vec<Vec<[f64; 2]>> {
        self.inner.holes().to_vec()
    }

    /// `(min_x, min_y, max_x, max_y)`.
    #[getter]
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let b = self.inner.bbox();
        (b.min[0], b.min[1], b.max[0], b.max[1])
    }

    fn iou(&self, other: &PyPolygon) -> f64 {
        geometry::iou(&self.inner, &other.inner)
    }

    fn intersection_area(&self, other: &PyPolygon) -> f64 {
        geometry::intersection_area(&self.inner, &other.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Polygon(area={}, vertices={})",
            self.inner.area(),
            self.inner.exterior().len()
        )
    }
}

/// Per-AOI tallies.
#[pyclass(name = "MatchCounts", module = "scot", get_all, set_all, skip_from_py_object)]
#[derive(Clone, Copy, Default)]
struct PyCounts {
    tp: u64,
    fp: u64,
    #[pyo3(name = "fn_")]
    fn_: u64,
    mm: u64,
    tp_new: u64,
    fp_new: u64,
    fn_new: u64,
}

impl From<CoreCounts> for PyCounts {
    fn from(c: CoreCounts) -> Self {
        PyCounts {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            mm: c.mm,
            tp_new: c.tp_new,
            fp_new: c.fp_new,
            fn_new: c.fn_new,
        }
    }
}

impl From<PyCounts> for CoreCounts {
    fn from(c: PyCounts) -> Self {
        CoreCounts {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            mm: c.mm,
            tp_new: c.tp_new,
            fp_new: c.fp_new,
            fn_new: c.fn_new,
        }
    }
}

#[pymethods]
impl PyCounts {
    #[new]
    #[pyo3(signature = (tp = 0, fp = 0, fn_ = 0, mm = 0, tp_new = 0, fp_new = 0, fn_new = 0))]
    fn new(tp: u64, fp: u64, fn_: u64, mm: u64, tp_new: u64, fp_new: u64, fn_new: u64) -> Self {
        PyCounts {
            tp,
            fp,
            fn_,
            mm,
            tp_new,
            fp_new,
            fn_new,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "MatchCounts(tp={}, fp={}, fn_={}, mm={}, tp_new={}, fp_new={}, fn_new={})",
            self.tp, self.fp, self.fn_, self.mm, self.tp_new, self.fp_new, self.fn_new
        )
    }

    fn __eq__(&self, other: &PyCounts) -> bool {
        CoreCounts::from(*self) == CoreCounts::from(*other)
    }
}

fn polys(list: &[PyRef<'_, PyPolygon>]) -> Vec<geometry::Polygon> {
    list.iter().map(|p| p.inner.clone()).collect()
}

#[pyfunction]
fn iou(a: &PyPolygon, b: &PyPolygon) -> f64 {
    geometry::iou(&a.inner, &b.inner)
}

/// Optimal one-to-one matching of one frame. Returns
/// `(pairs, unmatched_gt, unmatched_prop)` with pairs as `(gt, prop, iou)`.
#[pyfunction]
#[pyo3(signature = (gt, proposals, threshold = DEFAULT_IOU_THRESHOLD))]
#[allow(clippy::type_complexity)]
fn match_frame(
    gt: Vec<PyRef<'_, PyPolygon>>,
    proposals: Vec<PyRef<'_, PyPolygon>>,
    threshold: f64,
) -> (Vec<(usize, usize, f64)>, Vec<usize>, Vec<usize>) {
    let m = scot_core::match_frame(&polys(&gt), &polys(&proposals), threshold);
    (
        m.pairs.iter().map(|p| (p.gt, p.prop, p.iou)).collect(),
        m.unmatched_gt,
        m.unmatched_prop,
    )
}

#[pyfunction]
fn legacy_f1(counts: &PyCounts) -> f64 {
    metric::legacy_f1(&(*counts).into())
}

#[pyfunction]
fn f_track(counts: &PyCounts) -> f64 {
    metric::f_track(&(*counts).into())
}

#[pyfunction]
fn f_change(counts: &PyCounts) -> f64 {
    metric::f_change(&(*counts).into())
}

#[pyfunction]
#[pyo3(signature = (f_track, f_change, beta = 2.0))]
fn combine(f_track: f64, f_change: f64, beta: f64) -> f64 {
    metric::combine(f_track, f_change, beta)
}

/// MOTA; raises `ValueError` when there is no ground truth.
#[pyfunction]
fn mota(counts: &PyCounts) -> PyResult<f64> {
    let c: CoreCounts = (*counts).into();
    metric::mota(&c, c.total_gt()).map_err(err)
}

type PyFrames<'py> = Vec<(String, Vec<(String, PyRef<'py, PyPolygon>)>)>;

fn series(aoi_id: &str, frames: PyFrames<'_>) -> PyResult<TimeSeries> {
    let frames = frames
        .into_iter()
        .map(|(label, fps)| {
            Frame::new(
                label,
                fps.into_iter()
                    .map(|(id, p)| Footprint::new(id, p.inner.clone()))
                    .collect(),
            )
        })
        .collect();
    TimeSeries::new(aoi_id, frames).map_err(err)
}

fn frames_out(s: &TimeSeries) -> Vec<(String, Vec<(String, PyPolygon)>)> {
    s.frames
        .iter()
        .map(|f| {
            (
                f.label.clone(),
                f.footprints
                    .iter()
                    .map(|fp| {
                        (
                            fp.id.clone(),
                            PyPolygon {
                                inner: fp.polygon.clone(),
                            },
                        )
                    })
                    .collect(),
            )
        })
        .collect()
}

fn score_dict<'py>(py: Python<'py>, s: &AoiScore) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("counts", PyCounts::from(s.counts))?;
    d.set_item("f1", s.f1)?;
    d.set_item("f_track", s.f_track)?;
    d.set_item("f_change", s.f_change)?;
    d.set_item("f_scot", s.f_scot)?;
    d.set_item("mota", s.mota)?;
    Ok(d)
}

/// Scores two series given as `[(label, [(id, Polygon), ...]), ...]`.
/// Filtering by area and UDM is the caller's business here.
#[pyfunction]
#[pyo3(signature = (gt, proposals, beta = 2.0, iou_threshold = DEFAULT_IOU_THRESHOLD))]
fn score_series<'py>(
    py: Python<'py>,
    gt: PyFrames<'py>,
    proposals: PyFrames<'py>,
    beta: f64,
    iou_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ScotConfig {
        beta,
        iou_threshold,
        ..Default::default()
    };
    let (gt, props) = (series("aoi", gt)?, series("aoi", proposals)?);
    let s = py.detach(|| metric::score_aoi(&gt, &props, &cfg)).map_err(err)?;
    score_dict(py, &s)
}

/// Loads, filters and scores directories; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (ground_truth, proposals, beta = 2.0, iou_threshold = DEFAULT_IOU_THRESHOLD,
                    min_area = 4.0, udm_fraction = 0.5, id_property = "id"))]
#[allow(clippy::too_many_arguments)]
fn score_directories<'py>(
    py: Python<'py>,
    ground_truth: PathBuf,
    proposals: PathBuf,
    beta: f64,
    iou_threshold: f64,
    min_area: f64,
    udm_fraction: f64,
    id_property: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ScotConfig {
        beta,
        iou_threshold,
        min_area,
    };
    let policy = FilterPolicy {
        min_area,
        udm_overlap_fraction: udm_fraction,
    };
    let opts = LoadOptions {
        id_property: id_property.to_string(),
        require_ids: true,
    };
    let report = py
        .detach(|| io::score_directories(&ground_truth, &proposals, &cfg, &policy, &opts))
        .map_err(err)?;
    to_json(py, &report)
}

/// Generates a growth scenario. Keyword arguments override the defaults
/// of the scenario spec. Returns `(frames, trace)`.
#[pyfunction]
#[pyo3(signature = (**spec))]
#[allow(clippy::type_complexity)]
fn gen_scenario<'py>(
    py: Python<'py>,
    spec: Option<&Bound<'py, PyDict>>,
) -> PyResult<(Vec<(String, Vec<(String, PyPolygon)>)>, Bound<'py, PyAny>)> {
    let spec: ScenarioSpec = match spec {
        Some(d) => from_json(py, d.as_any())?,
        None => ScenarioSpec::default(),
    };
    let sc = synth::gen_scenario(&spec).map_err(err)?;
    Ok((frames_out(&sc.series), to_json(py, &sc.trace)?))
}

/// Applies the proposal noise model to a series. Returns `(frames, log)`.
#[pyfunction]
#[pyo3(signature = (gt, **spec))]
#[allow(clippy::type_complexity)]
fn perturb<'py>(
    py: Python<'py>,
    gt: PyFrames<'py>,
    spec: Option<&Bound<'py, PyDict>>,
) -> PyResult<(Vec<(String, Vec<(String, PyPolygon)>)>, Bound<'py, PyAny>)> {
    let spec: PerturbationSpec = match spec {
        Some(d) => from_json(py, d.as_any())?,
        None => PerturbationSpec::default(),
    };
    let gt = series("aoi", gt)?;
    let p = synth::perturb(&gt, &spec).map_err(err)?;
    Ok((frames_out(&p.series), to_json(py, &p.log)?))
}

/// The four-building, five-frame fixture as `(gt_frames, proposal_frames)`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn four_building_scenario() -> (
    Vec<(String, Vec<(String, PyPolygon)>)>,
    Vec<(String, Vec<(String, PyPolygon)>)>,
) {
    let (gt, props) = synth::four_building_scenario();
    (frames_out(&gt), frames_out(&props))
}

/// Baseline tracker over per-frame polygon lists; returns integer ids.
#[pyfunction]
#[pyo3(signature = (frames, iou_threshold = DEFAULT_IOU_THRESHOLD, max_gap = 1))]
fn propagate_ids(
    py: Python<'_>,
    frames: Vec<Vec<PyRef<'_, PyPolygon>>>,
    iou_threshold: f64,
    max_gap: usize,
) -> Vec<Vec<u64>> {
    let frames: Vec<Vec<geometry::Polygon>> = frames.iter().map(|f| polys(f)).collect();
    let cfg = TrackerConfig { iou_threshold, max_gap };
    py.detach(|| scot_core::tracker::propagate_ids(&frames, &cfg))
}

#[pymodule]
fn scot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolygon>()?;
    m.add_class::<PyCounts>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(match_frame, m)?)?;
    m.add_function(wrap_pyfunction!(legacy_f1, m)?)?;
    m.add_function(wrap_pyfunction!(f_track, m)?)?;
    m.add_function(wrap_pyfunction!(f_change, m)?)?;
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    m.add_function(wrap_pyfunction!(mota, m)?)?;
    m.add_function(wrap_pyfunction!(score_series, m)?)?;
    m.add_function(wrap_pyfunction!(score_directories, m)?)?;
    m.add_function(wrap_pyfunction!(gen_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(perturb, m)?)?;
    m.add_function(wrap_pyfunction!(four_building_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_ids, m)?)?;
    m.add("DEFAULT_IOU_THRESHOLD", DEFAULT_IOU_THRESHOLD)?;
    Ok(())
}
