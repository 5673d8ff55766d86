//! Planar polygon primitives in pixel units.
//!
//! Intersection areas are computed by boundary integration: the boundary of
//! `a ∩ b` is made of the pieces of `∂a` lying inside `b` and the pieces of
//! `∂b` lying inside `a`, so summing the shoelace contribution of those pieces
//! yields the intersection area without building the clipped polygon.
//! Coincident edges are attributed once, and only when both polygons lie on
//! the same side of them, so shared edges between touching footprints
//! contribute nothing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vertices closer than this (in pixels) are merged.
pub const MERGE_TOLERANCE: f64 = 1e-9;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("self-intersecting geometry: {0}")]
    SelfIntersection(String),
    #[error("hole {0} is not contained in the exterior ring")]
    HoleOutsideExterior(usize),
}

/// Axis-aligned bounding box `[min_x, min_y, max_x, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    fn of(ring: &[Point]) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in ring {
            for k in 0..2 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        BBox { min, max }
    }

    /// True when the closed boxes share at least one point.
    pub fn intersects(&self, other: &BBox) -> bool {
        self.min[0] <= other.max[0]
            && other.min[0] <= self.max[0]
            && self.min[1] <= other.max[1]
            && other.min[1] <= self.max[1]
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }
}

/// Unchecked polygon as read from a file or built by a generator.
///
/// Rings are stored open: the first vertex is not repeated at the end.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawPolygon {
    pub exterior: Vec<Point>,
    #[serde(default)]
    pub holes: Vec<Vec<Point>>,
}

impl RawPolygon {
    pub fn new(exterior: Vec<Point>) -> Self {
        RawPolygon {
            exterior,
            holes: Vec::new(),
        }
    }

    pub fn with_holes(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Self {
        RawPolygon { exterior, holes }
    }

    /// Axis-aligned rectangle spanning `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        RawPolygon::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn validate(self) -> Result<Polygon, GeometryError> {
        validate(self)
    }
}

/// A validated polygon: simple rings, exterior counter-clockwise, holes
/// clockwise and inside the exterior, positive area.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
    bbox: BBox,
    area: f64,
}

impl Polygon {
    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    pub fn to_raw(&self) -> RawPolygon {
        RawPolygon::with_holes(self.exterior.clone(), self.holes.clone())
    }

    /// Returns a copy shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Polygon {
        let shift = |r: &[Point]| r.iter().map(|p| [p[0] + dx, p[1] + dy]).collect::<Vec<_>>();
        let exterior = shift(&self.exterior);
        let holes = self.holes.iter().map(|h| shift(h)).collect();
        Polygon {
            bbox: BBox::of(&exterior),
            exterior,
            holes,
            area: self.area,
        }
    }

    /// Point-in-polygon by crossing parity over every ring. Points exactly
    /// on the boundary may land on either side.
    pub fn contains_point(&self, p: Point) -> bool {
        if p[0] < self.bbox.min[0] || p[0] > self.bbox.max[0] || p[1] < self.bbox.min[1] || p[1] > self.bbox.max[1] {
            return false;
        }
        self.rings()
            .fold(false, |inside, ring| inside ^ ring_crossing_parity(ring, p))
    }
}

impl AsRef<Polygon> for Polygon {
    fn as_ref(&self) -> &Polygon {
        self
    }
}

fn ring_crossing_parity(ring: &[Point], p: Point) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Signed shoelace area; positive for counter-clockwise rings.
pub fn signed_ring_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc / 2.0
}

fn clean_ring(mut ring: Vec<Point>) -> Vec<Point> {
    let tol2 = MERGE_TOLERANCE * MERGE_TOLERANCE;
    if ring.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Vec::new();
    }
    ring.dedup_by(|b, a| dist2(*a, *b) <= tol2);
    while ring.len() > 1 && dist2(ring[0], ring[ring.len() - 1]) <= tol2 {
        ring.pop();
    }
    ring
}

/// Orientation-robust collinearity: area of the parallelogram relative to
/// the longer edge.
fn is_collinear(a: Point, b: Point, c: Point) -> bool {
    let scale = dist2(a, b).max(dist2(b, c)).max(dist2(a, c)).sqrt();
    cross(a, b, c).abs() <= MERGE_TOLERANCE * scale.max(1.0)
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    is_collinear(a, b, p)
        && p[0] >= a[0].min(b[0]) - MERGE_TOLERANCE
        && p[0] <= a[0].max(b[0]) + MERGE_TOLERANCE
        && p[1] >= a[1].min(b[1]) - MERGE_TOLERANCE
        && p[1] <= a[1].max(b[1]) + MERGE_TOLERANCE
}

/// Closed-segment intersection test, including touching and collinear overlap.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

fn check_ring_simple(ring: &[Point], what: &str) -> Result<(), GeometryError> {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            let adjacent_next = j == i + 1;
            let adjacent_wrap = i == 0 && j == n - 1;
            if adjacent_next {
                // Shared vertex b == c; only a fold-back onto itself is invalid.
                if is_collinear(a, b, d) && (b[0] - a[0]) * (d[0] - c[0]) + (b[1] - a[1]) * (d[1] - c[1]) < 0.0 {
                    return Err(GeometryError::SelfIntersection(format!(
                        "{what} folds back at vertex {}",
                        (i + 1) % n
                    )));
                }
                continue;
            }
            if adjacent_wrap {
                if is_collinear(c, a, b) && (a[0] - c[0]) * (b[0] - a[0]) + (a[1] - c[1]) * (b[1] - a[1]) < 0.0 {
                    return Err(GeometryError::SelfIntersection(format!(
                        "{what} folds back at vertex 0"
                    )));
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return Err(GeometryError::SelfIntersection(format!(
                    "{what} edges {i} and {j} intersect"
                )));
            }
        }
    }
    Ok(())
}

fn rings_cross(r1: &[Point], r2: &[Point]) -> bool {
    let (n, m) = (r1.len(), r2.len());
    (0..n).any(|i| {
        let (a, b) = (r1[i], r1[(i + 1) % n]);
        (0..m).any(|j| segments_intersect(a, b, r2[j], r2[(j + 1) % m]))
    })
}

/// Checks simplicity and normalizes orientation (exterior CCW, holes CW).
pub fn validate(raw: RawPolygon) -> Result<Polygon, GeometryError> {
    let mut exterior = clean_ring(raw.exterior);
    if exterior.len() < 3 {
        return Err(GeometryError::DegenerateGeometry(format!(
            "exterior has {} distinct vertices",
            exterior.len()
        )));
    }
    if exterior[2..].iter().all(|&p| is_collinear(exterior[0], exterior[1], p)) {
        return Err(GeometryError::DegenerateGeometry("all vertices are collinear".into()));
    }
    check_ring_simple(&exterior, "exterior")?;
    let ext_area = signed_ring_area(&exterior);
    let ext_scale = BBox::of(&exterior);
    let ext_scale = ext_scale.width().max(ext_scale.height()).max(1.0);
    if ext_area.abs() <= MERGE_TOLERANCE * ext_scale {
        return Err(GeometryError::DegenerateGeometry("exterior has zero area".into()));
    }
    if ext_area < 0.0 {
        exterior.reverse();
    }

    let mut holes: Vec<Vec<Point>> = Vec::with_capacity(raw.holes.len());
    let mut hole_area = 0.0;
    for (k, hole) in raw.holes.into_iter().enumerate() {
        let mut hole = clean_ring(hole);
        if hole.len() < 3 {
            return Err(GeometryError::DegenerateGeometry(format!(
                "hole {k} has fewer than 3 vertices"
            )));
        }
        let a = signed_ring_area(&hole);
        if a.abs() <= MERGE_TOLERANCE * ext_scale {
            return Err(GeometryError::DegenerateGeometry(format!("hole {k} has zero area")));
        }
        check_ring_simple(&hole, "hole")?;
        if a > 0.0 {
            hole.reverse();
        }
        if rings_cross(&exterior, &hole) {
            return Err(GeometryError::SelfIntersection(format!(
                "hole {k} touches the exterior"
            )));
        }
        if !ring_crossing_parity(&exterior, hole[0]) {
            return Err(GeometryError::HoleOutsideExterior(k));
        }
        for (prev_k, prev) in holes.iter().enumerate() {
            if rings_cross(prev, &hole) {
                return Err(GeometryError::SelfIntersection(format!(
                    "holes {prev_k} and {k} intersect"
                )));
            }
            if ring_crossing_parity(prev, hole[0]) || ring_crossing_parity(&hole, prev[0]) {
                return Err(GeometryError::SelfIntersection(format!(
                    "holes {prev_k} and {k} are nested"
                )));
            }
        }
        hole_area += a.abs();
        holes.push(hole);
    }

    let area = ext_area.abs() - hole_area;
    if area <= 0.0 {
        return Err(GeometryError::DegenerateGeometry("non-positive area".into()));
    }
    Ok(Polygon {
        bbox: BBox::of(&exterior),
        exterior,
        holes,
        area,
    })
}

/// Exterior area minus hole areas.
pub fn area(p: &Polygon) -> f64 {
    p.area
}

/// Edge of `ring` from vertex `i` to `i + 1`.
fn edges(ring: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    let n = ring.len();
    (0..n).map(move |i| (ring[i], ring[(i + 1) % n]))
}

/// Parameters along `a→b` at which it meets `c→d` (crossing, touching, or
/// the endpoints of a collinear overlap).
fn split_params(a: Point, b: Point, c: Point, d: Point, out: &mut Vec<f64>) {
    let r = [b[0] - a[0], b[1] - a[1]];
    let s = [d[0] - c[0], d[1] - c[1]];
    let rr = r[0] * r[0] + r[1] * r[1];
    let denom = r[0] * s[1] - r[1] * s[0];
    let ca = [c[0] - a[0], c[1] - a[1]];
    let project = |p: Point| ((p[0] - a[0]) * r[0] + (p[1] - a[1]) * r[1]) / rr;

    if denom.abs() > 1e-12 * rr.sqrt() * (s[0] * s[0] + s[1] * s[1]).sqrt() {
        let t = (ca[0] * s[1] - ca[1] * s[0]) / denom;
        let u = (ca[0] * r[1] - ca[1] * r[0]) / denom;
        let eps = 1e-12;
        if (-eps..=1.0 + eps).contains(&t) && (-eps..=1.0 + eps).contains(&u) {
            out.push(t.clamp(0.0, 1.0));
        }
    }
    // Endpoints of c→d lying on a→b cover both the collinear-overlap and the
    // near-parallel touching cases.
    for p in [c, d] {
        if on_segment(p, a, b) {
            out.push(project(p).clamp(0.0, 1.0));
        }
    }
}

/// How a sub-segment of one polygon's boundary relates to the other polygon.
enum Side {
    Inside,
    Outside,
    /// Lies on the other boundary; `true` when the edges run the same way.
    OnBoundary(bool),
}

fn classify(mid: Point, dir: Point, other: &Polygon) -> Side {
    for ring in other.rings() {
        for (c, d) in edges(ring) {
            if on_segment(mid, c, d) {
                let same = dir[0] * (d[0] - c[0]) + dir[1] * (d[1] - c[1]) > 0.0;
                return Side::OnBoundary(same);
            }
        }
    }
    if other.contains_point(mid) {
        Side::Inside
    } else {
        Side::Outside
    }
}

/// Sum of shoelace terms over the parts of `subject`'s boundary that bound
/// `subject ∩ clip`.
fn boundary_contribution(subject: &Polygon, clip: &Polygon, keep_shared: bool) -> f64 {
    let clip_box = clip.bbox;
    let mut acc = 0.0;
    let mut params = Vec::new();
    for ring in subject.rings() {
        for (a, b) in edges(ring) {
            let edge_box = BBox {
                min: [a[0].min(b[0]), a[1].min(b[1])],
                max: [a[0].max(b[0]), a[1].max(b[1])],
            };
            if !edge_box.intersects(&clip_box) {
                continue;
            }
            params.clear();
            params.push(0.0);
            params.push(1.0);
            for clip_ring in clip.rings() {
                for (c, d) in edges(clip_ring) {
                    split_params(a, b, c, d, &mut params);
                }
            }
            params.sort_by(f64::total_cmp);
            let len = dist2(a, b).sqrt();
            params.dedup_by(|t1, t0| (*t1 - *t0) * len <= MERGE_TOLERANCE);
            if let Some(last) = params.last_mut() {
                *last = 1.0;
            }
            let dir = [b[0] - a[0], b[1] - a[1]];
            let at = |t: f64| [a[0] + dir[0] * t, a[1] + dir[1] * t];
            for w in params.windows(2) {
                let (p, q) = (at(w[0]), at(w[1]));
                let mid = at(0.5 * (w[0] + w[1]));
                let keep = match classify(mid, dir, clip) {
                    Side::Inside => true,
                    Side::Outside => false,
                    Side::OnBoundary(same) => same && keep_shared,
                };
                if keep {
                    acc += p[0] * q[1] - q[0] * p[1];
                }
            }
        }
    }
    acc
}

/// Area of `a ∩ b`.
pub fn intersection_area(a: &Polygon, b: &Polygon) -> f64 {
    if !a.bbox.intersects(&b.bbox) {
        return 0.0;
    }
    let twice = boundary_contribution(a, b, true) + boundary_contribution(b, a, false);
    (twice / 2.0).clamp(0.0, a.area.min(b.area))
}

/// Intersection over union; 0 for disjoint inputs.
pub fn iou(a: &Polygon, b: &Polygon) -> f64 {
    let inter = intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area + b.area - inter;
    (inter / union).clamp(0.0, 1.0)
}
