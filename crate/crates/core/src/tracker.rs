//! Baseline tracker: mask polygonization and identifier propagation.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon, RawPolygon};
use crate::matching::{match_frame, DEFAULT_IOU_THRESHOLD};
use crate::metric::{Footprint, Frame, TimeSeries};

/// Half-width of the bridge inserted where two pixels of one component touch
/// only at a corner. Keeps the traced ring simple; adds `BRIDGE²` px² per
/// such corner.
pub const BRIDGE: f64 = 1e-3;

/// Row-major binary raster; `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidConfig(format!(
                "mask data has {} cells, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(BinaryMask { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    /// Reads a single-band 8-bit raster; any nonzero value is foreground.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = img.to_luma8();
        let (w, h) = gray.dimensions();
        let data = gray.pixels().map(|p| p.0[0] != 0).collect();
        BinaryMask::new(w as usize, h as usize, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let img = image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        });
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// 8-connected components in row-major order of their first pixel.
fn label_components(mask: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen[y * w + x] {
                continue;
            }
            let mut comp = Vec::new();
            seen[y * w + x] = true;
            queue.push_back((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                comp.push((cx, cy));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if mask.get(nx, ny) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

/// Local occupancy grid of one component with a one-pixel background margin
/// and interior holes filled.
struct Patch {
    x0: i64,
    y0: i64,
    w: i64,
    h: i64,
    cells: Vec<bool>,
}

impl Patch {
    fn new(comp: &[(usize, usize)]) -> Self {
        let x0 = comp.iter().map(|p| p.0).min().unwrap() as i64 - 1;
        let y0 = comp.iter().map(|p| p.1).min().unwrap() as i64 - 1;
        let w = comp.iter().map(|p| p.0).max().unwrap() as i64 - x0 + 2;
        let h = comp.iter().map(|p| p.1).max().unwrap() as i64 - y0 + 2;
        let mut cells = vec![false; (w * h) as usize];
        for &(x, y) in comp {
            cells[((y as i64 - y0) * w + (x as i64 - x0)) as usize] = true;
        }
        let mut patch = Patch { x0, y0, w, h, cells };
        patch.fill_holes();
        patch
    }

    fn at(&self, lx: i64, ly: i64) -> bool {
        lx >= 0 && ly >= 0 && lx < self.w && ly < self.h && self.cells[(ly * self.w + lx) as usize]
    }

    /// Background not 4-connected to the margin becomes foreground.
    fn fill_holes(&mut self) {
        let (w, h) = (self.w, self.h);
        let mut outside = vec![false; (w * h) as usize];
        let mut queue = VecDeque::from([(0i64, 0i64)]);
        outside[0] = true;
        while let Some((x, y)) = queue.pop_front() {
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let i = (ny * w + nx) as usize;
                if !self.cells[i] && !outside[i] {
                    outside[i] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
        for (c, o) in self.cells.iter_mut().zip(outside) {
            *c = *c || !o;
        }
    }

    /// Outer boundary as a closed lattice path, in patch coordinates.
    fn trace(&self) -> Vec<Point> {
        // Directed pixel edges, clockwise around each foreground pixel in
        // image coordinates (y down). Keyed by start vertex.
        let mut out: HashMap<(i64, i64), Vec<(i64, i64)>> = HashMap::new();
        let mut n_edges = 0;
        for y in 0..self.h {
            for x in 0..self.w {
                if !self.at(x, y) {
                    continue;
                }
                let sides = [
                    (!self.at(x, y - 1), (x, y), (1, 0)),
                    (!self.at(x + 1, y), (x + 1, y), (0, 1)),
                    (!self.at(x, y + 1), (x + 1, y + 1), (-1, 0)),
                    (!self.at(x - 1, y), (x, y + 1), (0, -1)),
                ];
                for (open, start, dir) in sides {
                    if open {
                        out.entry(start).or_default().push(dir);
                        n_edges += 1;
                    }
                }
            }
        }
        let start = *out.keys().min().expect("component has a boundary");
        let first_dir = out[&start][0];
        let mut ring = Vec::with_capacity(n_edges + 8);
        let (mut v, mut dir) = (start, first_dir);
        let mut steps = 0;
        loop {
            let next = (v.0 + dir.0, v.1 + dir.1);
            let outs = &out[&next];
            let next_dir = if outs.len() == 1 {
                outs[0]
            } else {
                // Saddle: both diagonal pixels are foreground. Keep them joined
                // by wrapping around the background pixel shared by the two
                // edges.
                let d = (dir.1, -dir.0);
                debug_assert!(outs.contains(&d));
                let p = [next.0 as f64, next.1 as f64];
                ring.push([p[0] - BRIDGE * dir.0 as f64, p[1] - BRIDGE * dir.1 as f64]);
                ring.push([p[0] + BRIDGE * d.0 as f64, p[1] + BRIDGE * d.1 as f64]);
                v = next;
                dir = d;
                steps += 1;
                if v == start && dir == first_dir {
                    break;
                }
                continue;
            };
            if next_dir != dir {
                ring.push([next.0 as f64, next.1 as f64]);
            }
            v = next;
            dir = next_dir;
            steps += 1;
            if v == start && dir == first_dir {
                break;
            }
        }
        debug_assert_eq!(steps, n_edges, "single outer ring expected");
        ring
    }
}

/// One polygon per 8-connected foreground component, traced along pixel
/// edges with interior holes filled. Components inside another component's
/// holes are absorbed by it; components smaller than `min_area` px² are
/// dropped.
pub fn polygonize_mask(mask: &BinaryMask, min_area: f64) -> Vec<Polygon> {
    // Cells claimed by an earlier component, including its filled holes.
    // Components are visited in row-major order of their first pixel, so an
    // enclosing component always precedes whatever sits in its holes.
    let mut claimed = vec![false; mask.width * mask.height];
    let mut out = Vec::new();
    for comp in label_components(mask) {
        let (fx, fy) = comp[0];
        if claimed[fy * mask.width + fx] {
            continue;
        }
        let patch = Patch::new(&comp);
        for ly in 0..patch.h {
            for lx in 0..patch.w {
                if patch.at(lx, ly) {
                    let (x, y) = ((lx + patch.x0) as usize, (ly + patch.y0) as usize);
                    claimed[y * mask.width + x] = true;
                }
            }
        }
        let ring = patch
            .trace()
            .into_iter()
            .map(|p| [p[0] + patch.x0 as f64, p[1] + patch.y0 as f64])
            .collect();
        let poly = RawPolygon::new(ring)
            .validate()
            .expect("traced pixel boundary is a simple ring");
        if poly.area() >= min_area {
            out.push(poly);
        }
    }
    out
}

/// Marks every pixel whose center lies inside one of `polygons`.
pub fn rasterize(polygons: &[Polygon], width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::empty(width, height);
    for p in polygons {
        let b = p.bbox();
        let x0 = b.min[0].floor().max(0.0) as usize;
        let y0 = b.min[1].floor().max(0.0) as usize;
        let x1 = (b.max[0].ceil().max(0.0) as usize).min(width);
        let y1 = (b.max[1].ceil().max(0.0) as usize).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                if p.contains_point([x as f64 + 0.5, y as f64 + 0.5]) {
                    mask.set(x, y, true);
                }
            }
        }
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub iou_threshold: f64,
    /// Footprints are matched against tracks seen within this many frames.
    /// `1` is the published baseline (previous frame only).
    pub max_gap: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            max_gap: 1,
        }
    }
}

struct Track {
    id: u64,
    polygon: Polygon,
    last_seen: usize,
}

/// Assigns identifiers frame by frame. Frame 0 gets `0..n` in input order;
/// later footprints inherit the id of the track they match and otherwise
/// take the next value of a series-wide counter. Ids are never reused.
pub fn propagate_ids(frames: &[Vec<Polygon>], cfg: &TrackerConfig) -> Vec<Vec<u64>> {
    let mut tracks: Vec<Track> = Vec::new();
    let mut next_id = 0u64;
    let mut out = Vec::with_capacity(frames.len());
    for (t, polys) in frames.iter().enumerate() {
        let live: Vec<usize> = (0..tracks.len())
            .filter(|&i| t > 0 && t - tracks[i].last_seen <= cfg.max_gap.max(1))
            .collect();
        let pool: Vec<&Polygon> = live.iter().map(|&i| &tracks[i].polygon).collect();
        let m = match_frame(polys, &pool, cfg.iou_threshold);
        let mut ids = vec![u64::MAX; polys.len()];
        for pair in &m.pairs {
            let track = &mut tracks[live[pair.prop]];
            ids[pair.gt] = track.id;
            track.polygon = polys[pair.gt].clone();
            track.last_seen = t;
        }
        for &i in &m.unmatched_gt {
            ids[i] = next_id;
            tracks.push(Track {
                id: next_id,
                polygon: polys[i].clone(),
                last_seen: t,
            });
            next_id += 1;
        }
        out.push(ids);
    }
    out
}

/// Re-identifies the footprints of `series` with [`propagate_ids`], keeping
/// frame labels, geometry order and UDMs.
pub fn track_series(series: &TimeSeries, cfg: &TrackerConfig) -> TimeSeries {
    let polys: Vec<Vec<Polygon>> = series
        .frames
        .iter()
        .map(|f| f.footprints.iter().map(|fp| fp.polygon.clone()).collect())
        .collect();
    let ids = propagate_ids(&polys, cfg);
    let frames = series
        .frames
        .iter()
        .zip(polys.into_iter().zip(ids))
        .map(|(f, (polys, ids))| Frame {
            label: f.label.clone(),
            footprints: polys
                .into_iter()
                .zip(ids)
                .map(|(p, id)| Footprint::new(id.to_string(), p))
                .collect(),
            udm: f.udm.clone(),
        })
        .collect();
    TimeSeries {
        aoi_id: series.aoi_id.clone(),
        frames,
    }
}
