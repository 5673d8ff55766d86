//! One-to-one matching of ground-truth and proposal footprints in a frame.
//!
//! The objective is lexicographic: first the number of pairs with
//! `iou >= threshold`, then the summed IOU, then the smallest sorted pair
//! list. All three tiers are packed into a single integer edge weight so one
//! exact maximum-weight assignment solve realizes the whole order. IOUs are
//! compared on a fixed-point grid of `2^-IOU_KEY_BITS`, which makes sums and
//! ties exact.
//!
//! Threshold comparison is inclusive (`iou >= threshold`) for both the scorer
//! and the tracker.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, Polygon};

/// Match eligibility threshold used throughout.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.25;

/// Resolution of IOU comparisons when ranking matchings.
pub const IOU_KEY_BITS: u32 = 40;

/// Fixed-point IOU used for all sum and tie comparisons.
pub fn iou_key(iou: f64) -> u64 {
    (iou.clamp(0.0, 1.0) * (1u64 << IOU_KEY_BITS) as f64).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub gt: usize,
    pub prop: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// Sorted by ground-truth index.
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_prop: Vec<usize>,
}

impl MatchResult {
    pub fn cardinality(&self) -> usize {
        self.pairs.len()
    }

    /// Summed IOU, accumulated in pair order.
    pub fn iou_sum(&self) -> f64 {
        self.pairs.iter().map(|p| p.iou).sum()
    }

    pub fn iou_key_sum(&self) -> u128 {
        self.pairs.iter().map(|p| iou_key(p.iou) as u128).sum()
    }

    /// Builds a result from chosen pairs, filling in the unmatched lists.
    pub fn from_pairs(n_gt: usize, n_prop: usize, mut pairs: Vec<MatchPair>) -> Self {
        pairs.sort_by_key(|p| (p.gt, p.prop));
        let mut gt_used = vec![false; n_gt];
        let mut prop_used = vec![false; n_prop];
        for p in &pairs {
            debug_assert!(!gt_used[p.gt] && !prop_used[p.prop], "footprint matched twice");
            gt_used[p.gt] = true;
            prop_used[p.prop] = true;
        }
        let unmatched = |used: Vec<bool>| used.iter().enumerate().filter(|(_, &u)| !u).map(|(i, _)| i).collect();
        MatchResult {
            pairs,
            unmatched_gt: unmatched(gt_used),
            unmatched_prop: unmatched(prop_used),
        }
    }
}

/// Uniform grid over bounding boxes, keyed by cell coordinates.
struct SpatialGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialGrid {
    fn new<P: AsRef<Polygon>>(polys: &[P], cell: f64) -> Self {
        let mut grid = SpatialGrid {
            cell,
            cells: HashMap::new(),
        };
        for (i, p) in polys.iter().enumerate() {
            for key in grid.cover(p.as_ref()) {
                grid.cells.entry(key).or_default().push(i);
            }
        }
        grid
    }

    fn cover(&self, p: &Polygon) -> impl Iterator<Item = (i64, i64)> {
        let b = p.bbox();
        let x0 = (b.min[0] / self.cell).floor() as i64;
        let x1 = (b.max[0] / self.cell).floor() as i64;
        let y0 = (b.min[1] / self.cell).floor() as i64;
        let y1 = (b.max[1] / self.cell).floor() as i64;
        (x0..=x1).flat_map(move |x| (y0..=y1).map(move |y| (x, y)))
    }
}

fn grid_cell_size<G: AsRef<Polygon>, P: AsRef<Polygon>>(a: &[G], b: &[P]) -> f64 {
    let n = (a.len() + b.len()) as f64;
    let extent = |p: &Polygon| p.bbox().width().max(p.bbox().height());
    let total: f64 =
        a.iter().map(|p| extent(p.as_ref())).sum::<f64>() + b.iter().map(|p| extent(p.as_ref())).sum::<f64>();
    (2.0 * total / n).max(1.0)
}

/// All pairs with `iou >= threshold`, sorted by `(gt, prop)`. Only pairs
/// whose bounding boxes share a grid cell are ever clipped.
pub fn candidate_pairs<G, P>(gt: &[G], props: &[P], threshold: f64) -> Vec<MatchPair>
where
    G: AsRef<Polygon>,
    P: AsRef<Polygon>,
{
    if gt.is_empty() || props.is_empty() {
        return Vec::new();
    }
    let grid = SpatialGrid::new(props, grid_cell_size(gt, props));
    let mut seen = vec![usize::MAX; props.len()];
    let mut out = Vec::new();
    let mut local = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        let g = g.as_ref();
        local.clear();
        for key in grid.cover(g) {
            let Some(bucket) = grid.cells.get(&key) else {
                continue;
            };
            for &pi in bucket {
                if seen[pi] == gi {
                    continue;
                }
                seen[pi] = gi;
                let p = props[pi].as_ref();
                if !g.bbox().intersects(&p.bbox()) {
                    continue;
                }
                let v = iou(g, p);
                if v >= threshold {
                    local.push(MatchPair {
                        gt: gi,
                        prop: pi,
                        iou: v,
                    });
                }
            }
        }
        local.sort_by_key(|p| p.prop);
        out.extend_from_slice(&local);
    }
    out
}

/// Optimal one-to-one matching of `gt` against `props`.
pub fn match_frame<G, P>(gt: &[G], props: &[P], threshold: f64) -> MatchResult
where
    G: AsRef<Polygon>,
    P: AsRef<Polygon>,
{
    let candidates = candidate_pairs(gt, props, threshold);
    assign(gt.len(), props.len(), &candidates)
}

/// Selects the optimal matching among `candidates` (cardinality, then summed
/// IOU, then lexicographically smallest pair list).
pub fn assign(n_gt: usize, n_prop: usize, candidates: &[MatchPair]) -> MatchResult {
    let mut chosen = Vec::new();
    for component in components(n_gt, candidates) {
        if component.len() == 1 {
            chosen.push(component[0]);
        } else {
            chosen.extend(solve_component(&component));
        }
    }
    MatchResult::from_pairs(n_gt, n_prop, chosen)
}

/// Connected components of the candidate graph, each sorted by `(gt, prop)`.
fn components(n_gt: usize, candidates: &[MatchPair]) -> Vec<Vec<MatchPair>> {
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let n_prop = candidates.iter().map(|c| c.prop + 1).max().unwrap_or(0);
    // Nodes: gt i -> i, prop j -> n_gt + j.
    let mut parent: Vec<usize> = (0..n_gt + n_prop).collect();
    for c in candidates {
        let a = find(&mut parent, c.gt);
        let b = find(&mut parent, n_gt + c.prop);
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: HashMap<usize, Vec<MatchPair>> = HashMap::new();
    for c in candidates {
        let root = find(&mut parent, c.gt);
        groups.entry(root).or_default().push(*c);
    }
    let mut out: Vec<Vec<MatchPair>> = groups.into_values().collect();
    for g in &mut out {
        g.sort_by_key(|p| (p.gt, p.prop));
    }
    out.sort_by_key(|g| (g[0].gt, g[0].prop));
    out
}

/// Largest component (by candidate count) that fits the single-solve weight
/// packing with the lexicographic tier included.
const MAX_LEX_BITS: usize = 60;
/// Bits reserved for the summed IOU tier in the single-solve packing.
const SUM_BITS: u32 = IOU_KEY_BITS + 11;

fn bits_for(n: usize) -> u32 {
    usize::BITS - n.leading_zeros()
}

fn solve_component(cands: &[MatchPair]) -> Vec<MatchPair> {
    let mut rows: Vec<usize> = cands.iter().map(|c| c.gt).collect();
    rows.sort_unstable();
    rows.dedup();
    let mut cols: Vec<usize> = cands.iter().map(|c| c.prop).collect();
    cols.sort_unstable();
    cols.dedup();
    let row_of: HashMap<usize, usize> = rows.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let col_of: HashMap<usize, usize> = cols.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let side = rows.len().min(cols.len());

    let k = cands.len();
    if k <= MAX_LEX_BITS && side < (1 << 10) {
        // weight = 1 << card_shift  +  iou_key << k  +  1 << (k - 1 - rank)
        let card_shift = k as u32 + SUM_BITS;
        let weights: Vec<i128> = cands
            .iter()
            .enumerate()
            .map(|(rank, c)| (1i128 << card_shift) + ((iou_key(c.iou) as i128) << k) + (1i128 << (k - 1 - rank)))
            .collect();
        let picked = max_weight_matching(rows.len(), cols.len(), cands, &row_of, &col_of, &weights, &[]);
        return picked.into_iter().map(|i| cands[i]).collect();
    }

    // Too many candidates for the lexicographic tier: solve on cardinality
    // and summed IOU, then fix pairs greedily in lexicographic order while
    // the optimum stays reachable.
    let card_shift = IOU_KEY_BITS + bits_for(side) + 1;
    let weights: Vec<i128> = cands
        .iter()
        .map(|c| (1i128 << card_shift) + iou_key(c.iou) as i128)
        .collect();
    let total = |picked: &[usize]| picked.iter().map(|&i| weights[i]).sum::<i128>();
    let best = total(&max_weight_matching(
        rows.len(),
        cols.len(),
        cands,
        &row_of,
        &col_of,
        &weights,
        &[],
    ));

    let mut fixed: Vec<usize> = Vec::new();
    let mut row_used = vec![false; rows.len()];
    let mut col_used = vec![false; cols.len()];
    for (i, c) in cands.iter().enumerate() {
        let (r, q) = (row_of[&c.gt], col_of[&c.prop]);
        if row_used[r] || col_used[q] {
            continue;
        }
        fixed.push(i);
        let rest = max_weight_matching(rows.len(), cols.len(), cands, &row_of, &col_of, &weights, &fixed);
        if total(&fixed) + total(&rest) == best {
            row_used[r] = true;
            col_used[q] = true;
        } else {
            fixed.pop();
        }
    }
    fixed.into_iter().map(|i| cands[i]).collect()
}

/// Exact maximum-weight matching over the candidate edges of one component,
/// excluding the rows and columns of `exclude`. Returns candidate indices.
fn max_weight_matching(
    n_rows: usize,
    n_cols: usize,
    cands: &[MatchPair],
    row_of: &HashMap<usize, usize>,
    col_of: &HashMap<usize, usize>,
    weights: &[i128],
    exclude: &[usize],
) -> Vec<usize> {
    let mut row_blocked = vec![false; n_rows];
    let mut col_blocked = vec![false; n_cols];
    for &i in exclude {
        row_blocked[row_of[&cands[i].gt]] = true;
        col_blocked[col_of[&cands[i].prop]] = true;
    }
    let transpose = n_rows > n_cols;
    let (n, m) = if transpose { (n_cols, n_rows) } else { (n_rows, n_cols) };
    let mut weight = vec![0i128; n * m];
    let mut edge = vec![usize::MAX; n * m];
    for (i, c) in cands.iter().enumerate() {
        let (r, q) = (row_of[&c.gt], col_of[&c.prop]);
        if row_blocked[r] || col_blocked[q] {
            continue;
        }
        let (a, b) = if transpose { (q, r) } else { (r, q) };
        weight[a * m + b] = weights[i];
        edge[a * m + b] = i;
    }
    let assignment = hungarian_max(n, m, &weight);
    assignment
        .into_iter()
        .enumerate()
        .filter_map(|(a, b)| {
            let e = edge[a * m + b];
            (e != usize::MAX).then_some(e)
        })
        .collect()
}

/// Shortest-augmenting-path Hungarian method on a dense `n × m` matrix with
/// `n <= m`, maximizing total weight. Returns the column of each row.
fn hungarian_max(n: usize, m: usize, weight: &[i128]) -> Vec<usize> {
    debug_assert!(n <= m);
    const INF: i128 = i128::MAX / 4;
    let cost = |i: usize, j: usize| -weight[(i - 1) * m + (j - 1)];
    let mut u = vec![0i128; n + 1];
    let mut v = vec![0i128; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}
