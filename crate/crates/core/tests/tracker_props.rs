use std::collections::HashSet;

use proptest::prelude::*;
use scot_core::geometry::Polygon;
use scot_core::io::track_masks;
use scot_core::synth::month_label;
use scot_core::tracker::{polygonize_mask, propagate_ids, rasterize, BinaryMask, TrackerConfig};

/// Non-touching rectangles on a coarse lattice; each cell of side 8 holds
/// at most one rectangle with a one-pixel margin on every side.
fn lattice_mask(cells: &[(usize, usize, usize, usize)], present: &[bool]) -> BinaryMask {
    let mut m = BinaryMask::empty(64, 64);
    for (k, &(w, h, dx, dy)) in cells.iter().enumerate() {
        if !present[k] {
            continue;
        }
        let (cx, cy) = ((k % 8) * 8, (k / 8) * 8);
        for y in 0..h {
            for x in 0..w {
                m.set(cx + 1 + dx + x, cy + 1 + dy + y, true);
            }
        }
    }
    m
}

fn cell_strategy() -> impl Strategy<Value = Vec<(usize, usize, usize, usize)>> {
    prop::collection::vec((1usize..=6, 1usize..=6), 64).prop_flat_map(|sizes| {
        sizes
            .into_iter()
            .map(|(w, h)| (Just(w), Just(h), 0..=(6 - w), 0..=(6 - h)))
            .collect::<Vec<_>>()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rectangles_round_trip_through_polygons(
        cells in cell_strategy(),
        present in prop::collection::vec(any::<bool>(), 64),
    ) {
        let mask = lattice_mask(&cells, &present);
        let polys = polygonize_mask(&mask, 0.0);
        prop_assert_eq!(polys.len(), present.iter().filter(|&&p| p).count());
        let total: f64 = polys.iter().map(Polygon::area).sum();
        prop_assert!((total - mask.count() as f64).abs() < 1e-9);
        prop_assert_eq!(rasterize(&polys, 64, 64), mask);
    }

    #[test]
    fn arbitrary_masks_keep_every_pixel(bits in prop::collection::vec(any::<bool>(), 20 * 20)) {
        let mask = BinaryMask::new(20, 20, bits).unwrap();
        let polys = polygonize_mask(&mask, 0.0);
        let back = rasterize(&polys, 20, 20);
        for y in 0..20 {
            for x in 0..20 {
                if mask.get(x, y) {
                    prop_assert!(back.get(x, y), "pixel ({x}, {y}) lost");
                }
            }
        }
    }
}

fn frame_polys(cells: &[(usize, usize, usize, usize)], present: &[bool]) -> Vec<Polygon> {
    polygonize_mask(&lattice_mask(cells, present), 0.0)
}

#[test]
fn ids_are_unique_and_follow_cells() {
    let cells: Vec<_> = (0..64).map(|k| (2 + k % 5, 2 + (k / 5) % 5, 0, 0)).collect();
    let schedule: Vec<Vec<bool>> = (0..6)
        .map(|t| (0..64).map(|k| (k * 7 + t * 3) % 11 != 0 && k < 40 + 4 * t).collect())
        .collect();
    let frames: Vec<Vec<Polygon>> = schedule.iter().map(|p| frame_polys(&cells, p)).collect();
    let ids = propagate_ids(&frames, &TrackerConfig::default());
    for (t, frame_ids) in ids.iter().enumerate() {
        assert_eq!(frame_ids.len(), frames[t].len());
        let unique: HashSet<_> = frame_ids.iter().collect();
        assert_eq!(unique.len(), frame_ids.len());
    }
    // A footprint keeps its id exactly when its cell was occupied in the previous frame.
    let cell_of = |p: &Polygon| {
        let b = p.bbox();
        (b.min[1] as usize / 8) * 8 + b.min[0] as usize / 8
    };
    for t in 1..frames.len() {
        for (i, p) in frames[t].iter().enumerate() {
            let k = cell_of(p);
            let prev = frames[t - 1].iter().position(|q| cell_of(q) == k);
            match prev {
                Some(j) => assert_eq!(ids[t][i], ids[t - 1][j]),
                None => assert!(ids[..t].iter().flatten().all(|&old| old != ids[t][i])),
            }
        }
    }
}

#[test]
fn mask_directory_is_tracked() {
    let dir = tempfile::tempdir().unwrap();
    let cells: Vec<_> = (0..64).map(|_| (4, 4, 1, 1)).collect();
    let schedule: Vec<Vec<bool>> = (0..4).map(|t| (0..64).map(|k| k < 10 + 2 * t).collect()).collect();
    for (t, present) in schedule.iter().enumerate() {
        lattice_mask(&cells, present)
            .save(&dir.path().join(format!("mask_{}.png", month_label(t))))
            .unwrap();
    }
    let series = track_masks(dir.path(), &TrackerConfig::default(), 4.0).unwrap();
    assert_eq!(series.frames.len(), 4);
    let counts: Vec<_> = series.frames.iter().map(|f| f.footprints.len()).collect();
    assert_eq!(counts, [10, 12, 14, 16]);
    let distinct: HashSet<_> = series.frames.iter().flat_map(|f| f.ids()).collect();
    assert_eq!(distinct.len(), 16);
}
