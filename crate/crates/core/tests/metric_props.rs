use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scot_core::metric::{combine, score_aoi, Frame, ScotConfig, TimeSeries};
use scot_core::synth::{gen_scenario, perturb, static_proposals, PerturbationSpec, ScenarioSpec};

fn scenario(seed: u64, occlusion_rate: f64) -> TimeSeries {
    gen_scenario(&ScenarioSpec {
        n_initial_buildings: 40,
        n_frames: 10,
        construction_rate: 3.0,
        occlusion_rate,
        grid_extent: 400.0,
        seed,
        ..Default::default()
    })
    .unwrap()
    .series
}

fn renamed(series: &TimeSeries, rng: &mut ChaCha8Rng) -> TimeSeries {
    let mut ids: Vec<String> = series
        .frames
        .iter()
        .flat_map(|f| f.ids().map(String::from))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let original = ids.clone();
    ids.shuffle(rng);
    let table: BTreeMap<String, String> = original
        .into_iter()
        .zip(ids)
        .map(|(a, b)| (a, format!("x-{b}")))
        .collect();
    series.map_ids(|id| table[id].clone())
}

#[test]
fn scores_ignore_id_spelling() {
    let cfg = ScotConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let gt = scenario(seed, 0.1);
        let props = perturb(
            &gt,
            &PerturbationSpec {
                jitter_px: 0.8,
                drop_rate: 0.1,
                spurious_rate: 2.0,
                id_swap_rate: 0.05,
                delay_frames: 1,
                extent: 400.0,
                seed,
            },
        )
        .unwrap()
        .series;
        let base = score_aoi(&gt, &props, &cfg).unwrap();
        let other = score_aoi(&renamed(&gt, &mut rng), &renamed(&props, &mut rng), &cfg).unwrap();
        assert_eq!(base, other, "seed {seed}");
    }
}

#[test]
fn perfect_proposals_score_one() {
    let cfg = ScotConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..10 {
        let gt = scenario(seed, 0.2);
        for props in [gt.clone(), renamed(&gt, &mut rng)] {
            let s = score_aoi(&gt, &props, &cfg).unwrap();
            assert_eq!((s.counts.fp, s.counts.fn_, s.counts.mm), (0, 0, 0));
            assert_eq!(s.counts.fp_new + s.counts.fn_new, 0);
            assert_eq!(s.counts.tp as usize, gt.footprint_count());
            for v in [s.f1, s.f_track, s.f_change, s.f_scot, s.mota.unwrap()] {
                assert_eq!(v, 1.0);
            }
        }
    }
}

#[test]
fn mismatches_equal_logged_swaps() {
    let cfg = ScotConfig::default();
    for seed in 0..20 {
        let gt = scenario(seed, 0.0);
        let p = perturb(
            &gt,
            &PerturbationSpec {
                id_swap_rate: 0.1,
                extent: 400.0,
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let s = score_aoi(&gt, &p.series, &cfg).unwrap();
        assert_eq!(s.counts.mm as usize, p.log.swaps.len(), "seed {seed}");
        assert_eq!((s.counts.fp, s.counts.fn_), (0, 0));
        assert!(!p.log.swaps.is_empty());
    }
}

#[test]
fn more_id_changes_never_help() {
    let cfg = ScotConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt = scenario(11, 0.15);
    let ids: Vec<String> = gt.frames.last().unwrap().ids().map(String::from).collect();
    let n_frames = gt.frames.len();
    let mut events: Vec<(String, usize)> = Vec::new();
    let mut previous = score_aoi(&gt, &gt, &cfg).unwrap();
    for _ in 0..60 {
        events.push((
            ids[rng.random_range(0..ids.len())].clone(),
            rng.random_range(1..n_frames),
        ));
        // Each event renames one building's proposals from its frame onward.
        let frames = gt
            .frames
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let mut f = f.clone();
                for fp in &mut f.footprints {
                    let k = events.iter().filter(|(b, s)| *b == fp.id && *s <= t).count();
                    fp.id = format!("{}#{k}", fp.id);
                }
                f
            })
            .collect();
        let props = TimeSeries::new(gt.aoi_id.clone(), frames).unwrap();
        let s = score_aoi(&gt, &props, &cfg).unwrap();
        assert!(s.counts.mm >= previous.counts.mm);
        assert!(s.f_track <= previous.f_track);
        assert!(s.f_scot <= previous.f_scot);
        assert_eq!(s.f1, 1.0);
        if s.counts.mm > previous.counts.mm {
            assert!(s.f_track < previous.f_track);
        }
        previous = s;
    }
    assert!(previous.counts.mm > 20);
}

#[test]
fn static_proposals_score_zero_change() {
    let cfg = ScotConfig::default();
    for seed in 0..10 {
        let gt = scenario(seed, 0.0);
        let s = score_aoi(&gt, &static_proposals(&gt), &cfg).unwrap();
        assert_eq!(s.counts.tp_new, 0);
        assert_eq!(s.f_change, 0.0);
        assert_eq!(s.f_scot, 0.0);
        assert!(s.f_track > 0.5);
    }
}

#[test]
fn missing_later_proposal_frame_equals_empty_frame() {
    let cfg = ScotConfig::default();
    let gt = scenario(4, 0.1);
    let props = perturb(
        &gt,
        &PerturbationSpec {
            jitter_px: 0.5,
            id_swap_rate: 0.05,
            extent: 400.0,
            seed: 4,
            ..Default::default()
        },
    )
    .unwrap()
    .series;
    for drop in [1, 3, 9] {
        let mut removed = props.clone();
        removed.frames.remove(drop);
        let mut emptied = props.clone();
        emptied.frames[drop] = Frame::new(emptied.frames[drop].label.clone(), Vec::new());
        assert_eq!(
            score_aoi(&gt, &removed, &cfg).unwrap(),
            score_aoi(&gt, &emptied, &cfg).unwrap()
        );
    }
}

#[test]
fn exchanging_roles_swaps_errors() {
    let cfg = ScotConfig::default();
    let gt = scenario(8, 0.1);
    let props = perturb(
        &gt,
        &PerturbationSpec {
            drop_rate: 0.2,
            spurious_rate: 3.0,
            extent: 400.0,
            seed: 8,
            ..Default::default()
        },
    )
    .unwrap()
    .series;
    let a = score_aoi(&gt, &props, &cfg).unwrap().counts;
    let b = score_aoi(&props, &gt, &cfg).unwrap().counts;
    assert_eq!((a.tp, a.fp, a.fn_), (b.tp, b.fn_, b.fp));
    assert!(a.fp > 0 && a.fn_ > 0);
}

proptest! {
    #[test]
    fn combine_lies_between_its_terms(ft in 0.0..=1.0f64, fc in 0.0..=1.0f64, beta in 0.1..10.0f64) {
        let s = combine(ft, fc, beta);
        prop_assert!(s >= ft.min(fc) - 1e-12 && s <= ft.max(fc) + 1e-12, "{s} outside [{ft}, {fc}]");
    }

    #[test]
    fn combine_vanishes_with_either_term(f in 0.0..=1.0f64, beta in 0.1..10.0f64) {
        prop_assert_eq!(combine(0.0, f, beta), 0.0);
        prop_assert_eq!(combine(f, 0.0, beta), 0.0);
    }

    #[test]
    fn large_beta_approaches_tracking(ft in 0.05..=1.0f64, fc in 0.05..=1.0f64) {
        prop_assert!((combine(ft, fc, 1e4) - ft).abs() < 1e-3);
        prop_assert!((combine(ft, fc, 1e-4) - fc).abs() < 1e-3);
        // At beta = 1 the weighted mean is the plain harmonic mean.
        prop_assert!((combine(ft, fc, 1.0) - 2.0 * ft * fc / (ft + fc)).abs() < 1e-12);
    }
}
