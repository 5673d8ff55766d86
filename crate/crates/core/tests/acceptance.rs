//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scot_core::geometry::{intersection_area, iou, Polygon, RawPolygon};
use scot_core::matching::{match_frame, DEFAULT_IOU_THRESHOLD};
use scot_core::metric::{combine, score_aoi, MatchCounts, ScotConfig, TimeSeries};
use scot_core::synth::{
    brute_force_match, four_building_scenario, gen_scenario, perturb, static_proposals, PerturbationSpec, ScenarioSpec,
};
use scot_core::tracker::{track_series, TrackerConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let took = start.elapsed();
    if took > limit {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    } else {
        Ok(took)
    }
}

fn growth_scenario(seed: u64) -> scot_core::synth::Scenario {
    gen_scenario(&ScenarioSpec {
        aoi_id: format!("growth{seed}"),
        seed,
        ..Default::default()
    })
    .expect("valid spec")
}

fn bijection(series: &TimeSeries) -> TimeSeries {
    series.map_ids(|id| format!("prop-{}", id.chars().rev().collect::<String>()))
}

fn criterion_1() -> Outcome {
    let got = combine(0.40, 0.06, 2.0);
    ensure!((got - 0.1875).abs() <= 1e-12, "combine = {got}");
    ensure!((0.17 - got).abs() <= 0.10, "{got} outside reported mean band");
    Ok(format!("combine(0.40, 0.06, 2) = {got}"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let cfg = ScotConfig::default();
    let mut new_total = 0;
    for seed in 0..50 {
        let sc = growth_scenario(seed);
        ensure!(sc.trace.new_footprints() > 0, "seed {seed} has no construction");
        new_total += sc.trace.new_footprints();
        let s = score_aoi(&sc.series, &static_proposals(&sc.series), &cfg).map_err(|e| e.to_string())?;
        ensure!(
            s.f_change == 0.0 && s.f_scot == 0.0,
            "seed {seed}: f_change {} f_scot {}",
            s.f_change,
            s.f_scot
        );
    }
    let took = within(Duration::from_secs(10), start)?;
    Ok(format!(
        "50 scenarios, {new_total} new footprints, f_change = f_scot = 0 ({took:.2?})"
    ))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cfg = ScotConfig::default();
    for seed in 0..50 {
        let gt = growth_scenario(seed).series;
        let s = score_aoi(&gt, &bijection(&gt), &cfg).map_err(|e| e.to_string())?;
        for (name, v) in [
            ("f1", s.f1),
            ("f_track", s.f_track),
            ("f_change", s.f_change),
            ("f_scot", s.f_scot),
        ] {
            ensure!(v == 1.0, "seed {seed}: {name} = {v}");
        }
    }
    let took = within(Duration::from_secs(10), start)?;
    Ok(format!("50 scenarios score 1.0 on every term ({took:.2?})"))
}

fn random_frame(rng: &mut ChaCha8Rng, n: usize) -> Vec<Polygon> {
    (0..n)
        .map(|_| {
            let (x, y) = (rng.random_range(0..12) as f64, rng.random_range(0..12) as f64);
            let (w, h) = (rng.random_range(2..9) as f64, rng.random_range(2..9) as f64);
            RawPolygon::rect(x, y, x + w, y + h).validate().unwrap()
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let rect = |x0, x1| RawPolygon::rect(x0, 0.0, x1, 10.0).validate().unwrap();
    // g0 overlaps p0 strongly and p1 weakly; g1 overlaps only p0.
    let gt = [rect(0.0, 10.0), rect(6.0, 16.0)];
    let props = [rect(1.0, 11.0), rect(-5.0, 5.0)];
    let m = match_frame(&gt, &props, DEFAULT_IOU_THRESHOLD);
    let pairs: Vec<_> = m.pairs.iter().map(|p| (p.gt, p.prop)).collect();
    ensure!(pairs == [(0, 1), (1, 0)], "conflict fixture matched {pairs:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let frames = 1200;
    let mut pairs_seen = 0;
    for trial in 0..frames {
        let (n_gt, n_prop) = (rng.random_range(0..=8), rng.random_range(0..=8));
        let gt = random_frame(&mut rng, n_gt);
        let props = random_frame(&mut rng, n_prop);
        let fast = match_frame(&gt, &props, DEFAULT_IOU_THRESHOLD);
        let slow = brute_force_match(&gt, &props, DEFAULT_IOU_THRESHOLD).map_err(|e| e.to_string())?;
        ensure!(
            fast.cardinality() == slow.cardinality(),
            "frame {trial}: cardinality differs"
        );
        ensure!(
            fast.iou_key_sum() == slow.iou_key_sum(),
            "frame {trial}: summed IOU differs"
        );
        ensure!(
            fast.iou_sum() == slow.iou_sum(),
            "frame {trial}: float summed IOU differs"
        );
        pairs_seen += fast.cardinality();
    }
    let took = within(Duration::from_secs(60), start)?;
    Ok(format!(
        "{frames} frames, {pairs_seen} matched pairs, conflict fixture ok ({took:.2?})"
    ))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = ScotConfig::default();
    let mut total = 0;
    for seed in 0..20 {
        let gt = growth_scenario(seed).series;
        let p = perturb(
            &gt,
            &PerturbationSpec {
                id_swap_rate: 0.05,
                seed,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let s = score_aoi(&gt, &p.series, &cfg).map_err(|e| e.to_string())?;
        ensure!(
            s.counts.mm as usize == p.log.swaps.len(),
            "seed {seed}: mm {} vs {} swaps",
            s.counts.mm,
            p.log.swaps.len()
        );
        total += p.log.swaps.len();
    }
    ensure!(total > 0, "no swaps were generated");
    let took = within(Duration::from_secs(10), start)?;
    Ok(format!("20 seeds, {total} swaps, mm equal on every run ({took:.2?})"))
}

fn star(rng: &mut ChaCha8Rng) -> Polygon {
    let n = rng.random_range(3..12);
    let (cx, cy) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let ring = (0..n)
        .map(|i| {
            let a = phase + std::f64::consts::TAU * i as f64 / n as f64;
            let r: f64 = rng.random_range(1.0..15.0);
            [cx + r * a.cos(), cy + r * a.sin()]
        })
        .collect();
    RawPolygon::new(ring).validate().unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let sq = |x: f64| RawPolygon::rect(x, 0.0, x + 1.0, 1.0).validate().unwrap();
    let cases = [
        (sq(0.0), sq(0.0), 1.0),
        (sq(0.0), sq(2.0), 0.0),
        (sq(0.0), sq(0.5), 1.0 / 3.0),
    ];
    for (a, b, want) in &cases {
        let got = iou(a, b);
        ensure!((got - want).abs() <= 1e-9, "analytic case: {got} vs {want}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let checks = 10_000;
    for k in 0..checks {
        let (a, b) = (star(&mut rng), star(&mut rng));
        let (ab, ba) = (iou(&a, &b), iou(&b, &a));
        ensure!((ab - ba).abs() <= 1e-9, "check {k}: asymmetric {ab} vs {ba}");
        ensure!((0.0..=1.0).contains(&ab), "check {k}: iou {ab} out of range");
        ensure!(
            intersection_area(&a, &b) <= a.area().min(b.area()) + 1e-9,
            "check {k}: intersection exceeds smaller area"
        );
        ensure!((iou(&a, &a) - 1.0).abs() <= 1e-9, "check {k}: self iou");
    }
    let took = within(Duration::from_secs(30), start)?;
    Ok(format!("3 analytic cases, {checks} randomized checks ({took:.2?})"))
}

/// Counts for series whose footprints pair up one-to-one by position within
/// each frame, tallied straight from the id sequences.
fn positional_counts(gt: &TimeSeries, props: &TimeSeries) -> MatchCounts {
    let mut c = MatchCounts::default();
    let mut last_prop: HashMap<&str, &str> = HashMap::new();
    let mut last_gt: HashMap<&str, &str> = HashMap::new();
    let first_frame = |s: &TimeSeries| {
        let mut m: BTreeMap<String, usize> = BTreeMap::new();
        for (t, f) in s.frames.iter().enumerate() {
            for id in f.ids() {
                m.entry(id.to_string()).or_insert(t);
            }
        }
        m
    };
    let (gt_first, prop_first) = (first_frame(gt), first_frame(props));
    for (t, (gf, pf)) in gt.frames.iter().zip(&props.frames).enumerate() {
        for (g, p) in gf.ids().zip(pf.ids()) {
            c.tp += 1;
            let changed = last_prop.get(g).is_some_and(|&q| q != p) || last_gt.get(p).is_some_and(|&h| h != g);
            c.mm += changed as u64;
            last_prop.insert(g, p);
            last_gt.insert(p, g);
            let g_new = t > 0 && gt_first[g] == t;
            let p_new = t > 0 && prop_first[p] == t;
            match (g_new, p_new) {
                (true, true) => c.tp_new += 1,
                (true, false) => c.fn_new += 1,
                (false, true) => c.fp_new += 1,
                (false, false) => {}
            }
        }
    }
    c
}

fn criterion_7() -> Outcome {
    let (gt, props) = four_building_scenario();
    let s = score_aoi(&gt, &props, &ScotConfig::default()).map_err(|e| e.to_string())?;
    let frozen = MatchCounts {
        tp: 15,
        fp: 0,
        fn_: 0,
        mm: 1,
        tp_new: 2,
        fp_new: 1,
        fn_new: 0,
    };
    ensure!(s.counts == frozen, "counts {:?}", s.counts);
    ensure!(positional_counts(&gt, &props) == frozen, "positional tally disagrees");
    ensure!((s.f_track - 14.0 / 15.0).abs() <= 1e-12, "f_track {}", s.f_track);
    ensure!((s.f_change - 0.8).abs() <= 1e-12, "f_change {}", s.f_change);
    Ok(format!(
        "tp {} fp {} fn {} mm {} tp_new {} fp_new {} fn_new {}, f_scot {:.6}",
        s.counts.tp,
        s.counts.fp,
        s.counts.fn_,
        s.counts.mm,
        s.counts.tp_new,
        s.counts.fp_new,
        s.counts.fn_new,
        s.f_scot
    ))
}

fn criterion_8() -> Outcome {
    let cfg = ScotConfig::default();
    let spec = ScenarioSpec {
        n_initial_buildings: 30,
        n_frames: 6,
        construction_rate: 1.0,
        seed: 8,
        ..Default::default()
    };
    let gt = gen_scenario(&spec).map_err(|e| e.to_string())?.series;
    let noisy = perturb(
        &gt,
        &PerturbationSpec {
            drop_rate: 0.3,
            spurious_rate: 60.0,
            id_swap_rate: 0.2,
            seed: 8,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?
    .series;
    let bad = score_aoi(&gt, &noisy, &cfg).map_err(|e| e.to_string())?;
    let bad_mota = bad.mota.ok_or("undefined MOTA")?;
    ensure!(bad_mota < 0.0, "noisy MOTA {bad_mota}");
    ensure!((0.0..=1.0).contains(&bad.f_scot), "noisy f_scot {}", bad.f_scot);

    let quiet = (0..)
        .map(|seed| {
            gen_scenario(&ScenarioSpec {
                n_initial_buildings: 200,
                n_frames: 12,
                construction_rate: 0.2,
                seed,
                ..Default::default()
            })
            .expect("valid spec")
        })
        .find(|sc| sc.trace.new_footprints() > 0)
        .expect("some seed constructs a building");
    let still = score_aoi(&quiet.series, &static_proposals(&quiet.series), &cfg).map_err(|e| e.to_string())?;
    let still_mota = still.mota.ok_or("undefined MOTA")?;
    ensure!(still_mota > 0.9, "static MOTA {still_mota}");
    ensure!(still.f_scot == 0.0, "static f_scot {}", still.f_scot);
    Ok(format!(
        "noisy: MOTA {bad_mota:.3}, f_scot {:.3}; static: MOTA {still_mota:.4}, f_scot {}",
        bad.f_scot, still.f_scot
    ))
}

fn criterion_9() -> Outcome {
    let sc = gen_scenario(&ScenarioSpec {
        aoi_id: "dense".into(),
        n_initial_buildings: 5000,
        n_frames: 24,
        construction_rate: 5.0,
        occlusion_rate: 0.0,
        grid_extent: 1024.0,
        min_separation: 2.0,
        min_size: 6.0,
        max_size: 12.0,
        seed: 9,
    })
    .map_err(|e| e.to_string())?;
    let gt = sc.series;
    let props = perturb(
        &gt,
        &PerturbationSpec {
            jitter_px: 0.5,
            drop_rate: 0.05,
            spurious_rate: 50.0,
            id_swap_rate: 0.01,
            delay_frames: 1,
            seed: 9,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?
    .series;
    let per_frame = gt.footprint_count() as f64 / gt.frames.len() as f64;
    ensure!(per_frame >= 5000.0, "only {per_frame:.0} footprints per frame");
    let start = Instant::now();
    let s = score_aoi(&gt, &props, &ScotConfig::default()).map_err(|e| e.to_string())?;
    let took = within(Duration::from_secs(30), start)?;
    Ok(format!(
        "{} frames x {per_frame:.0} footprints scored in {took:.2?} (f_scot {:.3})",
        gt.frames.len(),
        s.f_scot
    ))
}

fn fingerprint(series: &TimeSeries) -> u64 {
    // FNV-1a over the id sequence.
    let mut h: u64 = 0xcbf29ce484222325;
    for f in &series.frames {
        for id in f.ids().chain(std::iter::once("|")) {
            for b in id.bytes().chain(std::iter::once(b',')) {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}

/// `(scenario seed, id fingerprint, f_scot bits)` of the tracker self-score
/// on occluded growth scenarios.
const FROZEN_SYNTHETIC: [(u64, u64, u64); 3] = [
    (1, 0x5535a2dd295dab34, 0x3fe87722bf77d84a),
    (2, 0xe5163b0e2498858b, 0x3fe414a925a3c90f),
    (3, 0x14feb6f639839365, 0x3fe7bc16353a34cc),
];

fn criterion_10() -> Outcome {
    let cfg = ScotConfig::default();
    let tcfg = TrackerConfig::default();
    let (gt, _) = four_building_scenario();
    let a = track_series(&gt, &tcfg);
    let b = track_series(&gt, &tcfg);
    ensure!(a == b, "four-building tracking differs between runs");
    let s = score_aoi(&gt, &a, &cfg).map_err(|e| e.to_string())?;
    ensure!(
        s.f_scot.to_bits() == (390.0f64 / 477.0).to_bits(),
        "four-building self-score {:.17}",
        s.f_scot
    );

    for (seed, want_hash, want_bits) in FROZEN_SYNTHETIC {
        let gt = gen_scenario(&ScenarioSpec {
            occlusion_rate: 0.1,
            seed,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?
        .series;
        let a = track_series(&gt, &tcfg);
        ensure!(
            a == track_series(&gt, &tcfg),
            "seed {seed}: tracking differs between runs"
        );
        let s = score_aoi(&gt, &a, &cfg).map_err(|e| e.to_string())?;
        ensure!(
            fingerprint(&a) == want_hash && s.f_scot.to_bits() == want_bits,
            "seed {seed}: ids {:#x}, f_scot {:.17} ({:#x})",
            fingerprint(&a),
            s.f_scot,
            s.f_scot.to_bits()
        );
    }
    Ok(format!(
        "four-building self-score {:.6} and 3 occluded scenarios frozen",
        s.f_scot
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("combine arithmetic", criterion_1),
        ("static proposals score zero", criterion_2),
        ("perfect proposals score one", criterion_3),
        ("matching agrees with exhaustive oracle", criterion_4),
        ("mismatches equal recorded swaps", criterion_5),
        ("geometry suite", criterion_6),
        ("four-building regression fixture", criterion_7),
        ("MOTA versus SCOT", criterion_8),
        ("throughput", criterion_9),
        ("tracker determinism", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
