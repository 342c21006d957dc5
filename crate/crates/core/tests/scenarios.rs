use psclab::platform::grid::FFS_PER_SLICE;
use psclab::platform::Coord;
use psclab::scenario::{
    fence_activity, make_scenario, neighbor_activity, ActivitySource, FencePolicy, NeighborSpec, RoFenceConfig,
    RoKind, ScenarioKind, ScenarioSpec, Side, SourceKind, VICTIM_LOGIC_ID,
};
use std::collections::HashMap;

fn fence(ro_total: u32, ros_per_slice: u32, ro_kind: RoKind, policy: FencePolicy) -> RoFenceConfig {
    RoFenceConfig { ro_total, ros_per_slice, ro_kind, policy }
}

fn slice_counts(cs: &[Coord]) -> HashMap<Coord, usize> {
    let mut m = HashMap::new();
    for c in cs {
        *m.entry(*c).or_default() += 1;
    }
    m
}

#[test]
fn baseline_packs_sixteen_slices_between_the_sensors() {
    let s = make_scenario(&ScenarioSpec::baseline()).unwrap();
    let slices = slice_counts(&s.grid.victim_ff_positions);
    assert_eq!(s.grid.victim_ff_positions.len(), 128);
    assert_eq!(slices.len(), 16);
    assert!(slices.values().all(|&n| n == FFS_PER_SLICE));
    let bbox = s.grid.victim_bbox().unwrap();
    assert_eq!((bbox.width(), bbox.height()), (4, 4));
    let [left, right] = [s.grid.sensor_positions[0], s.grid.sensor_positions[1]];
    assert!(left.x < bbox.min.x && right.x > bbox.max.x);
    assert!(s.fence.is_none());
}

#[test]
fn spread_ff_spacing_sets_the_pitch() {
    let s = make_scenario(&ScenarioSpec::new(ScenarioKind::SpreadFf { spacing: 3 })).unwrap();
    let slices: Vec<Coord> = slice_counts(&s.grid.victim_ff_positions).into_keys().collect();
    for a in &slices {
        let nearest = slices
            .iter()
            .filter(|b| *b != a)
            .map(|b| ((b.x - a.x).abs(), (b.y - a.y).abs()))
            .filter(|&(dx, dy)| dx == 0 || dy == 0)
            .map(|(dx, dy)| dx.max(dy))
            .min()
            .unwrap();
        assert_eq!(nearest, 4);
    }
    // both axes are used
    assert!(slices.iter().any(|b| b.x != slices[0].x) && slices.iter().any(|b| b.y != slices[0].y));
}

#[test]
fn wider_spread_moves_flip_flops_away_from_sensors() {
    let mean_dist = |spacing| {
        let s = make_scenario(&ScenarioSpec::new(ScenarioKind::SpreadFf { spacing })).unwrap();
        let at = s.grid.sensor_positions[0];
        s.grid.victim_ff_positions.iter().map(|c| c.distance(&at)).sum::<f64>() / 128.0
    };
    let d: Vec<f64> = [0, 1, 2, 3, 6].into_iter().map(mean_dist).collect();
    assert!(d.windows(2).all(|w| w[1] > w[0]), "{d:?}");
}

#[test]
fn paper_fence_build_has_one_ro_per_slice() {
    let spec = ScenarioSpec::new(ScenarioKind::ActiveFence(fence(896, 1, RoKind::SingleLut, FencePolicy::AlwaysOn)));
    let s = make_scenario(&spec).unwrap();
    assert_eq!(s.grid.fence_elements.len(), 896);
    assert!(s.grid.fence_elements.iter().all(|e| e.count == 1));
    // one LUT out of eight per slice
    let occupancy = 1.0 / psclab::platform::grid::LUTS_PER_SLICE as f64;
    assert_eq!(occupancy, 0.125);
    let victim: std::collections::HashSet<Coord> = s.grid.victim_ff_positions.iter().copied().collect();
    assert!(s.grid.fence_elements.iter().all(|e| !victim.contains(&e.position)));
}

#[test]
fn fence_density_and_capacity() {
    let s = make_scenario(&ScenarioSpec::new(ScenarioKind::ActiveFence(fence(
        896 * 8,
        8,
        RoKind::SingleLut,
        FencePolicy::AlwaysOn,
    ))))
    .unwrap();
    assert_eq!(s.grid.fence_elements.len(), 896);
    assert!(s.grid.fence_elements.iter().all(|e| e.count == 8));
    assert!(fence(10, 9, RoKind::SingleLut, FencePolicy::AlwaysOn).validate().is_err());
    assert!(fence(10, 0, RoKind::SingleLut, FencePolicy::AlwaysOn).validate().is_err());
    assert!(fence(10, 2, RoKind::SingleLut, FencePolicy::Random { p: 1.5 }).validate().is_err());
}

#[test]
fn fence_activity_examples() {
    let mut r = psclab::rng::stream(0, "fence-test", 0);
    let on = fence(896, 1, RoKind::SingleLut, FencePolicy::AlwaysOn);
    assert_eq!(fence_activity(&on, 10.0, 128.0, &mut r), 896);
    let never = fence(50, 1, RoKind::SingleLut, FencePolicy::Random { p: 0.0 });
    assert!((0..100).all(|_| fence_activity(&never, 0.0, 128.0, &mut r) == 0));
    let fb = fence(896, 1, RoKind::SingleLut, FencePolicy::SensorFeedback { gain: 10.0 });
    assert_eq!(fence_activity(&fb, 128.0, 128.0, &mut r), 0);
    assert_eq!(fence_activity(&fb, 120.0, 128.0, &mut r), 80);
    assert_eq!(fence_activity(&fb, 0.0, 128.0, &mut r), 896);
    assert_eq!(fence_activity(&fb, 200.0, 128.0, &mut r), 0);
}

#[test]
fn single_lut_to_flipflop_ratio() {
    let ratio = RoKind::SingleLut.power_per_active_ro() / RoKind::FlipflopBased.power_per_active_ro();
    assert!((ratio - 1400.0 / 284.01).abs() < 1e-12);
    assert!((ratio - 4.93).abs() < 0.005);
    // fence power is linear in the active count, so equal counts keep the ratio
    let per = |k: RoKind, n: u32| n as f64 * k.power_per_active_ro();
    for n in [1, 100, 896] {
        assert!((per(RoKind::SingleLut, n) / per(RoKind::FlipflopBased, n) - ratio).abs() < 1e-12);
    }
}

#[test]
fn neighbor_sampling_matches_its_mean() {
    let mut r = psclab::rng::stream(3, "neighbor-test", 0);
    for kind in [
        SourceKind::Kalman { input_bits: 16 },
        SourceKind::Kalman { input_bits: 48 },
        SourceKind::Processor,
    ] {
        let src = ActivitySource::new(1, kind);
        let sampler = src.sampler().unwrap();
        let n = 1_000_000;
        let mean = (0..n).map(|_| sampler.sample(&mut r) as f64).sum::<f64>() / n as f64;
        assert!((mean / src.mean_activity() - 1.0).abs() < 0.01, "{mean} vs {}", src.mean_activity());
    }
    let mut silent = ActivitySource::new(1, SourceKind::Processor);
    silent.toggle_probability = 0.0;
    assert!((0..1000).all(|_| neighbor_activity(&silent, &mut r).unwrap() == 0));
}

#[test]
fn kalman_width_orders_activity() {
    let k16 = ActivitySource::new(1, SourceKind::Kalman { input_bits: 16 });
    let k48 = ActivitySource::new(2, SourceKind::Kalman { input_bits: 48 });
    assert!(k48.mean_activity() > k16.mean_activity());
    let mut r = psclab::rng::stream(4, "neighbor-test", 0);
    let n = 100_000;
    let m16 = (0..n).map(|_| neighbor_activity(&k16, &mut r).unwrap() as f64).sum::<f64>() / n as f64;
    let m48 = (0..n).map(|_| neighbor_activity(&k48, &mut r).unwrap() as f64).sum::<f64>() / n as f64;
    assert!(m48 > m16);

    assert_eq!((k16.elements, k16.toggle_probability), (200, 0.25));
    let sd = (200.0f64 * 0.25 * 0.75 / n as f64).sqrt();
    assert!((m16 - 50.0).abs() < 3.0 * sd, "{m16}");
}

#[test]
fn neighbor_blocks_sit_outside_the_victim() {
    let spec = ScenarioSpec::new(ScenarioKind::Neighbor {
        sources: vec![
            NeighborSpec::new(SourceKind::Kalman { input_bits: 48 }, Side::Below),
            NeighborSpec::new(SourceKind::Processor, Side::Above),
        ],
    });
    let s = make_scenario(&spec).unwrap();
    let bbox = s.grid.victim_bbox().unwrap();
    // the victim's own LUT cloud shares its slices; third-party logic must not
    for e in s.grid.neighbor_elements.iter().filter(|e| e.owner != VICTIM_LOGIC_ID) {
        let inside = (bbox.min.x..=bbox.max.x).contains(&e.position.x) && (bbox.min.y..=bbox.max.y).contains(&e.position.y);
        assert!(!inside);
    }
    let owners: std::collections::HashSet<usize> = s.grid.neighbor_elements.iter().map(|e| e.owner).collect();
    assert!(owners.len() >= 3, "victim logic plus two neighbors: {owners:?}");
}

#[test]
fn layout_is_deterministic() {
    for kind in [
        ScenarioKind::Baseline {},
        ScenarioKind::SpreadFf { spacing: 2 },
        ScenarioKind::SpreadFfLut { ff_spacing: 1, lut_spacing: 2 },
        ScenarioKind::Blocks { ff_block_w: 4, ff_block_h: 4, lut_block_w: 16, lut_block_h: 12, gap_slices: 3 },
        ScenarioKind::ActiveFence(fence(896, 2, RoKind::FlipflopBased, FencePolicy::Random { p: 0.5 })),
    ] {
        let spec = ScenarioSpec::new(kind);
        assert_eq!(make_scenario(&spec).unwrap().grid, make_scenario(&spec).unwrap().grid);
    }
}

#[test]
fn oversized_layouts_are_rejected() {
    let spec = ScenarioSpec::new(ScenarioKind::SpreadFf { spacing: 40 });
    assert!(make_scenario(&spec).is_err());
}

#[test]
fn scenario_files_are_strict() {
    let ok = r#"{"schema_version": 1, "kind": {"type": "spread_ff", "spacing": 3}}"#;
    let spec = ScenarioSpec::from_json(ok).unwrap();
    assert_eq!(ScenarioSpec::from_json(&spec.to_json()).unwrap(), spec);
    assert!(ScenarioSpec::from_json(r#"{"kind": {"type": "baseline"}}"#).is_err());
    assert!(ScenarioSpec::from_json(r#"{"schema_version": 1, "kind": {"type": "baseline"}, "x": 0}"#).is_err());
    assert!(ScenarioSpec::from_json(r#"{"schema_version": 1, "kind": {"type": "baseline", "spacing": 1}}"#).is_err());
    assert!(ScenarioSpec::from_json(r#"{"schema_version": 2, "kind": {"type": "baseline"}}"#).is_err());
    assert_ne!(spec.digest(), ScenarioSpec::baseline().digest());
}
