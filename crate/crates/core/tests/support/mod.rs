//! Property bodies shared by the proptest suite and the acceptance run.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use psclab::aes::{encrypt, expand_key, invert_key_schedule, shift_rows_dst, Block};
use psclab::cpa::{attack_byte, recover_key};
use psclab::leakage::last_round_hypothesis;
use psclab::platform::{synthesize_traces, Tdc, TdcConfig, TraceSet};
use psclab::scenario::ScenarioSpec;
use rand::{Rng, RngCore};

pub type PropResult = Result<(), TestCaseError>;

pub fn block() -> impl Strategy<Value = Block> {
    any::<[u8; 16]>().prop_map(Block)
}

/// Small random trace set leaking byte 0 at the last sample. Samples are
/// integers so affine maps with integer coefficients stay exact.
pub fn trace_set(n: usize, seed: u64) -> TraceSet {
    let mut r = psclab::rng::stream(seed, "test-traces", 0);
    let key = Block([7; 16]);
    let guess = expand_key(&key).last()[shift_rows_dst(0)];
    let s = 13;
    let mut samples = Vec::with_capacity(n * s);
    let mut pts = Vec::new();
    let mut cts = Vec::new();
    for _ in 0..n {
        let mut pt = Block::ZERO;
        r.fill_bytes(&mut pt.0);
        let ct = encrypt(&pt, &key);
        let hd = last_round_hypothesis(&ct, 0, guess);
        for j in 0..s {
            let leak = if j == 12 { hd as f32 } else { 0.0 };
            samples.push(128.0 - leak + r.random_range(0..6) as f32);
        }
        pts.push(pt);
        cts.push(ct);
    }
    TraceSet::new(samples, s, 256, pts, cts, Some((12, 13)), 0, true, [3; 32]).unwrap()
}

pub fn affine_strategy() -> impl Strategy<Value = (u64, i32, i32, bool)> {
    (any::<u64>(), 1i32..6, -300i32..300, any::<bool>())
}

pub fn affine_maps_preserve_rankings((seed, a, b, negate): (u64, i32, i32, bool)) -> PropResult {
    let t = trace_set(64, seed);
    let slope = if negate { -(a as f32) } else { a as f32 };
    let u = t.map_samples(|x| slope * x + b as f32);
    for p in [0usize, 5] {
        for w in [false, true] {
            let c0 = attack_byte(&t, p, w).unwrap();
            let c1 = attack_byte(&u, p, w).unwrap();
            prop_assert_eq!(c0.winning_guess, c1.winning_guess);
            for g in 0..=255u8 {
                prop_assert_eq!(c0.rank_of(g), c1.rank_of(g));
            }
        }
    }
    Ok(())
}

pub fn permutation_strategy() -> impl Strategy<Value = (u64, u64)> {
    (any::<u64>(), any::<u64>())
}

pub fn row_permutation_leaves_report_unchanged((seed, shuffle): (u64, u64)) -> PropResult {
    use rand::seq::SliceRandom;
    let t = trace_set(48, seed);
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.shuffle(&mut psclab::rng::stream(shuffle, "perm", 0));
    let u = t.permuted(&order).unwrap();
    let a = recover_key(&t, false).unwrap();
    let b = recover_key(&u, false).unwrap();
    prop_assert_eq!(a.recovered_round10_key, b.recovered_round10_key);
    for (x, y) in a.curves.iter().zip(&b.curves) {
        prop_assert_eq!(x.winning_guess, y.winning_guess);
        for (r, s) in x.per_guess_max_abs_rho.iter().zip(&y.per_guess_max_abs_rho) {
            prop_assert!((r - s).abs() < 1e-9);
        }
    }
    Ok(())
}

pub fn round_trip_strategy() -> impl Strategy<Value = (u64, usize, bool)> {
    (any::<u64>(), 1usize..40, any::<bool>())
}

pub fn trace_file_round_trip((seed, n, window): (u64, usize, bool)) -> PropResult {
    let mut t = trace_set(n, seed);
    if !window {
        t.window = None;
    }
    let t = t.map_samples(|x| x * 0.37 - 1.5);
    let mut bytes = Vec::new();
    t.write_to(&mut bytes).unwrap();
    let back = TraceSet::from_bytes(&bytes).unwrap();
    prop_assert_eq!(&back, &t);
    let mut again = Vec::new();
    back.write_to(&mut again).unwrap();
    prop_assert_eq!(again, bytes);
    Ok(())
}

pub fn tdc_strategy() -> impl Strategy<Value = (f64, u64, f64, f64)> {
    (0.0f64..64.0, any::<u64>(), 0.3f64..1.0, 0.0f64..0.2)
}

pub fn tdc_is_monotone_in_voltage((sigma, skew_seed, v, dv): (f64, u64, f64, f64)) -> PropResult {
    let cfg = TdcConfig { tap_skew_sigma: sigma, skew_seed, ..TdcConfig::default() };
    let tdc = Tdc::new(&cfg, 1.0, 0.92).unwrap();
    let lo = tdc.ideal_readout(v).unwrap();
    let hi = tdc.ideal_readout((v + dv).min(1.0)).unwrap();
    prop_assert!(lo <= hi);
    prop_assert!(hi <= tdc.tap_count());
    Ok(())
}

pub fn synthesis_strategy() -> impl Strategy<Value = (u64, Block, usize)> {
    (any::<u64>(), block(), 1usize..24)
}

pub fn synthesis_is_deterministic((seed, key, n): (u64, Block, usize)) -> PropResult {
    let spec = ScenarioSpec::baseline();
    let a = synthesize_traces(&spec, &key, n, seed).unwrap();
    let b = synthesize_traces(&spec, &key, n, seed).unwrap();
    prop_assert_eq!(&a, &b);
    for t in &a {
        for (pt, ct) in t.plaintexts.iter().zip(&t.ciphertexts) {
            prop_assert_eq!(encrypt(pt, &key), *ct);
        }
    }
    Ok(())
}

/// Number of keys whose schedule fails to invert back to the master key.
pub fn key_schedule_failures(keys: usize, seed: u64) -> usize {
    let mut r = psclab::rng::stream(seed, "keys", 0);
    (0..keys)
        .filter(|_| {
            let mut k = Block::ZERO;
            r.fill_bytes(&mut k.0);
            let s = expand_key(&k);
            s.round_keys.len() != 11 || s.master() != k || invert_key_schedule(&s.last()) != k
        })
        .count()
}
