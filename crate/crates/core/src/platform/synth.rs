//! Trace synthesis: AES switching -> per-sensor power -> voltage -> TDC.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::aes::{encrypt_with_schedule, expand_key, Block, RoundKeySchedule, RoundStateTrace};
use crate::error::{Error, Result};
use crate::rng;
use crate::scenario::{fence_activity, make_scenario, ActivitySampler, Scenario, ScenarioSpec};

use super::noise::drift_walk;
use super::power::{voltage_from_power, SensorCoupling};
use super::tdc::{Tdc, TdcConfig};
use super::traceset::TraceSet;

/// State-register transition recorded at sample `t`, or `None` when idle.
pub fn register_toggles(trace: &RoundStateTrace, lead_in: usize, t: usize) -> Option<Block> {
    match t.checked_sub(lead_in)? {
        // load from the reset (all-zero) state
        0 => Some(trace.snapshots[0]),
        c if c <= 10 => Some(trace.snapshots[c - 1].xor(&trace.snapshots[c])),
        _ => None,
    }
}

fn key_toggles(schedule: &RoundKeySchedule, lead_in: usize, t: usize) -> u32 {
    let popcount = |b: &Block| b.0.iter().map(|x| x.count_ones()).sum();
    match t.checked_sub(lead_in) {
        Some(0) => popcount(&schedule.round_keys[0]),
        Some(c) if c <= 10 => popcount(&schedule.round_keys[c - 1].xor(&schedule.round_keys[c])),
        _ => 0,
    }
}

struct SensorModel {
    coupling: SensorCoupling,
    tdc: Tdc,
    r_eff: f64,
}

/// Everything fixed for a build, shared across traces.
struct Pipeline<'a> {
    spec: &'a ScenarioSpec,
    scenario: Scenario,
    schedule: RoundKeySchedule,
    sensors: Vec<SensorModel>,
    samplers: Vec<ActivitySampler>,
    source_tags: Vec<String>,
    /// Defender's feedback sensor (noiseless, unskewed).
    probe: Option<SensorModel>,
    fence_power: f64,
}

impl SensorModel {
    fn power(&self, pipe: &Pipeline, victim: &Block, key_flips: u32, toggles: &[u32], active_ros: u32) -> f64 {
        let mut p = pipe.spec.pdn.static_floor + self.coupling.victim_power(victim);
        if key_flips > 0 {
            p += key_flips as f64 * self.coupling.mean_ff_weight();
        }
        for ((src, &n), w) in pipe.scenario.sources.iter().zip(toggles).zip(&self.coupling.neighbor_weights) {
            p += n as f64 * src.power_coeff * w;
        }
        if let Some(w) = self.coupling.fence_weights.first() {
            p += active_ros as f64 * pipe.fence_power * w;
        }
        p
    }

    fn expected_power(&self, pipe: &Pipeline, with_fence: bool) -> f64 {
        let mut p = pipe.spec.pdn.static_floor + 0.5 * self.coupling.ff_weights.iter().sum::<f64>();
        if pipe.spec.victim.key_register {
            p += 64.0 * self.coupling.mean_ff_weight();
        }
        for (src, w) in pipe.scenario.sources.iter().zip(&self.coupling.neighbor_weights) {
            p += src.mean_activity() * src.power_coeff * w;
        }
        if with_fence {
            if let (Some(f), Some(w)) = (&pipe.scenario.fence, self.coupling.fence_weights.first()) {
                p += f.expected_active() * pipe.fence_power * w;
            }
        }
        p
    }

    fn voltage(&self, pipe: &Pipeline, power: f64) -> Result<f64> {
        voltage_from_power(power, pipe.spec.pdn.v_nominal, self.r_eff)
    }
}

impl<'a> Pipeline<'a> {
    fn build(spec: &'a ScenarioSpec, key: &Block) -> Result<Self> {
        let scenario = make_scenario(spec)?;
        let samplers = scenario.sources.iter().map(|s| s.sampler()).collect::<Result<_>>()?;
        let source_tags = scenario.sources.iter().map(|s| format!("source/{}", s.id)).collect();
        let fence_power = scenario.fence.as_ref().map_or(0.0, |f| f.ro_kind.power_per_active_ro());
        let mut pipe = Pipeline {
            spec,
            schedule: expand_key(key),
            sensors: Vec::new(),
            samplers,
            source_tags,
            probe: None,
            fence_power,
            scenario,
        };
        let (src_ids, fence_ids) = (pipe.scenario.source_ids(), pipe.scenario.fence_ids());
        let vn = spec.pdn.v_nominal;
        let mut sensors = Vec::new();
        for (s, at) in pipe.scenario.grid.sensor_positions.iter().enumerate() {
            let coupling = SensorCoupling::new(&pipe.scenario.grid, at, spec.pdn.lambda[s], &src_ids, &fence_ids)?;
            let mut model = SensorModel { coupling, tdc: Tdc::new(&TdcConfig::ideal(4), 1.0, 1.0)?, r_eff: spec.pdn.r_eff[s] };
            let v_op = model.voltage(&pipe, model.expected_power(&pipe, true))?;
            model.tdc = Tdc::new(&spec.tdc[s], vn, v_op)?;
            sensors.push(model);
        }
        if pipe.scenario.fence.is_some() {
            let coupling =
                SensorCoupling::new(&pipe.scenario.grid, &pipe.scenario.probe, spec.pdn.lambda[0], &src_ids, &fence_ids)?;
            let cfg = TdcConfig { tap_skew_sigma: 0.0, calibration_offset: None, ..spec.tdc[0].clone() };
            let mut model = SensorModel { coupling, tdc: Tdc::new(&TdcConfig::ideal(4), 1.0, 1.0)?, r_eff: spec.pdn.r_eff[0] };
            let v_op = model.voltage(&pipe, model.expected_power(&pipe, false))?;
            model.tdc = Tdc::new(&cfg, vn, v_op)?;
            pipe.probe = Some(model);
        }
        pipe.sensors = sensors;
        Ok(pipe)
    }

    /// Samples of trace `i` for every sensor, appended sensor-major to `out`.
    fn trace(&self, seed: u64, i: u64, drift: f64, out: &mut [Vec<f32>]) -> Result<(Block, Block)> {
        let spec = self.spec;
        let mut pt = Block::ZERO;
        rng::stream(seed, "plaintext", i).fill_bytes(&mut pt.0);
        let trace = encrypt_with_schedule(&pt, &self.schedule.master(), &self.schedule);

        let mut source_rngs: Vec<_> = self.source_tags.iter().map(|t| rng::stream(seed, t, i)).collect();
        let mut noise_rngs: Vec<_> = (0..self.sensors.len()).map(|s| rng::stream(seed, &format!("noise/{s}"), i)).collect();
        let mut fence_rng = rng::stream(seed, "fence", i);
        let sigma = spec.noise.electronic_sigma;
        let lead_in = spec.lead_in as usize;
        let mut toggles = vec![0u32; self.samplers.len()];
        let mut probe_reading = self.probe.as_ref().map_or(0.0, |p| p.tdc.midpoint() as f64);

        for t in 0..spec.samples_per_trace() {
            let victim = register_toggles(&trace, lead_in, t).unwrap_or(Block::ZERO);
            let key_flips = if spec.victim.key_register { key_toggles(&self.schedule, lead_in, t) } else { 0 };
            for ((n, smp), r) in toggles.iter_mut().zip(&self.samplers).zip(source_rngs.iter_mut()) {
                *n = smp.sample(r);
            }
            let active = match (&self.scenario.fence, &self.probe) {
                (Some(f), Some(p)) => fence_activity(f, probe_reading, p.tdc.midpoint() as f64, &mut fence_rng),
                _ => 0,
            };
            if let Some(p) = &self.probe {
                let v = p.voltage(self, p.power(self, &victim, key_flips, &toggles, active))?;
                probe_reading = p.tdc.ideal_readout(v)? as f64;
            }
            for ((sensor, r), samples) in self.sensors.iter().zip(noise_rngs.iter_mut()).zip(out.iter_mut()) {
                let v = sensor.voltage(self, sensor.power(self, &victim, key_flips, &toggles, active))?;
                let ideal = sensor.tdc.ideal_readout(v)?;
                let z: f64 = r.sample(StandardNormal);
                samples.push(sensor.tdc.quantize(ideal, sigma * z + drift));
            }
        }
        Ok((pt, trace.ciphertext))
    }
}

/// One trace set per sensor (left, right). Pure in `(spec, key, n, seed)`.
pub fn synthesize_traces(spec: &ScenarioSpec, key: &Block, n: usize, seed: u64) -> Result<Vec<TraceSet>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one trace".into()));
    }
    let pipe = Pipeline::build(spec, key)?;
    let drift = drift_walk(&spec.noise, seed, n)?;
    let sensors = pipe.sensors.len();
    let s = spec.samples_per_trace();

    let rows: Vec<(Block, Block, Vec<Vec<f32>>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![Vec::with_capacity(s); sensors];
            let (pt, ct) = pipe.trace(seed, i as u64, drift[i], &mut out)?;
            Ok((pt, ct, out))
        })
        .collect::<Result<_>>()?;

    let digest = spec.digest();
    let plaintexts: Vec<Block> = rows.iter().map(|r| r.0).collect();
    let ciphertexts: Vec<Block> = rows.iter().map(|r| r.1).collect();
    (0..sensors)
        .map(|k| {
            let mut samples = Vec::with_capacity(n * s);
            for r in &rows {
                samples.extend_from_slice(&r.2[k]);
            }
            TraceSet::new(
                samples,
                s,
                spec.tdc[k].tap_count,
                plaintexts.clone(),
                ciphertexts.clone(),
                Some(spec.tenth_round_window()),
                k as u8,
                true,
                digest,
            )
        })
        .collect()
}
