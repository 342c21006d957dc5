//! Stochastic activity generators: neighbor logic, victim glue logic and
//! ring-oscillator fences.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CepCore {
    Md5,
    Sha256,
    Des3,
    Rsa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceKind {
    Kalman { input_bits: u32 },
    Processor,
    CepCore { name: CepCore },
    /// LUT cloud of the victim core itself (S-boxes, key schedule, control).
    VictimLogic { lut_count: u32, p_glitch: f64 },
}

impl SourceKind {
    /// Default (elements, per-element toggle probability, power per toggle).
    pub fn defaults(&self) -> (u32, f64, f64) {
        match self {
            // 16-bit filter around 200 toggling elements; scales with width
            SourceKind::Kalman { input_bits } => ((*input_bits as f64 * 12.5).round() as u32, 0.25, 2.0),
            SourceKind::Processor => (3000, 0.1, 1.0),
            SourceKind::CepCore { name } => match name {
                CepCore::Md5 => (1800, 0.15, 1.0),
                CepCore::Sha256 => (2400, 0.2, 1.0),
                CepCore::Des3 => (1200, 0.3, 1.0),
                CepCore::Rsa => (4000, 0.05, 1.0),
            },
            SourceKind::VictimLogic { lut_count, p_glitch } => (*lut_count, *p_glitch, VICTIM_LUT_POWER),
        }
    }
}

/// Power of one LUT glitch relative to a flip-flop toggle.
pub const VICTIM_LUT_POWER: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ActivitySource {
    pub id: usize,
    pub kind: SourceKind,
    /// Elements that may toggle each cycle, each independently.
    pub elements: u32,
    pub toggle_probability: f64,
    pub power_coeff: f64,
}

impl ActivitySource {
    pub fn new(id: usize, kind: SourceKind) -> Self {
        let (elements, toggle_probability, power_coeff) = kind.defaults();
        ActivitySource { id, kind, elements, toggle_probability, power_coeff }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.toggle_probability) {
            return Err(Error::InvalidScenario(format!(
                "source {} toggle probability {} outside [0, 1]",
                self.id, self.toggle_probability
            )));
        }
        if !(self.power_coeff >= 0.0) || !self.power_coeff.is_finite() {
            return Err(Error::InvalidScenario(format!("source {} power coefficient must be non-negative", self.id)));
        }
        Ok(())
    }

    /// Expected toggles per cycle.
    pub fn mean_activity(&self) -> f64 {
        self.elements as f64 * self.toggle_probability
    }

    pub fn sampler(&self) -> Result<ActivitySampler> {
        self.validate()?;
        let dist = Binomial::new(self.elements as u64, self.toggle_probability)
            .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        Ok(ActivitySampler { dist })
    }
}

/// Prebuilt per-cycle toggle distribution of one source.
#[derive(Clone, Copy, Debug)]
pub struct ActivitySampler {
    dist: Binomial,
}

impl ActivitySampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.dist.sample(rng) as u32
    }
}

pub fn neighbor_activity<R: Rng + ?Sized>(src: &ActivitySource, rng: &mut R) -> Result<u32> {
    Ok(src.sampler()?.sample(rng))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoKind {
    SingleLut,
    FlipflopBased,
    SevenInverterChain,
}

impl RoKind {
    pub fn frequency_mhz(self) -> f64 {
        match self {
            RoKind::SingleLut => 1400.0,
            RoKind::FlipflopBased => 284.01,
            RoKind::SevenInverterChain => 175.0,
        }
    }

    /// Power units drawn by one active oscillator; a single-LUT RO is 1.
    pub fn power_per_active_ro(self) -> f64 {
        self.frequency_mhz() / RoKind::SingleLut.frequency_mhz()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FencePolicy {
    AlwaysOn,
    Random { p: f64 },
    /// Enables ROs in proportion to how far the defender's own sensor
    /// reads below its calibration midpoint.
    SensorFeedback { gain: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoFenceConfig {
    pub ro_total: u32,
    pub ros_per_slice: u32,
    pub ro_kind: RoKind,
    pub policy: FencePolicy,
}

impl RoFenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ro_total == 0 {
            return Err(Error::InvalidScenario("fence needs at least one RO".into()));
        }
        if !(1..=8).contains(&self.ros_per_slice) {
            return Err(Error::InvalidScenario(format!(
                "ros_per_slice {} outside 1..=8",
                self.ros_per_slice
            )));
        }
        match self.policy {
            FencePolicy::Random { p } if !(0.0..=1.0).contains(&p) => {
                Err(Error::InvalidScenario(format!("fence probability {p} outside [0, 1]")))
            }
            FencePolicy::SensorFeedback { gain } if !(gain >= 0.0) || !gain.is_finite() => {
                Err(Error::InvalidScenario("feedback gain must be non-negative".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn slice_count(&self) -> u32 {
        self.ro_total.div_ceil(self.ros_per_slice)
    }

    /// Expected active ROs, used to set the attacker's operating point.
    pub fn expected_active(&self) -> f64 {
        match self.policy {
            FencePolicy::AlwaysOn => self.ro_total as f64,
            FencePolicy::Random { p } => p * self.ro_total as f64,
            FencePolicy::SensorFeedback { .. } => 0.0,
        }
    }
}

/// Active ROs this cycle.
pub fn fence_activity<R: Rng + ?Sized>(cfg: &RoFenceConfig, sensor_reading: f64, midpoint: f64, rng: &mut R) -> u32 {
    match cfg.policy {
        FencePolicy::AlwaysOn => cfg.ro_total,
        FencePolicy::Random { p } => match Binomial::new(cfg.ro_total as u64, p) {
            Ok(b) => b.sample(rng) as u32,
            Err(_) => 0,
        },
        FencePolicy::SensorFeedback { gain } => {
            let want = (gain * (midpoint - sensor_reading)).round();
            want.clamp(0.0, cfg.ro_total as f64) as u32
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn fence(policy: FencePolicy) -> RoFenceConfig {
        RoFenceConfig { ro_total: 896, ros_per_slice: 1, ro_kind: RoKind::SingleLut, policy }
    }

    #[test]
    fn fence_policies() {
        let mut r = stream(1, "t", 0);
        assert_eq!(fence_activity(&fence(FencePolicy::AlwaysOn), 0.0, 0.0, &mut r), 896);
        assert_eq!(fence_activity(&fence(FencePolicy::Random { p: 0.0 }), 0.0, 0.0, &mut r), 0);
        let fb = fence(FencePolicy::SensorFeedback { gain: 10.0 });
        assert_eq!(fence_activity(&fb, 128.0, 128.0, &mut r), 0);
        assert_eq!(fence_activity(&fb, 120.0, 128.0, &mut r), 80);
        assert_eq!(fence_activity(&fb, 0.0, 128.0, &mut r), 896);
        assert_eq!(fence_activity(&fb, 200.0, 128.0, &mut r), 0);
    }

    #[test]
    fn ro_power_ratio() {
        let r = RoKind::SingleLut.power_per_active_ro() / RoKind::FlipflopBased.power_per_active_ro();
        assert!((r - 1400.0 / 284.01).abs() < 1e-12);
        assert!((r - 4.93).abs() < 0.01);
    }

    #[test]
    fn kalman_width_orders_activity() {
        let k16 = ActivitySource::new(1, SourceKind::Kalman { input_bits: 16 });
        let k48 = ActivitySource::new(2, SourceKind::Kalman { input_bits: 48 });
        assert_eq!(k16.elements, 200);
        assert_eq!(k16.toggle_probability, 0.25);
        assert!(k48.mean_activity() > k16.mean_activity());
    }

    #[test]
    fn zero_activity_source() {
        let mut s = ActivitySource::new(1, SourceKind::Processor);
        s.toggle_probability = 0.0;
        let mut r = stream(2, "t", 0);
        assert!((0..1000).all(|_| neighbor_activity(&s, &mut r).unwrap() == 0));
    }

    #[test]
    fn fence_validation() {
        assert!(fence(FencePolicy::Random { p: 1.5 }).validate().is_err());
        let mut f = fence(FencePolicy::AlwaysOn);
        f.ros_per_slice = 9;
        assert!(f.validate().is_err());
        f.ros_per_slice = 8;
        assert_eq!(f.slice_count(), 112);
    }
}
