use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Gaussian readout noise, in taps.
    pub electronic_sigma: f64,
    pub temp_drift_enabled: bool,
    /// Expected baseline shift, in taps per 1000 traces.
    pub temp_drift_rate: f64,
    /// Saturation bound of the baseline shift, in taps.
    pub temp_ceiling: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            electronic_sigma: DEFAULT_ELECTRONIC_SIGMA,
            temp_drift_enabled: false,
            temp_drift_rate: DEFAULT_DRIFT_RATE,
            temp_ceiling: 64.0,
        }
    }
}

/// Electronic noise fixed by the baseline calibration run.
pub const DEFAULT_ELECTRONIC_SIGMA: f64 = 14.0;
pub const DEFAULT_DRIFT_RATE: f64 = 8.0;

impl NoiseConfig {
    pub fn noiseless() -> Self {
        NoiseConfig {
            electronic_sigma: 0.0,
            temp_drift_enabled: false,
            ..NoiseConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.electronic_sigma) || !ok(self.temp_drift_rate) || !ok(self.temp_ceiling) {
            return Err(Error::InvalidScenario(
                "noise parameters must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-trace baseline shift from junction heating: a biased random walk
/// towards fewer taps (slower buffers), clamped at `temp_ceiling`.
/// All zeros when drift is disabled.
pub fn drift_walk(cfg: &NoiseConfig, seed: u64, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    if !cfg.temp_drift_enabled || cfg.temp_drift_rate == 0.0 {
        return Ok(out);
    }
    let step = Normal::new(-cfg.temp_drift_rate / 1000.0, cfg.temp_drift_rate / 1000f64.sqrt())
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let mut stream = rng::stream(seed, "drift", 0);
    let mut level = 0.0f64;
    for o in out.iter_mut() {
        *o = level;
        level = (level + step.sample(&mut stream)).clamp(-cfg.temp_ceiling, cfg.temp_ceiling);
    }
    Ok(out)
}
