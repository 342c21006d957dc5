//! Declarative experiment descriptions and their placement builders.

mod activity;
mod layout;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::platform::grid::Bounds;
use crate::platform::noise::NoiseConfig;
use crate::platform::tdc::TdcConfig;

pub use activity::{
    fence_activity, neighbor_activity, ActivitySampler, ActivitySource, CepCore, FencePolicy, RoFenceConfig,
    RoKind, SourceKind, VICTIM_LUT_POWER,
};
pub use layout::{make_scenario, Scenario, VICTIM_LOGIC_ID};

pub const SCHEMA_VERSION: u32 = 1;
pub const SENSOR_COUNT: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub sensors: SensorPlacement,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// One entry per sensor: left, right.
    #[serde(default = "default_tdcs")]
    pub tdc: Vec<TdcConfig>,
    #[serde(default)]
    pub pdn: PdnConfig,
    #[serde(default)]
    pub victim: VictimConfig,
    /// Idle cycles recorded before the state register is loaded.
    #[serde(default = "default_lead_in")]
    pub lead_in: u16,
    #[serde(default)]
    pub grid: Bounds,
}

fn default_tdcs() -> Vec<TdcConfig> {
    (0..SENSOR_COUNT as u64)
        .map(|i| TdcConfig { skew_seed: i, ..TdcConfig::default() })
        .collect()
}

fn default_lead_in() -> u16 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioKind {
    // braced so that stray fields are rejected like on other variants
    Baseline {},
    SpreadFf {
        spacing: u32,
    },
    SpreadFfLut {
        ff_spacing: u32,
        lut_spacing: u32,
    },
    Blocks {
        ff_block_w: u32,
        ff_block_h: u32,
        lut_block_w: u32,
        lut_block_h: u32,
        gap_slices: u32,
    },
    Neighbor {
        sources: Vec<NeighborSpec>,
    },
    ActiveFence(RoFenceConfig),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Below,
    Above,
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborSpec {
    pub source: SourceKind,
    #[serde(default)]
    pub side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elements: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toggle_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_coeff: Option<f64>,
}

impl NeighborSpec {
    pub fn new(source: SourceKind, side: Side) -> Self {
        NeighborSpec { source, side, elements: None, toggle_probability: None, power_coeff: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorPlacement {
    pub left_offset: i32,
    pub right_offset: i32,
}

impl Default for SensorPlacement {
    fn default() -> Self {
        SensorPlacement { left_offset: 2, right_offset: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdnConfig {
    pub v_nominal: f64,
    pub static_floor: f64,
    /// Attenuation length per sensor, in slices.
    pub lambda: Vec<f64>,
    /// Volts of drop per power unit, per sensor.
    pub r_eff: Vec<f64>,
}

impl Default for PdnConfig {
    fn default() -> Self {
        PdnConfig {
            v_nominal: 1.0,
            static_floor: 200.0,
            lambda: vec![30.0, 26.0],
            r_eff: vec![1.0 / 16384.0, 1.05 / 16384.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VictimConfig {
    pub lut_count: u32,
    pub p_glitch: f64,
    /// Also count round-key register toggles (data independent).
    pub key_register: bool,
}

impl Default for VictimConfig {
    fn default() -> Self {
        VictimConfig { lut_count: 1536, p_glitch: 0.01, key_register: false }
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioSpec {
            schema_version: SCHEMA_VERSION,
            kind,
            sensors: SensorPlacement::default(),
            noise: NoiseConfig::default(),
            tdc: default_tdcs(),
            pdn: PdnConfig::default(),
            victim: VictimConfig::default(),
            lead_in: default_lead_in(),
            grid: Bounds::default(),
        }
    }

    pub fn baseline() -> Self {
        Self::new(ScenarioKind::Baseline {})
    }

    /// No electronic noise, drift or victim glitching.
    pub fn noiseless(mut self) -> Self {
        self.noise = NoiseConfig::noiseless();
        self.victim.p_glitch = 0.0;
        self
    }

    /// Same scenario with every sensor's tap skew set to `sigma`.
    pub fn with_tap_skew(mut self, sigma: f64) -> Self {
        for t in &mut self.tdc {
            t.tap_skew_sigma = sigma;
        }
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Samples per trace: idle lead-in, the load cycle and ten rounds.
    pub fn samples_per_trace(&self) -> usize {
        self.lead_in as usize + 11
    }

    /// Half-open sample range of the tenth round.
    pub fn tenth_round_window(&self) -> (u16, u16) {
        (self.lead_in + 10, self.lead_in + 11)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.tdc.len() != SENSOR_COUNT || self.pdn.lambda.len() != SENSOR_COUNT || self.pdn.r_eff.len() != SENSOR_COUNT {
            return bad(format!("tdc, pdn.lambda and pdn.r_eff need {SENSOR_COUNT} entries (left, right)"));
        }
        for t in &self.tdc {
            t.validate()?;
        }
        self.noise.validate()?;
        if self.lead_in == 0 || self.lead_in > 1000 {
            return bad(format!("lead_in {} outside 1..=1000", self.lead_in));
        }
        let pdn = &self.pdn;
        if !(pdn.v_nominal > 0.0) || !(pdn.static_floor >= 0.0) {
            return bad("v_nominal must be positive and static_floor non-negative".into());
        }
        if pdn.lambda.iter().chain(&pdn.r_eff).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("lambda and r_eff must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.victim.p_glitch) {
            return bad("victim p_glitch outside [0, 1]".into());
        }
        if self.grid.width <= 0 || self.grid.height <= 0 {
            return bad("grid bounds must be positive".into());
        }
        match &self.kind {
            ScenarioKind::Blocks { ff_block_w, ff_block_h, lut_block_w, lut_block_h, .. } => {
                if [ff_block_w, ff_block_h, lut_block_w, lut_block_h].iter().any(|&&d| d == 0) {
                    return bad("block dimensions must be positive".into());
                }
            }
            ScenarioKind::ActiveFence(f) => f.validate()?,
            ScenarioKind::Neighbor { sources } => {
                for (i, s) in sources.iter().enumerate() {
                    layout::neighbor_source(i + 1, s).validate()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&bytes).into()
    }

    /// Copy of the spec with one field replaced, for parameter sweeps.
    ///
    /// `axis` is either a JSON pointer into the spec (`/noise/electronic_sigma`)
    /// or one of the shorthands below. `ros_per_slice` keeps the fence slice
    /// count fixed and scales `ro_total` with it.
    pub fn with_axis(&self, axis: &str, value: &str) -> Result<ScenarioSpec> {
        let parsed: Value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        let mut doc = serde_json::to_value(self)?;
        let pointers: Vec<String> = match axis {
            p if p.starts_with('/') => vec![p.to_string()],
            "ros_per_slice" => {
                let ScenarioKind::ActiveFence(f) = &self.kind else {
                    return Err(Error::InvalidArgument("ros_per_slice needs an active_fence scenario".into()));
                };
                let rps = parsed
                    .as_u64()
                    .ok_or_else(|| Error::InvalidArgument(format!("ros_per_slice value {value} is not an integer")))?;
                doc["kind"]["ro_total"] = Value::from(f.slice_count() as u64 * rps);
                vec!["/kind/ros_per_slice".into()]
            }
            "ro_total" | "ro_kind" => vec![format!("/kind/{axis}")],
            "spacing" => match self.kind {
                ScenarioKind::SpreadFf { .. } => vec!["/kind/spacing".into()],
                ScenarioKind::SpreadFfLut { .. } => vec!["/kind/ff_spacing".into()],
                _ => return Err(Error::InvalidArgument("spacing needs a spread scenario".into())),
            },
            "electronic_sigma" | "temp_drift_enabled" | "temp_drift_rate" | "temp_ceiling" => {
                vec![format!("/noise/{axis}")]
            }
            "tap_skew_sigma" => (0..SENSOR_COUNT).map(|i| format!("/tdc/{i}/tap_skew_sigma")).collect(),
            _ => return Err(Error::InvalidArgument(format!("unknown axis {axis}"))),
        };
        for p in pointers {
            let slot = doc
                .pointer_mut(&p)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown axis {axis}")))?;
            *slot = parsed.clone();
        }
        let spec: ScenarioSpec =
            serde_json::from_value(doc).map_err(|e| Error::InvalidScenario(format!("axis {axis}: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}
