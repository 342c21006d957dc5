//! Spatially weighted power aggregation and the linear IR-drop model.

use crate::aes::Block;
use crate::error::{Error, Result};
use crate::leakage::REGISTER_BITS;

use super::grid::{Coord, PlacementGrid};

/// Exponential attenuation of a toggle's effect on a sensor.
pub fn spatial_weight(distance: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if !(distance >= 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be non-negative, got {distance}")));
    }
    Ok((-distance / lambda).exp())
}

/// Which placed group an external activity figure belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Emitter {
    Neighbor(usize),
    Fence(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExternalActivity {
    pub emitter: Emitter,
    /// Toggles (or active oscillators) this cycle.
    pub toggles: f64,
    /// Power units per toggle.
    pub power_coeff: f64,
}

/// Power seen by `sensor` in one cycle. Victim flips are given per register
/// bit (0/1). External groups are weighted by their mean element distance.
pub fn aggregate_power(
    cycle_flips: &[u8; REGISTER_BITS],
    grid: &PlacementGrid,
    sensor: usize,
    external: &[ExternalActivity],
    lambda: f64,
    static_floor: f64,
) -> Result<f64> {
    let at = grid
        .sensor_positions
        .get(sensor)
        .ok_or_else(|| Error::InvalidArgument(format!("no sensor {sensor}")))?;
    if grid.victim_ff_positions.len() != REGISTER_BITS {
        return Err(Error::InvalidArgument(format!(
            "expected {REGISTER_BITS} victim flip-flops, got {}",
            grid.victim_ff_positions.len()
        )));
    }
    let mut power = static_floor;
    for (bit, pos) in cycle_flips.iter().zip(&grid.victim_ff_positions) {
        if *bit != 0 {
            power += spatial_weight(pos.distance(at), lambda)?;
        }
    }
    for ext in external {
        let w = emitter_weight(grid, ext.emitter, at, lambda)?;
        power += ext.toggles * ext.power_coeff * w;
    }
    Ok(power)
}

fn emitter_weight(grid: &PlacementGrid, emitter: Emitter, at: &Coord, lambda: f64) -> Result<f64> {
    let (elements, id) = match emitter {
        Emitter::Neighbor(id) => (&grid.neighbor_elements, id),
        Emitter::Fence(id) => (&grid.fence_elements, id),
    };
    // lambda was validated by the caller path through spatial_weight
    PlacementGrid::mean_element_weight(elements, id, at, |d| (-d / lambda).exp())
        .ok_or(Error::UnknownSource(id))
}

pub fn voltage_from_power(power: f64, v_nominal: f64, r_eff: f64) -> Result<f64> {
    let drop = r_eff * power;
    if drop >= v_nominal {
        return Err(Error::FaultRegime { drop, nominal: v_nominal });
    }
    Ok(v_nominal - drop)
}

/// Precomputed weights of every emitter as seen from one sensor.
#[derive(Clone, Debug)]
pub struct SensorCoupling {
    /// Weight of each register bit's flip-flop.
    pub ff_weights: [f64; REGISTER_BITS],
    pub neighbor_weights: Vec<f64>,
    pub fence_weights: Vec<f64>,
}

impl SensorCoupling {
    pub fn new(
        grid: &PlacementGrid,
        at: &Coord,
        lambda: f64,
        neighbor_ids: &[usize],
        fence_ids: &[usize],
    ) -> Result<Self> {
        spatial_weight(0.0, lambda)?;
        let mut ff_weights = [0.0; REGISTER_BITS];
        for (w, pos) in ff_weights.iter_mut().zip(&grid.victim_ff_positions) {
            *w = spatial_weight(pos.distance(at), lambda)?;
        }
        let neighbor_weights = neighbor_ids
            .iter()
            .map(|&id| emitter_weight(grid, Emitter::Neighbor(id), at, lambda))
            .collect::<Result<_>>()?;
        let fence_weights = fence_ids
            .iter()
            .map(|&id| emitter_weight(grid, Emitter::Fence(id), at, lambda))
            .collect::<Result<_>>()?;
        Ok(SensorCoupling {
            ff_weights,
            neighbor_weights,
            fence_weights,
        })
    }

    /// Weighted sum of the set bits of an XOR mask.
    pub fn victim_power(&self, toggles: &Block) -> f64 {
        let mut p = 0.0;
        for (byte_idx, &byte) in toggles.0.iter().enumerate() {
            let mut b = byte;
            while b != 0 {
                let bit = b.trailing_zeros() as usize;
                p += self.ff_weights[8 * byte_idx + bit];
                b &= b - 1;
            }
        }
        p
    }

    pub fn mean_ff_weight(&self) -> f64 {
        self.ff_weights.iter().sum::<f64>() / REGISTER_BITS as f64
    }
}
