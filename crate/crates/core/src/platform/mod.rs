pub mod grid;
pub mod noise;
pub mod power;
pub mod synth;
pub mod tdc;
pub mod traceset;

pub use grid::{Bounds, BoundingBox, Coord, PlacedElement, PlacementGrid};
pub use noise::NoiseConfig;
pub use power::{aggregate_power, spatial_weight, voltage_from_power};
pub use synth::synthesize_traces;
pub use tdc::{Tdc, TdcConfig};
pub use traceset::TraceSet;
