use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FFS_PER_SLICE: usize = 8;
pub const LUTS_PER_SLICE: usize = 8;

/// Slice coordinate, in slice pitches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
}

impl Coord {
    pub const fn new(x: i32, y: i32) -> Self {
        Coord { x, y }
    }

    pub fn distance(&self, other: &Coord) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        dx.hypot(dy)
    }

    pub fn offset(&self, dx: i32, dy: i32) -> Coord {
        Coord::new(self.x + dx, self.y + dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub width: i32,
    pub height: i32,
}

impl Bounds {
    pub fn contains(&self, c: &Coord) -> bool {
        (0..self.width).contains(&c.x) && (0..self.height).contains(&c.y)
    }
}

impl Default for Bounds {
    fn default() -> Self {
        // 4 x 4 clock regions of 50 x 60 slices
        Bounds { width: 200, height: 240 }
    }
}

/// Axis-aligned bounding box over slice coordinates (inclusive).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub min: Coord,
    pub max: Coord,
}

impl BoundingBox {
    pub fn of<'a>(coords: impl IntoIterator<Item = &'a Coord>) -> Option<Self> {
        let mut it = coords.into_iter();
        let first = *it.next()?;
        Some(it.fold(BoundingBox { min: first, max: first }, |b, c| b.include(c)))
    }

    pub fn include(self, c: &Coord) -> Self {
        BoundingBox {
            min: Coord::new(self.min.x.min(c.x), self.min.y.min(c.y)),
            max: Coord::new(self.max.x.max(c.x), self.max.y.max(c.y)),
        }
    }

    pub fn union(self, other: &BoundingBox) -> Self {
        self.include(&other.min).include(&other.max)
    }

    pub fn width(&self) -> i32 {
        self.max.x - self.min.x + 1
    }

    pub fn height(&self) -> i32 {
        self.max.y - self.min.y + 1
    }
}

/// Placed elements of one experiment build.
///
/// Victim flip-flop `j` holds bit `j` of the AES state register. Neighbor
/// and fence entries are one per occupied slice; `count` is the number of
/// toggling elements (LUTs, flip-flops or ring oscillators) in that slice.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacementGrid {
    pub bounds: Bounds,
    pub victim_ff_positions: Vec<Coord>,
    pub neighbor_elements: Vec<PlacedElement>,
    pub fence_elements: Vec<PlacedElement>,
    pub sensor_positions: Vec<Coord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlacedElement {
    pub position: Coord,
    /// Activity source id for neighbor logic, RO configuration id for fences.
    pub owner: usize,
    pub count: u32,
}

impl PlacementGrid {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .victim_ff_positions
            .iter()
            .chain(self.neighbor_elements.iter().map(|e| &e.position))
            .chain(self.fence_elements.iter().map(|e| &e.position))
            .chain(self.sensor_positions.iter());
        for c in all {
            if !self.bounds.contains(c) {
                return Err(Error::OutOfBounds(format!(
                    "({}, {}) outside {}x{}",
                    c.x, c.y, self.bounds.width, self.bounds.height
                )));
            }
        }
        let mut per_slice: HashMap<Coord, usize> = HashMap::new();
        for c in &self.victim_ff_positions {
            let n = per_slice.entry(*c).or_default();
            *n += 1;
            if *n > FFS_PER_SLICE {
                return Err(Error::InvalidScenario(format!(
                    "more than {FFS_PER_SLICE} flip-flops in slice ({}, {})",
                    c.x, c.y
                )));
            }
        }
        Ok(())
    }

    pub fn victim_bbox(&self) -> Option<BoundingBox> {
        BoundingBox::of(&self.victim_ff_positions)
    }

    /// Mean of `weight(distance)` over all elements owned by `owner`,
    /// each slice counted with its element multiplicity.
    pub fn mean_element_weight(
        elements: &[PlacedElement],
        owner: usize,
        at: &Coord,
        weight: impl Fn(f64) -> f64,
    ) -> Option<f64> {
        let (mut sum, mut n) = (0.0, 0u64);
        for e in elements.iter().filter(|e| e.owner == owner) {
            sum += e.count as f64 * weight(e.position.distance(at));
            n += e.count as u64;
        }
        (n > 0).then(|| sum / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_capacity_enforced() {
        let mut g = PlacementGrid {
            bounds: Bounds { width: 10, height: 10 },
            victim_ff_positions: vec![Coord::new(1, 1); 8],
            neighbor_elements: vec![],
            fence_elements: vec![],
            sensor_positions: vec![Coord::new(0, 0)],
        };
        assert!(g.validate().is_ok());
        g.victim_ff_positions.push(Coord::new(1, 1));
        assert!(g.validate().is_err());
        g.victim_ff_positions.pop();
        g.sensor_positions.push(Coord::new(10, 0));
        assert!(matches!(g.validate(), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn bbox_and_distance() {
        let b = BoundingBox::of(&[Coord::new(2, 3), Coord::new(-1, 7)]).unwrap();
        assert_eq!((b.width(), b.height()), (4, 5));
        assert_eq!(Coord::new(0, 0).distance(&Coord::new(3, 4)), 5.0);
    }
}
