use crate::error::{Error, Result};
use crate::leakage::REGISTER_BITS;
use crate::platform::grid::{BoundingBox, Coord, PlacedElement, PlacementGrid, FFS_PER_SLICE, LUTS_PER_SLICE};

use super::activity::{ActivitySource, RoFenceConfig, SourceKind};
use super::{NeighborSpec, ScenarioKind, ScenarioSpec, Side};

/// Source id of the victim's own LUT logic; neighbors are numbered from 1.
pub const VICTIM_LOGIC_ID: usize = 0;
const FENCE_ID: usize = 0;

// Dense LUT block of the baseline core, in slices.
const LUT_BLOCK_W: i32 = 16;
const LUT_BLOCK_H: i32 = 12;
// Spread flip-flops are laid out on this many columns.
const SPREAD_COLUMNS: usize = 12;

/// A built experiment: placement plus the activity it generates.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub grid: PlacementGrid,
    pub sources: Vec<ActivitySource>,
    pub fence: Option<RoFenceConfig>,
    /// Where the defender's own feedback sensor sits.
    pub probe: Coord,
}

impl Scenario {
    pub fn source_ids(&self) -> Vec<usize> {
        self.sources.iter().map(|s| s.id).collect()
    }

    pub fn fence_ids(&self) -> Vec<usize> {
        self.fence.iter().map(|_| FENCE_ID).collect()
    }

    pub fn ff_centroid(&self) -> (f64, f64) {
        centroid(&self.grid.victim_ff_positions)
    }
}

pub(super) fn neighbor_source(id: usize, spec: &NeighborSpec) -> ActivitySource {
    let mut s = ActivitySource::new(id, spec.source.clone());
    if let Some(e) = spec.elements {
        s.elements = e;
    }
    if let Some(p) = spec.toggle_probability {
        s.toggle_probability = p;
    }
    if let Some(c) = spec.power_coeff {
        s.power_coeff = c;
    }
    s
}

fn centroid(cs: &[Coord]) -> (f64, f64) {
    let n = cs.len().max(1) as f64;
    let (sx, sy) = cs.iter().fold((0.0, 0.0), |(x, y), c| (x + c.x as f64, y + c.y as f64));
    (sx / n, sy / n)
}

/// Spreads `total` elements over `slices` as evenly as possible.
fn fill(slices: &[Coord], total: u32, cap: usize, owner: usize) -> Result<Vec<PlacedElement>> {
    if slices.is_empty() {
        return Err(Error::InvalidScenario("no slices to place logic in".into()));
    }
    let n = slices.len() as u32;
    let (base, extra) = (total / n, total % n);
    if base + (extra > 0) as u32 > cap as u32 {
        return Err(Error::InvalidScenario(format!("{total} elements do not fit in {n} slices")));
    }
    Ok(slices
        .iter()
        .enumerate()
        .map(|(i, &position)| PlacedElement { position, owner, count: base + ((i as u32) < extra) as u32 })
        .filter(|e| e.count > 0)
        .collect())
}

fn rect(x0: i32, y0: i32, w: i32, h: i32, pitch: i32) -> Vec<Coord> {
    (0..h)
        .flat_map(|r| (0..w).map(move |c| Coord::new(x0 + c * pitch, y0 + r * pitch)))
        .collect()
}

fn spread_ffs(spacing: u32) -> Vec<Coord> {
    let pitch = spacing as i32 + 1;
    (0..REGISTER_BITS)
        .map(|j| Coord::new((j % SPREAD_COLUMNS) as i32 * pitch, (j / SPREAD_COLUMNS) as i32 * pitch))
        .collect()
}

fn dense_ffs() -> Vec<Coord> {
    // register byte p occupies slice (p % 4, p / 4)
    (0..REGISTER_BITS)
        .map(|j| {
            let p = (j / FFS_PER_SLICE) as i32;
            Coord::new(p % 4, p / 4)
        })
        .collect()
}

/// LUT block of `w` x `h` slices at `pitch`, centred on `(cx, cy)`.
fn lut_block(cx: f64, cy: f64, w: i32, h: i32, pitch: i32) -> Vec<Coord> {
    let x0 = (cx - (w - 1) as f64 * pitch as f64 / 2.0).round() as i32;
    let y0 = (cy - (h - 1) as f64 * pitch as f64 / 2.0).round() as i32;
    rect(x0, y0, w, h, pitch)
}

/// Slices on successive one-slice rings around `bbox`, innermost first.
fn ring_slices(bbox: &BoundingBox, count: usize) -> Vec<Coord> {
    let mut out = Vec::with_capacity(count);
    let mut r = 1;
    while out.len() < count {
        let (x0, x1) = (bbox.min.x - r, bbox.max.x + r);
        let (y0, y1) = (bbox.min.y - r, bbox.max.y + r);
        let ring = (x0..x1)
            .map(|x| Coord::new(x, y1))
            .chain((y0 + 1..=y1).rev().map(|y| Coord::new(x1, y)))
            .chain((x0 + 1..=x1).rev().map(|x| Coord::new(x, y0)))
            .chain((y0..y1).map(|y| Coord::new(x0, y)));
        out.extend(ring.take(count - out.len()));
        r += 1;
    }
    out
}

pub fn make_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let lut_count = spec.victim.lut_count;
    let (ffs, lut_slices) = match &spec.kind {
        ScenarioKind::SpreadFf { spacing } => {
            let ffs = spread_ffs(*spacing);
            let (cx, cy) = centroid(&ffs);
            let luts = lut_block(cx, cy, LUT_BLOCK_W, LUT_BLOCK_H, 1);
            (ffs, luts)
        }
        ScenarioKind::SpreadFfLut { ff_spacing, lut_spacing } => {
            let ffs = spread_ffs(*ff_spacing);
            let (cx, cy) = centroid(&ffs);
            let luts = lut_block(cx, cy, LUT_BLOCK_W, LUT_BLOCK_H, *lut_spacing as i32 + 1);
            (ffs, luts)
        }
        ScenarioKind::Blocks { ff_block_w, ff_block_h, lut_block_w, lut_block_h, gap_slices } => {
            let (fw, fh) = (*ff_block_w as i32, *ff_block_h as i32);
            let slices = rect(0, 0, fw, fh, 1);
            let per = REGISTER_BITS.div_ceil(slices.len());
            if per > FFS_PER_SLICE {
                return Err(Error::InvalidScenario(format!(
                    "{fw}x{fh} flip-flop block cannot hold {REGISTER_BITS} flip-flops"
                )));
            }
            let ffs = (0..REGISTER_BITS).map(|j| slices[j / per]).collect();
            let (lw, lh) = (*lut_block_w as i32, *lut_block_h as i32);
            let x0 = (fw - lw).div_euclid(2);
            let luts = rect(x0, -(*gap_slices as i32) - lh, lw, lh, 1);
            (ffs, luts)
        }
        _ => {
            let ffs = dense_ffs();
            let (cx, cy) = centroid(&ffs);
            (ffs, lut_block(cx, cy, LUT_BLOCK_W, LUT_BLOCK_H, 1))
        }
    };

    // Move the flip-flop centroid to the middle of the grid.
    let (cx, cy) = centroid(&ffs);
    let dx = spec.grid.width / 2 - cx.round() as i32;
    let dy = spec.grid.height / 2 - cy.round() as i32;
    let ffs: Vec<Coord> = ffs.iter().map(|c| c.offset(dx, dy)).collect();
    let lut_slices: Vec<Coord> = lut_slices.iter().map(|c| c.offset(dx, dy)).collect();

    let mut neighbor_elements = fill(&lut_slices, lut_count, LUTS_PER_SLICE, VICTIM_LOGIC_ID)?;
    let mut sources = vec![ActivitySource::new(
        VICTIM_LOGIC_ID,
        SourceKind::VictimLogic { lut_count, p_glitch: spec.victim.p_glitch },
    )];
    let victim_box = BoundingBox::of(ffs.iter().chain(&lut_slices)).expect("victim is never empty");

    let mut fence = None;
    let mut fence_elements = Vec::new();
    match &spec.kind {
        ScenarioKind::Neighbor { sources: specs } => {
            // next free row/column on each side
            let mut below = victim_box.min.y - 2;
            let mut above = victim_box.max.y + 2;
            let mut left = victim_box.min.x - 2;
            let mut right = victim_box.max.x + 2;
            let (vw, vh) = (victim_box.width(), victim_box.height());
            for (i, ns) in specs.iter().enumerate() {
                let src = neighbor_source(i + 1, ns);
                let slices = (src.elements as usize).div_ceil(LUTS_PER_SLICE).max(1) as i32;
                let block = match ns.side {
                    Side::Below => {
                        let rows = (slices + vw - 1) / vw;
                        let b = rect(victim_box.min.x, below - rows + 1, vw, rows, 1);
                        below -= rows + 1;
                        b
                    }
                    Side::Above => {
                        let rows = (slices + vw - 1) / vw;
                        let b = rect(victim_box.min.x, above, vw, rows, 1);
                        above += rows + 1;
                        b
                    }
                    Side::Left => {
                        let cols = (slices + vh - 1) / vh;
                        let b = rect(left - cols + 1, victim_box.min.y, cols, vh, 1);
                        left -= cols + 1;
                        b
                    }
                    Side::Right => {
                        let cols = (slices + vh - 1) / vh;
                        let b = rect(right, victim_box.min.y, cols, vh, 1);
                        right += cols + 1;
                        b
                    }
                };
                let used = &block[..slices as usize];
                if src.elements > 0 {
                    neighbor_elements.extend(fill(used, src.elements, LUTS_PER_SLICE, src.id)?);
                } else {
                    // keep a footprint so the source stays addressable
                    neighbor_elements.push(PlacedElement { position: used[0], owner: src.id, count: 1 });
                }
                sources.push(src);
            }
        }
        ScenarioKind::ActiveFence(cfg) => {
            let slices = ring_slices(&victim_box, cfg.slice_count() as usize);
            let mut left = cfg.ro_total;
            for position in slices {
                let count = left.min(cfg.ros_per_slice);
                left -= count;
                fence_elements.push(PlacedElement { position, owner: FENCE_ID, count });
            }
            fence = Some(cfg.clone());
        }
        _ => {}
    }

    let defender = neighbor_elements
        .iter()
        .chain(&fence_elements)
        .fold(victim_box, |b, e| b.include(&e.position));
    let (fcx, fcy) = centroid(&ffs);
    let sy = fcy.round() as i32;
    let sensor_positions = vec![
        Coord::new(defender.min.x - spec.sensors.left_offset, sy),
        Coord::new(defender.max.x + spec.sensors.right_offset, sy),
    ];
    let grid = PlacementGrid {
        bounds: spec.grid,
        victim_ff_positions: ffs,
        neighbor_elements,
        fence_elements,
        sensor_positions,
    };
    grid.validate()?;
    Ok(Scenario {
        grid,
        sources,
        fence,
        probe: Coord::new(fcx.round() as i32, sy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{FencePolicy, RoKind};
    use std::collections::HashMap;

    #[test]
    fn baseline_is_dense() {
        let s = make_scenario(&ScenarioSpec::baseline()).unwrap();
        let mut per: HashMap<Coord, usize> = HashMap::new();
        for c in &s.grid.victim_ff_positions {
            *per.entry(*c).or_default() += 1;
        }
        assert_eq!(per.len(), 16);
        assert!(per.values().all(|&n| n == 8));
        let bbox = s.grid.victim_bbox().unwrap();
        assert_eq!((bbox.width(), bbox.height()), (4, 4));
        let [l, r] = [s.grid.sensor_positions[0], s.grid.sensor_positions[1]];
        assert!(l.x < bbox.min.x && r.x > bbox.max.x);
        let luts: u32 = s.grid.neighbor_elements.iter().map(|e| e.count).sum();
        assert_eq!(luts, 1536);
    }

    #[test]
    fn spread_pitch() {
        let s = make_scenario(&ScenarioSpec::new(ScenarioKind::SpreadFf { spacing: 3 })).unwrap();
        let ffs = &s.grid.victim_ff_positions;
        for (i, a) in ffs.iter().enumerate() {
            let nearest = ffs
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| a.distance(b))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(nearest, 4.0);
        }
    }

    #[test]
    fn fence_ring_density() {
        let s = make_scenario(&ScenarioSpec::new(ScenarioKind::ActiveFence(RoFenceConfig {
            ro_total: 896,
            ros_per_slice: 1,
            ro_kind: RoKind::SingleLut,
            policy: FencePolicy::AlwaysOn,
        })))
        .unwrap();
        assert_eq!(s.grid.fence_elements.len(), 896);
        assert!(s.grid.fence_elements.iter().all(|e| e.count == 1));
        // one RO in an eight-LUT slice
        assert_eq!(1.0 / LUTS_PER_SLICE as f64, 0.125);
        let mut seen = std::collections::HashSet::new();
        assert!(s.grid.fence_elements.iter().all(|e| seen.insert(e.position)));
        let vb = BoundingBox::of(s.grid.victim_ff_positions.iter()).unwrap();
        assert!(s.grid.fence_elements.iter().all(|e| !(vb.min.x..=vb.max.x).contains(&e.position.x)
            || !(vb.min.y..=vb.max.y).contains(&e.position.y)));
    }

    #[test]
    fn oversized_layout_rejected() {
        let mut spec = ScenarioSpec::new(ScenarioKind::SpreadFf { spacing: 6 });
        assert!(make_scenario(&spec).is_ok());
        spec.grid = crate::platform::grid::Bounds { width: 50, height: 60 };
        assert!(matches!(make_scenario(&spec), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn blocks_and_neighbors() {
        let spec = ScenarioSpec::new(ScenarioKind::Blocks {
            ff_block_w: 8,
            ff_block_h: 2,
            lut_block_w: 24,
            lut_block_h: 8,
            gap_slices: 3,
        });
        let s = make_scenario(&spec).unwrap();
        let ffs = BoundingBox::of(s.grid.victim_ff_positions.iter()).unwrap();
        let lut_max_y = s.grid.neighbor_elements.iter().map(|e| e.position.y).max().unwrap();
        assert_eq!(ffs.min.y - lut_max_y - 1, 3);
        let too_small = ScenarioSpec::new(ScenarioKind::Blocks {
            ff_block_w: 2,
            ff_block_h: 2,
            lut_block_w: 24,
            lut_block_h: 8,
            gap_slices: 0,
        });
        assert!(make_scenario(&too_small).is_err());

        let spec = ScenarioSpec::new(ScenarioKind::Neighbor {
            sources: vec![
                NeighborSpec::new(SourceKind::Kalman { input_bits: 48 }, Side::Below),
                NeighborSpec::new(SourceKind::Processor, Side::Above),
            ],
        });
        let s = make_scenario(&spec).unwrap();
        assert_eq!(s.source_ids(), vec![0, 1, 2]);
        let k: u32 = s.grid.neighbor_elements.iter().filter(|e| e.owner == 1).map(|e| e.count).sum();
        assert_eq!(k, 600);
    }
}
