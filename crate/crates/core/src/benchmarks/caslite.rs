//! A small vertical collision-avoidance MDP: score tables by backward
//! induction and per-advisory unsafeable regions by backward reachability.
//!
//! Internally altitudes live on an integer lattice of 25/3 ft and vertical
//! rates on a lattice of 500 ft/min (25/3 ft/s), so a 1 s Euler step moves
//! the altitude by exactly the rate index. The published grid (100 ft steps)
//! is every 12th altitude point. Accelerations of +-8 ft/s^2 map to one rate
//! step per second.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::constraints::{AxisBox, ConstraintSet, ConstraintSpec, ConvexOutputSet, InputRegion};
use crate::error::{Error, Result};
use crate::math::argmax;
use crate::training::Dataset;

pub const ADVISORIES: [&str; 9] = [
    "COC", "DNC", "DND", "DES1500", "CL1500", "SDES1500", "SCL1500", "SDES2500", "SCL2500",
];
pub const COC: usize = 0;
pub const CL1500: usize = 4;

/// Feet per altitude lattice unit.
pub const H_UNIT_FT: f64 = 25.0 / 3.0;
/// Feet per second per rate index (500 ft/min).
pub const V_UNIT_FPS: f64 = 500.0 / 60.0;
/// Altitude lattice units per published grid step (100 ft).
pub const H_GRID_STRIDE: i32 = 12;
pub const H_MAX: i32 = 240;
pub const V_MAX: i32 = 5;
pub const TAU_MAX: usize = 20;
/// NMAC when `|h| < 100 ft`.
pub const NMAC_UNITS: i32 = 12;
pub const SCORE_EPSILON: f64 = 1e-4;
/// Fraction of each grid step covered by a cell's constraint box.
pub const CELL_FILL: f64 = 0.9;

/// Compliant vertical-rate range of an advisory in rate indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Advisory {
    pub name: &'static str,
    pub min_rate: Option<i32>,
    pub max_rate: Option<i32>,
}

impl Advisory {
    pub fn complies(&self, v: i32) -> bool {
        self.min_rate.is_none_or(|lo| v >= lo) && self.max_rate.is_none_or(|hi| v <= hi)
    }
}

pub fn advisory_set() -> [Advisory; 9] {
    let adv = |name, min_rate, max_rate| Advisory {
        name,
        min_rate,
        max_rate,
    };
    [
        adv("COC", None, None),
        adv("DNC", None, Some(0)),
        adv("DND", Some(0), None),
        adv("DES1500", None, Some(-3)),
        adv("CL1500", Some(3), None),
        adv("SDES1500", None, Some(-3)),
        adv("SCL1500", Some(3), None),
        adv("SDES2500", None, Some(-5)),
        adv("SCL2500", Some(5), None),
    ]
}

/// Accelerations (rate steps per second) the pilot may choose under advisory
/// `i` at rate `v`. Clear of conflict means no maneuver; a non-compliant rate
/// is pushed toward compliance; otherwise any on-lattice step keeping compliance.
pub fn allowed_accelerations(advisories: &[Advisory; 9], i: usize, v: i32) -> Vec<i32> {
    if i == COC {
        return vec![0];
    }
    let adv = &advisories[i];
    if adv.max_rate.is_some_and(|hi| v > hi) {
        return vec![-1];
    }
    if adv.min_rate.is_some_and(|lo| v < lo) {
        return vec![1];
    }
    [-1, 0, 1]
        .into_iter()
        .filter(|a| (v + a).abs() <= V_MAX && adv.complies(v + a))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CasLiteParams {
    pub nmac_reward: f64,
    pub alert_reward: f64,
    pub switch_reward: f64,
}

impl Default for CasLiteParams {
    fn default() -> Self {
        Self {
            nmac_reward: -1.0,
            alert_reward: -0.01,
            switch_reward: -0.02,
        }
    }
}

impl CasLiteParams {
    fn issue_reward(&self, prev: usize, i: usize) -> f64 {
        let mut r = 0.0;
        if i != COC {
            r += self.alert_reward;
        }
        if i != prev {
            r += self.switch_reward;
        }
        r
    }
}

/// The published grid: altitude (ft), ownship rate (ft/s) and time to loss
/// of horizontal separation (s).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CasLiteGrid {
    pub h_ft: Vec<f64>,
    pub v_fps: Vec<f64>,
    pub tau: Vec<usize>,
}

impl Default for CasLiteGrid {
    fn default() -> Self {
        Self {
            h_ft: (-H_MAX / H_GRID_STRIDE..=H_MAX / H_GRID_STRIDE)
                .map(|k| f64::from(k) * 100.0)
                .collect(),
            v_fps: (-V_MAX..=V_MAX).map(|v| f64::from(v) * V_UNIT_FPS).collect(),
            tau: (0..=TAU_MAX).collect(),
        }
    }
}

impl CasLiteGrid {
    pub fn cells(&self) -> usize {
        self.h_ft.len() * self.v_fps.len() * self.tau.len()
    }

    pub fn steps(&self) -> [f64; 3] {
        [V_UNIT_FPS, 100.0, 1.0]
    }
}

const H_COUNT: usize = (2 * H_MAX + 1) as usize;
const V_COUNT: usize = (2 * V_MAX + 1) as usize;
const GRID_H: usize = (2 * H_MAX / H_GRID_STRIDE + 1) as usize;

fn h_index(h: i32) -> usize {
    (h + H_MAX) as usize
}

fn v_index(v: i32) -> usize {
    (v + V_MAX) as usize
}

/// A grid cell by index: rate, altitude and tau positions in [`CasLiteGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub v: usize,
    pub h: usize,
    pub tau: usize,
}

impl Cell {
    fn h_units(&self) -> i32 {
        self.h as i32 * H_GRID_STRIDE - H_MAX
    }

    fn v_units(&self) -> i32 {
        self.v as i32 - V_MAX
    }

    /// Grid coordinates `(v_fps, h_ft, tau)`.
    pub fn coords(&self) -> [f64; 3] {
        [
            f64::from(self.v_units()) * V_UNIT_FPS,
            f64::from(self.h_units()) * H_UNIT_FT,
            self.tau as f64,
        ]
    }
}

/// Scores on grid cells for every previous advisory, and safeability masks.
#[derive(Debug, Clone)]
pub struct CasLiteTables {
    pub grid: CasLiteGrid,
    pub params: CasLiteParams,
    /// Indexed by `[prev][tau][h][v]` on grid cells.
    scores: Vec<[f64; 9]>,
    /// Bit `i` set when advisory `i` is safeable; indexed `[tau][h][v]` on
    /// the full altitude lattice.
    safeable: Vec<u16>,
}

impl CasLiteTables {
    fn score_index(prev: usize, cell: Cell) -> usize {
        ((prev * (TAU_MAX + 1) + cell.tau) * GRID_H + cell.h) * V_COUNT + cell.v
    }

    fn lattice_index(tau: usize, h: i32, v: i32) -> usize {
        (tau * H_COUNT + h_index(h)) * V_COUNT + v_index(v)
    }

    pub fn scores(&self, prev: usize, cell: Cell) -> &[f64; 9] {
        &self.scores[Self::score_index(prev, cell)]
    }

    pub fn safeable_mask(&self, cell: Cell) -> u16 {
        self.safeable[Self::lattice_index(cell.tau, cell.h_units(), cell.v_units())]
    }

    pub fn is_safeable(&self, advisory: usize, cell: Cell) -> bool {
        self.safeable_mask(cell) & (1 << advisory) != 0
    }

    /// Every grid cell in `(tau, h, v)` order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let (nt, nh, nv) = (self.grid.tau.len(), self.grid.h_ft.len(), self.grid.v_fps.len());
        (0..nt).flat_map(move |tau| (0..nh).flat_map(move |h| (0..nv).map(move |v| Cell { v, h, tau })))
    }
}

fn step(h: i32, v: i32, a: i32) -> (i32, i32) {
    ((h - v).clamp(-H_MAX, H_MAX), (v + a).clamp(-V_MAX, V_MAX))
}

/// Backward induction over tau for the score tables and safeability.
pub fn caslite_solve(params: &CasLiteParams) -> CasLiteTables {
    let grid = CasLiteGrid::default();
    let advisories = advisory_set();
    let accel: Vec<Vec<Vec<i32>>> = (0..9)
        .map(|i| (-V_MAX..=V_MAX).map(|v| allowed_accelerations(&advisories, i, v)).collect())
        .collect();

    let mut scores = vec![[0.0; 9]; 9 * (TAU_MAX + 1) * GRID_H * V_COUNT];
    let mut safeable = vec![0u16; (TAU_MAX + 1) * H_COUNT * V_COUNT];
    // value[prev][h][v] for the previous tau layer.
    let mut value = vec![0.0; 9 * H_COUNT * V_COUNT];
    let val_idx = |p: usize, h: i32, v: i32| (p * H_COUNT + h_index(h)) * V_COUNT + v_index(v);

    for tau in 0..=TAU_MAX {
        let mut next_value = vec![0.0; value.len()];
        for h in -H_MAX..=H_MAX {
            for v in -V_MAX..=V_MAX {
                // Advisory-dependent continuation, independent of prev.
                let mut cont = [0.0; 9];
                let mut mask = 0u16;
                for i in 0..9 {
                    if tau == 0 {
                        cont[i] = if h.abs() < NMAC_UNITS { params.nmac_reward } else { 0.0 };
                        if h.abs() >= NMAC_UNITS {
                            mask |= 1 << i;
                        }
                        continue;
                    }
                    let mut best = f64::NEG_INFINITY;
                    for &a in &accel[i][v_index(v)] {
                        let (h2, v2) = step(h, v, a);
                        best = best.max(value[val_idx(i, h2, v2)]);
                        if safeable[CasLiteTables::lattice_index(tau - 1, h2, v2)] != 0 {
                            mask |= 1 << i;
                        }
                    }
                    cont[i] = best;
                }
                safeable[CasLiteTables::lattice_index(tau, h, v)] = mask;
                let on_grid = h.rem_euclid(H_GRID_STRIDE) == 0;
                for p in 0..9 {
                    let q: [f64; 9] = std::array::from_fn(|i| params.issue_reward(p, i) + cont[i]);
                    next_value[val_idx(p, h, v)] = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if on_grid {
                        let cell = Cell {
                            v: v_index(v),
                            h: ((h + H_MAX) / H_GRID_STRIDE) as usize,
                            tau,
                        };
                        scores[CasLiteTables::score_index(p, cell)] = q;
                    }
                }
            }
        }
        value = next_value;
    }
    CasLiteTables {
        grid,
        params: *params,
        scores,
        safeable,
    }
}

/// Unsafeable grid cells per advisory, and cells where nothing is safeable.
#[derive(Debug, Clone, PartialEq)]
pub struct Unsafeable {
    pub per_advisory: Vec<Vec<Cell>>,
    pub safeable_none: Vec<Cell>,
}

pub fn caslite_unsafeable(tables: &CasLiteTables) -> Unsafeable {
    let mut per_advisory = vec![Vec::new(); 9];
    let mut safeable_none = Vec::new();
    for cell in tables.cells() {
        let mask = tables.safeable_mask(cell);
        if mask == 0 {
            safeable_none.push(cell);
        }
        for (i, cells) in per_advisory.iter_mut().enumerate() {
            if mask & (1 << i) == 0 {
                cells.push(cell);
            }
        }
    }
    Unsafeable {
        per_advisory,
        safeable_none,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum APrev {
    Coc,
    Cl1500,
}

impl APrev {
    pub fn index(self) -> usize {
        match self {
            APrev::Coc => COC,
            APrev::Cl1500 => CL1500,
        }
    }
}

impl std::str::FromStr for APrev {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coc" => Ok(APrev::Coc),
            "cl1500" => Ok(APrev::Cl1500),
            other => Err(Error::Usage(format!("unknown previous advisory {other:?} (expected coc or cl1500)"))),
        }
    }
}

pub fn input_names() -> [&'static str; 3] {
    ["v_fps", "h_ft", "tau"]
}

/// Constraint set over `(v_O - v_I, h, tau)`: one score constraint per
/// advisory with a non-empty unsafeable region (safeable-none cells removed).
pub fn caslite_constraints(tables: &CasLiteTables, unsafeable: &Unsafeable) -> Result<ConstraintSet> {
    let steps = tables.grid.steps();
    let half: Vec<f64> = steps.iter().map(|s| 0.5 * CELL_FILL * s).collect();
    let none: std::collections::HashSet<Cell> = unsafeable.safeable_none.iter().copied().collect();
    let mut constraints = Vec::new();
    for (i, cells) in unsafeable.per_advisory.iter().enumerate() {
        let boxes = cells
            .iter()
            .filter(|c| !none.contains(c))
            .map(|c| AxisBox::centered(&c.coords(), &half))
            .collect::<Result<Vec<_>>>()?;
        if boxes.is_empty() {
            continue;
        }
        constraints.push(ConstraintSpec {
            name: format!("unsafeable_{}", ADVISORIES[i]),
            region: InputRegion::new(boxes)?,
            output: ConvexOutputSet::score_not_highest(vec![i], SCORE_EPSILON),
        });
    }
    let g = &tables.grid;
    let domain = AxisBox::new(vec![
        [g.v_fps[0] - 0.5 * steps[0], g.v_fps[g.v_fps.len() - 1] + 0.5 * steps[0]],
        [g.h_ft[0] - 0.5 * steps[1], g.h_ft[g.h_ft.len() - 1] + 0.5 * steps[1]],
        [-0.5, TAU_MAX as f64 + 0.5],
    ])?;
    let scale = steps.iter().map(|s| 1.0 / s).collect();
    ConstraintSet::new(InputRegion::single(domain), scale, 9, constraints)
}

/// One sample per grid cell for the chosen previous advisory.
pub fn caslite_dataset(tables: &CasLiteTables, a_prev: APrev) -> Result<Dataset> {
    let cells: Vec<Cell> = tables.cells().collect();
    let mut inputs = Array2::zeros((cells.len(), 3));
    let mut targets = Array2::zeros((cells.len(), 9));
    let mut strata = Vec::with_capacity(cells.len());
    for (r, cell) in cells.iter().enumerate() {
        inputs.row_mut(r).assign(&ndarray::aview1(&cell.coords()));
        let q = tables.scores(a_prev.index(), *cell);
        targets.row_mut(r).assign(&ndarray::aview1(q));
        strata.push(argmax(q));
    }
    Dataset::new(inputs, targets, Some(strata))
}

/// Cells inside some constraint region whose optimal advisory is the
/// constrained one; the score tables normally avoid these.
pub fn conflicting_targets(ds: &Dataset, constraints: &ConstraintSet) -> Result<usize> {
    let mut count = 0;
    for (x, y) in ds.inputs.rows().into_iter().zip(ds.targets.rows()) {
        let x = x.to_vec();
        for c in &constraints.constraints {
            if c.region.contains(&x)? && !c.output.admits(&y.to_vec(), 0.0) {
                count += 1;
                break;
            }
        }
    }
    Ok(count)
}
