use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridMap, Zone};

/// Side length of the square relocation neighbourhood.
pub const ACTION_SIDE: usize = 15;
pub const ACTION_RADIUS: i32 = (ACTION_SIDE as i32 - 1) / 2;
pub const ACTION_COUNT: usize = ACTION_SIDE * ACTION_SIDE;

/// Relocation offset `(dr, dc)` encoded as `(dr + 7) * 15 + (dc + 7)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionIndex(u8);

impl ActionIndex {
    /// Offset (0, 0): stay put / keep serving the current plan.
    pub const STAY: ActionIndex = ActionIndex(((ACTION_RADIUS as usize) * ACTION_SIDE + ACTION_RADIUS as usize) as u8);

    pub fn new(index: usize) -> Result<Self> {
        if index < ACTION_COUNT {
            Ok(Self(index as u8))
        } else {
            Err(Error::contract(format!("action index {index} outside 0..{ACTION_COUNT}")))
        }
    }

    pub fn from_offset(dr: i32, dc: i32) -> Result<Self> {
        if dr.abs() > ACTION_RADIUS || dc.abs() > ACTION_RADIUS {
            return Err(Error::contract(format!("offset ({dr}, {dc}) outside the action window")));
        }
        Self::new(((dr + ACTION_RADIUS) * ACTION_SIDE as i32 + dc + ACTION_RADIUS) as usize)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn offset(self) -> (i32, i32) {
        let i = self.0 as i32;
        (i / ACTION_SIDE as i32 - ACTION_RADIUS, i % ACTION_SIDE as i32 - ACTION_RADIUS)
    }
}

impl fmt::Display for ActionIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (dr, dc) = self.offset();
        write!(f, "{}({dr:+},{dc:+})", self.0)
    }
}

/// Set of permitted actions over the 225-slot head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionMask([u64; 4]);

impl Default for ActionMask {
    fn default() -> Self {
        Self::empty()
    }
}

impl ActionMask {
    pub const fn empty() -> Self {
        Self([0; 4])
    }

    pub fn all() -> Self {
        let mut m = Self::empty();
        for i in 0..ACTION_COUNT {
            m.insert(i);
        }
        m
    }

    pub fn stay_only() -> Self {
        let mut m = Self::empty();
        m.insert(ActionIndex::STAY.index());
        m
    }

    /// Offsets whose landing zone stays on the grid.
    pub fn in_bounds(grid: &GridMap, at: Zone) -> Self {
        let mut m = Self::empty();
        for dr in -ACTION_RADIUS..=ACTION_RADIUS {
            for dc in -ACTION_RADIUS..=ACTION_RADIUS {
                if grid.offset(at, dr, dc).is_some() {
                    m.insert(ActionIndex::from_offset(dr, dc).expect("in window").index());
                }
            }
        }
        m
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut m = Self::empty();
        for i in indices {
            ActionIndex::new(i)?;
            m.insert(i);
        }
        Ok(m)
    }

    pub fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < ACTION_COUNT && self.0[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..ACTION_COUNT).filter(|&i| self.contains(i))
    }
}

/// Highest-valued permitted action; ties go to the lowest index.
pub fn masked_argmax(q: &[f64], mask: &ActionMask) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in mask.iter().filter(|&i| i < q.len()) {
        match best {
            Some((_, v)) if q[i] <= v => {}
            _ => best = Some((i, q[i])),
        }
    }
    best.map(|(i, _)| i)
}

/// Epsilon-greedy choice restricted to `mask`.
pub fn select_action(q: &[f64], mask: &ActionMask, epsilon: f64, rng: &mut impl Rng) -> Result<ActionIndex> {
    if q.len() != ACTION_COUNT {
        return Err(Error::contract(format!("expected {ACTION_COUNT} action values, got {}", q.len())));
    }
    if mask.is_empty() {
        return Err(Error::contract("action mask is empty"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::contract(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        let k = rng.random_range(0..mask.len());
        return ActionIndex::new(mask.iter().nth(k).expect("k < len"));
    }
    ActionIndex::new(masked_argmax(q, mask).expect("non-empty mask"))
}
