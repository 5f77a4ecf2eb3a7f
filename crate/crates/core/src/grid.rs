//! City geometry: a rectangular lattice of square zones, hop-zone designation,
//! and Manhattan routing with a deterministic rows-first tie-break.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A lattice cell addressed by `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Zone {
    pub row: usize,
    pub col: usize,
}

impl Zone {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Number of lattice steps between two zones.
    pub fn cells_to(self, other: Zone) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    /// One lattice step from `self` toward `to`, moving along rows first.
    pub fn step_toward(self, to: Zone) -> Zone {
        if self.row < to.row {
            Zone::new(self.row + 1, self.col)
        } else if self.row > to.row {
            Zone::new(self.row - 1, self.col)
        } else if self.col < to.col {
            Zone::new(self.row, self.col + 1)
        } else if self.col > to.col {
            Zone::new(self.row, self.col - 1)
        } else {
            self
        }
    }

    /// Whether `self` lies on some minimal lattice path from `a` to `b`.
    pub fn between(self, a: Zone, b: Zone) -> bool {
        a.cells_to(self) + self.cells_to(b) == a.cells_to(b)
    }

    /// Compass sector of `to` relative to `self`: each component in {-1, 0, 1}.
    pub fn heading(self, to: Zone) -> (i8, i8) {
        let sign = |a: usize, b: usize| match b.cmp(&a) {
            std::cmp::Ordering::Less => -1,
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Greater => 1,
        };
        (sign(self.row, to.row), sign(self.col, to.col))
    }
}

impl From<(usize, usize)> for Zone {
    fn from((row, col): (usize, usize)) -> Self {
        Zone::new(row, col)
    }
}

impl From<Zone> for (usize, usize) {
    fn from(z: Zone) -> Self {
        (z.row, z.col)
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Zone lattice with row-major linear ids (`id = row * cols + col`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    rows: usize,
    cols: usize,
    cell_edge_m: f64,
    hop_zones: BTreeSet<usize>,
}

/// A minimal 4-neighbour path between two zones.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub zones: Vec<Zone>,
    pub total_distance_m: f64,
}

impl Route {
    /// Number of lattice steps along the route.
    pub fn hops(&self) -> usize {
        self.zones.len().saturating_sub(1)
    }
}

impl GridMap {
    pub fn new(rows: usize, cols: usize, cell_edge_m: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::config(format!("grid dimensions must be positive, got {rows}x{cols}")));
        }
        if !(cell_edge_m.is_finite() && cell_edge_m > 0.0) {
            return Err(Error::config(format!("cell edge must be positive, got {cell_edge_m}")));
        }
        Ok(Self { rows, cols, cell_edge_m, hop_zones: BTreeSet::new() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_edge_m(&self) -> f64 {
        self.cell_edge_m
    }

    pub fn zone_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, zone: Zone) -> bool {
        zone.row < self.rows && zone.col < self.cols
    }

    pub fn check(&self, zone: Zone) -> Result<()> {
        if self.contains(zone) {
            Ok(())
        } else {
            Err(Error::input(format!("zone {zone} outside {}x{} grid", self.rows, self.cols)))
        }
    }

    /// Linear id of an in-bounds zone. Panics on out-of-bounds input; use
    /// [`GridMap::check`] first for untrusted zones.
    pub fn id(&self, zone: Zone) -> usize {
        assert!(self.contains(zone), "zone {zone} out of bounds");
        zone.row * self.cols + zone.col
    }

    pub fn zone(&self, id: usize) -> Zone {
        assert!(id < self.zone_count(), "zone id {id} out of bounds");
        Zone::new(id / self.cols, id % self.cols)
    }

    pub fn zones(&self) -> impl Iterator<Item = Zone> + '_ {
        (0..self.zone_count()).map(|id| self.zone(id))
    }

    /// Zone reached by applying a signed offset, if it stays on the grid.
    pub fn offset(&self, zone: Zone, dr: i32, dc: i32) -> Option<Zone> {
        let row = zone.row as i64 + dr as i64;
        let col = zone.col as i64 + dc as i64;
        if row < 0 || col < 0 || row >= self.rows as i64 || col >= self.cols as i64 {
            None
        } else {
            Some(Zone::new(row as usize, col as usize))
        }
    }

    pub fn is_hop_zone(&self, zone: Zone) -> bool {
        self.contains(zone) && self.hop_zones.contains(&self.id(zone))
    }

    /// Hop zones in ascending linear-id order.
    pub fn hop_zones(&self) -> Vec<Zone> {
        self.hop_zones.iter().map(|&id| self.zone(id)).collect()
    }

    /// Replaces the hop-zone set. Every zone must be in bounds.
    pub fn set_hop_zones(&mut self, zones: impl IntoIterator<Item = Zone>) -> Result<()> {
        let mut set = BTreeSet::new();
        for z in zones {
            self.check(z)?;
            set.insert(self.id(z));
        }
        self.hop_zones = set;
        Ok(())
    }

    /// Marks every zone whose row and column are both multiples of `spacing`
    /// and whose daily request count reaches `min_requests` as a hop zone.
    /// The selection is stored on the grid and returned in id order.
    pub fn select_hop_zones(
        &mut self,
        daily_requests: &[u64],
        spacing: usize,
        min_requests: u64,
    ) -> Result<Vec<Zone>> {
        if daily_requests.len() != self.zone_count() {
            return Err(Error::input(format!(
                "expected {} per-zone counts, got {}",
                self.zone_count(),
                daily_requests.len()
            )));
        }
        if spacing == 0 {
            return Err(Error::input("hop spacing must be at least 1"));
        }
        let selected: Vec<Zone> = self
            .zones()
            .filter(|z| z.row % spacing == 0 && z.col % spacing == 0)
            .filter(|&z| daily_requests[self.id(z)] >= min_requests)
            .collect();
        self.set_hop_zones(selected.iter().copied())?;
        Ok(selected)
    }

    pub fn shortest_route(&self, from: Zone, to: Zone) -> Result<Route> {
        self.check(from)?;
        self.check(to)?;
        let mut zones = Vec::with_capacity(from.cells_to(to) + 1);
        let mut at = from;
        zones.push(at);
        while at != to {
            at = at.step_toward(to);
            zones.push(at);
        }
        let total_distance_m = (zones.len() - 1) as f64 * self.cell_edge_m;
        Ok(Route { zones, total_distance_m })
    }

    pub fn zone_distance_m(&self, a: Zone, b: Zone) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.distance_m(a, b))
    }

    /// Unchecked Manhattan distance in meters.
    pub(crate) fn distance_m(&self, a: Zone, b: Zone) -> f64 {
        a.cells_to(b) as f64 * self.cell_edge_m
    }

    /// Hop zones as a JSON array of `[row, col]` pairs.
    pub fn hop_zones_json(&self) -> String {
        serde_json::to_string(&self.hop_zones()).expect("zone list serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_city_scale_grid() {
        let g = GridMap::new(41, 43, 800.0).unwrap();
        assert_eq!(g.zone_count(), 1763);
        assert!(g.hop_zones().is_empty());
    }

    #[test]
    fn single_zone_grid() {
        let g = GridMap::new(1, 1, 800.0).unwrap();
        assert_eq!(g.zone_count(), 1);
        assert_eq!(g.zone(0), Zone::new(0, 0));
    }

    #[test]
    fn row_major_ids() {
        let g = GridMap::new(3, 4, 100.0).unwrap();
        assert_eq!(g.zone_count(), 12);
        assert_eq!(g.id(Zone::new(2, 3)), 11);
        for id in 0..12 {
            assert_eq!(g.id(g.zone(id)), id);
        }
    }

    #[test]
    fn zero_dimension_is_config_error() {
        assert!(matches!(GridMap::new(0, 4, 100.0), Err(Error::InvalidConfig(_))));
        assert!(matches!(GridMap::new(4, 0, 100.0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn hop_zones_on_every_third_intersection() {
        let mut g = GridMap::new(9, 9, 800.0).unwrap();
        let hops = g.select_hop_zones(&[10; 81], 3, 10).unwrap();
        let expected: Vec<Zone> = [0, 3, 6]
            .iter()
            .flat_map(|&r| [0, 3, 6].iter().map(move |&c| Zone::new(r, c)))
            .collect();
        assert_eq!(hops, expected);
        assert_eq!(g.hop_zones(), expected);
    }

    #[test]
    fn quiet_zones_are_never_hops() {
        let mut g = GridMap::new(9, 9, 800.0).unwrap();
        assert!(g.select_hop_zones(&[0; 81], 3, 10).unwrap().is_empty());
    }

    #[test]
    fn hop_selection_rejects_bad_counts() {
        let mut g = GridMap::new(3, 3, 800.0).unwrap();
        assert!(matches!(g.select_hop_zones(&[1; 8], 3, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn identity_route() {
        let g = GridMap::new(5, 5, 800.0).unwrap();
        let r = g.shortest_route(Zone::new(0, 0), Zone::new(0, 0)).unwrap();
        assert_eq!(r.zones, vec![Zone::new(0, 0)]);
        assert_eq!(r.total_distance_m, 0.0);
    }

    #[test]
    fn manhattan_route_length() {
        let g = GridMap::new(5, 5, 800.0).unwrap();
        let r = g.shortest_route(Zone::new(0, 0), Zone::new(2, 3)).unwrap();
        assert_eq!(r.hops(), 5);
        assert_eq!(r.total_distance_m, 4000.0);
    }

    #[test]
    fn rows_first_tie_break() {
        let g = GridMap::new(5, 5, 800.0).unwrap();
        let r = g.shortest_route(Zone::new(0, 0), Zone::new(1, 1)).unwrap();
        assert_eq!(r.zones, vec![Zone::new(0, 0), Zone::new(1, 0), Zone::new(1, 1)]);
    }

    #[test]
    fn out_of_bounds_route_is_rejected() {
        let g = GridMap::new(5, 5, 800.0).unwrap();
        assert!(g.shortest_route(Zone::new(0, 0), Zone::new(5, 0)).is_err());
        assert!(g.zone_distance_m(Zone::new(9, 9), Zone::new(0, 0)).is_err());
    }

    #[test]
    fn distance_examples() {
        let g = GridMap::new(5, 5, 800.0).unwrap();
        assert_eq!(g.zone_distance_m(Zone::new(3, 3), Zone::new(3, 3)).unwrap(), 0.0);
        assert_eq!(g.zone_distance_m(Zone::new(0, 0), Zone::new(0, 3)).unwrap(), 2400.0);
    }

    #[test]
    fn hop_zone_json_export() {
        let mut g = GridMap::new(4, 4, 100.0).unwrap();
        g.set_hop_zones([Zone::new(0, 0), Zone::new(3, 3)]).unwrap();
        assert_eq!(g.hop_zones_json(), "[[0,0],[3,3]]");
    }
}
