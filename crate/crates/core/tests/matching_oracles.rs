use std::collections::BTreeSet;

use proptest::prelude::*;

use mhrs_core::demand::EtaModel;
use mhrs_core::fleet::{RequestId, Stop, VehicleId, VehicleState};
use mhrs_core::grid::{GridMap, Zone};
use mhrs_core::matching::{
    group_requests, match_vehicle, plan_trip, GroupKey, Leg, LegKind, MatchOutcome, MatchParams, PlanMode, RequestGroup,
    SeatPolicy,
};

fn zone7() -> impl Strategy<Value = Zone> {
    (0usize..7, 0usize..7).prop_map(|(r, c)| Zone::new(r, c))
}

fn grid_with(hops: &[Zone]) -> GridMap {
    let mut g = GridMap::new(7, 7, 800.0).unwrap();
    g.set_hop_zones(hops.iter().copied()).unwrap();
    g
}

fn group(from: Zone, to: Zone, ids: &[usize]) -> RequestGroup {
    RequestGroup { key: GroupKey { from, to }, kind: LegKind::Direct, members: ids.iter().map(|&i| RequestId(i)).collect() }
}

proptest! {
    #[test]
    fn chosen_hop_is_the_exhaustive_minimiser(
        hops in prop::collection::btree_set(zone7(), 3),
        o in zone7(),
        d in zone7(),
    ) {
        let hops: Vec<Zone> = hops.into_iter().collect();
        let g = grid_with(&hops);
        let gamma = 0.2;
        let plan = plan_trip(o, d, &g, PlanMode::MultiHop { detour: gamma });
        let mut best: Option<(usize, usize, Zone)> = None;
        if o != d {
            for &h in &hops {
                if h == o || h == d {
                    continue;
                }
                let via = o.cells_to(h) + h.cells_to(d);
                if via as f64 > (1.0 + gamma) * o.cells_to(d) as f64 {
                    continue;
                }
                let key = (via, h.row * 7 + h.col, h);
                if best.is_none_or(|b| (key.0, key.1) < (b.0, b.1)) {
                    best = Some(key);
                }
            }
        }
        match best {
            Some((via, _, h)) => {
                prop_assert_eq!(plan.legs().len(), 2);
                prop_assert_eq!(plan.legs()[0].to, h);
                prop_assert_eq!(plan.legs()[1].from, h);
                prop_assert!(via as f64 <= 1.2 * o.cells_to(d) as f64);
            }
            None if o == d => prop_assert_eq!(plan.legs().len(), 0),
            None => {
                prop_assert_eq!(plan.legs().len(), 1);
                prop_assert_eq!(plan.legs()[0].kind, LegKind::Direct);
            }
        }
        for w in plan.legs().windows(2) {
            prop_assert_eq!(w[0].to, w[1].from);
            prop_assert!(g.is_hop_zone(w[0].to));
        }
    }

    #[test]
    fn groups_partition_the_pending_set(
        legs in prop::collection::vec((zone7(), zone7()), 0..30),
    ) {
        let pending: Vec<(RequestId, Leg)> = legs
            .iter()
            .enumerate()
            .map(|(i, &(from, to))| (RequestId(i), Leg { from, to, kind: LegKind::Direct, vehicle: None }))
            .collect();
        let groups = group_requests(pending.clone());
        let mut seen = BTreeSet::new();
        for g in &groups {
            for m in &g.members {
                prop_assert!(seen.insert(*m));
                let (from, to) = legs[m.0];
                prop_assert_eq!(g.key, GroupKey { from, to });
            }
        }
        prop_assert_eq!(seen.len(), legs.len());
        prop_assert!(groups.windows(2).all(|w| w[0].key < w[1].key));
    }

    #[test]
    fn idle_fleet_match_is_the_nearest_in_radius(
        spots in prop::collection::vec(zone7(), 1..6),
        pickup in zone7(),
        drop in zone7(),
        radius in 1usize..8,
    ) {
        let g = grid_with(&[]);
        let eta = EtaModel::distance_only(&g, 800.0).unwrap();
        let fleet: Vec<VehicleState> = spots.iter().enumerate().map(|(i, &z)| VehicleState::new(VehicleId(i), z, 4)).collect();
        let params = MatchParams { radius_cells: radius, seats: SeatPolicy::Shared };
        let out = match_vehicle(&group(pickup, drop, &[0]), &fleet, &BTreeSet::new(), &eta, 0, params).unwrap();
        let oracle = spots
            .iter()
            .enumerate()
            .filter(|(_, z)| z.cells_to(pickup) <= radius)
            .min_by_key(|(i, z)| (z.cells_to(pickup), *i))
            .map(|(i, _)| i);
        match (out, oracle) {
            (MatchOutcome::NoCandidate, None) => {}
            (MatchOutcome::Assigned { assignment, overflow }, Some(i)) => {
                prop_assert_eq!(assignment.vehicle, VehicleId(i));
                prop_assert!(overflow.is_empty());
                prop_assert_eq!(assignment.pickup_etas, vec![spots[i].cells_to(pickup) as f64]);
            }
            (o, e) => prop_assert!(false, "engine {:?} vs oracle {:?}", o, e),
        }
    }
}

/// Vacant seats after `promised` pickups are routed to a vehicle.
fn loaded(id: usize, at: Zone, promised: usize) -> VehicleState {
    let mut v = VehicleState::new(VehicleId(id), at, 4);
    for k in 0..promised {
        v.route.push(Stop::pickup(at, RequestId(100 + k)));
        v.route.push(Stop::drop_off(at, RequestId(100 + k)));
    }
    v
}

#[test]
fn overflow_matches_brute_force_assignment() {
    let g = grid_with(&[]);
    let eta = EtaModel::distance_only(&g, 800.0).unwrap();
    let pickup = Zone::new(3, 3);
    // Nearest vehicle has 2 free seats; the far one is empty.
    let fleet = vec![loaded(0, Zone::new(3, 4), 2), loaded(1, Zone::new(6, 6), 0)];
    let params = MatchParams { radius_cells: 7, seats: SeatPolicy::Shared };
    let members = [5, 6, 7];
    let out = match_vehicle(&group(pickup, Zone::new(0, 0), &members), &fleet, &BTreeSet::new(), &eta, 0, params).unwrap();

    // Oracle: nearest vehicle with a free seat takes members in id order up
    // to its vacancy; the rest overflow.
    let (winner, vacancy) = fleet
        .iter()
        .filter(|v| v.vacant_seats() > 0)
        .map(|v| (v.zone.cells_to(pickup), v.id, v.vacant_seats()))
        .min()
        .map(|(_, id, seats)| (id, seats))
        .unwrap();
    let take: Vec<RequestId> = members.iter().take(vacancy).map(|&i| RequestId(i)).collect();
    let rest: Vec<RequestId> = members.iter().skip(vacancy).map(|&i| RequestId(i)).collect();
    let MatchOutcome::Assigned { assignment, overflow } = out else { panic!("expected an assignment") };
    assert_eq!(assignment.vehicle, winner);
    assert_eq!(assignment.requests, take);
    assert_eq!(overflow, rest);
    assert_eq!(assignment.requests.len(), 2);
    assert!(assignment.pickup_etas.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn solo_seating_skips_vehicles_with_anyone_aboard_or_promised() {
    let g = grid_with(&[]);
    let eta = EtaModel::distance_only(&g, 800.0).unwrap();
    let fleet = vec![loaded(0, Zone::new(0, 0), 1), loaded(1, Zone::new(0, 3), 0)];
    let params = MatchParams { radius_cells: 7, seats: SeatPolicy::Solo };
    let out = match_vehicle(&group(Zone::new(0, 0), Zone::new(2, 2), &[0, 1]), &fleet, &BTreeSet::new(), &eta, 0, params).unwrap();
    let MatchOutcome::Assigned { assignment, overflow } = out else { panic!("expected an assignment") };
    assert_eq!(assignment.vehicle, VehicleId(1));
    assert_eq!(assignment.requests, vec![RequestId(0)]);
    assert_eq!(overflow, vec![RequestId(1)]);
}
