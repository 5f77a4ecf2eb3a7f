mod common;

use common::{fig1, fig2, run_until_settled, toy_sim, z};
use mhrs_core::demand::TripRecord;
use mhrs_core::engine::Mode;
use mhrs_core::eventlog::EventKind;
use mhrs_core::fleet::{PassengerState, RequestId, VehicleId};
use mhrs_core::metrics::{cross_check, replay_log};

#[test]
fn fig1_rider_hops_at_b_and_hop_vehicle_ratio_is_four_thirds() {
    let mut sim = fig1::sim(Mode::Mhrs);
    run_until_settled(&mut sim, 20);
    let r1 = &sim.passengers()[fig1::RIDER1];
    let r2 = &sim.passengers()[fig1::RIDER2];
    assert_eq!(r1.state, PassengerState::Completed);
    assert_eq!(r2.state, PassengerState::Completed);
    assert_eq!(r1.hops, 1);
    assert_eq!(r2.hops, 0);
    let hop_at: Vec<_> = sim
        .log()
        .events()
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Hop { request, zone, .. } => Some((request, zone)),
            _ => None,
        })
        .collect();
    assert_eq!(hop_at, vec![(RequestId(fig1::RIDER1), fig1::B)]);
    // Vehicle 1 carries rider 2 for z + y = 3 cells and rider 1 for y = 1.
    let v = &sim.vehicles()[1];
    assert_eq!((v.passenger_cells, v.occupied_cells), (4, 3));
    assert_eq!(v.effective_distance(), Some(1.0 + 1.0 / 3.0));
    let replay = replay_log(sim.log()).unwrap();
    assert_eq!(replay.vehicle_effective_distance[&VehicleId(1)], 4.0 / 3.0);
}

#[test]
fn fig1_without_transfers_rides_direct() {
    for mode in [Mode::Rs, Mode::Nors] {
        let mut sim = fig1::sim(mode);
        run_until_settled(&mut sim, 20);
        assert!(sim.passengers().iter().all(|p| p.state == PassengerState::Completed && p.hops == 0));
    }
}

#[test]
fn fig2_two_vehicles_serve_all_five_riders_with_one_transfer() {
    let mut sim = fig2::sim(Mode::Mhrs, &[fig2::D, fig2::G]);
    run_until_settled(&mut sim, 40);
    for p in sim.passengers() {
        assert_eq!(p.state, PassengerState::Completed, "rider {} ended {:?}", p.id, p.state);
    }
    assert_eq!(sim.passengers()[fig2::RIDER1].hops, 1);
    let transfer: Vec<_> = sim
        .log()
        .events()
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Hop { vehicle, request, zone } => Some((vehicle, request, zone)),
            _ => None,
        })
        .collect();
    assert_eq!(transfer, vec![(VehicleId(0), RequestId(fig2::RIDER1), fig2::F)]);
    // The G vehicle takes riders 4 and 5 and collects rider 1 at F.
    let mut picked_by_g: Vec<_> = sim
        .log()
        .events()
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Pickup { vehicle: VehicleId(1), request, .. } => Some(request.0),
            _ => None,
        })
        .collect();
    picked_by_g.sort();
    assert_eq!(picked_by_g, vec![fig2::RIDER4, fig2::RIDER5, fig2::RIDER1]);
    cross_check(&sim).unwrap();
}

#[test]
fn fig2_single_passenger_fleet_of_four_rejects_rider5() {
    let fleet = [fig2::D, fig2::G, z(2, 2), z(2, 4)];
    let mut sim = fig2::sim(Mode::Nors, &fleet);
    run_until_settled(&mut sim, 40);
    let states: Vec<_> = sim.passengers().iter().map(|p| p.state).collect();
    assert_eq!(states[fig2::RIDER5], PassengerState::Rejected);
    for (i, s) in states.iter().enumerate().filter(|(i, _)| *i != fig2::RIDER5) {
        assert_eq!(*s, PassengerState::Completed, "rider index {i}");
    }
}

#[test]
fn no_vehicle_in_radius_rejects_immediately() {
    let requests = vec![TripRecord::new(0, z(0, 0), z(0, 1))];
    let mut grid_far = toy_sim(1, 12, &[], requests, &[z(0, 11)], Mode::Rs);
    grid_far.step(None).unwrap();
    assert_eq!(grid_far.passengers()[0].state, PassengerState::Rejected);
}

#[test]
fn hop_wait_past_deadline_expires() {
    // A lone vehicle may not carry a rider on past its own hop drop-off, so
    // the transfer never happens.
    let requests = vec![TripRecord::new(0, fig1::C, fig1::P), TripRecord::new(1, fig1::A, fig1::P)];
    let mut sim = toy_sim(2, 4, &[fig1::B], requests, &[fig1::A], Mode::Mhrs);
    run_until_settled(&mut sim, 40);
    let r1 = &sim.passengers()[fig1::RIDER1];
    assert_eq!(r1.state, PassengerState::Rejected);
    assert_eq!(r1.hops, 1);
    let expiry: Vec<_> = sim
        .log()
        .events()
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Expire { request, zone } => Some((e.time, request, zone)),
            _ => None,
        })
        .collect();
    assert_eq!(expiry.len(), 1);
    let (t, r, at) = expiry[0];
    assert_eq!((r, at), (RequestId(fig1::RIDER1), fig1::B));
    assert_eq!(t, r1.hop_times[0] + sim.config().hop_wait_minutes + 1);
    let replay = replay_log(sim.log()).unwrap();
    assert_eq!(replay.tally.accept_rate().unwrap(), 0.5);
}
