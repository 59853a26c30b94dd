//! Seeded random planning problems for stress tests and the verify suite.

use rand::Rng;

use crate::options::{Desires, Label};
use crate::sim::geometry::Side;
use crate::sim::sense::{AgnosticState, SensedVehicle};

fn tenth(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// A random two-lanes-per-side snapshot with up to `max_vehicles` others,
/// none closer than `clearance` meters to the ego vehicle, and random
/// Desires for it.
pub fn random_case<R: Rng + ?Sized>(rng: &mut R, max_vehicles: usize, clearance: f64) -> (AgnosticState, Desires) {
    let lanes_per_side = 2;
    let lane_width = 3.5;
    let own_side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
    let dist_to_merge = tenth(rng.gen_range(-80.0..60.0));
    let (lo, hi) = if dist_to_merge > 0.0 {
        match own_side {
            Side::Left => (1.0, 2.0),
            Side::Right => (3.0, 4.0),
        }
    } else {
        (1.0, 4.0)
    };
    let ego_lateral = tenth(rng.gen_range(lo..=hi));
    let n = rng.gen_range(0..=max_vehicles);
    let mut vehicles = Vec::with_capacity(n);
    while vehicles.len() < n {
        let lateral = tenth(rng.gen_range(1.0..=4.0));
        let rel_long = rng.gen_range(-40.0..60.0);
        let dx: f64 = (lateral - ego_lateral) * lane_width;
        if dx.hypot(rel_long) < clearance {
            continue;
        }
        vehicles.push(SensedVehicle {
            id: vehicles.len() + 1,
            lateral,
            rel_long,
            speed: rng.gen_range(0.0..25.0),
            heading: rng.gen_range(-0.05..0.05),
        });
    }
    let lanes = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];
    let desires = Desires {
        speed: rng.gen_range(0.0..25.0),
        lateral: lanes[rng.gen_range(0..lanes.len())],
        labels: (0..n).map(|_| Label::ALL[rng.gen_range(0..3)]).collect(),
    };
    let state = AgnosticState {
        ego_speed: rng.gen_range(0.0..25.0),
        ego_heading: 0.0,
        ego_accel: 0.0,
        ego_lateral,
        dist_to_merge,
        merge_length: 100.0,
        lanes_per_side,
        lane_width,
        own_side,
        target_side: Some(if rng.gen_bool(0.5) { Side::Left } else { Side::Right }),
        vehicles,
    };
    (state, desires)
}
