//! Seeded random instances small enough for the exhaustive solver.

use super::{Instance, PairPoint, VehicleSpec, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random instance with at most 4 vehicles, 3 conflict pair-points, and 2
/// fixed windows. Deterministic in `seed`.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(crate::splitmix64(seed ^ 0x51c3_d0_1e));
    let n = rng.gen_range(1..=4);
    let vehicles: Vec<VehicleSpec> = (0..n)
        .map(|i| VehicleSpec {
            id: i as u64,
            lane: rng.gen_range(1..=3),
            earliest: rng.gen_range(0.0..20.0),
            dist: rng.gen_range(15.0..40.0),
            v_hi: rng.gen_range(8.0..18.0),
            v_lo: 5.0,
        })
        .collect();
    let cross: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| vehicles[i].lane != vehicles[j].lane)
        .collect();
    let mut pairs = Vec::new();
    if !cross.is_empty() {
        for _ in 0..rng.gen_range(0..=3) {
            let (a, b) = cross[rng.gen_range(0..cross.len())];
            pairs.push(PairPoint {
                a,
                b,
                pos_a: rng.gen_range(0.1..0.9) * vehicles[a].dist,
                pos_b: rng.gen_range(0.1..0.9) * vehicles[b].dist,
                buffer: rng.gen_range(0.5..4.0),
            });
        }
    }
    let mut windows = Vec::new();
    for _ in 0..rng.gen_range(0..=2) {
        let veh = rng.gen_range(0..n);
        let start = rng.gen_range(0.0..25.0);
        windows.push(Window {
            veh,
            pos: rng.gen_range(0.1..0.9) * vehicles[veh].dist,
            buffer: rng.gen_range(0.5..4.0),
            start,
            end: start + rng.gen_range(1.0..8.0),
        });
    }
    Instance {
        vehicles,
        veh_len: 4.0,
        gap: rng.gen_range(0.5..8.0),
        pairs,
        windows,
        cuts: Vec::new(),
    }
}
