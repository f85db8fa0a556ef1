//! Discrete-time simulator of an isolated intersection under full vehicle-to-
//! infrastructure control, comparing a pretimed signal controller against two
//! vehicle-based controllers (tile reservation and conflict-point scheduling).

pub mod controllers;
pub mod demand;
pub mod engine;
pub mod geometry;
pub mod kinematics;
pub mod runner;
pub mod scenario;
pub mod scheduler;

/// Simulation step and communication reaction time, seconds.
pub const STEP: f64 = 0.2;
/// Length of the coordinated approach upstream of the stop line, metres.
pub const COORD_LEN: f64 = 600.0;
/// Entry / cruise speed on the approach, m/s.
pub const V_CRUISE: f64 = 18.0;
/// Minimum moving speed enforced on the approach, m/s.
pub const V_MIN: f64 = 5.0;
/// Crossing speed limit for through movements, m/s.
pub const V_THROUGH: f64 = 15.0;
/// Crossing speed limit for left turns, m/s.
pub const V_LEFT: f64 = 10.0;
/// Maximum acceleration, m/s^2.
pub const ACCEL: f64 = 1.5;
/// Maximum deceleration magnitude, m/s^2.
pub const DECEL: f64 = 1.5;
/// Lost time when switching signal phases, seconds.
pub const TRANSITION_LOSS: f64 = 3.0;

/// splitmix64 step; used to derive independent per-lane RNG seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
