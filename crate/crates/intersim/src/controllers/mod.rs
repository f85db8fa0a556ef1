//! Intersection controllers: pretimed phases, tile reservations, and
//! conflict-point scheduling.

pub mod cpic;
pub mod fcfs;
pub mod ppc;

use crate::engine::{Drive, SimState};
use crate::geometry::VEH_LEN;
use crate::kinematics::Profile;

/// Position ceiling for a follower: the lane leader's planned motion shifted
/// back by one vehicle length plus the clearance gap. `Err(())` when the
/// leader exists but has no plan yet, so no safe ceiling is known.
pub(crate) fn leader_boundary(sim: &SimState, idx: usize) -> Result<Option<Profile>, ()> {
    match sim.leader_of(idx) {
        None => Ok(None),
        Some(l) => match &sim.vehicles[l].drive {
            Drive::Planned(p) => Ok(Some(p.shifted(-(VEH_LEN + sim.gap)))),
            Drive::Reactive { .. } => Err(()),
        },
    }
}
