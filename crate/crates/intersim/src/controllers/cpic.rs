//! Rolling-horizon conflict-point scheduling. Vehicles past an outer
//! request line are ordered by a branch-and-bound solver over when each one
//! may occupy the conflict points its route shares with others; the result
//! is realized as an exact approach profile. When a vehicle reaches an
//! inner commit line its crossing is repaired against everything already
//! frozen and then locked in, turning its conflict-point occupancies into
//! fixed windows for every later solve.

use super::leader_boundary;
use crate::engine::{Controller, Drive, SimState};
use crate::geometry::{buffer_size, Layout, VEH_LEN, VEH_W};
use crate::kinematics::{build_bounded, fastest_arrival, latest_arrival, BuildError};
use crate::scheduler::bnb::{self, Budgets};
use crate::scheduler::{route_pairs, Cut, Instance, VehicleSpec, Window};
use crate::{ACCEL, COORD_LEN, DECEL, STEP, V_CRUISE, V_MIN};
use std::collections::{BTreeMap, BTreeSet};

/// Vehicles become schedulable once within this position, m.
const REQUEST_POS: f64 = COORD_LEN - 300.0;
/// Crossings are frozen here; far enough out that a vehicle stopped at the
/// wall can still accelerate to any crossing speed by the stop line.
const COMMIT_POS: f64 = COORD_LEN - 105.0;
/// At most this many vehicles per solve, nearest first.
const VEH_CAP: usize = 24;
/// Ordering-decision cap per solve; the selection shrinks to stay under it.
const BIN_CAP: usize = 60;

struct Commit {
    route: usize,
    tm: f64,
    w: f64,
}

struct Frozen {
    start: f64,
    end: f64,
    route: usize,
}

/// Conflict-point schedule controller.
pub struct Cpic {
    /// [route] -> (point id, position on route, crossing angle)
    points: Vec<Vec<(usize, f64, f64)>>,
    route_len: Vec<f64>,
    v_box: Vec<f64>,
    budgets: Budgets,
    /// id -> (stop-line time, box-exit time) from the latest solve
    assigned: BTreeMap<u64, (f64, f64)>,
    /// assignment the vehicle's current profile realizes
    realized: BTreeMap<u64, (f64, f64)>,
    committed: BTreeMap<u64, Commit>,
    /// point id -> frozen occupancy intervals of committed vehicles
    frozen: BTreeMap<usize, Vec<Frozen>>,
    /// vehicles whose profile was replaced by a commit this step, so
    /// followers planned against the old trajectory must rebuild
    repaired: BTreeSet<u64>,
    dirty: bool,
    retry: bool,
}

impl Cpic {
    pub fn new(layout: &Layout) -> Cpic {
        let points = (0..layout.routes.len())
            .map(|r| layout.points_on_route(r))
            .collect();
        let route_len = layout.routes.iter().map(|r| r.path.len()).collect();
        let v_box = layout
            .routes
            .iter()
            .map(|r| r.movement.crossing_speed())
            .collect();
        Cpic {
            points,
            route_len,
            v_box,
            budgets: Budgets {
                max_nodes: 400,
                max_pivots: 300_000,
            },
            assigned: BTreeMap::new(),
            realized: BTreeMap::new(),
            committed: BTreeMap::new(),
            frozen: BTreeMap::new(),
            repaired: BTreeSet::new(),
            dirty: false,
            retry: false,
        }
    }

    fn retire(&mut self, now: f64) {
        for ws in self.frozen.values_mut() {
            ws.retain(|w| w.end > now - 1.0);
        }
        self.frozen.retain(|_, ws| !ws.is_empty());
        let lens = &self.route_len;
        self.committed
            .retain(|_, c| c.tm + lens[c.route] / c.w + 2.0 > now);
    }

    /// Earliest stop-line time at which the occupancy of every conflict
    /// point on `route`, crossed at speed `w`, clears all frozen windows.
    fn past_frozen(&self, route: usize, mut tm: f64, w: f64, gap: f64) -> f64 {
        'push: loop {
            for &(pid, p, ang) in &self.points[route] {
                let Some(ws) = self.frozen.get(&pid) else {
                    continue;
                };
                let buf = buffer_size(gap, ang, VEH_W);
                let s = tm + (p - buf) / w;
                let e = tm + (p + VEH_LEN + buf) / w;
                for f in ws {
                    if f.route != route && e > f.start + 1e-9 && f.end > s + 1e-9 {
                        tm += f.end - s + 1e-6;
                        continue 'push;
                    }
                }
            }
            return tm;
        }
    }

    /// Lock in the vehicle's crossing: recheck its assigned stop-line time
    /// against the current state, frozen windows, and its committed leader,
    /// rebuild the profile, and freeze the resulting occupancies.
    fn commit_one(&mut self, sim: &mut SimState, idx: usize, tm0: f64, tp0: f64) {
        let now = sim.time;
        let (id, route, pos, speed) = {
            let v = &sim.vehicles[idx];
            (v.id, v.route, v.pos, v.speed)
        };
        let d = self.route_len[route];
        let w = (d / (tp0 - tm0)).clamp(V_MIN, self.v_box[route]);
        let dist = COORD_LEN - pos;
        let e = now + fastest_arrival(dist, speed, w, V_CRUISE).unwrap_or(dist / w);
        let mut tm = tm0.max(e);
        if let Some(l) = sim.leader_of(idx) {
            if let Some(c) = self.committed.get(&sim.vehicles[l].id) {
                tm = tm.max(c.tm + (VEH_LEN + sim.gap) / c.w);
            }
        }
        let boundary = match leader_boundary(sim, idx) {
            Ok(b) => b,
            Err(()) => {
                debug_assert!(false, "unplanned vehicle ahead of the commit line");
                None
            }
        };
        let mut profile = None;
        let mut last_err = None;
        for round in 0..64 {
            if round == 48 {
                // give up on slotting in between: wait out every window
                let max_end = self
                    .frozen
                    .values()
                    .flatten()
                    .map(|f| f.end)
                    .fold(tm, f64::max);
                tm = max_end + 1.0;
            }
            tm = self.past_frozen(route, tm, w, sim.gap);
            match build_bounded(now, pos, speed, dist, w, tm, boundary.as_ref()) {
                Ok(p) => {
                    profile = Some(p);
                    break;
                }
                Err(e @ BuildError::TooEarly { earliest }) => {
                    last_err = Some(e);
                    tm = earliest.max(tm + 1e-9);
                }
                Err(e @ BuildError::Blocked { earliest }) => {
                    // the hint can be stale when the blockage is a braking
                    // envelope rather than an occupancy, so force real
                    // progress each round
                    last_err = Some(e);
                    tm = earliest.max(tm + 0.25);
                }
                Err(e @ BuildError::TooLate { latest }) => {
                    // the vehicle can no longer arrive that late; take the
                    // latest reachable crossing and let the audit judge it
                    last_err = Some(e);
                    tm = latest - 1e-9;
                    profile = build_bounded(now, pos, speed, dist, w, tm, boundary.as_ref()).ok();
                    break;
                }
                Err(e @ BuildError::TooShort) => {
                    last_err = Some(e);
                    break;
                }
            }
        }
        debug_assert!(
            profile.is_some(),
            "commit failed for vehicle {id}: now {now}, pos {pos}, speed {speed}, tm {tm}, w {w}, last {last_err:?}"
        );
        // freeze at the realized time; on failure the old profile stands,
        // so its original stop-line time is what actually happens
        let ftm = if profile.is_some() { tm } else { tm0 };
        for &(pid, p, ang) in &self.points[route] {
            let buf = buffer_size(sim.gap, ang, VEH_W);
            self.frozen.entry(pid).or_default().push(Frozen {
                start: ftm + (p - buf) / w,
                end: ftm + (p + VEH_LEN + buf) / w,
                route,
            });
        }
        self.committed.insert(id, Commit { route, tm: ftm, w });
        self.assigned.remove(&id);
        self.realized.remove(&id);
        if let Some(p) = profile {
            sim.vehicles[idx].drive = Drive::Planned(p);
            self.repaired.insert(id);
        }
        self.dirty = true;
    }

    fn commit_sweep(&mut self, sim: &mut SimState) {
        let queues: Vec<Vec<usize>> = sim.lanes.values().map(|q| q.iter().copied().collect()).collect();
        for q in queues {
            // rearmost vehicle that must commit now: at the line, or moving
            // so fast it is about to lose the ability to stop short of the
            // box while regaining its crossing speed, which would bound how
            // late it can cross and let frozen windows squeeze it out
            let mut forced = None;
            for (i, &idx) in q.iter().enumerate() {
                let v = &sim.vehicles[idx];
                if v.done || self.committed.contains_key(&v.id) {
                    continue;
                }
                let w = self.v_box[v.route];
                let no_return =
                    v.speed * v.speed / (2.0 * DECEL) + w * w / (2.0 * ACCEL);
                if v.pos >= COMMIT_POS
                    || (matches!(v.drive, Drive::Planned(_))
                        && COORD_LEN - v.pos <= no_return + v.speed * STEP + 1.0)
                {
                    forced = Some(i);
                }
            }
            // commit front to rear so every commit sees its leader frozen
            let Some(forced) = forced else { continue };
            for &idx in &q[..=forced] {
                let v = &sim.vehicles[idx];
                if v.done || self.committed.contains_key(&v.id) {
                    continue;
                }
                let Some(&(tm, tp)) = self.assigned.get(&v.id) else {
                    debug_assert!(false, "unassigned vehicle forced to commit");
                    continue;
                };
                self.commit_one(sim, idx, tm, tp);
            }
        }
    }

    fn solve(&mut self, sim: &SimState) {
        let now = sim.time;
        struct Cand {
            id: u64,
            lane: u32,
            route: usize,
            pos: f64,
            speed: f64,
            leader_commit: Option<(f64, f64)>,
        }
        let mut sel: Vec<Cand> = Vec::new();
        for q in sim.lanes.values() {
            for &idx in q {
                let v = &sim.vehicles[idx];
                if v.done || v.pos < REQUEST_POS || self.committed.contains_key(&v.id) {
                    continue;
                }
                let leader_commit = sim.leader_of(idx).and_then(|l| {
                    self.committed
                        .get(&sim.vehicles[l].id)
                        .map(|c| (c.tm, c.w))
                });
                sel.push(Cand {
                    id: v.id,
                    lane: v.lane,
                    route: v.route,
                    pos: v.pos,
                    speed: v.speed,
                    leader_commit,
                });
            }
        }
        if sel.is_empty() {
            self.retry = false;
            return;
        }
        // nearest first; a follower is only kept if its leader is too, so
        // same-lane selections are always queue prefixes
        sel.sort_by(|a, b| {
            b.pos
                .partial_cmp(&a.pos)
                .unwrap()
                .then(a.lane.cmp(&b.lane))
                .then(a.id.cmp(&b.id))
        });
        sel.truncate(VEH_CAP);

        let build = |sel: &[Cand]| -> Instance {
            let mut order: Vec<usize> = (0..sel.len()).collect();
            order.sort_by(|&i, &j| {
                sel[i]
                    .lane
                    .cmp(&sel[j].lane)
                    .then(sel[j].pos.partial_cmp(&sel[i].pos).unwrap())
            });
            let mut vehicles = Vec::new();
            let mut routes = Vec::new();
            let mut cuts = Vec::new();
            // all times in the instance are relative to now, which keeps
            // the solver's tableaus well scaled regardless of run length
            for (k, &i) in order.iter().enumerate() {
                let c = &sel[i];
                let d = self.route_len[c.route];
                let v_hi = self.v_box[c.route];
                let dist = COORD_LEN - c.pos;
                let e_hi = fastest_arrival(dist, c.speed, v_hi, V_CRUISE).unwrap_or(dist / v_hi);
                let e_lo = fastest_arrival(dist, c.speed, V_MIN, V_CRUISE).unwrap_or(dist / V_MIN);
                vehicles.push(VehicleSpec {
                    id: c.id,
                    lane: c.lane,
                    earliest: e_hi,
                    dist: d,
                    v_hi,
                    v_lo: V_MIN,
                });
                routes.push(c.route);
                // arriving slower means arriving later: tie the earliest
                // arrival to the crossing duration through its endpoints
                let (t_fast, t_slow) = (d / v_hi, d / V_MIN);
                let beta = (e_lo - e_hi) / (t_slow - t_fast);
                if beta > 1e-9 {
                    cuts.push(Cut {
                        veh: k,
                        a_tm: 1.0 + beta,
                        a_tp: -beta,
                        rhs: e_hi - beta * t_fast,
                    });
                }
                if c.speed * c.speed / (2.0 * DECEL) > dist - 1e-9 {
                    // passing the point of no return: arrival is bounded above
                    let t_max = latest_arrival(dist, c.speed, V_MIN)
                        .max(latest_arrival(dist, c.speed, v_hi));
                    if t_max.is_finite() {
                        cuts.push(Cut {
                            veh: k,
                            a_tm: -1.0,
                            a_tp: 0.0,
                            rhs: -t_max,
                        });
                    }
                }
                if let Some((ltm, lw)) = c.leader_commit {
                    cuts.push(Cut {
                        veh: k,
                        a_tm: 1.0,
                        a_tp: 0.0,
                        rhs: ltm + (VEH_LEN + sim.gap) / lw - now,
                    });
                }
            }
            let pairs = route_pairs(sim.layout, sim.gap, &routes);
            let mut windows = Vec::new();
            for (k, &i) in order.iter().enumerate() {
                let c = &sel[i];
                let d = self.route_len[c.route];
                let (t_fast, t_slow) = (d / self.v_box[c.route], d / V_MIN);
                for &(pid, p, ang) in &self.points[c.route] {
                    let Some(ws) = self.frozen.get(&pid) else {
                        continue;
                    };
                    let buf = buffer_size(sim.gap, ang, VEH_W);
                    let reach = vehicles[k].earliest
                        + ((p - buf) * t_fast / d).min((p - buf) * t_slow / d);
                    for f in ws {
                        if f.route != c.route && f.end - now > reach + 1e-9 {
                            windows.push(Window {
                                veh: k,
                                pos: p,
                                buffer: buf,
                                start: f.start - now,
                                end: f.end - now,
                            });
                        }
                    }
                }
            }
            Instance {
                vehicles,
                veh_len: VEH_LEN,
                gap: sim.gap,
                pairs,
                windows,
                cuts,
            }
        };

        let mut inst = build(&sel);
        while inst.binary_count() > BIN_CAP && sel.len() > 1 {
            sel.pop();
            inst = build(&sel);
        }

        let out = bnb::solve(&inst, &self.budgets);
        self.retry = !out.complete;
        if let Some(s) = out.schedule {
            for (k, v) in inst.vehicles.iter().enumerate() {
                self.assigned.insert(v.id, (now + s.tm[k], now + s.tp[k]));
            }
        }
        self.dirty = false;
    }

    /// Realize assignments as profiles, lane by lane from the front. A
    /// vehicle only keeps or gains a plan while everything ahead of it in
    /// its lane is planned; otherwise it falls back to following reactively.
    fn plan_sweep(&mut self, sim: &mut SimState) {
        let now = sim.time;
        let queues: Vec<Vec<usize>> = sim.lanes.values().map(|q| q.iter().copied().collect()).collect();
        for q in queues {
            let mut chain_planned = true;
            let mut chain_changed = false;
            for idx in q {
                let (id, route, pos, speed, planned) = {
                    let v = &sim.vehicles[idx];
                    (v.id, v.route, v.pos, v.speed, matches!(v.drive, Drive::Planned(_)))
                };
                if sim.vehicles[idx].done {
                    continue;
                }
                if self.committed.contains_key(&id) {
                    chain_planned = planned;
                    chain_changed = self.repaired.contains(&id);
                    continue;
                }
                if pos < REQUEST_POS {
                    break;
                }
                let Some(&(tm, tp)) = self.assigned.get(&id) else {
                    chain_planned = false;
                    continue;
                };
                if !chain_planned {
                    if planned {
                        sim.vehicles[idx].drive = Drive::Reactive {
                            wall: Some(COMMIT_POS),
                        };
                        self.realized.remove(&id);
                    }
                    continue;
                }
                let current = self.realized.get(&id) == Some(&(tm, tp));
                if current && planned && !chain_changed {
                    continue;
                }
                let boundary = match leader_boundary(sim, idx) {
                    Ok(b) => b,
                    Err(()) => {
                        chain_planned = false;
                        continue;
                    }
                };
                let d = self.route_len[route];
                let w = (d / (tp - tm)).clamp(V_MIN, self.v_box[route]);
                match build_bounded(now, pos, speed, COORD_LEN - pos, w, tm, boundary.as_ref()) {
                    Ok(p) => {
                        sim.vehicles[idx].drive = Drive::Planned(p);
                        self.realized.insert(id, (tm, tp));
                        chain_changed = true;
                    }
                    Err(_) => {
                        sim.vehicles[idx].drive = Drive::Reactive {
                            wall: Some(COMMIT_POS),
                        };
                        self.realized.remove(&id);
                        chain_planned = false;
                    }
                }
            }
        }
    }
}

impl Controller for Cpic {
    fn step(&mut self, sim: &mut SimState) {
        self.repaired.clear();
        self.retire(sim.time);
        self.commit_sweep(sim);
        let unassigned_pending = sim.lanes.values().flatten().any(|&i| {
            let v = &sim.vehicles[i];
            !v.done
                && v.pos >= REQUEST_POS
                && !self.committed.contains_key(&v.id)
                && !self.assigned.contains_key(&v.id)
        });
        if self.dirty || self.retry || unassigned_pending {
            self.solve(sim);
        }
        self.plan_sweep(sim);
    }

    fn entry_wall(&self) -> Option<f64> {
        Some(COMMIT_POS)
    }
}
