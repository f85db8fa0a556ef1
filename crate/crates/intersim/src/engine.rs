//! Fixed-step simulation of one intersection and its approaches.
//!
//! Positions run along each vehicle's route: 0 at the start of the
//! coordination area, `COORD_LEN` at the stop line, `COORD_LEN +
//! route length` at the exit. Each step the controller may set a vehicle's
//! drive mode, then the engine integrates motion, records exact
//! conflict-point crossing intervals, and enforces the safety checks.
//!
//! Vehicles are either `Planned` (follow a kinematic profile exactly) or
//! `Reactive` (car-following toward the lane leader, with an optional
//! stopping wall). A reactive vehicle picks the largest speed whose
//! stopping point stays behind the leader's stopping point minus the
//! clearance gap, and behind any wall.

use crate::demand::ArrivalSequence;
use crate::geometry::{buffer_size, Layout, VEH_LEN, VEH_W};
use crate::kinematics::Profile;
use crate::{ACCEL, COORD_LEN, DECEL, STEP, V_CRUISE};
use std::collections::{BTreeMap, VecDeque};

/// How a vehicle moves during the next step.
#[derive(Debug, Clone)]
pub enum Drive {
    /// Car-following; `wall` is a position the front bumper must not pass.
    Reactive { wall: Option<f64> },
    /// Follow the profile exactly; it must match the vehicle state.
    Planned(Profile),
}

/// One vehicle in the simulation.
#[derive(Debug, Clone)]
pub struct Vehicle {
    pub id: u64,
    pub lane: u32,
    pub route: usize,
    /// When the vehicle would have entered the approach unimpeded.
    pub intended_entry: f64,
    /// When it actually appeared at position 0.
    pub spawned_at: f64,
    pub pos: f64,
    pub speed: f64,
    pub drive: Drive,
    pub done: bool,
}

/// A finished trip.
#[derive(Debug, Clone)]
pub struct Completion {
    pub id: u64,
    pub lane: u32,
    pub route: usize,
    pub intended_entry: f64,
    pub t_enter_box: f64,
    pub t_exit: f64,
    /// Exit time minus intended entry minus the unimpeded travel time.
    pub delay: f64,
}

/// Outcome of one simulation run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub completions: Vec<Completion>,
    pub violations: Vec<String>,
    /// Time at which a lane queue first exceeded the limit, if any.
    pub unstable: Option<f64>,
    pub arrivals: usize,
    pub spawned: usize,
    /// Spawned but not finished when the run ended.
    pub in_flight: usize,
    /// Arrived but still outside the approach when the run ended.
    pub waiting: usize,
    pub max_queue: usize,
}

/// Live state handed to the controller each step.
pub struct SimState<'a> {
    pub layout: &'a Layout,
    pub gap: f64,
    pub time: f64,
    pub vehicles: Vec<Vehicle>,
    /// Vehicle indices per entry lane, front of the lane first.
    pub lanes: BTreeMap<u32, VecDeque<usize>>,
}

impl SimState<'_> {
    /// Index of the vehicle directly ahead of `idx` in its lane.
    pub fn leader_of(&self, idx: usize) -> Option<usize> {
        let q = &self.lanes[&self.vehicles[idx].lane];
        let at = q.iter().position(|&i| i == idx)?;
        if at == 0 {
            None
        } else {
            Some(q[at - 1])
        }
    }
}

/// Per-run intersection control.
pub trait Controller {
    /// Called once per step after arrivals, before motion integration.
    fn step(&mut self, sim: &mut SimState);
    /// Wall given to freshly spawned vehicles.
    fn entry_wall(&self) -> Option<f64> {
        Some(COORD_LEN)
    }
}

/// Simulation parameters independent of demand.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub duration: f64,
    pub warmup: f64,
    pub gap: f64,
    pub queue_limit: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            duration: 900.0,
            warmup: 120.0,
            gap: 1.0,
            queue_limit: 200,
        }
    }
}

/// Largest speed whose stopping point stays within `d_free`.
pub fn safe_speed(d_free: f64) -> f64 {
    if d_free <= 0.0 {
        return 0.0;
    }
    let b = DECEL;
    -b * STEP + (b * b * STEP * STEP + 2.0 * b * d_free).sqrt()
}

/// Entry gate: can a vehicle materialize at position 0 at cruise speed
/// behind this leader state?
fn gate_open(leader: Option<(f64, f64)>, gap: f64) -> bool {
    match leader {
        None => true,
        Some((lp, lv)) => {
            if lp < VEH_LEN + gap {
                return false;
            }
            let d_free = lp - VEH_LEN - gap + lv * lv / (2.0 * DECEL);
            safe_speed(d_free) >= V_CRUISE - 1e-12
        }
    }
}

struct PointLog {
    /// Closed intervals per conflict point, split by which route crossed.
    by_point: Vec<[Vec<(f64, f64, u64)>; 2]>,
    /// Crossings begun but not yet finished: (point, vehicle) -> start.
    open: BTreeMap<(usize, u64), (usize, f64)>,
}

/// Precomputed per-route crossing boundaries: (enter pos, leave pos, point
/// index, side) with positions measured along the full route.
fn route_bounds(layout: &Layout, gap: f64) -> Vec<Vec<(f64, f64, usize, usize)>> {
    (0..layout.routes.len())
        .map(|r| {
            layout
                .points_on_route(r)
                .into_iter()
                .map(|(pid, pos, angle)| {
                    let buf = buffer_size(gap, angle, VEH_W);
                    let side = if layout.points[pid].a == r { 0 } else { 1 };
                    (COORD_LEN + pos - buf, COORD_LEN + pos + VEH_LEN + buf, pid, side)
                })
                .collect()
        })
        .collect()
}

/// Run one simulation: arrivals feed per-lane queues through the entry
/// gate, the controller shapes motion, and every crossing is audited.
pub fn run(
    layout: &Layout,
    arrivals: &ArrivalSequence,
    params: &RunParams,
    controller: &mut dyn Controller,
) -> RunResult {
    let n_steps = (params.duration / STEP).round() as u64;
    let bounds = route_bounds(layout, params.gap);
    // unimpeded travel time per route: fastest approach plus the crossing
    let free_time: Vec<f64> = layout
        .routes
        .iter()
        .map(|r| {
            let w = r.movement.crossing_speed();
            crate::kinematics::fastest_arrival(COORD_LEN, V_CRUISE, w, V_CRUISE).unwrap()
                + r.path.len() / w
        })
        .collect();

    let mut sim = SimState {
        layout,
        gap: params.gap,
        time: 0.0,
        vehicles: Vec::new(),
        lanes: layout.entry_lanes().iter().map(|&l| (l, VecDeque::new())).collect(),
    };
    let mut waiting: BTreeMap<u32, VecDeque<(f64, u64)>> =
        sim.lanes.keys().map(|&l| (l, VecDeque::new())).collect();
    let mut cursor: BTreeMap<u32, usize> = sim.lanes.keys().map(|&l| (l, 0)).collect();
    let mut log = PointLog {
        by_point: (0..layout.points.len()).map(|_| [Vec::new(), Vec::new()]).collect(),
        open: BTreeMap::new(),
    };
    let mut result = RunResult {
        completions: Vec::new(),
        violations: Vec::new(),
        unstable: None,
        arrivals: 0,
        spawned: 0,
        in_flight: 0,
        waiting: 0,
        max_queue: 0,
    };
    let mut next_id = 0u64;
    const MAX_VIOLATIONS: usize = 10_000;

    'steps: for k in 0..n_steps {
        let t = k as f64 * STEP;
        sim.time = t;

        // arrivals become waiting vehicles at their intended entry time
        for (&lane, seq) in &arrivals.per_lane {
            let cur = cursor.get_mut(&lane).expect("arrival lane not in layout");
            let steps = seq;
            while *cur < steps.len() && steps[*cur] == k {
                waiting.get_mut(&lane).unwrap().push_back((t, next_id));
                next_id += 1;
                result.arrivals += 1;
                *cur += 1;
            }
        }

        // release waiting vehicles through the gate, FIFO per lane
        for (&lane, queue) in waiting.iter_mut() {
            while let Some(&(intended, id)) = queue.front() {
                let leader = sim.lanes[&lane]
                    .back()
                    .map(|&i| (sim.vehicles[i].pos, sim.vehicles[i].speed));
                if !gate_open(leader, params.gap) {
                    break;
                }
                queue.pop_front();
                let route = layout.route_by_lane(lane).expect("lane has a route");
                sim.vehicles.push(Vehicle {
                    id,
                    lane,
                    route,
                    intended_entry: intended,
                    spawned_at: t,
                    pos: 0.0,
                    speed: V_CRUISE,
                    drive: Drive::Reactive {
                        wall: controller.entry_wall(),
                    },
                    done: false,
                });
                sim.lanes.get_mut(&lane).unwrap().push_back(sim.vehicles.len() - 1);
                result.spawned += 1;
            }
        }

        // queue instability: physical queue plus gate backlog
        for (&lane, q) in &sim.lanes {
            let backlog = q.len() + waiting[&lane].len();
            result.max_queue = result.max_queue.max(backlog);
            if backlog > params.queue_limit && result.unstable.is_none() {
                result.unstable = Some(t);
            }
        }
        if result.unstable.is_some() {
            break 'steps;
        }

        controller.step(&mut sim);

        // integrate one step and record exact crossing times
        let t_next = t + STEP;
        for i in 0..sim.vehicles.len() {
            if sim.vehicles[i].done {
                continue;
            }
            let prev_pos = sim.vehicles[i].pos;
            let (new_pos, new_speed, planned) = match &sim.vehicles[i].drive {
                Drive::Planned(p) => {
                    debug_assert!(
                        (p.pos(t) - prev_pos).abs() < 1e-6,
                        "plan does not match vehicle position"
                    );
                    (p.pos(t_next), p.vel(t_next), true)
                }
                Drive::Reactive { wall } => {
                    let v = sim.vehicles[i].speed;
                    let mut cap = (v + ACCEL * STEP).min(V_CRUISE);
                    if let Some(li) = sim.leader_of(i) {
                        let l = &sim.vehicles[li];
                        let d_free = l.pos - VEH_LEN - params.gap - prev_pos
                            + l.speed * l.speed / (2.0 * DECEL);
                        cap = cap.min(safe_speed(d_free));
                        // hold the instantaneous gap too: the stopping-point
                        // bound alone lets a slower follower ride inside the
                        // gap while the leader accelerates away. The leader
                        // has already moved this step, so its new position
                        // bounds the displacement directly.
                        cap = cap.min((l.pos - VEH_LEN - params.gap - prev_pos) / STEP);
                    }
                    if let Some(w) = wall {
                        cap = cap.min(safe_speed(w - prev_pos));
                    }
                    let v_next = cap.max(0.0).max(v - DECEL * STEP);
                    (prev_pos + v_next * STEP, v_next, false)
                }
            };
            // crossing boundaries passed within this step
            for &(b_in, b_out, pid, side) in &bounds[sim.vehicles[i].route] {
                if b_out <= prev_pos {
                    continue;
                }
                if b_in > new_pos {
                    break;
                }
                let cross_time = |bound: f64| -> f64 {
                    if planned {
                        if let Drive::Planned(p) = &sim.vehicles[i].drive {
                            if let Some(ct) = p.time_at_pos(bound, t) {
                                return ct.clamp(t, t_next);
                            }
                        }
                        t_next
                    } else {
                        t + STEP * (bound - prev_pos) / (new_pos - prev_pos).max(1e-12)
                    }
                };
                if prev_pos < b_in && b_in <= new_pos {
                    log.open
                        .insert((pid, sim.vehicles[i].id), (side, cross_time(b_in)));
                }
                if prev_pos < b_out && b_out <= new_pos {
                    let started = log.open.remove(&(pid, sim.vehicles[i].id));
                    let (s, begin) = started.unwrap_or((side, t));
                    log.by_point[pid][s].push((begin, cross_time(b_out), sim.vehicles[i].id));
                }
            }
            sim.vehicles[i].pos = new_pos;
            sim.vehicles[i].speed = new_speed;

            // exit at the end of the route
            let route_end = COORD_LEN + layout.routes[sim.vehicles[i].route].path.len();
            if new_pos >= route_end {
                let t_exit = match &sim.vehicles[i].drive {
                    Drive::Planned(p) => p
                        .time_at_pos(route_end, t)
                        .map(|ct| ct.clamp(t, t_next))
                        .unwrap_or(t_next),
                    Drive::Reactive { .. } => {
                        t + STEP * (route_end - prev_pos) / (new_pos - prev_pos).max(1e-12)
                    }
                };
                let t_enter_box = match &sim.vehicles[i].drive {
                    Drive::Planned(p) => p.time_at_pos(COORD_LEN, sim.vehicles[i].spawned_at),
                    Drive::Reactive { .. } => None,
                }
                .unwrap_or(t_exit);
                let v = &sim.vehicles[i];
                result.completions.push(Completion {
                    id: v.id,
                    lane: v.lane,
                    route: v.route,
                    intended_entry: v.intended_entry,
                    t_enter_box,
                    t_exit,
                    delay: t_exit - v.intended_entry - free_time[v.route],
                });
                sim.vehicles[i].done = true;
            }
        }

        // drop finished vehicles from the front of their lanes
        for q in sim.lanes.values_mut() {
            while let Some(&front) = q.front() {
                if sim.vehicles[front].done {
                    q.pop_front();
                } else {
                    break;
                }
            }
        }

        // same-lane spacing audit
        for (&lane, q) in &sim.lanes {
            let idx: Vec<usize> = q.iter().copied().collect();
            for w in idx.windows(2) {
                let (a, b) = (&sim.vehicles[w[0]], &sim.vehicles[w[1]]);
                if a.pos - VEH_LEN - b.pos < params.gap - 1e-6
                    && result.violations.len() < MAX_VIOLATIONS
                {
                    result.violations.push(format!(
                        "t={:.1} lane {lane}: spacing {:.3} m between {} and {}",
                        t_next,
                        a.pos - VEH_LEN - b.pos,
                        a.id,
                        b.id
                    ));
                    eprintln!(
                        "AUDIT t={t_next:.1} lane {lane}: leader {} pos {:.4} v {:.4} {} | follower {} pos {:.4} v {:.4} {}",
                        a.id,
                        a.pos,
                        a.speed,
                        match &a.drive { Drive::Planned(p) => format!("Planned(end {:.2}@{:.2})", p.end_time(), p.end_vel()), d => format!("{d:?}") },
                        b.id,
                        b.pos,
                        b.speed,
                        match &b.drive { Drive::Planned(p) => format!("Planned(end {:.2}@{:.2})", p.end_time(), p.end_vel()), d => format!("{d:?}") },
                    );
                }
            }
        }
    }
    result.in_flight = sim.vehicles.iter().filter(|v| !v.done).count();
    result.waiting = waiting.values().map(|q| q.len()).sum();

    // audit conflict-point occupancy intervals across routes
    for (pid, sides) in log.by_point.iter().enumerate() {
        let mut all: Vec<(f64, f64, u64, usize)> = Vec::new();
        for (s, list) in sides.iter().enumerate() {
            for &(b, e, id) in list {
                all.push((b, e, id, s));
            }
        }
        all.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)));
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if all[j].0 >= all[i].1 - 1e-4 {
                    break;
                }
                if all[i].3 != all[j].3 && result.violations.len() < MAX_VIOLATIONS {
                    result.violations.push(format!(
                        "point {pid}: vehicles {} and {} overlap ({:.4}..{:.4} vs {:.4}..{:.4})",
                        all[i].2, all[j].2, all[i].0, all[i].1, all[j].0, all[j].1
                    ));
                }
            }
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry;
    use crate::kinematics::{build_bounded, fastest_arrival};

    fn one_arrival(lane: u32, step: u64) -> ArrivalSequence {
        let mut per_lane = BTreeMap::new();
        per_lane.insert(lane, vec![step]);
        ArrivalSequence { per_lane }
    }

    /// Plans every fresh vehicle to travel unimpeded at its fastest time.
    struct FreeFlow;
    impl Controller for FreeFlow {
        fn step(&mut self, sim: &mut SimState) {
            for i in 0..sim.vehicles.len() {
                let v = &sim.vehicles[i];
                if v.done || matches!(v.drive, Drive::Planned(_)) || v.pos != 0.0 {
                    continue;
                }
                let w = sim.layout.routes[v.route].movement.crossing_speed();
                let t_min = fastest_arrival(COORD_LEN, V_CRUISE, w, V_CRUISE).unwrap();
                let p = build_bounded(sim.time, 0.0, V_CRUISE, COORD_LEN, w, sim.time + t_min, None)
                    .unwrap();
                sim.vehicles[i].drive = Drive::Planned(p);
            }
        }
    }

    /// Leaves every vehicle reactive behind its entry wall.
    struct HoldAll;
    impl Controller for HoldAll {
        fn step(&mut self, _sim: &mut SimState) {}
    }

    #[test]
    fn unimpeded_vehicle_arrives_with_zero_delay() {
        let layout = geometry::four_leg_main();
        let arrivals = one_arrival(2, 10);
        let params = RunParams {
            duration: 120.0,
            warmup: 0.0,
            ..Default::default()
        };
        let res = run(&layout, &arrivals, &params, &mut FreeFlow);
        assert_eq!(res.completions.len(), 1);
        assert!(res.violations.is_empty());
        let c = &res.completions[0];
        assert!(c.delay.abs() < 1e-6, "delay {}", c.delay);
        assert!((c.intended_entry - 2.0).abs() < 1e-12);
    }

    #[test]
    fn held_vehicles_queue_at_the_line_safely() {
        let layout = geometry::four_leg_main();
        let mut per_lane = BTreeMap::new();
        per_lane.insert(2u32, (0..8).map(|i| i * 10).collect::<Vec<u64>>());
        let arrivals = ArrivalSequence { per_lane };
        let params = RunParams {
            duration: 120.0,
            warmup: 0.0,
            ..Default::default()
        };
        let res = run(&layout, &arrivals, &params, &mut HoldAll);
        assert!(res.completions.is_empty());
        assert!(res.violations.is_empty(), "{:?}", res.violations);
        assert_eq!(res.spawned, 8);
    }

    #[test]
    fn gate_defers_entry_when_the_approach_is_blocked() {
        let layout = geometry::four_leg_main();
        let mut per_lane = BTreeMap::new();
        // one vehicle per step: far denser than the approach can absorb
        per_lane.insert(2u32, (0..600).collect::<Vec<u64>>());
        let arrivals = ArrivalSequence { per_lane };
        let params = RunParams {
            duration: 120.0,
            warmup: 0.0,
            queue_limit: 10_000,
            ..Default::default()
        };
        let res = run(&layout, &arrivals, &params, &mut HoldAll);
        assert!(res.spawned < res.arrivals);
        assert!(res.violations.is_empty(), "{:?}", res.violations);
    }

    #[test]
    fn queue_limit_flags_instability() {
        let layout = geometry::four_leg_main();
        let mut per_lane = BTreeMap::new();
        per_lane.insert(2u32, (0..600).collect::<Vec<u64>>());
        let arrivals = ArrivalSequence { per_lane };
        let params = RunParams {
            duration: 120.0,
            warmup: 0.0,
            queue_limit: 50,
            ..Default::default()
        };
        let res = run(&layout, &arrivals, &params, &mut HoldAll);
        assert!(res.unstable.is_some());
    }

    /// Deliberately sends two crossing vehicles through their shared point
    /// at the same time; the audit must flag it.
    struct Collider;
    impl Controller for Collider {
        fn step(&mut self, sim: &mut SimState) {
            if sim.vehicles.len() != 2
                || sim
                    .vehicles
                    .iter()
                    .any(|v| matches!(v.drive, Drive::Planned(_)))
            {
                return;
            }
            let (ra, rb) = (sim.vehicles[0].route, sim.vehicles[1].route);
            let cp = sim
                .layout
                .points
                .iter()
                .find(|p| (p.a == ra && p.b == rb) || (p.a == rb && p.b == ra))
                .expect("routes must conflict");
            let (pos_a, pos_b) = if cp.a == ra {
                (cp.pos_a, cp.pos_b)
            } else {
                (cp.pos_b, cp.pos_a)
            };
            // both cross at 15 m/s; stagger stop-line times so the fronts
            // reach the shared point at the same instant
            let t_min = fastest_arrival(COORD_LEN, V_CRUISE, 15.0, V_CRUISE).unwrap();
            let lag = (pos_a - pos_b) / 15.0;
            let (line_a, line_b) = if lag >= 0.0 {
                (sim.time + t_min, sim.time + t_min + lag)
            } else {
                (sim.time + t_min - lag, sim.time + t_min)
            };
            for (i, line) in [(0usize, line_a), (1usize, line_b)] {
                let p = build_bounded(sim.time, 0.0, V_CRUISE, COORD_LEN, 15.0, line, None)
                    .unwrap();
                sim.vehicles[i].drive = Drive::Planned(p);
            }
        }
    }

    #[test]
    fn crossing_audit_catches_simultaneous_occupancy() {
        let layout = geometry::four_leg_main();
        let mut per_lane = BTreeMap::new();
        // same spawn step on two legs whose throughs cross
        per_lane.insert(2u32, vec![0]);
        per_lane.insert(14u32, vec![0]);
        let arrivals = ArrivalSequence { per_lane };
        let params = RunParams {
            duration: 120.0,
            warmup: 0.0,
            ..Default::default()
        };
        let res = run(&layout, &arrivals, &params, &mut Collider);
        assert_eq!(res.completions.len(), 2);
        assert!(
            res.violations.iter().any(|v| v.contains("point")),
            "expected a conflict-point violation, got {:?}",
            res.violations
        );
    }

    #[test]
    fn conservation_of_vehicles() {
        let layout = geometry::tee();
        let mut per_lane = BTreeMap::new();
        for lane in layout.entry_lanes() {
            per_lane.insert(lane, (0..20).map(|i| i * 25).collect::<Vec<u64>>());
        }
        let arrivals = ArrivalSequence { per_lane };
        let params = RunParams {
            duration: 150.0,
            warmup: 0.0,
            ..Default::default()
        };
        let res = run(&layout, &arrivals, &params, &mut FreeFlow);
        assert!(res.unstable.is_none());
        assert_eq!(res.arrivals, 20 * layout.entry_lanes().len());
        assert!(res.spawned <= res.arrivals);
        assert!(res.completions.len() <= res.spawned);
    }
}
