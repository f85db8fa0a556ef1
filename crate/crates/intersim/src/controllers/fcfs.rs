//! First-come-first-serve tile reservations. The conflict area is cut into a
//! 1 m grid; a vehicle may enter the box only after booking, step by step,
//! every tile its safety footprint sweeps while crossing. Requests are
//! processed in lane order as vehicles approach, retried on a schedule that
//! tightens near the stop line, and never granted past an unconfirmed lane
//! leader. Unconfirmed vehicles hold back at a setback wall so a stopped
//! vehicle can still reach a workable crossing speed by the line.

use super::leader_boundary;
use crate::engine::{Controller, Drive, SimState};
use crate::geometry::{Layout, Vec2, VEH_LEN, VEH_W};
use crate::kinematics::{build_bounded, cruise_profile, fastest_arrival, BuildError, Profile};
use crate::{ACCEL, COORD_LEN, STEP, V_CRUISE};
use std::collections::{BTreeMap, HashMap};

/// Arc spacing of precomputed footprint stamps, m.
const SAMPLE: f64 = 0.25;
/// Half-length of one stamp rectangle; overlaps neighbouring samples.
const STAMP_HALF: f64 = 0.3;
/// Unconfirmed vehicles stop this far before the stop line, m.
const SETBACK: f64 = 40.0;
/// Middle cruise speed of the slower request candidate, m/s.
const SLOW_CRUISE: f64 = 12.0;

/// Tile-booking intersection controller.
pub struct Fcfs {
    gap: f64,
    /// conflict_with[a][b]: routes a and b cross somewhere in the box.
    conflict_with: Vec<Vec<bool>>,
    /// [route][sample] -> tiles the stamp covers; sample 0 is `arc_lo`.
    stamps: Vec<Vec<Vec<(i16, i16)>>>,
    /// First stamped arc position (negative: tail still on the approach).
    arc_lo: f64,
    /// tiles booked per step: (x, y) -> (vehicle, route)
    bookings: BTreeMap<u64, HashMap<(i16, i16), (u64, usize)>>,
    /// earliest next request time per vehicle
    next_try: BTreeMap<u64, f64>,
}

/// Exact overlap test between an oriented rectangle and the unit tile at
/// (tx, ty), by separating axes.
fn rect_hits_tile(center: Vec2, axis: Vec2, half_l: f64, half_w: f64, tx: i16, ty: i16) -> bool {
    let n = Vec2::new(-axis.y, axis.x);
    let tc = Vec2::new(tx as f64 + 0.5, ty as f64 + 0.5);
    let d = Vec2::new(tc.x - center.x, tc.y - center.y);
    // tile axes
    let rx = half_l * axis.x.abs() + half_w * n.x.abs();
    if d.x.abs() > rx + 0.5 {
        return false;
    }
    let ry = half_l * axis.y.abs() + half_w * n.y.abs();
    if d.y.abs() > ry + 0.5 {
        return false;
    }
    // rectangle axes
    let da = d.x * axis.x + d.y * axis.y;
    if da.abs() > half_l + 0.5 * (axis.x.abs() + axis.y.abs()) {
        return false;
    }
    let dn = d.x * n.x + d.y * n.y;
    if dn.abs() > half_w + 0.5 * (n.x.abs() + n.y.abs()) {
        return false;
    }
    true
}

impl Fcfs {
    pub fn new(layout: &Layout, gap: f64) -> Fcfs {
        let nr = layout.routes.len();
        let conflict_with = (0..nr)
            .map(|a| (0..nr).map(|b| layout.routes_conflict(a, b)).collect())
            .collect();
        let arc_lo = -(VEH_LEN + 0.5 * gap + 2.0 * SAMPLE);
        let mut stamps = Vec::with_capacity(nr);
        for route in &layout.routes {
            let path = &route.path;
            let len = path.len();
            let arc_hi = len + 0.5 * gap + 2.0 * SAMPLE;
            let n_samples = ((arc_hi - arc_lo) / SAMPLE).ceil() as usize + 1;
            let mut per_route = Vec::with_capacity(n_samples);
            for k in 0..n_samples {
                let arc = arc_lo + k as f64 * SAMPLE;
                // extend straight past the path ends for tails and noses
                let (c, h) = if arc < 0.0 {
                    let h = path.heading_at(0.0);
                    let p = path.point_at(0.0);
                    (Vec2::new(p.x + h.x * arc, p.y + h.y * arc), h)
                } else if arc > len {
                    let h = path.heading_at(len);
                    let p = path.point_at(len);
                    let d = arc - len;
                    (Vec2::new(p.x + h.x * d, p.y + h.y * d), h)
                } else {
                    (path.point_at(arc), path.heading_at(arc))
                };
                let mut tiles = Vec::new();
                let reach = STAMP_HALF + 0.5 * VEH_W + 1.0;
                let (ix0, ix1) = ((c.x - reach).floor() as i16, (c.x + reach).floor() as i16);
                let (iy0, iy1) = ((c.y - reach).floor() as i16, (c.y + reach).floor() as i16);
                for tx in ix0..=ix1 {
                    for ty in iy0..=iy1 {
                        if rect_hits_tile(c, h, STAMP_HALF, 0.5 * VEH_W, tx, ty) {
                            tiles.push((tx, ty));
                        }
                    }
                }
                per_route.push(tiles);
            }
            stamps.push(per_route);
        }
        Fcfs {
            gap,
            conflict_with,
            stamps,
            arc_lo,
            bookings: BTreeMap::new(),
            next_try: BTreeMap::new(),
        }
    }

    /// Tiles swept by the footprint while the front arc runs [lo, hi].
    fn tiles_for_span(&self, route: usize, lo: f64, hi: f64, out: &mut Vec<(i16, i16)>) {
        let stamps = &self.stamps[route];
        let lo = (lo - VEH_LEN - 0.5 * self.gap).max(self.arc_lo);
        let hi = hi + 0.5 * self.gap;
        let k0 = ((lo - self.arc_lo) / SAMPLE).floor().max(0.0) as usize;
        let k1 = (((hi - self.arc_lo) / SAMPLE).ceil().max(0.0) as usize).min(stamps.len() - 1);
        if k0 > k1 {
            return;
        }
        for stamp in &stamps[k0..=k1] {
            out.extend_from_slice(stamp);
        }
        out.sort_unstable();
        out.dedup();
    }

    /// Steps and front-arc spans a crossing occupies, given the stop-line
    /// time and the constant in-box speed.
    fn crossing_steps(
        &self,
        route_len: f64,
        line_t: f64,
        w: f64,
    ) -> impl Iterator<Item = (u64, f64, f64)> + '_ {
        let margin = 0.5 * self.gap + SAMPLE;
        let t0 = line_t - (margin + STAMP_HALF) / w;
        let t1 = line_t + (route_len + VEH_LEN + margin + STAMP_HALF) / w;
        let k0 = (t0 / STEP).floor().max(0.0) as u64;
        let k1 = (t1 / STEP).ceil() as u64;
        (k0..=k1).map(move |k| {
            let f_lo = w * (k as f64 * STEP - line_t);
            let f_hi = w * ((k + 1) as f64 * STEP - line_t);
            (k, f_lo, f_hi)
        })
    }

    /// True if every tile the plan needs is free of crossing traffic.
    fn tiles_free(&self, route: usize, route_len: f64, line_t: f64, w: f64) -> bool {
        let mut tiles = Vec::new();
        for (k, f_lo, f_hi) in self.crossing_steps(route_len, line_t, w) {
            let Some(step_map) = self.bookings.get(&k) else {
                continue;
            };
            tiles.clear();
            self.tiles_for_span(route, f_lo, f_hi, &mut tiles);
            for t in &tiles {
                if let Some(&(_, other_route)) = step_map.get(t) {
                    if other_route != route && self.conflict_with[route][other_route] {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn book(&mut self, id: u64, route: usize, route_len: f64, line_t: f64, w: f64) {
        let mut tiles = Vec::new();
        let steps: Vec<(u64, f64, f64)> =
            self.crossing_steps(route_len, line_t, w).collect();
        for (k, f_lo, f_hi) in steps {
            tiles.clear();
            self.tiles_for_span(route, f_lo, f_hi, &mut tiles);
            let step_map = self.bookings.entry(k).or_default();
            for &t in &tiles {
                step_map.entry(t).or_insert((id, route));
            }
        }
    }

    /// Retry period by distance to the stop line.
    fn band(dist: f64) -> f64 {
        if dist > 300.0 {
            2.0
        } else if dist > 100.0 {
            1.0
        } else if dist > 50.0 {
            0.4
        } else {
            STEP
        }
    }

    /// Attempt one vehicle: returns its plan if every needed tile is free.
    fn try_confirm(&self, sim: &SimState, idx: usize, boundary: Option<&Profile>) -> Option<Profile> {
        let v = &sim.vehicles[idx];
        let dist = COORD_LEN - v.pos;
        let route_len = sim.layout.routes[v.route].path.len();
        let v_o = sim.layout.routes[v.route].movement.crossing_speed();
        let w = v_o.min((v.speed * v.speed + 2.0 * ACCEL * dist).sqrt() - 1e-9);
        if w <= 1.0 {
            return None;
        }
        let earliest = sim.time + fastest_arrival(dist, v.speed, w, V_CRUISE)?;
        let slow = cruise_profile(sim.time, v.pos, dist, v.speed, SLOW_CRUISE, w)
            .map(|p| p.end_time())
            .filter(|&t| t > earliest + 0.05);
        let mut targets = vec![earliest];
        targets.extend(slow);
        for mut t_line in targets {
            // settle feasibility against the leader ceiling first
            let profile = loop {
                match build_bounded(sim.time, v.pos, v.speed, dist, w, t_line, boundary) {
                    Ok(p) => break Some(p),
                    Err(BuildError::TooEarly { earliest } | BuildError::Blocked { earliest })
                        if earliest > t_line + 1e-9 =>
                    {
                        t_line = earliest;
                    }
                    Err(_) => break None,
                }
            };
            let Some(p) = profile else { continue };
            if self.tiles_free(v.route, route_len, p.end_time(), w) {
                return Some(p);
            }
        }
        None
    }
}

impl Controller for Fcfs {
    fn step(&mut self, sim: &mut SimState) {
        // drop bookings that are now in the past
        let now_step = (sim.time / STEP).floor() as u64;
        while let Some((&k, _)) = self.bookings.first_key_value() {
            if k >= now_step {
                break;
            }
            self.bookings.remove(&k);
        }

        let lanes: Vec<u32> = sim.lanes.keys().copied().collect();
        for lane in lanes {
            let q: Vec<usize> = sim.lanes[&lane].iter().copied().collect();
            for idx in q {
                if matches!(sim.vehicles[idx].drive, Drive::Planned(_)) {
                    continue;
                }
                let id = sim.vehicles[idx].id;
                if self.next_try.get(&id).is_some_and(|&t| t > sim.time + 1e-9) {
                    break;
                }
                // never confirm past an unconfirmed leader
                let Ok(boundary) = leader_boundary(sim, idx) else {
                    break;
                };
                match self.try_confirm(sim, idx, boundary.as_ref()) {
                    Some(p) => {
                        let v = &sim.vehicles[idx];
                        self.book(
                            id,
                            v.route,
                            sim.layout.routes[v.route].path.len(),
                            p.end_time(),
                            p.end_vel(),
                        );
                        self.next_try.remove(&id);
                        sim.vehicles[idx].drive = Drive::Planned(p);
                    }
                    None => {
                        let dist = COORD_LEN - sim.vehicles[idx].pos;
                        self.next_try.insert(id, sim.time + Self::band(dist));
                        break;
                    }
                }
            }
        }
    }

    fn entry_wall(&self) -> Option<f64> {
        Some(COORD_LEN - SETBACK)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{generate_arrivals, ArrivalSequence};
    use crate::engine::{run, RunParams};
    use crate::geometry::four_leg_main;
    use crate::scenario::preset;
    use std::collections::BTreeMap as Map;

    #[test]
    fn stamps_stay_inside_the_lane_corridor() {
        let layout = four_leg_main();
        let f = Fcfs::new(&layout, 1.0);
        // route 0: southbound through, x from -7.5 to -4.5
        for stamp in &f.stamps[0] {
            for &(tx, _) in stamp {
                assert!((-10..=-3).contains(&tx), "tile x {tx}");
            }
        }
        // a left turn reaches both its entry and exit corridors
        let turn = &f.stamps[2];
        let xs: Vec<i16> = turn.iter().flatten().map(|&(x, _)| x).collect();
        assert!(xs.iter().any(|&x| x < 0) && xs.iter().any(|&x| x > 8));
    }

    #[test]
    fn lone_vehicle_crosses_at_speed_with_no_delay() {
        let layout = four_leg_main();
        let mut per_lane = Map::new();
        per_lane.insert(2u32, vec![0]);
        let arrivals = ArrivalSequence { per_lane };
        let params = RunParams {
            duration: 120.0,
            warmup: 0.0,
            ..Default::default()
        };
        let mut ctl = Fcfs::new(&layout, params.gap);
        let res = run(&layout, &arrivals, &params, &mut ctl);
        assert!(res.violations.is_empty(), "{:?}", res.violations);
        assert_eq!(res.completions.len(), 1);
        assert!(res.completions[0].delay.abs() < 1e-6, "{}", res.completions[0].delay);
    }

    #[test]
    fn crossing_platoons_cannot_share_tiles() {
        let layout = four_leg_main();
        // perpendicular throughs, offset so the shared-point occupancies of
        // unimpeded crossings would coincide
        let mut per_lane = Map::new();
        per_lane.insert(2u32, vec![0, 10, 20]);
        per_lane.insert(14u32, vec![4, 14, 24]);
        let arrivals = ArrivalSequence { per_lane };
        let params = RunParams {
            duration: 200.0,
            warmup: 0.0,
            ..Default::default()
        };
        let mut ctl = Fcfs::new(&layout, params.gap);
        let res = run(&layout, &arrivals, &params, &mut ctl);
        assert!(res.violations.is_empty(), "{:?}", res.violations);
        assert_eq!(res.completions.len(), 6);
        // at least one side had to give way
        assert!(res.completions.iter().any(|c| c.delay > 0.05));
    }

    #[test]
    fn same_lane_platoon_confirms_in_order() {
        let layout = four_leg_main();
        let mut per_lane = Map::new();
        per_lane.insert(4u32, vec![0, 5, 10, 15]);
        let arrivals = ArrivalSequence { per_lane };
        let params = RunParams {
            duration: 200.0,
            warmup: 0.0,
            ..Default::default()
        };
        let mut ctl = Fcfs::new(&layout, params.gap);
        let res = run(&layout, &arrivals, &params, &mut ctl);
        assert!(res.violations.is_empty(), "{:?}", res.violations);
        assert_eq!(res.completions.len(), 4);
        let mut exits: Vec<f64> = res.completions.iter().map(|c| c.t_exit).collect();
        let sorted = {
            let mut s = exits.clone();
            s.sort_by(f64::total_cmp);
            s
        };
        exits.sort_by(f64::total_cmp);
        assert_eq!(exits, sorted);
    }

    #[test]
    fn moderate_demand_run_is_safe_and_deterministic() {
        let sc = preset("1-A").unwrap();
        let layout = sc.layout.build();
        let arrivals = generate_arrivals(&sc.demand(1.0, 240.0), 7);
        let params = RunParams {
            duration: 240.0,
            warmup: 0.0,
            gap: sc.gap,
            queue_limit: 200,
        };
        let mut a = Fcfs::new(&layout, sc.gap);
        let ra = run(&layout, &arrivals, &params, &mut a);
        assert!(ra.violations.is_empty(), "{:?}", &ra.violations[..ra.violations.len().min(5)]);
        assert!(ra.unstable.is_none());
        assert!(ra.completions.len() > 30, "{}", ra.completions.len());

        let mut b = Fcfs::new(&layout, sc.gap);
        let rb = run(&layout, &arrivals, &params, &mut b);
        let da: Vec<f64> = ra.completions.iter().map(|c| c.delay).collect();
        let db: Vec<f64> = rb.completions.iter().map(|c| c.delay).collect();
        assert_eq!(da, db);
    }
}
