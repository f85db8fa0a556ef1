//! Pretimed phase control. Each phase owns repeating green windows inside a
//! fixed cycle; a vehicle is planned once at entry to reach the stop line at
//! its crossing speed inside an effective green of its route's phase, behind
//! its lane leader. The effective green ends early by a clearance margin so
//! the box empties before the next phase's traffic can reach a shared point.

use crate::engine::{Controller, Drive, SimState};
use crate::geometry::{buffer_size, Layout, VEH_LEN, VEH_W};
use crate::kinematics::{build_bounded, fastest_arrival, BuildError};
use crate::{COORD_LEN, STEP, TRANSITION_LOSS, V_CRUISE};
use std::collections::BTreeMap;

/// Shortest green a phase may receive, s.
pub const MIN_GREEN: f64 = 2.0;

/// Window retries per vehicle in one step before giving up until the next.
const ATTEMPT_CAP: usize = 500;

/// Splits a cycle's usable green among phases in proportion to each phase's
/// busiest entry-lane arrival rate, holding every phase at `MIN_GREEN` or
/// more. None when the cycle cannot fit the per-phase minimums.
pub fn allocate_green(
    layout: &Layout,
    rates: &BTreeMap<u32, f64>,
    cycle: f64,
) -> Option<Vec<f64>> {
    let n = layout.phases.len();
    let budget = cycle - TRANSITION_LOSS * n as f64;
    if budget < MIN_GREEN * n as f64 - 1e-9 {
        return None;
    }
    let y: Vec<f64> = layout
        .phases
        .iter()
        .map(|routes| {
            routes
                .iter()
                .map(|&r| {
                    rates
                        .get(&layout.routes[r].entry_lane)
                        .copied()
                        .unwrap_or(0.0)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let mut g = vec![0.0; n];
    let mut active = vec![true; n];
    loop {
        let rem = budget
            - g.iter()
                .zip(&active)
                .filter(|&(_, &a)| !a)
                .map(|(g, _)| g)
                .sum::<f64>();
        let y_sum: f64 = y.iter().zip(&active).filter(|&(_, &a)| a).map(|(y, _)| y).sum();
        let n_active = active.iter().filter(|&&a| a).count();
        if n_active == 0 {
            break;
        }
        for i in 0..n {
            if active[i] {
                g[i] = if y_sum > 1e-12 {
                    rem * y[i] / y_sum
                } else {
                    rem / n_active as f64
                };
            }
        }
        let mut clamped = false;
        for i in 0..n {
            if active[i] && g[i] < MIN_GREEN - 1e-12 {
                g[i] = MIN_GREEN;
                active[i] = false;
                clamped = true;
            }
        }
        if !clamped {
            break;
        }
    }
    Some(g)
}

/// Clearance margin cut from the end of every green: the smallest step
/// multiple such that a vehicle crossing the line that early clears every
/// shared point before the next phase's earliest arrival, given the
/// transition time between greens.
pub fn phase_margin(layout: &Layout, gap: f64) -> f64 {
    let n = layout.phases.len();
    let mut need: f64 = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        for p in &layout.points {
            let sides = [(p.a, p.pos_a, p.b, p.pos_b), (p.b, p.pos_b, p.a, p.pos_a)];
            for (ra, pa, rb, pb) in sides {
                if layout.phase_of(ra) != i || layout.phase_of(rb) != j {
                    continue;
                }
                let buf = buffer_size(gap, p.angle, VEH_W);
                let va = layout.routes[ra].movement.crossing_speed();
                let vb = layout.routes[rb].movement.crossing_speed();
                need = need
                    .max((pa + VEH_LEN + buf) / va - TRANSITION_LOSS - (pb - buf) / vb);
            }
        }
    }
    (need.max(0.0) / STEP).ceil().max(1.0) * STEP
}

/// Pretimed phase controller with a fixed cycle and green split.
pub struct Ppc {
    cycle: f64,
    /// Green start offset of each phase within the cycle.
    starts: Vec<f64>,
    greens: Vec<f64>,
    margin: f64,
    /// Phase of each route.
    phase: Vec<usize>,
}

impl Ppc {
    /// None when the cycle cannot fit every phase's minimum green plus the
    /// clearance margin.
    pub fn new(layout: &Layout, rates: &BTreeMap<u32, f64>, gap: f64, cycle: f64) -> Option<Ppc> {
        let greens = allocate_green(layout, rates, cycle)?;
        let margin = phase_margin(layout, gap);
        if greens.iter().any(|&g| g <= margin + STEP) {
            return None;
        }
        let mut starts = Vec::with_capacity(greens.len());
        let mut at = 0.0;
        for &g in &greens {
            at += TRANSITION_LOSS;
            starts.push(at);
            at += g;
        }
        debug_assert!((at - cycle).abs() < 1e-9);
        let phase = (0..layout.routes.len())
            .map(|r| layout.phase_of(r))
            .collect();
        Some(Ppc {
            cycle,
            starts,
            greens,
            margin,
            phase,
        })
    }

    /// First effective green window of `phase` ending at or after `t`.
    fn next_window(&self, phase: usize, t: f64) -> (f64, f64) {
        let g_eff = self.greens[phase] - self.margin;
        let s = self.starts[phase];
        let k = ((t - s - g_eff) / self.cycle).ceil().max(0.0);
        let ws = s + k * self.cycle;
        (ws, ws + g_eff)
    }

    /// Plans one vehicle to cross the line inside an effective green, no
    /// earlier than physics and the (shifted) leader profile allow.
    fn plan(
        &self,
        sim: &SimState,
        idx: usize,
        boundary: Option<&crate::kinematics::Profile>,
    ) -> Option<crate::kinematics::Profile> {
        let v = &sim.vehicles[idx];
        let w = sim.layout.routes[v.route].movement.crossing_speed();
        let dist = COORD_LEN - v.pos;
        let mut t_from = sim.time + fastest_arrival(dist, v.speed, w, V_CRUISE)?;
        let phase = self.phase[v.route];
        for _ in 0..ATTEMPT_CAP {
            let (ws, we) = self.next_window(phase, t_from);
            let t = t_from.max(ws);
            if t > we + 1e-9 {
                t_from = we + 1e-6;
                continue;
            }
            match build_bounded(sim.time, v.pos, v.speed, dist, w, t, boundary) {
                Ok(p) => return Some(p),
                Err(BuildError::TooEarly { earliest })
                | Err(BuildError::Blocked { earliest }) => {
                    t_from = earliest.max(t + 0.5 * STEP);
                }
                Err(_) => return None,
            }
        }
        None
    }
}

impl Controller for Ppc {
    fn step(&mut self, sim: &mut SimState) {
        let lanes: Vec<u32> = sim.lanes.keys().copied().collect();
        for lane in lanes {
            let q: Vec<usize> = sim.lanes[&lane].iter().copied().collect();
            let mut boundary: Option<crate::kinematics::Profile> = None;
            for idx in q {
                if let Drive::Planned(p) = &sim.vehicles[idx].drive {
                    boundary = Some(p.shifted(-(VEH_LEN + sim.gap)));
                    continue;
                }
                match self.plan(sim, idx, boundary.as_ref()) {
                    Some(p) => {
                        boundary = Some(p.shifted(-(VEH_LEN + sim.gap)));
                        sim.vehicles[idx].drive = Drive::Planned(p);
                    }
                    // follower plans would float without a leader ceiling
                    None => break,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::generate_arrivals;
    use crate::engine::{run, RunParams};
    use crate::geometry::four_leg_main;
    use crate::scenario::preset;

    fn flat_rates(layout: &Layout, rate: f64) -> BTreeMap<u32, f64> {
        layout.entry_lanes().into_iter().map(|l| (l, rate)).collect()
    }

    #[test]
    fn balanced_demand_splits_green_evenly() {
        let layout = four_leg_main();
        let rates = flat_rates(&layout, 0.1);
        let g = allocate_green(&layout, &rates, 30.0).unwrap();
        assert_eq!(g.len(), 4);
        for gi in &g {
            assert!((gi - 4.5).abs() < 1e-9, "{g:?}");
        }
        assert!(allocate_green(&layout, &rates, 16.0).is_none());
    }

    #[test]
    fn starved_phases_hold_the_minimum_green() {
        let layout = four_leg_main();
        let mut rates = flat_rates(&layout, 0.001);
        rates.insert(2, 1.0);
        let g = allocate_green(&layout, &rates, 30.0).unwrap();
        let loss = TRANSITION_LOSS * 4.0;
        assert!((g.iter().sum::<f64>() - (30.0 - loss)).abs() < 1e-9);
        assert!((g[0] - 12.0).abs() < 1e-9, "{g:?}");
        for gi in &g[1..] {
            assert!((gi - MIN_GREEN).abs() < 1e-9, "{g:?}");
        }
    }

    #[test]
    fn margin_is_a_small_step_multiple() {
        for (layout, gap) in [
            (four_leg_main(), 1.0),
            (four_leg_main(), 8.0),
            (crate::geometry::tee(), 1.0),
        ] {
            let m = phase_margin(&layout, gap);
            let steps = m / STEP;
            assert!((steps - steps.round()).abs() < 1e-9);
            assert!((STEP..=2.0).contains(&m), "margin {m}");
        }
    }

    #[test]
    fn windows_repeat_each_cycle() {
        let layout = four_leg_main();
        let ppc = Ppc::new(&layout, &flat_rates(&layout, 0.1), 1.0, 30.0).unwrap();
        let (ws, we) = ppc.next_window(0, 0.0);
        assert!((ws - 3.0).abs() < 1e-9);
        assert!((we - (3.0 + 4.5 - ppc.margin)).abs() < 1e-9);
        let (ws2, _) = ppc.next_window(0, we + 0.1);
        assert!((ws2 - (ws + 30.0)).abs() < 1e-9);
        // later phases start after the earlier phase plus a transition
        let (ws1, _) = ppc.next_window(1, 0.0);
        assert!((ws1 - (3.0 + 4.5 + 3.0)).abs() < 1e-9);
    }

    #[test]
    fn light_demand_run_is_safe_and_crosses_in_green() {
        let sc = preset("1-A").unwrap();
        let layout = sc.layout.build();
        let lambda0 = 0.5;
        let arrivals = generate_arrivals(&sc.demand(lambda0, 300.0), 42);
        let rates: BTreeMap<u32, f64> =
            sc.ratios.iter().map(|(&l, &r)| (l, lambda0 * r)).collect();
        let mut ctl = Ppc::new(&layout, &rates, sc.gap, 60.0).unwrap();
        let params = RunParams {
            duration: 300.0,
            warmup: 0.0,
            gap: sc.gap,
            queue_limit: 200,
        };
        let res = run(&layout, &arrivals, &params, &mut ctl);
        assert!(res.violations.is_empty(), "{:?}", &res.violations[..res.violations.len().min(5)]);
        assert!(res.unstable.is_none());
        assert!(res.completions.len() > 20, "{}", res.completions.len());
        for c in &res.completions {
            let phase = ctl.phase[c.route];
            let (ws, we) = ctl.next_window(phase, c.t_enter_box);
            assert!(
                ws - 1e-3 <= c.t_enter_box && c.t_enter_box <= we + 1e-3,
                "veh {} crossed at {} outside [{ws}, {we}]",
                c.id,
                c.t_enter_box
            );
            assert!(c.delay >= -1e-6, "negative delay {}", c.delay);
        }
    }
}
