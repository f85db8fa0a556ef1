//! Crossing-order scheduling for vehicles approaching the intersection.
//!
//! An `Instance` holds vehicles with earliest stop-line arrival times and
//! in-box path lengths, the conflict-point pairs between them, fixed
//! occupancy windows of already-committed vehicles, and optional extra
//! linear cuts. Vehicles cross the box at one constant speed, so entry time
//! `tm` and exit time `tp` fully determine when each conflict point is
//! occupied. The objective is to minimize the sum of exit times.
//!
//! `brute` enumerates every ordering decision, `bnb` runs branch and bound
//! over an LP relaxation, and `check_solution` verifies a schedule against
//! the instance constraints directly.

pub mod bnb;
pub mod brute;
pub mod gen;
pub mod lp;

use crate::geometry::Layout;
use lp::{Constraint, Sense};
use std::collections::BTreeMap;

/// One vehicle to schedule. Times are relative to the instance's time base
/// and must be non-negative.
#[derive(Debug, Clone)]
pub struct VehicleSpec {
    /// Caller-side identity, carried through for reporting.
    pub id: u64,
    /// Entry lane; same-lane vehicles keep their input order (FIFO).
    pub lane: u32,
    /// Earliest possible stop-line arrival time.
    pub earliest: f64,
    /// Path length from the stop line to the exit of the box.
    pub dist: f64,
    /// Crossing speed cap.
    pub v_hi: f64,
    /// Minimum crossing speed.
    pub v_lo: f64,
}

/// A conflict point shared by two vehicles on crossing routes.
#[derive(Debug, Clone)]
pub struct PairPoint {
    pub a: usize,
    pub b: usize,
    /// Conflict position along each vehicle's own path.
    pub pos_a: f64,
    pub pos_b: f64,
    /// Safety buffer ahead of and behind the point for both vehicles.
    pub buffer: f64,
}

/// Fixed occupancy interval of a committed vehicle that a free vehicle must
/// not overlap at one of its conflict positions.
#[derive(Debug, Clone)]
pub struct Window {
    pub veh: usize,
    pub pos: f64,
    pub buffer: f64,
    pub start: f64,
    pub end: f64,
}

/// Extra linear constraint `a_tm * tm + a_tp * tp >= rhs` on one vehicle.
#[derive(Debug, Clone)]
pub struct Cut {
    pub veh: usize,
    pub a_tm: f64,
    pub a_tp: f64,
    pub rhs: f64,
}

/// A scheduling problem over free vehicles.
#[derive(Debug, Clone)]
pub struct Instance {
    pub vehicles: Vec<VehicleSpec>,
    /// Vehicle body length.
    pub veh_len: f64,
    /// Same-lane clearance gap.
    pub gap: f64,
    pub pairs: Vec<PairPoint>,
    pub windows: Vec<Window>,
    pub cuts: Vec<Cut>,
}

/// Entry and exit times per vehicle, plus the objective value.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub tm: Vec<f64>,
    pub tp: Vec<f64>,
    pub objective: f64,
}

impl Instance {
    /// Ordering decisions when every pair and window choice is binary, with
    /// each unordered decision counted as its two directed indicators.
    pub fn binary_count(&self) -> usize {
        2 * (self.pairs.len() + self.windows.len())
    }

    /// Consecutive same-lane vehicle index pairs, in input order.
    pub fn fifo_links(&self) -> Vec<(usize, usize)> {
        let mut by_lane: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, v) in self.vehicles.iter().enumerate() {
            by_lane.entry(v.lane).or_default().push(i);
        }
        let mut links = Vec::new();
        for idx in by_lane.values() {
            for w in idx.windows(2) {
                links.push((w[0], w[1]));
            }
        }
        links
    }

    /// Occupancy interval of vehicle `i` around position `pos` on its path
    /// with buffer `buf`, for entry/exit times (tm, tp).
    pub fn occupancy(&self, i: usize, pos: f64, buf: f64, tm: f64, tp: f64) -> (f64, f64) {
        let v = &self.vehicles[i];
        let rate = (tp - tm) / v.dist;
        (tm + (pos - buf) * rate, tm + (pos + self.veh_len + buf) * rate)
    }
}

/// Base linear rows shared by every ordering decision: earliest arrival,
/// crossing-speed box, same-lane FIFO, and extra cuts. Variables are laid
/// out `[tm_0, tp_0, tm_1, tp_1, ...]`.
pub fn base_rows(inst: &Instance) -> Vec<Constraint> {
    let mut rows = Vec::new();
    for (i, v) in inst.vehicles.iter().enumerate() {
        rows.push(Constraint {
            coeffs: vec![(2 * i, 1.0)],
            sense: Sense::Ge,
            rhs: v.earliest,
        });
        rows.push(Constraint {
            coeffs: vec![(2 * i + 1, 1.0), (2 * i, -1.0)],
            sense: Sense::Ge,
            rhs: v.dist / v.v_hi,
        });
        rows.push(Constraint {
            coeffs: vec![(2 * i + 1, 1.0), (2 * i, -1.0)],
            sense: Sense::Le,
            rhs: v.dist / v.v_lo,
        });
    }
    for (i, j) in inst.fifo_links() {
        let k = (inst.veh_len + inst.gap) / inst.vehicles[i].dist;
        // leader's rear plus gap clears the stop line before the follower
        rows.push(Constraint {
            coeffs: vec![(2 * i, 1.0 - k), (2 * i + 1, k), (2 * j, -1.0)],
            sense: Sense::Le,
            rhs: 0.0,
        });
        rows.push(Constraint {
            coeffs: vec![(2 * i, -k), (2 * i + 1, 1.0 + k), (2 * j + 1, -1.0)],
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    for c in &inst.cuts {
        rows.push(Constraint {
            coeffs: vec![(2 * c.veh, c.a_tm), (2 * c.veh + 1, c.a_tp)],
            sense: Sense::Ge,
            rhs: c.rhs,
        });
    }
    rows
}

/// Linear terms of the ordering constraint "first finishes the point before
/// second reaches it": occupancy_end(first) - occupancy_start(second) <= 0.
pub fn order_terms(inst: &Instance, p: &PairPoint, a_first: bool) -> Vec<(usize, f64)> {
    let (f, s, pos_f, pos_s) = if a_first {
        (p.a, p.b, p.pos_a, p.pos_b)
    } else {
        (p.b, p.a, p.pos_b, p.pos_a)
    };
    let df = inst.vehicles[f].dist;
    let ds = inst.vehicles[s].dist;
    let end_f = (pos_f + inst.veh_len + p.buffer) / df;
    let start_s = (pos_s - p.buffer) / ds;
    vec![
        (2 * f, 1.0 - end_f),
        (2 * f + 1, end_f),
        (2 * s, -(1.0 - start_s)),
        (2 * s + 1, -start_s),
    ]
}

/// Linear terms of the free vehicle's occupancy start / end at a window's
/// conflict position: returns (start_terms, end_terms).
pub fn window_terms(inst: &Instance, w: &Window) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
    let d = inst.vehicles[w.veh].dist;
    let s = (w.pos - w.buffer) / d;
    let e = (w.pos + inst.veh_len + w.buffer) / d;
    (
        vec![(2 * w.veh, 1.0 - s), (2 * w.veh + 1, s)],
        vec![(2 * w.veh, 1.0 - e), (2 * w.veh + 1, e)],
    )
}

/// Verify a schedule against the instance constraints directly, returning a
/// description of every violation beyond `tol`. The arithmetic here is
/// written out from the constraint definitions, separate from the LP rows.
pub fn check_solution(inst: &Instance, s: &Schedule, tol: f64) -> Vec<String> {
    let mut bad = Vec::new();
    let n = inst.vehicles.len();
    assert_eq!(s.tm.len(), n);
    assert_eq!(s.tp.len(), n);
    for (i, v) in inst.vehicles.iter().enumerate() {
        if s.tm[i] < v.earliest - tol {
            bad.push(format!("veh {i}: tm {} before earliest {}", s.tm[i], v.earliest));
        }
        let cross = s.tp[i] - s.tm[i];
        if cross < v.dist / v.v_hi - tol {
            bad.push(format!("veh {i}: crossing {cross} faster than cap"));
        }
        if cross > v.dist / v.v_lo + tol {
            bad.push(format!("veh {i}: crossing {cross} slower than minimum"));
        }
    }
    for (i, j) in inst.fifo_links() {
        let shift = (inst.veh_len + inst.gap) * (s.tp[i] - s.tm[i]) / inst.vehicles[i].dist;
        if s.tm[i] + shift > s.tm[j] + tol {
            bad.push(format!("lane order: veh {j} enters before veh {i} clears"));
        }
        if s.tp[i] + shift > s.tp[j] + tol {
            bad.push(format!("lane order: veh {j} exits before veh {i} clears"));
        }
    }
    let occ = |i: usize, pos: f64, buf: f64| -> (f64, f64) {
        let rate = (s.tp[i] - s.tm[i]) / inst.vehicles[i].dist;
        (
            s.tm[i] + (pos - buf) * rate,
            s.tm[i] + (pos + inst.veh_len + buf) * rate,
        )
    };
    for (k, p) in inst.pairs.iter().enumerate() {
        let (sa, ea) = occ(p.a, p.pos_a, p.buffer);
        let (sb, eb) = occ(p.b, p.pos_b, p.buffer);
        if ea > sb + tol && eb > sa + tol {
            bad.push(format!(
                "pair {k}: vehicles {} and {} overlap ({sa:.4}..{ea:.4} vs {sb:.4}..{eb:.4})",
                p.a, p.b
            ));
        }
    }
    for (k, w) in inst.windows.iter().enumerate() {
        let (sv, ev) = occ(w.veh, w.pos, w.buffer);
        if ev > w.start + tol && w.end > sv + tol {
            bad.push(format!(
                "window {k}: vehicle {} overlaps fixed interval ({sv:.4}..{ev:.4} vs {:.4}..{:.4})",
                w.veh, w.start, w.end
            ));
        }
    }
    for (k, c) in inst.cuts.iter().enumerate() {
        if c.a_tm * s.tm[c.veh] + c.a_tp * s.tp[c.veh] < c.rhs - tol {
            bad.push(format!("cut {k} violated for vehicle {}", c.veh));
        }
    }
    let sum: f64 = s.tp.iter().sum();
    if (sum - s.objective).abs() > tol.max(1e-6) {
        bad.push(format!("objective {} != sum of exits {sum}", s.objective));
    }
    bad
}

/// Conflict pair-points for a set of vehicles given their route indices in
/// `layout`. Vehicle order defines instance indices; same-route vehicles
/// are left to the FIFO rows.
pub fn route_pairs(layout: &Layout, gap: f64, routes: &[usize]) -> Vec<PairPoint> {
    let mut pairs = Vec::new();
    for i in 0..routes.len() {
        for j in i + 1..routes.len() {
            if routes[i] == routes[j] {
                continue;
            }
            for cp in &layout.points {
                let hit = if cp.a == routes[i] && cp.b == routes[j] {
                    Some((cp.pos_a, cp.pos_b))
                } else if cp.a == routes[j] && cp.b == routes[i] {
                    Some((cp.pos_b, cp.pos_a))
                } else {
                    None
                };
                if let Some((pa, pb)) = hit {
                    pairs.push(PairPoint {
                        a: i,
                        b: j,
                        pos_a: pa,
                        pos_b: pb,
                        buffer: crate::geometry::buffer_size(gap, cp.angle, crate::geometry::VEH_W),
                    });
                }
            }
        }
    }
    pairs
}

/// Instance with `counts[r]` queued vehicles per route, spaced at `headway`
/// seconds on each lane, crossing at the movement's speed.
pub fn layout_instance(layout: &Layout, counts: &[usize], gap: f64, headway: f64) -> Instance {
    assert_eq!(counts.len(), layout.routes.len());
    let mut vehicles = Vec::new();
    let mut routes = Vec::new();
    let mut id = 0;
    for (r, route) in layout.routes.iter().enumerate() {
        for k in 0..counts[r] {
            vehicles.push(VehicleSpec {
                id,
                lane: route.entry_lane,
                earliest: k as f64 * headway,
                dist: route.path.len(),
                v_hi: route.movement.crossing_speed(),
                v_lo: crate::V_MIN,
            });
            routes.push(r);
            id += 1;
        }
    }
    let pairs = route_pairs(layout, gap, &routes);
    Instance {
        vehicles,
        veh_len: crate::geometry::VEH_LEN,
        gap,
        pairs,
        windows: Vec::new(),
        cuts: Vec::new(),
    }
}
