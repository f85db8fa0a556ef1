//! Branch and bound over an LP relaxation of the ordering decisions.
//!
//! Each pair and window contributes one 0/1 indicator relaxed to [0, 1] and
//! coupled through big-M rows. A greedy list schedule seeds the incumbent
//! and yields box bounds on exit times, which keep the big-M constant small
//! enough to be exact: every schedule at least as good as the incumbent
//! satisfies the box, so fixing all indicators reproduces the hard rows.

use super::lp::{self, Constraint, LinProg, LpResult, Sense};
use super::{base_rows, check_solution, order_terms, window_terms, Instance, Schedule};
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Search limits. Nodes are LP solves; pivots bound each solve.
#[derive(Debug, Clone, Copy)]
pub struct Budgets {
    pub max_nodes: usize,
    pub max_pivots: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_nodes: 5000,
            max_pivots: 200_000,
        }
    }
}

/// Search result quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Search exhausted; the schedule is optimal.
    Optimal,
    /// Budget ran out with a feasible incumbent in hand.
    Feasible,
    /// Search exhausted without any feasible schedule.
    Infeasible,
    /// Budget ran out before anything feasible was found.
    Unknown,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub schedule: Option<Schedule>,
    pub nodes: usize,
    pub complete: bool,
}

/// Greedy list schedule: place vehicles by earliest arrival (lane order
/// respected), each crossing at its speed cap, pushed past every already
/// placed occupancy and fixed window. Returns None only when a cut rejects
/// the result.
pub fn greedy(inst: &Instance) -> Option<Schedule> {
    let n = inst.vehicles.len();
    let mut pred: Vec<Option<usize>> = vec![None; n];
    for (i, j) in inst.fifo_links() {
        pred[j] = Some(i);
    }
    let mut placed: Vec<Option<(f64, f64)>> = vec![None; n]; // (tm, tp)
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        inst.vehicles[x]
            .earliest
            .total_cmp(&inst.vehicles[y].earliest)
            .then(inst.vehicles[x].lane.cmp(&inst.vehicles[y].lane))
            .then(x.cmp(&y))
    });
    let mut remaining: Vec<usize> = order;
    while !remaining.is_empty() {
        // first by sort order whose lane predecessor is already placed
        let slot = remaining
            .iter()
            .position(|&i| pred[i].map_or(true, |p| placed[p].is_some()))
            .expect("lane orders are acyclic");
        let i = remaining.remove(slot);
        let v = &inst.vehicles[i];
        let delta = v.dist / v.v_hi;
        let mut tm = v.earliest;
        if let Some(p) = pred[i] {
            let (ptm, ptp) = placed[p].unwrap();
            let shift = (inst.veh_len + inst.gap) * (ptp - ptm) / inst.vehicles[p].dist;
            tm = tm.max(ptm + shift).max(ptp + shift - delta);
        }
        let start_of = |pos: f64, buf: f64, tm: f64| tm + (pos - buf) * delta / v.dist;
        let end_of = |pos: f64, buf: f64, tm: f64| tm + (pos + inst.veh_len + buf) * delta / v.dist;
        let mut guard = 10 * (inst.pairs.len() + inst.windows.len()) + 10;
        loop {
            let mut pushed = false;
            for p in &inst.pairs {
                let (other, pos, opos) = if p.a == i {
                    (p.b, p.pos_a, p.pos_b)
                } else if p.b == i {
                    (p.a, p.pos_b, p.pos_a)
                } else {
                    continue;
                };
                let Some((otm, otp)) = placed[other] else {
                    continue;
                };
                let buf = p.buffer;
                let orate = (otp - otm) / inst.vehicles[other].dist;
                let oend = otm + (opos + inst.veh_len + buf) * orate;
                let ostart = otm + (opos - buf) * orate;
                if end_of(pos, buf, tm) > ostart + 1e-12 && oend > start_of(pos, buf, tm) + 1e-12 {
                    tm = oend - (pos - buf) * delta / v.dist;
                    pushed = true;
                }
            }
            for w in &inst.windows {
                if w.veh != i {
                    continue;
                }
                if end_of(w.pos, w.buffer, tm) > w.start + 1e-12
                    && w.end > start_of(w.pos, w.buffer, tm) + 1e-12
                {
                    tm = w.end - (w.pos - w.buffer) * delta / v.dist;
                    pushed = true;
                }
            }
            if !pushed {
                break;
            }
            guard -= 1;
            assert!(guard > 0, "greedy push loop failed to settle");
        }
        placed[i] = Some((tm, tm + delta));
    }
    let tm: Vec<f64> = placed.iter().map(|p| p.unwrap().0).collect();
    let tp: Vec<f64> = placed.iter().map(|p| p.unwrap().1).collect();
    for c in &inst.cuts {
        if c.a_tm * tm[c.veh] + c.a_tp * tp[c.veh] < c.rhs - 1e-9 {
            return None;
        }
    }
    let objective = tp.iter().sum();
    let s = Schedule { tm, tp, objective };
    debug_assert!(check_solution(inst, &s, 1e-7).is_empty());
    Some(s)
}

struct NodeKey {
    bound: f64,
    id: u64,
    fixed: Vec<Option<bool>>,
}

impl PartialEq for NodeKey {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for NodeKey {}
impl PartialOrd for NodeKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for NodeKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.id.cmp(&other.id))
    }
}

fn node_lp(
    inst: &Instance,
    boxes: Option<&[f64]>,
    m_big: f64,
    fixed: &[Option<bool>],
) -> (LinProg, Vec<usize>) {
    let nv = inst.vehicles.len();
    let np = inst.pairs.len();
    let mut cols = vec![usize::MAX; fixed.len()];
    let mut next = 2 * nv;
    for (k, f) in fixed.iter().enumerate() {
        if f.is_none() {
            cols[k] = next;
            next += 1;
        }
    }
    let mut rows = base_rows(inst);
    if let Some(ub) = boxes {
        for (i, &u) in ub.iter().enumerate() {
            rows.push(Constraint {
                coeffs: vec![(2 * i + 1, 1.0)],
                sense: Sense::Le,
                rhs: u,
            });
        }
    }
    for (k, p) in inst.pairs.iter().enumerate() {
        match fixed[k] {
            Some(a_first) => rows.push(Constraint {
                coeffs: order_terms(inst, p, a_first),
                sense: Sense::Le,
                rhs: 0.0,
            }),
            None => {
                let q = cols[k];
                let mut a = order_terms(inst, p, true);
                a.push((q, m_big));
                rows.push(Constraint {
                    coeffs: a,
                    sense: Sense::Le,
                    rhs: m_big,
                });
                let mut b = order_terms(inst, p, false);
                b.push((q, -m_big));
                rows.push(Constraint {
                    coeffs: b,
                    sense: Sense::Le,
                    rhs: 0.0,
                });
                rows.push(Constraint {
                    coeffs: vec![(q, 1.0)],
                    sense: Sense::Le,
                    rhs: 1.0,
                });
            }
        }
    }
    for (k, w) in inst.windows.iter().enumerate() {
        let (start, end) = window_terms(inst, w);
        match fixed[np + k] {
            Some(true) => rows.push(Constraint {
                coeffs: end,
                sense: Sense::Le,
                rhs: w.start,
            }),
            Some(false) => rows.push(Constraint {
                coeffs: start,
                sense: Sense::Ge,
                rhs: w.end,
            }),
            None => {
                let q = cols[np + k];
                let mut a = end.clone();
                a.push((q, m_big));
                rows.push(Constraint {
                    coeffs: a,
                    sense: Sense::Le,
                    rhs: w.start + m_big,
                });
                let mut b: Vec<(usize, f64)> = start.iter().map(|&(c, v)| (c, -v)).collect();
                b.push((q, -m_big));
                rows.push(Constraint {
                    coeffs: b,
                    sense: Sense::Le,
                    rhs: -w.end,
                });
                rows.push(Constraint {
                    coeffs: vec![(q, 1.0)],
                    sense: Sense::Le,
                    rhs: 1.0,
                });
            }
        }
    }
    let mut objective = vec![0.0; next];
    for i in 0..nv {
        objective[2 * i + 1] = 1.0;
    }
    (
        LinProg {
            n: next,
            objective,
            rows,
        },
        cols,
    )
}

/// Solve the instance. With an exhausted budget the best incumbent is still
/// returned, flagged `complete: false`.
pub fn solve(inst: &Instance, budgets: &Budgets) -> Outcome {
    let nv = inst.vehicles.len();
    let nfree = inst.pairs.len() + inst.windows.len();
    let incumbent = greedy(inst);
    let mut best = incumbent.clone();
    let mut best_value = best.as_ref().map(|s| s.objective).unwrap_or(f64::INFINITY);

    // box bounds from the incumbent keep big-M exact; without one the
    // search is best-effort
    let lbs: Vec<f64> = inst
        .vehicles
        .iter()
        .map(|v| v.earliest + v.dist / v.v_hi)
        .collect();
    let lb_sum: f64 = lbs.iter().sum();
    let boxes: Option<Vec<f64>> = incumbent
        .as_ref()
        .map(|s| (0..nv).map(|i| s.objective - (lb_sum - lbs[i])).collect());
    let max_occ = inst
        .pairs
        .iter()
        .map(|p| p.buffer)
        .chain(inst.windows.iter().map(|w| w.buffer))
        .fold(0.0f64, f64::max);
    let occ_dur = (inst.veh_len + 2.0 * max_occ)
        / inst
            .vehicles
            .iter()
            .map(|v| v.v_lo)
            .fold(f64::INFINITY, f64::min)
            .max(1e-9);
    let top = match &boxes {
        Some(b) => b.iter().fold(0.0f64, |m, &v| m.max(v)),
        None => {
            let deltas: f64 = inst
                .vehicles
                .iter()
                .map(|v| v.dist / v.v_lo + occ_dur)
                .sum();
            inst.vehicles.iter().map(|v| v.earliest).fold(0.0, f64::max) + deltas
        }
    };
    let max_wend = inst.windows.iter().map(|w| w.end).fold(0.0f64, f64::max);
    let m_big = top.max(max_wend) + 2.0 * occ_dur + 10.0;

    let mut heap: BinaryHeap<Reverse<NodeKey>> = BinaryHeap::new();
    heap.push(Reverse(NodeKey {
        bound: 0.0,
        id: 0,
        fixed: vec![None; nfree],
    }));
    let mut next_id = 1u64;
    let mut nodes = 0usize;
    let mut complete = true;
    while let Some(Reverse(node)) = heap.pop() {
        if node.bound >= best_value - 1e-9 {
            break;
        }
        if nodes >= budgets.max_nodes {
            complete = false;
            break;
        }
        nodes += 1;
        let (lp, cols) = node_lp(inst, boxes.as_deref(), m_big, &node.fixed);
        match lp::solve(&lp, budgets.max_pivots) {
            LpResult::Infeasible => {}
            LpResult::Limit => complete = false,
            LpResult::Unbounded => {
                debug_assert!(false, "exit-time objective cannot be unbounded");
                complete = false;
            }
            LpResult::Optimal { x, value } => {
                if value >= best_value - 1e-9 {
                    continue;
                }
                // most fractional undecided indicator
                let mut pick: Option<(usize, f64)> = None;
                for (k, f) in node.fixed.iter().enumerate() {
                    if f.is_none() {
                        let d = x[cols[k]];
                        let frac = d.min(1.0 - d);
                        if frac > 1e-7 && pick.map_or(true, |(_, pf)| frac > pf + 1e-12) {
                            pick = Some((k, frac));
                        }
                    }
                }
                match pick {
                    None => {
                        let tm: Vec<f64> = (0..nv).map(|i| x[2 * i]).collect();
                        let tp: Vec<f64> = (0..nv).map(|i| x[2 * i + 1]).collect();
                        let cand = Schedule {
                            tm,
                            tp,
                            objective: value,
                        };
                        if check_solution(inst, &cand, 1e-5).is_empty() {
                            best_value = value;
                            best = Some(cand);
                        } else {
                            complete = false;
                        }
                    }
                    Some((k, _)) => {
                        for choice in [false, true] {
                            let mut fixed = node.fixed.clone();
                            fixed[k] = Some(choice);
                            heap.push(Reverse(NodeKey {
                                bound: value,
                                id: next_id,
                                fixed,
                            }));
                            next_id += 1;
                        }
                    }
                }
            }
        }
    }
    let status = match (&best, complete) {
        (Some(_), true) => Status::Optimal,
        (Some(_), false) => Status::Feasible,
        (None, true) => Status::Infeasible,
        (None, false) => Status::Unknown,
    };
    Outcome {
        status,
        schedule: best,
        nodes,
        complete,
    }
}

#[cfg(test)]
mod tests {
    use super::super::brute::{solve_brute, BruteOutcome};
    use super::super::gen::random_instance;
    use super::super::{layout_instance, Cut};
    use super::*;
    use crate::geometry;

    #[test]
    fn greedy_schedules_are_feasible() {
        let layout = geometry::tee();
        let inst = layout_instance(&layout, &[2, 2, 2, 1, 1, 1, 1, 2], 1.0, 1.2);
        let s = greedy(&inst).unwrap();
        assert!(check_solution(&inst, &s, 1e-7).is_empty());
        let lb: f64 = inst
            .vehicles
            .iter()
            .map(|v| v.earliest + v.dist / v.v_hi)
            .sum();
        assert!(s.objective >= lb - 1e-9);
    }

    #[test]
    fn search_matches_brute_force_on_random_instances() {
        let budgets = Budgets::default();
        for seed in 0..40 {
            let inst = random_instance(seed);
            let out = solve(&inst, &budgets);
            let brute = solve_brute(&inst);
            match (out.status, brute) {
                (Status::Optimal, BruteOutcome::Optimal(b)) => {
                    let s = out.schedule.unwrap();
                    assert!(
                        (s.objective - b.objective).abs() < 1e-6,
                        "seed {seed}: bnb {} brute {}",
                        s.objective,
                        b.objective
                    );
                    assert!(check_solution(&inst, &s, 1e-6).is_empty());
                }
                (Status::Infeasible, BruteOutcome::Infeasible) => {}
                (got, want) => panic!("seed {seed}: bnb {got:?} vs brute {want:?}"),
            }
        }
    }

    #[test]
    fn search_improves_on_greedy_when_reordering_helps() {
        // two crossing vehicles where serving the later-indexed one first
        // is strictly better: a long slow crosser arriving just after a
        // short fast one on the conflicting route
        let layout = geometry::four_leg_main();
        let mut inst = layout_instance(&layout, &[1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0], 1.0, 1.2);
        // make the first vehicle much slower so yielding pays off
        inst.vehicles[0].v_hi = 5.5;
        inst.vehicles[0].earliest = 0.0;
        inst.vehicles[1].earliest = 0.1;
        let g = greedy(&inst).unwrap();
        let out = solve(&inst, &Budgets::default());
        assert_eq!(out.status, Status::Optimal);
        let s = out.schedule.unwrap();
        assert!(s.objective <= g.objective + 1e-9);
        assert!(check_solution(&inst, &s, 1e-6).is_empty());
    }

    #[test]
    fn impossible_cut_reports_infeasible() {
        let layout = geometry::tee();
        let mut inst = layout_instance(&layout, &[1, 0, 0, 0, 0, 0, 0, 0], 1.0, 1.2);
        // demand an exit earlier than the speed cap allows
        let lb = inst.vehicles[0].dist / inst.vehicles[0].v_hi;
        inst.cuts.push(Cut {
            veh: 0,
            a_tm: 0.0,
            a_tp: -1.0,
            rhs: -(lb - 1.0),
        });
        let out = solve(&inst, &Budgets::default());
        assert_eq!(out.status, Status::Infeasible);
    }
}
