//! Exhaustive reference solver: one LP per complete ordering assignment.

use super::lp::{self, Constraint, LinProg, LpResult, Sense};
use super::{base_rows, order_terms, window_terms, Instance, Schedule};

/// Exhaustive outcome.
#[derive(Debug, Clone)]
pub enum BruteOutcome {
    Optimal(Schedule),
    Infeasible,
}

/// Solve by enumerating every pair and window ordering. Intended as a test
/// oracle; refuses instances with more than 12 ordering decisions.
pub fn solve_brute(inst: &Instance) -> BruteOutcome {
    let np = inst.pairs.len();
    let nw = inst.windows.len();
    let decisions = np + nw;
    assert!(decisions <= 12, "too many ordering decisions for brute force");
    let n = 2 * inst.vehicles.len();
    let base = base_rows(inst);
    let mut objective = vec![0.0; n];
    for i in 0..inst.vehicles.len() {
        objective[2 * i + 1] = 1.0;
    }
    let mut best: Option<Schedule> = None;
    for mask in 0u32..(1 << decisions) {
        let mut rows = base.clone();
        for (k, p) in inst.pairs.iter().enumerate() {
            let a_first = mask & (1 << k) != 0;
            rows.push(Constraint {
                coeffs: order_terms(inst, p, a_first),
                sense: Sense::Le,
                rhs: 0.0,
            });
        }
        for (k, w) in inst.windows.iter().enumerate() {
            let before = mask & (1 << (np + k)) != 0;
            let (start, end) = window_terms(inst, w);
            if before {
                rows.push(Constraint {
                    coeffs: end,
                    sense: Sense::Le,
                    rhs: w.start,
                });
            } else {
                rows.push(Constraint {
                    coeffs: start,
                    sense: Sense::Ge,
                    rhs: w.end,
                });
            }
        }
        let lp = LinProg {
            n,
            objective: objective.clone(),
            rows,
        };
        match lp::solve(&lp, 200_000) {
            LpResult::Optimal { x, value } => {
                if best.as_ref().map_or(true, |b| value < b.objective - 1e-12) {
                    let tm = (0..inst.vehicles.len()).map(|i| x[2 * i]).collect();
                    let tp = (0..inst.vehicles.len()).map(|i| x[2 * i + 1]).collect();
                    best = Some(Schedule {
                        tm,
                        tp,
                        objective: value,
                    });
                }
            }
            LpResult::Infeasible => {}
            LpResult::Unbounded => unreachable!("exit times are bounded below"),
            LpResult::Limit => panic!("pivot budget exhausted on a brute-force subproblem"),
        }
    }
    match best {
        Some(s) => BruteOutcome::Optimal(s),
        None => BruteOutcome::Infeasible,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{check_solution, PairPoint, VehicleSpec};
    use super::*;

    fn two_crossing(e0: f64, e1: f64) -> Instance {
        Instance {
            vehicles: vec![
                VehicleSpec {
                    id: 0,
                    lane: 1,
                    earliest: e0,
                    dist: 24.0,
                    v_hi: 15.0,
                    v_lo: 5.0,
                },
                VehicleSpec {
                    id: 1,
                    lane: 2,
                    earliest: e1,
                    dist: 24.0,
                    v_hi: 15.0,
                    v_lo: 5.0,
                },
            ],
            veh_len: 4.0,
            gap: 1.0,
            pairs: vec![PairPoint {
                a: 0,
                b: 1,
                pos_a: 12.0,
                pos_b: 12.0,
                buffer: 1.5,
            }],
            windows: vec![],
            cuts: vec![],
        }
    }

    #[test]
    fn far_apart_vehicles_cross_at_their_caps() {
        let inst = two_crossing(0.0, 30.0);
        match solve_brute(&inst) {
            BruteOutcome::Optimal(s) => {
                assert!(check_solution(&inst, &s, 1e-7).is_empty());
                assert!((s.tm[0] - 0.0).abs() < 1e-7);
                assert!((s.tp[0] - 24.0 / 15.0).abs() < 1e-7);
                assert!((s.tm[1] - 30.0).abs() < 1e-7);
            }
            BruteOutcome::Infeasible => panic!("expected optimal"),
        }
    }

    #[test]
    fn simultaneous_arrivals_separate_at_the_point() {
        let inst = two_crossing(0.0, 0.0);
        match solve_brute(&inst) {
            BruteOutcome::Optimal(s) => {
                assert!(check_solution(&inst, &s, 1e-7).is_empty());
                // one of them must be delayed past the other's occupancy
                let occ0 = inst.occupancy(0, 12.0, 1.5, s.tm[0], s.tp[0]);
                let occ1 = inst.occupancy(1, 12.0, 1.5, s.tm[1], s.tp[1]);
                assert!(occ0.1 <= occ1.0 + 1e-7 || occ1.1 <= occ0.0 + 1e-7);
                assert!(s.objective > 2.0 * 24.0 / 15.0 + 0.1);
            }
            BruteOutcome::Infeasible => panic!("expected optimal"),
        }
    }

    #[test]
    fn window_blocks_the_early_slot() {
        let mut inst = two_crossing(0.0, 40.0);
        inst.windows.push(super::super::Window {
            veh: 0,
            pos: 12.0,
            buffer: 1.5,
            start: 0.0,
            end: 10.0,
        });
        match solve_brute(&inst) {
            BruteOutcome::Optimal(s) => {
                assert!(check_solution(&inst, &s, 1e-7).is_empty());
                let (sv, _) = inst.occupancy(0, 12.0, 1.5, s.tm[0], s.tp[0]);
                assert!(sv >= 10.0 - 1e-7);
            }
            BruteOutcome::Infeasible => panic!("expected optimal"),
        }
    }
}
